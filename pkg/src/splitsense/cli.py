"""Command line interface.

Subcommands:
    optimize      estimate power curves from plasmodes, pick the fraction
    analyze       run the two-stage test on real data at a given fraction
    power-curve   emit plot-ready power curve CSVs only
    simulate      generate a synthetic matched dataset CSV
    bench         run a benchmark scenario and write a results table

Options may come from flags or from a JSON config file (``--config``);
flags win over the file, the file wins over built-in defaults.  One
master ``--seed`` fans out to every component through named seed
streams, so reruns with the same inputs are byte-identical.  Files are
written atomically (temp file + rename); the long-running ``bench``
command streams to ``<name>.partial`` and renames on completion.

Failures print a one-line JSON object to stderr and exit with code 2
for I/O problems or 3 for validation problems.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import os
import sys
import zlib
from typing import Sequence

import numpy as np

from .dataset import load_matched_csv, write_matched_csv
from .errors import SplitSenseError
from .senswilcox import SensParams
from .simbench import (
    generate_population,
    match_pairs,
    run_benchmark,
    scenario_from_json,
    DGPConfig,
)
from .splitopt import (
    PlasmodeConfig,
    default_grid,
    optimize_fraction,
    run_split_test,
)

__all__ = ["main"]

DEFAULTS: dict = {
    "input": None,
    "config": None,
    "gamma": (1.0,),
    "alpha": 0.05,
    "method": "fwer",
    "zeta": None,
    "from_summary": None,
    "eta": 0.10,
    "effect_lo": 0.2,
    "effect_hi": 0.5,
    "replications": 1000,
    "grid_step": 0.01,
    "seed": 0,
    "out": ".",
    "threads": 1,
    "n_units": 5000,
    "n_covariates": 5,
    "n_outcomes": 10,
    "pairs": 200,
    "correlation": 0.3,
    "assignment_mode": "pair-biased",
    "matching_distance": "covariate",
}


def derive_seed(master: int, component: str, index: int = 0) -> int:
    """Pure per-component seed: master seed keyed by component name and index."""
    key = zlib.crc32(component.encode("utf-8"))
    ss = np.random.SeedSequence(master, spawn_key=(key, index))
    return int(ss.generate_state(1, np.uint64)[0])


def _atomic_write(path: str, text: str) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt_gamma(gamma: float) -> str:
    return format(gamma, "g")


def _parse_gammas(raw) -> tuple[float, ...]:
    if isinstance(raw, (int, float)):
        values = [float(raw)]
    elif isinstance(raw, str):
        values = [float(part) for part in raw.split(",") if part.strip()]
    else:
        values = []
        for item in raw:
            values.extend(_parse_gammas(item))
    if not values:
        raise ValueError("gamma list is empty")
    return tuple(values)


def _merged_options(args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path) as fh:
            try:
                file_opts = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{config_path}: not valid JSON ({exc})") from exc
        if not isinstance(file_opts, dict):
            raise ValueError(f"{config_path}: config must be a JSON object")
        unknown = set(file_opts) - set(DEFAULTS)
        if unknown and args.command != "bench":
            raise ValueError(f"{config_path}: unknown option keys {sorted(unknown)}")
        if args.command != "bench":
            opts.update(file_opts)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    opts["gamma"] = _parse_gammas(opts["gamma"])
    opts["command"] = args.command
    # remember which flags the user actually typed
    opts["_explicit"] = {k for k in DEFAULTS if getattr(args, k, None) is not None}
    return opts


def _require_input(opts: dict) -> str:
    if not opts["input"]:
        raise ValueError(f"command {opts['command']!r} requires --input")
    return opts["input"]


def _curves_by_gamma(opts: dict):
    d = load_matched_csv(_require_input(opts))
    grid = default_grid(d.n_pairs, opts["grid_step"])
    pcfg = PlasmodeConfig(
        n_replications=opts["replications"],
        eta=opts["eta"],
        effect_lo=opts["effect_lo"],
        effect_hi=opts["effect_hi"],
        seed=derive_seed(opts["seed"], "plasmode"),
    )
    for gamma in opts["gamma"]:
        params = SensParams(gamma=gamma, alpha=opts["alpha"])
        yield gamma, optimize_fraction(
            d, pcfg, grid, params, opts["method"], n_threads=opts["threads"]
        )


def _write_curve_csv(out_dir: str, gamma: float, curve) -> str:
    buf = io.StringIO()
    curve.write_csv(buf)
    path = os.path.join(out_dir, f"power_curve_gamma{_fmt_gamma(gamma)}.csv")
    _atomic_write(path, buf.getvalue())
    return path


def cmd_optimize(opts: dict) -> int:
    out_dir = opts["out"]
    os.makedirs(out_dir, exist_ok=True)
    summary: dict = {
        "input": opts["input"],
        "method": opts["method"],
        "alpha": opts["alpha"],
        "eta": opts["eta"],
        "effect_lo": opts["effect_lo"],
        "effect_hi": opts["effect_hi"],
        "replications": opts["replications"],
        "grid_step": opts["grid_step"],
        "seed": opts["seed"],
        "gammas": {},
    }
    for gamma, curve in _curves_by_gamma(opts):
        _write_curve_csv(out_dir, gamma, curve)
        summary["gammas"][_fmt_gamma(gamma)] = {
            "zeta_star": curve.zeta_star,
            "near_optimal": [float(z) for z in curve.near_optimal],
            "peak_power": float(curve.power.max()),
        }
    _atomic_write(
        os.path.join(out_dir, "summary.json"),
        json.dumps(summary, sort_keys=True, indent=2) + "\n",
    )
    return 0


def cmd_power_curve(opts: dict) -> int:
    out_dir = opts["out"]
    os.makedirs(out_dir, exist_ok=True)
    for gamma, curve in _curves_by_gamma(opts):
        _write_curve_csv(out_dir, gamma, curve)
    return 0


def cmd_analyze(opts: dict) -> int:
    d = load_matched_csv(_require_input(opts))
    out_dir = opts["out"]
    os.makedirs(out_dir, exist_ok=True)

    summary = None
    if opts["from_summary"]:
        with open(opts["from_summary"]) as fh:
            summary = json.load(fh)
        if "method" not in opts["_explicit"] and summary.get("method"):
            opts["method"] = summary["method"]

    def zeta_for(gamma: float) -> float:
        if opts["zeta"] is not None:
            return float(opts["zeta"])
        if summary is not None:
            entry = summary.get("gammas", {}).get(_fmt_gamma(gamma))
            if entry is None:
                raise ValueError(f"summary has no entry for gamma={_fmt_gamma(gamma)}")
            return float(entry["zeta_star"])
        raise ValueError("analyze needs --zeta or --from-summary")

    # one shared split across gamma values keeps per-outcome decisions comparable
    split_seed = derive_seed(opts["seed"], "analyze-split")
    flags: dict[float, dict[int, int]] = {}
    for gamma in opts["gamma"]:
        params = SensParams(gamma=gamma, alpha=opts["alpha"])
        report = run_split_test(d, zeta_for(gamma), params, opts["method"], split_seed)
        _atomic_write(
            os.path.join(out_dir, f"report_gamma{_fmt_gamma(gamma)}.json"),
            report.to_json() + "\n",
        )
        flags[gamma] = {k: 1 for k in report.rejected}

    lines = ["outcome," + ",".join(f"gamma_{_fmt_gamma(g)}" for g in opts["gamma"])]
    for k in range(d.n_outcomes):
        lines.append(f"y_{k + 1}," + ",".join(str(flags[g].get(k, 0)) for g in opts["gamma"]))
    _atomic_write(os.path.join(out_dir, "rejections.csv"), "\n".join(lines) + "\n")
    return 0


def cmd_simulate(opts: dict) -> int:
    out_dir = opts["out"]
    os.makedirs(out_dir, exist_ok=True)
    gamma = opts["gamma"][0]
    dgp = DGPConfig(
        n_units=opts["n_units"],
        n_covariates=opts["n_covariates"],
        n_outcomes=opts["n_outcomes"],
        eta=opts["eta"],
        gamma=gamma,
        assignment_mode=opts["assignment_mode"],
        outcome_correlation=opts["correlation"],
        seed=derive_seed(opts["seed"], "simulate"),
    )
    pop = generate_population(dgp)
    matched = match_pairs(
        pop, opts["pairs"], derive_seed(opts["seed"], "simulate-match"), opts["matching_distance"]
    )
    tmp = os.path.join(out_dir, f".dataset.csv.tmp{os.getpid()}")
    write_matched_csv(matched, tmp)
    os.replace(tmp, os.path.join(out_dir, "dataset.csv"))
    truth = {
        "affected_outcomes": [f"y_{k + 1}" for k in pop.affected],
        "effect_draws": [float(t) for t in pop.effect_draws],
        "gamma": gamma,
    }
    _atomic_write(os.path.join(out_dir, "truth.json"), json.dumps(truth, sort_keys=True, indent=2) + "\n")
    return 0


def cmd_bench(opts: dict) -> int:
    if not opts["config"]:
        raise ValueError("bench requires --config pointing to a scenario JSON file")
    with open(opts["config"]) as fh:
        scenario = scenario_from_json(fh.read())
    if "seed" in opts["_explicit"]:
        scenario = dataclasses.replace(scenario, seed=opts["seed"])
    out_dir = opts["out"]
    os.makedirs(out_dir, exist_ok=True)
    final = os.path.join(out_dir, "results.csv")
    partial = final + ".partial"
    with open(partial, "w", newline="") as fh:
        run_benchmark(scenario, fh)
    os.replace(partial, final)
    return 0


COMMANDS = {
    "optimize": cmd_optimize,
    "power-curve": cmd_power_curve,
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "bench": cmd_bench,
}


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--input", help="matched-pair CSV file")
    sub.add_argument("--config", help="JSON file of option defaults")
    sub.add_argument("--gamma", action="append", help="bias bound(s), comma separated or repeated")
    sub.add_argument("--alpha", type=float, help="test level (default 0.05)")
    sub.add_argument("--method", choices=["fwer", "fdr", "naive"], help="testing method")
    sub.add_argument("--zeta", type=float, help="analysis fraction")
    sub.add_argument("--eta", type=float, help="affected outcome fraction for plasmodes")
    sub.add_argument("--effect-lo", dest="effect_lo", type=float, help="lower synthetic effect multiple")
    sub.add_argument("--effect-hi", dest="effect_hi", type=float, help="upper synthetic effect multiple")
    sub.add_argument("--replications", type=int, help="plasmode replications")
    sub.add_argument("--grid-step", dest="grid_step", type=float, help="spacing of the fraction grid")
    sub.add_argument("--seed", type=int, help="master seed")
    sub.add_argument("--out", help="output directory (default .)")
    sub.add_argument("--threads", type=int, help="worker threads for the plasmode loop")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splitsense",
        description="Optimal planning/analysis splits for multi-outcome matched-pair studies",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    for name, helptext in [
        ("optimize", "estimate power curves from plasmodes and pick the analysis fraction"),
        ("power-curve", "write plot-ready power curve CSVs"),
        ("analyze", "run the two-stage test on real data"),
    ]:
        sub = subs.add_parser(name, help=helptext)
        _add_common(sub)
        if name == "analyze":
            sub.add_argument(
                "--from-summary",
                dest="from_summary",
                help="summary.json from a previous optimize run; supplies zeta per gamma",
            )

    sim = subs.add_parser("simulate", help="generate a synthetic matched dataset")
    _add_common(sim)
    sim.add_argument("--n-units", dest="n_units", type=int, help="population size")
    sim.add_argument("--n-covariates", dest="n_covariates", type=int, help="covariate count")
    sim.add_argument("--n-outcomes", dest="n_outcomes", type=int, help="outcome count")
    sim.add_argument("--pairs", type=int, help="matched pairs to keep")
    sim.add_argument("--correlation", type=float, help="cross-outcome noise correlation")
    sim.add_argument("--assignment-mode", dest="assignment_mode", choices=["marginal", "pair-biased"])
    sim.add_argument("--matching-distance", dest="matching_distance", choices=["covariate", "propensity"])

    bench = subs.add_parser("bench", help="run a benchmark scenario")
    bench.add_argument("--config", required=True, help="scenario JSON file")
    bench.add_argument("--seed", type=int, help="override the scenario seed")
    bench.add_argument("--out", help="output directory (default .)")

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        opts = _merged_options(args)
        return COMMANDS[args.command](opts)
    except OSError as exc:
        return _fail(2, exc)
    except (SplitSenseError, ValueError) as exc:
        return _fail(3, exc)


def _fail(code: int, exc: Exception) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
