"""Command-line front end: generate / solve / evaluate / sweep.

Every command writes its primary artifacts plus a run manifest recording
the exact arguments, a config hash, and artifact checksums, so a run can
be reproduced byte-for-byte from its manifest (output files themselves
contain no timestamps).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import (InfeasibleProblemError, SolverLimitError,
                        solve_scheme)
from .evaluation import (DDU_FORMS, compare_schemes, sensitivity_sweep,
                         with_impact_form)
from .instance import (ConfigurationError, GeneratorConfig, export_csv,
                       generate_instance, load_instance, save_instance,
                       validate_instance)
from .moments import worst_case_distribution
from .recourse import theta_table
from .reformulation import ReformulationOptions, inner_dual_value
from .solver import SolveOptions

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_LIMIT = 4


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def write_manifest(primary: Path, command: str, args: dict,
                   artifacts: list[Path], seed) -> Path:
    args = {k: v for k, v in args.items() if k != "func" and not callable(v)}
    cfg = json.dumps(args, sort_keys=True, default=str)
    doc = {
        "command": command,
        "args": args,
        "config_hash": hashlib.sha256(cfg.encode()).hexdigest(),
        "seed": seed,
        "artifacts": [{"path": str(p), "sha256": _sha256(p)}
                      for p in artifacts],
        "tool_version": __version__,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    out = Path(str(primary) + ".manifest.json")
    out.write_text(json.dumps(doc, indent=1, default=str) + "\n")
    return out


def _emit(args, payload: dict) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, default=str))
    else:
        for k, v in payload.items():
            print(f"{k}: {v}")


def _config_from_args(args) -> GeneratorConfig:
    cfg = GeneratorConfig()  # the default experimental setting
    mapping = {
        "seed": "seed", "areas": "num_areas", "nodes": "num_nodes",
        "support": "support_size", "budget": "budget",
        "cost_scale": "cost_scale", "theta": "variation_ratio",
        "eps_mu": "eps_mu", "eps_sigma": "eps_sigma",
        "decay_rate": "decay_rate", "rho": "delay_weight",
        "delta": "delay_threshold", "kmin": "min_nodes",
    }
    overrides = {}
    for arg_name, field in mapping.items():
        v = getattr(args, arg_name, None)
        if v is not None:
            overrides[field] = v
    for arg_name, field in (("mean_range", "mean_range"),
                            ("cost_range", "cost_range"),
                            ("penalty_range", "penalty_range")):
        v = getattr(args, arg_name, None)
        if v is not None:
            lo, _, hi = v.partition(",")
            overrides[field] = (float(lo), float(hi))
    pool = getattr(args, "capacity_pool", None)
    if pool is not None:
        overrides["capacity_pool"] = tuple(float(t) for t in pool.split(","))
    return dataclasses.replace(cfg, **overrides)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=["default-paper"], default="default-paper",
                   help="base parameter set (the published default setting)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--areas", type=int, help="number of demand areas")
    p.add_argument("--nodes", type=int, help="number of candidate nodes")
    p.add_argument("--support", type=int, help="demand support size")
    p.add_argument("--budget", type=float)
    p.add_argument("--cost-scale", type=float, dest="cost_scale")
    p.add_argument("--theta", type=float, help="demand variation ratio")
    p.add_argument("--eps-mu", type=float, dest="eps_mu")
    p.add_argument("--eps-sigma", type=float, dest="eps_sigma")
    p.add_argument("--decay-rate", type=float, dest="decay_rate")
    p.add_argument("--rho", type=float, help="delay cost weight")
    p.add_argument("--delta", type=float, help="average delay threshold")
    p.add_argument("--kmin", type=int, help="minimum nodes to place")
    p.add_argument("--mean-range", dest="mean_range",
                   help="demand mean draw range lo,hi")
    p.add_argument("--cost-range", dest="cost_range",
                   help="placement cost draw range lo,hi")
    p.add_argument("--penalty-range", dest="penalty_range",
                   help="unmet penalty draw range lo,hi")
    p.add_argument("--capacity-pool", dest="capacity_pool",
                   help="comma list of node capacity values")


def cmd_generate(args) -> int:
    try:
        cfg = _config_from_args(args)
        inst, spec = generate_instance(cfg)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    bad = validate_instance(inst)
    if bad:
        print(f"error: generated instance invalid: {bad}", file=sys.stderr)
        return EXIT_FAILURE
    from .moments import is_ambiguity_nonempty
    if not is_ambiguity_nonempty(spec, np.zeros(inst.num_nodes)):
        print("warning: ambiguity set is empty before any placement; "
              "demand ranges are inconsistent with the support "
              "(robust schemes will be infeasible)", file=sys.stderr)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_instance(out, inst, spec, seed=cfg.seed)
    artifacts = [out]
    if args.csv_dir:
        artifacts += export_csv(args.csv_dir, inst, spec)
    write_manifest(out, "generate", vars(args) | {"config": dataclasses.asdict(cfg)},
                   artifacts, cfg.seed)
    _emit(args, {"instance": str(out), "areas": inst.num_areas,
                 "nodes": inst.num_nodes, "support": spec.num_support,
                 "seed": cfg.seed})
    return EXIT_OK


def _verify_solution(inst, spec, scheme: str, y) -> dict:
    """Oracle cross-checks at the solved placement."""
    use = spec.exogenous_copy() if scheme == "diu" else spec
    tab = theta_table(inst, use.support, y, verify=True)
    wcd, primal = worst_case_distribution(use, y, tab)
    _, dual = inner_dual_value(use, tab, y)
    gap = abs(primal - dual)
    if gap > 1e-7 * max(1.0, abs(primal)):
        raise AssertionError(f"strong duality gap {gap} at verified placement")
    return {"theta_entries_verified": int(np.prod(tab.values.shape)),
            "duality_gap": gap}


def cmd_solve(args) -> int:
    inst, spec, meta = load_instance(args.instance)
    reform = ReformulationOptions(include_cuts=args.cuts == "on",
                                  big_m=args.big_m)
    options = SolveOptions(time_limit=args.time_limit,
                           node_limit=args.node_limit)
    t0 = time.perf_counter()
    try:
        sol = solve_scheme(args.scheme, inst, spec, reform=reform,
                           backend=args.backend, options=options)
    except InfeasibleProblemError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverLimitError as exc:
        print(f"limit reached: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    wall = time.perf_counter() - t0

    duals = None
    verify_info = None
    if args.scheme in ("ddu", "diu"):
        use = spec.exogenous_copy() if args.scheme == "diu" else spec
        tab = theta_table(inst, use.support, sol.y)
        per_area, _ = inner_dual_value(use, tab, sol.y)
        duals = per_area.tolist()
        if args.verify:
            verify_info = _verify_solution(inst, spec, args.scheme, sol.y)
    doc = {
        "scheme": sol.scheme,
        "y": sol.y.tolist(),
        "objective": sol.objective,
        "first_stage_cost": sol.first_stage_cost,
        "area_dual_values": duals,
        "stats": {"wall_time": wall},
        "instance": str(args.instance),
        "seed": meta.get("seed"),
        "cuts": args.cuts,
        "backend": args.backend,
    }
    if verify_info:
        doc["verify"] = verify_info
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    write_manifest(out, "solve", {k: v for k, v in vars(args).items()},
                   [out], meta.get("seed"))
    _emit(args, {"solution": str(out), "scheme": sol.scheme,
                 "objective": sol.objective,
                 "placed": int(sol.y.sum()), "wall_time": round(wall, 3)})
    return EXIT_OK


def _write_csv(path: Path, rows: list[dict], fieldnames: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def cmd_evaluate(args) -> int:
    inst, spec, meta = load_instance(args.instance)
    placements = {}
    if args.solutions:
        for spath in args.solutions:
            doc = json.loads(Path(spath).read_text())
            placements[doc["scheme"]] = np.array(doc["y"], dtype=int)
    for scheme in (args.schemes.split(",") if args.schemes else []):
        if scheme in placements:
            continue
        sol = solve_scheme(scheme.strip(), inst, spec,
                           reform=ReformulationOptions(include_cuts=args.cuts == "on"),
                           backend=args.backend)
        placements[scheme.strip()] = sol.y
    if not placements:
        print("error: nothing to evaluate (pass --solutions or --schemes)",
              file=sys.stderr)
        return EXIT_USAGE
    report = compare_schemes(inst, spec, placements,
                             scenarios=args.scenarios, seed=args.eval_seed,
                             mode=args.sample_mode)
    seed = meta.get("seed")
    rows = [{"instance_seed": seed, **r} for r in report.rows()]
    out = Path(args.out)
    _write_csv(out, rows, ["instance_seed", "scheme", "stat", "value"])
    artifacts = [out]
    if args.costs_out:
        crows = []
        for scheme, st in report.stats.items():
            for k, c in enumerate(st.costs):
                crows.append({"instance_seed": seed, "scheme": scheme,
                              "scenario": k, "cost": repr(float(c))})
        _write_csv(Path(args.costs_out), crows,
                   ["instance_seed", "scheme", "scenario", "cost"])
        artifacts.append(Path(args.costs_out))
    write_manifest(out, "evaluate", {k: v for k, v in vars(args).items()},
                   artifacts, seed)
    summary = {s: round(st.average, 6) for s, st in report.stats.items()}
    _emit(args, {"report": str(out), "scenarios": args.scenarios,
                 "average_cost": summary})
    return EXIT_OK


def _parse_sweep_values(args) -> tuple[str, list]:
    if args.sweep:
        # compact form PARAM=start:step:stop
        name, _, rng = args.sweep.partition("=")
        try:
            start, step, stop = (float(v) for v in rng.split(":"))
        except ValueError:
            raise ConfigurationError(f"bad --sweep spec {args.sweep!r}")
        values = list(np.arange(start, stop + 1e-9, step))
        return name.strip(), values
    if not args.param or args.values is None:
        raise ConfigurationError("pass --param/--values or --sweep")
    if args.param == "ddu_form":
        return args.param, [v.strip() for v in args.values.split(",")]
    return args.param, [float(v) for v in args.values.split(",")]


def cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.runtime:
        return _runtime_benchmark(args, cfg, out_dir)
    try:
        param, values = _parse_sweep_values(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    schemes = tuple(s.strip() for s in args.schemes.split(","))
    cells = sensitivity_sweep(cfg, param, values, schemes=schemes,
                              scenarios=args.scenarios, seed=args.eval_seed,
                              backend=args.backend,
                              include_cuts=args.cuts == "on",
                              ddu_form=args.ddu_form)
    rows = []
    for c in cells:
        row = {"param": c.param, "value": c.value, "scheme": c.scheme,
               "objective": c.objective, "spend": c.spend,
               "error": c.error or ""}
        if c.report is not None and c.scheme in c.report.stats:
            st = c.report.stats[c.scheme]
            row["avg_actual_cost"] = st.average
            row["worst_actual_cost"] = st.worst
        else:
            row["avg_actual_cost"] = None
            row["worst_actual_cost"] = None
        rows.append(row)
    out = out_dir / "sweep.csv"
    _write_csv(out, rows, ["param", "value", "scheme", "objective", "spend",
                           "avg_actual_cost", "worst_actual_cost", "error"])
    write_manifest(out, "sweep", {k: v for k, v in vars(args).items()},
                   [out], cfg.seed)
    failures = [c for c in cells if c.error]
    for c in failures:
        print(f"cell {c.param}={c.value} scheme={c.scheme} failed: {c.error}",
              file=sys.stderr)
    _emit(args, {"sweep": str(out), "cells": len(cells),
                 "failed": len(failures)})
    return EXIT_FAILURE if cells and len(failures) == len(cells) else EXIT_OK


def _runtime_benchmark(args, cfg: GeneratorConfig, out_dir: Path) -> int:
    """Mean wall time with/without cuts over repeated seeds per size."""
    sizes = []
    for token in args.sizes.split(","):
        i_s, _, j_s = token.strip().partition("x")
        sizes.append((int(i_s), int(j_s)))
    rows = []
    for (I, J) in sizes:
        times = {"standard": [], "improved": []}
        for k in range(args.seeds):
            c = dataclasses.replace(cfg, num_areas=I, num_nodes=J,
                                    seed=cfg.seed + k)
            inst, spec = generate_instance(c)
            for label, cuts in (("standard", False), ("improved", True)):
                t0 = time.perf_counter()
                solve_scheme("ddu", inst, spec,
                             reform=ReformulationOptions(include_cuts=cuts),
                             backend=args.backend)
                times[label].append(time.perf_counter() - t0)
        rows.append({
            "areas": I, "nodes": J, "seeds": args.seeds,
            "mean_seconds_standard": np.mean(times["standard"]),
            "mean_seconds_improved": np.mean(times["improved"]),
        })
    out = out_dir / "runtime.csv"
    _write_csv(out, rows, ["areas", "nodes", "seeds",
                           "mean_seconds_standard", "mean_seconds_improved"])
    write_manifest(out, "sweep-runtime", {k: v for k, v in vars(args).items()},
                   [out], cfg.seed)
    _emit(args, {"runtime": str(out), "rows": len(rows)})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="edgeplace",
        description="Robust edge-node placement under decision-dependent "
                    "demand uncertainty")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic instance file")
    _add_config_flags(g)
    g.add_argument("--out", required=True)
    g.add_argument("--csv-dir", dest="csv_dir")
    g.add_argument("--json", action="store_true")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one placement scheme")
    s.add_argument("--instance", required=True)
    s.add_argument("--scheme", required=True,
                   choices=["ddu", "diu", "det", "so", "bspa", "heu"])
    s.add_argument("--cuts", choices=["on", "off"], default="off")
    s.add_argument("--backend", choices=["builtin", "external"],
                   default="builtin")
    s.add_argument("--verify", action="store_true",
                   help="run oracle cross-checks at the solved placement")
    s.add_argument("--big-m", type=float, dest="big_m")
    s.add_argument("--time-limit", type=float, dest="time_limit")
    s.add_argument("--node-limit", type=int, dest="node_limit")
    s.add_argument("--out", required=True)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("evaluate", help="out-of-sample cost comparison")
    e.add_argument("--instance", required=True)
    e.add_argument("--solutions", nargs="*", default=[],
                   help="solution JSON files from `solve`")
    e.add_argument("--schemes", help="comma list to solve inline")
    e.add_argument("--scenarios", type=int, default=1000)
    e.add_argument("--eval-seed", type=int, default=0, dest="eval_seed")
    e.add_argument("--sample-mode", choices=["truncnorm", "worst_case"],
                   default="truncnorm", dest="sample_mode")
    e.add_argument("--cuts", choices=["on", "off"], default="off")
    e.add_argument("--backend", choices=["builtin", "external"],
                   default="builtin")
    e.add_argument("--out", required=True)
    e.add_argument("--costs-out", dest="costs_out",
                   help="per-scenario paired costs CSV")
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_evaluate)

    w = sub.add_parser("sweep", help="parameter sweeps and runtime table")
    _add_config_flags(w)
    w.add_argument("--param",
                   choices=["B", "h", "rho", "delta", "eps_mu", "eps_sigma",
                            "b", "ddu_form"])
    w.add_argument("--values", help="comma-separated grid values")
    w.add_argument("--sweep", help="compact grid PARAM=start:step:stop")
    w.add_argument("--schemes", default="ddu")
    w.add_argument("--scenarios", type=int, default=0)
    w.add_argument("--eval-seed", type=int, default=0, dest="eval_seed")
    w.add_argument("--cuts", choices=["on", "off"], default="off")
    w.add_argument("--backend", choices=["builtin", "external"],
                   default="builtin")
    w.add_argument("--ddu-form", choices=list(DDU_FORMS), default="decrease",
                   dest="ddu_form")
    w.add_argument("--runtime", action="store_true",
                   help="cuts on/off wall-time comparison table")
    w.add_argument("--sizes", default="10x10,20x10",
                   help="runtime mode: comma list of IxJ sizes")
    w.add_argument("--seeds", type=int, default=20,
                   help="runtime mode: seeds per size")
    w.add_argument("--out-dir", required=True, dest="out_dir")
    w.add_argument("--json", action="store_true")
    w.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
