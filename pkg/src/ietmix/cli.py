"""Command-line front end.

Exit codes: 0 success, 1 failed bench criteria, 2 configuration or usage
error, 3 runtime math error, 4 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, bench
from . import config as cfgmod
from .correlation import bump_from_config, boundary, correlate, decay_fit, pi_hat
from .errors import IetMixError, ResourceCapError
from .estimates import build_partition_final, build_partition_preliminary, build_partition_stretching
from .presets import DELTA_SUPP, arnold_segment
from .rauzy import dc_diagnostics, iterate, iterate_until
from .surface import Segment, fit_log_singularity
from .suspension import Suspension, SuspensionPoint, shear_profile

EXIT_OK, EXIT_BENCH, EXIT_CONFIG, EXIT_MATH, EXIT_CAP = 0, 1, 2, 3, 4


class UsageError(cfgmod.ConfigError):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, int, str)) or obj is None:
        return obj
    return str(obj)


class Output:
    """Collects emitted files for the manifest."""

    def __init__(self, root: Path):
        self.root = root
        self.files: list[str] = []
        root.mkdir(parents=True, exist_ok=True)

    def json(self, name: str, obj) -> Path:
        p = self.root / name
        p.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        self.files.append(name)
        return p

    def csv(self, name: str, header: list[str], rows) -> Path:
        p = self.root / name
        with p.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        self.files.append(name)
        return p


def _load_config(args) -> dict:
    if args.config and args.preset:
        raise UsageError("give either --config or --preset, not both")
    if args.config:
        cfg = cfgmod.load(args.config)
        if "preset" in cfg:
            # a config naming a preset only overrides the sections it gives
            cfg = {**cfgmod.preset_config(cfg["preset"]), **cfg}
        return cfg
    return cfgmod.preset_config(args.preset or "golden-asym")


def _suspension(cfg: dict) -> Suspension:
    iet = cfgmod.build_iet(cfg)
    return Suspension(iet, cfgmod.build_roof(cfg, iet))


def cmd_induce(args, cfg, out: Output) -> int:
    iet = cfgmod.build_iet(cfg)
    traj = iterate(iet, args.steps)
    steps = [{"index": k, "kind": s.kind, "winner": s.winner, "loser": s.loser, "matrix": s.matrix.tolist()}
             for k, s in enumerate(traj.steps)]
    n = traj.n_steps
    report = {"steps": steps, "lengths": [str(v) for v in traj.induced_lengths(n)], "heights": list(traj.heights(n)),
              "cocycle": traj.matrix(n).tolist(), "top": list(traj.iets[n].top), "bottom": list(traj.iets[n].bottom)}
    if args.dc:
        report["dc"] = dc_diagnostics(traj, **{k: v for k, v in cfg["dc"].items()}).to_dict()
    out.json("induce.json", report)
    return EXIT_OK


def cmd_flow(args, cfg, out: Output) -> int:
    susp = _suspension(cfg)
    x, y, r = susp.flow_with_count(SuspensionPoint(args.x, args.y), args.t)
    out.json("flow.json", {"x": x, "y": y, "crossings": r, "t": args.t, "start": [args.x, args.y]})
    return EXIT_OK


def cmd_birkhoff(args, cfg, out: Output) -> int:
    susp = _suspension(cfg)
    rs = sorted(int(v) for v in _floats(args.r))
    rows = susp.orbit_statistics(args.x, rs)
    out.csv("birkhoff.csv", ["r", "S_f", "S_f1", "S_f2", "U_tilde", "V_tilde", "max_log_dist", "min_dist"],
            ([r, *row] for r, row in zip(rs, rows)))
    return EXIT_OK


def cmd_shear(args, cfg, out: Output) -> int:
    susp = _suspension(cfg)
    a, b = _floats(args.interval)
    prof = shear_profile(susp, (a, b), args.t)
    out.csv("shear.csv", ["u", "r", "delta_f_cumulative"], prof.rows())
    out.json("shear.json", {"interval": [a, b], "t": args.t, "n_jumps": prof.n_jumps, "delta_f": prof.delta_f,
                            "delta_t": prof.delta_t, "direction": prof.direction,
                            "expected_direction": prof.expected_direction})
    return EXIT_OK


def cmd_partition(args, cfg, out: Output) -> int:
    susp = _suspension(cfg)
    summaries = []
    traj = dc = None
    for t in _floats(args.t):
        fam = build_partition_preliminary(susp.iet, susp.roof, t, args.M, args.alpha)
        if args.stage in ("stretching", "final"):
            if traj is None:
                traj = iterate_until(susp.iet, 100)
                dc = dc_diagnostics(traj, **cfg["dc"])
            fam = build_partition_stretching(fam, susp, traj, dc, window=args.window)
            if args.stage == "final":
                fam = build_partition_final(fam, susp)
        summaries.append(fam.summary())
        out.csv(f"partition_{args.stage}_t{t:g}.csv", ["p", "q", "Q"], ([int(p), int(q), fam.Q] for p, q in fam.intervals))
    out.json("partition.json", {"families": summaries})
    return EXIT_OK


def _observable(path: str | None, cfg: dict, key: str):
    if path:
        return bump_from_config(json.loads(cfgmod.resolve_path(path).read_text(encoding="utf-8")))
    g, h = cfgmod.build_observables(cfg)
    return g if key == "g" else h


def cmd_correlate(args, cfg, out: Output) -> int:
    susp = _suspension(cfg)
    g, h = _observable(args.g, cfg, "g"), _observable(args.h, cfg, "h")
    if args.reference:
        g = g.with_zero_mean(bump_from_config(json.loads(Path(args.reference).read_text(encoding="utf-8"))))
    delta = cfg.get("observables", {}).get("delta_supp", DELTA_SUPP)
    g.validate(susp.roof, delta, [float(v) for v in susp.iet.breakpoints[1:-1]])
    h.validate(susp.roof, delta, [float(v) for v in susp.iet.breakpoints[1:-1]])
    run = cfg["run"]
    t_grid = _floats(args.t_grid) if args.t_grid else run["t_grid"]
    samples = args.samples or run["samples"]
    seed = run["seed"] if args.seed is None else args.seed
    if samples < 10**4:
        raise UsageError("correlate needs at least 10^4 samples")
    series = correlate(susp, g, h, t_grid, samples, seed)
    out.csv("correlation.csv", ["t", "estimate", "stderr"], series.rows())
    out.json("correlation_fit.json", {"fit": decay_fit(series), "seed": seed, "samples": samples,
                                      "discarded": series.discarded})
    return EXIT_OK


def cmd_boundary(args, cfg, out: Output) -> int:
    iet = cfgmod.build_iet(cfg)
    bd = pi_hat(iet.pi)
    report = {"pi": list(iet.pi.images), "cycles": [[f"{i}{s}" for i, s in c] for c in bd.cycles],
              "pi_hat": {f"{i}{s}": f"{j}{t}" for (i, s), (j, t) in sorted(bd.mapping.items())}}
    if args.table:
        table = json.loads(cfgmod.resolve_path(args.table).read_text(encoding="utf-8"))
        limits = {}
        for key, val in table.items():
            label, side = int(key[:-1]), key[-1].upper()
            limits[(label, side)] = float(val)
        missing = [f"{i}{s}" for i, s in bd.mapping if (i, s) not in limits]
        if missing:
            raise UsageError(f"limit table lacks vertices {missing}")
        report["B"] = boundary(bd, limits)
    out.json("boundary.json", report)
    return EXIT_OK


def cmd_poincare(args, cfg, out: Output) -> int:
    if args.flow_config:
        flow_cfg = cfgmod.load(args.flow_config)
    else:
        flow_cfg = cfg if "flow" in cfg else cfgmod.preset_config("arnold-torus")
    flow = cfgmod.build_flow(flow_cfg)
    seg = Segment(*_floats(args.segment)) if args.segment else arnold_segment()
    data = flow.poincare_section(seg, args.crossings, start=args.start)
    out.csv("poincare.csv", ["position", "return_time"], data.rows())
    report = {"branches": data.branches(), "crossings": args.crossings,
              "critical_points": [c.__dict__ for c in flow.critical_points()]}
    fits = []
    for sad in flow.saddles():
        for s_star in flow.saddle_pullback(seg, sad)[:1]:
            entry = {"saddle": [sad.x, sad.y], "singular_position": s_star, "predicted_slope": sad.transit_slope}
            try:
                fit = fit_log_singularity(data, s_star)
                entry.update(fit)
                entry["ratio"] = max(fit["C_left"], fit["C_right"]) / min(fit["C_left"], fit["C_right"])
            except IetMixError as exc:
                entry["fit_status"] = str(exc)
            fits.append(entry)
    report["singularities"] = fits
    out.json("poincare.json", report)
    return EXIT_OK


def cmd_bench(args, cfg, out: Output) -> int:
    crit = [int(v) for v in _floats(args.criteria)] if args.criteria else None
    results = bench.run(crit, on_result=lambda r: print(r.line(), flush=True))
    out.json("bench.json", {"results": [r.to_dict() for r in results],
                            "passed": sum(r.passed for r in results), "total": len(results)})
    print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    return EXIT_OK if all(r.passed for r in results) else EXIT_BENCH


COMMANDS = {
    "induce": cmd_induce, "flow": cmd_flow, "shear": cmd_shear, "birkhoff": cmd_birkhoff,
    "partition": cmd_partition, "correlate": cmd_correlate, "boundary": cmd_boundary,
    "poincare": cmd_poincare, "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON (relative paths also tried under $IETMIX_CONFIG_DIR)")
    common.add_argument("--preset", choices=["golden-asym", "golden-sym", "arnold-torus"])
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker cap (computations are single threaded)")
    common.add_argument("--json-errors", action="store_true", help="report errors as JSON on stderr")

    p = argparse.ArgumentParser(prog="ietmix", description="Suspension flows over interval exchanges.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("induce", parents=[common], help="Rauzy-Veech induction")
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--dc", action="store_true", help="include balanced-time diagnostics")

    s = sub.add_parser("flow", parents=[common], help="flow a point of the suspension")
    s.add_argument("--x", type=float, required=True)
    s.add_argument("--y", type=float, default=0.0)
    s.add_argument("--t", type=float, required=True)

    s = sub.add_parser("birkhoff", parents=[common], help="Birkhoff sums of f, f', f''")
    s.add_argument("--x", type=float, required=True)
    s.add_argument("--r", required=True, help="comma-separated orbit lengths")

    s = sub.add_parser("shear", parents=[common], help="jumps of r(., t) on an interval")
    s.add_argument("--interval", required=True, help="a,b")
    s.add_argument("--t", type=float, required=True)

    s = sub.add_parser("partition", parents=[common], help="partition families")
    s.add_argument("--t", required=True, help="comma-separated times")
    s.add_argument("--stage", choices=["preliminary", "stretching", "final"], default="preliminary")
    s.add_argument("--window", choices=["full", "rough"], default="full")
    s.add_argument("--M", type=float, default=2.0)
    s.add_argument("--alpha", type=float, default=0.5)

    s = sub.add_parser("correlate", parents=[common], help="Monte-Carlo correlations")
    s.add_argument("--roof", help="roof JSON overriding the config")
    s.add_argument("--g")
    s.add_argument("--h")
    s.add_argument("--reference", help="reference bump used to make g zero-mean")
    s.add_argument("--t-grid")
    s.add_argument("--samples", type=int)
    s.add_argument("--seed", type=int)

    s = sub.add_parser("boundary", parents=[common], help="pi-hat cycles and boundary values")
    s.add_argument("--table", help='JSON object of one-sided limits, e.g. {"1L": 0.0, "1R": 0.5, ...}')

    s = sub.add_parser("poincare", parents=[common], help="Poincare section of a torus flow")
    s.add_argument("--flow-config")
    s.add_argument("--segment", help="x0,y0,x1,y1 (axis aligned)")
    s.add_argument("--crossings", type=int, default=200)
    s.add_argument("--start", type=float, default=0.0)

    s = sub.add_parser("bench", parents=[common], help="run the acceptance suite")
    s.add_argument("--criteria", help="comma-separated criterion numbers (default all)")
    return p


def _fail(args, code: int, exc: BaseException) -> int:
    if getattr(args, "json_errors", False):
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        for attr in ("point", "index", "step"):
            if getattr(exc, attr, None) is not None:
                err[attr] = _jsonable(getattr(exc, attr))
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
    else:
        print(f"ietmix: {type(exc).__name__}: {exc}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_CONFIG
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    try:
        cfg = cfgmod.with_defaults(_load_config(args))
        if getattr(args, "roof", None):
            cfg["roof"] = json.loads(cfgmod.resolve_path(args.roof).read_text(encoding="utf-8"))
            cfgmod.validate({k: v for k, v in cfg.items() if k not in ("dc", "run")})
        out = Output(Path(args.out))
        code = COMMANDS[args.command](args, cfg, out)
    except cfgmod.ConfigError as exc:
        return _fail(args, EXIT_CONFIG, exc)
    except ResourceCapError as exc:
        return _fail(args, EXIT_CAP, exc)
    except (IetMixError, ArithmeticError) as exc:
        return _fail(args, EXIT_MATH, exc)
    except OSError as exc:
        return _fail(args, EXIT_CONFIG, exc)
    manifest = {
        "command": args.command,
        "arguments": {k: v for k, v in sorted(vars(args).items()) if k not in ("json_errors",)},
        "config": cfg,
        "config_hash": cfgmod.config_hash(cfg),
        "version": __version__,
        "started": started,
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "files": sorted(out.files),
    }
    out.json("manifest.json", manifest)
    return code


if __name__ == "__main__":
    sys.exit(main())
