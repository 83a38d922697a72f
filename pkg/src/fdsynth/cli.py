"""Command-line entry point: ``fdsynth design | sweep | laplace-field``.

Exit codes: 0 converged, 2 stalled, 3 configuration error (nothing written),
4 numerical failure or Laplace non-convergence, 5 iteration cap reached.
"""

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import DiskRegion, HalfPlaneRegion, load_config, serialize
from .errors import (ImproperTransferFunction, NonFiniteState, NotConverged,
                     NumericalFailure, PoleOnGrid, SchemaError)
from .flow import DesignProblem, StopReason, channel_responses, run, stall_diagnosis
from .lti import CompensatorChain, TFMatrix
from .region import read_mask_file, solve_laplace
from .simulate import simulate_mimo_closed_loop, step_metrics

log = logging.getLogger("fdsynth")

EXIT_OK, EXIT_STALLED, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MAXITER = 0, 2, 3, 4, 5
EXIT_CODES = {
    StopReason.CONVERGED: EXIT_OK,
    StopReason.STALLED: EXIT_STALLED,
    StopReason.NUMERICAL_FAILURE: EXIT_NUMERIC,
    StopReason.MAX_ITERATIONS: EXIT_MAXITER,
}
WORKERS_ENV = "FDSYNTH_WORKERS"
SWEEP_PARAMS = ("region.radius", "plant.delay")


def _fmt(x):
    return format(float(x), ".15g")


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) if not isinstance(v, str) else v for v in r) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8", newline="\n")


def _param_names(problem):
    names = []
    for c, chain in enumerate(problem.chains, 1):
        for k in range(1, len(chain) + 1):
            pre = f"c{c}_" if problem.is_mimo else ""
            names += [f"{pre}z{k}", f"{pre}p{k}"]
    return names


def build_problem(cfg):
    return DesignProblem(
        plant=cfg.plant,
        chains=cfg.chains,
        regions=tuple(cfg.region_specs()),
        grid=cfg.grid.build(),
        bounds=cfg.bounds,
        settings=cfg.integrator,
    )


def _region_distances(shapes, q):
    """Clearance of the sampled locus from each analytic region."""
    out = []
    for s in shapes:
        if isinstance(s, DiskRegion):
            d = float(np.min(np.abs(q - s.center)))
            out.append({"type": "disk", "center": [s.center.real, s.center.imag],
                        "radius": s.effective_radius, "min_distance": d,
                        "clearance": d - s.effective_radius})
        elif isinstance(s, HalfPlaneRegion):
            depth = (q - s.anchor).real * s.outward_normal.real + \
                    (q - s.anchor).imag * s.outward_normal.imag
            out.append({"type": "halfplane", "max_depth": float(np.max(depth))})
        else:
            out.append({"type": "gridmask", "file": s.file})
    return out


def _verify(cfg, chains):
    v = cfg.verify
    m = cfg.n_channels
    plants = cfg.plant if isinstance(cfg.plant, TFMatrix) else TFMatrix([[cfg.plant]])
    nl = v.build_nonlinearity()
    refs = cfg.references()
    traj = simulate_mimo_closed_loop(plants, chains, refs, v.horizon, v.h, [nl] * m)
    metrics = [step_metrics(traj, refs[i], channel=i) for i in range(m)]
    return traj, metrics


def design(cfg, out_dir):
    """Run the flow and write all artifacts into ``out_dir``; returns the report."""
    problem = build_problem(cfg)
    trace = run(problem)
    final = trace.final
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for stale in ("trace.csv", "step.csv", "report.json", "response.csv"):
        (out_dir / stale).unlink(missing_ok=True)
    for stale in out_dir.glob("response_*.csv"):
        stale.unlink()
    names = _param_names(problem)
    m = problem.n_channels

    eta_cols = ["eta"] if m == 1 else [f"eta_{i}" for i in range(1, m + 1)]
    _write_csv(out_dir / "trace.csv",
               ["iteration", *names, "V", "max_force", *eta_cols],
               [[s.iteration, *s.lam, s.lyapunov, s.max_force, *s.step]
                for s in trace.snapshots])

    w = problem.grid.omegas
    q0 = channel_responses(problem)
    q1 = channel_responses(problem, final.lam)
    for i in range(m):
        fname = "response.csv" if m == 1 else f"response_{i + 1}.csv"
        _write_csv(out_dir / fname, ["omega", "re_q0", "im_q0", "re_q", "im_q"],
                   zip(w, q0[i].real, q0[i].imag, q1[i].real, q1[i].imag))

    final_chains = problem.chains_at(final.lam)
    report = {
        "stop_reason": trace.stop_reason.value,
        "iterations": trace.iterations,
        "lyapunov": final.lyapunov,
        "max_force": final.max_force,
        "parameters": dict(zip(names, map(float, final.lam))),
        "channels": [{"channel": i + 1,
                      "initial": [float(x) for x in problem.chains[i].params()],
                      "final": [float(x) for x in final_chains[i].params()],
                      "regions": _region_distances(cfg.regions[i], q1[i])}
                     for i in range(m)],
        "manifest": {"version": __version__, "config": serialize(cfg)},
    }
    if trace.stop_reason is StopReason.STALLED:
        report["stall"] = stall_diagnosis(problem, final).summary()
    if cfg.verify.enabled:
        try:
            traj, metrics = _verify(cfg, final_chains)
            (out_dir / "step.csv").write_text(traj.to_csv(), encoding="utf-8", newline="\n")
            report["verification"] = [
                {"channel": i + 1, "overshoot": _finite_or_none(mt.overshoot),
                 "settling_time": _finite_or_none(mt.settling_time),
                 "steady_state_error": _finite_or_none(mt.steady_state_error),
                 "bounded": mt.bounded, "settled": mt.settled}
                for i, mt in enumerate(metrics)]
        except (NonFiniteState, ImproperTransferFunction, ValueError) as exc:
            report["verification_error"] = str(exc)
    files = sorted(p.name for p in out_dir.iterdir() if p.is_file()) + ["report.json"]
    report["manifest"]["files"] = sorted(set(files))
    _write_json(out_dir / "report.json", report)
    return report


def _finite_or_none(x):
    return None if x is None or not np.isfinite(x) else float(x)


def _with_value(cfg, param, value):
    if param == "region.radius":
        if not any(isinstance(s, DiskRegion) for sh in cfg.regions for s in sh):
            raise SchemaError("channels[*].regions", "no disk region to sweep")
        regions = tuple(tuple(replace(s, radius=value) if isinstance(s, DiskRegion) else s
                              for s in shapes) for shapes in cfg.regions)
        return replace(cfg, regions=regions)
    if param == "plant.delay":
        if isinstance(cfg.plant, TFMatrix):
            raise SchemaError("plant.delay", "delay sweep needs a single-loop plant")
        return replace(cfg, plant=replace(cfg.plant, delay=value))
    raise SchemaError("--param", f"must be one of {SWEEP_PARAMS}")


def _sweep_one(args):
    return design(*args)


def _sweep_row(value, report):
    """Worst case over outputs; an unbounded or unsettled response reads as inf."""
    ver = report.get("verification")

    def worst(key):
        if not ver:
            return "nan"
        xs = [v[key] for v in ver]
        return "inf" if None in xs else _fmt(max(xs))

    return [_fmt(value), report["stop_reason"], worst("overshoot"), worst("settling_time")]


def sweep(cfg, param, values, out_dir, warm_start=False, workers=1):
    out_dir = Path(out_dir)
    cfgs = [_with_value(cfg, param, v) for v in values]   # validate before writing
    dirs = [out_dir / f"run_{k:03d}" for k in range(len(values))]
    reports = []
    if warm_start or workers <= 1:
        prev = None
        for c, d in zip(cfgs, dirs):
            if warm_start and prev is not None:
                c = replace(c, chains=tuple(_chains_from(prev)))
            prev = design(c, d)
            reports.append(prev)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_sweep_one, zip(cfgs, dirs)))
    rows = [_sweep_row(v, r) for v, r in zip(values, reports)]
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "sweep.csv", ["value", "stop_reason", "overshoot", "settling_time"],
               rows)
    return reports


def _chains_from(report):
    return [CompensatorChain.from_params(ch["final"]) for ch in report["channels"]]


def laplace_field(mask_path, out_path, bounds=None, tolerance=1e-8, max_sweeps=50_000):
    """Solve a mask file and write V as a CSV grid, top row first like the mask."""
    text = Path(mask_path).read_text(encoding="utf-8")
    if bounds is None:
        for line in text.splitlines():
            if line.strip() and not line.lstrip().startswith("#"):
                nx, ny = (int(t) for t in line.split()[:2])
                break
        bounds = (0.0, float(nx), 0.0, float(ny))
    mask = read_mask_file(mask_path, bounds)
    lf = solve_laplace(mask, tolerance, max_sweeps)
    rows = np.asarray(lf.values)[::-1]
    Path(out_path).write_text(
        "\n".join(",".join(_fmt(v) for v in r) for r in rows) + "\n",
        encoding="utf-8", newline="\n")
    return lf


def _parser():
    p = argparse.ArgumentParser(prog="fdsynth", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="run one design and write its artifacts")
    d.add_argument("config")
    d.add_argument("-o", "--output-dir", help="override output_dir from the config")

    s = sub.add_parser("sweep", help="repeat a design over a parameter")
    s.add_argument("config")
    s.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    s.add_argument("--values", required=True,
                   help="comma-separated numbers, e.g. 0.5,0.75,1")
    s.add_argument("--warm-start", action="store_true",
                   help="seed each run with the previous final compensator")
    s.add_argument("-o", "--output-dir")

    f = sub.add_parser("laplace-field", help="solve a mask file for its potential")
    f.add_argument("mask")
    f.add_argument("out")
    f.add_argument("--bounds", nargs=4, type=float,
                   metavar=("RE_MIN", "RE_MAX", "IM_MIN", "IM_MAX"))
    f.add_argument("--tolerance", type=float, default=1e-8)
    f.add_argument("--max-sweeps", type=int, default=50_000)
    return p


def _parse_values(text):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise SchemaError("--values", f"not a list of numbers: {text!r}") from None
    if not vals:
        raise SchemaError("--values", "empty")
    return vals


def _workers():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise SchemaError(WORKERS_ENV, f"not an integer: {raw!r}") from None


def _out_dir(cfg, override):
    if override:
        return Path(override)
    p = Path(cfg.output_dir)
    return p if p.is_absolute() else Path(cfg.base_dir) / p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "laplace-field":
            try:
                lf = laplace_field(args.mask, args.out, args.bounds, args.tolerance,
                                   args.max_sweeps)
            except NotConverged as exc:
                log.error("%s", exc)
                return EXIT_NUMERIC
            print(f"sweeps={lf.sweeps} residual={lf.residual:.3e}")
            return EXIT_OK

        cfg = load_config(args.config)
        out = _out_dir(cfg, args.output_dir)
        if args.command == "design":
            report = design(cfg, out)
            print(f"{report['stop_reason']} after {report['iterations']} iterations")
            return EXIT_CODES[StopReason(report["stop_reason"])]

        values = _parse_values(args.values)
        reports = sweep(cfg, args.param, values, out, args.warm_start, _workers())
        for v, r in zip(values, reports):
            print(f"{args.param}={_fmt(v)}: {r['stop_reason']}")
        return max(EXIT_CODES[StopReason(r["stop_reason"])] for r in reports)
    except (SchemaError, FileNotFoundError, OSError, ValueError) as exc:
        if isinstance(exc, PoleOnGrid):
            log.error("%s", exc)
            return EXIT_NUMERIC
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (NotConverged, NumericalFailure, NonFiniteState) as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
