"""JSON run configuration: parsing, validation and round-trip serialization.

A minimal single-loop document::

    {
      "plant": {"num": [1], "den": [0, 0, 0, 1]},
      "channels": [{
        "sections": [[0.45, 0.55]],
        "regions": [{"type": "disk", "center": [-1, 0], "radius": 0.75}]
      }]
    }

Coefficients are in ascending powers of s.  See README.md for every key.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .flow import FlowSettings, ParameterBounds
from .lti import CompensatorChain, FirstOrderSection, FrequencyGrid, TFMatrix, tf
from .region import (DiskRegion, HalfPlaneRegion, RegionSpec, disk_from_sector,
                     read_mask_file, solve_laplace)
from .simulate import Identity, Saturation, SectorTable, SinusoidalGain

_NONLINEARITIES = ("identity", "saturation", "sinusoidal", "table")


@dataclass(frozen=True)
class MaskRegionRef:
    """A grid-mask region referenced by file; solved when the run starts."""

    file: str
    bounds: tuple
    tolerance: float = 1e-8
    max_sweeps: int = 50_000
    relaxation: float = 1.8

    def load(self, base_dir="."):
        path = Path(self.file)
        if not path.is_absolute():
            path = Path(base_dir) / path
        return read_mask_file(path, self.bounds)

    def solve(self, base_dir="."):
        return solve_laplace(self.load(base_dir), self.tolerance, self.max_sweeps,
                             self.relaxation)


@dataclass(frozen=True)
class GridSettings:
    omega_min: float = 1e-2
    omega_max: float = 1e2
    points: int = 256
    omegas: tuple = None

    def build(self):
        if self.omegas is not None:
            return FrequencyGrid(np.array(self.omegas))
        return FrequencyGrid.logspace(self.omega_min, self.omega_max, self.points)


@dataclass(frozen=True)
class VerifySettings:
    enabled: bool = True
    nonlinearity: dict = field(default_factory=lambda: {"type": "identity"})
    horizon: float = 60.0
    h: float = 1e-3
    references: tuple = None

    def build_nonlinearity(self):
        spec = dict(self.nonlinearity)
        kind = spec.pop("type")
        if kind == "identity":
            return Identity()
        if kind == "saturation":
            return Saturation(spec.get("lo", -0.2), spec.get("hi", 0.2))
        if kind == "sinusoidal":
            return SinusoidalGain()
        return SectorTable(tuple(spec["xs"]), tuple(spec["ys"]))


@dataclass(frozen=True)
class RunConfig:
    plant: object
    chains: tuple
    regions: tuple            # per channel: tuple of DiskRegion | HalfPlaneRegion | MaskRegionRef
    bounds: tuple
    grid: GridSettings = GridSettings()
    integrator: FlowSettings = FlowSettings()
    verify: VerifySettings = VerifySettings()
    output_dir: str = "out"
    base_dir: str = field(default=".", compare=False)

    @property
    def n_channels(self):
        return len(self.chains)

    @property
    def is_mimo(self):
        return isinstance(self.plant, TFMatrix)

    def references(self):
        if self.verify.references is not None:
            return tuple(self.verify.references)
        return (1.0,) * self.n_channels

    def region_specs(self):
        specs = []
        for shapes in self.regions:
            built = [s.solve(self.base_dir) if isinstance(s, MaskRegionRef) else s
                     for s in shapes]
            specs.append(RegionSpec(built))
        return specs

    def to_dict(self):
        return serialize(self)

    def __eq__(self, other):
        if not isinstance(other, RunConfig):
            return NotImplemented
        return serialize(self) == serialize(other)

    def __hash__(self):
        return hash(json.dumps(serialize(self), sort_keys=True))


# -- parsing ------------------------------------------------------------------

def _get(doc, key, path, kind=None, default=...):
    if key not in doc:
        if default is ...:
            raise SchemaError(f"{path}.{key}" if path else key, "missing required key")
        return default
    val = doc[key]
    if kind is not None and not isinstance(val, kind):
        raise SchemaError(f"{path}.{key}" if path else key,
                          f"expected {getattr(kind, '__name__', kind)}, got {type(val).__name__}")
    return val


def _number(val, path, positive=False, nonneg=False):
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise SchemaError(path, f"expected a finite number, got {val!r}")
    if positive and not val > 0:
        raise SchemaError(path, "must be > 0")
    if nonneg and not val >= 0:
        raise SchemaError(path, "must be >= 0")
    return float(val)


def _numbers(val, path):
    if not isinstance(val, list) or not val:
        raise SchemaError(path, "expected a non-empty list of numbers")
    return [_number(v, f"{path}[{k}]") for k, v in enumerate(val)]


def _point(val, path):
    if not isinstance(val, list) or len(val) != 2:
        raise SchemaError(path, "expected [re, im]")
    return complex(_number(val[0], path + "[0]"), _number(val[1], path + "[1]"))


def _parse_tf(doc, path):
    if doc is None or doc == 0:
        return tf([0.0], [1.0])
    if not isinstance(doc, dict):
        raise SchemaError(path, "expected an object with num/den")
    num = _numbers(_get(doc, "num", path), path + ".num")
    den = _numbers(_get(doc, "den", path), path + ".den")
    delay = _number(_get(doc, "delay", path, default=0.0), path + ".delay", nonneg=True)
    if all(c == 0 for c in den):
        raise SchemaError(path + ".den", "denominator is identically zero")
    return tf(num, den, delay)


def _parse_plant(doc):
    if not isinstance(doc, dict):
        raise SchemaError("plant", "expected an object")
    if "matrix" in doc:
        rows = doc["matrix"]
        if not isinstance(rows, list) or not rows or any(
                not isinstance(r, list) or len(r) != len(rows) for r in rows):
            raise SchemaError("plant.matrix", "expected a square list of lists")
        return TFMatrix([[_parse_tf(e, f"plant.matrix[{i}][{j}]") for j, e in enumerate(r)]
                         for i, r in enumerate(rows)])
    return _parse_tf(doc, "plant")


def _parse_chain(doc, path):
    if "sections" in doc:
        secs = _get(doc, "sections", path, list)
        out = []
        for k, s in enumerate(secs):
            p = f"{path}.sections[{k}]"
            if not isinstance(s, list) or len(s) != 2:
                raise SchemaError(p, "expected [zero, pole]")
            out.append(FirstOrderSection(_number(s[0], p + "[0]"), _number(s[1], p + "[1]")))
        return CompensatorChain(tuple(out))
    if "params" in doc:
        params = _get(doc, "params", path, list)
        if len(params) % 2:
            raise SchemaError(path + ".params", "need an even number of values [z1, p1, ...]")
        return CompensatorChain.from_params([_number(v, f"{path}.params[{k}]")
                                             for k, v in enumerate(params)])
    raise SchemaError(path + ".sections", "missing required key")


def _parse_region(doc, path):
    if not isinstance(doc, dict):
        raise SchemaError(path, "expected an object")
    kind = _get(doc, "type", path, str)
    try:
        if kind == "disk":
            return DiskRegion(_point(_get(doc, "center", path), path + ".center"),
                              _number(_get(doc, "radius", path), path + ".radius", positive=True),
                              _number(doc.get("margin", 0.0), path + ".margin", nonneg=True))
        if kind == "sector":
            return disk_from_sector(_number(_get(doc, "k1", path), path + ".k1"),
                                    _number(_get(doc, "k2", path), path + ".k2"),
                                    _number(doc.get("margin", 0.0), path + ".margin", nonneg=True))
        if kind == "halfplane":
            n = _point(_get(doc, "normal", path), path + ".normal")
            if abs(n) == 0:
                raise SchemaError(path + ".normal", "zero vector")
            return HalfPlaneRegion(_point(_get(doc, "anchor", path), path + ".anchor"),
                                   n / abs(n),
                                   _number(doc.get("depth_scale", 1.0), path + ".depth_scale",
                                           positive=True))
        if kind == "gridmask":
            b = _numbers(_get(doc, "bounds", path), path + ".bounds")
            if len(b) != 4:
                raise SchemaError(path + ".bounds", "expected [re_min, re_max, im_min, im_max]")
            return MaskRegionRef(str(_get(doc, "file", path, str)), tuple(b),
                                 _number(doc.get("tolerance", 1e-8), path + ".tolerance",
                                         positive=True),
                                 int(doc.get("max_sweeps", 50_000)),
                                 _number(doc.get("relaxation", 1.8), path + ".relaxation"))
    except SchemaError:
        raise
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None
    raise SchemaError(path + ".type", f"unknown region type {kind!r}")


def _bound_list(val, n, path, fill):
    if val is None:
        return [fill] * n
    if not isinstance(val, list) or len(val) != n:
        raise SchemaError(path, f"expected a list of {n} numbers or nulls")
    return [fill if v is None else _number(v, f"{path}[{k}]") for k, v in enumerate(val)]


def _parse_bounds(doc, chain, path):
    n = chain.n_params
    if doc is None:
        return ParameterBounds.unbounded(n)
    if not isinstance(doc, dict):
        raise SchemaError(path, "expected an object")
    lo = np.array(_bound_list(doc.get("lower"), n, path + ".lower", -np.inf))
    hi = np.array(_bound_list(doc.get("upper"), n, path + ".upper", np.inf))
    for key, sl, arr, pick in (("zero_lower", slice(0, None, 2), lo, np.maximum),
                               ("pole_lower", slice(1, None, 2), lo, np.maximum),
                               ("zero_upper", slice(0, None, 2), hi, np.minimum),
                               ("pole_upper", slice(1, None, 2), hi, np.minimum)):
        if key in doc and doc[key] is not None:
            arr[sl] = pick(arr[sl], _number(doc[key], f"{path}.{key}"))
    try:
        return ParameterBounds(lo, hi)
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None


def _parse_grid(doc):
    if doc is None:
        return GridSettings()
    if not isinstance(doc, dict):
        raise SchemaError("grid", "expected an object")
    if "omegas" in doc:
        w = _numbers(doc["omegas"], "grid.omegas")
        g = GridSettings(omegas=tuple(w))
    else:
        g = GridSettings(
            _number(doc.get("omega_min", 1e-2), "grid.omega_min", positive=True),
            _number(doc.get("omega_max", 1e2), "grid.omega_max", positive=True),
            int(_number(doc.get("points", 256), "grid.points", positive=True)))
    try:
        g.build()
    except ValueError as exc:
        raise SchemaError("grid", str(exc)) from None
    return g


def _parse_integrator(doc):
    if doc is None:
        return FlowSettings()
    if not isinstance(doc, dict):
        raise SchemaError("integrator", "expected an object")
    known = {"eta0", "tol_force", "tol_stall", "max_iterations", "grow", "shrink"}
    unknown = set(doc) - known
    if unknown:
        raise SchemaError(f"integrator.{sorted(unknown)[0]}", "unknown key")
    kw = {}
    for k in known & set(doc):
        v = _number(doc[k], f"integrator.{k}", positive=True)
        kw[k] = int(v) if k == "max_iterations" else v
    return FlowSettings(**kw)


def _parse_verify(doc, m):
    if doc is None:
        return VerifySettings()
    if not isinstance(doc, dict):
        raise SchemaError("verify", "expected an object")
    nl = doc.get("nonlinearity", {"type": "identity"})
    if isinstance(nl, str):
        nl = {"type": nl}
    if not isinstance(nl, dict) or nl.get("type") not in _NONLINEARITIES:
        raise SchemaError("verify.nonlinearity", f"type must be one of {_NONLINEARITIES}")
    refs = doc.get("references")
    if refs is not None:
        refs = tuple(_numbers(refs, "verify.references"))
        if len(refs) != m:
            raise SchemaError("verify.references", f"need {m} values")
    v = VerifySettings(
        bool(doc.get("enabled", True)), dict(nl),
        _number(doc.get("horizon", 60.0), "verify.horizon", positive=True),
        _number(doc.get("h", 1e-3), "verify.h", positive=True),
        refs)
    try:
        v.build_nonlinearity()
    except (ValueError, KeyError, TypeError) as exc:
        raise SchemaError("verify.nonlinearity", str(exc)) from None
    return v


def parse_config(text, base_dir=".", check_files=True):
    """Parse and validate a JSON document into a :class:`RunConfig`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("<document>", f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("<document>", "top level must be an object")
    plant = _parse_plant(_get(doc, "plant", ""))
    m = plant.size if isinstance(plant, TFMatrix) else 1
    channels = _get(doc, "channels", "", list)
    if len(channels) != m:
        raise SchemaError("channels", f"plant has {m} channel(s), config lists {len(channels)}")
    chains, regions, bounds = [], [], []
    for i, ch in enumerate(channels):
        path = f"channels[{i}]"
        if not isinstance(ch, dict):
            raise SchemaError(path, "expected an object")
        chain = _parse_chain(ch, path)
        regs = _get(ch, "regions", path, list)
        if not regs:
            raise SchemaError(path + ".regions", "at least one region is required")
        shapes = tuple(_parse_region(r, f"{path}.regions[{k}]") for k, r in enumerate(regs))
        chains.append(chain)
        regions.append(shapes)
        bounds.append(_parse_bounds(ch.get("bounds"), chain, path + ".bounds"))
    cfg = RunConfig(
        plant=plant,
        chains=tuple(chains),
        regions=tuple(regions),
        bounds=tuple(bounds),
        grid=_parse_grid(doc.get("grid")),
        integrator=_parse_integrator(doc.get("integrator")),
        verify=_parse_verify(doc.get("verify"), m),
        output_dir=str(doc.get("output_dir", "out")),
        base_dir=str(base_dir),
    )
    if check_files:
        for i, shapes in enumerate(cfg.regions):
            for k, s in enumerate(shapes):
                if isinstance(s, MaskRegionRef):
                    p = Path(s.file) if Path(s.file).is_absolute() else Path(base_dir) / s.file
                    if not p.is_file():
                        raise FileNotFoundError(f"channels[{i}].regions[{k}].file: {p}")
    return cfg


def load_config(path):
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


# -- serialization ------------------------------------------------------------

def _tf_doc(g):
    return {"num": list(g.num.coeffs), "den": list(g.den.coeffs), "delay": g.delay}


def _bound_doc(arr):
    return [None if not math.isfinite(v) else float(v) for v in arr]


def _region_doc(s):
    if isinstance(s, DiskRegion):
        return {"type": "disk", "center": [s.center.real, s.center.imag],
                "radius": s.radius, "margin": s.margin}
    if isinstance(s, HalfPlaneRegion):
        n = s.outward_normal
        return {"type": "halfplane", "anchor": [s.anchor.real, s.anchor.imag],
                "normal": [n.real, n.imag], "depth_scale": s.depth_scale}
    return {"type": "gridmask", "file": s.file, "bounds": list(s.bounds),
            "tolerance": s.tolerance, "max_sweeps": s.max_sweeps, "relaxation": s.relaxation}


def serialize(cfg):
    if isinstance(cfg.plant, TFMatrix):
        plant = {"matrix": [[_tf_doc(e) for e in row] for row in cfg.plant.entries]}
    else:
        plant = _tf_doc(cfg.plant)
    channels = []
    for chain, shapes, b in zip(cfg.chains, cfg.regions, cfg.bounds):
        channels.append({
            "sections": [[s.zero, s.pole] for s in chain.sections],
            "regions": [_region_doc(s) for s in shapes],
            "bounds": {"lower": _bound_doc(b.lower), "upper": _bound_doc(b.upper)},
        })
    g = cfg.grid
    grid = ({"omegas": list(g.omegas)} if g.omegas is not None else
            {"omega_min": g.omega_min, "omega_max": g.omega_max, "points": g.points})
    s = cfg.integrator
    v = cfg.verify
    return {
        "plant": plant,
        "channels": channels,
        "grid": grid,
        "integrator": {"eta0": s.eta0, "tol_force": s.tol_force, "tol_stall": s.tol_stall,
                       "max_iterations": s.max_iterations, "grow": s.grow, "shrink": s.shrink},
        "verify": {"enabled": v.enabled, "nonlinearity": dict(v.nonlinearity),
                   "horizon": v.horizon, "h": v.h,
                   "references": None if v.references is None else list(v.references)},
        "output_dir": cfg.output_dir,
    }


def dumps(cfg):
    return json.dumps(serialize(cfg), indent=2)
