"""JSON forms of measures, grids, kernels, couplings and costs."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import measure as _m
from .dual import SplittingKernel
from .measure import Analytic1DMeasure, DiscreteMeasure
from .primal import Quantizer
from .transport import Coupling, CostSpec

__all__ = [
    "BUILTINS",
    "measure_to_dict",
    "measure_from_dict",
    "load_measure",
    "quantizer_to_dict",
    "quantizer_from_dict",
    "coupling_to_dict",
    "coupling_from_dict",
    "kernel_to_dict",
    "kernel_from_dict",
    "cost_to_dict",
    "cost_from_dict",
    "load_cost",
    "dump",
]

BUILTINS = {
    "uniform01": _m.uniform01,
    "tri2x": _m.tri2x,
    "invsqrt": _m.invsqrt,
    "mu6": _m.mu6,
    "mu6check": _m.mu6check,
}


def measure_to_dict(m):
    if isinstance(m, Analytic1DMeasure):
        return {"family": m.family, "rho": m.rho, "offset": m.offset, "scale": m.scale}
    return {"dim": m.dim, "points": m.points.tolist(), "weights": m.weights.tolist()}


def measure_from_dict(d):
    if "family" in d:
        return Analytic1DMeasure(d["family"], float(d.get("rho", 1.0)), float(d.get("offset", 0.0)),
                                 float(d.get("scale", 1.0)))
    if "points" not in d:
        raise ValueError("measure JSON needs 'points' (discrete) or 'family' (closed form)")
    pts = np.asarray(d["points"], dtype=float)
    dim = int(d.get("dim", 1 if pts.ndim == 1 else pts.shape[1]))
    return DiscreteMeasure(pts.reshape(-1, dim), d.get("weights"))


def load_measure(ref: str):
    """A builtin name (optionally ``builtin:``-prefixed) or a path to a measure JSON file."""
    name = ref[len("builtin:"):] if ref.startswith("builtin:") else ref
    if name in BUILTINS:
        return BUILTINS[name]()
    if ref.startswith("builtin:"):
        raise ValueError(f"unknown builtin measure {name!r}; choose from {sorted(BUILTINS)}")
    path = Path(ref)
    if not path.exists():
        raise ValueError(f"{ref!r} is neither a builtin measure nor an existing file")
    return measure_from_dict(json.loads(path.read_text()))


def quantizer_to_dict(q: Quantizer):
    return {"points": q.points.tolist()}


def quantizer_from_dict(d):
    return Quantizer(d["points"])


def coupling_to_dict(pi: Coupling):
    return {
        "src_points": pi.src_points.tolist(),
        "dst_points": pi.dst_points.tolist(),
        "entries": [{"i": int(i), "j": int(j), "w": float(w)} for i, j, w in zip(pi.i, pi.j, pi.w)],
    }


def coupling_from_dict(d):
    e = d["entries"]
    return Coupling(d["src_points"], d["dst_points"], [r["i"] for r in e], [r["j"] for r in e], [r["w"] for r in e])


def kernel_to_dict(k: SplittingKernel):
    return k.to_dict()


def kernel_from_dict(d):
    return SplittingKernel.from_dict(d)


def cost_to_dict(c: CostSpec):
    return c.to_dict()


def cost_from_dict(d):
    return CostSpec.from_dict(d)


def load_cost(ref: str, p: float | None = None) -> CostSpec:
    """A cost kind name (``abs_power``, ``pos_power``, ...) or a path to a CostSpec JSON file."""
    if ref in CostSpec.KINDS and ref != "matrix":
        return CostSpec(ref, 1.0 if p is None else float(p))
    path = Path(ref)
    if not path.exists():
        raise ValueError(f"{ref!r} is neither a cost kind nor an existing file")
    return cost_from_dict(json.loads(path.read_text()))


def dump(obj, path=None):
    text = json.dumps(obj, indent=2)
    if path is None:
        return text
    Path(path).write_text(text + "\n")
    return text
