"""Parameter sweeps that compare discrete energies with their closed-form limits."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import generators as gen
from . import pl

THREADS_ENV = "WILLMORE_THREADS"
COLUMNS = ("param", "energy", "closed_form", "abs_err")


def bobenko_planar_closed_form(n: int, r) -> float:
    """W_Bobenko of the planar torus with radii r: 2n arccos((c - 2e + c e^2) / (1 - 2 e c + e^2))."""
    e = r[-1] / r[0]
    c = math.cos(2 * math.pi / n)
    return 2 * n * math.acos((c - 2 * e + c * e * e) / (1 - 2 * e * c + e * e))


def centroid_limit(n: int) -> float:
    return 1.5 * n * math.sin(2 * math.pi / n)


def effarea_limit(n: int) -> float:
    return 3 * n * math.sin(2 * math.pi / n)


def geometric_radii(m: int, last: float) -> np.ndarray:
    """r_i = last^(i/(m-1)), so r_0 = 1 and r_{m-1} = last."""
    return last ** (np.arange(m) / (m - 1))


@dataclass(frozen=True)
class Sweep:
    name: str
    description: str
    defaults: dict

    def point(self, param: float, opts: dict) -> tuple[float, float]:
        return _POINTS[self.name](param, opts)


def _spherical(eps, o):
    m = gen.spherical_torus(o["m"], o["n"], eps)
    return pl.w_bobenko(m), 4 * math.pi


def _planar(last, o):
    r = geometric_radii(o["m"], last)
    return pl.w_bobenko(gen.planar_torus(o["m"], o["n"], r)), bobenko_planar_closed_form(o["n"], r)


def _centroid(r1, o):
    m = gen.planar_torus(3, o["n"], [1.0, r1, r1 / o["ratio"]])
    return pl.w_value(m, pl.WVariant.CENTROID), centroid_limit(o["n"])


def _effarea(r2, o):
    m = gen.planar_torus(3, o["n"], [1.0, 1.0 - r2 * o["ratio"], r2])
    return pl.w_value(m, pl.WVariant.EFFAREA), effarea_limit(o["n"])


_POINTS = {"bobenko-spherical": _spherical, "bobenko-planar": _planar,
           "centroid-limit": _centroid, "effarea-limit": _effarea}

SWEEPS = {
    "bobenko-spherical": Sweep("bobenko-spherical", "W_Bobenko of spherical tori as eps -> 0 (limit 4 pi)",
                               {"m": 10, "n": 20, "params": [0.3, 0.1, 0.03, 0.01, 0.003]}),
    "bobenko-planar": Sweep("bobenko-planar", "W_Bobenko of planar tori against the closed form, param r_{m-1}",
                            {"m": 4, "n": 8, "params": [0.8, 0.5, 0.2, 0.1, 0.01]}),
    "centroid-limit": Sweep("centroid-limit", "W_Centroid of T_{3,n,(1,r1,r1/ratio)} as r1 -> 0",
                            {"n": 8, "ratio": 10.0, "params": [1e-1, 1e-2, 1e-3, 1e-4]}),
    "effarea-limit": Sweep("effarea-limit", "W_EffArea of T_{3,n,(1,1-ratio r2,r2)} as r2 -> 0",
                           {"n": 8, "ratio": 10.0, "params": [3e-2, 1e-2, 1e-3, 1e-4]}),
}


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_sweep(name: str, params=None, threads: int | None = None, **opts) -> list[dict]:
    """Rows with the COLUMNS keys, in parameter order."""
    if name not in SWEEPS:
        raise KeyError(f"unknown sweep {name!r}; choose from {sorted(SWEEPS)}")
    sweep = SWEEPS[name]
    o = {k: v for k, v in sweep.defaults.items() if k != "params"}
    unknown = set(opts) - set(o)
    if unknown:
        raise ValueError(f"sweep {name} has no option(s) {sorted(unknown)}")
    o.update({k: v for k, v in opts.items() if v is not None})
    params = list(sweep.defaults["params"] if params is None else params)

    def one(p):
        energy, exact = sweep.point(float(p), o)
        return {"param": float(p), "energy": energy, "closed_form": exact, "abs_err": abs(energy - exact)}

    with ThreadPoolExecutor(threads or thread_count()) as ex:
        return list(ex.map(one, params))
