"""Sampling points on the invariant cubic surfaces.

The surface x^2 + y^2 + z^2 - xyz = V^2 + 4 is quadratic in each coordinate,
so points are produced by fixing two coordinates and solving for the third.
Region-classified samples come from rejection against the exact classifier;
the thin regions reached only through the dynamics are proposed as forward
images of base-region samples, which covers them exactly (their preimages
land in region 1 or 2 by the shift structure of the table).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SampleExhaustedError
from .regions import CLASS_BOUND, classify_arrays, classify_region
from .tracecore import Point3, Coupling, _vf, fricke_invariant, trace_map_arr

#: On the surface, if two coordinates are small the third is below this.
def lplus_cap(V: float) -> float:
    return 2.0 * float(V) + 8.0


DEFAULT_SURFACE_TOL = 1e-10
DEFAULT_ATTEMPT_BUDGET = 10 ** 6

_COORDS = ("x", "y", "z")


@dataclass(frozen=True)
class SurfacePoint:
    """A surface point together with how it was solved."""

    p: Point3
    V: float
    branch: str          # "plus" | "minus": sign of the quadratic root taken
    solved_coord: str    # which coordinate carries the root

    def __iter__(self):
        return iter(self.p)


def on_surface(p, V, tol: float = DEFAULT_SURFACE_TOL) -> bool:
    """Whether the cubic invariant matches V^2 + 4 to relative tolerance."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = _vf(V)
    target = v * v + 4.0
    return abs(fricke_invariant(p) - target) <= tol * max(1.0, target)


def solve_branch(a: float, b: float, solve_for: str, branch: str, V) -> SurfacePoint | None:
    """Solve the surface equation for one coordinate, the other two fixed.

    ``a`` and ``b`` are the fixed values in coordinate order (the surface is
    symmetric under coordinate permutation, so the quadratic is the same for
    every choice).  Returns None when the discriminant is negative.
    """
    if solve_for not in _COORDS:
        raise ValueError(f"solve_for must be one of {_COORDS}")
    if branch not in ("plus", "minus"):
        raise ValueError("branch must be 'plus' or 'minus'")
    v = _vf(V)
    disc = (a * b) ** 2 - 4.0 * (a * a + b * b - v * v - 4.0)
    if disc < 0:
        return None
    sign = 1.0 if branch == "plus" else -1.0
    t = 0.5 * (a * b + sign * math.sqrt(disc))
    if solve_for == "x":
        p = Point3(t, a, b)
    elif solve_for == "y":
        p = Point3(a, t, b)
    else:
        p = Point3(a, b, t)
    return SurfacePoint(p, v, branch, solve_for)


# -- vectorized root and charts ---------------------------------------------

def surface_root(a, b, sign, V):
    """Vectorized quadratic root t with t^2 - ab t + (a^2 + b^2 - V^2 - 4) = 0.

    ``sign`` +1/-1 selects the branch; rows with negative discriminant come
    back NaN.
    """
    v = float(V)
    disc = (a * b) ** 2 - 4.0 * (a * a + b * b - v * v - 4.0)
    with np.errstate(invalid="ignore"):
        root = 0.5 * (a * b + sign * np.sqrt(disc))
    return root


def chart_r12(V, z, w, sign):
    """Points of region 1 (sign=+1) or 2 (sign=-1) from chart coords (z, w).

    ``w`` prescribes the table entry xy - z; the region is a single band
    |xy - z| <= 2 over the square, so (z, w) in [-2,2]^2 covers it.
    """
    v = float(V)
    y = sign * np.full_like(np.asarray(z, dtype=float), math.sqrt(v * v + 4.0))
    x = (z + w) / y
    for _ in range(4):
        y = surface_root(x, z, sign, v)
        x = (z + w) / y
    y = surface_root(x, z, sign, v)
    return np.stack([x, y, np.asarray(z, dtype=float)], axis=1)


def chart_r56_v1(V, z, w, sign):
    """Region 5/6 band with xy - z = w prescribed; chart coords (z, w)."""
    v = float(V)
    x = sign * np.full_like(np.asarray(z, dtype=float), math.sqrt(v * v + 4.0))
    y = (z + w) / x
    for _ in range(4):
        x = surface_root(y, z, sign, v)
        y = (z + w) / x
    x = surface_root(y, z, sign, v)
    return np.stack([x, y, np.asarray(z, dtype=float)], axis=1)


def chart_r56_u1(V, z, a, sign, ybranch):
    """Region 5/6 band with x(y^2-1) - zy = a prescribed.

    The y-quadratic x y^2 - z y - (a + x) = 0 has roots of opposite signs for
    |x| >> 2; ``ybranch`` picks the sign of y.  Rows without a matching root
    come back NaN.
    """
    v = float(V)
    z = np.asarray(z, dtype=float)
    a = np.asarray(a, dtype=float)
    x = sign * np.full_like(z, math.sqrt(v * v + 4.0))
    y = np.full_like(z, np.nan)
    for _ in range(4):
        disc = z * z + 4.0 * x * (a + x)
        with np.errstate(invalid="ignore"):
            r = np.sqrt(disc)
            y_hi = (z + r) / (2.0 * x)
            y_lo = (z - r) / (2.0 * x)
        y = np.where(np.sign(y_hi) == ybranch, y_hi, y_lo)
        y = np.where(np.sign(y) == ybranch, y, np.nan)
        x = surface_root(y, z, sign, v)
    return np.stack([x, y, z], axis=1)


# -- band mixtures -----------------------------------------------------------

_SQRT2 = math.sqrt(2.0)


def band_mixture(rng, n, V, *, centers=(0.0, 1.0, -1.0, _SQRT2, -_SQRT2),
                 broad_weight=0.25):
    """Draw n values in [-2, 2]: a broad uniform component plus narrow bands.

    The bands sit where the adjacency property confines the table entries of
    points that continue to live in the partition; rejection against the
    classifier keeps correctness independent of this proposal.
    """
    w = min(0.5, 8.0 / float(V))
    out = rng.uniform(-2.0, 2.0, size=n)
    band = rng.random(n) >= broad_weight
    which = rng.integers(0, len(centers), size=n)
    offs = rng.uniform(-w, w, size=n)
    banded = np.take(np.asarray(centers), which) + offs
    out = np.where(band, np.clip(banded, -2.0, 2.0), out)
    return out


def _rng_for(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


# -- region samplers ---------------------------------------------------------

#: Regions proposed directly from two uniform coordinates.
_DIRECT_PLANS = {
    1: ("y", "plus"),
    2: ("y", "minus"),
    5: ("x", "plus"),
    6: ("x", "minus"),
}

#: Thin regions proposed as forward images of base-region samples.
_IMAGE_PLANS = {
    3: 1, 7: 1, 10: 1,
    4: 2, 8: 2, 9: 2,
}


def _direct_batch(region, V, rng, n):
    solve_for, branch = _DIRECT_PLANS[region]
    sign = 1.0 if branch == "plus" else -1.0
    a = rng.uniform(-2.0, 2.0, size=n)
    b = rng.uniform(-2.0, 2.0, size=n)
    t = surface_root(a, b, sign, V)
    if solve_for == "y":
        pts = np.stack([a, t, b], axis=1)
    else:
        pts = np.stack([t, a, b], axis=1)
    return pts[np.isfinite(t)]


def _image_batch(region, V, rng, n):
    src = _IMAGE_PLANS[region]
    sign = 1.0 if src == 1 else -1.0
    z = band_mixture(rng, n, V)
    w = band_mixture(rng, n, V)
    pts = chart_r12(V, z, w, sign)
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    ids, _ = classify_arrays(pts[:, 0], pts[:, 1], pts[:, 2])
    pts = pts[ids == src]
    return trace_map_arr(pts)


def sample_region_array(region: int, V, n: int, seed: int, *,
                        max_attempts: int = DEFAULT_ATTEMPT_BUDGET) -> np.ndarray:
    """n surface points classified into the requested region, as an (n, 3) array.

    Deterministic in (seed, region); proposals are drawn in batches and gated
    by the exact classifier, so membership is by construction.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if region not in range(1, 11):
        raise ValueError(f"region must be 1..10, got {region}")
    v = _vf(V)
    collected = []
    got = 0
    attempts = 0
    batch_idx = 0
    batch = max(4096, 4 * n)
    budget = max(max_attempts, 64 * n)
    while got < n:
        if attempts >= budget:
            raise SampleExhaustedError(
                f"region {region}: {got}/{n} points after {attempts} attempts")
        rng = _rng_for(seed, region, batch_idx)
        if region in _DIRECT_PLANS:
            pts = _direct_batch(region, v, rng, batch)
        else:
            pts = _image_batch(region, v, rng, batch)
        attempts += batch
        batch_idx += 1
        if len(pts) == 0:
            continue
        ids, _ = classify_arrays(pts[:, 0], pts[:, 1], pts[:, 2])
        good = pts[ids == region]
        cap = lplus_cap(v)
        good = good[np.all(np.abs(good) <= cap + 1e-9, axis=1)]
        if len(good):
            collected.append(good)
            got += len(good)
    return np.concatenate(collected)[:n]


def sample_region(region: int, V, n: int, seed: int, *,
                  max_attempts: int = DEFAULT_ATTEMPT_BUDGET) -> list[SurfacePoint]:
    """SurfacePoint view of :func:`sample_region_array`."""
    v = _vf(V)
    pts = sample_region_array(region, v, n, seed, max_attempts=max_attempts)
    if region in _DIRECT_PLANS:
        solved, branch = _DIRECT_PLANS[region]
        out = []
        for row in pts:
            out.append(SurfacePoint(Point3(*row), v, branch, solved))
        return out
    # image-sampled regions: record the large coordinate and its sign
    axis = "z" if region in (3, 4) else "x"
    idx = _COORDS.index(axis)
    out = []
    for row in pts:
        out.append(SurfacePoint(Point3(*row), v,
                                "plus" if row[idx] >= 0 else "minus", axis))
    return out
