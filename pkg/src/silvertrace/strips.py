"""Return-map strips: itinerary classes and targeted samplers.

The first return of the trace map to the base regions {1, 2, 5, 6} takes two
steps from regions 1 and 2 (through one intermediate region) and one step
from regions 5 and 6.  The sixteen itinerary classes (source, intermediate,
target) play the role of the vertical strips of the construction; their
forward images are the horizontal strips.  Points sampled here carry both a
forward label (which vertical strip) and, when requested, a backward label
(which horizontal strip they lie in).

Strips are nested band intersections of width down to ~1/V^2, so uniform
proposals are hopeless at strong coupling.  Proposals instead fix the
deepest free table entry of the itinerary and solve for the chart coordinate
with a scalar Newton iteration; membership is still decided solely by the
exact classifier, so the proposal only affects efficiency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SampleExhaustedError
from .regions import BASE_REGIONS, CATALOG, classify_arrays
from .surface import chart_r12, chart_r56_u1, chart_r56_v1, _rng_for
from .tracecore import _vf, trace_map_arr, trace_map_inverse_arr

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class StripClass:
    """One itinerary class (src, mid, tgt); mid is None for one-step returns."""

    src: int
    mid: int | None
    tgt: int

    @property
    def label(self) -> str:
        if self.mid is None:
            return f"{self.src}-{self.tgt}"
        return f"{self.src}-{self.mid}-{self.tgt}"

    @property
    def steps(self) -> int:
        return 1 if self.mid is None else 2

    @property
    def group(self) -> str:
        """Cone-analysis group.

        a: two-step strips returning to regions 1/2, b: two-step strips into
        5/6, c: one-step strips into 1/2, d: one-step strips staying in 5/6.
        """
        if self.mid is not None:
            return "a" if self.tgt in (1, 2) else "b"
        return "c" if self.tgt in (1, 2) else "d"


def _build_classes() -> tuple[StripClass, ...]:
    classes = []
    for src in (1, 2):
        for mid in CATALOG[src]:
            for tgt in CATALOG[mid]:
                classes.append(StripClass(src, mid, tgt))
    for src in (5, 6):
        for tgt in CATALOG[src]:
            classes.append(StripClass(src, None, tgt))
    classes.sort(key=lambda c: (c.src, c.mid or 0, c.tgt))
    return tuple(classes)


STRIP_CLASSES: tuple[StripClass, ...] = _build_classes()
STRIP_INDEX: dict[str, int] = {c.label: i for i, c in enumerate(STRIP_CLASSES)}

#: Strip numbers that the construction pins down explicitly; the remaining
#: two-step strips are determined only up to their group.
KNOWN_STRIP_NUMBERS = {
    "1-3-2": 6, "5-1": 11, "5-2": 12, "5-6": 13,
    "6-1": 14, "6-2": 15, "6-5": 16,
}


def classes_in_group(group: str) -> tuple[StripClass, ...]:
    return tuple(c for c in STRIP_CLASSES if c.group == group)


# -- itinerary labeling ------------------------------------------------------

def _ids(pts: np.ndarray) -> np.ndarray:
    ids, _ = classify_arrays(pts[:, 0], pts[:, 1], pts[:, 2])
    return ids


def forward_labels(pts: np.ndarray):
    """Forward itinerary class index of each point, or -1 when the return fails.

    Returns (class_indices, images); images holds the return-map image of each
    returning point, NaN rows otherwise.
    """
    n = len(pts)
    out = np.full(n, -1, dtype=np.int64)
    images = np.full((n, 3), np.nan)
    ids0 = _ids(pts)
    img1 = trace_map_arr(pts)
    ids1 = _ids(img1)
    one = np.isin(ids0, (5, 6)) & np.isin(ids1, BASE_REGIONS)
    mid_ok = np.isin(ids0, (1, 2)) & (ids1 >= 3) & ~np.isin(ids1, (5, 6))
    img2 = np.full_like(pts, np.nan)
    ids2 = np.zeros(n, dtype=np.int8)
    if np.any(mid_ok):
        img2[mid_ok] = trace_map_arr(img1[mid_ok])
        ids2[mid_ok] = _ids(img2[mid_ok])
    two = mid_ok & np.isin(ids2, BASE_REGIONS)
    for i in np.nonzero(one)[0]:
        idx = STRIP_INDEX.get(f"{ids0[i]}-{ids1[i]}", -1)
        out[i] = idx
        if idx >= 0:
            images[i] = img1[i]
    for i in np.nonzero(two)[0]:
        idx = STRIP_INDEX.get(f"{ids0[i]}-{ids1[i]}-{ids2[i]}", -1)
        out[i] = idx
        if idx >= 0:
            images[i] = img2[i]
    return out, images


def backward_labels(pts: np.ndarray):
    """Backward itinerary class (the horizontal strip containing each point).

    A point lies in the forward image of strip (src, mid, tgt) iff its region
    is tgt and its inverse orbit classifies through mid back to src.  Returns
    (class_indices, preimages) with -1 / NaN rows on failure.
    """
    n = len(pts)
    out = np.full(n, -1, dtype=np.int64)
    pre = np.full((n, 3), np.nan)
    ids0 = _ids(pts)
    bk1 = trace_map_inverse_arr(pts)
    ids1 = _ids(bk1)
    one = np.isin(ids0, BASE_REGIONS) & np.isin(ids1, (5, 6))
    mid_ok = np.isin(ids0, BASE_REGIONS) & (ids1 >= 3) & ~np.isin(ids1, (5, 6))
    bk2 = np.full_like(pts, np.nan)
    ids2 = np.zeros(n, dtype=np.int8)
    if np.any(mid_ok):
        bk2[mid_ok] = trace_map_inverse_arr(bk1[mid_ok])
        ids2[mid_ok] = _ids(bk2[mid_ok])
    two = mid_ok & np.isin(ids2, (1, 2))
    for i in np.nonzero(one)[0]:
        idx = STRIP_INDEX.get(f"{ids1[i]}-{ids0[i]}", -1)
        out[i] = idx
        if idx >= 0:
            pre[i] = bk1[i]
    for i in np.nonzero(two)[0]:
        idx = STRIP_INDEX.get(f"{ids2[i]}-{ids1[i]}-{ids0[i]}", -1)
        out[i] = idx
        if idx >= 0:
            pre[i] = bk2[i]
    return out, pre


# -- deep table entries ------------------------------------------------------

def _fwd_entry(pts, which: str):
    """Deep forward entries of the table sequence at an array of points."""
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    v1 = x * y - z
    u1 = x * (y * y - 1.0) - z * y
    if which == "v1":
        return v1
    v2 = u1 * v1 - y
    if which == "v2":
        return v2
    u2 = u1 * (v1 * v1 - 1.0) - y * v1
    if which == "v3":
        return u2 * v2 - v1
    raise ValueError(which)


def _bwd_entry(pts, which: str):
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    um1 = y * z - x
    vm2 = y * (z * z - 1.0) - x * z
    if which == "vm2":
        return vm2
    if which == "vm3":
        return z * (vm2 * vm2 - 1.0) - um1 * vm2
    raise ValueError(which)


# -- class-specific chart plans ----------------------------------------------

def _fwd_plan(cls: StripClass):
    """(chart kind, start center for the chart's free entry, deep entry name).

    The start centers are where the adjacency property confines the first
    table entry of points continuing along the itinerary; deep Newton then
    pins the last free entry of the word.
    """
    if cls.src in (1, 2):
        ysign = 1.0 if cls.src == 1 else -1.0
        if cls.mid in (3, 4):
            return ("r12", ysign, 0.0, "v3")
        pos = (cls.mid == 7) if cls.src == 1 else (cls.mid == 9)
        sign = 1.0 if pos else -1.0
        if cls.group == "a":
            return ("r12", ysign, sign * _SQRT2, "v3")
        return ("r12", ysign, sign * 1.0, "v2")
    xsign = 1.0 if cls.src == 5 else -1.0
    if cls.tgt in (1, 2):
        ybranch = 1.0 if (cls.src == 5) == (cls.tgt == 1) else -1.0
        return ("r56u", xsign, ybranch, "v2")
    return ("r56v", xsign, 0.0, "v2")


def _chart_points(kind, V, sign, aux, z, w):
    if kind == "r12":
        return chart_r12(V, z, w, sign)
    if kind == "r56u":
        return chart_r56_u1(V, z, w, sign, aux)
    return chart_r56_v1(V, z, w, sign)


def _fwd_t_draw(cls: StripClass, rng, n, V):
    if cls.group == "b":
        # the second forward entry sits in narrow admissible sub-bands
        centers = np.array([0.0, 1.0, -1.0])
        which = rng.integers(0, 3, size=n)
        width = min(0.3, 6.0 / float(V))
        return np.take(centers, which) + rng.uniform(-width, width, size=n)
    return rng.uniform(-1.95, 1.95, size=n)


_BWD_MODES_12 = ((1.0, "vm2"), (-1.0, "vm2"), (0.0, "vm3"),
                 (_SQRT2, "vm3"), (-_SQRT2, "vm3"))
_BWD_MODES_56 = ((0.0, "vm2"), (1.0, "vm3"), (-1.0, "vm3"))


def _newton(value_fn, z, w, t, solve_w: bool, kind, V, sign, aux, iters=6):
    """Scalar Newton on w (or z) so that the deep entry hits its target t."""
    h = 1e-6
    for _ in range(iters):
        var = w if solve_w else z
        pts0 = _chart_points(kind, V, sign, aux, z, w)
        f0 = value_fn(pts0) - t
        if solve_w:
            pts1 = _chart_points(kind, V, sign, aux, z, w + h)
        else:
            pts1 = _chart_points(kind, V, sign, aux, z + h, w)
        f1 = value_fn(pts1) - t
        deriv = (f1 - f0) / h
        with np.errstate(divide="ignore", invalid="ignore"):
            step = f0 / deriv
        step = np.where(np.isfinite(step), step, 0.0)
        step = np.clip(step, -0.5, 0.5)
        var = var - step
        if solve_w:
            w = var
        else:
            z = var
    return z, w


def _deep_propose(cls: StripClass, V: float, rng, n: int, two_sided: bool):
    kind, sign, aux, fdeep = _fwd_plan(cls)
    width = min(0.4, 8.0 / V)
    if kind == "r56u":
        w = rng.uniform(-1.5, 1.5, size=n)
    else:
        w = aux + rng.uniform(-width, width, size=n)
        if kind == "r12":
            aux_chart = None
        w = np.clip(w, -1.999, 1.999)
    z = rng.uniform(-1.95, 1.95, size=n)
    t_f = _fwd_t_draw(cls, rng, n, V)
    f_fn = lambda pts: _fwd_entry(pts, fdeep)  # noqa: E731

    if not two_sided:
        z, w = _newton(f_fn, z, w, t_f, True, kind, V, sign, aux)
        return _chart_points(kind, V, sign, aux, z, w)

    modes = _BWD_MODES_12 if cls.src in (1, 2) else _BWD_MODES_56
    pick = rng.integers(0, len(modes), size=n)
    z_center = np.array([m[0] for m in modes])[pick]
    bdeep = np.array([0 if m[1] == "vm2" else 1 for m in modes])[pick]
    z = np.clip(z_center + rng.uniform(-width, width, size=n), -1.999, 1.999)
    t_b = rng.uniform(-1.95, 1.95, size=n)

    vm2 = lambda pts: _bwd_entry(pts, "vm2")  # noqa: E731
    vm3 = lambda pts: _bwd_entry(pts, "vm3")  # noqa: E731
    for _ in range(2):
        z, w = _newton(f_fn, z, w, t_f, True, kind, V, sign, aux, iters=4)
        for flag, fn in ((0, vm2), (1, vm3)):
            sel = bdeep == flag
            if np.any(sel):
                zs, ws = _newton(fn, z[sel], w[sel], t_b[sel], False,
                                 kind, V, sign,
                                 aux if np.isscalar(aux) else aux, iters=4)
                z[sel] = zs
    z, w = _newton(f_fn, z, w, t_f, True, kind, V, sign, aux, iters=3)
    return _chart_points(kind, V, sign, aux, z, w)


def sample_strip(cls: StripClass, V, n: int, seed: int, *,
                 two_sided: bool = False,
                 max_attempts: int = 4 * 10 ** 6):
    """n points of one itinerary class.

    With ``two_sided=True`` every returned point also has a valid backward
    itinerary; the backward class indices are returned alongside.
    """
    v = _vf(V)
    pts_out, back_out = [], []
    got = 0
    attempts = 0
    batch_idx = 0
    batch = max(1024, min(2 * n, 16384))
    key = STRIP_INDEX[cls.label]
    while got < n:
        if attempts >= max(max_attempts, 512 * n):
            raise SampleExhaustedError(
                f"strip {cls.label}: {got}/{n} points after {attempts} attempts")
        rng = _rng_for(seed, 100 + key, int(two_sided), batch_idx)
        cand = _deep_propose(cls, v, rng, batch, two_sided)
        attempts += batch
        batch_idx += 1
        cand = cand[np.all(np.isfinite(cand), axis=1)]
        if not len(cand):
            continue
        fwd, _ = forward_labels(cand)
        cand = cand[fwd == key]
        if not len(cand):
            continue
        if two_sided:
            bwd, _ = backward_labels(cand)
            keep = bwd >= 0
            cand, bwd = cand[keep], bwd[keep]
            if not len(cand):
                continue
            back_out.append(bwd)
        pts_out.append(cand)
        got += len(cand)
    pts = np.concatenate(pts_out)[:n]
    if two_sided:
        return pts, np.concatenate(back_out)[:n]
    return pts


@dataclass
class BaseSet:
    """Strip-intersection base points for the cone checks."""

    points: np.ndarray          # (n, 3)
    vertical: np.ndarray        # forward class index per point
    horizontal: np.ndarray      # backward class index per point

    def in_vertical(self, cls: StripClass) -> np.ndarray:
        return self.points[self.vertical == STRIP_INDEX[cls.label]]

    def in_horizontal(self, cls: StripClass) -> np.ndarray:
        return self.points[self.horizontal == STRIP_INDEX[cls.label]]


def sample_bases(V, n_per_class: int, seed: int) -> BaseSet:
    """Base points lying in both a vertical and a horizontal strip.

    Collects ``n_per_class`` points for every vertical class; the horizontal
    marginals fill in because every horizontal strip crosses every vertical
    strip over its region.
    """
    pts, vlab, hlab = [], [], []
    for cls in STRIP_CLASSES:
        p, b = sample_strip(cls, V, n_per_class, seed, two_sided=True)
        pts.append(p)
        vlab.append(np.full(len(p), STRIP_INDEX[cls.label]))
        hlab.append(b)
    return BaseSet(np.concatenate(pts), np.concatenate(vlab), np.concatenate(hlab))
