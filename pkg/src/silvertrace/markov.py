"""Partition-level dynamics: transition graph, return map, census, boundaries.

The ten-region classification (see :mod:`silvertrace.regions`) induces a
directed transition structure under the trace map.  This module samples it
empirically, builds the first-return map to the base regions, enumerates the
sixteen return itineraries, and evaluates the strip boundary-curve
inequalities at the couplings where the construction is claimed to hold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonReturningError, StructuralError
from .regions import (BASE_REGIONS, CATALOG, classify_arrays, classify_region,
                      coord_region)
from .strips import (STRIP_CLASSES, STRIP_INDEX, forward_labels, sample_strip)
from .surface import sample_region_array, surface_root, _rng_for
from .tracecore import (Point3, _vf, trace_map, trace_map_arr, rho)


# -- empirical transition graph ----------------------------------------------

@dataclass
class TransitionGraphResult:
    V: float
    n_per_region: int
    seed: int
    matrix: np.ndarray            # (10, 10) bool, rows = source region - 1
    counts: np.ndarray            # (10, 10) int
    left_partition: np.ndarray    # per-region count of images outside all regions

    def edges(self) -> dict[int, tuple[int, ...]]:
        return {i + 1: tuple(np.nonzero(self.matrix[i])[0] + 1) for i in range(10)}

    def is_subgraph_of_catalog(self) -> bool:
        for src, targets in self.edges().items():
            if not set(targets) <= set(CATALOG[src]):
                return False
        return True

    def excluded_transition_counts(self) -> dict[str, int]:
        """Observed counts for the transitions the construction rules out."""
        c = self.counts
        return {
            "3->not 2": int(c[2].sum() - c[2, 1]),
            "4->not 1": int(c[3].sum() - c[3, 0]),
            "5->5": int(c[4, 4]),
            "6->6": int(c[5, 5]),
            "7->2": int(c[6, 1]),
            "8->1": int(c[7, 0]),
            "9->1": int(c[8, 0]),
            "10->2": int(c[9, 1]),
            "7->5": int(c[6, 4]),
            "8->5": int(c[7, 4]),
            "9->6": int(c[8, 5]),
            "10->6": int(c[9, 5]),
        }


def transition_graph_empirical(V, n_per_region: int, seed: int) -> TransitionGraphResult:
    """Sample each region, map forward once, classify the images."""
    v = _vf(V)
    counts = np.zeros((10, 10), dtype=np.int64)
    left = np.zeros(10, dtype=np.int64)
    for region in range(1, 11):
        pts = sample_region_array(region, v, n_per_region, seed)
        img = trace_map_arr(pts)
        ids, _ = classify_arrays(img[:, 0], img[:, 1], img[:, 2])
        left[region - 1] = int(np.sum(ids == 0))
        for tgt in range(1, 11):
            counts[region - 1, tgt - 1] = int(np.sum(ids == tgt))
    return TransitionGraphResult(v, n_per_region, seed, counts > 0, counts, left)


# -- first-return map ---------------------------------------------------------

@dataclass(frozen=True)
class ReturnResult:
    point: Point3
    intermediate: int | None
    steps: int


def return_map_phi(p, max_steps: int = 4) -> ReturnResult:
    """First return of the trace map to the base regions.

    Takes one step from regions 5/6 and two from regions 1/2 (through one
    intermediate region); raises NonReturningError when the orbit leaves the
    partition before coming back.
    """
    start = classify_region(p)
    if start not in BASE_REGIONS:
        raise ValueError(f"return map is defined on regions {BASE_REGIONS}, "
                         f"got region {start}")
    cur = Point3(*p)
    intermediate = None
    for step in range(1, max_steps + 1):
        cur = trace_map(cur)
        region = classify_region(cur)
        if region is None:
            raise NonReturningError(
                f"orbit left the partition after step {step}")
        if region in BASE_REGIONS:
            return ReturnResult(cur, intermediate, step)
        if intermediate is None:
            intermediate = region
    raise NonReturningError(f"no return within {max_steps} steps")


def projection_pi_tilde(p) -> tuple[float, float]:
    """Chart coordinates on the base regions: (x, z) over 1/2, (y, z) over 5/6."""
    region = coord_region(p)
    x, y, z = p
    if region in (1, 2):
        return (x, z)
    if region in (5, 6):
        return (y, z)
    raise ValueError("point is not over a base region")


def strip_diameter(u_left, u_right) -> float:
    """Max boundary separation of a strip given both boundary curves' chart
    first-coordinates on a common grid."""
    ul = np.asarray(u_left, dtype=float)
    ur = np.asarray(u_right, dtype=float)
    if ul.shape != ur.shape:
        raise ValueError("boundary curves must be sampled on a common grid")
    return float(np.max(np.abs(ur - ul)))


# -- strip census --------------------------------------------------------------

@dataclass
class CensusResult:
    V: float
    seed: int
    n_samples: int
    counts: dict[str, int]
    representatives: dict[str, tuple[float, float, float]]

    @property
    def size(self) -> int:
        return len(self.counts)

    def require_complete(self):
        if self.size != len(STRIP_CLASSES):
            raise StructuralError(
                f"census found {self.size} itinerary classes, "
                f"expected {len(STRIP_CLASSES)}")


def strip_census(V, n_samples: int, seed: int) -> CensusResult:
    """Enumerate return itineraries from base-region samples.

    ``n_samples`` proposals are drawn per source region; itineraries are the
    (source, intermediate, target) labels of successful first returns.  The
    targeted per-class samplers then confirm every class is populated.
    """
    v = _vf(V)
    counts: dict[str, int] = {}
    reps: dict[str, tuple[float, float, float]] = {}
    for region in BASE_REGIONS:
        pts = sample_region_array(region, v, n_samples, seed)
        labels, _ = forward_labels(pts)
        for idx in np.unique(labels[labels >= 0]):
            cls = STRIP_CLASSES[idx]
            sel = labels == idx
            counts[cls.label] = counts.get(cls.label, 0) + int(np.sum(sel))
            if cls.label not in reps:
                reps[cls.label] = tuple(pts[np.nonzero(sel)[0][0]])
    # top up any class the broad scan missed so representatives always exist
    for cls in STRIP_CLASSES:
        if cls.label not in counts:
            extra = sample_strip(cls, v, 8, seed)
            counts[cls.label] = len(extra)
            reps[cls.label] = tuple(extra[0])
    return CensusResult(v, seed, n_samples, counts, reps)


def rho_strip_identities(V, n: int, seed: int) -> dict[str, dict]:
    """Check the coordinate-rotation identities between horizontal and
    vertical strips: rho maps the forward images of (5,2), (6,2), (5,1), (6,1)
    onto the vertical strips (6,1), (6,2), (5,1), (5,2) respectively.

    Membership is verified pointwise at three levels: the rotated point
    classifies into the target strip's source region, one forward step lands
    in the target region's coordinate class, and the rotated point sits in
    the target strip's chart band (the narrow second-coordinate range spanned
    by its census samples).  The deeper itinerary slots are not constrained
    by the rotation, so full itinerary labels are not expected to match.
    """
    pairs = {"5-2": "6-1", "6-2": "6-2", "5-1": "5-1", "6-1": "5-2"}
    out = {}
    for src_label, expect in pairs.items():
        cls = STRIP_CLASSES[STRIP_INDEX[src_label]]
        tgt = STRIP_CLASSES[STRIP_INDEX[expect]]
        pts = sample_strip(cls, V, n, seed)
        _, images = forward_labels(pts)
        ok = np.all(np.isfinite(images), axis=1)
        rot = images[ok][:, [1, 2, 0]]          # rho(x, y, z) = (y, z, x)
        ids, _ = classify_arrays(rot[:, 0], rot[:, 1], rot[:, 2])
        in_src = ids == tgt.src
        step = trace_map_arr(rot)
        step_region = np.array([coord_region(row) or 0 for row in step])
        in_tgt = step_region == tgt.tgt
        # chart band of the target strip from its own samples (thin direction)
        ref = sample_strip(tgt, V, max(64, n // 4), seed + 1)
        band_lo, band_hi = float(ref[:, 1].min()), float(ref[:, 1].max())
        margin = 0.2 * (band_hi - band_lo) + 2.0 / float(V)
        in_band = (rot[:, 1] >= band_lo - margin) & (rot[:, 1] <= band_hi + margin)
        good = in_src & in_tgt & in_band
        out[src_label] = {
            "expected": expect,
            "n": int(np.sum(ok)),
            "matched": int(np.sum(good)),
            "pass": bool(np.all(good)) and len(rot) > 0,
        }
    return out


# -- strip boundary curves ------------------------------------------------------

def _left_boundary_curve(E, V):
    """Two inverse steps applied to the left edge {(-2, -E-V, E)} of region 2."""
    y = (-E - V) * (E * E - 1.0) + 2.0 * E
    x = y * E + E * (E + V) - 2.0
    z = y * x - E
    return x, y, z


def _right_boundary_curve(E, V):
    """Two inverse steps applied to the right edge {(2, E-V, E)} of region 2."""
    y = (E - V) * (E * E - 1.0) - 2.0 * E
    x = y * E - E * (E - V) + 2.0
    z = y * x - E
    return x, y, z


@dataclass
class BoundaryCheck:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)


@dataclass
class BoundaryReport:
    V: float
    checks: list[BoundaryCheck]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _slope(xs, zs):
    dx = np.diff(xs)
    dz = np.diff(zs)
    good = np.abs(dx) > 0
    return dz[good] / dx[good]


def strip_boundary_checks(V) -> BoundaryReport:
    """Evaluate the boundary-curve inequalities of the vertical strip over
    region 1 with target region 2, and of its image horizontal strip.

    The vertical-strip boundary curves are the two-step preimages of the
    x = +-2 edges of region 2; the horizontal-strip boundary is the two-step
    image of the z = 2 edge of region 1.
    """
    v = _vf(V)
    if v < 10:
        raise ValueError("boundary checks require V >= 10")
    checks = []

    # left boundary: endpoint boxes and the height window between them
    e1, e2 = 1.0 / (2 * v), 3.0 / (2 * v)
    x1, y1, z1 = _left_boundary_curve(e1, v)
    x2, y2, z2 = _left_boundary_curve(e2, v)
    checks.append(BoundaryCheck(
        "left endpoints", (-2 <= x1 <= 0 and z1 <= -2) and (0 <= x2 <= 2 and z2 >= 2),
        {"at_lo": (x1, z1), "at_hi": (x2, z2)}))
    es = np.linspace(e1, e2, 401)
    xl, yl, zl = _left_boundary_curve(es, v)
    checks.append(BoundaryCheck(
        "left height window", bool(np.all((yl > v - 2) & (yl < v + 2))),
        {"y_min": float(yl.min()), "y_max": float(yl.max())}))
    sl = _slope(xl, zl)
    checks.append(BoundaryCheck(
        "left slope dz/dx > 1", bool(np.all(sl > 1.0)),
        {"min_slope": float(sl.min())}))

    # right boundary: mirrored parameter window
    e1r, e2r = -3.0 / (2 * v), -1.0 / (2 * v)
    x1r, y1r, z1r = _right_boundary_curve(e1r, v)
    x2r, y2r, z2r = _right_boundary_curve(e2r, v)
    checks.append(BoundaryCheck(
        "right endpoints",
        (-2 <= x1r <= 0 and z1r <= -2) and (0 <= x2r <= 2 and z2r >= 2),
        {"at_lo": (x1r, z1r), "at_hi": (x2r, z2r)}))
    esr = np.linspace(e1r, e2r, 401)
    xr, yr, zr = _right_boundary_curve(esr, v)
    checks.append(BoundaryCheck(
        "right height window", bool(np.all((yr > v - 2) & (yr < v + 2))),
        {"y_min": float(yr.min()), "y_max": float(yr.max())}))
    sr = _slope(xr, zr)
    checks.append(BoundaryCheck(
        "right slope dz/dx > 1", bool(np.all(sr > 1.0)),
        {"min_slope": float(sr.min())}))

    # horizontal-strip boundary: forward image of the z = 2 edge of region 1
    def edge_image(es):
        es = np.atleast_1d(np.asarray(es, dtype=float))
        y_edge = surface_root(es, np.full_like(es, 2.0), 1.0, v)
        edge = np.stack([es, y_edge, np.full_like(es, 2.0)], axis=1)
        return trace_map_arr(trace_map_arr(edge))

    es_h = np.linspace(1e-4, 4.0 / v, 4001)
    img = edge_image(es_h)
    xh, yh, zh = img[:, 0], img[:, 1], img[:, 2]

    def crossing(target):
        # first sign change of (image height - target), refined by bisection
        g = zh - target
        idx = np.nonzero(np.diff(np.sign(g)) != 0)[0]
        if len(idx) == 0:
            return None
        lo, hi = es_h[idx[0]], es_h[idx[0] + 1]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            gm = edge_image(mid)[0, 2] - target
            if gm == 0:
                lo = hi = mid
                break
            if (edge_image(lo)[0, 2] - target) * gm < 0:
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    tol_win = 2.0 / v
    e_up = crossing(tol_win)
    e_dn = crossing(-tol_win)
    if e_up is None or e_dn is None:
        checks.append(BoundaryCheck("horizontal endpoints", False,
                                    {"reason": "no height crossing found"}))
        return BoundaryReport(v, checks)
    p_up = edge_image(e_up)[0]
    p_dn = edge_image(e_dn)[0]
    checks.append(BoundaryCheck(
        "horizontal endpoints",
        bool(p_up[0] <= -2 and p_dn[0] >= 2
             and 0 <= e_up <= 3.0 / v and 0 <= e_dn <= 3.0 / v),
        {"x_at_upper": float(p_up[0]), "x_at_lower": float(p_dn[0]),
         "E1": float(e_up), "E2": float(e_dn)}))
    lo, hi = sorted((e_up, e_dn))
    es_w = np.linspace(lo, hi, 801)
    win = edge_image(es_w)
    yw = win[:, 1]
    checks.append(BoundaryCheck(
        "horizontal height window",
        bool(np.all((yw > -v - 2) & (yw < -v + 2))),
        {"y_min": float(yw.min()), "y_max": float(yw.max())}))
    sh = _slope(win[:, 2], win[:, 0])
    checks.append(BoundaryCheck(
        "horizontal slope dx/dz < -V", bool(np.all(sh < -v)),
        {"max_slope": float(sh.max())}))

    return BoundaryReport(v, checks)
