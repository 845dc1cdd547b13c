"""Spectrum approximation through the boundedness criterion.

An energy E belongs to the spectrum iff the trace-map orbit of
(E - V, E, 2) keeps its second coordinate bounded.  Orbits that violate the
two-consecutive-large-entries condition grow at least geometrically and never
come back, so truncating the iteration gives nested outer approximations of
the spectrum by finite unions of intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyWindowError, InsufficientScalesError
from .tracecore import _vf

MERGE_TOL = 1e-12


@dataclass(frozen=True)
class IntervalSet:
    """Finite ordered union of disjoint closed intervals on the energy axis."""

    intervals: tuple[tuple[float, float], ...]

    @classmethod
    def from_pairs(cls, pairs) -> "IntervalSet":
        cleaned = []
        for lo, hi in pairs:
            if hi < lo:
                raise ValueError(f"interval ({lo}, {hi}) has hi < lo")
            cleaned.append((float(lo), float(hi)))
        cleaned.sort()
        merged: list[list[float]] = []
        for lo, hi in cleaned:
            if merged and lo <= merged[-1][1] + MERGE_TOL:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        return cls(tuple((lo, hi) for lo, hi in merged))

    def __len__(self) -> int:
        return len(self.intervals)

    @property
    def is_empty(self) -> bool:
        return len(self.intervals) == 0

    def measure(self) -> float:
        return float(sum(hi - lo for lo, hi in self.intervals))

    def hull(self) -> tuple[float, float]:
        if self.is_empty:
            raise EmptyWindowError("empty interval set has no hull")
        return (self.intervals[0][0], self.intervals[-1][1])

    def contains_point(self, x: float, tol: float = 0.0) -> bool:
        return any(lo - tol <= x <= hi + tol for lo, hi in self.intervals)

    def intersect_window(self, lo: float, hi: float) -> "IntervalSet":
        out = []
        for a, b in self.intervals:
            a2, b2 = max(a, lo), min(b, hi)
            if a2 <= b2:
                out.append((a2, b2))
        return IntervalSet(tuple(out))

    def covers(self, other: "IntervalSet", tol: float = 1e-9) -> bool:
        """Whether every interval of ``other`` sits inside one of ours."""
        for lo, hi in other.intervals:
            if not any(a - tol <= lo and hi <= b + tol for a, b in self.intervals):
                return False
        return True

    def as_arrays(self):
        arr = np.array(self.intervals, dtype=float).reshape(-1, 2)
        return arr[:, 0], arr[:, 1]


def lebesgue_measure(s: IntervalSet) -> float:
    """Total length of the union."""
    return s.measure()


# -- escape iteration ----------------------------------------------------------

@dataclass(frozen=True)
class EscapeRecord:
    E: float
    escaped: bool
    step: int | None
    halting_pair: str | None      # "uv" (u_n, v_n) or "vv" (v_n, v_{n-1})


def escape_time(E: float, V, n_max: int, delta: float = 0.0) -> EscapeRecord:
    """Iterate the trace recursion until two consecutive triple entries exceed
    2 + delta in modulus (strictly), or n_max steps elapse."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    v = _vf(V)
    bound = 2.0 + delta
    u, w, wp = E - v, E, 2.0
    for step in range(n_max + 1):
        if abs(u) > bound and abs(w) > bound:
            return EscapeRecord(E, True, step, "uv")
        if abs(w) > bound and abs(wp) > bound:
            return EscapeRecord(E, True, step, "vv")
        if step == n_max:
            break
        u, w, wp = u * (w * w - 1.0) - wp * w, u * w - wp, w
        if not (math.isfinite(u) and math.isfinite(w)):
            return EscapeRecord(E, True, step + 1, "uv")
    return EscapeRecord(E, False, None, None)


def escape_steps_grid(es: np.ndarray, V, n_max: int, delta: float = 0.0) -> np.ndarray:
    """Vectorized escape step per energy; -1 where no escape within n_max."""
    v = _vf(V)
    bound = 2.0 + delta
    u = es - v
    w = es.astype(float).copy()
    wp = np.full_like(w, 2.0)
    out = np.full(es.shape, -1, dtype=np.int64)
    active = np.ones(es.shape, dtype=bool)
    for step in range(n_max + 1):
        with np.errstate(invalid="ignore"):
            esc = active & (((np.abs(u) > bound) & (np.abs(w) > bound))
                            | ((np.abs(w) > bound) & (np.abs(wp) > bound))
                            | ~(np.isfinite(u) & np.isfinite(w)))
        out[esc] = step
        active &= ~esc
        if step == n_max or not np.any(active):
            break
        ua, wa, wpa = u[active], w[active], wp[active]
        with np.errstate(over="ignore", invalid="ignore"):
            u_next = ua * (wa * wa - 1.0) - wpa * wa
            w_next = ua * wa - wpa
        u[active], w[active], wp[active] = u_next, w_next, wa
    return out


def energy_hull(V) -> tuple[float, float]:
    """Energies outside [-2 - V, 2 + V] escape immediately."""
    v = _vf(V)
    return (-2.0 - v, 2.0 + v)


def _float_floor_arr(lo, hi):
    """Width below which a band cannot be refined further in doubles."""
    return 32.0 * np.maximum(np.spacing(np.abs(lo)), np.spacing(np.abs(hi)))


def _runs_from_grid(grid: np.ndarray, kept: np.ndarray):
    """Run brackets (outer_lo, inner_lo, inner_hi, outer_hi) per band row.

    ``grid`` and ``kept`` have shape (bands, nodes); the outer values are the
    neighbouring escaped nodes (or the band edge at the ends).
    """
    b, k = kept.shape
    padded = np.zeros((b, k + 2), dtype=bool)
    padded[:, 1:-1] = kept
    d = np.diff(padded.astype(np.int8), axis=1)
    bi, si = np.nonzero(d == 1)          # run starts (node index si)
    bj, ej = np.nonzero(d == -1)         # run ends exclusive
    ej = ej - 1
    inner_lo = grid[bi, si]
    inner_hi = grid[bj, ej]
    outer_lo = grid[bi, np.maximum(si - 1, 0)]
    outer_hi = grid[bj, np.minimum(ej + 1, k - 1)]
    return outer_lo, inner_lo, inner_hi, outer_hi


def _bisect_boundaries(e_in, e_out, V, level, delta, targets, rounds=70):
    """Vectorized survive/escape boundary bisection.

    Moves each bracket toward the escaped side; returns the escaped-side end.
    """
    a = e_in.astype(float).copy()
    b = e_out.astype(float).copy()
    for _ in range(rounds):
        todo = np.abs(b - a) > targets
        if not np.any(todo):
            break
        mid = 0.5 * (a[todo] + b[todo])
        esc = escape_steps_grid(mid, V, level, delta) >= 0
        bt = b[todo]
        at = a[todo]
        bt[esc] = mid[esc]
        at[~esc] = mid[~esc]
        b[todo] = bt
        a[todo] = at
    return b


def survivor_band_levels(V, levels, resolution: float, *,
                         delta: float = 0.0,
                         nodes_per_band: int | None = None,
                         max_bands: int = 300_000) -> dict[int, IntervalSet]:
    """Hierarchically tracked non-escaped bands at each requested depth.

    Level n holds the energies whose first n trace steps never show two
    consecutive entries above 2 + delta.  Bands contract by roughly a factor
    of the coupling per level, far below any fixed grid, so each band is
    re-scanned with its own local grid level by level and its edges are
    sharpened by bisection.  A band narrower than the double-precision floor
    is frozen and carried along unchanged (its interior can no longer be
    resolved); everything returned is an outer enclosure of the true
    non-escaped set, so the levels are nested.
    """
    v = _vf(V)
    levels = sorted(set(int(n) for n in levels))
    if levels[0] < 1:
        raise ValueError("levels must be >= 1")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    n_max = levels[-1]
    lo, hi = energy_hull(v)
    k_nodes = nodes_per_band or max(48, 8 * int(math.ceil(v)))
    out: dict[int, IntervalSet] = {}

    def targets_for(a, b):
        return np.maximum(_float_floor_arr(a, b) / 8.0,
                          np.minimum(resolution / 100.0, np.abs(b - a) * 1e-3))

    # base level from a full-hull scan
    n0 = min(2, n_max)
    es = np.linspace(lo, hi, int(math.ceil((hi - lo) / resolution)) + 1)
    kept = (escape_steps_grid(es, v, n0, delta) < 0)[None, :]
    o_lo, i_lo, i_hi, o_hi = _runs_from_grid(es[None, :], kept)
    lo_ref = _bisect_boundaries(i_lo, o_lo, v, n0, delta, targets_for(o_lo, i_lo))
    hi_ref = _bisect_boundaries(i_hi, o_hi, v, n0, delta, targets_for(i_hi, o_hi))
    active = np.stack([np.minimum(lo_ref, i_lo), np.maximum(hi_ref, i_hi)], axis=1)
    frozen = np.empty((0, 2))
    if n0 in levels:
        out[n0] = IntervalSet.from_pairs([*map(tuple, active), *map(tuple, frozen)])

    t_nodes = np.linspace(0.0, 1.0, k_nodes)
    for level in range(n0 + 1, n_max + 1):
        if len(active) == 0:
            if level in levels:
                out[level] = IntervalSet.from_pairs(map(tuple, frozen))
            continue
        width = active[:, 1] - active[:, 0]
        freeze = width <= _float_floor_arr(active[:, 0], active[:, 1])
        frozen = np.concatenate([frozen, active[freeze]])
        work = active[~freeze]
        children = []
        for dens in (1, 8):
            if len(work) == 0:
                break
            if (len(work) + len(frozen)) > max_bands:
                raise RuntimeError(
                    f"band count exceeded {max_bands} at level {level}; "
                    "reduce n_max or raise max_bands")
            nodes = t_nodes if dens == 1 else np.linspace(0.0, 1.0, dens * k_nodes)
            grid = work[:, 0:1] + nodes[None, :] * (work[:, 1:2] - work[:, 0:1])
            kept = np.empty(grid.shape, dtype=bool)
            flat = grid.ravel()
            chunk = 4_000_000
            for i in range(0, len(flat), chunk):
                kept.ravel()[i:i + chunk] = (
                    escape_steps_grid(flat[i:i + chunk], v, level, delta) < 0)
            hit = np.any(kept, axis=1)
            if np.any(hit):
                o_lo, i_lo, i_hi, o_hi = _runs_from_grid(grid[hit], kept[hit])
                lo_ref = _bisect_boundaries(i_lo, o_lo, v, level, delta,
                                            targets_for(o_lo, i_lo))
                hi_ref = _bisect_boundaries(i_hi, o_hi, v, level, delta,
                                            targets_for(i_hi, o_hi))
                children.append(np.stack([np.minimum(lo_ref, i_lo),
                                          np.maximum(hi_ref, i_hi)], axis=1))
            work = work[~hit]   # retry once at higher density, then drop
        active = (np.concatenate(children) if children else np.empty((0, 2)))
        if level in levels:
            out[level] = IntervalSet.from_pairs(
                [*map(tuple, active), *map(tuple, frozen)])
    return out


def spectrum_approx(V, n_max: int, resolution: float, *,
                    delta: float = 0.0) -> IntervalSet:
    """Outer approximation of the spectrum at truncation depth n_max.

    Adaptive band tracking (see :func:`survivor_band_levels`); increasing
    n_max only removes energies, giving nested outer approximations.
    """
    return survivor_band_levels(V, [n_max], resolution, delta=delta)[n_max]


def trace_entry_values(es: np.ndarray, V, m: int):
    """(v_m, v_{m+1}) of the trace recursion on an energy grid."""
    v = _vf(V)
    u = es - v
    w = es.astype(float).copy()
    wp = np.full_like(w, 2.0)
    for _ in range(m):
        with np.errstate(over="ignore", invalid="ignore"):
            u, w, wp = u * (w * w - 1.0) - wp * w, u * w - wp, w
    with np.errstate(over="ignore", invalid="ignore"):
        w_next = u * w - wp
    return w, w_next


def pseudo_spectrum_bands(V, m: int, resolution: float) -> IntervalSet:
    """Energies where the m-th trace entry stays within [-2, 2].

    Bands are hunted inside the shallower non-escaped enclosures (an orbit
    that has escaped cannot bring its entries back below 2), then located by
    sign-change bracketing of |v_m| - 2 plus bisection.
    """
    if m > 8:
        raise ValueError("band level capped at m <= 8 (polynomial growth)")
    v = _vf(V)
    lo, hi = energy_hull(v)

    def inside_vals(es: np.ndarray) -> np.ndarray:
        vals, _ = trace_entry_values(es, v, m)
        with np.errstate(invalid="ignore"):
            ok = np.abs(vals) <= 2.0
        return ok & np.isfinite(vals)

    if m <= 2:
        host = np.array([[lo, hi]])
    else:
        host_level = m - 2
        hs = survivor_band_levels(v, [host_level], resolution)[host_level]
        arr = np.array(hs.intervals, dtype=float).reshape(-1, 2)
        # widen each host band; band edges of level m hug the outside
        w = arr[:, 1] - arr[:, 0]
        host = np.stack([arr[:, 0] - w, arr[:, 1] + w], axis=1)

    def bisect_band_edges(e_in, e_out, targets, rounds=70):
        a = e_in.astype(float).copy()
        b = e_out.astype(float).copy()
        for _ in range(rounds):
            todo = np.abs(b - a) > targets
            if not np.any(todo):
                break
            mid = 0.5 * (a[todo] + b[todo])
            outside = ~inside_vals(mid)
            bt, at = b[todo], a[todo]
            bt[outside] = mid[outside]
            at[~outside] = mid[~outside]
            b[todo], a[todo] = bt, at
        return b

    intervals = []
    k = max(64, 16 * int(math.ceil(v)))
    if m <= 2:
        k = max(k, int(math.ceil((hi - lo) / resolution)) + 1)
    t_nodes = np.linspace(0.0, 1.0, k)
    grid = host[:, 0:1] + t_nodes[None, :] * (host[:, 1:2] - host[:, 0:1])
    kept = inside_vals(grid.ravel()).reshape(grid.shape)
    hit = np.any(kept, axis=1)
    if np.any(hit):
        o_lo, i_lo, i_hi, o_hi = _runs_from_grid(grid[hit], kept[hit])
        targets = np.maximum(_float_floor_arr(o_lo, o_hi) / 8.0,
                             np.minimum(resolution / 100.0,
                                        np.abs(o_hi - o_lo) * 1e-3))
        lo_ref = bisect_band_edges(i_lo, o_lo, targets)
        hi_ref = bisect_band_edges(i_hi, o_hi, targets)
        for a, b in zip(np.minimum(lo_ref, i_lo), np.maximum(hi_ref, i_hi)):
            intervals.append((float(a), float(b)))
    return IntervalSet.from_pairs(intervals)


# -- dimension estimation --------------------------------------------------------

def box_count(s: IntervalSet, eps: float) -> int:
    """Number of eps-grid boxes meeting the set (exact, by index ranges)."""
    total = 0
    prev_hi = None
    for lo, hi in s.intervals:
        i0 = math.floor(lo / eps)
        i1 = math.floor(hi / eps)
        total += i1 - i0 + 1
        if prev_hi is not None and i0 == prev_hi:
            total -= 1
        prev_hi = i1
    return total


@dataclass(frozen=True)
class DimensionEstimate:
    estimate: float
    stderr: float
    eps: tuple[float, ...]
    counts: tuple[int, ...]


def box_dimension(s: IntervalSet, eps_min: float, eps_max: float,
                  n_scales: int = 12) -> DimensionEstimate:
    """Least-squares slope of log N(eps) against log(1/eps).

    Scales form a geometric ladder between eps_min and eps_max; the standard
    error is the usual regression slope error.
    """
    if s.is_empty:
        raise EmptyWindowError("cannot estimate dimension of an empty set")
    if not (0 < eps_min < eps_max):
        raise ValueError("need 0 < eps_min < eps_max")
    if n_scales < 4:
        raise InsufficientScalesError("need at least 4 scales")
    eps = np.geomspace(eps_min, eps_max, n_scales)
    counts = np.array([box_count(s, e) for e in eps], dtype=float)
    usable = counts >= 1
    if int(usable.sum()) < 4:
        raise InsufficientScalesError("fewer than 4 usable scales")
    x = np.log(1.0 / eps[usable])
    y = np.log(counts[usable])
    n = len(x)
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    resid = y - (ym + slope * (x - xm))
    var = float(np.sum(resid ** 2)) / max(n - 2, 1)
    stderr = math.sqrt(var / sxx)
    return DimensionEstimate(slope, stderr, tuple(float(e) for e in eps[usable]),
                             tuple(int(c) for c in counts[usable]))


def local_dimension(s: IntervalSet, E: float, eps_window: float,
                    eps_min: float, eps_max: float,
                    n_scales: int = 12) -> DimensionEstimate:
    """Box dimension of the set restricted to [E - eps_window, E + eps_window]."""
    lo, hi = s.hull()
    if not (lo <= E <= hi):
        raise ValueError(f"E={E} outside the hull [{lo}, {hi}]")
    window = s.intersect_window(E - eps_window, E + eps_window)
    if window.is_empty:
        raise EmptyWindowError(f"window around E={E} misses the set")
    return box_dimension(window, eps_min, eps_max, n_scales)


def hausdorff_distance(a: IntervalSet, b: IntervalSet) -> float:
    """Hausdorff distance between two finite unions of closed intervals."""
    if a.is_empty or b.is_empty:
        raise EmptyWindowError("Hausdorff distance needs nonempty sets")

    def directed(p: IntervalSet, q: IntervalSet) -> float:
        qlo, qhi = q.as_arrays()

        def dist_to_q(x: np.ndarray) -> np.ndarray:
            inside = (x[:, None] >= qlo[None, :]) & (x[:, None] <= qhi[None, :])
            d = np.minimum(np.abs(x[:, None] - qlo[None, :]),
                           np.abs(x[:, None] - qhi[None, :]))
            d[inside] = 0.0
            return d.min(axis=1)

        # candidate maximizers: p's endpoints plus q's gap midpoints inside p
        cands = [np.array([lo for lo, _ in p.intervals]),
                 np.array([hi for _, hi in p.intervals])]
        mids = []
        for (_, hi_prev), (lo_next, _) in zip(q.intervals[:-1], q.intervals[1:]):
            mids.append(0.5 * (hi_prev + lo_next))
        for m in mids:
            if p.contains_point(m):
                cands.append(np.array([m]))
        x = np.concatenate(cands)
        return float(dist_to_q(x).max()) if len(x) else 0.0

    return max(directed(a, b), directed(b, a))


# -- sweeps ------------------------------------------------------------------

@dataclass
class SweepRow:
    V: float
    dim: float
    stderr: float
    measure: float
    n_max: int


def default_box_scales(V, resolution: float) -> tuple[float, float]:
    """Scale window keeping eps_min at least 10x the scan resolution."""
    v = _vf(V)
    return (max(10.0 * resolution, 1e-6), (4.0 + 2.0 * v) / 8.0)


def dimension_sweep(V_list, n_max: int, resolution: float,
                    progress=None) -> list[SweepRow]:
    """Spectrum, measure and box dimension per coupling."""
    rows = []
    for v in V_list:
        v = float(v)
        if v < 4:
            raise ValueError("sweep couplings must be >= 4 (strong coupling)")
        spec = spectrum_approx(v, n_max, resolution)
        eps_min, eps_max = default_box_scales(v, resolution)
        est = box_dimension(spec, eps_min, eps_max)
        rows.append(SweepRow(v, est.estimate, est.stderr, spec.measure(), n_max))
        if progress is not None:
            progress(rows[-1])
    return rows
