"""Sixteen-symbol subshift of the return map and its numerical conjugacy.

Symbols are the return itinerary classes; the transition matrix marks which
strips' forward images cross which strips.  Admissible words are realized by
nested refinement of strip sample clouds, giving finite-precision points of
the conjugacy together with diameter certificates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InadmissibleWordError, StructuralError
from .regions import classify_arrays
from .strips import (STRIP_CLASSES, STRIP_INDEX, StripClass, backward_labels,
                     forward_labels, sample_strip)
from .surface import chart_r12, chart_r56_u1, chart_r56_v1, _rng_for
from .tracecore import _vf

N_SYMBOLS = len(STRIP_CLASSES)


@dataclass(frozen=True)
class TransitionMatrix:
    """Boolean strip-to-strip transition structure under the return map."""

    matrix: np.ndarray                    # (16, 16) bool
    labels: tuple[str, ...]
    V: float
    seed: int

    def admissible(self, word) -> bool:
        word = list(word)
        if any(not (0 <= s < N_SYMBOLS) for s in word):
            return False
        return all(self.matrix[a, b] for a, b in zip(word, word[1:]))

    def violating_pair(self, word):
        for a, b in zip(word, word[1:]):
            if not self.matrix[a, b]:
                return (a, b)
        return None

    def is_irreducible(self) -> bool:
        reach = _closure(self.matrix)
        return bool(np.all(reach & reach.T))


def _closure(m: np.ndarray) -> np.ndarray:
    reach = m.copy()
    for _ in range(int(math.ceil(math.log2(max(len(m), 2)))) + 1):
        reach = reach | (reach @ reach)
    return reach


def expected_matrix() -> np.ndarray:
    """Full-crossing structure: strip i feeds strip j iff i's target region
    is j's source region (every horizontal strip crosses every vertical strip
    over its region)."""
    m = np.zeros((N_SYMBOLS, N_SYMBOLS), dtype=bool)
    for i, ci in enumerate(STRIP_CLASSES):
        for j, cj in enumerate(STRIP_CLASSES):
            m[i, j] = ci.tgt == cj.src
    return m


def build_transition_matrix(V, samples_per_class: int, seed: int) -> TransitionMatrix:
    """Empirical strip transition matrix.

    A class-j sample lying in the forward image of class i witnesses the
    entry (i, j) from the backward side; the entry is kept only when the
    forward chain through the sample's preimage re-verifies it (the preimage
    is a class-i point whose return image is the class-j sample).
    """
    v = _vf(V)
    entries = np.zeros((N_SYMBOLS, N_SYMBOLS), dtype=bool)
    for j, cls in enumerate(STRIP_CLASSES):
        pts, back = sample_strip(cls, v, samples_per_class, seed, two_sided=True)
        _, pre = backward_labels(pts)
        for i in np.unique(back):
            sel = np.nonzero(back == i)[0][:8]
            pre_pts = pre[sel]
            pre_labels, images = forward_labels(pre_pts)
            ok = pre_labels == i
            if not np.any(ok):
                continue
            img_labels, _ = forward_labels(images[ok])
            if np.any(img_labels == j):
                entries[i, j] = True
    m = TransitionMatrix(entries, tuple(c.label for c in STRIP_CLASSES), v, seed)
    if np.any(~m.matrix.any(axis=1)):
        raise StructuralError("transition matrix has a dead symbol")
    return m


# -- codes --------------------------------------------------------------------

@dataclass(frozen=True)
class Code:
    """Finite symbol word with a marked origin index."""

    word: tuple[int, ...]
    origin: int = 0

    def __post_init__(self):
        if not (0 <= self.origin < len(self.word)):
            raise ValueError("origin must index into the word")

    def __len__(self):
        return len(self.word)


def shift(c: Code) -> Code:
    """Move the origin one symbol forward."""
    if len(c.word) < 2:
        raise ValueError("shift needs a word of length >= 2")
    return Code(c.word, min(c.origin + 1, len(c.word) - 1))


def check_admissible(word, matrix: TransitionMatrix):
    pair = matrix.violating_pair(list(word))
    if pair is not None:
        raise InadmissibleWordError(
            f"symbols {matrix.labels[pair[0]]} -> {matrix.labels[pair[1]]} "
            "are not linked by the transition matrix")


# -- itinerary verification -----------------------------------------------------

def follow_word(pts: np.ndarray, word, origin: int = 0) -> np.ndarray:
    """Mask of points whose itinerary window matches the word around origin."""
    n = len(pts)
    ok = np.ones(n, dtype=bool)
    cur = pts
    for k in range(origin, len(word)):
        labels, images = forward_labels(cur)
        step_ok = labels == word[k]
        full = np.zeros(n, dtype=bool)
        full[np.nonzero(ok)[0]] = step_ok
        ok = full
        cur = images[step_ok]
        if not np.any(ok):
            return ok
    cur = pts[ok]
    idx = np.nonzero(ok)[0]
    for k in range(origin - 1, -1, -1):
        labels, pre = backward_labels(cur)
        step_ok = labels == word[k]
        idx = idx[step_ok]
        cur = pre[step_ok]
        if not len(idx):
            break
    full = np.zeros(n, dtype=bool)
    full[idx] = True
    return full


# -- chart encoding for cloud refinement -----------------------------------------

def _encode(pts: np.ndarray):
    """(z, w) chart coordinates: w is the band entry (xy - z, or the first
    forward entry over regions 5/6 when xy - z is large)."""
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    v1 = x * y - z
    u1 = x * (y * y - 1.0) - z * y
    use_u = np.abs(v1) > 2.0
    w = np.where(use_u, u1, v1)
    return z, w, use_u, np.sign(y), np.sign(x)


def _decode(V, src_region: int, z, w, use_u, ysign, xsign):
    if src_region in (1, 2):
        sign = 1.0 if src_region == 1 else -1.0
        return chart_r12(V, z, w, sign)
    sign = 1.0 if src_region == 5 else -1.0
    out = np.empty((len(z), 3))
    a_mask = ~use_u
    if np.any(a_mask):
        out[a_mask] = chart_r56_v1(V, z[a_mask], w[a_mask], sign)
    if np.any(use_u):
        out[use_u] = chart_r56_u1(V, z[use_u], w[use_u], sign, ysign[use_u])
    return out


@dataclass
class CodedPoint:
    point: tuple[float, float, float]
    diameter: float
    word: tuple[int, ...]
    origin: int
    cloud_size: int


def _enrich(survivors, base_src: int, constraint, rng, V, *,
            n_batch: int = 256, want: int = 48, max_rounds: int = 40):
    """Grow a surviving cloud by chart-coordinate jitter around survivors.

    ``constraint`` maps an (n, 3) array to a keep-mask.  The jitter scale
    follows the cloud's own spread, so each deeper constraint zooms in.
    """
    rounds = 0
    while len(survivors) < want and rounds < max_rounds:
        rounds += 1
        z0, w0, use_u, ysign, xsign = _encode(survivors)
        spread_w = max(float(np.ptp(w0)), 1e-14)
        spread_z = max(float(np.ptp(z0)), 0.05)
        pick = rng.integers(0, len(survivors), size=n_batch)
        z = z0[pick] + rng.uniform(-1, 1, n_batch) * spread_z * 1.5
        w = w0[pick] + rng.uniform(-1, 1, n_batch) * spread_w * 2.0
        z = np.clip(z, -1.999, 1.999)
        pts = _decode(V, base_src, z, w, use_u[pick], ysign[pick], xsign[pick])
        pts = pts[np.all(np.isfinite(pts), axis=1)]
        if not len(pts):
            continue
        new = pts[constraint(pts)]
        if len(new):
            survivors = np.concatenate([survivors, new])
            if len(survivors) > 4 * n_batch:
                survivors = survivors[-4 * n_batch:]
    return survivors


def code_to_point(code: Code, V, matrix: TransitionMatrix | None = None, *,
                  seed: int = 0, n_cloud: int = 192) -> CodedPoint:
    """A point realizing the code, by nested refinement of strip clouds.

    The cloud starts in the origin strip and is culled against progressively
    longer itinerary windows, re-densified between deepenings by chart
    jitter around survivors.  The returned diameter is the surviving cloud's
    chart spread plus a resolution floor.
    """
    v = _vf(V)
    word = code.word
    if matrix is not None:
        check_admissible(word, matrix)
    base_cls = STRIP_CLASSES[word[code.origin]]
    rng = _rng_for(seed, 777, len(word), code.origin)
    two = code.origin > 0
    pts = sample_strip(base_cls, v, n_cloud, seed, two_sided=two)
    if two:
        pts = pts[0]
    survivors = pts
    # deepen forward then backward, one symbol at a time
    fwd_hi = code.origin + 1
    bwd_lo = code.origin
    while fwd_hi < len(word) or bwd_lo > 0:
        if fwd_hi < len(word):
            fwd_hi += 1
        elif bwd_lo > 0:
            bwd_lo -= 1
        window = word[bwd_lo:fwd_hi]
        origin = code.origin - bwd_lo

        def keep_fn(p, w=window, o=origin):
            return follow_word(p, w, o)

        survivors = survivors[keep_fn(survivors)]
        if len(survivors) == 0:
            # fall back on fresh strip samples constrained to the window
            fresh = sample_strip(base_cls, v, 4 * n_cloud, seed + fwd_hi,
                                 two_sided=two)
            if two:
                fresh = fresh[0]
            survivors = fresh[keep_fn(fresh)]
        if len(survivors) == 0:
            raise InadmissibleWordError(
                f"no point found realizing word {word}; it may be inadmissible")
        survivors = _enrich(survivors, base_cls.src, keep_fn, rng, v)
    z, w, _, _, _ = _encode(survivors)
    diam = float(np.ptp(w)) + 1e-13
    center = np.median(survivors, axis=0)
    rep = survivors[int(np.argmin(np.sum((survivors - center) ** 2, axis=1)))]
    return CodedPoint(tuple(rep), diam, word, code.origin, len(survivors))


def refinement_widths(word, V, *, seed: int = 0, n_cloud: int = 192):
    """Chart widths of the clouds constrained to growing prefixes of the word.

    Successive ratios measure the per-symbol strip contraction.
    """
    widths = []
    for k in range(1, len(word) + 1):
        cp = code_to_point(Code(tuple(word[:k]), 0), V, seed=seed,
                           n_cloud=n_cloud)
        widths.append(cp.diameter)
    return widths


# -- periodic orbits -------------------------------------------------------------

def _apply_return(pts: np.ndarray, times: int):
    cur = pts
    for _ in range(times):
        _, cur = forward_labels(cur)
    return cur


def periodic_orbit_from_cycle(cycle, V, matrix: TransitionMatrix | None = None,
                              *, seed: int = 0,
                              repetitions: int = 3) -> tuple[tuple, float]:
    """Point approximately fixed by the return map iterated over the cycle.

    The cycle must be admissible including wrap-around.  The point comes from
    realizing the repeated word, then polishing with a two-dimensional Newton
    iteration on the chart coordinates of the cycle return map.
    """
    v = _vf(V)
    cycle = tuple(int(s) for s in cycle)
    if matrix is not None:
        check_admissible(cycle + cycle[:1], matrix)
    k = len(cycle)
    n_rep = max(repetitions, int(math.ceil(14 / k)))
    word = cycle * n_rep
    origin = (n_rep // 2) * k
    cp = code_to_point(Code(word, origin), v, seed=seed)
    base_cls = STRIP_CLASSES[cycle[0] if origin % k == 0 else word[origin]]

    def encode1(p):
        z, w, use_u, ysign, xsign = _encode(p.reshape(1, 3))
        return np.array([z[0], w[0]]), use_u, ysign, xsign

    def decode1(c, use_u, ysign, xsign):
        return _decode(v, base_cls.src, np.array([c[0]]), np.array([c[1]]),
                       use_u, ysign, xsign)[0]

    p0 = np.array(cp.point)
    c, use_u, ysign, xsign = encode1(p0)

    def fmap(cc):
        p = decode1(cc, use_u, ysign, xsign)
        img = _apply_return(p.reshape(1, 3), k)[0]
        if not np.all(np.isfinite(img)):
            return None
        zz, ww, _, _, _ = _encode(img.reshape(1, 3))
        return np.array([zz[0], ww[0]])

    for _ in range(40):
        f0 = fmap(c)
        if f0 is None:
            break
        r = f0 - c
        if np.max(np.abs(r)) < 1e-13:
            break
        h = 1e-8
        jac = np.zeros((2, 2))
        ok = True
        for col in range(2):
            cp_ = c.copy()
            cp_[col] += h
            f1 = fmap(cp_)
            if f1 is None:
                ok = False
                break
            jac[:, col] = (f1 - f0) / h
        if not ok:
            break
        try:
            step = np.linalg.solve(jac - np.eye(2), -r)
        except np.linalg.LinAlgError:
            break
        c = c + np.clip(step, -0.1, 0.1)
    point = decode1(c, use_u, ysign, xsign)
    img = _apply_return(point.reshape(1, 3), k)[0]
    residual = (float(np.max(np.abs(img - point)))
                if np.all(np.isfinite(img)) else math.inf)
    return tuple(point), residual


# -- entropy and counting ---------------------------------------------------------

def topological_entropy(matrix: TransitionMatrix, tol: float = 1e-10) -> float:
    """Natural log of the spectral radius, by power iteration.

    On a reducible matrix a warning is issued and the largest strongly
    connected component is used.
    """
    m = matrix.matrix.astype(float)
    if not matrix.is_irreducible():
        warnings.warn("transition matrix is reducible; "
                      "using its largest strongly connected component")
        reach = _closure(matrix.matrix)
        mutual = reach & reach.T
        best = max(range(len(m)),
                   key=lambda i: int(mutual[i].sum()))
        comp = np.nonzero(mutual[best])[0]
        m = m[np.ix_(comp, comp)]
    vec = np.ones(len(m))
    lam = 0.0
    for _ in range(10_000):
        nxt = m @ vec
        nrm = np.linalg.norm(nxt)
        if nrm == 0:
            return -math.inf
        nxt /= nrm
        lam_new = float(nxt @ (m @ nxt))
        if abs(lam_new - lam) < tol:
            lam = lam_new
            break
        vec, lam = nxt, lam_new
    return math.log(lam)


def word_count(matrix: TransitionMatrix, n: int) -> int:
    """Exact number of admissible words of length n (arbitrary precision)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    size = len(matrix.matrix)
    if n == 1:
        return size
    m = [[int(x) for x in row] for row in matrix.matrix]

    def matmul(a, b):
        return [[sum(a[i][k] * b[k][j] for k in range(size))
                 for j in range(size)] for i in range(size)]

    result = None
    base = m
    e = n - 1
    while e:
        if e & 1:
            result = base if result is None else matmul(result, base)
        base = matmul(base, base)
        e >>= 1
    return sum(sum(row) for row in result)


def word_count_growth(matrix: TransitionMatrix, n_lo: int = 20,
                      n_hi: int = 30) -> float:
    """Growth rate of log word counts over a tail window (regression slope)."""
    ns = np.arange(n_lo, n_hi + 1)
    logs = np.array([math.log(word_count(matrix, int(n))) for n in ns])
    return float(np.polyfit(ns, logs, 1)[0])
