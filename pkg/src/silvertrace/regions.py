"""Ten-region classification of surface points and the transition catalog.

Points are classified by which of the closed interval classes

    L- = (-inf, -2],   s = [-2, 2],   L+ = [2, inf),   * = R

the six leading entries (u1, u0, u-1; v1, v0, v-1) of their table fall into,
combined with the adjacency property that no two consecutive entries of any
of the three triples (u_n, v_n, v_{n-1}) both exceed 2 in modulus.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .tracecore import table_w_arrays

CLASS_BOUND = 2.0
BOUNDARY_TOL = 1e-9

LM, S, LP, ANY = "L-", "s", "L+", "*"

#: Region patterns in slot order (u1, u0, u-1, v1, v0, v-1).  The point's own
#: coordinates occupy the slots (u0, v0, v-1) = (x, y, z).
REGION_PATTERNS: dict[int, tuple[str, str, str, str, str, str]] = {
    1:  (ANY, S, ANY, S, LP, S),
    2:  (ANY, S, ANY, S, LM, S),
    3:  (S, S, S, LM, S, LP),
    4:  (S, S, S, LP, S, LM),
    5:  (ANY, LP, ANY, ANY, S, S),
    6:  (ANY, LM, ANY, ANY, S, S),
    7:  (ANY, LP, S, ANY, S, LP),
    8:  (ANY, LP, S, ANY, S, LM),
    9:  (ANY, LM, S, ANY, S, LM),
    10: (ANY, LM, S, ANY, S, LP),
}

#: Coordinate classes (x, y, z) per region, implied by the pattern slots
#: (u0, v0, v-1).
REGION_COORD_CLASSES = {
    r: (p[1], p[4], p[5]) for r, p in REGION_PATTERNS.items()
}


def _in_class(value, cls: str):
    if cls == ANY:
        return np.ones_like(np.asarray(value), dtype=bool) if np.ndim(value) else True
    if cls == S:
        return np.abs(value) <= CLASS_BOUND
    if cls == LP:
        return value >= CLASS_BOUND
    if cls == LM:
        return value <= -CLASS_BOUND
    raise ValueError(f"unknown interval class {cls!r}")


def property_p_arrays(x, y, z):
    """Adjacency property for arrays of coordinates."""
    u1, u0, um1, v1, v0, vm1, vm2 = table_w_arrays(x, y, z)
    b = CLASS_BOUND

    def big(a):
        return np.abs(a) > b

    ok = ~(big(u1) & big(v1))
    ok &= ~(big(v1) & big(v0))
    ok &= ~(big(u0) & big(v0))
    ok &= ~(big(v0) & big(vm1))
    ok &= ~(big(um1) & big(vm1))
    ok &= ~(big(vm1) & big(vm2))
    return ok


def property_p(p) -> bool:
    """True iff no adjacent pair in any L-shaped subtable both exceed 2."""
    x, y, z = p
    return bool(property_p_arrays(np.float64(x), np.float64(y), np.float64(z)))


def classify_arrays(x, y, z):
    """Vectorized classification.

    Returns (ids, boundary): ids is int8 with 0 meaning "no region", boundary
    flags points with a table entry within BOUNDARY_TOL of +-2 or with
    multiple pattern matches (possible only on class boundaries).
    """
    x = np.asarray(x, dtype=float)
    entries = table_w_arrays(x, np.asarray(y, dtype=float), np.asarray(z, dtype=float))
    u1, u0, um1, v1, v0, vm1, vm2 = entries
    slots = (u1, u0, um1, v1, v0, vm1)

    p_ok = property_p_arrays(x, y, z)
    ids = np.zeros(x.shape, dtype=np.int8)
    n_matches = np.zeros(x.shape, dtype=np.int8)
    for region in range(1, 11):
        pattern = REGION_PATTERNS[region]
        match = p_ok.copy()
        for value, cls in zip(slots, pattern):
            match &= _in_class(value, cls)
        n_matches += match
        ids = np.where(match & (ids == 0), np.int8(region), ids)

    boundary = n_matches > 1
    for e in entries:
        boundary |= np.abs(np.abs(e) - CLASS_BOUND) <= BOUNDARY_TOL
    boundary &= ids != 0
    return ids, boundary


@dataclass(frozen=True)
class RegionClassification:
    region: int | None
    boundary: bool


def classify_region_full(p) -> RegionClassification:
    x, y, z = p
    ids, boundary = classify_arrays(np.array([x]), np.array([y]), np.array([z]))
    region = int(ids[0]) or None
    return RegionClassification(region, bool(boundary[0]) if region else False)


def classify_region(p) -> int | None:
    """Region index 1..10 of a point's table, or None if outside all ten."""
    return classify_region_full(p).region


def coord_region(p) -> int | None:
    """Coarse region from the coordinate classes (x, y, z) alone.

    Distinguishes only the four base regions 1, 2, 5, 6 plus 3, 4; used where
    the full table classification is not required (chart projections).
    """
    x, y, z = p
    if abs(x) <= CLASS_BOUND and abs(z) <= CLASS_BOUND:
        if y >= CLASS_BOUND:
            return 1
        if y <= -CLASS_BOUND:
            return 2
    if abs(y) <= CLASS_BOUND and abs(z) <= CLASS_BOUND:
        if x >= CLASS_BOUND:
            return 5
        if x <= -CLASS_BOUND:
            return 6
    if abs(x) <= CLASS_BOUND and abs(y) <= CLASS_BOUND:
        if z >= CLASS_BOUND:
            return 3
        if z <= -CLASS_BOUND:
            return 4
    return None


# -- transition catalog ------------------------------------------------------

def _classes_compatible(a: str, b: str) -> bool:
    """Whether two interval classes overlap in a full-dimensional set."""
    if a == ANY or b == ANY:
        return True
    return a == b


#: Transitions ruled out by the sign obstructions on the table entry
#: u1 = y(xy - z) - x (self-images of 5 and 6, and the crossings below).
OBSTRUCTED_EDGES: frozenset[tuple[int, int]] = frozenset({
    (5, 5), (6, 6),
    (7, 5), (8, 5), (9, 6), (10, 6),
    (7, 2), (8, 1), (9, 1), (10, 2),
})


def derive_catalog() -> dict[int, tuple[int, ...]]:
    """Region transition catalog derived from the patterns.

    An arrow i -> j requires the four table slots shared between a point and
    its image to have compatible classes, minus the algebraically obstructed
    pairs.  The image table is the source table shifted one step, so the
    shared slots are (u1->u0', u0->u-1', v1->v0', v0->v-1').
    """
    edges: dict[int, tuple[int, ...]] = {}
    for i in range(1, 11):
        pi = REGION_PATTERNS[i]
        targets = []
        for j in range(1, 11):
            pj = REGION_PATTERNS[j]
            ok = (_classes_compatible(pi[0], pj[1])      # u1 ~ u0'
                  and _classes_compatible(pi[1], pj[2])  # u0 ~ u-1'
                  and _classes_compatible(pi[3], pj[4])  # v1 ~ v0'
                  and _classes_compatible(pi[4], pj[5])) # v0 ~ v-1'
            if ok and (i, j) not in OBSTRUCTED_EDGES:
                targets.append(j)
        edges[i] = tuple(targets)
    return edges


def load_catalog() -> dict[int, tuple[int, ...]]:
    """The versioned transition catalog shipped with the package."""
    raw = resources.files("silvertrace.data").joinpath("region_graph.json").read_text()
    data = json.loads(raw)
    return {int(k): tuple(v) for k, v in data["edges"].items()}


CATALOG = derive_catalog()

#: Base regions of the first-return construction.
BASE_REGIONS = (1, 2, 5, 6)
INTERMEDIATE_REGIONS = (3, 4, 7, 8, 9, 10)
