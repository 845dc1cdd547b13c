"""Core trace-map arithmetic.

The renormalization map T(x, y, z) = (x(y^2-1) - zy, xy - z, y) shifts the
pair of transfer-matrix trace sequences of the silver-ratio operator one step.
This module evaluates T, its inverse, the conserved cubic invariant, the Pell
numbers, the trace recursion itself, and an independent transfer-matrix
oracle used to cross-check the recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import RangeOverflowError

SILVER_MEAN = 1.0 + math.sqrt(2.0)

#: Default cap on the transfer-matrix oracle depth; matrix entries grow
#: super-exponentially and leave float range shortly beyond this.
ORACLE_CAP = 10

#: Hard cap on trace-sequence length when escape halting is disabled.
NOHALT_CAP = 50


@dataclass(frozen=True)
class Point3:
    """A point of R^3, candidate element of an invariant surface."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise RangeOverflowError(
                f"non-finite coordinates ({self.x}, {self.y}, {self.z})")

    def __iter__(self):
        return iter((self.x, self.y, self.z))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass(frozen=True)
class Coupling:
    """Coupling constant of the two-valued potential; must be positive."""

    V: float

    def __post_init__(self):
        if not (math.isfinite(self.V) and self.V > 0):
            raise ValueError(f"coupling must be positive and finite, got {self.V}")

    def __float__(self) -> float:
        return float(self.V)


def _vf(V) -> float:
    """Accept a Coupling or a bare float."""
    return float(V)


def trace_map(p) -> Point3:
    """One forward step of the renormalization map."""
    x, y, z = p
    return Point3(x * (y * y - 1.0) - z * y, x * y - z, y)


def trace_map_inverse(p) -> Point3:
    """One backward step; equals rho o T o rho."""
    x, y, z = p
    return Point3(y * z - x, z, y * (z * z - 1.0) - x * z)


def rho(p) -> Point3:
    """Cyclic coordinate permutation (x, y, z) -> (y, z, x)."""
    x, y, z = p
    return Point3(y, z, x)


def fricke_invariant(p) -> float:
    """The conserved cubic x^2 + y^2 + z^2 - xyz."""
    x, y, z = p
    return x * x + y * y + z * z - x * y * z


def initial_line(E: float, V) -> Point3:
    """Starting point (E - V, E, 2) whose orbit decides whether E is spectral."""
    v = _vf(V)
    return Point3(E - v, E, 2.0)


def pell(m: int) -> int:
    """Pell numbers with F(-1) = 0, F(0) = 1, F(m+1) = 2 F(m) + F(m-1).

    Exact integer arithmetic for any m >= -1.
    """
    if m < -1:
        raise ValueError(f"index must be >= -1, got {m}")
    prev, cur = 0, 1  # F(-1), F(0)
    if m == -1:
        return 0
    for _ in range(m):
        prev, cur = cur, 2 * cur + prev
    return cur


# -- vectorized kernels (no validation; used by samplers and scans) ---------

def trace_map_arr(pts: np.ndarray) -> np.ndarray:
    """Forward map applied to an (n, 3) array."""
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    return np.stack([x * (y * y - 1.0) - z * y, x * y - z, y], axis=1)


def trace_map_inverse_arr(pts: np.ndarray) -> np.ndarray:
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    return np.stack([y * z - x, z, y * (z * z - 1.0) - x * z], axis=1)


def fricke_invariant_arr(pts: np.ndarray) -> np.ndarray:
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    return x * x + y * y + z * z - x * y * z


def table_w_arrays(x, y, z):
    """The seven table entries (u1, u0, u-1; v1, v0, v-1, v-2) for arrays.

    The three overlapping L-shaped subtables of the layout

        u1 | u0 | u-1 |
        v1 | v0 | v-1 | v-2

    are the forward image, the point itself and the backward image.
    """
    u1 = x * (y * y - 1.0) - z * y
    um1 = y * z - x
    v1 = x * y - z
    vm2 = y * (z * z - 1.0) - x * z
    return u1, x, um1, v1, y, z, vm2


@dataclass(frozen=True)
class TableW:
    """Seven-entry past/future table of a point."""

    u1: float
    u0: float
    um1: float
    v1: float
    v0: float
    vm1: float
    vm2: float

    def as_tuple(self):
        return (self.u1, self.u0, self.um1, self.v1, self.v0, self.vm1, self.vm2)

    def forward_triple(self):
        return (self.u1, self.v1, self.v0)

    def center_triple(self):
        return (self.u0, self.v0, self.vm1)

    def backward_triple(self):
        return (self.um1, self.vm1, self.vm2)


def table_w(p) -> TableW:
    x, y, z = p
    u1, u0, um1, v1, v0, vm1, vm2 = table_w_arrays(x, y, z)
    return TableW(u1, u0, um1, v1, v0, vm1, vm2)


# -- trace recursion ---------------------------------------------------------

@dataclass
class TraceOrbit:
    """Result of iterating the trace recursion from (E - V, E, 2).

    ``u[m]`` and ``v[m]`` hold the sequences for m = 0..steps; ``v_init`` is
    the seed v at index -1 (always 2).  ``halted`` records whether iteration
    stopped at the escape criterion or at the requested cap.
    """

    u: np.ndarray
    v: np.ndarray
    v_init: float
    halted: str                      # "escape" | "cap"
    escape_step: int | None = None
    E: float = 0.0
    V: float = 0.0

    @property
    def steps(self) -> int:
        return len(self.u) - 1

    def triple(self, m: int):
        """(u_m, v_m, v_{m-1})."""
        vm1 = self.v_init if m == 0 else self.v[m - 1]
        return (self.u[m], self.v[m], vm1)


def _pair_escaped(u, v, vp, delta: float) -> bool:
    # Escape when two consecutive entries of (u, v, v_prev) exceed the bound
    # strictly; "larger than 2" leaves boundary values at exactly 2 inside.
    b = 2.0 + delta
    return (abs(u) > b and abs(v) > b) or (abs(v) > b and abs(vp) > b)


def trace_sequences(E: float, V, n_max: int, *, delta: float = 0.0,
                    halt_on_escape: bool = True) -> TraceOrbit:
    """Iterate the trace recursion up to n_max, halting early at escape.

    With ``halt_on_escape=False`` the recursion is continued blindly, which is
    only allowed up to n_max <= 50 (values grow doubly exponentially after
    escape).
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    if not halt_on_escape and n_max > NOHALT_CAP:
        raise ValueError(f"no-halt iteration is capped at n_max <= {NOHALT_CAP}")
    v = _vf(V)
    u_seq = [E - v]
    v_seq = [E]
    vp = 2.0
    escape_step = None
    if _pair_escaped(u_seq[0], v_seq[0], vp, delta):
        escape_step = 0
    m = 0
    while m < n_max and (escape_step is None or not halt_on_escape):
        u_m, v_m = u_seq[-1], v_seq[-1]
        vp_next = v_m
        u_next = u_m * (v_m * v_m - 1.0) - vp * v_m
        v_next = u_m * v_m - vp
        if not (math.isfinite(u_next) and math.isfinite(v_next)):
            raise RangeOverflowError(f"trace recursion overflow at step {m + 1}")
        u_seq.append(u_next)
        v_seq.append(v_next)
        vp = vp_next
        m += 1
        if escape_step is None and _pair_escaped(u_next, v_next, vp, delta):
            escape_step = m
    halted = "escape" if (escape_step is not None and halt_on_escape) else "cap"
    return TraceOrbit(np.array(u_seq), np.array(v_seq), 2.0, halted,
                      escape_step, E, v)


def conserved_quantity(u: float, v: float, v_prev: float) -> float:
    """u^2 + v^2 + v_prev^2 - u v v_prev; equals V^2 + 4 along real orbits."""
    return u * u + v * v + v_prev * v_prev - u * v * v_prev


# -- transfer-matrix oracle --------------------------------------------------

def transfer_matrix_oracle(E: float, V, m: int, *, cap: int = ORACLE_CAP):
    """(M_m, M_{m-1}) from the matrix recursion M_{m+1} = M_m^2 M_{m-1}.

    Independent of the trace recursion: trace(M_m) must reproduce v_m and
    trace(M_{m-1} M_m) must reproduce u_m.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    if m > cap:
        raise ValueError(f"oracle depth {m} exceeds cap {cap}")
    v = _vf(V)
    m_prev = np.array([[1.0, -v], [0.0, 1.0]])
    m_cur = np.array([[E, -1.0], [1.0, 0.0]])
    for _ in range(m):
        m_prev, m_cur = m_cur, m_cur @ m_cur @ m_prev
    if not np.all(np.isfinite(m_cur)):
        raise RangeOverflowError(f"transfer matrix entries overflowed at m={m}")
    return m_cur, m_prev
