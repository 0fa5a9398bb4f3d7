"""Lifted uncertainty space.

Each observed coordinate with support [lo, hi] and breakpoints lo < b_1 < ... <
b_{r-1} < hi is mapped into r piecewise-linear coordinates (clipped segment
lengths, summing back to the original value) and g = max(1, r-1) binary
indicator coordinates (value >= breakpoint, closed on the right). Per segment,
the two endpoint vertices carry the one-sided indicator limits, so a shared
breakpoint appears twice with different indicator vectors; the convex hull of
these vertices is the outer-approximation building block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LiftedSpace:
    """Per-coordinate lifting grid: lo = p[0] < ... < p[r] = hi."""

    lo: float
    hi: float
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError("lifting bounds must be finite")
        if self.lo > self.hi:
            raise ValueError("lo > hi")
        pts = (self.lo,) + tuple(self.breakpoints) + (self.hi,)
        if any(b <= a for a, b in zip(pts, pts[1:])):
            if not (self.lo == self.hi and not self.breakpoints):
                raise ValueError("breakpoints must be strictly increasing inside (lo, hi)")

    @property
    def grid(self) -> tuple[float, ...]:
        return (self.lo,) + tuple(self.breakpoints) + (self.hi,)

    @property
    def r(self) -> int:
        return len(self.breakpoints) + 1

    @property
    def g(self) -> int:
        return max(1, self.r - 1)


@dataclass(frozen=True)
class LiftedVertex:
    v: float
    v_bar: tuple[float, ...]
    v_hat: tuple[float, ...]


def lift_value(space: LiftedSpace, zeta: float) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the piecewise-linear and indicator lifting maps at zeta."""
    if zeta < space.lo - 1e-12 or zeta > space.hi + 1e-12:
        raise ValueError(f"value {zeta} outside lifting support [{space.lo}, {space.hi}]")
    zeta = min(max(zeta, space.lo), space.hi)
    p = space.grid
    r = space.r
    if r == 1:
        return np.array([zeta]), np.array([1.0])
    v_bar = np.empty(r)
    v_bar[0] = min(zeta, p[1])
    for j in range(2, r + 1):
        v_bar[j - 1] = max(min(zeta, p[j]) - p[j - 1], 0.0)
    v_hat = np.array([1.0 if zeta >= p[j] else 0.0 for j in range(1, r)])
    return v_bar, v_hat


def vertex_set(space: LiftedSpace) -> list[list[LiftedVertex]]:
    """Per-segment endpoint vertices with indicators taken as one-sided limits
    within the segment; a shared breakpoint yields two vertices differing only
    in the indicator vector."""
    p = space.grid
    r = space.r
    out: list[list[LiftedVertex]] = []
    if r == 1:
        verts = []
        for v in {p[0], p[1]} if p[0] != p[1] else {p[0]}:
            vb, _ = lift_value(space, v)
            verts.append(LiftedVertex(v, tuple(vb), (1.0,)))
        out.append(sorted(verts, key=lambda t: t.v))
        return out
    for j in range(1, r + 1):
        seg = []
        for v in (p[j - 1], p[j]):
            vb, _ = lift_value(space, v)
            # limit of the indicator inside segment [p[j-1], p[j]]:
            # threshold p[k] is crossed within this segment iff k < j
            vh = tuple(1.0 if k < j else 0.0 for k in range(1, r))
            seg.append(LiftedVertex(v, tuple(vb), vh))
        out.append(seg)
    return out


def all_vertices(space: LiftedSpace) -> list[LiftedVertex]:
    flat: list[LiftedVertex] = []
    for seg in vertex_set(space):
        for vx in seg:
            if vx not in flat:
                flat.append(vx)
    return flat


@dataclass
class HullRows:
    """lambda-weighted convex-hull membership rows for one lifted coordinate.

    Columns are ordered (zeta, zbar[0..r-1], zhat[0..g-1], lambda per vertex);
    rows: sum(lambda) = 1, zeta = sum(lambda v), zbar = sum(lambda v_bar),
    zhat = sum(lambda v_hat); lambda >= 0 is a bound, not a row.
    """

    vertices: list[LiftedVertex]
    # each row: (coefs over [zeta, zbar..., zhat..., lambda...], rhs), sense ==
    rows: list[tuple[np.ndarray, float]] = field(default_factory=list)


def hull_rows(space: LiftedSpace) -> HullRows:
    verts = all_vertices(space)
    r, g, nv = space.r, space.g, len(verts)
    dim = 1 + r + g + nv
    rows: list[tuple[np.ndarray, float]] = []
    lam0 = 1 + r + g

    row = np.zeros(dim)
    row[lam0:] = 1.0
    rows.append((row, 1.0))

    row = np.zeros(dim)
    row[0] = 1.0
    for k, vx in enumerate(verts):
        row[lam0 + k] = -vx.v
    rows.append((row, 0.0))

    for j in range(r):
        row = np.zeros(dim)
        row[1 + j] = 1.0
        for k, vx in enumerate(verts):
            row[lam0 + k] = -vx.v_bar[j]
        rows.append((row, 0.0))

    for j in range(g):
        row = np.zeros(dim)
        row[1 + r + j] = 1.0
        for k, vx in enumerate(verts):
            row[lam0 + k] = -vx.v_hat[j]
        rows.append((row, 0.0))

    return HullRows(vertices=verts, rows=rows)


def hull_membership_certificate(space: LiftedSpace, zeta: float) -> np.ndarray:
    """Explicit lambda witness that the lifted image of zeta satisfies the hull
    rows: the convex combination of the enclosing segment's two vertices."""
    verts = all_vertices(space)
    p = space.grid
    lam = np.zeros(len(verts))
    segs = vertex_set(space)
    # rightmost segment containing zeta, matching the closed-right indicators
    j = max(k for k in range(space.r) if p[k] <= zeta or k == 0)
    a, b = segs[j][0], segs[j][-1]
    t = 0.0 if b.v == a.v else (zeta - a.v) / (b.v - a.v)
    lam[verts.index(a)] += 1.0 - t
    lam[verts.index(b)] += t
    return lam
