"""Domains, masked tensor grids, grid functions and exhaustion sequences.

Every grid lives on the lattice ``h * Z^dim`` anchored at the origin, so grids
of equal spacing built for nested domains share nodes exactly.  Nodes are
classified as interior (strictly inside the domain), Dirichlet (outside, but
adjacent to an interior node) or exterior.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    IncompatibleGrids,
    IndexOutOfRange,
    InfeasibleResolution,
    UnsupportedDomain,
)

EXTERIOR, INTERIOR, DIRICHLET = 0, 1, 2

_KIND_ARITY = {
    "interval": 2,
    "ball": 1,
    "annulus": 2,
    "exterior": 2,
    "rect_hole": 7,
}
_ALIASES = {
    "exterior-of-ball": "exterior",
    "exterior_of_ball": "exterior",
    "rectangle-with-circular-hole": "rect_hole",
    "rectangle_with_hole": "rect_hole",
}


@dataclass(frozen=True)
class DomainSpec:
    """Symbolic description of a domain with compact boundary.

    Parameters by kind:

    * ``interval``: ``(a, b)``, dim 1
    * ``ball``: ``(R,)``, centred at the origin, dim 1 or 2
    * ``annulus``: ``(r, R)``, centred at the origin
    * ``exterior``: ``(R0, R_inf)``, the complement of the closed ball of
      radius ``R0`` truncated by a homogeneous Dirichlet wall at ``R_inf``
    * ``rect_hole``: ``(x0, x1, y0, y1, cx, cy, rho)``, dim 2
    """

    kind: str
    params: tuple
    dim: int = 1

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if kind not in _KIND_ARITY:
            raise UnsupportedDomain(f"unknown domain kind {self.kind!r}")
        if len(self.params) != _KIND_ARITY[kind]:
            raise UnsupportedDomain(
                f"{kind} takes {_KIND_ARITY[kind]} parameters, got {len(self.params)}"
            )
        if self.dim not in (1, 2):
            raise UnsupportedDomain(f"dim must be 1 or 2, got {self.dim}")
        if kind == "interval" and self.dim != 1:
            raise UnsupportedDomain("interval domains are one-dimensional")
        if kind == "rect_hole" and self.dim != 2:
            raise UnsupportedDomain("rectangle-with-hole domains are two-dimensional")
        p = self.params
        ok = {
            "interval": lambda: p[0] < p[1],
            "ball": lambda: p[0] > 0,
            "annulus": lambda: 0 <= p[0] < p[1],
            "exterior": lambda: 0 < p[0] < p[1],
            "rect_hole": lambda: (
                p[0] < p[1]
                and p[2] < p[3]
                and p[6] > 0
                and p[0] < p[4] - p[6]
                and p[4] + p[6] < p[1]
                and p[2] < p[5] - p[6]
                and p[5] + p[6] < p[3]
            ),
        }[kind]
        if not ok():
            raise UnsupportedDomain(f"invalid parameters for {kind}: {p}")

    # constructors ---------------------------------------------------------
    @classmethod
    def interval(cls, a, b):
        return cls("interval", (a, b), 1)

    @classmethod
    def ball(cls, R, dim=1):
        return cls("ball", (R,), dim)

    @classmethod
    def annulus(cls, r, R, dim=2):
        return cls("annulus", (r, R), dim)

    @classmethod
    def exterior_of_ball(cls, R0, R_inf, dim=1):
        return cls("exterior", (R0, R_inf), dim)

    @classmethod
    def rect_with_hole(cls, x0, x1, y0, y1, cx, cy, rho):
        return cls("rect_hole", (x0, x1, y0, y1, cx, cy, rho), 2)

    @classmethod
    def parse(cls, text, dim=None):
        """Parse ``"kind(p1,p2,...)"``, e.g. ``"interval(-1,1)"``."""
        m = re.fullmatch(r"\s*([A-Za-z_\-]+)\s*\((.*)\)\s*", text)
        if not m:
            raise UnsupportedDomain(f"cannot parse domain {text!r}")
        kind = _ALIASES.get(m.group(1), m.group(1))
        try:
            params = tuple(float(s) for s in m.group(2).split(",") if s.strip())
        except ValueError as exc:
            raise UnsupportedDomain(f"bad parameter list in {text!r}") from exc
        if dim is None:
            dim = 2 if kind == "rect_hole" else 1
        return cls(kind, params, dim)

    def __str__(self):
        args = ",".join(f"{p:g}" for p in self.params)
        suffix = f";dim={self.dim}" if self.kind in ("ball", "annulus", "exterior") else ""
        return f"{self.kind}({args}){suffix}"

    # geometry -------------------------------------------------------------
    @property
    def bounded_boundary(self):
        return True

    @property
    def scale(self):
        """Characteristic half-width used for default probe sets."""
        p = self.params
        if self.kind == "interval":
            return 0.5 * (p[1] - p[0])
        if self.kind == "ball":
            return p[0]
        if self.kind in ("annulus", "exterior"):
            return 0.5 * (p[1] - p[0])
        return 0.5 * min(p[1] - p[0], p[3] - p[2])

    def bbox(self):
        p = self.params
        if self.kind == "interval":
            return np.array([p[0]]), np.array([p[1]])
        if self.kind == "rect_hole":
            return np.array([p[0], p[2]]), np.array([p[1], p[3]])
        R = p[0] if self.kind == "ball" else p[1]
        return np.full(self.dim, -R), np.full(self.dim, R)

    def signed_distance(self, points):
        """Distance to the boundary, positive inside (exact except near the
        corners of a rectangle)."""
        x = np.atleast_2d(np.asarray(points, dtype=float))
        p = self.params
        if self.kind == "interval":
            return np.minimum(x[:, 0] - p[0], p[1] - x[:, 0])
        r = np.sqrt(np.sum(x * x, axis=1))
        if self.kind == "ball":
            return p[0] - r
        if self.kind in ("annulus", "exterior"):
            return np.minimum(r - p[0], p[1] - r)
        rc = np.hypot(x[:, 0] - p[4], x[:, 1] - p[5])
        return np.minimum.reduce(
            [x[:, 0] - p[0], p[1] - x[:, 0], x[:, 1] - p[2], p[3] - x[:, 1], rc - p[6]]
        )

    def project_to_boundary(self, points):
        """Nearest boundary point of each point and whether it lies on an
        artificial truncation wall (where zero data is imposed)."""
        x = np.atleast_2d(np.asarray(points, dtype=float))
        p = self.params
        n = x.shape[0]
        artificial = np.zeros(n, dtype=bool)
        if self.kind == "interval":
            proj = np.where(np.abs(x - p[0]) <= np.abs(x - p[1]), p[0], p[1])
            return proj, artificial
        if self.kind == "rect_hole":
            cands = []
            for axis, lo, hi in ((0, p[0], p[1]), (1, p[2], p[3])):
                for wall in (lo, hi):
                    c = x.copy()
                    c[:, axis] = wall
                    c[:, 1 - axis] = np.clip(c[:, 1 - axis], *((p[2], p[3]) if axis == 0 else (p[0], p[1])))
                    cands.append(c)
            d = x - np.array([p[4], p[5]])
            rc = np.hypot(d[:, 0], d[:, 1])
            unit = np.where(rc[:, None] > 0, d / np.where(rc > 0, rc, 1.0)[:, None], [1.0, 0.0])
            cands.append(np.array([p[4], p[5]]) + p[6] * unit)
            dist = np.stack([np.hypot(*(c - x).T) for c in cands])
            pick = np.argmin(dist, axis=0)
            proj = np.stack(cands)[pick, np.arange(n)]
            return proj, artificial
        r = np.sqrt(np.sum(x * x, axis=1))
        unit = np.zeros_like(x)
        nz = r > 0
        unit[nz] = x[nz] / r[nz, None]
        unit[~nz, 0] = 1.0
        if self.kind == "ball":
            return p[0] * unit, artificial
        inner = np.abs(r - p[0]) <= np.abs(r - p[1])
        radius = np.where(inner, p[0], p[1])
        if self.kind == "exterior":
            artificial = ~inner
        return radius[:, None] * unit, artificial

    def offset(self, delta):
        """Inward offset by ``delta`` (the closure of the result lies in self)."""
        p = self.params
        try:
            if self.kind == "interval":
                return DomainSpec.interval(p[0] + delta, p[1] - delta)
            if self.kind == "ball":
                return DomainSpec.ball(p[0] - delta, self.dim)
            if self.kind == "annulus":
                return DomainSpec("annulus", (p[0] + delta, p[1] - delta), self.dim)
            if self.kind == "exterior":
                return DomainSpec("exterior", (p[0] + delta, p[1] - delta), self.dim)
            return DomainSpec.rect_with_hole(
                p[0] + delta, p[1] - delta, p[2] + delta, p[3] - delta, p[4], p[5], p[6] + delta
            )
        except UnsupportedDomain as exc:
            raise UnsupportedDomain(f"offset {delta} empties {self}") from exc

    def intersect_ball(self, radius):
        """``self ∩ B_radius`` for the kinds where the result is again a kind."""
        p = self.params
        if self.kind == "interval":
            return DomainSpec.interval(max(p[0], -radius), min(p[1], radius))
        if self.kind == "ball":
            return DomainSpec.ball(min(p[0], radius), self.dim)
        if self.kind == "annulus":
            return DomainSpec("annulus", (p[0], min(p[1], radius)), self.dim)
        if self.kind == "exterior":
            if radius >= p[1]:
                return self
            return DomainSpec("annulus", (p[0], radius), self.dim)
        raise UnsupportedDomain("rectangle-with-hole cannot be truncated by a ball")


@dataclass(frozen=True)
class ExhaustionPlan:
    """Increasing family of subdomains.

    ``mode="interior"``: ``values`` are inward margins, strictly decreasing and
    nonnegative.  ``mode="truncation"``: ``values`` are radii ``n``, strictly
    increasing, giving ``Ω ∩ B_n``.
    """

    mode: str
    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if self.mode not in ("interior", "truncation"):
            raise ValueError(f"unknown exhaustion mode {self.mode!r}")
        if not vals:
            raise ValueError("exhaustion plan needs at least one member")
        diffs = np.diff(vals)
        if self.mode == "interior":
            if min(vals) < 0 or np.any(diffs >= 0):
                raise ValueError("interior margins must be nonnegative and strictly decreasing")
        elif min(vals) <= 0 or np.any(diffs <= 0):
            raise ValueError("truncation radii must be positive and strictly increasing")

    @property
    def count(self):
        return len(self.values)

    @classmethod
    def dyadic(cls, domain, h, start=None):
        """Interior margins ``start, start/2, ...`` down to the last one that
        the spacing ``h`` still resolves (margin >= h)."""
        delta = 0.25 * domain.scale if start is None else float(start)
        vals = []
        while delta >= h * (1 - 1e-12):
            vals.append(delta)
            delta /= 2
        if not vals:
            raise InfeasibleResolution(f"spacing {h} resolves no interior margin")
        return cls("interior", tuple(vals))


def exhaustion(domain, plan, m):
    """The ``m``-th member of ``plan`` applied to ``domain``."""
    if not 0 <= m < plan.count:
        raise IndexOutOfRange(f"member {m} requested from a plan of {plan.count}")
    v = plan.values[m]
    if plan.mode == "interior":
        return domain if v == 0 else domain.offset(v)
    return domain.intersect_ball(v)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform tensor grid on ``h * Z^dim`` with a node mask.

    ``lo`` holds the integer lattice index of the first node on each axis and
    ``mask`` is an int8 array of shape ``shape`` with values ``INTERIOR``,
    ``DIRICHLET`` or ``EXTERIOR``.  In periodic mode (interval only) every node
    is interior and the stencil wraps.
    """

    domain: DomainSpec
    h: float
    lo: tuple
    mask: np.ndarray
    periodic: bool = False

    @property
    def dim(self):
        return self.domain.dim

    @property
    def shape(self):
        return self.mask.shape

    @property
    def size(self):
        return self.mask.size

    @property
    def cell_volume(self):
        return self.h**self.dim

    @cached_property
    def axes(self):
        return [(lo + np.arange(n)) * self.h for lo, n in zip(self.lo, self.shape)]

    @cached_property
    def points(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def interior_idx(self):
        return np.flatnonzero(self.mask.ravel() == INTERIOR)

    @cached_property
    def dirichlet_idx(self):
        return np.flatnonzero(self.mask.ravel() == DIRICHLET)

    @property
    def n_interior(self):
        return self.interior_idx.size

    @cached_property
    def lattice(self):
        """Integer lattice coordinates of every node, shape ``(size, dim)``."""
        mesh = np.meshgrid(*[lo + np.arange(n) for lo, n in zip(self.lo, self.shape)], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def boundary_trace(self):
        """``(points, artificial)`` on the boundary for each Dirichlet node."""
        return self.domain.project_to_boundary(self.points[self.dirichlet_idx])

    @cached_property
    def boundary_distance(self):
        """Signed distance to the boundary of every node."""
        return self.domain.signed_distance(self.points)

    def same_as(self, other):
        return self is other or (
            isinstance(other, Grid)
            and self.domain == other.domain
            and math.isclose(self.h, other.h, rel_tol=1e-12)
            and self.periodic == other.periodic
            and self.shape == other.shape
            and self.lo == other.lo
        )

    def probe_mask(self, min_dist=None, radius=None):
        """Interior nodes with boundary distance >= ``min_dist`` (default a
        quarter of the domain scale) and, optionally, ``|x| <= radius``."""
        sel = self.mask.ravel() == INTERIOR
        if self.periodic:
            min_dist = None if radius is not None else min_dist
        elif min_dist is None and radius is None:
            min_dist = 0.25 * self.domain.scale
        if min_dist is not None:
            sel &= self.boundary_distance >= min_dist - 1e-12
        if radius is not None:
            sel &= np.linalg.norm(self.points, axis=1) <= radius + 1e-12
        return sel


def build_grid(domain, h, periodic=False):
    """Discretize ``domain`` with spacing ``h``."""
    h = float(h)
    if not h > 0:
        raise InfeasibleResolution(f"spacing must be positive, got {h}")
    if periodic:
        return _build_periodic(domain, h)
    if h > domain.scale * (1 + 1e-12):
        # a stencil wider than the domain resolves nothing
        raise InfeasibleResolution(f"spacing {h} exceeds the half-width {domain.scale:g} of {domain}")
    lo_x, hi_x = domain.bbox()
    lo = tuple(int(math.floor(v / h + 1e-9)) - 1 for v in lo_x)
    hi = tuple(int(math.ceil(v / h - 1e-9)) + 1 for v in hi_x)
    shape = tuple(b - a + 1 for a, b in zip(lo, hi))
    mesh = np.meshgrid(*[(a + np.arange(n)) * h for a, n in zip(lo, shape)], indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    inside = (domain.signed_distance(pts) > 1e-10 * h).reshape(shape)
    if not inside.any():
        raise InfeasibleResolution(f"spacing {h} leaves no interior node in {domain}")
    near = np.zeros(shape, dtype=bool)
    for axis in range(domain.dim):
        near |= np.roll(inside, 1, axis=axis) | np.roll(inside, -1, axis=axis)
    mask = np.full(shape, EXTERIOR, dtype=np.int8)
    mask[near & ~inside] = DIRICHLET
    mask[inside] = INTERIOR
    mask.setflags(write=False)
    return Grid(domain, h, lo, mask)


def _build_periodic(domain, h):
    if domain.kind != "interval":
        raise UnsupportedDomain("periodic mode is only available on intervals")
    a, b = domain.params
    n = (b - a) / h
    if abs(n - round(n)) > 1e-9 or round(n) < 1:
        raise InfeasibleResolution(f"period {b - a} is not a multiple of h={h}")
    if abs(a / h - round(a / h)) > 1e-9:
        raise InfeasibleResolution("periodic interval endpoints must lie on the lattice")
    mask = np.full(int(round(n)), INTERIOR, dtype=np.int8)
    mask.setflags(write=False)
    return Grid(domain, h, (int(round(a / h)),), mask, periodic=True)


@dataclass(frozen=True, eq=False)
class Field:
    """One real value per grid node.

    Exterior nodes hold 0; Dirichlet nodes hold the boundary value in force
    when the field was produced.  Values are stored read-only.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(self.grid.shape)
        ext = self.grid.mask == EXTERIOR
        if np.any(v[ext] != 0):
            raise ValueError("exterior nodes of a Field must carry 0")
        if not np.all(np.isfinite(v)):
            raise ValueError("Field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_interior(cls, grid, interior, boundary=None):
        flat = np.zeros(grid.size)
        flat[grid.interior_idx] = interior
        if boundary is not None:
            flat[grid.dirichlet_idx] = boundary
        return cls(grid, flat)

    @classmethod
    def constant(cls, grid, value, boundary=None):
        return cls.from_interior(grid, np.full(grid.n_interior, float(value)), boundary)

    @classmethod
    def from_function(cls, grid, fn, boundary=True):
        """Sample ``fn(points) -> values`` at interior (and Dirichlet) nodes."""
        pts = grid.points
        flat = np.zeros(grid.size)
        flat[grid.interior_idx] = fn(pts[grid.interior_idx])
        if boundary:
            flat[grid.dirichlet_idx] = fn(pts[grid.dirichlet_idx])
        return cls(grid, flat)

    @property
    def flat(self):
        return self.values.ravel()

    @property
    def interior(self):
        return self.flat[self.grid.interior_idx]

    @property
    def boundary(self):
        return self.flat[self.grid.dirichlet_idx]

    def with_interior(self, interior):
        return Field.from_interior(self.grid, interior, self.boundary)

    def l2(self):
        return float(np.sqrt(self.grid.cell_volume * np.sum(self.interior**2)))

    def max(self):
        return float(self.interior.max())

    def min(self):
        return float(self.interior.min())


def extend_by_zero(u, target):
    """Copy the interior values of ``u`` into ``target``; zero elsewhere."""
    src = u.grid
    if src.dim != target.dim or not math.isclose(src.h, target.h, rel_tol=1e-12):
        raise IncompatibleGrids(f"spacings {src.h} and {target.h} are not nested")
    if src.periodic or target.periodic:
        raise IncompatibleGrids("periodic grids cannot be extended")
    lat = src.lattice[src.interior_idx] - np.asarray(target.lo)
    if np.any(lat < 0) or np.any(lat >= np.asarray(target.shape)):
        raise IncompatibleGrids("sub-grid interior leaves the target box")
    flat_idx = np.ravel_multi_index(lat.T, target.shape)
    if np.any(target.mask.ravel()[flat_idx] != INTERIOR):
        raise IncompatibleGrids("sub-grid interior node is not interior in the target")
    out = np.zeros(target.size)
    out[flat_idx] = u.interior
    return Field(target, out)


def restrict(u, target):
    """Values of ``u`` at the interior nodes of ``target`` (same lattice),
    returned as a Field on ``target`` whose Dirichlet values are also read from
    ``u`` where available."""
    src = u.grid
    if not math.isclose(src.h, target.h, rel_tol=1e-12) or src.dim != target.dim:
        raise IncompatibleGrids("grids do not share a lattice")
    lat = target.lattice - np.asarray(src.lo)
    inside = np.all((lat >= 0) & (lat < np.asarray(src.shape)), axis=1)
    flat = np.zeros(target.size)
    idx = np.ravel_multi_index(lat[inside].T, src.shape)
    flat[inside] = u.flat[idx]
    flat[target.mask.ravel() == EXTERIOR] = 0.0
    if np.any(~inside[target.interior_idx]):
        raise IncompatibleGrids("target interior is not covered by the source grid")
    return Field(target, flat)
