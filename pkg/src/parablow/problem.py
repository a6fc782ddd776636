"""Problem description: exponent, domain, lateral data and initial data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import DomainSpec


@dataclass(frozen=True)
class LateralData:
    """Nonnegative boundary data ``f`` on the physical boundary.

    ``kind`` is ``"zero"``, ``"constant"`` (``value``), ``"table"`` (values
    interpolated linearly in time from ``times``/``table``, constant in space)
    or ``"function"`` (``fn(points, t)``).  Artificial truncation walls always
    receive 0.
    """

    kind: str = "zero"
    value: float = 0.0
    times: tuple = ()
    table: tuple = ()
    fn: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "table", "function"):
            raise ValueError(f"unknown lateral data kind {self.kind!r}")
        if self.kind == "constant" and self.value < 0:
            raise ValueError("lateral data must be nonnegative")
        if self.kind == "table":
            t = np.asarray(self.times, dtype=float)
            v = np.asarray(self.table, dtype=float)
            if t.size < 1 or t.shape != v.shape or np.any(np.diff(t) <= 0):
                raise ValueError("table needs matching, strictly increasing times")
            if np.any(v < 0):
                raise ValueError("lateral data must be nonnegative")
        if self.kind == "function" and not callable(self.fn):
            raise ValueError("function lateral data needs a callable fn(points, t)")

    @classmethod
    def constant(cls, value):
        return cls("constant", float(value))

    @property
    def is_zero(self):
        return self.kind == "zero" or (self.kind == "constant" and self.value == 0)

    @property
    def time_dependent(self):
        return self.kind in ("table", "function")

    def sup(self, t):
        """Upper bound of the data at time ``t`` (exact for the non-function kinds)."""
        if self.is_zero:
            return 0.0
        if self.kind == "constant":
            return self.value
        if self.kind == "table":
            return float(np.interp(t, self.times, self.table))
        return None

    def values(self, grid, t):
        """Data at the Dirichlet nodes of ``grid`` at time ``t``."""
        n = grid.dirichlet_idx.size
        if self.is_zero or n == 0:
            return np.zeros(n)
        pts, artificial = grid.boundary_trace
        if self.kind == "constant":
            out = np.full(n, self.value)
        elif self.kind == "table":
            out = np.full(n, float(np.interp(t, self.times, self.table)))
        else:
            out = np.asarray(self.fn(pts, t), dtype=float).reshape(n)
            if np.any(out < 0):
                raise ValueError("lateral data must be nonnegative")
        out[artificial] = 0.0
        return out


@dataclass(frozen=True)
class InitialData:
    """``mode="constant"`` starts from ``k``; ``mode="blowup"`` requests the
    ``k -> infinity`` limit, starting the doubling sequence at ``k0`` (default:
    ``phi_q`` at the first step size) and stopping after ``max_doublings``."""

    mode: str = "blowup"
    k: float = 1.0
    k0: float | None = None
    max_doublings: int = 40

    def __post_init__(self):
        if self.mode not in ("constant", "blowup"):
            raise ValueError(f"unknown initial mode {self.mode!r}")
        if self.mode == "constant" and self.k < 0:
            raise ValueError("initial constant must be nonnegative")


@dataclass(frozen=True)
class ProblemSpec:
    q: float
    domain: DomainSpec
    lateral: LateralData = LateralData()
    initial: InitialData = InitialData()
    T: float = 1.0

    def __post_init__(self):
        if not self.q > 1:
            raise ValueError(f"exponent q must exceed 1, got {self.q}")
        if not self.T > 0:
            raise ValueError("time horizon must be positive")
