"""Discrete Laplacian, the absorption nonlinearity and the implicit Euler
resolvent ``u + tau (-Δ_h u + |u|^{q-1} u) = u_prev``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import GridMismatch, NegativeInput, NewtonDivergence, NoConvergence
from .geometry import INTERIOR, Field


@dataclass(frozen=True)
class StepperConfig:
    """Time-step schedule and solver tolerances.

    ``schedule="fixed"`` uses ``tau`` throughout; ``schedule="geometric"`` uses
    ``tau0 * rho**j`` capped at ``tau_max``.
    """

    schedule: str = "geometric"
    tau: float = 1e-3
    tau0: float = 1e-5
    rho: float = 1.01
    tau_max: float = 1e-2
    newton_atol: float = 1e-15
    newton_rtol: float = 1e-15
    newton_maxiter: int = 60
    damping: float = 1.0
    linear_solver: str = "direct"
    linear_tol: float = 1e-12
    linear_maxiter: int = 5000

    def __post_init__(self):
        if self.schedule not in ("fixed", "geometric"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.linear_solver not in ("direct", "cg"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")
        for name in ("tau", "tau0", "tau_max", "newton_atol", "newton_rtol", "linear_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.rho < 1:
            raise ValueError("rho must be >= 1")
        if self.newton_maxiter < 1 or self.linear_maxiter < 1:
            raise ValueError("iteration caps must be >= 1")

    def scaled(self, factor):
        """Same schedule with every time step multiplied by ``factor``."""
        return replace(self, tau=self.tau * factor, tau0=self.tau0 * factor, tau_max=self.tau_max * factor)

    def refined(self):
        """Every step halved: ``tau``, ``tau0``, ``tau_max`` and ``rho - 1``."""
        return replace(
            self,
            tau=self.tau / 2,
            tau0=self.tau0 / 2,
            tau_max=self.tau_max / 2,
            rho=1.0 + (self.rho - 1.0) / 2,
        )

    def step_times(self, t_start, t_end):
        """Step boundaries ``t_start < t_1 < ... <= t_end``.

        The last step is shortened to land on ``t_end``.
        """
        span = t_end - t_start
        if span <= 0:
            return np.array([])
        if self.schedule == "fixed":
            n = int(math.ceil(span / self.tau - 1e-9))
            t = t_start + self.tau * np.arange(1, n + 1)
        else:
            taus = []
            total = 0.0
            j = 0
            while total < span * (1 - 1e-12):
                tau = min(self.tau0 * self.rho**j, self.tau_max)
                taus.append(tau)
                total += tau
                j += 1
            t = t_start + np.cumsum(taus)
        t[-1] = min(t[-1], t_end)
        if t.size > 1 and t[-1] - t[-2] <= 1e-12 * max(1.0, abs(t_end)):
            t = t[:-1]
            t[-1] = t_end
        return t


@dataclass(frozen=True, eq=False)
class StencilOperator:
    """Second-order (2·dim+1)-point Laplacian on a grid.

    ``lap`` maps the full node vector to ``Δ_h u`` at interior nodes;
    ``neg_lap_ii`` is the SPD interior block of ``-Δ_h``; ``boundary_values``
    are the Dirichlet data imposed by :func:`implicit_step`.
    """

    grid: object
    lap: sp.csr_matrix = field(repr=False)
    neg_lap_ii: sp.csr_matrix = field(repr=False)
    lap_ib: sp.csr_matrix = field(repr=False)
    boundary_values: np.ndarray = field(repr=False)

    def with_boundary(self, values):
        vals = np.broadcast_to(np.asarray(values, dtype=float), (self.grid.dirichlet_idx.size,)).copy()
        vals.setflags(write=False)
        return replace(self, boundary_values=vals)

    def boundary_source(self):
        """Contribution of the Dirichlet data to ``Δ_h u`` at interior nodes."""
        if self.lap_ib.shape[1] == 0:
            return np.zeros(self.grid.n_interior)
        return self.lap_ib @ self.boundary_values

    @property
    def row_abs_sum(self):
        return 4.0 * self.grid.dim / self.grid.h**2

    @cached_property
    def csc_pattern(self):
        """``neg_lap_ii`` in CSC form with every diagonal entry stored."""
        a = self.neg_lap_ii.tocoo()
        n = a.shape[0]
        d = np.arange(n)
        m = sp.coo_matrix(
            (np.concatenate([a.data, np.zeros(n)]), (np.concatenate([a.row, d]), np.concatenate([a.col, d]))),
            shape=a.shape,
        ).tocsc()
        m.sort_indices()
        return m

    @cached_property
    def diag_positions(self):
        m = self.csc_pattern
        cols = np.repeat(np.arange(m.shape[1]), np.diff(m.indptr))
        return np.flatnonzero(m.indices == cols)


def stencil_operator(grid, boundary_values=0.0):
    """Assemble the Laplacian of ``grid``."""
    shape = grid.shape
    size = grid.size
    h2 = grid.h**2
    mask = grid.mask.ravel()
    rows_i = grid.interior_idx
    multi = np.array(np.unravel_index(rows_i, shape))
    rows, cols, vals = [np.arange(rows_i.size)], [rows_i], [np.full(rows_i.size, -2.0 * grid.dim / h2)]
    for axis in range(grid.dim):
        for step in (-1, 1):
            nb = multi.copy()
            nb[axis] += step
            if grid.periodic:
                nb[axis] %= shape[axis]
            nb_flat = np.ravel_multi_index(nb, shape)
            rows.append(np.arange(rows_i.size))
            cols.append(nb_flat)
            vals.append(np.full(rows_i.size, 1.0 / h2))
    rows, cols, vals = (np.concatenate(a) for a in (rows, cols, vals))
    lap = sp.csr_matrix((vals, (rows, cols)), shape=(rows_i.size, size))
    lap.sum_duplicates()
    if np.any(mask[lap.indices] == 0):
        raise GridMismatch("an interior stencil reaches an exterior node")
    neg_lap_ii = (-lap[:, rows_i]).tocsr()
    lap_ib = lap[:, grid.dirichlet_idx].tocsr()
    bv = np.broadcast_to(np.asarray(boundary_values, dtype=float), (grid.dirichlet_idx.size,)).copy()
    bv.setflags(write=False)
    return StencilOperator(grid, lap, neg_lap_ii, lap_ib, bv)


def apply_laplacian(op, u):
    """``Δ_h u`` at interior nodes (0 elsewhere), using the Dirichlet values
    carried by ``u``."""
    if not op.grid.same_as(u.grid):
        raise GridMismatch("field and operator live on different grids")
    out = np.zeros(op.grid.size)
    out[op.grid.interior_idx] = op.lap @ u.flat
    return Field(op.grid, out)


def signed_power(u, q):
    """``|u|^{q-1} u`` elementwise, valid for real ``q > 1``."""
    return np.copysign(np.power(np.abs(u), q), u)


@dataclass
class NewtonInfo:
    iterations: int = 0
    residuals: list = field(default_factory=list)
    linear_iterations: int = 0


def solve_linear(action, rhs, cfg, *, matrix=None, diagonal=None, x0=None, info=None):
    """Solve ``M x = rhs`` for SPD ``M``.

    ``action`` is the matrix-vector product.  With ``cfg.linear_solver ==
    "direct"`` and an explicit sparse ``matrix`` a sparse LU factorization is
    used; otherwise Jacobi-preconditioned conjugate gradients (``diagonal``
    supplies the preconditioner).
    """
    rhs = np.asarray(rhs, dtype=float)
    if not np.any(rhs):
        return np.zeros_like(rhs)
    if cfg.linear_solver == "direct" and matrix is not None:
        m = matrix if sp.isspmatrix_csc(matrix) else sp.csc_matrix(matrix)
        # SPD: symmetric ordering, no pivoting
        lu = spla.splu(m, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})
        return lu.solve(rhs)
    n = rhs.size
    lin = spla.LinearOperator((n, n), matvec=action, dtype=float)
    prec = None
    if diagonal is not None:
        inv = 1.0 / np.asarray(diagonal, dtype=float)
        prec = spla.LinearOperator((n, n), matvec=lambda v: inv * v, dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    x, status = spla.cg(lin, rhs, x0=x0, rtol=cfg.linear_tol, atol=0.0, maxiter=cfg.linear_maxiter, M=prec, callback=cb)
    if info is not None:
        info.linear_iterations += count[0]
    if status != 0:
        raise NoConvergence(f"conjugate gradients did not reach rtol={cfg.linear_tol} in {cfg.linear_maxiter} iterations")
    return x


def dense_solve(matrix, rhs):
    """Dense Gaussian elimination; the test oracle for :func:`solve_linear`."""
    a = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
    if a.shape[0] > 1000:
        raise ValueError("dense oracle is limited to 1000 unknowns")
    return np.linalg.solve(a, np.asarray(rhs, dtype=float))


def newton_solve(residual, jacobian, x0, cfg, scale, *, time=None, info=None):
    """Damped Newton with residual backtracking.

    ``residual(x)`` returns the residual vector, ``jacobian(x)`` returns
    ``(matrix, diagonal)``.  Converges when ``max|F| <= atol + rtol * scale``.
    Residual norms of accepted iterates strictly decrease.
    """
    info = NewtonInfo() if info is None else info
    x = np.array(x0, dtype=float)
    f = residual(x)
    norm = float(np.max(np.abs(f))) if f.size else 0.0
    info.residuals.append(norm)
    tol = cfg.newton_atol + cfg.newton_rtol * scale
    for it in range(cfg.newton_maxiter):
        if norm <= tol:
            info.iterations = it
            return x, info
        mat, diag = jacobian(x)
        dx = solve_linear(lambda v: mat @ v, -f, cfg, matrix=mat, diagonal=diag, info=info)
        lam = cfg.damping
        while True:
            xt = x + lam * dx
            ft = residual(xt)
            nt = float(np.max(np.abs(ft)))
            if nt < norm:
                break
            if np.max(np.abs(lam * dx)) <= 4 * np.finfo(float).eps * max(1.0, np.max(np.abs(x))):
                # Update at rounding level: the residual floor is reached.
                info.iterations = it + 1
                return x, info
            lam *= 0.5
            if lam < 1e-10:
                raise NewtonDivergence(
                    f"line search failed at residual {norm:.3e}", time=time, residuals=info.residuals
                )
        x, f, norm = xt, ft, nt
        info.residuals.append(norm)
    if norm <= tol:
        info.iterations = cfg.newton_maxiter
        return x, info
    raise NewtonDivergence(
        f"no convergence in {cfg.newton_maxiter} Newton iterations (residual {norm:.3e}, tol {tol:.3e})",
        time=time,
        residuals=info.residuals,
    )


def implicit_step(u_prev, tau, q, op, cfg, *, time=None, return_info=False):
    """One implicit Euler step: solve ``u + tau(-Δ_h u + |u|^{q-1}u) = u_prev``
    at interior nodes with the Dirichlet data of ``op``."""
    if not op.grid.same_as(u_prev.grid):
        raise GridMismatch("field and operator live on different grids")
    if not tau > 0:
        raise ValueError("tau must be positive")
    if not q > 1:
        raise ValueError("q must exceed 1")
    b = u_prev.interior
    if np.any(b < 0):
        raise NegativeInput(f"u_prev has negative interior values (min {b.min():.3e})")
    A = op.neg_lap_ii
    rhs = b + tau * op.boundary_source()
    # the Jacobian keeps A's pattern; only its diagonal changes between iterates
    mat = op.csc_pattern.copy()
    base = tau * mat.data
    base[op.diag_positions] += 1.0
    base_diag = base[op.diag_positions]

    def residual(x):
        return x + tau * (A @ x + signed_power(x, q)) - rhs

    def jacobian(x):
        d = tau * q * np.abs(x) ** (q - 1)
        mat.data[:] = base
        mat.data[op.diag_positions] += d
        return mat, base_diag + d

    x0 = b.copy()
    # at the solution 0 <= u <= max rhs, so each term is bounded by this
    rmax = float(np.max(np.abs(rhs), initial=0.0))
    scale = rmax + tau * op.row_abs_sum * rmax
    info = NewtonInfo()
    x, info = newton_solve(residual, jacobian, x0, cfg, max(scale, 1.0), time=time, info=info)
    floor = -(cfg.newton_atol + cfg.newton_rtol * max(scale, 1.0))
    if np.any(x < floor):
        raise NewtonDivergence(f"resolvent produced negative values (min {x.min():.3e})", time=time)
    x = np.maximum(x, 0.0)
    out = Field.from_interior(op.grid, x, op.boundary_values)
    return (out, info) if return_info else out


def scalar_resolvent(k, tau, q):
    """Root of ``u + tau u^q = k`` for ``k >= 0`` (scalar Newton from above)."""
    k = float(k)
    if k <= 0:
        return 0.0
    # Newton on a convex increasing function started above the root decreases
    # monotonically; start at min(k, (k/tau)^(1/q)) which bounds the root.
    u = min(k, (k / tau) ** (1.0 / q))
    for _ in range(200):
        f = u + tau * u**q - k
        un = u - f / (1.0 + tau * q * u ** (q - 1))
        if un >= u or u - un <= 1e-16 * u:
            return un if un < u else u
        u = un
    return u
