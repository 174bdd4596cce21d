"""Newton solver with an analytic block-tridiagonal Jacobian."""

from __future__ import annotations
from dataclasses import dataclass
import enum
from typing import Callable

from numba import njit
import numpy as np
from traitlets.log import get_logger

from biofilm_fv.numerics.potential import (
    consumption_truncated_partials,
    diffusivity_plus,
    diffusivity_plus_prime,
    mobility,
    mobility_delta,
    mobility_delta_prime,
    production_truncated_partials,
)
from biofilm_fv.numerics.scheme import (
    ExtrapolatedState,
    Grid,
    History,
    Model,
    NonFiniteResidualError,
    SchemeConfig,
    State,
    coefficient_field,
    face_average,
    time_stencil,
)

# Position of each unknown / equation inside a cell block
V, U, MU = 0, 1, 2
BLOCK = 3


class Damping(enum.Enum):
    NONE = "none"
    ARMIJO = "armijo"


@dataclass(frozen=True)
class NewtonConfig:
    """Stopping and damping parameters of :func:`newton_solve`.

    ``abs_tol`` bounds the max-norm of the (cell-width scaled) residual.
    ``rel_tol`` stops the iteration once an update no longer changes the
    iterate relative to its size; convergence is still judged by ``abs_tol``.
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-12
    max_iters: int = 25
    damping: Damping = Damping.ARMIJO
    backtracking_factor: float = 0.5
    min_step: float = 2.0**-10

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise SolverError(f"abs_tol must be positive, got {self.abs_tol}")
        if self.rel_tol < 0:
            raise SolverError(f"rel_tol must be non-negative, got {self.rel_tol}")
        if self.max_iters < 1:
            raise SolverError(f"max_iters must be at least 1, got {self.max_iters}")
        if not 0 < self.backtracking_factor < 1:
            raise SolverError("backtracking_factor must lie in (0, 1)")
        if not 0 < self.min_step <= 1:
            raise SolverError("min_step must lie in (0, 1]")


@dataclass(frozen=True)
class NewtonReport:
    iterations: int
    final_residual_norm: float
    converged: bool
    residual_norms: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class BlockTridiagonalMatrix:
    """Square matrix of ``n`` x ``n`` blocks of size 3 x 3.

    ``lower[i]`` is block ``(i + 1, i)``, ``upper[i]`` is block ``(i, i + 1)``.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        n = self.diag.shape[0]
        if self.diag.shape != (n, BLOCK, BLOCK):
            raise SolverError(f"diagonal blocks have shape {self.diag.shape}")
        off = (max(n - 1, 0), BLOCK, BLOCK)
        if self.lower.shape != off or self.upper.shape != off:
            raise SolverError(
                f"off-diagonal blocks have shapes {self.lower.shape}, {self.upper.shape}"
            )

    @classmethod
    def zeros(cls, n_blocks: int) -> BlockTridiagonalMatrix:
        off = (max(n_blocks - 1, 0), BLOCK, BLOCK)
        return cls(
            lower=np.zeros(off), diag=np.zeros((n_blocks, BLOCK, BLOCK)), upper=np.zeros(off)
        )

    @classmethod
    def identity(cls, n_blocks: int) -> BlockTridiagonalMatrix:
        matrix = cls.zeros(n_blocks)
        matrix.diag[:] = np.eye(BLOCK)
        return matrix

    @property
    def n_blocks(self) -> int:
        return self.diag.shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        blocks = np.asarray(x, dtype=float).reshape(self.n_blocks, BLOCK)
        out = np.einsum("nij,nj->ni", self.diag, blocks)
        out[:-1] += np.einsum("nij,nj->ni", self.upper, blocks[1:])
        out[1:] += np.einsum("nij,nj->ni", self.lower, blocks[:-1])
        return out.reshape(np.shape(x))

    def to_dense(self) -> np.ndarray:
        n = self.n_blocks
        dense = np.zeros((BLOCK * n, BLOCK * n))
        for i in range(n):
            rows = slice(BLOCK * i, BLOCK * (i + 1))
            dense[rows, rows] = self.diag[i]
            if i + 1 < n:
                cols = slice(BLOCK * (i + 1), BLOCK * (i + 2))
                dense[rows, cols] = self.upper[i]
                dense[cols, rows] = self.lower[i]
        return dense


# ---------------------------------------------------------------------------
# Jacobian
# ---------------------------------------------------------------------------
def _add_face_flux(J: BlockTridiagonalMatrix, eq: int, var: int, d_left, d_right):
    """Scatter the derivatives of a face flux into the rows of its two cells.

    The flux on face ``i + 1/2`` enters row ``i`` with a plus sign and row
    ``i + 1`` with a minus sign.
    """
    J.diag[:-1, eq, var] += d_left
    J.upper[:, eq, var] += d_right
    J.lower[:, eq, var] -= d_left
    J.diag[1:, eq, var] -= d_right


def assemble_jacobian(candidate: State, history: History, u_bar: ExtrapolatedState,
                      grid: Grid, dt: float, config: SchemeConfig) -> BlockTridiagonalMatrix:
    """Analytic derivative of :func:`~biofilm_fv.numerics.scheme.step_residual`."""
    n, dx = grid.n_cells, grid.dx
    p = config.params
    u, v, mu = candidate.u, candidate.v, candidate.mu
    tau = dx / dt * time_stencil(history).a0
    implicit = config.implicit_coefficients
    u_face = face_average(coefficient_field(candidate, u_bar.u_bar, config))

    J = BlockTridiagonalMatrix.zeros(n)

    # Substrate flux
    coef_G = p.D0 * diffusivity_plus(u_face) + config.kappa
    _add_face_flux(J, V, V, coef_G / dx, -coef_G / dx)
    if implicit:
        d_u = -p.D0 * diffusivity_plus_prime(u_face) * 0.5 * (v[1:] - v[:-1]) / dx
        _add_face_flux(J, V, U, d_u, d_u)

    # Biomass flux
    if config.model is Model.VOLUME_FILLING:
        if implicit:
            m = mobility_delta(u_face, config.delta)
            dm = mobility_delta_prime(u_face, config.delta)
        else:
            m = mobility(u_face)
            dm = None
    else:
        m = u_face
        dm = np.ones_like(u_face) if implicit else None
    _add_face_flux(J, U, MU, p.M0 * m / dx, -p.M0 * m / dx)
    if dm is not None:
        d_u = -p.M0 * dm * 0.5 * (mu[1:] - mu[:-1]) / dx
        _add_face_flux(J, U, U, d_u, d_u)

    # Gradient flux
    g1 = config.gamma1
    _add_face_flux(J, MU, U, g1 / dx, -g1 / dx)

    # Cell-local terms
    d = J.diag
    if config.model is Model.VOLUME_FILLING:
        d[:, U, U] += tau
        if config.truncate_sources:
            dg_du, dg_dv = consumption_truncated_partials(u, v)
            dh_du, dh_dv = production_truncated_partials(u, v, p.K)
            d[:, V, V] += tau - dx * p.Rc0 * dg_dv
            d[:, V, U] += -dx * p.Rc0 * dg_du
            d[:, U, U] += -dx * p.Rp0 * dh_du
            d[:, U, V] += -dx * p.Rp0 * dh_dv
        else:
            d[:, V, V] += tau + dx * p.Rc0 * u
            d[:, V, U] += dx * p.Rc0 * v
            d[:, U, U] += -dx * p.Rp0 * (1 - 2 * u) * v / (p.K + v)
            d[:, U, V] += -dx * p.Rp0 * u * (1 - u) * p.K / (p.K + v) ** 2
    else:
        Kt = p.K_tilde
        d[:, V, V] += tau * (1 - u) + dx * p.Rc0 * u * Kt / (Kt + v) ** 2
        d[:, V, U] += -tau * v + dx * p.Rc0 * v / (Kt + v)
        d[:, U, U] += tau - dx * p.Rp0 * v / (p.K + v)
        d[:, U, V] += -dx * p.Rp0 * u * p.K / (p.K + v) ** 2
    d[:, MU, MU] += -dx

    return J


# ---------------------------------------------------------------------------
# Block Thomas algorithm
# ---------------------------------------------------------------------------
_PIVOT_TOL = 1e-15


@njit(cache=True)
def _is_singular(block, tol):
    scale = np.max(np.abs(block))
    if scale == 0.0:
        return True
    return abs(np.linalg.det(block / scale)) <= tol


@njit(cache=True)
def _block_thomas(lower, diag, upper, rhs, tol):
    """Forward elimination and back substitution over 3 x 3 blocks.

    Returns the solution and the index of the first singular pivot block,
    or -1 when elimination succeeded.
    """
    n = diag.shape[0]
    m = diag.shape[1]
    c_prime = np.zeros((max(n - 1, 0), m, m))
    d_prime = np.zeros((n, m))
    x = np.zeros((n, m))

    pivot = diag[0].copy()
    if _is_singular(pivot, tol):
        return x, 0
    if n > 1:
        c_prime[0] = np.linalg.solve(pivot, upper[0])
    d_prime[0] = np.linalg.solve(pivot, rhs[0])

    for i in range(1, n):
        pivot = diag[i] - lower[i - 1] @ c_prime[i - 1]
        if _is_singular(pivot, tol):
            return x, i
        if i < n - 1:
            c_prime[i] = np.linalg.solve(pivot, upper[i])
        d_prime[i] = np.linalg.solve(pivot, rhs[i] - lower[i - 1] @ d_prime[i - 1])

    x[n - 1] = d_prime[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = d_prime[i] - c_prime[i] @ x[i + 1]
    return x, -1


def solve_block_tridiagonal(A: BlockTridiagonalMatrix, rhs: np.ndarray) -> np.ndarray:
    """Solve ``A x = rhs`` by block elimination without block pivoting."""
    rhs = np.asarray(rhs, dtype=float)
    blocks = np.ascontiguousarray(rhs.reshape(A.n_blocks, BLOCK))
    x, failed = _block_thomas(
        np.ascontiguousarray(A.lower, dtype=float),
        np.ascontiguousarray(A.diag, dtype=float),
        np.ascontiguousarray(A.upper, dtype=float),
        blocks,
        _PIVOT_TOL,
    )
    if failed >= 0:
        raise SingularBlockError(int(failed))
    return x.reshape(rhs.shape)


# ---------------------------------------------------------------------------
# Newton iteration
# ---------------------------------------------------------------------------
_ARMIJO_SLOPE = 1e-4


def _max_norm(r: np.ndarray) -> float:
    return float(np.max(np.abs(r))) if r.size else 0.0


def _line_search(x, step, r, residual_fn, config: NewtonConfig):
    """Return (step length, new iterate, new residual)."""
    if config.damping is Damping.NONE:
        trial = x + step
        return 1.0, trial, residual_fn(State.unpack(trial))

    merit = 0.5 * float(r @ r)
    lam = 1.0
    while True:
        trial = x + lam * step
        try:
            r_trial = residual_fn(State.unpack(trial))
        except NonFiniteResidualError:
            if lam * config.backtracking_factor < config.min_step:
                raise
            r_trial = None
        if r_trial is not None:
            sufficient = 0.5 * float(r_trial @ r_trial) <= (
                1 - 2 * _ARMIJO_SLOPE * lam
            ) * merit
            if sufficient or lam * config.backtracking_factor < config.min_step:
                return lam, trial, r_trial
        lam *= config.backtracking_factor
        get_logger().debug("Newton backtracking to step length %g", lam)


def newton_solve(
    initial_guess: State,
    residual_fn: Callable[[State], np.ndarray],
    jacobian_fn: Callable[[State], BlockTridiagonalMatrix],
    config: NewtonConfig = NewtonConfig(),
) -> tuple[State, NewtonReport]:
    """Solve ``residual_fn(x) = 0`` starting from ``initial_guess``.

    Raises :class:`NewtonConvergenceError` carrying the report when the
    max-norm of the residual is still above ``config.abs_tol`` after
    ``config.max_iters`` iterations.
    """
    log = get_logger()
    state = initial_guess
    x = state.pack()
    r = residual_fn(state)
    norm = _max_norm(r)
    norms = [norm]
    iterations = 0

    while norm > config.abs_tol and iterations < config.max_iters:
        step = solve_block_tridiagonal(jacobian_fn(state), -r)
        lam, x, r = _line_search(x, step, r, residual_fn, config)
        state = State.unpack(x)
        iterations += 1
        norm = _max_norm(r)
        norms.append(norm)
        log.debug("Newton iteration %d: residual %.3e, step length %g",
                  iterations, norm, lam)
        if lam * _max_norm(step) <= config.rel_tol * (1 + _max_norm(x)):
            break

    report = NewtonReport(
        iterations=iterations,
        final_residual_norm=norm,
        converged=norm <= config.abs_tol,
        residual_norms=tuple(norms),
    )
    if not report.converged:
        log.warning("Newton did not converge after %d iterations (residual %.3e)",
                    iterations, norm)
        raise NewtonConvergenceError(report)
    return state, report


class SolverError(Exception):
    pass


class SingularBlockError(SolverError, ArithmeticError):
    def __init__(self, block: int):
        super().__init__(block)
        self.block = block

    def __str__(self):
        return f"singular pivot block at index {self.block}"


class NewtonConvergenceError(SolverError, RuntimeError):
    def __init__(self, report: NewtonReport):
        super().__init__(report)
        self.report = report

    def __str__(self):
        return (
            f"Newton iteration did not converge in {self.report.iterations} "
            f"iterations (residual {self.report.final_residual_norm:.3e})"
        )
