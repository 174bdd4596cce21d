"""Finite-volume residual of the BDF2 scheme for the biofilm system.

Unknowns are stored per cell in the order ``(v, u, mu)``; the residual of
cell ``i`` is the triple (substrate balance, biomass balance, chemical
potential definition), each multiplied by the cell width. All three flux
families vanish on the two boundary faces, which realizes the no-flux
boundary conditions without ghost cells.
"""

from __future__ import annotations
from dataclasses import dataclass, field
import enum
from functools import cached_property
from typing import NamedTuple

import numpy as np

from biofilm_fv.numerics.potential import (
    PotentialParams,
    diffusivity_plus,
    f_delta_prime,
    mobility,
    mobility_delta,
    consumption_truncated,
    production_truncated,
)
from biofilm_fv.params import ScaledParams


COMPONENTS = ("v", "u", "mu")

# Alternative command line names of the models
MODEL_ALIASES = {"this-paper": "volume-filling"}


class Model(enum.Enum):
    # Degenerate model with solvent factors (1 - u) in mobility and production
    VOLUME_FILLING = "volume-filling"
    # Two-phase substrate balance for w = (1 - u) v, linear mobility
    WANG_ZHANG = "wang-zhang"

    @classmethod
    def _missing_(cls, value):
        if value in MODEL_ALIASES:
            return cls(MODEL_ALIASES[value])
        return None


class CoefficientTreatment(enum.Enum):
    EXTRAPOLATED = "extrapolated"
    IMPLICIT = "implicit"


@dataclass(frozen=True)
class Grid:
    """Uniform mesh of ``n_cells`` finite volumes on (0, 1)."""

    n_cells: int

    def __post_init__(self):
        if self.n_cells < 1:
            raise SchemeError(f"n_cells must be positive, got {self.n_cells}")

    @property
    def dx(self) -> float:
        return 1.0 / self.n_cells

    @cached_property
    def cell_centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, T] into ``n_steps`` steps of size ``dt``."""

    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise SchemeError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise SchemeError(f"n_steps must be non-negative, got {self.n_steps}")

    @classmethod
    def from_horizon(cls, T: float, dt: float) -> TimeGrid:
        n_steps = round(T / dt)
        if abs(n_steps * dt - T) > 1e-9 * max(T, 1.0):
            raise SchemeError(f"horizon T={T} is not a multiple of dt={dt}")
        return cls(dt=dt, n_steps=n_steps)

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    def time(self, step: int) -> float:
        return step * self.dt


@dataclass(frozen=True, eq=False)
class State:
    """Cell values of one time level."""

    u: np.ndarray
    v: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        n = len(self.u)
        if len(self.v) != n or len(self.mu) != n:
            raise SchemeError(
                f"state arrays differ in length: u={n}, v={len(self.v)}, "
                f"mu={len(self.mu)}"
            )

    @property
    def n_cells(self) -> int:
        return len(self.u)

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.u))
            and np.all(np.isfinite(self.v))
            and np.all(np.isfinite(self.mu))
        )

    def pack(self) -> np.ndarray:
        """Interleave the fields into one vector ``[v_1, u_1, mu_1, v_2, ...]``."""
        return np.column_stack((self.v, self.u, self.mu)).ravel()

    @classmethod
    def unpack(cls, x: np.ndarray) -> State:
        blocks = np.asarray(x, dtype=float).reshape(-1, 3)
        return cls(u=blocks[:, 1].copy(), v=blocks[:, 0].copy(), mu=blocks[:, 2].copy())

    def copy(self) -> State:
        return State(u=self.u.copy(), v=self.v.copy(), mu=self.mu.copy())


@dataclass(frozen=True)
class History:
    """The two previous time levels of step ``step_index``.

    At the startup step (``step_index == 1``) both levels are the initial
    state and the implicit Euler formula is used.
    """

    prev: State
    prev2: State
    step_index: int

    def __post_init__(self):
        if self.prev.n_cells != self.prev2.n_cells:
            raise SchemeError("history levels live on different grids")
        if self.step_index < 1:
            raise SchemeError(f"step_index must be >= 1, got {self.step_index}")

    @classmethod
    def startup(cls, initial: State) -> History:
        return cls(prev=initial, prev2=initial, step_index=1)

    def advance(self, new: State) -> History:
        return History(prev=new, prev2=self.prev, step_index=self.step_index + 1)

    @property
    def is_startup(self) -> bool:
        return self.step_index == 1


@dataclass(frozen=True)
class SchemeConfig:
    params: ScaledParams
    model: Model = Model.VOLUME_FILLING
    coefficient_treatment: CoefficientTreatment = CoefficientTreatment.EXTRAPOLATED
    delta: float = 1e-8
    include_gamma_factors: bool = True
    kappa: float = 0.0
    truncate_sources: bool = False

    def __post_init__(self):
        if not 0 < self.delta < 0.5:
            raise SchemeError(f"delta must lie in (0, 1/2), got {self.delta}")
        if self.kappa < 0:
            raise SchemeError(f"kappa must be non-negative, got {self.kappa}")

    @property
    def gamma1(self) -> float:
        return self.params.Gamma1_0 if self.include_gamma_factors else 1.0

    @property
    def gamma2(self) -> float:
        return self.params.Gamma2_0 if self.include_gamma_factors else 1.0

    @property
    def potential_params(self) -> PotentialParams:
        return PotentialParams(N=self.params.N, lam=self.params.lam, delta=self.delta)

    @property
    def implicit_coefficients(self) -> bool:
        return self.coefficient_treatment is CoefficientTreatment.IMPLICIT


@dataclass(frozen=True, eq=False)
class ExtrapolatedState:
    u_bar: np.ndarray = field(repr=False)


class TimeStencil(NamedTuple):
    """Backward difference ``(a0 y^k + a1 y^{k-1} + a2 y^{k-2}) / dt``."""

    a0: float
    a1: float
    a2: float


BDF2 = TimeStencil(1.5, -2.0, 0.5)
IMPLICIT_EULER = TimeStencil(1.0, -1.0, 0.0)


def time_stencil(history: History) -> TimeStencil:
    return IMPLICIT_EULER if history.is_startup else BDF2


def extrapolate(history: History) -> ExtrapolatedState:
    """Second-order predictor 2 u^{k-1} - u^{k-2}; the initial u at startup."""
    if history.is_startup:
        return ExtrapolatedState(u_bar=history.prev.u.copy())
    return ExtrapolatedState(u_bar=2 * history.prev.u - history.prev2.u)


def face_average(a: np.ndarray) -> np.ndarray:
    """Arithmetic means on the interior faces."""
    return 0.5 * (a[:-1] + a[1:])


def divergence(flux: np.ndarray) -> np.ndarray:
    """Flux differences ``F_{i+1/2} - F_{i-1/2}`` with zero boundary fluxes."""
    padded = np.zeros(len(flux) + 2)
    padded[1:-1] = flux
    return np.diff(padded)


# ---------------------------------------------------------------------------
# Numerical fluxes
# ---------------------------------------------------------------------------
def flux_G(u_face, v_left, v_right, dx: float, params: ScaledParams, kappa: float = 0.0):
    """Substrate flux -(D0 D_+(u) + kappa) (v_R - v_L) / dx."""
    gradient = (np.asarray(v_right) - np.asarray(v_left)) / dx
    return -(params.D0 * diffusivity_plus(u_face) + kappa) * gradient


def flux_F(u_face, mu_left, mu_right, dx: float, params: ScaledParams,
           delta: float | None = None):
    """Biomass flux -M0 M(u) (mu_R - mu_L) / dx.

    With ``delta`` the mobility is the truncated M_delta, which stays
    positive for arguments outside [0, 1].
    """
    m = mobility(u_face) if delta is None else mobility_delta(u_face, delta)
    return -params.M0 * m * (np.asarray(mu_right) - np.asarray(mu_left)) / dx


def flux_F_linear(u_face, mu_left, mu_right, dx: float, params: ScaledParams):
    """Biomass flux -M0 u (mu_R - mu_L) / dx of the Wang-Zhang model."""
    return -params.M0 * np.asarray(u_face) * (np.asarray(mu_right) - np.asarray(mu_left)) / dx


def flux_H(u_left, u_right, dx: float, params: ScaledParams,
           include_gamma_factors: bool = True):
    """Gradient flux -Gamma1 (u_R - u_L) / dx."""
    gamma1 = params.Gamma1_0 if include_gamma_factors else 1.0
    return -gamma1 * (np.asarray(u_right) - np.asarray(u_left)) / dx


# ---------------------------------------------------------------------------
# Residual assembly
# ---------------------------------------------------------------------------
def coefficient_field(candidate: State, u_bar: np.ndarray, config: SchemeConfig) -> np.ndarray:
    """The u values that enter the flux coefficients D_+ and M."""
    return candidate.u if config.implicit_coefficients else u_bar


def _assemble(
    candidate: State,
    prev: State,
    prev2: State,
    u_bar: np.ndarray,
    grid: Grid,
    dt: float,
    config: SchemeConfig,
    model: Model,
    stencil: TimeStencil,
) -> np.ndarray:
    if candidate.n_cells != grid.n_cells:
        raise SchemeError(
            f"candidate has {candidate.n_cells} cells, grid has {grid.n_cells}"
        )
    dx = grid.dx
    p = config.params
    u, v, mu = candidate.u, candidate.v, candidate.mu
    a0, a1, a2 = stencil
    scale = dx / dt

    u_face = face_average(coefficient_field(candidate, u_bar, config))
    G = flux_G(u_face, v[:-1], v[1:], dx, p, config.kappa)
    H = flux_H(u[:-1], u[1:], dx, p, config.include_gamma_factors)

    if model is Model.VOLUME_FILLING:
        delta = config.delta if config.implicit_coefficients else None
        F = flux_F(u_face, mu[:-1], mu[1:], dx, p, delta=delta)
        w, w1, w2 = v, prev.v, prev2.v
        if config.truncate_sources:
            consumption = -dx * p.Rc0 * consumption_truncated(u, v)
            production = dx * p.Rp0 * production_truncated(u, v, p.K)
        else:
            consumption = dx * p.Rc0 * u * v
            production = dx * p.Rp0 * u * (1 - u) * v / (p.K + v)
    else:
        F = flux_F_linear(u_face, mu[:-1], mu[1:], dx, p)
        w = (1 - u) * v
        w1 = (1 - prev.u) * prev.v
        w2 = (1 - prev2.u) * prev2.v
        consumption = dx * p.Rc0 * u * v / (p.K_tilde + v)
        production = dx * p.Rp0 * u * v / (p.K + v)

    r_v = scale * (a0 * w + a1 * w1 + a2 * w2) + divergence(G) + consumption
    r_u = scale * (a0 * u + a1 * prev.u + a2 * prev2.u) + divergence(F) - production
    r_mu = (
        divergence(H)
        + dx * config.gamma2 * f_delta_prime(u_bar, config.potential_params)
        - dx * mu
    )

    residual = np.column_stack((r_v, r_u, r_mu)).ravel()
    _check_finite(residual)
    return residual


def _check_finite(residual: np.ndarray):
    bad = np.flatnonzero(~np.isfinite(residual))
    if bad.size:
        raise NonFiniteResidualError(cell=int(bad[0] // 3), component=COMPONENTS[bad[0] % 3])


def residual_volume_filling(candidate: State, history: History, u_bar: ExtrapolatedState,
                            grid: Grid, dt: float, config: SchemeConfig) -> np.ndarray:
    """BDF2 residual of the volume-filling model (steps k >= 2)."""
    return _assemble(candidate, history.prev, history.prev2, u_bar.u_bar, grid, dt,
                     config, Model.VOLUME_FILLING, BDF2)


def residual_wang_zhang(candidate: State, history: History, u_bar: ExtrapolatedState,
                        grid: Grid, dt: float, config: SchemeConfig) -> np.ndarray:
    """BDF2 residual of the Wang-Zhang model (steps k >= 2)."""
    return _assemble(candidate, history.prev, history.prev2, u_bar.u_bar, grid, dt,
                     config, Model.WANG_ZHANG, BDF2)


def residual_first_step(candidate: State, initial: State, grid: Grid, dt: float,
                        config: SchemeConfig) -> np.ndarray:
    """Implicit Euler residual of the startup step, with u_bar = u^0."""
    return _assemble(candidate, initial, initial, initial.u, grid, dt, config,
                     config.model, IMPLICIT_EULER)


def step_residual(candidate: State, history: History, u_bar: ExtrapolatedState,
                  grid: Grid, dt: float, config: SchemeConfig) -> np.ndarray:
    """Residual of step ``history.step_index`` for ``config.model``."""
    return _assemble(candidate, history.prev, history.prev2, u_bar.u_bar, grid, dt,
                     config, config.model, time_stencil(history))


def consistent_potential(u: np.ndarray, grid: Grid, config: SchemeConfig) -> np.ndarray:
    """Chemical potential that makes the third residual component vanish at u."""
    H = flux_H(u[:-1], u[1:], grid.dx, config.params, config.include_gamma_factors)
    return divergence(H) / grid.dx + config.gamma2 * f_delta_prime(u, config.potential_params)


class SchemeError(Exception):
    pass


class NonFiniteResidualError(SchemeError, ArithmeticError):
    """A residual entry is NaN or infinite."""

    def __init__(self, cell: int, component: str):
        super().__init__(cell, component)
        self.cell = cell
        self.component = component

    def __str__(self):
        return f"non-finite residual in cell {self.cell} ({self.component} equation)"
