"""Discrete energy, entropy, mass and norm functionals."""

from __future__ import annotations
from dataclasses import asdict, dataclass

import numpy as np

from biofilm_fv.numerics.potential import (
    PotentialParams,
    entropy_phi,
    entropy_phi_delta,
    f_delta,
)
from biofilm_fv.numerics.scheme import Grid, State
from biofilm_fv.params import ScaledParams


DIAGNOSTICS_FIELDS = (
    "t",
    "mass_u",
    "mass_v",
    "energy",
    "entropy",
    "min_u",
    "max_u",
    "min_v",
    "max_v",
    "newton_iters",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass_u: float
    mass_v: float
    energy: float
    entropy: float
    min_u: float
    max_u: float
    min_v: float
    max_v: float
    newton_iters: int

    def as_row(self) -> tuple:
        return tuple(asdict(self)[name] for name in DIAGNOSTICS_FIELDS)


def mass(values: np.ndarray, grid: Grid) -> float:
    return float(grid.dx * np.sum(values))


def discrete_energy(state: State, grid: Grid, params: ScaledParams, delta: float,
                    include_gamma_factors: bool = True) -> float:
    """Gradient energy on the interior faces plus the regularized bulk energy."""
    _check_grid(state.u, grid)
    dx = grid.dx
    gamma1 = params.Gamma1_0 if include_gamma_factors else 1.0
    gamma2 = params.Gamma2_0 if include_gamma_factors else 1.0
    gradient = np.diff(state.u) / dx
    bulk = f_delta(state.u, PotentialParams(N=params.N, lam=params.lam, delta=delta))
    return float(dx * 0.5 * gamma1 * np.sum(gradient**2) + dx * gamma2 * np.sum(bulk))


def discrete_entropy(state: State, grid: Grid, delta: float | None = None) -> float:
    """Sum of ``dx * Phi_delta(u_i)``.

    With ``delta=None`` the unregularized density is used, which requires
    every ``u_i`` in [0, 1].
    """
    _check_grid(state.u, grid)
    density = entropy_phi(state.u) if delta is None else entropy_phi_delta(state.u, delta)
    return float(grid.dx * np.sum(density))


def l2_distance(a: np.ndarray, b: np.ndarray, dx: float) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise MeshMismatchError(f"cannot compare arrays of shapes {a.shape} and {b.shape}")
    return float(np.sqrt(dx * np.sum((a - b) ** 2)))


def linf_bounds(state: State) -> tuple[float, float, float, float]:
    return (
        float(np.min(state.u)),
        float(np.max(state.u)),
        float(np.min(state.v)),
        float(np.max(state.v)),
    )


def restrict(fine: np.ndarray, coarse_cells: int) -> np.ndarray:
    """Average each group of fine children onto a nested coarse mesh."""
    fine = np.asarray(fine, dtype=float)
    if coarse_cells < 1 or len(fine) % coarse_cells:
        raise MeshMismatchError(
            f"a mesh of {coarse_cells} cells is not nested in one of {len(fine)} cells"
        )
    return fine.reshape(coarse_cells, -1).mean(axis=1)


def record(t: float, state: State, grid: Grid, params: ScaledParams, delta: float,
           include_gamma_factors: bool = True, newton_iters: int = 0) -> DiagnosticsRecord:
    min_u, max_u, min_v, max_v = linf_bounds(state)
    return DiagnosticsRecord(
        t=t,
        mass_u=mass(state.u, grid),
        mass_v=mass(state.v, grid),
        energy=discrete_energy(state, grid, params, delta, include_gamma_factors),
        entropy=discrete_entropy(state, grid, delta),
        min_u=min_u,
        max_u=max_u,
        min_v=min_v,
        max_v=max_v,
        newton_iters=newton_iters,
    )


def _check_grid(values: np.ndarray, grid: Grid):
    if len(values) != grid.n_cells:
        raise MeshMismatchError(
            f"state has {len(values)} cells, grid has {grid.n_cells}"
        )


class MeshMismatchError(ValueError):
    pass
