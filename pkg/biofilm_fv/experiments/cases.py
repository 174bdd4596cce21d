"""Initial data and default resolutions of the five reference experiments."""

from __future__ import annotations
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np


InitialProfile = Callable[[np.ndarray], np.ndarray]


def constant(value: float, x):
    return np.full_like(np.asarray(x, dtype=float), value)


def sine_squared(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * np.sin(2 * np.pi * x) ** 2 + 2e-2


def step_profile(x):
    x = np.asarray(x, dtype=float)
    return np.where(x <= 0.2, 0.2, 1e-2)


def parabola(x):
    x = np.asarray(x, dtype=float)
    return -((x - 0.5) ** 2) + 1 / 3


@dataclass(frozen=True)
class Resolution:
    n_cells: int
    dt: float


@dataclass(frozen=True)
class ConvergenceStudy:
    """A refinement sequence measured against a fine reference run.

    ``kind`` is ``"space"`` (meshes refined at fixed ``dt``) or ``"time"``
    (time steps refined on a fixed mesh).
    """

    kind: str
    reference: Resolution
    levels: tuple[Resolution, ...]

    def step_sizes(self) -> np.ndarray:
        if self.kind == "space":
            return np.array([1 / level.n_cells for level in self.levels])
        return np.array([level.dt for level in self.levels])

    def resolutions(self) -> np.ndarray:
        if self.kind == "space":
            return np.array([level.n_cells for level in self.levels], dtype=float)
        return self.step_sizes()


@dataclass(frozen=True)
class SimulationCase:
    case_id: int
    initial_u: InitialProfile
    initial_v: InitialProfile
    T: float
    n_cells: int = 128
    dt: float = 1e-3
    study: ConvergenceStudy | None = field(default=None, compare=False)


_SPACE_DT = 1e-5
_TIME_CELLS = 128

_CASES = {
    1: SimulationCase(1, sine_squared, partial(constant, 0.75), T=10.0),
    2: SimulationCase(2, step_profile, partial(constant, 0.1), T=5.0),
    3: SimulationCase(3, parabola, partial(constant, 0.3), T=1.0),
    4: SimulationCase(
        4,
        parabola,
        partial(constant, 0.3),
        T=1.0,
        n_cells=2048,
        dt=_SPACE_DT,
        study=ConvergenceStudy(
            kind="space",
            reference=Resolution(2048, _SPACE_DT),
            levels=tuple(Resolution(2**j, _SPACE_DT) for j in range(4, 11)),
        ),
    ),
    5: SimulationCase(
        5,
        parabola,
        partial(constant, 0.3),
        T=1.0,
        n_cells=_TIME_CELLS,
        dt=1 / (2**14 * _TIME_CELLS),
        study=ConvergenceStudy(
            kind="time",
            reference=Resolution(_TIME_CELLS, 1 / (2**14 * _TIME_CELLS)),
            levels=tuple(
                Resolution(_TIME_CELLS, 1 / (2 ** (2 * j) * _TIME_CELLS))
                for j in range(1, 7)
            ),
        ),
    ),
}


def get_case(case_id: int) -> SimulationCase:
    try:
        return _CASES[int(case_id)]
    except (KeyError, ValueError, TypeError):
        raise UnknownCaseError(case_id) from None


def case_ids() -> tuple[int, ...]:
    return tuple(_CASES)


class UnknownCaseError(KeyError):
    def __init__(self, case_id):
        self.case_id = case_id
        super().__init__(f"unknown test case {case_id!r}; expected one of {sorted(_CASES)}")
