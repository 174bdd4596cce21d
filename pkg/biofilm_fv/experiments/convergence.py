"""Observed-order estimation and study results."""

from __future__ import annotations
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from biofilm_fv.numerics.scheme import Model

if TYPE_CHECKING:
    from biofilm_fv.experiments.runner import Trajectory


def observed_orders(errors, step_sizes) -> np.ndarray:
    """Orders ``log(e_j / e_{j+1}) / log(h_j / h_{j+1})`` of consecutive pairs."""
    errors = np.asarray(errors, dtype=float)
    step_sizes = np.asarray(step_sizes, dtype=float)
    if errors.shape != step_sizes.shape:
        raise ValueError("errors and step sizes differ in length")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(errors[:-1] / errors[1:]) / np.log(step_sizes[:-1] / step_sizes[1:])


@dataclass(frozen=True, eq=False)
class ConvergenceResult:
    """Errors of a refinement sequence against its reference.

    ``resolutions`` holds cell counts for a space study and time steps for
    a time study; ``step_sizes`` holds the matching ``dx`` or ``dt``.
    """

    kind: str
    resolutions: np.ndarray
    step_sizes: np.ndarray
    errors_u: np.ndarray
    errors_v: np.ndarray

    def __post_init__(self):
        n = len(self.resolutions)
        if not (len(self.step_sizes) == len(self.errors_u) == len(self.errors_v) == n):
            raise ValueError("convergence arrays differ in length")

    @property
    def observed_orders_u(self) -> np.ndarray:
        return observed_orders(self.errors_u, self.step_sizes)

    @property
    def observed_orders_v(self) -> np.ndarray:
        return observed_orders(self.errors_v, self.step_sizes)

    def table(self) -> np.ndarray:
        """Rows ``resolution, error_u, error_v, order_u, order_v``.

        The first row has no predecessor and carries NaN orders.
        """
        orders_u = np.concatenate(([np.nan], self.observed_orders_u))
        orders_v = np.concatenate(([np.nan], self.observed_orders_v))
        return np.column_stack(
            (self.resolutions, self.errors_u, self.errors_v, orders_u, orders_v)
        )


@dataclass(frozen=True, eq=False)
class SnapshotDifference:
    t: float
    l2_u: float
    l2_v: float


@dataclass(frozen=True, eq=False)
class ModelComparison:
    trajectories: dict[Model, Trajectory]
    differences: tuple[SnapshotDifference, ...]
