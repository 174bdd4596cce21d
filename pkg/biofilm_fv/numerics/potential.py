"""Flory-Huggins free energy, its regularization, mobilities and entropy density.

All functions are vectorised: they accept scalars or arrays and return numpy
scalars or arrays of the same shape. The regularized functions are defined on
the whole real line; the unregularized ones raise
:class:`PotentialDomainError` outside their domain.
"""

from __future__ import annotations
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import xlogy


@dataclass(frozen=True)
class PotentialParams:
    N: float
    lam: float
    delta: float

    def __post_init__(self):
        if not 0 < self.delta < 0.5:
            raise PotentialError(f"delta must lie in (0, 1/2), got {self.delta!r}")
        if not self.N > 0:
            raise PotentialError(f"N must be positive, got {self.N!r}")
        if not self.lam >= 0:
            raise PotentialError(f"lambda must be non-negative, got {self.lam!r}")


def _as_float_array(u):
    return np.asarray(u, dtype=float)


def _unwrap(out: np.ndarray):
    return out[()] if out.ndim == 0 else out


def _check_open_unit_interval(u: np.ndarray):
    if np.any((u <= 0) | (u >= 1)) or np.any(np.isnan(u)):
        raise PotentialDomainError("the Flory-Huggins potential requires 0 < u < 1")


# ---------------------------------------------------------------------------
# Singular part f1 and the full potential f = f1 + f2
# ---------------------------------------------------------------------------
def _f1(u, N):
    return u * np.log(u) / N + (1 - u) * np.log1p(-u)


def _f1_prime(u, N):
    return (np.log(u) + 1) / N - np.log1p(-u) - 1


def _f1_double_prime(u, N):
    return 1 / (N * u) + 1 / (1 - u)


def f(u, N: float, lam: float):
    """Flory-Huggins mixing energy (1/N) u log u + (1-u) log(1-u) + lam u (1-u)."""
    u = _as_float_array(u)
    _check_open_unit_interval(u)
    return _unwrap(_f1(u, N) + lam * u * (1 - u))


def f_prime(u, N: float, lam: float):
    u = _as_float_array(u)
    _check_open_unit_interval(u)
    return _unwrap(_f1_prime(u, N) + lam * (1 - 2 * u))


def f_double_prime(u, N: float, lam: float):
    u = _as_float_array(u)
    _check_open_unit_interval(u)
    return _unwrap(_f1_double_prime(u, N) - 2 * lam)


# ---------------------------------------------------------------------------
# Regularized singular part f1_delta
# ---------------------------------------------------------------------------
class Branch(NamedTuple):
    """Closed form of one piece of f1_delta with its two derivatives."""

    value: Callable[[np.ndarray], np.ndarray]
    first: Callable[[np.ndarray], np.ndarray]
    second: Callable[[np.ndarray], np.ndarray]


def breakpoints(delta: float) -> tuple[float, ...]:
    return (-2.0, -1.0, delta, 1.0 - delta, 2.0, 3.0)


@lru_cache(maxsize=32)
def f1_delta_branches(params: PotentialParams) -> tuple[Branch, ...]:
    """Return the seven pieces of f1_delta, ordered from left to right.

    Outside ``(delta, 1 - delta)`` the singular part is continued by its
    second-order Taylor polynomial, then by a cubic that brings the second
    derivative linearly down to zero on ``[-2, -1]`` and ``[2, 3]``, and
    finally by affine functions. The result is C^2 with bounded derivative.
    """
    N, d = params.N, params.delta
    a = 1.0 - d
    # Taylor data at both ends of the core interval
    v1, p1, s1 = _f1(d, N), _f1_prime(d, N), _f1_double_prime(d, N)
    v2, p2, s2 = _f1(a, N), _f1_prime(a, N), _f1_double_prime(a, N)

    c2 = v1 - p1 * d + 0.5 * s1 * ((1 + d) ** 2 - 2 * d - 2.0 / 3.0)
    c1 = c2 - 4.0 / 3.0 * s1
    c3 = v2 + p2 * (d - 1) + s2 * (0.5 * (d + 1) ** 2 - 2 * d + 4.0 / 3.0)
    c4 = c3 - 4.5 * s2

    def zeros(u):
        return np.zeros_like(u)

    return (
        Branch(
            lambda u: (-s1 * (1.5 + d) + p1) * u + c1,
            lambda u: np.full_like(u, -s1 * (1.5 + d) + p1),
            zeros,
        ),
        Branch(
            lambda u: s1 * (u**3 / 6 + u**2 + (0.5 - d) * u) + p1 * u + c2,
            lambda u: s1 * (u**2 / 2 + 2 * u + 0.5 - d) + p1,
            lambda u: s1 * (u + 2),
        ),
        Branch(
            lambda u: v1 + p1 * (u - d) + 0.5 * s1 * (u - d) ** 2,
            lambda u: p1 + s1 * (u - d),
            lambda u: np.full_like(u, s1),
        ),
        Branch(
            lambda u: _f1(u, N),
            lambda u: _f1_prime(u, N),
            lambda u: _f1_double_prime(u, N),
        ),
        Branch(
            lambda u: v2 + p2 * (u - a) + 0.5 * s2 * (u - a) ** 2,
            lambda u: p2 + s2 * (u - a),
            lambda u: np.full_like(u, s2),
        ),
        Branch(
            lambda u: s2 * (-(u**3) / 6 + 1.5 * u**2 - (2 + a) * u) + p2 * u + c3,
            lambda u: s2 * (-(u**2) / 2 + 3 * u - (2 + a)) + p2,
            lambda u: s2 * (3 - u),
        ),
        Branch(
            lambda u: ((2.5 - a) * s2 + p2) * u + c4,
            lambda u: np.full_like(u, (2.5 - a) * s2 + p2),
            zeros,
        ),
    )


def _branch_conditions(u: np.ndarray, delta: float) -> list[np.ndarray]:
    b = breakpoints(delta)
    return [
        u < b[0],
        (u >= b[0]) & (u < b[1]),
        (u >= b[1]) & (u <= b[2]),
        (u > b[2]) & (u < b[3]),
        (u >= b[3]) & (u < b[4]),
        (u >= b[4]) & (u < b[5]),
        u >= b[5],
    ]


def _evaluate_f1_delta(u, params: PotentialParams, order: int):
    u = _as_float_array(u)
    branches = f1_delta_branches(params)
    out = np.piecewise(
        u,
        _branch_conditions(u, params.delta),
        [branch[order] for branch in branches],
    )
    return _unwrap(out)


def f1_delta(u, params: PotentialParams):
    return _evaluate_f1_delta(u, params, 0)


def f1_delta_prime(u, params: PotentialParams):
    return _evaluate_f1_delta(u, params, 1)


def f1_delta_double_prime(u, params: PotentialParams):
    return _evaluate_f1_delta(u, params, 2)


def breakpoint_mismatch(params: PotentialParams) -> np.ndarray:
    """Relative jumps of (value, first, second derivative) at each breakpoint.

    Row ``i`` compares branch ``i`` and branch ``i + 1`` of
    :func:`f1_delta_branches` at the ``i``-th breakpoint.
    """
    branches = f1_delta_branches(params)
    jumps = np.zeros((6, 3))
    for i, b in enumerate(breakpoints(params.delta)):
        point = np.array(b)
        for order in range(3):
            left = float(branches[i][order](point))
            right = float(branches[i + 1][order](point))
            scale = max(abs(left), abs(right))
            jumps[i, order] = abs(left - right) / scale if scale > 0 else 0.0
    return jumps


# ---------------------------------------------------------------------------
# Bounded extension of the regular part and the regularized potential
# ---------------------------------------------------------------------------
_F2_EXTENSION = (-1.0, 2.0)


def f2_ext(u, lam: float):
    """lam u (1-u) frozen outside [-1, 2]."""
    c = np.clip(_as_float_array(u), *_F2_EXTENSION)
    return _unwrap(lam * c * (1 - c))


def f2_ext_prime(u, lam: float):
    u = _as_float_array(u)
    inside = (u > _F2_EXTENSION[0]) & (u < _F2_EXTENSION[1])
    return _unwrap(np.where(inside, lam * (1 - 2 * u), 0.0))


def f2_ext_double_prime(u, lam: float):
    u = _as_float_array(u)
    inside = (u > _F2_EXTENSION[0]) & (u < _F2_EXTENSION[1])
    return _unwrap(np.where(inside, -2 * lam, 0.0))


def f_delta(u, params: PotentialParams):
    return f1_delta(u, params) + f2_ext(u, params.lam)


def f_delta_prime(u, params: PotentialParams):
    return f1_delta_prime(u, params) + f2_ext_prime(u, params.lam)


def f_delta_double_prime(u, params: PotentialParams):
    return f1_delta_double_prime(u, params) + f2_ext_double_prime(u, params.lam)


# ---------------------------------------------------------------------------
# Mobility and diffusivity
# ---------------------------------------------------------------------------
def mobility(u):
    u = _as_float_array(u)
    return _unwrap(u * (1 - u))


def mobility_delta(u, delta: float):
    """Mobility with its argument clamped to [delta, 1 - delta]."""
    c = np.clip(_as_float_array(u), delta, 1 - delta)
    return _unwrap(c * (1 - c))


def mobility_delta_prime(u, delta: float):
    u = _as_float_array(u)
    inside = (u > delta) & (u < 1 - delta)
    return _unwrap(np.where(inside, 1 - 2 * u, 0.0))


def diffusivity_plus(u):
    """Degenerate substrate diffusivity [1 - u] clamped to [0, 1]."""
    return _unwrap(np.clip(1 - _as_float_array(u), 0.0, 1.0))


def diffusivity_plus_prime(u):
    u = _as_float_array(u)
    return _unwrap(np.where((u > 0) & (u < 1), -1.0, 0.0))


# ---------------------------------------------------------------------------
# Entropy density
# ---------------------------------------------------------------------------
_LOG2 = np.log(2.0)


def entropy_phi(u):
    """u log u + (1-u) log(1-u) + log 2 on [0, 1], with 0 log 0 = 0."""
    u = _as_float_array(u)
    if np.any((u < 0) | (u > 1)) or np.any(np.isnan(u)):
        raise PotentialDomainError("the entropy density requires 0 <= u <= 1")
    return _unwrap(xlogy(u, u) + xlogy(1 - u, 1 - u) + _LOG2)


def _phi_core(u):
    return xlogy(u, u) + xlogy(1 - u, 1 - u) + _LOG2


def _phi_core_prime(u):
    return np.log(u) - np.log1p(-u)


def entropy_phi_delta(u, delta: float):
    """Convex density with second derivative 1/M_delta, vanishing to first
    order at u = 1/2.

    Inside ``(delta, 1 - delta)`` it coincides with :func:`entropy_phi`;
    outside it continues quadratically with curvature ``1/M(delta)``.
    """
    u = _as_float_array(u)
    lo, hi = delta, 1 - delta
    curvature = 1 / (delta * (1 - delta))
    out = np.piecewise(
        u,
        [u <= lo, (u > lo) & (u < hi), u >= hi],
        [
            lambda x: _phi_core(lo) + _phi_core_prime(lo) * (x - lo)
            + 0.5 * curvature * (x - lo) ** 2,
            _phi_core,
            lambda x: _phi_core(hi) + _phi_core_prime(hi) * (x - hi)
            + 0.5 * curvature * (x - hi) ** 2,
        ],
    )
    return _unwrap(out)


def entropy_phi_delta_prime(u, delta: float):
    u = _as_float_array(u)
    lo, hi = delta, 1 - delta
    curvature = 1 / (delta * (1 - delta))
    out = np.piecewise(
        u,
        [u <= lo, (u > lo) & (u < hi), u >= hi],
        [
            lambda x: _phi_core_prime(lo) + curvature * (x - lo),
            _phi_core_prime,
            lambda x: _phi_core_prime(hi) + curvature * (x - hi),
        ],
    )
    return _unwrap(out)


def entropy_phi_delta_double_prime(u, delta: float):
    return 1 / mobility_delta(u, delta)


# ---------------------------------------------------------------------------
# Truncated reaction terms
# ---------------------------------------------------------------------------
def monod(v, K: float):
    v = _as_float_array(v)
    return _unwrap(v / (K + v))


def consumption_truncated(u, v):
    """g_+(u, v) = -[u]_+^1 [v]_+^1 for the linear consumption g0(v) = v."""
    u, v = _as_float_array(u), _as_float_array(v)
    return _unwrap(-np.clip(u, 0, 1) * np.clip(v, 0, 1))


def consumption_truncated_partials(u, v):
    """Return (dg_+/du, dg_+/dv)."""
    u, v = _as_float_array(u), _as_float_array(v)
    u_in = (u > 0) & (u < 1)
    v_in = (v > 0) & (v < 1)
    du = np.where(u_in, -np.clip(v, 0, 1), 0.0)
    dv = np.where(v_in, -np.clip(u, 0, 1), 0.0)
    return _unwrap(du), _unwrap(dv)


def production_truncated(u, v, K: float):
    """h_+(u, v) = [u]_+ [1-u]_+ h0([v]_+^1) with Monod kinetics h0."""
    u, v = _as_float_array(u), _as_float_array(v)
    c = np.clip(v, 0, 1)
    return _unwrap(np.maximum(u, 0) * np.maximum(1 - u, 0) * c / (K + c))


def production_truncated_partials(u, v, K: float):
    """Return (dh_+/du, dh_+/dv)."""
    u, v = _as_float_array(u), _as_float_array(v)
    c = np.clip(v, 0, 1)
    u_in = (u > 0) & (u < 1)
    v_in = (v > 0) & (v < 1)
    du = np.where(u_in, (1 - 2 * u) * c / (K + c), 0.0)
    dv = np.where(
        v_in, np.maximum(u, 0) * np.maximum(1 - u, 0) * K / (K + c) ** 2, 0.0
    )
    return _unwrap(du), _unwrap(dv)


class PotentialError(ValueError):
    pass


class PotentialDomainError(PotentialError):
    pass
