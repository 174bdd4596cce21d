"""Physical parameters of the biofilm model and their dimensionless images."""

from __future__ import annotations
from dataclasses import asdict, dataclass, fields
import math
from typing import Any, Mapping


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensional constants of the biofilm model.

    Units: ``D`` [m^2/s], ``M_prime`` [s], ``R_c`` [1/s],
    ``R_p`` [kg/(m^3 s)], ``K_v`` [kg/m^3], ``Gamma1`` [m^4/s^2],
    ``Gamma2`` [m^2/s^2], ``x0`` [m], ``t0`` [s], ``v0`` [kg/m^3],
    ``kBT`` [kg m^2/s^2]. ``N``, ``lam`` and ``K_tilde`` are dimensionless.
    """

    D: float
    M_prime: float
    R_c: float
    R_p: float
    K_v: float
    Gamma1: float
    Gamma2: float
    N: float
    lam: float
    x0: float
    t0: float
    v0: float
    kBT: float
    K_tilde: float

    def __post_init__(self):
        for field in fields(self):
            value = getattr(self, field.name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(
                    field.name, f"must be finite and strictly positive, got {value!r}"
                )
        if self.N < 1:
            raise ParameterError("N", f"must be at least 1, got {self.N!r}")

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class ScaledParams:
    """Dimensionless parameters consumed by the discrete scheme.

    Rates and energy prefactors may be zero so that reaction-free or
    gradient-free variants can be expressed; ``N``, ``K`` and ``K_tilde``
    appear in denominators and must be strictly positive.
    """

    D0: float
    M0: float
    Rc0: float
    Rp0: float
    K: float
    Gamma1_0: float
    Gamma2_0: float
    N: float
    lam: float
    K_tilde: float

    def __post_init__(self):
        for field in fields(self):
            value = getattr(self, field.name)
            if not (math.isfinite(value) and value >= 0):
                raise ParameterError(
                    field.name, f"must be finite and non-negative, got {value!r}"
                )
        for name in ("N", "K", "K_tilde"):
            if getattr(self, name) <= 0:
                raise ParameterError(name, "must be strictly positive")

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def characteristic_potential(p: PhysicalParams) -> float:
    """Return the characteristic chemical potential kBT/(v0 x0^3) [m^2/s^2]."""
    return p.kBT / (p.v0 * p.x0**3)


def scale_parameters(p: PhysicalParams) -> ScaledParams:
    """Nondimensionalize ``p`` with its characteristic scales."""
    mu0 = characteristic_potential(p)
    return ScaledParams(
        D0=p.D * p.t0 / p.x0**2,
        M0=p.M_prime * p.t0 * mu0 / p.x0**2,
        Rc0=p.R_c * p.t0,
        Rp0=p.R_p * p.t0,
        K=p.K_v / p.v0,
        Gamma1_0=p.Gamma1 / (mu0 * p.x0**2),
        Gamma2_0=p.Gamma2 / mu0,
        N=p.N,
        lam=p.lam,
        K_tilde=p.K_tilde,
    )


def default_physical_params() -> PhysicalParams:
    """Reference parameter set of the biofilm simulations."""
    return PhysicalParams(
        D=1e-10,
        M_prime=2.5e-8,
        R_c=1e-2,
        R_p=1e-2,
        K_v=1e-4,
        Gamma1=4e-15,
        Gamma2=4e-6,
        N=1e3,
        lam=0.55,
        x0=1e-4,
        t0=1e2,
        v0=1e-3,
        kBT=4e-21,
        K_tilde=5e-4,
    )


# Configuration keys. ``lambda`` is a Python keyword, hence the ``lam`` field.
SHARED_KEYS = {"N": "N", "lambda": "lam", "K_tilde": "K_tilde"}
PHYSICAL_KEYS = {
    name: name
    for name in (
        "D", "M_prime", "R_c", "R_p", "K_v", "Gamma1", "Gamma2",
        "x0", "t0", "v0", "kBT",
    )
}
SCALED_KEYS = {
    name: name
    for name in ("D0", "M0", "Rc0", "Rp0", "K", "Gamma1_0", "Gamma2_0")
}
PARAMETER_KEYS = frozenset(SHARED_KEYS) | frozenset(PHYSICAL_KEYS) | frozenset(SCALED_KEYS)


def parameters_from_mapping(values: Mapping[str, Any]) -> ScaledParams:
    """Build scaled parameters from configuration keys.

    Either physical keys or scaled keys may be given, never both. Keys that
    are absent keep the value of the default parameter set of the same family.
    """
    unknown = set(values) - PARAMETER_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ParameterError(key, "unknown parameter")

    physical = [key for key in values if key in PHYSICAL_KEYS]
    scaled = [key for key in values if key in SCALED_KEYS]
    if physical and scaled:
        raise ParameterError(
            scaled[0],
            f"scaled parameter given together with physical parameter {physical[0]!r}",
        )

    defaults = default_physical_params()
    if scaled:
        base = scale_parameters(defaults).as_dict()
        base.update({SCALED_KEYS[key]: float(values[key]) for key in scaled})
        base.update({SHARED_KEYS[key]: float(values[key]) for key in values if key in SHARED_KEYS})
        return ScaledParams(**base)

    base = defaults.as_dict()
    base.update({PHYSICAL_KEYS[key]: float(values[key]) for key in physical})
    base.update({SHARED_KEYS[key]: float(values[key]) for key in values if key in SHARED_KEYS})
    return scale_parameters(PhysicalParams(**base))


class ParameterError(ValueError):
    """Invalid model parameter."""

    def __init__(self, name: str, message: str):
        super().__init__(name, message)
        self.name = name
        self.message = message

    def __str__(self):
        return f"{self.name}: {self.message}"
