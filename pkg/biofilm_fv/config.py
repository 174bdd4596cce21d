"""Run settings: key-value files, flag overrides and validation."""

from __future__ import annotations
from pathlib import Path
from typing import Any, Mapping

from traitlets import Bool, Dict, Enum, Float, HasTraits, Int, List, TraitError, validate

from biofilm_fv.experiments.cases import SimulationCase, case_ids, get_case
from biofilm_fv.numerics.scheme import (
    MODEL_ALIASES,
    CoefficientTreatment,
    Model,
    SchemeConfig,
)
from biofilm_fv.numerics.solver import Damping, NewtonConfig
from biofilm_fv.params import (
    PARAMETER_KEYS,
    ParameterError,
    ScaledParams,
    parameters_from_mapping,
)


class SimulationSettings(HasTraits):
    """Every accepted configuration key except the model parameters.

    ``n_cells``, ``dt`` and ``T`` default to the values of the selected case.
    """

    case = Int(3).tag(setting=True)
    model = Enum(
        [m.value for m in Model] + list(MODEL_ALIASES),
        default_value=Model.VOLUME_FILLING.value,
    ).tag(setting=True)
    coefficient_treatment = Enum(
        [c.value for c in CoefficientTreatment],
        default_value=CoefficientTreatment.EXTRAPOLATED.value,
    ).tag(setting=True)
    n_cells = Int(None, allow_none=True).tag(setting=True)
    dt = Float(None, allow_none=True).tag(setting=True)
    T = Float(None, allow_none=True).tag(setting=True)
    delta = Float(1e-8).tag(setting=True)
    include_gamma_factors = Bool(True).tag(setting=True)
    kappa = Float(0.0).tag(setting=True)
    truncate_sources = Bool(False).tag(setting=True)
    snapshot_times = List(Float()).tag(setting=True)
    diagnostics_stride = Int(1).tag(setting=True)
    abs_tol = Float(1e-10).tag(setting=True)
    rel_tol = Float(1e-12).tag(setting=True)
    max_iters = Int(25).tag(setting=True)
    damping = Enum([d.value for d in Damping], default_value=Damping.ARMIJO.value).tag(
        setting=True
    )
    backtracking_factor = Float(0.5).tag(setting=True)
    min_step = Float(2.0**-10).tag(setting=True)
    workers = Int(1).tag(setting=True)

    # Model parameters by configuration key
    parameters = Dict()

    @validate("case")
    def _valid_case(self, proposal):
        if proposal["value"] not in case_ids():
            raise TraitError(f"unknown test case, expected one of {list(case_ids())}")
        return proposal["value"]

    @validate("model")
    def _canonical_model(self, proposal):
        return Model(proposal["value"]).value

    @validate("n_cells", "diagnostics_stride", "max_iters", "workers")
    def _positive_int(self, proposal):
        value = proposal["value"]
        if value is not None and value < 1:
            raise TraitError(f"must be at least 1, got {value}")
        return value

    @validate("dt", "T", "abs_tol")
    def _positive_float(self, proposal):
        value = proposal["value"]
        if value is not None and not value > 0:
            raise TraitError(f"must be positive, got {value}")
        return value

    @validate("kappa", "rel_tol")
    def _non_negative(self, proposal):
        if not proposal["value"] >= 0:
            raise TraitError(f"must be non-negative, got {proposal['value']}")
        return proposal["value"]

    @validate("delta")
    def _valid_delta(self, proposal):
        if not 0 < proposal["value"] < 0.5:
            raise TraitError(f"must lie in (0, 1/2), got {proposal['value']}")
        return proposal["value"]

    @validate("backtracking_factor")
    def _valid_factor(self, proposal):
        if not 0 < proposal["value"] < 1:
            raise TraitError(f"must lie in (0, 1), got {proposal['value']}")
        return proposal["value"]

    @validate("min_step")
    def _valid_min_step(self, proposal):
        if not 0 < proposal["value"] <= 1:
            raise TraitError(f"must lie in (0, 1], got {proposal['value']}")
        return proposal["value"]

    @validate("snapshot_times")
    def _valid_snapshots(self, proposal):
        if any(t < 0 for t in proposal["value"]):
            raise TraitError("snapshot times must be non-negative")
        return sorted(proposal["value"])

    @classmethod
    def setting_keys(cls) -> list[str]:
        return cls.class_trait_names(setting=True)

    def set_value(self, key: str, value: Any):
        """Assign one key, converting strings with the trait's parser."""
        if key in PARAMETER_KEYS:
            try:
                number = float(value)
            except (TypeError, ValueError):
                raise ConfigError(key, f"expected a number, got {value!r}") from None
            self.parameters = {**self.parameters, key: number}
            return
        if key not in self.setting_keys():
            raise ConfigError(key, "unknown configuration key")

        trait = self.traits()[key]
        try:
            if isinstance(value, str):
                value = _from_string(trait, value)
            setattr(self, key, value)
        except (TraitError, ValueError, TypeError) as err:
            raise ConfigError(key, str(err)) from None

    # -- resolved views ----------------------------------------------------
    @property
    def simulation_case(self) -> SimulationCase:
        return get_case(self.case)

    @property
    def resolved_n_cells(self) -> int:
        return self.n_cells if self.n_cells is not None else self.simulation_case.n_cells

    @property
    def resolved_dt(self) -> float:
        return self.dt if self.dt is not None else self.simulation_case.dt

    @property
    def resolved_T(self) -> float:
        return self.T if self.T is not None else self.simulation_case.T

    def scaled_params(self) -> ScaledParams:
        try:
            return parameters_from_mapping(self.parameters)
        except ParameterError as err:
            raise ConfigError(err.name, err.message) from None

    def scheme_config(self) -> SchemeConfig:
        return SchemeConfig(
            params=self.scaled_params(),
            model=Model(self.model),
            coefficient_treatment=CoefficientTreatment(self.coefficient_treatment),
            delta=self.delta,
            include_gamma_factors=self.include_gamma_factors,
            kappa=self.kappa,
            truncate_sources=self.truncate_sources,
        )

    def newton_config(self) -> NewtonConfig:
        return NewtonConfig(
            abs_tol=self.abs_tol,
            rel_tol=self.rel_tol,
            max_iters=self.max_iters,
            damping=Damping(self.damping),
            backtracking_factor=self.backtracking_factor,
            min_step=self.min_step,
        )

    def resolved(self) -> dict[str, Any]:
        """All keys with defaults materialized; parameters in scaled form."""
        values = {key: getattr(self, key) for key in self.setting_keys()}
        values.update(
            n_cells=self.resolved_n_cells, dt=self.resolved_dt, T=self.resolved_T,
            snapshot_times=list(self.snapshot_times),
        )
        scaled = self.scaled_params().as_dict()
        scaled["lambda"] = scaled.pop("lam")
        values.update(scaled)
        return values


def _from_string(trait, text: str):
    if isinstance(trait, List):
        return [float(item) for item in text.replace(";", ",").split(",") if item.strip()]
    if trait.allow_none and text.strip().lower() in ("none", ""):
        return None
    return trait.from_string(text.strip())


def read_key_values(text: str) -> dict[str, str]:
    """Parse ``name = value`` lines; ``#`` starts a comment."""
    values = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(key or f"line {number}", f"expected 'name = value' on line {number}")
        values[key] = value.strip()
    return values


def parse_config(text: str = "", overrides: Mapping[str, Any] | None = None,
                 defaults: Mapping[str, Any] | None = None) -> SimulationSettings:
    """Build settings from key-value ``text``.

    ``defaults`` are applied below the file and ``overrides`` above it.
    """
    settings = SimulationSettings()
    merged: dict[str, Any] = dict(defaults or {})
    merged.update(read_key_values(text))
    merged.update(overrides or {})
    # The case comes first so that case-dependent defaults resolve against it.
    if "case" in merged:
        settings.set_value("case", merged.pop("case"))
    for key, value in merged.items():
        settings.set_value(key, value)
    settings.scaled_params()
    return settings


def load_config(path: str | Path | None, overrides: Mapping[str, Any] | None = None,
                defaults: Mapping[str, Any] | None = None) -> SimulationSettings:
    text = ""
    if path:
        try:
            text = Path(path).read_text()
        except OSError as err:
            raise ConfigError("config_file", f"cannot read {path}: {err}") from None
    return parse_config(text, overrides, defaults)


class ConfigError(ValueError):
    """Invalid configuration key or value."""

    def __init__(self, key: str, message: str):
        super().__init__(key, message)
        self.key = key
        self.message = message

    def __str__(self):
        return f"{self.key}: {self.message}"
