"""Biofilm simulation command line application."""

from __future__ import annotations
import logging
from pathlib import Path
import sys

import numpy as np
from traitlets import Bool, List, Unicode, default
from traitlets.config import Application

from biofilm_fv import __version__
from biofilm_fv.config import ConfigError, SimulationSettings, load_config
from biofilm_fv.experiments.runner import (
    ExperimentRunner,
    RunJob,
    StepFailedError,
    execute,
)
from biofilm_fv.numerics.potential import (
    PotentialParams,
    breakpoint_mismatch,
    entropy_phi_delta,
    f1_delta,
    f1_delta_double_prime,
    f1_delta_prime,
    mobility,
    mobility_delta,
)
from biofilm_fv.output import (
    RunManifest,
    snapshot_name,
    write_comparison,
    write_convergence,
    write_plot_script,
    write_trajectory,
)

POTENTIALS_HEADER = (
    "u,f1_delta,f1_delta_prime,f1_delta_double_prime,mobility_delta,entropy_phi_delta"
)

# Command line names of the settings that get a dedicated flag
_OVERRIDE_ALIASES = (
    "case",
    "model",
    "coefficient_treatment",
    "n_cells",
    "dt",
    "T",
    "delta",
    "workers",
    "snapshot_times",
)


class SimulationApp(Application):
    """Shared options of the simulation subcommands."""

    default_case = 3

    config_file = Unicode(
        None,
        allow_none=True,
        help="Key-value configuration file (one `name = value` per line).",
    ).tag(config=True)

    manifest_file = Unicode(
        None,
        allow_none=True,
        help="Manifest of a previous run whose settings are replayed.",
    ).tag(config=True)

    output_dir = Unicode(
        "biofilm-output",
        help="Directory that receives tables, manifest and plot script.",
    ).tag(config=True)

    cache_dir = Unicode(
        None,
        allow_none=True,
        help="""Directory for cached reference solutions.

        Defaults to a `reference-cache` folder inside the output directory.
        """,
    ).tag(config=True)

    plot = Bool(
        False,
        help="Write a gnuplot script next to the tables.",
    ).tag(config=True)

    overrides = List(
        Unicode(),
        help="Extra `name=value` settings; they take precedence over the file.",
    ).tag(config=True)

    case = Unicode(None, allow_none=True, help="Test case 1-5.").tag(config=True)
    model = Unicode(
        None, allow_none=True, help="Model: volume-filling or wang-zhang."
    ).tag(config=True)
    coefficient_treatment = Unicode(
        None, allow_none=True, help="Flux coefficients: extrapolated or implicit."
    ).tag(config=True)
    n_cells = Unicode(None, allow_none=True, help="Number of cells.").tag(config=True)
    dt = Unicode(None, allow_none=True, help="Time step.").tag(config=True)
    T = Unicode(None, allow_none=True, help="Final time.").tag(config=True)
    delta = Unicode(
        None, allow_none=True, help="Regularization of the potential."
    ).tag(config=True)
    workers = Unicode(
        None, allow_none=True, help="Worker processes for independent runs."
    ).tag(config=True)
    snapshot_times = Unicode(
        None, allow_none=True, help="Comma separated snapshot times."
    ).tag(config=True)

    aliases = {
        **{name: f"SimulationApp.{name}" for name in _OVERRIDE_ALIASES},
        "config": "SimulationApp.config_file",
        "manifest": "SimulationApp.manifest_file",
        "output-dir": "SimulationApp.output_dir",
        "cache-dir": "SimulationApp.cache_dir",
        "set": "SimulationApp.overrides",
        "log-level": "Application.log_level",
    }

    flags = {
        "plot": ({"SimulationApp": {"plot": True}}, "Write a gnuplot script."),
    }

    @default("log_level")
    def _log_level_default(self):
        return logging.INFO

    def command_overrides(self) -> dict[str, str]:
        values = {}
        for item in self.overrides:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(key.strip() or "set", "expected name=value")
            values[key.strip()] = value.strip()
        for name in _OVERRIDE_ALIASES:
            value = getattr(self, name)
            if value is not None:
                values[name] = value
        return values

    def load_settings(self) -> SimulationSettings:
        overrides = {}
        if self.manifest_file:
            try:
                manifest = RunManifest.read(self.manifest_file)
            except (OSError, ValueError, TypeError) as err:
                raise ConfigError("manifest", f"cannot read {self.manifest_file}: {err}") from None
            self.log.info("Replaying settings of run %s", manifest.config_hash)
            overrides.update(manifest.settings)
        overrides.update(self.command_overrides())
        return load_config(self.config_file, overrides, {"case": self.default_case})

    @property
    def output_path(self) -> Path:
        path = Path(self.output_dir)
        path.mkdir(parents=True, exist_ok=True)
        return path

    def make_runner(self, settings: SimulationSettings) -> ExperimentRunner:
        cache_dir = self.cache_dir or str(self.output_path / "reference-cache")
        return ExperimentRunner(parent=self, workers=settings.workers, cache_dir=cache_dir)

    def make_job(self, settings: SimulationSettings, snapshots=True) -> RunJob:
        T = settings.resolved_T
        times = tuple(settings.snapshot_times) or (0.0, T)
        return RunJob(
            case=settings.simulation_case,
            config=settings.scheme_config(),
            newton_config=settings.newton_config(),
            n_cells=settings.resolved_n_cells,
            dt=settings.resolved_dt,
            T=T,
            snapshot_times=times if snapshots else (),
            diagnostics_stride=settings.diagnostics_stride,
        )

    def start(self):
        try:
            settings = self.load_settings()
            manifest = RunManifest.create(self.name, settings.resolved(), __version__)
            self.log.info("Settings hash %s", manifest.config_hash)
            self.execute(settings)
            manifest.finish().write(self.output_path)
        except ConfigError as err:
            self.log.error("Configuration error: %s", err)
            self.exit(1)
        except StepFailedError as err:
            self.log.error("Solver failure at time step %d: %s", err.step, err.error)
            self.exit(2)
        self.log.info("Results written to %s", self.output_path)

    def execute(self, settings: SimulationSettings):
        raise NotImplementedError


class RunApp(SimulationApp):
    name = "run"
    description = "Integrate one test case and write snapshots and diagnostics."

    def execute(self, settings):
        job = self.make_job(settings)
        self.log.info("Running case %d (%s) on %d cells, dt=%g, T=%g",
                      job.case.case_id, settings.model, job.n_cells, job.dt, job.T)
        trajectory = execute(job)
        write_trajectory(self.output_path, trajectory)
        if self.plot:
            names = [snapshot_name(s.requested) for s in trajectory.snapshots]
            write_plot_script(self.output_path, names)


class ConvergenceSpaceApp(SimulationApp):
    name = "convergence-space"
    description = "Spatial refinement study against a fine reference solution."
    default_case = 4

    def execute(self, settings):
        runner = self.make_runner(settings)
        result = runner.convergence_space(
            settings.scheme_config(), settings.newton_config(),
            settings.simulation_case, settings.resolved_T,
        )
        write_convergence(self.output_path / "convergence.csv", result)
        if self.plot:
            write_plot_script(self.output_path, convergence=True)


class ConvergenceTimeApp(SimulationApp):
    name = "convergence-time"
    description = "Temporal refinement study against a fine reference solution."
    default_case = 5

    def execute(self, settings):
        runner = self.make_runner(settings)
        result = runner.convergence_time(
            settings.scheme_config(), settings.newton_config(),
            settings.simulation_case, settings.resolved_T,
        )
        write_convergence(self.output_path / "convergence.csv", result)
        if self.plot:
            write_plot_script(self.output_path, convergence=True)


class CompareModelsApp(SimulationApp):
    name = "compare-models"
    description = "Run both models from the same initial data and compare them."
    default_case = 1

    def execute(self, settings):
        runner = self.make_runner(settings)
        comparison = runner.compare_models(self.make_job(settings))
        write_comparison(self.output_path, comparison)
        for difference in comparison.differences:
            self.log.info("t=%g: L2 difference u=%.3e, v=%.3e",
                          difference.t, difference.l2_u, difference.l2_v)
        if self.plot:
            names = [
                f"{model.value}_{snapshot_name(s.requested)}"
                for model, trajectory in comparison.trajectories.items()
                for s in trajectory.snapshots
            ]
            write_plot_script(self.output_path, names,
                              diagnostics="volume-filling_diagnostics.csv")


class CheckPotentialsApp(SimulationApp):
    name = "check-potentials"
    description = "Tabulate the regularized potentials and check their properties."

    def execute(self, settings):
        p = settings.scaled_params()
        params = PotentialParams(N=p.N, lam=p.lam, delta=settings.delta)
        u = np.linspace(-3.0, 4.0, 1401)
        table = np.column_stack((
            u,
            f1_delta(u, params),
            f1_delta_prime(u, params),
            f1_delta_double_prime(u, params),
            mobility_delta(u, params.delta),
            entropy_phi_delta(u, params.delta),
        ))
        np.savetxt(self.output_path / "potentials.csv", table, fmt="%.17g",
                   delimiter=",", header=POTENTIALS_HEADER, comments="")

        mismatch = float(np.max(breakpoint_mismatch(params)))
        min_curvature = float(np.min(table[:, 3]))
        dominance = int(np.sum(table[:, 4] < mobility(u)))
        self.log.info("Largest relative jump at a breakpoint: %.3e", mismatch)
        self.log.info("Smallest second derivative: %.3e", min_curvature)
        self.log.info("Samples with M_delta < M: %d", dominance)
        if mismatch > 1e-9 or min_curvature < 0 or dominance:
            self.log.error("The regularized potential violates its matching, "
                           "convexity or dominance properties")
            self.exit(3)


SUBCOMMANDS = (RunApp, ConvergenceSpaceApp, ConvergenceTimeApp, CompareModelsApp,
               CheckPotentialsApp)


class BiofilmApp(Application):
    """Finite-volume simulations of the biofilm Cahn-Hilliard system."""

    name = "biofilm-fv"
    version = __version__
    description = "BDF2 finite-volume simulations of a biofilm growth model."

    subcommands = {app.name: (app, app.description) for app in SUBCOMMANDS}

    @default("log_level")
    def _log_level_default(self):
        return logging.INFO

    def start(self):
        if self.subapp is None:
            self.log.error("A subcommand is required: %s", ", ".join(self.subcommands))
            self.exit(1)
        return self.subapp.start()


def _clear_instances():
    for app in (BiofilmApp, SimulationApp, *SUBCOMMANDS):
        app.clear_instance()


def cli_run(argv: list[str] | None = None) -> int:
    """Run the application in-process and return its exit code."""
    _clear_instances()
    try:
        app = BiofilmApp.instance()
        app.initialize(sys.argv[1:] if argv is None else list(argv))
        app.start()
    except SystemExit as err:
        if err.code is None:
            return 0
        return err.code if isinstance(err.code, int) else 1
    finally:
        _clear_instances()
    return 0


# -----------------------------------------------------------------------------
# Main entry point
# -----------------------------------------------------------------------------

main = launch_new_instance = BiofilmApp.launch_instance
