"""Time stepping of a single run and orchestration of the studies."""

from __future__ import annotations
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
import math
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from traitlets import Int, Unicode
from traitlets.config import LoggingConfigurable
from traitlets.log import get_logger

from biofilm_fv.experiments.cases import SimulationCase, get_case
from biofilm_fv.experiments.convergence import (
    ConvergenceResult,
    ModelComparison,
    SnapshotDifference,
)
from biofilm_fv.numerics.diagnostics import (
    DiagnosticsRecord,
    l2_distance,
    record,
    restrict,
)
from biofilm_fv.numerics.scheme import (
    Grid,
    History,
    Model,
    SchemeConfig,
    SchemeError,
    State,
    TimeGrid,
    consistent_potential,
    extrapolate,
    step_residual,
)
from biofilm_fv.numerics.solver import (
    NewtonConfig,
    SolverError,
    assemble_jacobian,
    newton_solve,
)
from biofilm_fv.utils import config_hash


@dataclass(frozen=True, eq=False)
class Snapshot:
    requested: float
    t: float
    step: int
    state: State


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: Grid
    time_grid: TimeGrid
    initial: State
    final: State
    snapshots: tuple[Snapshot, ...]
    diagnostics: tuple[DiagnosticsRecord, ...]


def initial_state(case: SimulationCase, grid: Grid, config: SchemeConfig) -> State:
    """Midpoint samples of the initial profiles and the matching potential."""
    x = grid.cell_centers
    u = np.asarray(case.initial_u(x), dtype=float)
    v = np.asarray(case.initial_v(x), dtype=float)
    return State(u=u, v=v, mu=consistent_potential(u, grid, config))


def snapshot_steps(times: Iterable[float], time_grid: TimeGrid) -> dict[int, list[float]]:
    """Map each requested time onto the first step at or after it."""
    steps: dict[int, list[float]] = {}
    for t in sorted(set(float(t) for t in times)):
        step = math.ceil(t / time_grid.dt - 1e-9)
        step = min(max(step, 0), time_grid.n_steps)
        steps.setdefault(step, []).append(t)
    return steps


def run_simulation(
    case: SimulationCase,
    config: SchemeConfig,
    grid: Grid | None = None,
    time_grid: TimeGrid | None = None,
    newton_config: NewtonConfig = NewtonConfig(),
    snapshot_times: Sequence[float] = (),
    diagnostics_stride: int = 1,
) -> Trajectory:
    """Integrate ``case`` with one implicit Euler step followed by BDF2 steps.

    Diagnostics are recorded at ``t = 0``, at every ``diagnostics_stride``-th
    step and at the final step.
    """
    if diagnostics_stride < 1:
        raise ValueError(f"diagnostics_stride must be positive, got {diagnostics_stride}")
    log = get_logger()
    grid = grid or Grid(case.n_cells)
    time_grid = time_grid or TimeGrid.from_horizon(case.T, case.dt)
    dt = time_grid.dt

    def diagnostics(step, state, iters):
        return record(time_grid.time(step), state, grid, config.params, config.delta,
                      config.include_gamma_factors, iters)

    initial = initial_state(case, grid, config)
    wanted = snapshot_steps(snapshot_times, time_grid)
    snapshots = [Snapshot(t, 0.0, 0, initial) for t in wanted.get(0, [])]
    records = [diagnostics(0, initial, 0)]

    state = initial
    history = History.startup(initial)
    for step in range(1, time_grid.n_steps + 1):
        if step > 1:
            history = history.advance(state)
        u_bar = extrapolate(history)
        guess = State(u=u_bar.u_bar.copy(), v=history.prev.v.copy(),
                      mu=history.prev.mu.copy())

        def residual_fn(candidate, history=history, u_bar=u_bar):
            return step_residual(candidate, history, u_bar, grid, dt, config)

        def jacobian_fn(candidate, history=history, u_bar=u_bar):
            return assemble_jacobian(candidate, history, u_bar, grid, dt, config)

        try:
            state, report = newton_solve(guess, residual_fn, jacobian_fn, newton_config)
        except (SchemeError, SolverError) as err:
            raise StepFailedError(step, err) from err

        if step % diagnostics_stride == 0 or step == time_grid.n_steps:
            records.append(diagnostics(step, state, report.iterations))
        for t in wanted.get(step, []):
            snapshots.append(Snapshot(t, time_grid.time(step), step, state))
        if step % max(time_grid.n_steps // 10, 1) == 0:
            log.debug("Step %d/%d (t=%g) converged in %d iterations",
                      step, time_grid.n_steps, time_grid.time(step), report.iterations)

    return Trajectory(
        grid=grid,
        time_grid=time_grid,
        initial=initial,
        final=state,
        snapshots=tuple(snapshots),
        diagnostics=tuple(records),
    )


# ---------------------------------------------------------------------------
# Studies
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class RunJob:
    """Picklable description of one run of a study."""

    case: SimulationCase
    config: SchemeConfig
    newton_config: NewtonConfig
    n_cells: int
    dt: float
    T: float
    snapshot_times: tuple[float, ...] = ()
    diagnostics_stride: int | None = None

    def settings(self) -> dict:
        c, nc = self.config, self.newton_config
        return {
            "case": self.case.case_id,
            "n_cells": self.n_cells,
            "dt": self.dt,
            "T": self.T,
            "model": c.model.value,
            "coefficient_treatment": c.coefficient_treatment.value,
            "delta": c.delta,
            "include_gamma_factors": c.include_gamma_factors,
            "kappa": c.kappa,
            "truncate_sources": c.truncate_sources,
            "params": c.params.as_dict(),
            "abs_tol": nc.abs_tol,
            "rel_tol": nc.rel_tol,
            "max_iters": nc.max_iters,
            "damping": nc.damping.value,
            "backtracking_factor": nc.backtracking_factor,
            "min_step": nc.min_step,
        }


def execute(job: RunJob) -> Trajectory:
    time_grid = TimeGrid.from_horizon(job.T, job.dt)
    return run_simulation(
        job.case,
        job.config,
        Grid(job.n_cells),
        time_grid,
        job.newton_config,
        job.snapshot_times,
        job.diagnostics_stride or max(time_grid.n_steps, 1),
    )


def save_reference(path: Path, state: State):
    """Write ``state`` to ``path``; readers never see a partial file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    partial = path.with_name(f"{path.name}.{os.getpid()}.part")
    try:
        with open(partial, "wb") as f:
            np.savez(f, u=state.u, v=state.v, mu=state.mu)
        os.replace(partial, path)
    finally:
        partial.unlink(missing_ok=True)


class ExperimentRunner(LoggingConfigurable):
    """Runs the reference studies, optionally in worker processes."""

    workers = Int(
        1,
        help="Number of worker processes used for independent runs.",
    ).tag(config=True)

    cache_dir = Unicode(
        None,
        allow_none=True,
        help="Directory where reference solutions are cached by settings hash.",
    ).tag(config=True)

    def map(self, jobs: Sequence[RunJob]) -> list[Trajectory]:
        """Execute ``jobs`` and return their trajectories in input order."""
        if self.workers <= 1 or len(jobs) <= 1:
            return [execute(job) for job in jobs]
        with ProcessPoolExecutor(max_workers=min(self.workers, len(jobs))) as pool:
            return list(pool.map(execute, jobs))

    def run(self, job: RunJob) -> Trajectory:
        self.log.info("Running case %d on %d cells with dt=%g up to T=%g",
                      job.case.case_id, job.n_cells, job.dt, job.T)
        return execute(job)

    def reference_state(self, job: RunJob) -> State:
        """Final state of ``job``, read from or written to the cache."""
        path = None
        if self.cache_dir:
            path = Path(self.cache_dir) / f"reference-{config_hash(job.settings())}.npz"
            if path.exists():
                self.log.info("Using cached reference solution %s", path)
                with np.load(path) as data:
                    return State(u=data["u"], v=data["v"], mu=data["mu"])

        self.log.info("Computing reference solution on %d cells with dt=%g",
                      job.n_cells, job.dt)
        state = execute(job).final
        if path is not None:
            save_reference(path, state)
        return state

    def _study(self, case: SimulationCase, config: SchemeConfig,
               newton_config: NewtonConfig, T: float | None) -> ConvergenceResult:
        study = case.study
        if study is None:
            raise ValueError(f"test case {case.case_id} defines no convergence study")
        T = case.T if T is None else T

        def job(resolution):
            return RunJob(case, config, newton_config, resolution.n_cells,
                          resolution.dt, T)

        reference = self.reference_state(job(study.reference))
        self.log.info("Running %d %s refinement levels with %d worker(s)",
                      len(study.levels), study.kind, self.workers)
        finals = [t.final for t in self.map([job(level) for level in study.levels])]

        errors_u, errors_v = [], []
        for level, state in zip(study.levels, finals):
            ref_u = restrict(reference.u, level.n_cells)
            ref_v = restrict(reference.v, level.n_cells)
            dx = 1 / level.n_cells
            errors_u.append(l2_distance(ref_u, state.u, dx))
            errors_v.append(l2_distance(ref_v, state.v, dx))

        result = ConvergenceResult(
            kind=study.kind,
            resolutions=study.resolutions(),
            step_sizes=study.step_sizes(),
            errors_u=np.array(errors_u),
            errors_v=np.array(errors_v),
        )
        self.log.info("Observed orders u: %s, v: %s",
                      np.array2string(result.observed_orders_u, precision=3),
                      np.array2string(result.observed_orders_v, precision=3))
        return result

    def convergence_space(self, config: SchemeConfig,
                          newton_config: NewtonConfig = NewtonConfig(),
                          case: SimulationCase | None = None,
                          T: float | None = None) -> ConvergenceResult:
        return self._study(case or get_case(4), config, newton_config, T)

    def convergence_time(self, config: SchemeConfig,
                         newton_config: NewtonConfig = NewtonConfig(),
                         case: SimulationCase | None = None,
                         T: float | None = None) -> ConvergenceResult:
        return self._study(case or get_case(5), config, newton_config, T)

    def compare_models(self, job: RunJob) -> ModelComparison:
        """Run ``job`` with both models from the same initial data."""
        jobs = [
            replace(job, config=replace(job.config, model=model)) for model in Model
        ]
        trajectories = dict(zip(Model, self.map(jobs)))
        ours = trajectories[Model.VOLUME_FILLING]
        theirs = trajectories[Model.WANG_ZHANG]
        dx = ours.grid.dx
        differences = tuple(
            SnapshotDifference(
                t=a.t,
                l2_u=l2_distance(a.state.u, b.state.u, dx),
                l2_v=l2_distance(a.state.v, b.state.v, dx),
            )
            for a, b in zip(ours.snapshots, theirs.snapshots)
        )
        return ModelComparison(trajectories=trajectories, differences=differences)


class StepFailedError(RuntimeError):
    """The nonlinear solve of a time step failed."""

    def __init__(self, step: int, error: Exception):
        super().__init__(step, error)
        self.step = step
        self.error = error

    def __str__(self):
        return f"time step {self.step} failed: {self.error}"
