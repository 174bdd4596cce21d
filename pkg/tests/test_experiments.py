from dataclasses import replace
from functools import partial

import numpy as np
import pytest

from biofilm_fv.experiments.cases import (
    ConvergenceStudy,
    Resolution,
    SimulationCase,
    UnknownCaseError,
    case_ids,
    constant,
    get_case,
    parabola,
)
from biofilm_fv.experiments.convergence import ConvergenceResult, observed_orders
from biofilm_fv.experiments.runner import (
    ExperimentRunner,
    RunJob,
    StepFailedError,
    execute,
    initial_state,
    run_simulation,
    snapshot_steps,
)
from biofilm_fv.numerics.diagnostics import l2_distance
from biofilm_fv.numerics.scheme import (
    CoefficientTreatment,
    Grid,
    Model,
    SchemeConfig,
    TimeGrid,
)
from biofilm_fv.numerics.solver import NewtonConfig, NewtonConvergenceError

# ---------------------------------------------------------------------------
# Cases and order estimation
# ---------------------------------------------------------------------------
def test_case_table():
    assert case_ids() == (1, 2, 3, 4, 5)
    assert get_case(1).initial_u(np.array(0.0)) == pytest.approx(0.02)
    assert get_case(3).initial_u(np.array(0.5)) == pytest.approx(1 / 3)
    assert get_case(2).initial_v(np.array(0.7)) == pytest.approx(0.1)
    np.testing.assert_allclose(get_case(2).initial_u(np.array([0.1, 0.2, 0.5])),
                               [0.2, 0.2, 1e-2])
    assert get_case(1).T == 10.0
    with pytest.raises(UnknownCaseError):
        get_case(6)


def test_study_definitions():
    space = get_case(4).study
    assert space.kind == "space"
    assert [level.n_cells for level in space.levels] == [2**j for j in range(4, 11)]
    assert space.reference == Resolution(2048, 1e-5)

    time = get_case(5).study
    assert time.kind == "time"
    np.testing.assert_allclose(time.step_sizes(),
                               [1 / (2 ** (2 * j) * 128) for j in range(1, 7)])
    assert time.reference.dt == pytest.approx(1 / (2**14 * 128))
    assert {level.n_cells for level in time.levels} == {128}


def test_observed_orders():
    np.testing.assert_allclose(observed_orders([16.0, 4.0, 1.0], [4.0, 2.0, 1.0]), [2.0, 2.0])
    np.testing.assert_allclose(observed_orders([4.0, 1.0], [0.5, 0.25]), [2.0])
    # time studies refine by a factor of four
    np.testing.assert_allclose(observed_orders([16.0, 1.0], [4.0, 1.0]), [2.0])
    with pytest.raises(ValueError):
        observed_orders([1.0, 2.0], [1.0])


def test_convergence_table():
    result = ConvergenceResult(
        kind="space",
        resolutions=np.array([16.0, 32.0, 64.0]),
        step_sizes=np.array([1 / 16, 1 / 32, 1 / 64]),
        errors_u=np.array([16e-4, 4e-4, 1e-4]),
        errors_v=np.array([8e-4, 4e-4, 2e-4]),
    )
    table = result.table()
    assert table.shape == (3, 5)
    assert np.all(np.isnan(table[0, 3:]))
    np.testing.assert_allclose(table[1:, 3], 2.0)
    np.testing.assert_allclose(table[1:, 4], 1.0)
    with pytest.raises(ValueError):
        ConvergenceResult("space", np.ones(2), np.ones(3), np.ones(2), np.ones(2))


# ---------------------------------------------------------------------------
# Single runs
# ---------------------------------------------------------------------------
def small_case(u0=0.4, v0=0.2, T=0.01, n_cells=8, dt=1e-3, study=None):
    return SimulationCase(99, partial(constant, u0), partial(constant, v0), T=T,
                          n_cells=n_cells, dt=dt, study=study)


def test_snapshot_steps():
    time_grid = TimeGrid(dt=1e-3, n_steps=10)
    assert snapshot_steps([0.01, 0.0, 0.0025], time_grid) == {0: [0.0], 3: [0.0025], 10: [0.01]}
    assert snapshot_steps([0.5], time_grid) == {10: [0.5]}
    assert snapshot_steps([0.003], time_grid) == {3: [0.003]}


def test_initial_state_samples_midpoints(scaled):
    grid = Grid(4)
    state = initial_state(get_case(3), grid, SchemeConfig(scaled))
    np.testing.assert_allclose(state.u, parabola(grid.cell_centers))
    np.testing.assert_allclose(state.v, 0.3)


def test_zero_rate_constant_data_is_stationary(zero_rates):
    trajectory = run_simulation(small_case(), SchemeConfig(zero_rates),
                                snapshot_times=(0.0, 0.005, 0.01))
    for snapshot in trajectory.snapshots:
        np.testing.assert_allclose(snapshot.state.u, 0.4, atol=1e-12, rtol=0)
        np.testing.assert_allclose(snapshot.state.v, 0.2, atol=1e-12, rtol=0)
    assert [s.step for s in trajectory.snapshots] == [0, 5, 10]


def test_runs_are_deterministic(scaled):
    config = SchemeConfig(scaled)
    case = get_case(3)
    runs = [
        run_simulation(case, config, Grid(32), TimeGrid(dt=1e-3, n_steps=20))
        for _ in range(2)
    ]
    np.testing.assert_array_equal(runs[0].final.u, runs[1].final.u)
    np.testing.assert_array_equal(runs[0].final.v, runs[1].final.v)
    np.testing.assert_array_equal(runs[0].final.mu, runs[1].final.mu)
    assert [r.as_row() for r in runs[0].diagnostics] == [r.as_row() for r in runs[1].diagnostics]


def test_diagnostics_stride(scaled):
    trajectory = run_simulation(get_case(3), SchemeConfig(scaled), Grid(16),
                                TimeGrid(dt=1e-3, n_steps=10), diagnostics_stride=3)
    times = [r.t for r in trajectory.diagnostics]
    np.testing.assert_allclose(times, [0.0, 0.003, 0.006, 0.009, 0.01])
    assert trajectory.diagnostics[0].newton_iters == 0
    with pytest.raises(ValueError):
        run_simulation(get_case(3), SchemeConfig(scaled), diagnostics_stride=0)


def test_biomass_is_conserved_without_production(scaled):
    config = SchemeConfig(replace(scaled, Rp0=0.0))
    trajectory = run_simulation(get_case(3), config, Grid(16), TimeGrid(dt=1e-3, n_steps=1000))
    masses = np.array([r.mass_u for r in trajectory.diagnostics])
    assert len(masses) == 1001
    assert np.max(np.abs(np.diff(masses))) <= 1e-12
    assert abs(masses[-1] - masses[0]) <= 1e-10


def test_substrate_mass_does_not_increase(scaled):
    trajectory = run_simulation(get_case(3), SchemeConfig(scaled), Grid(32),
                                TimeGrid(dt=1e-3, n_steps=50))
    masses = np.array([r.mass_v for r in trajectory.diagnostics])
    assert np.all(np.diff(masses) <= 1e-10)
    assert masses[-1] < masses[0]


@pytest.mark.parametrize("model", list(Model))
def test_symmetric_data_stays_symmetric(scaled, model):
    trajectory = run_simulation(get_case(3), SchemeConfig(scaled, model), Grid(32),
                                TimeGrid(dt=1e-3, n_steps=20))
    final = trajectory.final
    np.testing.assert_allclose(final.u, final.u[::-1], atol=1e-10)
    np.testing.assert_allclose(final.v, final.v[::-1], atol=1e-10)


def test_solver_failure_names_the_step(scaled):
    newton = NewtonConfig(max_iters=1, abs_tol=1e-300)
    with pytest.raises(StepFailedError) as info:
        run_simulation(get_case(3), SchemeConfig(scaled), Grid(8),
                       TimeGrid(dt=1e-3, n_steps=3), newton)
    assert info.value.step == 1
    assert isinstance(info.value.error, NewtonConvergenceError)


def test_execute_records_endpoints_by_default(scaled):
    job = RunJob(get_case(3), SchemeConfig(scaled), NewtonConfig(), n_cells=8, dt=1e-3,
                 T=0.005, snapshot_times=(0.0, 0.005))
    trajectory = execute(job)
    assert [r.t for r in trajectory.diagnostics] == [0.0, pytest.approx(0.005)]
    assert [s.requested for s in trajectory.snapshots] == [0.0, 0.005]


def test_job_settings_identify_runs(scaled):
    job = RunJob(get_case(3), SchemeConfig(scaled), NewtonConfig(), n_cells=8, dt=1e-3, T=0.01)
    assert job.settings() == replace(job).settings()
    assert job.settings() != replace(job, dt=5e-4).settings()
    assert job.settings()["model"] == "volume-filling"


# ---------------------------------------------------------------------------
# Studies
# ---------------------------------------------------------------------------
def parabola_space_case():
    # The parabola is not flat at the walls; T lies past the initial boundary layer.
    study = ConvergenceStudy(
        kind="space",
        reference=Resolution(128, 1e-3),
        levels=(Resolution(8, 1e-3), Resolution(16, 1e-3), Resolution(32, 1e-3)),
    )
    return SimulationCase(98, parabola, partial(constant, 0.3), T=0.2, study=study)


def test_small_space_study(scaled, tmp_path):
    runner = ExperimentRunner(cache_dir=str(tmp_path))
    result = runner.convergence_space(SchemeConfig(scaled), case=parabola_space_case())
    assert result.kind == "space"
    np.testing.assert_array_equal(result.resolutions, [8, 16, 32])
    assert np.all(np.diff(result.errors_u) < 0)
    assert np.all(np.diff(result.errors_v) < 0)
    assert np.mean(result.observed_orders_u) > 1.5
    assert np.mean(result.observed_orders_v) > 1.5
    assert len(list(tmp_path.glob("reference-*.npz"))) == 1


def test_steady_state_study_has_no_error(zero_rates):
    study = ConvergenceStudy("space", Resolution(32, 1e-3),
                             (Resolution(8, 1e-3), Resolution(16, 1e-3)))
    case = small_case(study=study)
    result = ExperimentRunner().convergence_space(SchemeConfig(zero_rates), case=case)
    assert np.all(result.errors_u <= 1e-10)
    assert np.all(result.errors_v <= 1e-10)


def test_study_requires_definition(scaled):
    with pytest.raises(ValueError):
        ExperimentRunner().convergence_space(SchemeConfig(scaled), case=get_case(3))


def test_reference_cache_round_trip(scaled, tmp_path):
    runner = ExperimentRunner(cache_dir=str(tmp_path))
    job = RunJob(get_case(3), SchemeConfig(scaled), NewtonConfig(), n_cells=8, dt=1e-3, T=0.003)
    first = runner.reference_state(job)
    (path,) = tmp_path.glob("reference-*.npz")
    second = runner.reference_state(job)
    np.testing.assert_array_equal(first.u, second.u)
    np.testing.assert_array_equal(first.v, second.v)
    assert list(tmp_path.glob("reference-*.npz")) == [path]


def test_interrupted_cache_write_leaves_no_file(scaled, tmp_path, monkeypatch):
    def interrupted(file, **arrays):
        file.write(b"PK\x03\x04")
        raise OSError("disk full")

    runner = ExperimentRunner(cache_dir=str(tmp_path))
    job = RunJob(get_case(3), SchemeConfig(scaled), NewtonConfig(), n_cells=8, dt=1e-3, T=0.002)
    monkeypatch.setattr(np, "savez", interrupted)
    with pytest.raises(OSError):
        runner.reference_state(job)
    assert list(tmp_path.iterdir()) == []

    monkeypatch.undo()
    state = runner.reference_state(job)
    (path,) = tmp_path.iterdir()
    with np.load(path) as data:
        np.testing.assert_array_equal(data["u"], state.u)


def test_parallel_map_matches_sequential(scaled):
    jobs = [
        RunJob(get_case(3), SchemeConfig(scaled), NewtonConfig(), n_cells=n, dt=1e-3, T=0.003)
        for n in (8, 16)
    ]
    sequential = ExperimentRunner(workers=1).map(jobs)
    parallel = ExperimentRunner(workers=2).map(jobs)
    for a, b in zip(sequential, parallel):
        np.testing.assert_array_equal(a.final.u, b.final.u)
        np.testing.assert_array_equal(a.final.v, b.final.v)


def test_models_coincide_without_biomass(zero_rates):
    job = RunJob(small_case(u0=0.0, v0=0.5, T=0.005), SchemeConfig(zero_rates), NewtonConfig(),
                 n_cells=8, dt=1e-3, T=0.005, snapshot_times=(0.0, 0.005))
    comparison = ExperimentRunner().compare_models(job)
    assert set(comparison.trajectories) == set(Model)
    assert len(comparison.differences) == 2
    for difference in comparison.differences:
        assert difference.l2_u <= 1e-10
        assert difference.l2_v <= 1e-10


# ---------------------------------------------------------------------------
# Full-horizon experiments
# ---------------------------------------------------------------------------
@pytest.mark.slow
def test_space_convergence_is_second_order(scaled, tmp_path):
    result = ExperimentRunner(workers=4, cache_dir=str(tmp_path)).convergence_space(
        SchemeConfig(scaled)
    )
    assert 1.8 <= np.mean(result.observed_orders_u) <= 2.2


@pytest.mark.slow
def test_time_convergence_orders(scaled, tmp_path):
    result = ExperimentRunner(workers=4, cache_dir=str(tmp_path)).convergence_time(
        SchemeConfig(scaled)
    )
    assert 1.8 <= np.mean(result.observed_orders_v) <= 2.2
    assert 1.5 <= np.mean(result.observed_orders_u) <= 2.0


@pytest.mark.slow
@pytest.mark.parametrize("case_id", [1, 2, 3])
def test_fields_stay_in_unit_interval(scaled, case_id):
    trajectory = run_simulation(get_case(case_id), SchemeConfig(scaled))
    for r in trajectory.diagnostics:
        assert r.min_u >= -1e-6 and r.max_u <= 1 + 1e-6
        assert r.min_v >= -1e-6 and r.max_v <= 1 + 1e-6


@pytest.mark.slow
def test_substrate_is_consumed_in_case_one(scaled):
    trajectory = run_simulation(get_case(1), SchemeConfig(scaled))
    assert np.max(trajectory.final.v) < 0.01 * np.max(trajectory.initial.v)
    masses = np.array([r.mass_u for r in trajectory.diagnostics])
    assert np.all(np.diff(masses) >= -1e-10)


@pytest.mark.slow
def test_wang_zhang_biomass_leads_while_substrate_lasts(scaled):
    early = (0.5, 1.0, 1.5, 2.0)
    job = RunJob(get_case(1), SchemeConfig(scaled), NewtonConfig(), n_cells=128, dt=1e-3,
                 T=10.0, snapshot_times=early + (10.0,))
    comparison = ExperimentRunner(workers=2).compare_models(job)
    ours = {s.requested: s.state for s in comparison.trajectories[Model.VOLUME_FILLING].snapshots}
    theirs = {s.requested: s.state for s in comparison.trajectories[Model.WANG_ZHANG].snapshots}
    for t in early:
        assert np.sum(theirs[t].u) > np.sum(ours[t].u)
    # Saturated consumption exhausts the substrate, after which growth stops
    assert np.max(theirs[2.0].v) < 1e-6
    np.testing.assert_allclose(np.mean(theirs[10.0].u), np.mean(theirs[2.0].u), rtol=1e-3)
    assert np.sum(ours[10.0].u) > np.sum(theirs[10.0].u)


def compatible_profile(x):
    return 0.3 + 0.1 * np.cos(np.pi * np.asarray(x, dtype=float))


def _final(case, config, dt):
    return run_simulation(case, config, Grid(128), TimeGrid.from_horizon(case.T, dt)).final


@pytest.mark.slow
def test_time_refinement_is_self_consistent(scaled):
    config = SchemeConfig(scaled)
    finals = [_final(get_case(3), config, dt) for dt in (4e-3, 2e-3, 1e-3)]
    dx = 1 / 128
    changes = [l2_distance(a.v, b.v, dx) for a, b in zip(finals, finals[1:])]
    assert np.log2(changes[0] / changes[1]) >= 1.5


@pytest.mark.slow
def test_coefficient_treatments_agree_to_second_order(scaled):
    # Initial data with zero slope at the walls, so no boundary layer limits the order
    case = SimulationCase(97, compatible_profile, partial(constant, 0.3), T=1.0)
    differences = []
    for dt in (4e-3, 2e-3, 1e-3):
        extrapolated = _final(case, SchemeConfig(scaled), dt)
        implicit = _final(
            case, SchemeConfig(scaled, coefficient_treatment=CoefficientTreatment.IMPLICIT), dt
        )
        differences.append(l2_distance(extrapolated.u, implicit.u, 1 / 128)
                           + l2_distance(extrapolated.v, implicit.v, 1 / 128))
    orders = np.log2(np.array(differences[:-1]) / np.array(differences[1:]))
    assert np.all(orders >= 1.8)
