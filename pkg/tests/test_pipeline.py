import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rnnfilter.lstm import DivergenceError, TrainConfig
from rnnfilter.pipeline import FilterState, StepInfo, from_prediction, patch_rows, run, step
from rnnfilter.scenario import ClutterModel, SensorModel, TargetScript, generate
from rnnfilter.tracklets import AssociationConfig, Tracklet

SMALL = TrainConfig(num_layers=1, hidden_size=4, epochs=5)
CFG = AssociationConfig(m_min=2, m_init=2, g_min=10.0, g_max=45.0)


def fresh(seed=0, train_cfg=SMALL):
    return FilterState.initial(np.random.default_rng(seed), train_cfg)


def with_targets(targets, seed=0, train_cfg=SMALL):
    state = fresh(seed, train_cfg)
    return FilterState(targets, state.global_params, next_id=max(t.id for t in targets) + 1)


def test_cold_start_births_without_estimates():
    state, est = step(fresh(), np.array([[10.0, 0.0], [-300.0, 50.0]]), CFG, SMALL)
    assert est == []
    assert [t.id for t in state.targets] == [0, 1]
    assert all(t.m == CFG.m_init and len(t) == 1 for t in state.targets)
    assert state.next_id == 2 and state.step == 1


def test_mature_target_survives_and_reports_measurement():
    state = with_targets([Tracklet(0, [[100.0, 100.0]], m=3)])
    new, est = step(state, np.array([[103.0, 100.0]]), CFG, SMALL)
    assert len(est) == 1 and est[0][0] == 0
    np.testing.assert_array_equal(est[0][1], [103.0, 100.0])
    t = new.targets[0]
    assert (t.m, t.f, t.g) == (4, 0, 3.0)


def test_occluded_target_reports_its_prediction():
    patch = [[0.0, 0.0], [10.0, 5.0], [20.0, 10.0], [30.0, 15.0]]
    state = with_targets([Tracklet(4, patch, m=3)])
    info = StepInfo()
    new, est = step(state, np.zeros((0, 2)), CFG, SMALL, info)
    t = new.targets[0]
    assert (t.f, t.m) == (1, 2)
    assert t.newest.tobytes() == info.predictions[4].tobytes()
    assert est[0][1].tobytes() == info.predictions[4].tobytes()
    np.testing.assert_array_equal(t.x[:-1], patch)


def test_single_row_patch_predicts_in_place():
    state = with_targets([Tracklet(0, [[5.0, -5.0]], m=3)])
    info = StepInfo()
    step(state, np.zeros((0, 2)), CFG, SMALL, info)
    np.testing.assert_array_equal(info.predictions[0], [5.0, -5.0])
    assert info.losses == {}


def test_immature_target_not_reported():
    state = with_targets([Tracklet(0, [[0.0, 0.0]], m=0)])
    cfg = AssociationConfig(m_min=2, m_init=1, g_min=10.0, g_max=45.0)
    new, est = step(state, np.array([[1.0, 0.0]]), cfg, SMALL)
    assert new.targets[0].m == 1 and est == []


def test_frozen_to_death():
    state = with_targets([Tracklet(0, [[0.0, 0.0]], m=0)])
    info = StepInfo()
    new, est = step(state, np.zeros((0, 2)), CFG, SMALL, info)
    assert new.targets == [] and info.died == [0] and est == []


def test_write_back_only_from_mature_tuples():
    patch = [[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]]
    young = with_targets([Tracklet(0, patch, m=1)])
    new, _ = step(young, np.zeros((0, 2)), CFG, SMALL)
    assert new.global_params.theta.tobytes() == young.global_params.theta.tobytes()

    everyone = TrainConfig(num_layers=1, hidden_size=4, epochs=5, write_back="all")
    new, _ = step(with_targets([Tracklet(0, patch, m=1)], train_cfg=everyone), np.zeros((0, 2)), CFG, everyone)
    assert new.global_params.theta.tobytes() != young.global_params.theta.tobytes()

    mature = with_targets([Tracklet(0, patch, m=3)])
    new, _ = step(mature, np.zeros((0, 2)), CFG, SMALL)
    assert new.global_params.theta.tobytes() != mature.global_params.theta.tobytes()


def test_non_finite_measurement_rejected():
    with pytest.raises(ValueError):
        step(fresh(), np.array([[np.inf, 0.0]]), CFG, SMALL)


def test_divergence_names_target():
    patch = [[0.0, 0.0], [1e300, 1e300], [-1e300, 1e300]]
    state = with_targets([Tracklet(9, patch, m=3)])
    with np.errstate(all="ignore"), pytest.raises(DivergenceError) as info:
        step(state, np.zeros((0, 2)), CFG, SMALL)
    assert info.value.target_id == 9


def test_patch_row_modes():
    x = np.array([[0.0, 0.0], [50.0, -100.0], [100.0, -150.0]])
    np.testing.assert_array_equal(patch_rows(x, TrainConfig(mode="position")), x / 1000.0)
    np.testing.assert_array_equal(patch_rows(x, TrainConfig()), [[1.0, -2.0], [1.0, -1.0]])
    np.testing.assert_array_equal(from_prediction(x, np.array([0.5, 0.5]), TrainConfig(mode="position")), [500.0, 500.0])
    np.testing.assert_array_equal(from_prediction(x, np.array([1.0, 0.0]), TrainConfig()), [150.0, -150.0])
    np.testing.assert_array_equal(from_prediction(x, None, TrainConfig()), [100.0, -150.0])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n_steps=st.integers(1, 6))
def test_bookkeeping_properties(seed, n_steps):
    rng = np.random.default_rng(seed)
    cfg = AssociationConfig(m_min=2, m_init=1, g_min=20.0, g_max=60.0, m_max=4, max_batch=5)
    state = fresh(seed)
    seen_ids = set()
    for _ in range(n_steps):
        n = int(rng.integers(0, 6))
        Z = rng.uniform(-150, 150, (n, 2))
        info = StepInfo()
        before = {t.id: t for t in state.targets}
        state, est = step(state, Z, cfg, SMALL, info)
        assert len(state.targets) == len(before) - len(info.died) + len(info.born)
        ids = [t.id for t in state.targets]
        assert len(ids) == len(set(ids))
        assert not set(info.born) & seen_ids
        seen_ids |= set(ids)
        by_id = {t.id: t for t in state.targets}
        for tid, pos in est:
            assert by_id[tid].m >= cfg.m_min
            assert tid not in info.born
            np.testing.assert_array_equal(pos, by_id[tid].newest)
        for tid in info.frozen:
            assert by_id[tid].newest.tobytes() == info.predictions[tid].tobytes()
            assert by_id[tid].f == 1
        for tid in info.survived:
            assert by_id[tid].f == 0
            assert any((by_id[tid].newest == z).all() for z in Z)
        assert all(len(t) <= cfg.max_batch for t in state.targets)


def static_trace(steps=20):
    return generate([TargetScript(1, steps, (300.0, 200.0))], SensorModel(noise=False),
                    ClutterModel(lambda_c=0.0), steps, seed=0)


def test_static_target_converges():
    result = run(static_trace(), CFG, SMALL, seed=0)
    for k in range(9, result.steps):
        assert len(result.estimates[k]) == 1
        assert np.linalg.norm(result.estimates[k][0] - [300.0, 200.0]) < 1.0


def test_run_is_deterministic():
    trace = generate([TargetScript(1, 15, (300.0, 200.0), ({"steps": 14, "velocity": (5.0, 3.0)},))],
                     SensorModel(), ClutterModel(lambda_c=3.0), 15, seed=4)
    a, b = run(trace, CFG, SMALL, seed=1), run(trace, CFG, SMALL, seed=1)
    assert a.tracks == b.tracks
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.estimates, b.estimates))


def test_clutter_only_tuples_die_quickly():
    cfg = AssociationConfig(m_min=3, m_init=1, g_min=10.0, g_max=45.0, m_max=4)
    trace = generate([], SensorModel(), ClutterModel(lambda_c=3.0), 40, seed=2)
    state = fresh(2)
    born_at, survived, mature_steps = {}, set(), 0
    for fr in trace.frames:
        info = StepInfo()
        state, est = step(state, fr.meas, cfg, SMALL, info)
        survived |= set(info.survived)
        for tid in info.died:
            if tid not in survived:
                assert fr.step - born_at[tid] <= cfg.m_init - cfg.death_floor + 1
        for tid in info.born:
            born_at[tid] = fr.step
        mature_steps += bool(est)
    assert mature_steps <= len(trace.frames) // 10


def test_run_rejects_empty_trace():
    with pytest.raises(ValueError):
        run(generate([], SensorModel(), ClutterModel(), 1, 0).__class__(), CFG, SMALL)


def test_ospa_series_length():
    result = run(static_trace(8), CFG, SMALL, seed=0)
    series = result.ospa_series()
    assert len(series) == 8
    # unconfirmed at step 1, perfectly located once confirmed
    assert series[0].total == 100.0
    assert series[-1].total == 0.0
