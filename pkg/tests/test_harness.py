import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ftpl_lab import harness as H
from ftpl_lab.distributions import DistributionSpec as S
from ftpl_lab.environments import Environment
from ftpl_lab.harness import ExperimentConfig, RegretCurve
from ftpl_lab.policies import PolicyConfig, PolicyKind

FTPL = PolicyConfig(PolicyKind.FTPL, S.frechet(2.0))
UNIFORM = PolicyConfig(PolicyKind.UNIFORM)
STOCH = Environment.stochastic([0.25, 0.5])


def config(**kw):
    base = dict(env=STOCH, policies=(FTPL,), horizon=2000, trials=3, master_seed=7)
    base.update(kw)
    return ExperimentConfig(**base)


# -- seeding and trials ------------------------------------------------------------------


def test_splitmix_reference_values():
    # first outputs of the reference SplitMix64 stream seeded with 0
    x, out = 0, []
    for _ in range(3):
        out.append(H.splitmix64(x))
        x = (x + 0x9E3779B97F4A7C15) & ((1 << 64) - 1)
    assert out == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_trial_deterministic():
    cfg = config()
    a, b = H.run_trial(cfg, FTPL, 2), H.run_trial(cfg, FTPL, 2)
    np.testing.assert_array_equal(a.arms, b.arms)
    np.testing.assert_array_equal(a.resample_counts, b.resample_counts)
    c = H.run_trial(cfg, FTPL, 3)
    assert not np.array_equal(a.arms, c.arms)


def test_adding_a_policy_leaves_others_unchanged():
    one = H.run_experiment(config(policies=(FTPL,)))
    two = H.run_experiment(config(policies=(UNIFORM, FTPL)))
    np.testing.assert_array_equal(one[0].mean, two[1].mean)


def test_zero_horizon():
    tr = H.run_trial(config(horizon=0), FTPL, 0)
    assert len(tr) == 0
    curves = H.run_experiment(config(horizon=0))
    assert curves[0].checkpoints.size == 0
    assert H.render_csv(curves).count("\n") == 1


def test_ftpl_beats_uniform_tenfold():
    cfg = config(horizon=10_000, trials=5, policies=(FTPL, UNIFORM))
    ftpl, uni = H.run_experiment(cfg)
    assert uni.mean[-1] == pytest.approx(1250, rel=0.1)
    assert ftpl.mean[-1] * 10 < 1250


def test_trial_error_carries_index():
    env = Environment.adversarial(matrix=np.zeros((5, 2)))
    with pytest.raises(H.TrialError) as info:
        H.run_experiment(config(env=env, horizon=10, trials=1))
    assert info.value.trial == 0


def test_config_validation():
    with pytest.raises(H.ConfigError):
        config(trials=0)
    with pytest.raises(H.ConfigError):
        config(policies=(FTPL, FTPL))
    with pytest.raises(H.ConfigError):
        ExperimentConfig.from_dict({"env": {"kind": "stochastic", "means": [0.1, 0.2]}, "policies": [], "horizon": 5})
    with pytest.raises(H.ConfigError):
        ExperimentConfig.from_dict({"env": {"kind": "stochastic", "means": [0.1, 0.2]},
                                    "policies": [{"kind": "uniform"}], "horizon": 5, "colour": 3})


def test_config_file_round_trip(tmp_path):
    cfg = config(policies=(FTPL, UNIFORM))
    p = tmp_path / "exp.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.load(p).to_dict() == cfg.to_dict()


# -- checkpoints and aggregation -----------------------------------------------------------


def test_checkpoints():
    assert list(H.checkpoints(10)) == [1, 2, 4, 8, 10]
    assert list(H.checkpoints(8)) == [1, 2, 4, 8]
    assert list(H.checkpoints(10, 3)) == [1, 2, 3, 4, 6, 8, 9, 10]


@settings(max_examples=50, deadline=None)
@given(T=st.integers(1, 10**6), every=st.integers(0, 5000))
def test_checkpoints_keep_final_round(T, every):
    cps = H.checkpoints(T, every)
    assert cps[-1] == T and np.all(np.diff(cps) > 0) and cps[0] == 1


def test_single_trial_mean_equals_trace():
    cfg = config(trials=1)
    curve = H.run_experiment(cfg)[0]
    tr = H.run_trial(cfg, FTPL, 0)
    np.testing.assert_array_equal(curve.mean, np.cumsum(tr.regret_increments)[curve.checkpoints - 1])
    np.testing.assert_array_equal(curve.std, 0.0)


def test_aggregate_order_independent():
    rows = np.random.default_rng(0).random((20, 5))
    a = H.aggregate("p", np.arange(1, 6), rows)
    b = H.aggregate("p", np.arange(1, 6), rows[::-1].copy())
    np.testing.assert_allclose(a.mean, b.mean, rtol=1e-15)
    np.testing.assert_allclose(a.std, b.std, rtol=1e-13)
    np.testing.assert_allclose(a.stderr, a.std / math.sqrt(20))


def test_stderr_shrinks_with_trials():
    small = H.run_experiment(config(horizon=512, trials=100, policies=(UNIFORM,), overlays=False))[0]
    big = H.run_experiment(config(horizon=512, trials=400, policies=(UNIFORM,), overlays=False))[0]
    assert big.stderr[-1] < 0.6 * small.stderr[-1]


def test_parallel_equals_serial(tmp_path):
    cfg = config(policies=(FTPL, UNIFORM), trials=6)
    serial = H.render_csv(H.run_experiment(cfg, threads=1))
    parallel = H.render_csv(H.run_experiment(cfg, threads=3))
    assert serial == parallel


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("FTPL_LAB_THREADS", "4")
    assert H.resolve_threads(None) == 4
    assert H.resolve_threads(2) == 2
    with pytest.raises(H.ConfigError):
        H.resolve_threads(0)


# -- overlays and slopes ------------------------------------------------------------------------


def test_overlay_shape_examples():
    shapes = H.overlay_shapes(np.array([100.0]), 4)
    assert shapes["sqrt_Kt"][0] == pytest.approx(20.0)
    assert H.theorem3_exponent(3.0) == pytest.approx(0.25)
    assert H.theorem3_exponent(1.5) == pytest.approx(0.25)
    assert H.theorem3_exponent(2.0) is None


def test_overlay_scaling_recovers_multiplier():
    t = np.arange(1, 1001, dtype=float)
    shape = np.sqrt(t)
    assert H.fit_scale(t, 3.5 * shape, shape) == pytest.approx(3.5)


def test_overlays_attached():
    curve = H.run_experiment(config())[0]
    assert set(curve.overlays) == {"sqrt_Kt", "log_over_gap", "power_law"}
    assert all(v.shape == curve.mean.shape for v in curve.overlays.values())


def test_slope_examples():
    t = np.geomspace(1, 1e5, 200)
    assert H.slope_fit(t, 0.5, np.sqrt(t)) == pytest.approx(0.5, abs=1e-12)
    assert H.slope_fit(t, 0.5, np.full_like(t, 3.0)) == pytest.approx(0.0, abs=1e-12)
    assert H.slope_fit(t, 0.5, np.log(t)) < 0.15
    with pytest.raises(ValueError):
        H.slope_fit(t, 0.5, np.zeros_like(t))


@settings(max_examples=30, deadline=None)
@given(p=st.floats(-2, 2), c=st.floats(0.01, 100))
def test_slope_of_power_law(p, c):
    t = np.geomspace(1, 1e6, 50)
    assert H.slope_fit(t, 0.5, c * t**p) == pytest.approx(p, abs=1e-9)


# -- emission ---------------------------------------------------------------------------------


def _curve(n=3, overlays=None):
    cps = np.array([1, 2, 4][:n])
    return RegretCurve("p", cps, np.array([0.5, 1.0, 1.25][:n]), np.zeros(n), np.zeros(n), 1, 0, overlays or {})


def test_csv_layout(tmp_path):
    path = H.emit([], tmp_path / "empty.csv")
    assert path.read_text() == "policy,t,mean_regret,std_regret,overlay_name,overlay_value\n"
    text = H.render_csv([_curve()])
    assert text.count("\n") == 4
    text = H.render_csv([_curve(overlays={"sqrt_Kt": np.ones(3)})])
    rows = text.strip().split("\n")[1:]
    assert len(rows) == 6 and rows[0].endswith(",,") and rows[3].split(",")[4] == "sqrt_Kt"


def test_json_round_trip_byte_identical(tmp_path):
    curves = H.run_experiment(config(policies=(FTPL, UNIFORM)))
    first = H.emit(curves, tmp_path / "a.json", "json").read_text()
    again = H.emit(H.parse_json(first), tmp_path / "b.json", "json").read_text()
    assert first == again


def test_rerun_byte_identical(tmp_path):
    cfg = config(policies=(FTPL, UNIFORM))
    a = H.emit(H.run_experiment(cfg), tmp_path / "a.csv").read_bytes()
    b = H.emit(H.run_experiment(cfg), tmp_path / "b.csv").read_bytes()
    assert a == b


def test_emit_surfaces_filesystem_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        H.emit([_curve()], tmp_path / "missing" / "x.csv")


# -- ablation ---------------------------------------------------------------------------------


def test_exact_weight_matches_gr100():
    exact = PolicyConfig(PolicyKind.FTPL_EXACT, S.frechet(2.0))
    gr = PolicyConfig(PolicyKind.FTPL, S.frechet(2.0), gr_repeats=100)
    a, b = H.run_experiment(config(horizon=10_000, trials=8, policies=(exact, gr), overlays=False))
    band = 3 * math.hypot(a.stderr[-1], b.stderr[-1])
    assert abs(a.mean[-1] - b.mean[-1]) < band
