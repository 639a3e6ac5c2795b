import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from wdsmc.density import empirical
from wdsmc.estimator import WDSMCSampler
from wdsmc.exceptions import EmptyInput, HistoryTooShort, PriorExhausted, TotalDegeneracy
from wdsmc.models import GaussianCloudModel, ObservationSeries, observe
from wdsmc.models.base import ForwardModel, SimulationRun
from wdsmc.smcs import (
    BandwidthFloorWarning,
    BandwidthSchedule,
    DistanceHistory,
    PosteriorTrace,
    PriorBox,
    ProposalConfig,
    SMCSConfig,
    WeightedEnsemble,
    acceptance_probability,
    adaptive_bandwidth,
    cumulative_log_target,
    ess,
    init_ensemble,
    log_kernel,
    mcmc_move,
    propose,
    resample,
    run,
    update_weights,
)

N_CASES = 200
PROPERTY = settings(max_examples=N_CASES)
BOX = PriorBox(("theta",), [-5.0], [5.0])

log_weights = arrays(np.float64, st.integers(2, 60), elements=st.floats(-50, 0))


def ensemble_from(lw, names=("theta",)):
    lw = np.asarray(lw, float)
    n = len(lw)
    samples = np.linspace(-1, 1, n).reshape(n, 1)
    ens = WeightedEnsemble(names, samples, np.zeros(n), [DistanceHistory() for _ in range(n)])
    return update_weights(ens, lw)


@pytest.fixture(scope="module")
def toy():
    model = GaussianCloudModel(n_points=30, seed=3)
    truth = model.simulate({"theta": 1.0}, 6)
    obs = ObservationSeries([observe(f, 0.1, np.random.default_rng([5, t]))
                             for t, f in enumerate(truth.frames)], truth.frame_times, 0.1)
    return model, obs


# ---------------------------------------------------------------- prior

def test_prior_rejects_zero_width():
    with pytest.raises(ValueError):
        PriorBox(("a",), [1.0], [1.0])


def test_prior_log_density():
    box = PriorBox.from_dict({"a": (0, 2), "b": (0, 5)})
    assert box.log_density([1, 1]) == pytest.approx(-math.log(10))
    assert box.log_density([3, 1]) == -np.inf
    assert box.names == ("a", "b")


# ------------------------------------------------------------- proposal

def test_proposal_rejects_zero_std():
    with pytest.raises(ValueError):
        ProposalConfig([0.0])


def test_proposal_default_is_five_percent():
    np.testing.assert_allclose(ProposalConfig.from_prior(BOX).stds, [0.5])


def test_propose_deterministic():
    cfg = ProposalConfig([0.3, 1.0])
    a = propose([0, 0], cfg, np.random.default_rng(4))
    b = propose([0, 0], cfg, np.random.default_rng(4))
    np.testing.assert_array_equal(a, b)


def test_propose_step_std():
    cfg = ProposalConfig([0.3, 2.0])
    rng = np.random.default_rng(0)
    draws = np.array([propose([1.0, -1.0], cfg, rng) for _ in range(100_000)])
    np.testing.assert_allclose(draws.std(axis=0) / cfg.stds, 1.0, atol=0.02)


# ------------------------------------------------------------ log kernel

def test_log_kernel_values():
    assert log_kernel(0.0, 1.0) == pytest.approx(-0.9189385332046727, abs=1e-15)
    assert log_kernel(2.5, 2.5) == pytest.approx(log_kernel(0.0, 2.5) - 0.5, abs=1e-15)
    assert math.exp(log_kernel(1.0, 1.0)) == pytest.approx(0.24197072451914337, rel=1e-14)
    assert log_kernel(np.inf, 1.0) == -np.inf


def test_log_kernel_vectorized():
    out = log_kernel(np.array([0.0, 1.0]), np.array([1.0, 2.0]))
    assert out.shape == (2,)
    assert out[1] == pytest.approx(log_kernel(1.0, 2.0))


# ------------------------------------------------------------- bandwidth

@pytest.mark.parametrize("values, h", [([0.1, 0.2, 0.4], 0.2), ([0.1, 0.3], 0.2)])
def test_bandwidth_median(values, h):
    assert adaptive_bandwidth(values) == pytest.approx(h)


def test_bandwidth_floor():
    with pytest.warns(BandwidthFloorWarning):
        assert adaptive_bandwidth([0.0, 0.0, 0.0]) == 1e-12


def test_bandwidth_empty():
    with pytest.raises(EmptyInput):
        adaptive_bandwidth([])


def test_schedule_is_append_only():
    s = BandwidthSchedule([0.5])
    with pytest.raises(TypeError):
        s[0] = 1.0
    with pytest.raises(ValueError):
        s.append(0.0)


# ---------------------------------------------------------------- target

def _history(ds, schedule):
    h = DistanceHistory()
    for d, bw in zip(ds, schedule.as_array()):
        h.append(d, log_kernel(d, bw))
    return h


def test_target_outside_box():
    sched = BandwidthSchedule([1.0])
    assert cumulative_log_target(_history([0.1], sched), BOX, [7.0], sched, 1) == -np.inf


def test_target_at_t0_is_log_prior():
    assert cumulative_log_target(DistanceHistory(), BOX, [0.0], BandwidthSchedule(), 0) == \
        pytest.approx(-math.log(10))


def test_target_pure_function():
    sched = BandwidthSchedule([0.4, 0.7])
    a = _history([0.1, 0.5], sched)
    b = _history([0.1, 0.5], sched)
    assert cumulative_log_target(a, BOX, [1.0], sched, 2) == cumulative_log_target(
        b, BOX, [1.0], sched, 2)


def test_target_history_too_short():
    sched = BandwidthSchedule([0.4, 0.7])
    with pytest.raises(HistoryTooShort):
        cumulative_log_target(_history([0.1], sched), BOX, [1.0], sched, 2)


def test_target_degenerate_history():
    h = DistanceHistory()
    h.mark_degenerate("speed")
    h.distances.append(np.nan)
    assert cumulative_log_target(h, BOX, [0.0], BandwidthSchedule([1.0]), 1) == -np.inf


# ------------------------------------------------------------ acceptance

def test_acceptance_examples():
    assert acceptance_probability(-3.0, -3.0) == 1.0
    assert acceptance_probability(math.log(0.5), 0.0) == pytest.approx(0.5)
    assert acceptance_probability(-np.inf, -2.0) == 0.0
    assert acceptance_probability(-np.inf, -np.inf) == 0.0
    assert acceptance_probability(-2.0, -np.inf) == 1.0


@PROPERTY
@given(st.floats(-500, 500), st.floats(-500, 500), st.floats(-1e3, 1e3))
def test_acceptance_shift_invariance(c, x, k):
    a = acceptance_probability(c, x)
    b = acceptance_probability(c + k, x + k)
    assert 0.0 <= a <= 1.0
    assert abs(a - b) <= 1e-9 * max(a, 1e-300) + 1e-300


# --------------------------------------------------------------- weights

def test_identical_distances_leave_weights():
    ens = ensemble_from(np.log([0.1, 0.2, 0.7]))
    out = update_weights(ens, np.full(3, log_kernel(0.3, 0.5)))
    np.testing.assert_allclose(out.weights, [0.1, 0.2, 0.7], atol=1e-14)


def test_dominant_sample():
    ens = ensemble_from(np.zeros(5))
    lk = log_kernel(np.array([0.0, 50.0, 50.0, 50.0, 50.0]), 1.0)
    assert update_weights(ens, lk).weights[0] == pytest.approx(1.0, abs=1e-12)


def test_two_sample_hand_check():
    ens = ensemble_from(np.zeros(2))
    h = 0.7
    out = update_weights(ens, log_kernel(np.array([h, 2 * h]), h))
    np.testing.assert_allclose(out.weights, [0.8175744761936437, 0.18242552380635635], rtol=1e-12)


def test_total_degeneracy():
    with pytest.raises(TotalDegeneracy):
        update_weights(ensemble_from(np.zeros(3)), np.full(3, -np.inf))


@PROPERTY
@given(log_weights)
def test_weights_normalized_and_ess_bounds(lw):
    ens = ensemble_from(lw)
    assert abs(ens.weights.sum() - 1.0) < 1e-10
    e = ess(ens)
    assert 1.0 - 1e-9 <= e <= len(ens) + 1e-9


@PROPERTY
@given(log_weights, arrays(np.float64, 60, elements=st.floats(-40, 0)))
def test_update_preserves_normalization(lw, lk):
    ens = ensemble_from(lw)
    out = update_weights(ens, lk[:len(ens)])
    assert abs(out.weights.sum() - 1.0) < 1e-10


def test_ess_examples():
    assert ess(ensemble_from(np.zeros(500))) == pytest.approx(500)
    assert ess(ensemble_from([0.0] + [-np.inf] * 9)) == pytest.approx(1.0)
    assert ess(ensemble_from([0.0, 0.0] + [-np.inf] * 8)) == pytest.approx(2.0)


# -------------------------------------------------------------- resample

def _counts(ens, out):
    return np.array([np.sum(out.samples[:, 0] == s) for s in ens.samples[:, 0]])


def test_resample_point_mass():
    ens = ensemble_from([0.0] + [-np.inf] * 7)
    out = resample(ens, np.random.default_rng(0))
    assert np.all(out.samples == ens.samples[0])


def test_resample_uniform_keeps_everything():
    ens = ensemble_from(np.zeros(20))
    out = resample(ens, np.random.default_rng(1))
    np.testing.assert_array_equal(_counts(ens, out), np.ones(20))


def test_resample_exact_counts():
    lw = np.log([0.7, 0.3] + [1e-300] * 8)
    ens = ensemble_from(lw)
    for seed in range(20):
        counts = _counts(ens, resample(ens, np.random.default_rng(seed)))
        assert counts[0] == 7 and counts[1] == 3


@PROPERTY
@given(log_weights, st.integers(0, 2**32 - 1))
def test_resample_bracketing(lw, seed):
    ens = ensemble_from(lw)
    out = resample(ens, np.random.default_rng(seed))
    Nw = len(ens) * ens.weights
    counts = _counts(ens, out)
    assert np.all(counts >= np.floor(Nw - 1e-9)) and np.all(counts <= np.ceil(Nw + 1e-9))
    np.testing.assert_allclose(out.weights, 1 / len(ens))


def test_resample_copies_histories():
    ens = ensemble_from([0.0, -np.inf])
    ens.histories[0].append(0.5, -1.0)
    out = resample(ens, np.random.default_rng(0))
    assert out.histories[0] is not out.histories[1]
    out.histories[1].append(0.1, -0.1)
    assert len(out.histories[0]) == 1


# ------------------------------------------------------------------ init

class _BrokenRun(SimulationRun):
    def advance(self):
        return np.full((3, 2), np.nan), np.arange(3), 1.0


class _BrokenModel(ForwardModel):
    def parameter_names(self):
        return ["theta"]

    def start(self, theta):
        return _BrokenRun()

    @property
    def bounds(self):
        return (np.zeros(2), np.ones(2))


def test_init_uniform_weights():
    ens = init_ensemble(BOX, 500, 0)
    np.testing.assert_allclose(ens.weights, 1 / 500)
    assert np.all(ens.samples >= -5) and np.all(ens.samples <= 5)


def test_init_deterministic():
    a = init_ensemble(BOX, 50, 9)
    b = init_ensemble(BOX, 50, 9)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_init_prior_exhausted():
    with pytest.raises(PriorExhausted):
        init_ensemble(BOX, 4, 0, _BrokenModel())


# ------------------------------------------------------------ mcmc move

def _prepared(toy, N=30, std=1e-9, seed=0):
    model, obs = toy
    cfg = SMCSConfig(BOX, n_samples=N, proposal=ProposalConfig([std]), seed=seed)
    trace = run(cfg, obs.truncate(1), model)
    return trace.ensemble, trace.schedule, cfg


def test_tiny_steps_almost_always_accepted(toy):
    model, obs = toy
    ens, sched, cfg = _prepared(toy, std=1e-9)
    moved, accepted = mcmc_move(ens, obs, model, sched, cfg.proposal,
                                np.random.default_rng(0), prior=BOX, t=1)
    assert accepted.mean() > 0.9


def test_out_of_box_candidates_rejected(toy):
    model, obs = toy
    ens, sched, _ = _prepared(toy)
    far = ProposalConfig([1e6])
    moved, accepted = mcmc_move(ens, obs, model, sched, far, np.random.default_rng(1),
                                prior=BOX, t=1)
    # a std of 1e6 puts essentially every candidate outside [-5, 5]
    assert accepted.mean() < 0.05
    np.testing.assert_array_equal(moved.samples, ens.samples)


# ------------------------------------------------------------------- run

def _trace_csv(trace, path):
    trace.to_csv(path)
    return path.read_bytes()


def test_run_is_deterministic(toy, tmp_path):
    model, obs = toy
    cfg = SMCSConfig(BOX, n_samples=40, seed=12)
    a = _trace_csv(run(cfg, obs, model), tmp_path / "a.csv")
    b = _trace_csv(run(cfg, obs, model), tmp_path / "b.csv")
    assert a == b
    c = _trace_csv(run(SMCSConfig(BOX, n_samples=40, seed=13), obs, model), tmp_path / "c.csv")
    assert a != c


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("reweight", ["pre_move", "post_move"])
def test_run_invariants(toy, seed, reweight):
    model, obs = toy
    cfg = SMCSConfig(BOX, n_samples=40, seed=seed, reweight=reweight)
    trace = run(cfg, obs, model, snapshots=True)
    sched = trace.schedule.as_array()
    # bandwidth immutability: every record's h is the frozen schedule entry
    assert [r.h for r in trace.records] == list(sched)
    for rec in trace.records:
        assert 1 - 1e-9 <= rec.ess <= cfg.n_samples + 1e-9
        assert rec.resampled == (rec.ess < cfg.ess_threshold)
    for _, w, samples in trace.snapshots:
        assert abs(w.sum() - 1) < 1e-10
        assert np.all(samples >= BOX.lower) and np.all(samples <= BOX.upper)
    ens = trace.ensemble
    T = len(obs)
    lp = BOX.log_density([0.0])
    for j, hist in enumerate(ens.histories):
        assert len(hist) == T
        assert all(d >= 0 for d in hist.distances)
        recomputed = cumulative_log_target(hist, BOX, ens.samples[j], trace.schedule, T) - lp
        assert abs(hist.cumulative - recomputed) <= 1e-12 * max(1.0, abs(recomputed))


def test_run_tight_prior_stays_put(toy):
    model, obs = toy
    box = PriorBox(("theta",), [0.999], [1.001])
    trace = run(SMCSConfig(box, n_samples=30, seed=0), obs.truncate(1), model)
    assert trace.final_mean()["theta"] == pytest.approx(1.0, abs=1e-3)


def test_run_total_degeneracy(toy):
    _, obs = toy
    with pytest.raises((TotalDegeneracy, PriorExhausted)):
        run(SMCSConfig(BOX, n_samples=4, seed=0), obs, _BrokenModel())


def test_exact_likelihood_hook():
    y = np.array([0.5, 1.5, 1.0])
    obs = ObservationSeries([empirical([[v]]) for v in y], [1, 2, 3])
    trace = run(SMCSConfig(BOX, n_samples=300, seed=0), obs,
                exact_loglik=lambda th, t: -0.5 * (y[t - 1] - th["theta"]) ** 2)
    assert math.isnan(trace.records[0].h)
    assert trace.final_mean()["theta"] == pytest.approx(1.0, abs=0.15)


def test_trace_csv_columns(toy, tmp_path):
    model, obs = toy
    trace = run(SMCSConfig(BOX, n_samples=20, seed=0), obs.truncate(2), model)
    trace.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,param,mean,std,ess,h,accept_rate,resampled"
    assert len(lines) == 3
    table = PosteriorTrace.read_csv(tmp_path / "t.csv")
    assert table["theta"]["mean"][-1] == trace.final_mean()["theta"]


def test_config_rejects_bad_reweight():
    with pytest.raises(ValueError):
        SMCSConfig(BOX, reweight="sometimes")


def test_default_threshold_is_half():
    assert SMCSConfig(BOX, n_samples=500).ess_threshold == 250


# ------------------------------------------------------------- estimator

def test_estimator_params_and_clone():
    est = WDSMCSampler(prior={"theta": (-5, 5)}, n_samples=50, seed=3)
    assert est.get_params()["n_samples"] == 50
    est2 = clone(est).set_params(seed=4)
    assert est2.seed == 4 and est.seed == 3


def test_estimator_fit_predict(toy):
    model, obs = toy
    est = WDSMCSampler(model, {"theta": (-5, 5)}, n_samples=60, seed=0)
    with pytest.raises(NotFittedError):
        est.predict(2)
    est.fit(obs)
    assert est.posterior_mean_["theta"] == pytest.approx(1.0, abs=0.3)
    assert len(est.bandwidths_) == len(obs)
    assert len(est.predict(3)) == 3
    samples, weights = est.sample()
    assert samples.shape == (60, 1) and abs(weights.sum() - 1) < 1e-10
    assert est.score(obs) <= 0


def test_estimator_requires_series():
    with pytest.raises(TypeError):
        WDSMCSampler(GaussianCloudModel(), {"theta": (-1, 1)}).fit(np.zeros((3, 2)))
