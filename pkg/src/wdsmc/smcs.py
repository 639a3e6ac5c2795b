"""Wasserstein-distance sequential Monte Carlo sampler.

At observation step ``t`` every sample proposes a random-walk candidate,
simulates it up to ``t``, and is accepted or rejected with a Metropolis ratio
of surrogate posteriors

    log pi_t(theta) = log pi_0(theta) + sum_i log H(D_i(theta); h_i),

where ``D_i`` is the Wasserstein distance between the simulated and observed
clouds at step ``i`` and ``H`` a Gaussian kernel whose bandwidth ``h_i`` is the
median step-``i`` distance over current and candidate samples.  Bandwidths are
frozen once chosen.  Weights are then multiplied by the step-``t`` kernel and
the ensemble is resampled systematically when the ESS falls below a threshold.
"""

import copy
import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .exceptions import (
    EmptyInput,
    HistoryTooShort,
    PriorExhausted,
    TotalDegeneracy,
    WDSMCError,
)
from .models.base import Trajectory, validate_trajectory
from .ot import DiscreteDistribution, wasserstein_distance

__all__ = [
    "PriorBox",
    "ProposalConfig",
    "DistanceHistory",
    "BandwidthSchedule",
    "WeightedEnsemble",
    "SMCSConfig",
    "StepRecord",
    "PosteriorTrace",
    "BandwidthFloorWarning",
    "init_ensemble",
    "propose",
    "log_kernel",
    "adaptive_bandwidth",
    "cumulative_log_target",
    "acceptance_probability",
    "mcmc_move",
    "update_weights",
    "ess",
    "resample",
    "run",
]

BANDWIDTH_FLOOR = 1e-12
# post_move weights the moved samples; pre_move weights the samples the move starts from
REWEIGHT_MODES = ("post_move", "pre_move")
MAX_PRIOR_REDRAWS = 100

# substream tags for counter-derived generators
_INIT, _PROPOSE, _ACCEPT, _RESAMPLE = 0, 1, 2, 3


class BandwidthFloorWarning(UserWarning):
    """All step distances were zero; the bandwidth was floored."""


def _stream(seed, tag, t, j=0):
    return np.random.default_rng([int(seed), tag, int(t), int(j)])


# ------------------------------------------------------------------- types

@dataclass(frozen=True)
class PriorBox:
    """Independent uniform priors on ``[lower[k], upper[k]]``."""

    names: tuple
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        names = tuple(self.names)
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if not (len(names) == lo.size == hi.size) or not names:
            raise ValueError("names, lower and upper must share one nonzero length")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names in {names}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("prior bounds must be finite")
        if np.any(lo >= hi):
            raise ValueError(f"prior needs lower < upper, got {lo} and {hi}")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_dict(cls, bounds):
        names = list(bounds)
        return cls(tuple(names), [bounds[k][0] for k in names], [bounds[k][1] for k in names])

    def to_dict(self):
        return {n: [float(a), float(b)] for n, a, b in zip(self.names, self.lower, self.upper)}

    @property
    def dim(self):
        return len(self.names)

    @property
    def width(self):
        return self.upper - self.lower

    def mean(self):
        return 0.5 * (self.lower + self.upper)

    def contains(self, theta):
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def log_density(self, theta):
        if not self.contains(theta):
            return -np.inf
        return -float(np.sum(np.log(self.width)))

    def sample(self, rng, size=None):
        shape = (self.dim,) if size is None else (size, self.dim)
        return self.lower + self.width * rng.random(shape)


@dataclass(frozen=True)
class ProposalConfig:
    """Per-parameter standard deviations of the Gaussian random walk."""

    stds: np.ndarray

    def __post_init__(self):
        stds = np.asarray(self.stds, dtype=float).reshape(-1)
        if stds.size == 0 or not np.all(np.isfinite(stds)) or np.any(stds <= 0):
            raise ValueError(f"proposal stds must be positive, got {stds}")
        object.__setattr__(self, "stds", stds)

    @classmethod
    def from_prior(cls, prior, fraction=0.05):
        return cls(fraction * prior.width)


@dataclass
class DistanceHistory:
    """Per-step distances of one sample's trajectory and its cached log-likelihood.

    In exact-likelihood mode ``distances`` holds NaN and ``log_terms`` the
    injected per-step log-likelihoods.
    """

    distances: list = field(default_factory=list)
    log_terms: list = field(default_factory=list)
    cumulative: float = 0.0
    degenerate: bool = False
    reason: str = None

    def __len__(self):
        return len(self.distances)

    def append(self, distance, log_term):
        self.distances.append(float(distance))
        self.log_terms.append(float(log_term))
        self.cumulative += float(log_term)

    def mark_degenerate(self, reason):
        self.degenerate = True
        self.reason = reason
        self.cumulative = -np.inf


class BandwidthSchedule:
    """Append-only list of per-step bandwidths ``h_1..h_t``."""

    def __init__(self, values=()):
        self._values = []
        for v in values:
            self.append(v)

    def append(self, h):
        h = float(h)
        if not (h > 0 and math.isfinite(h)):
            raise ValueError(f"bandwidth must be positive, got {h}")
        self._values.append(h)

    def __getitem__(self, i):
        return self._values[i]

    def __len__(self):
        return len(self._values)

    def as_array(self):
        return np.array(self._values)

    def __repr__(self):
        return f"BandwidthSchedule({self._values!r})"


class _Track:
    """Resumable simulation of one sample plus its last validated frame."""

    __slots__ = ("run", "points", "ids", "time")

    def __init__(self, run, points=None, ids=None, time=None):
        self.run = run
        self.points = points
        self.ids = ids
        self.time = time

    def copy(self):
        return _Track(self.run.copy() if self.run is not None else None,
                      self.points, self.ids, self.time)


@dataclass
class WeightedEnsemble:
    names: tuple
    samples: np.ndarray
    log_weights: np.ndarray
    histories: list
    tracks: list = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if self.samples.shape[0] < 2:
            raise ValueError("an ensemble needs at least two samples")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def weights(self):
        return np.exp(self.log_weights)

    def theta(self, j):
        return dict(zip(self.names, (float(v) for v in self.samples[j])))

    def mean(self):
        return self.weights @ self.samples

    def std(self):
        w = self.weights
        mu = w @ self.samples
        return np.sqrt(np.maximum(w @ (self.samples - mu) ** 2, 0.0))


@dataclass(frozen=True)
class SMCSConfig:
    prior: PriorBox
    n_samples: int = 500
    ess_threshold: float = None
    proposal: ProposalConfig = None
    seed: int = 0
    reweight: str = "pre_move"

    def __post_init__(self):
        if self.reweight not in REWEIGHT_MODES:
            raise ValueError(f"reweight must be one of {REWEIGHT_MODES}, got {self.reweight!r}")
        if int(self.n_samples) < 2:
            raise ValueError("n_samples must be >= 2")
        object.__setattr__(self, "n_samples", int(self.n_samples))
        if self.ess_threshold is None:
            object.__setattr__(self, "ess_threshold", self.n_samples / 2)
        if self.proposal is None:
            object.__setattr__(self, "proposal", ProposalConfig.from_prior(self.prior))
        if self.proposal.stds.size != self.prior.dim:
            raise ValueError("one proposal std per prior parameter is required")


@dataclass(frozen=True)
class StepRecord:
    t: int
    mean: np.ndarray
    std: np.ndarray
    ess: float
    h: float
    accept_rate: float
    resampled: bool


@dataclass
class PosteriorTrace:
    names: tuple
    records: list = field(default_factory=list)
    schedule: BandwidthSchedule = field(default_factory=BandwidthSchedule)
    ensemble: WeightedEnsemble = None
    snapshots: list = field(default_factory=list)

    CSV_HEADER = ("t", "param", "mean", "std", "ess", "h", "accept_rate", "resampled")

    def __len__(self):
        return len(self.records)

    def rows(self, record):
        for k, name in enumerate(self.names):
            yield [record.t, name, _fmt(record.mean[k]), _fmt(record.std[k]),
                   _fmt(record.ess), _fmt(record.h), _fmt(record.accept_rate),
                   int(record.resampled)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.CSV_HEADER)
            for rec in self.records:
                writer.writerows(self.rows(rec))

    def final_mean(self):
        return dict(zip(self.names, (float(v) for v in self.records[-1].mean)))

    def final_std(self):
        return dict(zip(self.names, (float(v) for v in self.records[-1].std)))

    @staticmethod
    def read_csv(path):
        """Parse a trace CSV into ``{param: {column: array}}``."""
        out = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                cols = out.setdefault(row["param"], {k: [] for k in PosteriorTrace.CSV_HEADER
                                                     if k != "param"})
                for k in cols:
                    cols[k].append(float(row[k]))
        return {p: {k: np.array(v) for k, v in cols.items()} for p, cols in out.items()}


def _fmt(x):
    return format(float(x), ".17g")


# ------------------------------------------------------------- primitives

def log_kernel(D, h):
    """Log of the Gaussian kernel ``exp(-D^2 / 2h^2) / (sqrt(2 pi) h)``."""
    D = np.asarray(D, dtype=float)
    h = np.asarray(h, dtype=float)
    out = -(D * D) / (2.0 * h * h) - np.log(math.sqrt(2.0 * math.pi) * h)
    return float(out) if out.ndim == 0 else out


def adaptive_bandwidth(distances):
    """Median of the finite distances, floored at 1e-12."""
    d = np.asarray(distances, dtype=float).reshape(-1)
    d = d[np.isfinite(d)]
    if d.size == 0:
        raise EmptyInput("no finite distances to take a median of")
    h = float(np.median(d))
    if h <= 0:
        warnings.warn("median distance is zero; using the 1e-12 floor",
                      BandwidthFloorWarning, stacklevel=2)
        return BANDWIDTH_FLOOR
    return h


def cumulative_log_target(history, prior, theta, schedule, t, *, exact=False):
    """``log pi_0(theta) + sum_{i<=t} log H(D_i, h_i)``; ``-inf`` when unsupported."""
    if len(history) < t:
        raise HistoryTooShort(f"history has {len(history)} steps, need {t}")
    if not exact and len(schedule) < t:
        raise HistoryTooShort(f"schedule has {len(schedule)} bandwidths, need {t}")
    lp = prior.log_density(theta)
    if lp == -np.inf or history.degenerate:
        return -np.inf
    if t == 0:
        return lp
    if exact:
        return lp + float(np.sum(history.log_terms[:t]))
    D = np.asarray(history.distances[:t])
    return lp + float(np.sum(log_kernel(D, schedule.as_array()[:t])))


def acceptance_probability(candidate_target, current_target):
    """``min(1, exp(candidate - current))`` with ``-inf`` candidates rejected."""
    if candidate_target == -np.inf:
        return 0.0
    if current_target == -np.inf:
        return 1.0
    diff = candidate_target - current_target
    return 1.0 if diff >= 0 else math.exp(diff)


def propose(sample, cfg, rng):
    """Symmetric Gaussian random walk; the result may leave the prior box."""
    sample = np.asarray(sample, dtype=float)
    return sample + cfg.stds * rng.standard_normal(sample.shape)


def update_weights(ensemble, log_kernels):
    """Add step log-kernels to the log weights and renormalize."""
    lk = np.asarray(log_kernels, dtype=float)
    if lk.shape != ensemble.log_weights.shape:
        raise ValueError("one log-kernel value per sample is required")
    lw = ensemble.log_weights + lk
    if not np.any(np.isfinite(lw)):
        raise TotalDegeneracy("every sample has zero surrogate likelihood")
    lw = lw - logsumexp(lw)
    return WeightedEnsemble(ensemble.names, ensemble.samples, lw,
                            ensemble.histories, ensemble.tracks)


def ess(ensemble):
    """Effective sample size ``1 / sum w^2``."""
    lw = ensemble.log_weights - logsumexp(ensemble.log_weights)
    return float(np.exp(-logsumexp(2.0 * lw)))


def resample(ensemble, rng):
    """Systematic resampling; histories and simulation states travel with samples."""
    N = len(ensemble)
    w = np.exp(ensemble.log_weights - logsumexp(ensemble.log_weights))
    cum = np.cumsum(w)
    cum[-1] = 1.0
    positions = (rng.random() + np.arange(N)) / N
    idx = np.minimum(np.searchsorted(cum, positions, side="right"), N - 1)
    histories, tracks = [], None if ensemble.tracks is None else []
    used = set()
    for j in idx:
        first = j not in used
        used.add(j)
        h = ensemble.histories[j]
        histories.append(h if first else copy.deepcopy(h))
        if tracks is not None:
            tr = ensemble.tracks[j]
            tracks.append(tr if first or tr is None else tr.copy())
    return WeightedEnsemble(ensemble.names, ensemble.samples[idx].copy(),
                            np.full(N, -math.log(N)), histories, tracks)


# --------------------------------------------------------- model plumbing

class _Evaluator:
    """Simulates samples and turns frames into per-step distances or log-likelihoods."""

    def __init__(self, model, observations, distance=None, exact_loglik=None):
        if model is None and exact_loglik is None:
            raise ValueError("either a forward model or exact_loglik is required")
        self.model = model
        self.obs = observations
        self.distance = distance or wasserstein_distance
        self.exact_loglik = exact_loglik

    @property
    def exact(self):
        return self.exact_loglik is not None

    def start(self, theta):
        return _Track(None if self.exact else self.model.start(theta))

    def next_frame(self, track):
        """Advance ``track`` one frame; return a degeneracy reason or None."""
        try:
            pts, ids, time = track.run.advance()
        except WDSMCError as exc:
            return f"simulation: {exc}"
        if len(pts) == 0:
            return "empty frame"
        if track.points is None:
            traj = Trajectory([pts], [time], [ids])
        else:
            traj = Trajectory([track.points, pts], [track.time, time], [track.ids, ids])
        res = validate_trajectory(traj, self.model.speed_cap, self.model.bounds)
        if not res.ok:
            return res.reason
        track.points, track.ids, track.time = pts, ids, time
        return None

    def step_distance(self, track, t):
        return float(self.distance(DiscreteDistribution(track.points), self.obs.observations[t - 1]))

    def exact_term(self, theta, t):
        return float(self.exact_loglik(theta, t))


def init_ensemble(prior, N, seed, model=None, *, evaluator=None):
    """Draw ``N`` prior samples with uniform weights.

    With a model, every draw is simulated for one frame and redrawn (up to 100
    times) while that frame is degenerate.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    samples = np.empty((N, prior.dim))
    tracks = []
    for j in range(N):
        rng = _stream(seed, _INIT, 0, j)
        for attempt in range(MAX_PRIOR_REDRAWS):
            theta = prior.sample(rng)
            if evaluator is None and model is None:
                track = None
                break
            if evaluator is not None and evaluator.exact:
                track = _Track(None)
                break
            run = (evaluator.model if evaluator is not None else model).start(
                dict(zip(prior.names, theta)))
            track = _Track(run)
            ev = evaluator or _Evaluator(model, None)
            if ev.next_frame(track) is None:
                break
        else:
            raise PriorExhausted(f"slot {j}: {MAX_PRIOR_REDRAWS} prior draws were all degenerate")
        samples[j] = theta
        tracks.append(track)
    histories = [DistanceHistory() for _ in range(N)]
    has_tracks = any(tr is not None for tr in tracks)
    return WeightedEnsemble(tuple(prior.names), samples, np.full(N, -math.log(N)),
                            histories, tracks if has_tracks else None)


@dataclass
class _Candidate:
    theta: np.ndarray
    history: DistanceHistory
    track: _Track = None
    skipped: bool = False   # outside the prior: never simulated


def _simulate_candidate(theta, prior, evaluator, t):
    history = DistanceHistory()
    if not prior.contains(theta):
        history.mark_degenerate("outside prior")
        return _Candidate(theta, history, None, skipped=True)
    names = prior.names
    theta_d = dict(zip(names, (float(v) for v in theta)))
    if evaluator.exact:
        for i in range(1, t + 1):
            history.append(np.nan, evaluator.exact_term(theta_d, i))
        return _Candidate(theta, history)
    track = evaluator.start(theta_d)
    for i in range(1, t + 1):
        reason = evaluator.next_frame(track)
        if reason is not None:
            history.mark_degenerate(reason)
            return _Candidate(theta, history, None)
        history.distances.append(evaluator.step_distance(track, i))
    return _Candidate(theta, history, track)


def _finalize_history(history, schedule, prior_t):
    """Fill log terms of a WD history once the step bandwidth is known."""
    if history.degenerate:
        return
    D = np.asarray(history.distances[:prior_t])
    terms = log_kernel(D, schedule.as_array()[:prior_t])
    history.log_terms = [float(v) for v in np.atleast_1d(terms)]
    history.cumulative = float(np.sum(terms))


def mcmc_move(ensemble, observations, model, schedule, cfg, rng, *, prior, t,
              candidates=None, evaluator=None, accept_seed=None):
    """One Metropolis-Hastings move per sample against the step-``t`` surrogate.

    ``candidates`` may carry pre-simulated proposals (the driver needs their
    distances to set the bandwidth); otherwise they are proposed here.
    Returns ``(ensemble, accepted_mask)``.
    """
    evaluator = evaluator or _Evaluator(model, observations)
    exact = evaluator.exact
    N = len(ensemble)
    if candidates is None:
        candidates = []
        for j in range(N):
            theta = propose(ensemble.samples[j], cfg, rng)
            cand = _simulate_candidate(theta, prior, evaluator, t)
            if not exact:
                _finalize_history(cand.history, schedule, t)
            candidates.append(cand)

    samples = ensemble.samples.copy()
    histories = list(ensemble.histories)
    tracks = None if ensemble.tracks is None else list(ensemble.tracks)
    accepted = np.zeros(N, dtype=bool)
    for j in range(N):
        cand = candidates[j]
        cur_target = cumulative_log_target(histories[j], prior, samples[j], schedule, t, exact=exact)
        if cand.skipped or cand.history.degenerate:
            cand_target = -np.inf
        else:
            cand_target = cumulative_log_target(cand.history, prior, cand.theta, schedule, t,
                                                exact=exact)
        a = acceptance_probability(cand_target, cur_target)
        u = (_stream(accept_seed, _ACCEPT, t, j).random() if accept_seed is not None
             else rng.random())
        if u < a:
            accepted[j] = True
            samples[j] = cand.theta
            histories[j] = cand.history
            if tracks is not None:
                tracks[j] = cand.track
    return WeightedEnsemble(ensemble.names, samples, ensemble.log_weights, histories,
                            tracks), accepted


# -------------------------------------------------------------- the driver

def _reweight(ens, t):
    step_terms = np.array([h.log_terms[t - 1] if not h.degenerate else -np.inf
                           for h in ens.histories])
    try:
        return update_weights(ens, step_terms)
    except TotalDegeneracy as exc:
        raise TotalDegeneracy(f"step {t}: {exc}") from None


def run(config, observations, model=None, *, distance=None, exact_loglik=None,
        on_step=None, snapshots=False, horizon=None):
    """Run the sampler over ``observations`` and return a :class:`PosteriorTrace`.

    Parameters
    ----------
    config : SMCSConfig
    observations : ObservationSeries
    model : ForwardModel, optional
        Required unless ``exact_loglik`` is given.
    distance : callable, optional
        ``distance(simulated, observed)`` between two DiscreteDistributions;
        defaults to :func:`wasserstein_distance`.
    exact_loglik : callable, optional
        ``exact_loglik(theta_dict, t) -> float``.  Replaces the kernel
        surrogate with an exact per-step log-likelihood (no simulation).
    on_step : callable, optional
        Called as ``on_step(trace, record)`` after every step.
    snapshots : bool
        Keep ``(t, weights, samples)`` of every step in ``trace.snapshots``.
    horizon : int, optional
        Number of steps to process; defaults to ``len(observations)``.
    """
    prior = config.prior
    N = config.n_samples
    T = len(observations) if horizon is None else int(horizon)
    if T < 1 or T > len(observations):
        raise ValueError(f"horizon {T} outside 1..{len(observations)}")
    evaluator = _Evaluator(model, observations, distance, exact_loglik)
    exact = evaluator.exact
    seed = config.seed

    ens = init_ensemble(prior, N, seed, evaluator=evaluator)
    trace = PosteriorTrace(tuple(prior.names))
    schedule = trace.schedule

    for t in range(1, T + 1):
        # current samples: extend to step t
        cur_step = np.full(N, np.nan)
        for j in range(N):
            hist = ens.histories[j]
            if hist.degenerate:
                hist.distances.append(np.nan)
                hist.log_terms.append(-np.inf)
                continue
            if exact:
                cur_step[j] = evaluator.exact_term(ens.theta(j), t)
                continue
            track = ens.tracks[j]
            # init already simulated frame 1
            if not (t == 1 and track.points is not None):
                reason = evaluator.next_frame(track)
                if reason is not None:
                    hist.mark_degenerate(reason)
                    hist.distances.append(np.nan)
                    hist.log_terms.append(-np.inf)
                    continue
            cur_step[j] = evaluator.step_distance(track, t)

        # candidates: propose and simulate from scratch to step t
        candidates = []
        for j in range(N):
            theta = propose(ens.samples[j], config.proposal, _stream(seed, _PROPOSE, t, j))
            candidates.append(_simulate_candidate(theta, prior, evaluator, t))

        if exact:
            h_t = float("nan")
            for j in range(N):
                hist = ens.histories[j]
                if not hist.degenerate:
                    hist.append(np.nan, cur_step[j])
        else:
            pool = [cur_step[np.isfinite(cur_step)]]
            pool += [[c.history.distances[t - 1]] for c in candidates
                     if not c.history.degenerate and not c.skipped]
            pool = np.concatenate([np.asarray(p, dtype=float) for p in pool])
            if pool.size == 0:
                raise TotalDegeneracy(f"step {t}: every current and candidate simulation is degenerate")
            h_t = adaptive_bandwidth(pool)
            schedule.append(h_t)
            for j in range(N):
                hist = ens.histories[j]
                if not hist.degenerate:
                    hist.append(cur_step[j], log_kernel(cur_step[j], h_t))
            for c in candidates:
                _finalize_history(c.history, schedule, t)

        if config.reweight == "pre_move":
            ens = _reweight(ens, t)
        ens, accepted = mcmc_move(ens, observations, model, schedule, config.proposal, None,
                                  prior=prior, t=t, candidates=candidates,
                                  evaluator=evaluator, accept_seed=seed)
        if config.reweight == "post_move":
            ens = _reweight(ens, t)
        ess_t = ess(ens)
        rec_mean, rec_std = ens.mean(), ens.std()
        if snapshots:
            trace.snapshots.append((t, ens.weights.copy(), ens.samples.copy()))
        resampled = ess_t < config.ess_threshold
        if resampled:
            ens = resample(ens, _stream(seed, _RESAMPLE, t))
        record = StepRecord(t, rec_mean, rec_std, ess_t, h_t, float(accepted.mean()), resampled)
        trace.records.append(record)
        trace.ensemble = ens
        if on_step is not None:
            on_step(trace, record)
    return trace
