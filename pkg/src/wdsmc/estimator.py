"""scikit-learn style wrapper around :func:`wdsmc.smcs.run`."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .models.base import ObservationSeries
from .ot import DiscreteDistribution, wasserstein_distance
from .smcs import PriorBox, ProposalConfig, SMCSConfig, run

__all__ = ["WDSMCSampler"]


class WDSMCSampler(BaseEstimator):
    """Posterior sampler for the parameters of a forward model.

    Parameters
    ----------
    model : ForwardModel
        Simulator evaluated at candidate parameters.  May be None when
        ``exact_loglik`` is given.
    prior : dict
        ``{name: (lower, upper)}`` uniform prior box.
    n_samples : int
    ess_threshold : float, optional
        Resample when the ESS drops below this; defaults to ``n_samples / 2``.
    proposal_std : dict, optional
        Random-walk std per parameter; defaults to 5% of each prior range.
    seed : int
    reweight : {"pre_move", "post_move"}
    exact_loglik : callable, optional
        ``exact_loglik(theta_dict, t)``; bypasses simulation and the kernel surrogate.

    Attributes
    ----------
    trace_ : PosteriorTrace
    posterior_mean_, posterior_std_ : dict
    bandwidths_ : ndarray
    """

    def __init__(self, model=None, prior=None, n_samples=500, ess_threshold=None,
                 proposal_std=None, seed=0, reweight="pre_move", exact_loglik=None):
        self.model = model
        self.prior = prior
        self.n_samples = n_samples
        self.ess_threshold = ess_threshold
        self.proposal_std = proposal_std
        self.seed = seed
        self.reweight = reweight
        self.exact_loglik = exact_loglik

    def _config(self):
        if not self.prior:
            raise ValueError("prior must name at least one parameter")
        prior = self.prior if isinstance(self.prior, PriorBox) else PriorBox.from_dict(self.prior)
        proposal = None
        if self.proposal_std is not None:
            proposal = ProposalConfig([self.proposal_std[n] for n in prior.names])
        return SMCSConfig(prior, self.n_samples, self.ess_threshold, proposal, self.seed,
                          self.reweight)

    def fit(self, X, y=None, **run_kwargs):
        """Run the sampler over the observation series ``X``."""
        if not isinstance(X, ObservationSeries):
            raise TypeError(f"X must be an ObservationSeries, got {type(X).__name__}")
        cfg = self._config()
        self.trace_ = run(cfg, X, self.model, exact_loglik=self.exact_loglik, **run_kwargs)
        self.param_names_ = cfg.prior.names
        self.posterior_mean_ = self.trace_.final_mean()
        self.posterior_std_ = self.trace_.final_std()
        self.bandwidths_ = self.trace_.schedule.as_array()
        return self

    def sample(self):
        """Final weighted ensemble as ``(samples, weights)``."""
        check_is_fitted(self, "trace_")
        ens = self.trace_.ensemble
        return ens.samples.copy(), ens.weights

    def predict(self, horizon):
        """Trajectory simulated at the posterior mean."""
        check_is_fitted(self, "trace_")
        if self.model is None:
            raise ValueError("predict needs a forward model")
        return self.model.simulate(self.posterior_mean_, int(horizon))

    def score(self, X, y=None):
        """Negative mean Wasserstein distance of the posterior-mean fit to ``X``."""
        traj = self.predict(len(X))
        d = [wasserstein_distance(DiscreteDistribution(f), o)
             for f, o in zip(traj.frames, X.observations)]
        return -float(np.mean(d))
