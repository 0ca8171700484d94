"""Canonical and conditional sampling, and Monte-Carlo conditional expectations.

Sample arrays are returned with shape ``(n_samples, n)``.  Observables ``g``
are evaluated on the transposed, component-first array ``(n, n_samples)`` so
that the same vectorised functions used as ODE right-hand sides apply.

Parallel use: give worker ``k`` the seed ``base_seed + k``.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .csvio import write_csv

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CanonicalDensity:
    """Unnormalised weight exp(-H/T); the partition function is never formed."""

    hamiltonian: Callable[[np.ndarray], np.ndarray]
    n: int
    temperature: float = 1.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")

    @classmethod
    def from_system(cls, system, temperature=1.0):
        if system.hamiltonian is None:
            raise ValueError("canonical density needs a Hamiltonian system")
        return cls(system.hamiltonian, system.n, temperature)

    def log_weight(self, x):
        return -self.hamiltonian(x) / self.temperature


@dataclass(frozen=True)
class Partition:
    """The first ``m`` of ``n`` coordinates are resolved."""

    m: int
    n: int

    def __post_init__(self):
        if not 0 <= self.m <= self.n:
            raise ValueError(f"need 0 <= m <= n, got m={self.m}, n={self.n}")

    @property
    def resolved(self):
        return slice(0, self.m)

    @property
    def unresolved(self):
        return slice(self.m, self.n)


@dataclass(frozen=True)
class EnsembleStats:
    estimate: float
    std_err: float
    n_samples: int

    @classmethod
    def from_values(cls, values):
        values = np.asarray(values, dtype=float)
        n = values.size
        err = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
        return cls(float(np.mean(values)), err, n)

    @classmethod
    def from_batches(cls, values, n_batches):
        """Batch-means error for correlated streams (batches are contiguous)."""
        values = np.asarray(values, dtype=float)
        means = np.array([b.mean() for b in np.array_split(values, n_batches)])
        err = float(np.std(means, ddof=1) / np.sqrt(len(means)))
        return cls(float(np.mean(values)), err, values.size)

    def within(self, target, n_sigma=3.0):
        return abs(self.estimate - target) <= n_sigma * self.std_err


@dataclass
class MetropolisResult:
    samples: np.ndarray
    acceptance_rate: float
    n_chains: int
    warning: Optional[str] = None

    def estimate(self, g):
        """Mean of ``g`` with an error bar from the spread of per-chain means."""
        values = np.asarray(g(self.samples.T), dtype=float)
        return EnsembleStats.from_batches(values, self.n_chains)


def sample_canonical_metropolis(density, n_samples, burn_in=1000, proposal_scale=0.5,
                                seed=0, thinning=10, n_chains=64):
    """Random-walk Metropolis targeting exp(-H/T).

    ``n_chains`` independent chains advance in lock step; each step proposes a
    symmetric Gaussian move of the whole state.  After ``burn_in`` steps every
    ``thinning``-th state is kept.  Samples are ordered chain by chain.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    if not proposal_scale > 0:
        raise ValueError("proposal_scale must be positive")
    rng = np.random.default_rng(seed)
    n_chains = max(1, min(n_chains, n_samples))
    per_chain = -(-n_samples // n_chains)
    x = np.zeros((density.n, n_chains))
    logw = density.log_weight(x)
    kept = np.empty((per_chain, n_chains, density.n))
    accepted = 0
    proposed = 0
    total = burn_in + per_chain * thinning
    for step in range(total):
        y = x + proposal_scale * rng.standard_normal(x.shape)
        logw_y = density.log_weight(y)
        accept = np.log(rng.random(n_chains)) < logw_y - logw
        x = np.where(accept, y, x)
        logw = np.where(accept, logw_y, logw)
        if step >= burn_in:
            accepted += int(accept.sum())
            proposed += n_chains
            k = step - burn_in
            if (k + 1) % thinning == 0:
                kept[k // thinning] = x.T
    rate = accepted / proposed if proposed else 0.0
    warning = None
    if not 0.05 <= rate <= 0.95:
        warning = f"acceptance rate {rate:.3f} outside [0.05, 0.95]"
        log.warning(warning)
    samples = kept.transpose(1, 0, 2).reshape(-1, density.n)[:n_samples]
    return MetropolisResult(samples, rate, n_chains, warning)


def _hald_x1_marginal(n, rng):
    # density of x1 under exp(-H) is proportional to exp(-x1^2/2) / sqrt(1 + x1^2)
    out = np.empty(0)
    while out.size < n:
        need = n - out.size
        trial = rng.standard_normal(2 * need + 16)
        keep = rng.random(trial.size) < 1.0 / np.sqrt(1.0 + trial ** 2)
        out = np.concatenate([out, trial[keep]])
    return out[:n]


def sample_hald_canonical(n_samples, seed=0):
    """Exact draws from the Hald canonical density at T=1."""
    rng = np.random.default_rng(seed)
    x1 = _hald_x1_marginal(n_samples, rng)
    x2 = rng.standard_normal(n_samples)
    x3 = rng.standard_normal(n_samples) / np.sqrt(1.0 + x1 ** 2)
    x4 = rng.standard_normal(n_samples)
    return np.column_stack([x1, x2, x3, x4])


def sample_hald_conditional(x1, x2, n_samples, seed=0):
    """Exact draws of (x3, x4) given (x1, x2) under the Hald canonical density.

    x3 is centred Gaussian with variance 1/(1+x1^2) and x4 is an independent
    unit Gaussian; x2 does not enter.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    x3 = rng.standard_normal(n_samples) / np.sqrt(1.0 + x1 ** 2)
    x4 = rng.standard_normal(n_samples)
    return np.column_stack([x3, x4])


def hald_conditional_states(xhat, n_samples, seed=0):
    """Full Hald states with the first ``len(xhat)`` coordinates pinned to ``xhat``.

    The remaining coordinates are drawn exactly from the canonical density
    conditioned on ``xhat``.
    """
    xhat = np.atleast_1d(np.asarray(xhat, dtype=float))
    m = xhat.size
    if m == 0:
        return sample_hald_canonical(n_samples, seed)
    if m > 4:
        raise ValueError("Hald states have four components")
    rng = np.random.default_rng(seed)
    out = np.empty((n_samples, 4))
    out[:, :m] = xhat
    x1 = xhat[0]
    if m <= 1:
        out[:, 1] = rng.standard_normal(n_samples)
    if m <= 2:
        out[:, 2] = rng.standard_normal(n_samples) / np.sqrt(1.0 + x1 ** 2)
    if m <= 3:
        out[:, 3] = rng.standard_normal(n_samples)
    return out


def conditional_expectation_mc(g, xhat, partition, n_samples, seed=0,
                               sampler=hald_conditional_states):
    """Monte-Carlo estimate of E[g | resolved coordinates = xhat]."""
    xhat = np.atleast_1d(np.asarray(xhat, dtype=float))
    if xhat.size != partition.m:
        raise ValueError(f"xhat has {xhat.size} entries, partition resolves {partition.m}")
    states = sampler(xhat, n_samples, seed)
    values = np.asarray(g(states.T), dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("g is not finite on the conditional samples")
    return EnsembleStats.from_values(values)


def write_samples_csv(path, samples):
    samples = np.atleast_2d(samples)
    header = [f"x{i + 1}" for i in range(samples.shape[1])]
    return write_csv(path, header, samples.tolist())
