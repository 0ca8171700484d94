"""Decimation renormalization of the one-dimensional Ising chain.

Sampling weights are exp(W) with W = sum_j a_j sum_i s_i s_{i+j}; the
temperature is absorbed into the couplings.  Decimation keeps every second
spin.  In one dimension the decimated nearest-neighbour chain is again a
nearest-neighbour chain with tanh K' = tanh(K)^2, i.e. K' = log(cosh 2K)/2,
which is what the Monte-Carlo pipeline is checked against.

Free chains are used for coupling estimation because there every bond obeys
E[s_i s_{i+1}] = tanh K exactly; periodic chains are used for enumeration.
"""

import itertools
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .csvio import write_csv
from .ode import DimensionError
from .sampling import EnsembleStats


class RangeError(ValueError):
    pass


class SaturationError(ValueError):
    pass


class CorrelationFitError(ValueError):
    pass


class DepthError(ValueError):
    pass


@dataclass(frozen=True)
class SpinChain:
    spins: np.ndarray
    periodic: bool = True

    def __post_init__(self):
        s = np.asarray(self.spins)
        if not np.all((s == 1) | (s == -1)):
            raise ValueError("spins must be +1 or -1")

    @property
    def n(self):
        return len(self.spins)

    @classmethod
    def all_up(cls, n, periodic=True):
        return cls(np.ones(n, dtype=np.int8), periodic)

    @classmethod
    def alternating(cls, n, periodic=True):
        return cls(np.where(np.arange(n) % 2 == 0, 1, -1).astype(np.int8), periodic)


@dataclass(frozen=True)
class CouplingVector:
    couplings: dict = field(default_factory=dict)

    def __post_init__(self):
        for j in self.couplings:
            if int(j) != j or j < 1:
                raise ValueError("separations must be integers >= 1")

    @classmethod
    def nearest(cls, K):
        return cls({1: float(K)})

    @property
    def max_range(self):
        return max(self.couplings, default=0)

    def dense(self):
        """Array a with a[j] the coupling at separation j (a[0] = 0)."""
        a = np.zeros(self.max_range + 1)
        for j, v in self.couplings.items():
            a[j] = v
        return a


@dataclass(frozen=True)
class RgStep:
    k_in: float
    k_out_est: float
    k_out_exact: float
    xi_in: float
    xi_out: float
    n_sites: int = 0
    k_out_local: float = float("nan")


@dataclass(frozen=True)
class McParams:
    n_sites: int = 64
    n_sweeps: int = 100_000
    burn_in: int = 1000
    seed: int = 0
    periodic: bool = False


def exact_decimated_coupling(K):
    return 0.5 * math.log(math.cosh(2.0 * K))


def exact_correlation_length(K):
    return -1.0 / math.log(math.tanh(K))


def _check_range(n, couplings):
    if couplings.max_range >= n:
        raise RangeError(f"separation {couplings.max_range} does not fit a chain of {n} sites")


def _weight_exponent(spins, a, periodic):
    s = np.asarray(spins, dtype=float)
    n = s.size
    total = 0.0
    for j in range(1, a.size):
        if a[j] == 0.0:
            continue
        if periodic:
            total += a[j] * float(np.dot(s, np.roll(s, -j)))
        else:
            total += a[j] * float(np.dot(s[: n - j], s[j:]))
    return total


def chain_weight_exponent(chain, couplings):
    """sum_j a_j sum_i s_i s_{i+j}, wrapping around on periodic chains."""
    _check_range(chain.n, couplings)
    return _weight_exponent(chain.spins, couplings.dense(), chain.periodic)


@numba.njit(cache=True)
def _sweeps(spins, a, periodic, sites, uniforms, record, out):
    """Random-site single-flip sweeps; returns the number of accepted flips.

    Sweep k proposes flips at ``sites[k]`` in turn.  Visiting sites in a fixed
    order is not ergodic: at zero coupling every spin flips every sweep, and at
    strong coupling domain walls all drift the same way and never meet.
    """
    n = spins.size
    r = a.size - 1
    accepted = 0
    for sweep in range(uniforms.shape[0]):
        for p in range(sites.shape[1]):
            i = sites[sweep, p]
            local = 0.0
            for j in range(1, r + 1):
                if a[j] == 0.0:
                    continue
                right = i + j
                left = i - j
                if periodic:
                    local += a[j] * (spins[right % n] + spins[left % n])
                else:
                    if right < n:
                        local += a[j] * spins[right]
                    if left >= 0:
                        local += a[j] * spins[left]
            dw = -2.0 * spins[i] * local
            if dw >= 0.0 or uniforms[sweep, p] < math.exp(dw):
                spins[i] = -spins[i]
                accepted += 1
        if record:
            out[sweep, :] = spins
    return accepted


def metropolis_sweep(chain, couplings, seed=0):
    """One sweep of N single-spin flip proposals at uniformly random sites.

    Returns the updated chain and the number of accepted flips.
    """
    _check_range(chain.n, couplings)
    rng = np.random.default_rng(seed)
    spins = np.array(chain.spins, dtype=np.int8)
    sites = rng.integers(0, chain.n, (1, chain.n))
    u = rng.random((1, chain.n))
    dummy = np.empty((1, chain.n), dtype=np.int8)
    acc = _sweeps(spins, couplings.dense(), chain.periodic, sites, u, False, dummy)
    return SpinChain(spins, chain.periodic), int(acc)


@dataclass
class ChainSamples:
    spins: np.ndarray
    periodic: bool
    acceptance_rate: float

    @property
    def n_sites(self):
        return self.spins.shape[1]

    def __len__(self):
        return self.spins.shape[0]


def sample_chain(n_sites, couplings, n_sweeps, seed=0, periodic=False, burn_in=1000,
                 chunk=10_000, start=None):
    """Record the chain after every sweep following ``burn_in`` sweeps."""
    couplings = couplings if isinstance(couplings, CouplingVector) else CouplingVector.nearest(couplings)
    _check_range(n_sites, couplings)
    rng = np.random.default_rng(seed)
    a = couplings.dense()
    if start is None:
        spins = np.where(rng.random(n_sites) < 0.5, 1, -1).astype(np.int8)
    else:
        spins = np.array(start, dtype=np.int8)
    dummy = np.empty((1, n_sites), dtype=np.int8)
    done = 0
    while done < burn_in:
        m = min(chunk, burn_in - done)
        _sweeps(spins, a, periodic, rng.integers(0, n_sites, (m, n_sites)),
                rng.random((m, n_sites)), False, dummy)
        done += m
    out = np.empty((n_sweeps, n_sites), dtype=np.int8)
    accepted = 0
    done = 0
    while done < n_sweeps:
        m = min(chunk, n_sweeps - done)
        accepted += _sweeps(spins, a, periodic, rng.integers(0, n_sites, (m, n_sites)),
                            rng.random((m, n_sites)), True, out[done:done + m])
        done += m
    return ChainSamples(out, periodic, accepted / (n_sweeps * n_sites))


def _as_samples(samples):
    if isinstance(samples, ChainSamples):
        return samples.spins, samples.periodic
    if isinstance(samples, (list, tuple)) and samples and isinstance(samples[0], SpinChain):
        return np.array([c.spins for c in samples], dtype=np.int8), samples[0].periodic
    return np.asarray(samples, dtype=np.int8), False


def decimate(chain):
    """Keep the even-indexed sites."""
    if isinstance(chain, ChainSamples):
        if chain.n_sites % 2:
            raise DimensionError("decimation needs an even number of sites")
        return ChainSamples(chain.spins[:, ::2].copy(), chain.periodic, chain.acceptance_rate)
    if chain.n % 2:
        raise DimensionError("decimation needs an even number of sites")
    return SpinChain(np.asarray(chain.spins)[::2].copy(), chain.periodic)


def pair_correlation(samples, j, n_batches=50):
    """E[s_i s_{i+j}] averaged over sites, with a batch-means error across samples."""
    spins, periodic = _as_samples(samples)
    s = spins.astype(np.float64)
    n = s.shape[1]
    if periodic:
        per_sample = np.mean(s * np.roll(s, -j, axis=1), axis=1)
    else:
        if j >= n:
            raise RangeError("separation exceeds chain length")
        per_sample = np.mean(s[:, : n - j] * s[:, j:], axis=1)
    return EnsembleStats.from_batches(per_sample, min(n_batches, len(per_sample)))


def estimate_renormalized_coupling(samples, min_samples=1000):
    """Moment matching for the nearest-neighbour coupling: tanh K' = E[s_i s_{i+1}]."""
    spins, _ = _as_samples(samples)
    if spins.shape[0] < min_samples:
        raise ValueError(f"need at least {min_samples} samples")
    m = pair_correlation(samples, 1).estimate
    if not -1.0 < m < 1.0:
        raise SaturationError(f"nearest-neighbour moment {m} is saturated")
    return float(np.arctanh(m))


def correlation_length(samples, n_sigma=3.0, j_max=None):
    """Decay length of E[s_i s_{i+j}] from a least-squares fit of its logarithm.

    Separations are used from j=1 upward while the correlation stays above
    ``n_sigma`` standard errors.  The fit runs through log C(0) = 0 and is
    weighted by the inverse variance of log C(j).
    """
    spins, periodic = _as_samples(samples)
    n = spins.shape[1]
    j_max = j_max or (n // 2 if periodic else n // 2)
    js, logs, w = [], [], []
    for j in range(1, j_max + 1):
        st = pair_correlation(samples, j)
        if st.estimate <= n_sigma * st.std_err:
            break
        js.append(j)
        logs.append(math.log(st.estimate))
        w.append((st.estimate / max(st.std_err, 1e-12)) ** 2)
    if not js:
        raise CorrelationFitError("nearest-neighbour correlation is below the noise floor")
    js, logs, w = np.array(js, float), np.array(logs), np.array(w)
    slope = float(np.sum(w * js * logs) / np.sum(w * js * js))
    if slope >= 0:
        raise CorrelationFitError("correlations do not decay")
    return -1.0 / slope


def enumerate_moments(n_sites, couplings, periodic=True):
    """Exact E[s_i s_{i+j}] for j = 0..n_sites-1 by summing over all 2^n states."""
    couplings = couplings if isinstance(couplings, CouplingVector) else CouplingVector.nearest(couplings)
    a = couplings.dense()
    states = np.array(list(itertools.product((1, -1), repeat=n_sites)), dtype=float)
    logw = np.array([_weight_exponent(s, a, periodic) for s in states])
    w = np.exp(logw - logw.max())
    w /= w.sum()
    out = np.empty(n_sites)
    for j in range(n_sites):
        if periodic:
            per = np.mean(states * np.roll(states, -j, axis=1), axis=1)
        else:
            per = np.mean(states[:, : n_sites - j] * states[:, j:], axis=1)
        out[j] = float(np.dot(w, per))
    return out


def exact_acceptance_rate(n_sites, couplings, periodic=True):
    """Equilibrium mean of min(1, exp(dW)) over sites, by enumeration."""
    couplings = couplings if isinstance(couplings, CouplingVector) else CouplingVector.nearest(couplings)
    a = couplings.dense()
    states = np.array(list(itertools.product((1, -1), repeat=n_sites)), dtype=float)
    logw = np.array([_weight_exponent(s, a, periodic) for s in states])
    w = np.exp(logw - logw.max())
    w /= w.sum()
    acc = np.zeros(len(states))
    for i in range(n_sites):
        flipped = states.copy()
        flipped[:, i] *= -1
        dw = np.array([_weight_exponent(s, a, periodic) for s in flipped]) - logw
        acc += np.minimum(1.0, np.exp(dw))
    return float(np.dot(w, acc / n_sites))


def rg_flow(K0, n_steps, mc_params=McParams()):
    """Repeated sample -> decimate -> estimate, halving the chain at each level.

    Level k samples a chain of ``n_sites / 2^k`` spins at the coupling
    estimated at level k-1 (``K0`` at level 0).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if mc_params.n_sites % (2 ** n_steps) or mc_params.n_sites // 2 ** n_steps < 16:
        raise DepthError(f"{mc_params.n_sites} sites cannot be decimated {n_steps} times "
                         "keeping at least 16 sites")
    steps = []
    k_in = float(K0)
    k_exact = float(K0)
    n = mc_params.n_sites
    for level in range(n_steps):
        samples = sample_chain(n, k_in, mc_params.n_sweeps, seed=mc_params.seed + level,
                               periodic=mc_params.periodic, burn_in=mc_params.burn_in)
        coarse = decimate(samples)
        k_out = estimate_renormalized_coupling(coarse)
        k_exact = exact_decimated_coupling(k_exact)
        steps.append(RgStep(
            k_in=k_in,
            k_out_est=k_out,
            k_out_exact=k_exact,
            xi_in=_xi_or_zero(samples),
            xi_out=_xi_or_zero(coarse),
            n_sites=n,
            k_out_local=exact_decimated_coupling(k_in),
        ))
        k_in = k_out
        n //= 2
    return steps


def _xi_or_zero(samples):
    try:
        return correlation_length(samples)
    except CorrelationFitError:
        return 0.0


def write_rg_csv(path, steps):
    return write_csv(path, ["step", "K_est", "K_exact", "xi_in", "xi_out"],
                     ([i + 1, s.k_out_est, s.k_out_exact, s.xi_in, s.xi_out]
                      for i, s in enumerate(steps)))


def write_samples(path, samples):
    spins, _ = _as_samples(samples)
    with open(path, "w") as fh:
        for row in spins:
            fh.write("".join("+" if v > 0 else "-" for v in row) + "\n")
    return path
