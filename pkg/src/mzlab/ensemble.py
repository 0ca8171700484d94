"""Brute-force conditional mean trajectories and comparison with reduced models.

The truth E[phi_hat(t) | xhat] is obtained by drawing the unresolved initial
data from the conditioned canonical density, integrating the full system for
every replica, and averaging the resolved components.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import ode
from .csvio import write_csv
from .sampling import hald_conditional_states


class EnsembleBlowupError(RuntimeError):
    pass


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class MeanTrajectory:
    times: np.ndarray
    means: np.ndarray
    std_errs: np.ndarray
    n_replicas: int
    n_excluded: int = 0

    def component(self, i):
        return self.means[:, i]

    def to_csv(self, path):
        m = self.means.shape[1]
        header = ["t"]
        for i in range(m):
            header += [f"mean_{i + 1}", f"stderr_{i + 1}"]
        rows = []
        for k, t in enumerate(self.times):
            row = [t]
            for i in range(m):
                row += [self.means[k, i], self.std_errs[k, i]]
            rows.append(row)
        return write_csv(path, header, rows)


def envelope(times, values, t_lo, t_hi):
    """max |value| over the window t_lo <= t <= t_hi."""
    times = np.asarray(times)
    mask = (times >= t_lo - 1e-12) & (times <= t_hi + 1e-12)
    if not mask.any():
        raise ValueError(f"no grid points in [{t_lo}, {t_hi}]")
    return float(np.max(np.abs(np.asarray(values)[mask])))


def envelope_ratio(times, values, late=(30.0, 50.0), early=(0.0, 5.0)):
    return envelope(times, values, *late) / envelope(times, values, *early)


def _run_chunk(rhs, x, m, n_steps, dt, stride):
    """Integrate one block of replicas; returns per-record mean, M2 and a finite mask."""
    n_rec = n_steps // stride + 1
    means = np.empty((n_rec, m))
    m2 = np.empty((n_rec, m))
    alive = np.ones(x.shape[1], dtype=bool)
    f = lambda t, y: rhs(y)  # noqa: E731
    for k in range(n_steps + 1):
        if k % stride == 0:
            r = x[:m, alive]
            mu = r.mean(axis=1)
            means[k // stride] = mu
            m2[k // stride] = ((r - mu[:, None]) ** 2).sum(axis=1)
        if k == n_steps:
            break
        x = ode.rk4_step(f, k * dt, x, dt)
        bad = ~np.all(np.isfinite(x), axis=0)
        if bad.any():
            return None, None, alive & ~bad
    return means, m2, alive


def ensemble_mean_trajectory(system, partition, xhat, n_replicas=10_000, dt=1e-3, t_end=50.0,
                             seed=0, sampler=hald_conditional_states, record_every=1,
                             chunk_size=None, n_workers=1):
    """Average of the resolved components over replicas with conditioned initial data.

    Replicas are split into contiguous chunks of ``chunk_size``; chunk
    statistics are merged in chunk order, so the result depends only on the
    seed and the chunking, not on ``n_workers``.  Replicas whose state blows up
    are excluded; more than 1% exclusions is an error.
    """
    if n_replicas < 2:
        raise ValueError("n_replicas must be at least 2")
    n_steps = ode.step_count(dt, t_end)
    if n_steps % record_every:
        raise ValueError("record_every must divide the number of steps")
    xhat = np.atleast_1d(np.asarray(xhat, dtype=float))
    m = partition.m
    x0 = sampler(xhat, n_replicas, seed).T.copy()
    chunk_size = chunk_size or n_replicas
    starts = list(range(0, n_replicas, chunk_size))
    keep = np.ones(n_replicas, dtype=bool)

    def work(start):
        block = x0[:, start:start + chunk_size]
        sel = keep[start:start + chunk_size]
        return _run_chunk(system.rhs, block[:, sel], m, n_steps, dt, record_every), sel

    while True:
        if n_workers > 1:
            with ThreadPoolExecutor(n_workers) as pool:
                results = list(pool.map(work, starts))
        else:
            results = [work(s) for s in starts]
        failed = False
        for start, ((mu, _, alive), sel) in zip(starts, results):
            if mu is None:
                idx = np.flatnonzero(sel)
                keep[start + idx[~alive]] = False
                failed = True
        n_excluded = int((~keep).sum())
        if n_excluded > 0.01 * n_replicas:
            raise EnsembleBlowupError(f"{n_excluded} of {n_replicas} replicas blew up")
        if not failed:
            break

    # merge chunk statistics in chunk order (Chan et al. pairwise update)
    count, mean, m2 = 0, None, None
    for (mu, m2_c, _), sel in results:
        n_c = int(sel.sum())
        if mean is None:
            count, mean, m2 = n_c, mu.copy(), m2_c.copy()
            continue
        delta = mu - mean
        total = count + n_c
        mean = mean + delta * (n_c / total)
        m2 = m2 + m2_c + delta ** 2 * (count * n_c / total)
        count = total
    std = np.sqrt(m2 / (count - 1) / count)
    mean[0] = xhat[:m]
    std[0] = 0.0
    times = dt * record_every * np.arange(mean.shape[0])
    return MeanTrajectory(times, mean, std, count, n_excluded)


@dataclass
class ModelComparison:
    name: str
    trajectory: ode.Trajectory
    abs_err: np.ndarray
    early_sup: float
    late_sup: float
    l2: float
    envelope_ratio: float = field(default=float("nan"))


@dataclass
class ComparisonTable:
    times: np.ndarray
    rows: list

    def by_name(self, name):
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_csv(self, path):
        m = self.rows[0].abs_err.shape[1]
        header = ["t", "model"] + [f"abs_err_{i + 1}" for i in range(m)]
        out = []
        for r in self.rows:
            for k, t in enumerate(self.times):
                out.append([t, r.name, *r.abs_err[k]])
        return write_csv(path, header, out)

    def models_csv(self, path):
        m = self.rows[0].trajectory.states.shape[1]
        header = ["t", "model"] + [f"phi_{i + 1}" for i in range(m)]
        out = []
        for r in self.rows:
            for t, s in zip(r.trajectory.times, r.trajectory.states):
                out.append([t, r.name, *s])
        return write_csv(path, header, out)


def compare_reductions(truth, models, x0, dt, names=None, early=2.0, late=30.0):
    """Per-model deviations from the ensemble truth on the truth's time grid.

    ``early_sup`` is the sup error over t <= ``early`` and ``late_sup`` over
    t >= ``late``; ``l2`` is the root-mean-square error over the whole grid.
    All are taken over every resolved component.
    """
    names = names or [mdl.kind for mdl in models]
    t_end = float(truth.times[-1])
    stride = int(round((truth.times[1] - truth.times[0]) / dt)) if len(truth.times) > 1 else 1
    if len(truth.times) > 1 and abs(stride * dt - (truth.times[1] - truth.times[0])) > 1e-9:
        raise AlignmentError("truth grid spacing is not a multiple of dt")
    rows = []
    for name, mdl in zip(names, models):
        traj = mdl.integrate(x0, dt, t_end)
        times, states = traj.times[::stride], traj.states[::stride]
        if len(times) != len(truth.times) or not np.allclose(times, truth.times, atol=1e-9):
            raise AlignmentError(f"model {name!r} grid does not match the truth grid")
        err = np.abs(states - truth.means)
        early_mask = truth.times <= early + 1e-12
        late_mask = truth.times >= late - 1e-12
        row = ModelComparison(
            name=name,
            trajectory=ode.Trajectory(times, states),
            abs_err=err,
            early_sup=float(err[early_mask].max()),
            late_sup=float(err[late_mask].max()) if late_mask.any() else float("nan"),
            l2=float(np.sqrt(np.mean(err ** 2))),
        )
        if t_end >= 50.0 - 1e-9:
            row.envelope_ratio = envelope_ratio(times, states[:, 0])
        rows.append(row)
    return ComparisonTable(truth.times, rows)
