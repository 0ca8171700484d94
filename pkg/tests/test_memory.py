import math

import numpy as np
import pytest

from mzlab import memory, reduction
from mzlab.memory import MemoryKernel
from mzlab.sampling import EnsembleStats, Partition, hald_conditional_states, sample_hald_canonical

PART2 = Partition(2, 4)


@pytest.fixture(scope="module")
def kernel(hald):
    s = 0.01 * np.arange(1001)
    return memory.kernel_short_memory(hald, 1, s, 10_000, seed=0)


def test_noise_initial_examples(hald):
    assert memory.noise_initial(hald, PART2, 2, np.array([1.0, 0.0, 1.0, 0.0])) == pytest.approx(-0.5)
    x1 = 1.3
    x = np.array([x1, 0.4, 1 / math.sqrt(1 + x1 ** 2), -0.2])
    assert abs(memory.noise_initial(hald, PART2, 2, x)) < 1e-14
    assert memory.noise_initial(hald, PART2, 1, x) == 0.0


@pytest.mark.parametrize("xhat", [(0, 0), (1, 0), (2, 1), (-1, 3), (0.5, -0.5), (3, 0), (-2, -2), (0.1, 1)])
def test_noise_is_orthogonal_to_resolved(hald, xhat):
    states = hald_conditional_states(np.array(xhat, float), 20_000, seed=7)
    vals = memory.noise_initial(hald, PART2, 2, states.T)
    assert EnsembleStats.from_values(vals).within(0.0)


def test_tmodel_consistency(hald):
    rng = np.random.default_rng(0)
    for xhat in rng.uniform(-2, 2, size=(8, 2)):
        integrand = memory.tmodel_memory_integrand(hald, 2, xhat)
        for t in (0.5, 2.0):
            assert abs(t * integrand - reduction.hald_tmodel_damping(xhat, t)) < 1e-10


def test_kernel_statics(kernel):
    assert abs(kernel.values[0] - 1.0) <= 3 * kernel.std_errs[0]
    assert abs(kernel.drift) < 0.05
    c1, err = memory.kernel_linear_coefficient(kernel, 0.2)
    assert abs(c1) < 3 * err


def test_kernel_independent_seed_agrees(hald, kernel):
    s = kernel.s_grid[:201]
    other = memory.kernel_short_memory(hald, 1, s, 10_000, seed=1)
    comb = np.sqrt(kernel.std_errs[:201] ** 2 + other.std_errs ** 2)
    assert np.all(np.abs(kernel.values[:201] - other.values) <= 3 * comb + 1e-12)


def test_kernel_grid_errors(hald):
    with pytest.raises(memory.GridError):
        memory.kernel_short_memory(hald, 1, [0.0, 0.1, 0.3], 100)
    with pytest.raises(memory.GridError):
        MemoryKernel(np.array([0.0, 0.1, 0.3]), np.zeros(3))


def test_autocorrelation_bounds(hald):
    c = memory.autocorrelation_measure(hald, 1, 5000, dt=0.01, t_end=5.0, seed=2)
    assert c.values[0] == 1.0
    assert np.all(np.abs(c.values) <= 1 + 3 * c.std_errs + 1e-12)


def test_volterra_zero_kernel():
    k = MemoryKernel.constant(0.0, 0.01, 501)
    u = memory.volterra_solve(k, 2.5, t_end=5.0)
    assert np.all(u == 2.5)


def test_volterra_constant_kernel_is_cosine():
    errs = []
    for dt in (0.02, 0.01):
        k = MemoryKernel.constant(1.0, dt, int(round(10 / dt)) + 1)
        u = memory.volterra_solve(k, 1.0, t_end=10.0)
        t = dt * np.arange(u.size)
        errs.append(np.max(np.abs(u - np.cos(t))))
    assert errs[0] < 1e-3
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_volterra_delta_kernel_is_exponential():
    errs = []
    for dt in (0.01, 0.005):
        n = int(round(5 / dt)) + 1
        k = MemoryKernel.delta(2.0, dt, n)
        u = memory.volterra_solve(k, 1.0, t_end=5.0)
        errs.append(np.max(np.abs(u - np.exp(-dt * np.arange(n)))))
    assert errs[0] < 0.01 and errs[1] < errs[0]


def test_volterra_coverage():
    with pytest.raises(memory.CoverageError):
        memory.volterra_solve(MemoryKernel.constant(1.0, 0.01, 101), 1.0, t_end=2.0)


def test_white_noise_zero_amplitude():
    avg = reduction.hald_averaged_model()
    wn = memory.white_noise_model([0.0, 0.0], avg)
    for x in ([1.0, 0.0], [0.3, -2.0]):
        assert np.array_equal(wn.rhs(np.array(x), 0.0), avg.rhs(np.array(x)))


def test_white_noise_scalar_decay():
    zero = reduction.ReducedModel("Averaged", 1, lambda x, t=0.0: np.zeros_like(np.asarray(x, float)))
    wn = memory.white_noise_model([math.sqrt(2.0)], zero)
    traj = wn.integrate([1.0], 0.01, 3.0)
    assert np.max(np.abs(traj.states[:, 0] - np.exp(-traj.times))) < 1e-6
    # the sample-path mean follows the same law
    t, mean, err = memory.white_noise_paths(wn, [1.0], 0.01, 1.0, 20_000, seed=0)
    assert np.all(np.abs(mean[:, 0] - np.exp(-t)) <= 4 * err[:, 0] + 0.01)


def test_white_noise_domain():
    avg = reduction.hald_averaged_model()
    with pytest.raises(memory.DomainError):
        memory.white_noise_model([1j, 0.0], avg)


@pytest.mark.parametrize("a, b", [(1.0, 1.0), (2.0, 3.0)])
def test_gaussian_fit_synthetic(a, b):
    k = MemoryKernel.from_function(lambda s: a * np.exp(-b * s * s), 1e-3, 2001)
    fit = memory.gaussian_kernel_fit(k)
    assert abs(fit.a - a) < 1e-3 and abs(fit.b - b) < 1e-3


def test_gaussian_fit_rejects_growth():
    k = MemoryKernel.from_function(lambda s: np.exp(s * s), 1e-3, 100)
    with pytest.raises(memory.FitError):
        memory.gaussian_kernel_fit(k)


def test_gaussian_fit_hald(hald):
    k = memory.kernel_short_memory(hald, 1, 1e-3 * np.arange(201), 10_000, seed=0)
    fit = memory.gaussian_kernel_fit(k)
    x = sample_hald_canonical(1_000_000, seed=5)
    oracle = np.mean(x[:, 0] ** 2 * (1 + x[:, 2] ** 2) ** 2) / 2
    assert abs(fit.a - 1.0) < 3 * k.std_errs[0]
    assert abs(fit.b - oracle) < 0.15 * oracle


def test_kernel_csv(tmp_path, kernel):
    from mzlab.csvio import read_csv

    kernel.to_csv(tmp_path / "k.csv")
    h, rows = read_csv(tmp_path / "k.csv")
    assert h == ["s", "K", "stderr"] and len(rows) == kernel.s_grid.size


def test_fd_first_kind(hald, kernel):
    auto = memory.autocorrelation_measure(hald, 1, 10_000, dt=0.01, t_end=10.0, seed=1)
    cmp = memory.fd_compare(kernel, auto)
    assert cmp.volterra[0] == 1.0
    assert cmp.sup_gap < 0.15
