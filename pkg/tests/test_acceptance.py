"""Acceptance criteria 1-9, one test each.

Every test records a one-line verdict; the lines are printed at the end of
the pytest run (see conftest.py) and when this file is executed directly.
Runtime limits are part of each criterion.
"""

import math
import time

import numpy as np

from mzlab import cli, ensemble, kdvb, lattice, memory, ode, reduction, sampling
from mzlab.sampling import CanonicalDensity, Partition

RESULTS = {}


def _record(n, title, checks, elapsed, limit):
    """checks: list of (label, ok, detail)."""
    checks = list(checks)
    if limit is None:
        checks.append(("runtime", True, f"{elapsed:.1f}s"))
    else:
        checks.append(("runtime", elapsed < limit, f"{elapsed:.1f}s < {limit:g}s"))
    ok = all(c[1] for c in checks)
    detail = "; ".join(f"{lbl} {d}{'' if good else ' [FAIL]'}" for lbl, good, d in checks)
    RESULTS[n] = f"criterion {n} {title}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(RESULTS[n])
    assert ok, RESULTS[n]


def test_criterion_1_conditional_moment():
    t0 = time.perf_counter()
    checks = []
    part = Partition(2, 4)
    for xhat in [(0.0, 0.0), (1.0, 0.0), (2.0, 1.0)]:
        st = sampling.conditional_expectation_mc(lambda x: x[2] ** 2, xhat, part, 100_000, seed=0)
        target = 1.0 / (1.0 + xhat[0] ** 2)
        checks.append((f"E[x3^2|{xhat}]", st.within(target),
                       f"{st.estimate:.5f}+-{st.std_err:.5f} vs {target:.5f}"))
    _record(1, "conditional moment", checks, time.perf_counter() - t0, 5)


def test_criterion_2_renormalized_hamiltonian():
    t0 = time.perf_counter()
    dens = CanonicalDensity.from_system(ode.hald_system())
    part = Partition(2, 4)
    a = reduction.renormalized_hamiltonian_mc(dens, part, (1.0, 0.0), 100_000, seed=0)
    b = reduction.renormalized_hamiltonian_mc(dens, part, (0.0, 0.0), 100_000, seed=0)
    target = 0.5 + 0.5 * math.log(2.0)
    diff = a - b
    _record(2, "renormalized Hamiltonian",
            [("H^(1,0)-H^(0,0)", abs(diff - target) < 0.01, f"{diff:.5f} vs {target:.5f} (tol 0.01)")],
            time.perf_counter() - t0, 10)


def test_criterion_3_averaging_regimes():
    t0 = time.perf_counter()
    system = ode.hald_system()
    part = Partition(2, 4)
    dt = 0.01
    truth = ensemble.ensemble_mean_trajectory(system, part, [1.0, 0.0], 10_000, dt=dt, t_end=50.0, seed=0)
    models = [reduction.galerkin_model(system, part), reduction.hald_averaged_model()]
    table = ensemble.compare_reductions(truth, models, [1.0, 0.0], dt, names=["galerkin", "averaged"])
    r_truth = ensemble.envelope_ratio(truth.times, truth.means[:, 0])
    avg, gal = table.by_name("averaged"), table.by_name("galerkin")
    checks = [
        ("truth envelope ratio", r_truth < 0.5, f"{r_truth:.3f} < 0.5"),
        ("averaged envelope ratio", avg.envelope_ratio > 0.8, f"{avg.envelope_ratio:.3f} > 0.8"),
        ("early sup error", avg.early_sup < gal.early_sup,
         f"averaged {avg.early_sup:.3f} < galerkin {gal.early_sup:.3f}"),
    ]
    _record(3, "averaging regimes", checks, time.perf_counter() - t0, 300)


def test_criterion_4_tmodel_lyapunov():
    t0 = time.perf_counter()
    rep = reduction.lyapunov_check(reduction.hald_t_model(), reduction.hald_renormalized_hamiltonian(),
                                   [1.0, 0.0], dt=1e-3, t_end=50.0)
    _record(4, "t-model Lyapunov",
            [("max step increment", rep.non_increasing(1e-6), f"{rep.max_increment:.2e} <= 1e-6")],
            time.perf_counter() - t0, 5)


def test_criterion_5_fluctuation_dissipation():
    t0 = time.perf_counter()
    system = ode.hald_system()
    dt = 0.01
    kernel = memory.kernel_short_memory(system, 1, dt * np.arange(1001), 10_000, seed=0)
    auto = memory.autocorrelation_measure(system, 1, 10_000, dt=dt, t_end=10.0, seed=1)
    gap = memory.fd_compare(kernel, auto).sup_gap
    k0, e0 = kernel.values[0], kernel.std_errs[0]
    checks = [
        ("K(0)", abs(k0 - 1.0) <= 3 * e0, f"{k0:.4f}+-{e0:.4f} vs 1"),
        ("sup gap", gap < 0.15, f"{gap:.3f} < 0.15"),
    ]
    _record(5, "fluctuation-dissipation", checks, time.perf_counter() - t0, 300)


def test_criterion_6_gaussian_sum_rule():
    t0 = time.perf_counter()
    system = ode.hald_system()
    kernel = memory.kernel_short_memory(system, 1, 1e-3 * np.arange(201), 10_000, seed=0)
    fit = memory.gaussian_kernel_fit(kernel)
    x = sampling.sample_hald_canonical(1_000_000, seed=2)
    oracle = sampling.EnsembleStats.from_values(x[:, 0] ** 2 * (1 + x[:, 2] ** 2) ** 2 / 2)
    rel = abs(fit.b - oracle.estimate) / oracle.estimate
    _record(6, "Gaussian sum rule",
            [("b vs oracle", rel < 0.15, f"{fit.b:.4f} vs {oracle.estimate:.4f}, rel {rel:.3f} < 0.15")],
            time.perf_counter() - t0, 120)


def test_criterion_7_kdvb_similarity():
    t0 = time.perf_counter()
    ell = 6.0
    fits = []
    for R in (2, 4, 8, 16, 32):
        prof = kdvb.steady_profile(R, kdvb.default_span(R), 0.01)
        fits.append(kdvb.fit_eps_eff(kdvb.window_average(prof, ell), ell))
    eps = [f.eps_eff for f in fits]
    sim = kdvb.similarity_exponent(fits)
    xi = np.arange(-40, 40.0001, 0.01)
    self_fit = kdvb.fit_eps_eff(kdvb.burgers_profile(0.2, 0.0, xi), 0.0)
    checks = [
        ("eps_eff increasing", all(b > a for a, b in zip(eps, eps[1:])),
         "[" + ", ".join(f"{e:.4f}" for e in eps) + "]"),
        ("nu", 0.5 <= sim.nu <= 1.0, f"{sim.nu:.3f} in [0.5, 1.0] (reference value 0.75)"),
        ("self-fit", abs(self_fit.eps_eff - 0.2) < 1e-4, f"|{self_fit.eps_eff:.7f} - 0.2| < 1e-4"),
    ]
    _record(7, "KdVB similarity", checks, time.perf_counter() - t0, 120)


def test_criterion_8_ising_decimation():
    t0 = time.perf_counter()
    checks = []
    for i, K in enumerate((0.3, 0.5, 1.0)):
        s = lattice.sample_chain(64, K, 100_000, seed=10 + i)
        est = lattice.estimate_renormalized_coupling(lattice.decimate(s))
        exact = lattice.exact_decimated_coupling(K)
        checks.append((f"K'({K})", abs(est - exact) < 0.05, f"{est:.4f} vs {exact:.4f}"))
        if K == 0.5:
            xi = lattice.correlation_length(s)
            checks.append(("xi(0.5)", abs(xi - 1.2955) < 0.2 * 1.2955, f"{xi:.4f} vs 1.2955 +-20%"))
    steps = lattice.rg_flow(0.5, 2, lattice.McParams())
    flow_ok = all(abs(s.k_out_est - s.k_out_exact) < 0.05 for s in steps)
    checks.append(("RG flow", flow_ok,
                   ", ".join(f"{s.k_out_est:.4f} vs {s.k_out_exact:.4f}" for s in steps)))
    ring = lattice.sample_chain(8, 0.5, 100_000, seed=20, periodic=True)
    exact = lattice.enumerate_moments(8, 0.5)
    stats = [lattice.pair_correlation(ring, j) for j in range(1, 5)]
    checks.append(("N=8 moments", all(st.within(exact[j + 1]) for j, st in enumerate(stats)),
                   "max |z| {:.2f} <= 3".format(max(abs(st.estimate - exact[j + 1]) / st.std_err
                                                    for j, st in enumerate(stats)))))
    _record(8, "Ising decimation", checks, time.perf_counter() - t0, 180)


EXPERIMENTS = ["hald-compare", "tmodel", "fd", "kdvb", "rg"]


def test_criterion_9_determinism(tmp_path):
    t0 = time.perf_counter()
    checks = []
    for name in EXPERIMENTS:
        dirs = [tmp_path / f"{name}-{k}" for k in (1, 2)]
        codes = [cli.main([name, "--seed", "3", "--out", str(d)]) for d in dirs]
        files = sorted(p.name for p in dirs[0].iterdir())
        same = codes == [0, 0] and files == sorted(p.name for p in dirs[1].iterdir()) and all(
            (dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes() for f in files)
        checks.append((name, same, f"{len(files)} files identical" if same else f"exit {codes}"))
    _record(9, "determinism", checks, time.perf_counter() - t0, None)


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    failed = 0
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_criterion_")):
        try:
            if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
