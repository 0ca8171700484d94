"""Command-line front end: one experiment per invocation, CSV output only.

Parameters come from built-in defaults, then an optional ``key = value``
config file, then command-line flags (highest precedence).

Exit status: 0 on success, 2 on usage or configuration errors, 3 when the
numerics fail.
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import ensemble, kdvb, lattice, memory, ode, reduction, sampling
from .csvio import write_csv

log = logging.getLogger("mzlab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    pass


def _positive(name, v):
    if not v > 0:
        raise ConfigError(f"{name} must be positive, got {v}")


def _non_negative(name, v):
    if not v >= 0:
        raise ConfigError(f"{name} must be non-negative, got {v}")


def _any(name, v):
    pass


def _float_list(text):
    try:
        vals = [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"malformed number list {text!r}") from None
    if not vals:
        raise ConfigError("empty number list")
    return vals


def _positive_list(name, vals):
    if any(not v > 0 for v in vals):
        raise ConfigError(f"{name} entries must be positive")


# name -> (parser, default, validator, help)
PARAMS = {
    "hald-compare": {
        "dt": (float, 0.01, _positive, "time step for replicas and models"),
        "t_end": (float, 50.0, _positive, "horizon"),
        "n_replicas": (int, 10_000, _positive, "ensemble size"),
        "x1": (float, 1.0, _any, "resolved initial phi_1"),
        "x2": (float, 0.0, _any, "resolved initial phi_2"),
    },
    "tmodel": {
        "dt": (float, 1e-3, _positive, "time step"),
        "t_end": (float, 50.0, _positive, "horizon"),
        "x1": (float, 1.0, _any, "initial Phi_1"),
        "x2": (float, 0.0, _any, "initial Phi_2"),
    },
    "fd": {
        "dt": (float, 0.01, _positive, "time step and kernel grid spacing"),
        "t_end": (float, 10.0, _positive, "horizon"),
        "n_replicas": (int, 10_000, _positive, "canonical samples for kernel and autocorrelation"),
        "n_oracle": (int, 1_000_000, _positive, "samples for the static-moment oracle"),
    },
    "kdvb": {
        "r_grid": (_float_list, "2,4,8,16,32", _positive_list, "Reynolds numbers for the fits"),
        "ell": (float, 6.0, _positive, "averaging window"),
        "dx": (float, 0.01, _positive, "profile grid spacing"),
        "profile_r": (_float_list, "0.5,5", _positive_list, "extra profiles written to disk"),
    },
    "rg": {
        "k0": (float, 0.5, _non_negative, "initial nearest-neighbour coupling"),
        "n_steps": (int, 2, _positive, "decimation steps"),
        "n_sites": (int, 64, _positive, "sites at the finest level"),
        "n_sweeps": (int, 100_000, _positive, "recorded sweeps per level"),
        "burn_in": (int, 1000, _non_negative, "discarded sweeps per level"),
    },
}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    out: str = "."
    params: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["params"][name]
        except KeyError:
            raise AttributeError(name) from None


def read_config_file(path):
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def build_config(experiment, cli_values, config_path=None):
    schema = PARAMS[experiment]
    merged = {k: default for k, (_, default, _, _) in schema.items()}
    seed, out = 0, "."
    if config_path:
        for key, value in read_config_file(config_path).items():
            if key == "seed":
                seed = value
            elif key == "out":
                out = value
            elif key in schema:
                merged[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r} for {experiment}")
    for key, value in cli_values.items():
        if value is None:
            continue
        if key == "seed":
            seed = value
        elif key == "out":
            out = value
        else:
            merged[key] = value
    params = {}
    for key, (conv, _, check, _) in schema.items():
        try:
            v = conv(merged[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: {exc}") from None
        check(key, v)
        params[key] = v
    try:
        seed = int(seed)
    except ValueError:
        raise ConfigError(f"seed must be an integer, got {seed!r}") from None
    if seed < 0:
        raise ConfigError("seed must be non-negative")
    return ExperimentConfig(experiment, seed, str(out), params)


def _path(cfg, name):
    return os.path.join(cfg.out, name)


def run_hald_compare(cfg):
    system = ode.hald_system()
    part = sampling.Partition(2, 4)
    xhat = np.array([cfg.x1, cfg.x2])
    truth = ensemble.ensemble_mean_trajectory(system, part, xhat, cfg.n_replicas, cfg.dt,
                                              cfg.t_end, seed=cfg.seed)
    models = [reduction.galerkin_model(system, part), reduction.hald_averaged_model()]
    table = ensemble.compare_reductions(truth, models, xhat, cfg.dt, names=["galerkin", "averaged"])
    truth.to_csv(_path(cfg, "truth.csv"))
    table.models_csv(_path(cfg, "models.csv"))
    table.to_csv(_path(cfg, "compare.csv"))
    rows = []
    if cfg.t_end >= 50.0:
        rows.append(["truth", float("nan"), float("nan"), float("nan"),
                     ensemble.envelope_ratio(truth.times, truth.means[:, 0])])
    for r in table.rows:
        rows.append([r.name, r.early_sup, r.late_sup, r.l2, r.envelope_ratio])
    write_csv(_path(cfg, "summary.csv"), ["model", "early_sup", "late_sup", "l2", "envelope_ratio"], rows)
    return EXIT_OK


def run_tmodel(cfg):
    model = reduction.hald_t_model()
    hhat = reduction.hald_renormalized_hamiltonian()
    x0 = np.array([cfg.x1, cfg.x2])
    report = reduction.lyapunov_check(model, hhat, x0, cfg.dt, cfg.t_end)
    traj = model.integrate(x0, cfg.dt, cfg.t_end)
    traj.to_csv(_path(cfg, "tmodel.csv"))
    write_csv(_path(cfg, "hhat.csv"), ["t", "hhat"], zip(report.times, report.hhat))
    write_csv(_path(cfg, "lyapunov.csv"), ["max_increment", "total_change"],
              [[report.max_increment, report.total_change]])
    return EXIT_OK


def run_fd(cfg):
    system = ode.hald_system()
    n = ode.step_count(cfg.dt, cfg.t_end)
    s_grid = cfg.dt * np.arange(n + 1)
    kernel = memory.kernel_short_memory(system, 1, s_grid, cfg.n_replicas, seed=cfg.seed)
    auto = memory.autocorrelation_measure(system, 1, cfg.n_replicas, cfg.dt, cfg.t_end,
                                          seed=cfg.seed + 1)
    cmp = memory.fd_compare(kernel, auto)
    fit = memory.gaussian_kernel_fit(kernel)
    x = sampling.sample_hald_canonical(cfg.n_oracle, seed=cfg.seed + 2)
    oracle = sampling.EnsembleStats.from_values(x[:, 0] ** 2 * (1 + x[:, 2] ** 2) ** 2 / 2)
    kernel.to_csv(_path(cfg, "kernel.csv"))
    cmp.to_csv(_path(cfg, "fd_compare.csv"))
    write_csv(_path(cfg, "fd_summary.csv"),
              ["K0", "K0_stderr", "sup_gap", "gauss_a", "gauss_b", "b_oracle", "b_oracle_stderr"],
              [[kernel.values[0], kernel.std_errs[0], cmp.sup_gap, fit.a, fit.b,
                oracle.estimate, oracle.std_err]])
    return EXIT_OK


def run_kdvb(cfg):
    fits = []
    for R in cfg.r_grid:
        prof = kdvb.steady_profile(R, kdvb.default_span(R), cfg.dx)
        fits.append(kdvb.fit_eps_eff(kdvb.window_average(prof, cfg.ell), cfg.ell))
    kdvb.write_fits_csv(_path(cfg, "fits.csv"), fits)
    sims = [kdvb.similarity_exponent(fits)] if len(fits) >= 4 else []
    kdvb.write_similarity_csv(_path(cfg, "similarity.csv"), sims)
    rows = []
    for R in cfg.profile_r:
        prof = kdvb.steady_profile(R, kdvb.default_span(R), cfg.dx)
        prof.to_csv(_path(cfg, f"profile_R{R:g}.csv"))
        rows.append([R, prof.oscillatory, float(prof.u.max())])
    write_csv(_path(cfg, "profiles.csv"), ["R", "oscillatory", "max_u"], rows)
    return EXIT_OK


def run_rg(cfg):
    params = lattice.McParams(n_sites=cfg.n_sites, n_sweeps=cfg.n_sweeps, burn_in=cfg.burn_in,
                              seed=cfg.seed)
    try:
        steps = lattice.rg_flow(cfg.k0, cfg.n_steps, params)
    except lattice.DepthError as exc:
        raise ConfigError(str(exc)) from None
    lattice.write_rg_csv(_path(cfg, "rg_flow.csv"), steps)
    return EXIT_OK


RUNNERS = {
    "hald-compare": run_hald_compare,
    "tmodel": run_tmodel,
    "fd": run_fd,
    "kdvb": run_kdvb,
    "rg": run_rg,
}

NUMERIC_ERRORS = (
    ode.IntegrationBlowup,
    ensemble.EnsembleBlowupError,
    kdvb.SpanError,
    kdvb.FitInstabilityError,
    memory.FitError,
    lattice.SaturationError,
    lattice.CorrelationFitError,
    ArithmeticError,
)


def make_parser():
    parser = argparse.ArgumentParser(prog="mzlab", description=__doc__.splitlines()[0],
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    helps = {
        "hald-compare": "ensemble truth vs Galerkin and averaged models for the Hald system",
        "tmodel": "Hald t-model trajectory and renormalized-Hamiltonian series",
        "fd": "short-memory kernel, Volterra solution vs measured autocorrelation",
        "kdvb": "KdV-Burgers fronts, effective Burgers fits and the similarity exponent",
        "rg": "decimation flow of the 1D Ising chain",
    }
    for name, schema in PARAMS.items():
        p = sub.add_parser(name, help=helps[name], description=helps[name],
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.add_argument("--seed", type=str, default=None, help="random seed (default 0)")
        p.add_argument("--out", default=None, help="output directory (default .)")
        p.add_argument("--config", default=None, help="key = value config file")
        for key, (_, default, _, text) in schema.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, type=str, default=None,
                           help=f"{text} (default {default})")
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = make_parser()
    args = parser.parse_args(argv)
    values = {k: v for k, v in vars(args).items() if k not in ("experiment", "config")}
    try:
        cfg = build_config(args.experiment, values, args.config)
        os.makedirs(cfg.out, exist_ok=True)
        return RUNNERS[args.experiment](cfg)
    except NUMERIC_ERRORS as exc:
        print(f"mzlab {args.experiment}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        # remaining ValueErrors are parameter combinations the modules reject
        print(f"mzlab {args.experiment}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
