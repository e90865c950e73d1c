"""Command-line front end: ``hankel-arma <subcommand> [options]``.

Every run writes its outputs, a ``config.json`` echo of the resolved
settings and a ``manifest.json`` (config hash, seed, library versions and a
timestamp) into ``--out``.  Only the manifest carries a timestamp, so two
runs with the same settings produce byte-identical data files.

Settings resolve as command-line flag, then ``HANKEL_ARMA_SEED`` (seed
only), then the ``--config`` JSON file, then the built-in default.

Exit codes: 0 success, 2 usage error (argparse), 3 invalid input or
model, 4 scale-guard violation, 5 numerical failure.
"""

import argparse
from datetime import datetime, timezone
import hashlib
import json
import os
import platform
import sys

import numpy as np
import scipy

from hankel_arma import __version__
from hankel_arma import io, montecarlo, theory
from hankel_arma.arma import (ArmaModel, QuadratureError, simulate, simulate_state_space,
                              to_state_space)
from hankel_arma.hankel import build_hankel, controllability, observability
from hankel_arma.montecarlo import ScaleGuardError
from hankel_arma.realization import estimate_order, realize_result
from hankel_arma.solver import (InfeasibleError, SolverConfig, numerical_rank, solve_constrained,
                                solve_ls, solve_nuclear)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_SCALE = 4
EXIT_NUMERICAL = 5

SEED_ENV = "HANKEL_ARMA_SEED"


class ConfigError(ValueError):
    pass


def _float_or(word):
    def conv(s):
        if s == word:
            return s
        try:
            return float(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a number or {word!r}, got {s!r}")
    conv.__name__ = f"float_or_{word}"
    return conv


# --------------------------------------------------------------------------
# parser

def _add(p, suppress, *flags, **kw):
    if suppress:
        kw["default"] = argparse.SUPPRESS
    p.add_argument(*flags, **kw)


def _common(p, s, workers=False):
    _add(p, s, "--config", default=None, help="JSON file with option values (keys are option names)")
    _add(p, s, "--out", default="out", help="output directory")
    _add(p, s, "--seed", type=int, default=0, help=f"RNG seed (overridden by ${SEED_ENV} when not given)")
    if workers:
        _add(p, s, "--workers", type=int, default=1, help="worker processes")


def _model_opts(p, s):
    _add(p, s, "--model", default=None, help="model JSON file (keys p, q, a, b, sigma_eps2)")
    _add(p, s, "--p", type=int, default=None, help="AR order (checked against --a)")
    _add(p, s, "--q", type=int, default=None, help="MA order (checked against --b)")
    _add(p, s, "--a", type=float, nargs="*", default=[], help="AR coefficients a_1..a_p")
    _add(p, s, "--b", type=float, nargs="*", default=[], help="MA coefficients b_1..b_q")
    _add(p, s, "--sigma2", type=float, default=1.0, help="innovation variance")


def _solver_opts(p, s):
    _add(p, s, "--lambda", dest="lam", type=float, default=None, help="nuclear-norm penalty weight")
    _add(p, s, "--eta", type=_float_or("auto"), default=None,
         help="residual level of the constrained form, or 'auto' for the calibrated quantile")
    _add(p, s, "--max-iters", type=int, default=20000, help="proximal-gradient iteration cap")
    _add(p, s, "--tol", type=float, default=1e-15, help="relative iterate-change stall tolerance")
    _add(p, s, "--rank-threshold", type=float, default=1e-6, help="singular values below this times sigma_1 count as zero")


def _theory_opts(p, s, xi_default="optimize"):
    _add(p, s, "--xi", type=_float_or("optimize"), default=xi_default, help="level parameter xi, or 'optimize'")
    _add(p, s, "--nu", type=float, default=2.0, help="confidence parameter nu")
    _add(p, s, "--c", type=float, default=1.0, help="concentration constant c")
    _add(p, s, "--frob-moment", choices=["paper", "exact"], default="paper",
         help="E||H||_F^2 taken as 2t ('paper') or t^2 ('exact')")


def build_parser(suppress=False):
    s = suppress
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="hankel-arma", formatter_class=fmt,
                                     description="Nuclear-norm subspace identification of ARMA models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    p = sub.add_parser("simulate", formatter_class=fmt, help="simulate a trajectory")
    _model_opts(p, s)
    _add(p, s, "--T", type=int, default=1000, help="last time index (T + 1 samples)")
    _add(p, s, "--method", choices=["arma", "state-space"], default="arma",
         help="ARMA recursion or innovations state-space recursion")
    _common(p, s)

    p = sub.add_parser("hankel", formatter_class=fmt, help="build past/future Hankel matrices")
    _add(p, s, "--traj", default=None, help="trajectory CSV (index, x, e)")
    _add(p, s, "--t", type=int, default=10, help="window depth")
    _common(p, s)

    p = sub.add_parser("estimate", formatter_class=fmt, help="estimate O Kc from a trajectory")
    _add(p, s, "--traj", default=None, help="trajectory CSV (index, x, e)")
    _model_opts(p, s)
    _add(p, s, "--t", type=int, default=10, help="window depth")
    _solver_opts(p, s)
    _add(p, s, "--nu", type=float, default=2.0, help="confidence parameter for --eta auto")
    _add(p, s, "--calibration-replicates", type=int, default=200, help="replicates for --eta auto")
    _add(p, s, "--order-rule", choices=["threshold", "gap"], default="gap", help="order selection rule")
    _common(p, s)

    p = sub.add_parser("realize", formatter_class=fmt, help="recover (A, B, K) from an estimate")
    _add(p, s, "--estimate", default=None, help="L_hat CSV written by 'estimate'")
    _add(p, s, "--p-hat", type=int, default=None, help="model order (default: order rule)")
    _add(p, s, "--rank-threshold", type=float, default=1e-6, help="order rule threshold")
    _add(p, s, "--order-rule", choices=["threshold", "gap"], default="gap", help="order selection rule")
    _common(p, s)

    p = sub.add_parser("bounds", formatter_class=fmt, help="evaluate the closed-form error bound")
    _model_opts(p, s)
    _add(p, s, "--t", type=int, default=5, help="window depth")
    _add(p, s, "--T", type=int, default=10000, help="trajectory length")
    _add(p, s, "--rank", type=int, default=None, help="rank of O Kc (default: computed from the model)")
    _add(p, s, "--eta", type=_float_or("auto"), default="auto", help="residual level, or 'auto'")
    _add(p, s, "--calibration-replicates", type=int, default=200, help="replicates for --eta auto")
    _theory_opts(p, s)
    _common(p, s)

    p = sub.add_parser("mc-sigmah", formatter_class=fmt, help="Monte Carlo covariance of vec(H)")
    _add(p, s, "--t", type=int, default=2, help="window depth")
    _add(p, s, "--T", type=int, default=9, help="trajectory length")
    _add(p, s, "--replicates", type=int, default=100000, help="Monte Carlo replicates")
    _common(p, s)

    p = sub.add_parser("mc-width", formatter_class=fmt, help="Monte Carlo width of the descent cone")
    _add(p, s, "--t", type=int, default=6, help="matrix size")
    _add(p, s, "--r", type=int, default=2, help="rank of the base point")
    _add(p, s, "--replicates", type=int, default=10000, help="Monte Carlo replicates")
    _add(p, s, "--c", type=float, default=1.0, help="concentration constant for the bound")
    _common(p, s)

    p = sub.add_parser("mc-norms", formatter_class=fmt, help="moments of a Gaussian matrix")
    _add(p, s, "--t", type=int, default=4, help="matrix size")
    _add(p, s, "--replicates", type=int, default=100000, help="Monte Carlo replicates")
    _add(p, s, "--c", type=float, default=1.0, help="concentration constant")
    _common(p, s)

    p = sub.add_parser("experiment", formatter_class=fmt, help="replicated estimation vs the error bound")
    _model_opts(p, s)
    _add(p, s, "--t", type=int, default=5, help="window depth")
    _add(p, s, "--T", type=int, default=2000, help="trajectory length")
    _add(p, s, "--replicates", type=int, default=100, help="replicates")
    _add(p, s, "--calibration-replicates", type=int, default=200, help="replicates for the eta quantile")
    _add(p, s, "--regime", choices=["noisy", "low_noise"], default="noisy", help="data regime")
    _add(p, s, "--order-rule", choices=["threshold", "gap"], default="gap", help="order selection rule")
    _add(p, s, "--rank-threshold", type=float, default=1e-6, help="rank threshold")
    _theory_opts(p, s)
    _common(p, s, workers=True)
    return parser


# --------------------------------------------------------------------------
# config resolution

def resolve(argv, environ=None):
    """Parse ``argv`` and apply flag > environment > file > default."""
    environ = os.environ if environ is None else environ
    args = vars(build_parser().parse_args(argv))
    explicit = vars(build_parser(suppress=True).parse_args(argv))
    file_cfg = {}
    path = explicit.get("config")
    if path:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
        file_cfg = {k.replace("-", "_"): v for k, v in raw.items()}
        if "lambda" in file_cfg:
            file_cfg["lam"] = file_cfg.pop("lambda")
        unknown = set(file_cfg) - set(args)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = {}
    for k, v in args.items():
        if k in explicit:
            cfg[k] = explicit[k]
        elif k == "seed" and environ.get(SEED_ENV):
            try:
                cfg[k] = int(environ[SEED_ENV])
            except ValueError:
                raise ConfigError(f"{SEED_ENV} must be an integer")
        elif k in file_cfg:
            cfg[k] = file_cfg[k]
        else:
            cfg[k] = v
    cfg.pop("config", None)
    return cfg


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def _model(cfg, required=True):
    if cfg.get("model"):
        m = io.read_model(cfg["model"])
        if not isinstance(m, ArmaModel):
            raise ConfigError("model file must describe an ARMA model (p, q, a, b)")
        return m
    a, b = list(cfg.get("a") or []), list(cfg.get("b") or [])
    if cfg.get("p") is not None and cfg["p"] != len(a):
        raise ConfigError(f"--p {cfg['p']} does not match {len(a)} AR coefficients")
    if cfg.get("q") is not None and cfg["q"] != len(b):
        raise ConfigError(f"--q {cfg['q']} does not match {len(b)} MA coefficients")
    if not required and not a and not b and cfg.get("p") is None and cfg.get("q") is None:
        return None
    m = ArmaModel(a=a, b=b, sigma_eps2=cfg.get("sigma2", 1.0))
    m.check_stationary()
    return m


def _require_file(cfg, key):
    path = cfg.get(key)
    if not path:
        raise ConfigError(f"--{key} is required")
    if not os.path.exists(path):
        raise ConfigError(f"{path} does not exist")
    return path


def _rank_OK(model, t):
    ss = to_state_space(model)
    OK = observability(ss, t) @ controllability(ss, t)
    return max(numerical_rank(np.linalg.svd(OK, compute_uv=False), 1e-8), 1)


# --------------------------------------------------------------------------
# subcommands; each returns {file name: writer(path)}

def cmd_simulate(cfg):
    model = _model(cfg)
    if cfg["T"] < 0:
        raise ConfigError("--T must be >= 0")
    if cfg["method"] == "arma":
        traj = simulate(model, cfg["T"], seed=cfg["seed"])
    else:
        traj = simulate_state_space(to_state_space(model), cfg["T"], seed=cfg["seed"])
    return {"trajectory.csv": lambda p: io.write_trajectory(traj, p),
            "model.json": lambda p: io.write_model(model, p)}


def cmd_hankel(cfg):
    traj = io.read_trajectory(_require_file(cfg, "traj"))
    hs = build_hankel(traj, cfg["t"])
    return {"X_past.csv": lambda p: io.write_matrix(hs.X_past, p),
            "X_future.csv": lambda p: io.write_matrix(hs.X_future, p),
            "E.csv": lambda p: io.write_matrix(hs.E, p),
            "hankel.json": lambda p: io.write_json(dict(hs.to_manifest(), source=cfg["traj"]), p)}


def cmd_estimate(cfg):
    traj = io.read_trajectory(_require_file(cfg, "traj"))
    hs = build_hankel(traj, cfg["t"])
    lam, eta = cfg.get("lam"), cfg.get("eta")
    if lam is not None and eta is not None:
        raise ConfigError("give at most one of --lambda and --eta")
    extra = {}
    if eta == "auto":
        model = _model(cfg)
        eta, _ = montecarlo.calibrate_eta(model, cfg["t"], traj.T, cfg["nu"],
                                          cfg["calibration_replicates"], cfg["seed"])
        extra["eta_source"] = "calibrated"
    knobs = dict(max_iters=cfg["max_iters"], rel_tol=cfg["tol"], rank_threshold=cfg["rank_threshold"])
    if eta is not None:
        try:
            res = solve_constrained(hs, SolverConfig(eta=eta, **knobs))
            extra["infeasible"] = False
        except InfeasibleError as exc:
            res = solve_ls(hs, SolverConfig(**knobs))
            extra.update(infeasible=True, floor=exc.floor)
        method = "constrained"
    elif lam is not None:
        res = solve_nuclear(hs, SolverConfig(lam=lam, **knobs))
        method = "penalized"
    else:
        res = solve_ls(hs, SolverConfig(**knobs))
        method = "least_squares"
    out = dict(res.to_dict(), method=method, t=hs.t, T=hs.T,
               p_hat=estimate_order(res.singular_values, cfg["rank_threshold"], cfg["order_rule"]),
               order_rule=cfg["order_rule"], **extra)
    return {"L_hat.csv": lambda p: io.write_matrix(res.L_hat, p),
            "estimate.json": lambda p: io.write_json(out, p)}


def cmd_realize(cfg):
    L = io.read_matrix(_require_file(cfg, "estimate"))
    rr = realize_result(L, cfg.get("p_hat"), cfg["rank_threshold"], cfg["order_rule"])
    return {"realization.json": lambda p: io.write_json(rr.to_dict(), p)}


def cmd_bounds(cfg):
    model = _model(cfg)
    t, T = cfg["t"], cfg["T"]
    eta = cfg["eta"]
    if eta == "auto":
        if T > montecarlo.EXPERIMENT_MAX_T_LEN or t > montecarlo.EXPERIMENT_MAX_T:
            raise ScaleGuardError("--eta auto is limited to the experiment scale (t <= 10, T <= 10^4)")
        eta, _ = montecarlo.calibrate_eta(model, t, T, cfg["nu"], cfg["calibration_replicates"], cfg["seed"])
    rank = cfg.get("rank") or _rank_OK(model, t)
    xi = cfg["xi"]
    ctx = theory.TheoryContext.from_model(model, t, T, c=cfg["c"], nu=cfg["nu"],
                                          **({} if xi == "optimize" else {"xi": xi}))
    if xi == "optimize":
        rep = theory.optimize_xi(ctx, rank, eta, cfg["frob_moment"])
    else:
        rep = theory.lambda_bound(ctx, rank, eta, cfg["frob_moment"])
    return {"bounds.json": lambda p: io.write_json(rep.to_dict(), p)}


def cmd_mc_sigmah(cfg):
    r = montecarlo.mc_sigma_H(cfg["t"], cfg["T"], cfg["replicates"], cfg["seed"])
    cov = r.pop("cov")
    r["theory"] = theory.sigma_H_spectrum(cfg["t"], cfg["T"])
    return {"sigma_h.json": lambda p: io.write_json(r, p),
            "sigma_h_cov.csv": lambda p: io.write_matrix(cov, p)}


def cmd_mc_width(cfg):
    t, r = cfg["t"], cfg["r"]
    if not 0 <= r <= t:
        raise ConfigError("--r must be in [0, t]")
    cone = montecarlo.DescentConeSpec.random(t, r, cfg["seed"])
    w = montecarlo.mc_width(cone, cfg["replicates"], cfg["seed"])
    if r >= 1:
        ctx = theory.TheoryContext(t=t, T=2 * t, Sigma=np.eye(t), c=cfg["c"])
        w.update(delta_upper=theory.delta_bound(ctx, r), width_upper=theory.width_bound(ctx, r),
                 delta_upper_exact=theory.delta_bound(ctx, r, "exact"), Sigma="identity", c=cfg["c"])
    return {"width.json": lambda p: io.write_json(w, p)}


def cmd_mc_norms(cfg):
    r = montecarlo.mc_H_norms(cfg["t"], cfg["replicates"], cfg["seed"], cfg["c"])
    return {"norms.json": lambda p: io.write_json(r, p)}


def cmd_experiment(cfg):
    model = _model(cfg)
    res = montecarlo.mc_estimation_experiment(
        model, cfg["t"], cfg["T"], cfg["nu"], cfg["replicates"], seed=cfg["seed"], workers=cfg["workers"],
        calibration_replicates=cfg["calibration_replicates"], xi=cfg["xi"], c=cfg["c"],
        frob_moment=cfg["frob_moment"], order_rule=cfg["order_rule"], threshold=cfg["rank_threshold"],
        regime=cfg["regime"])
    return {"experiment.csv": res.to_csv,
            "summary.json": lambda p: res.to_json(p)}


COMMANDS = {
    "simulate": cmd_simulate, "hankel": cmd_hankel, "estimate": cmd_estimate, "realize": cmd_realize,
    "bounds": cmd_bounds, "mc-sigmah": cmd_mc_sigmah, "mc-width": cmd_mc_width,
    "mc-norms": cmd_mc_norms, "experiment": cmd_experiment,
}


def run(cfg):
    """Execute a resolved config; returns the list of written files."""
    outputs = COMMANDS[cfg["command"]](cfg)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    written = []
    for name, writer in outputs.items():
        path = os.path.join(out, name)
        writer(path)
        written.append(name)
    echo = {k: v for k, v in cfg.items() if k != "out"}
    io.write_json(echo, os.path.join(out, "config.json"))
    manifest = {
        "command": cfg["command"],
        "config": echo,
        "config_hash": config_hash(echo),
        "out": out,
        "seed": cfg.get("seed"),
        "outputs": written,
        "versions": {"hankel_arma": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    io.write_json(manifest, os.path.join(out, "manifest.json"))
    return written


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = resolve(argv)
        run(cfg)
    except SystemExit as exc:  # argparse usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except ScaleGuardError as exc:
        print(f"hankel-arma: scale guard: {exc}", file=sys.stderr)
        return EXIT_SCALE
    except (QuadratureError, np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        print(f"hankel-arma: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, TypeError, KeyError, OSError) as exc:
        print(f"hankel-arma: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
