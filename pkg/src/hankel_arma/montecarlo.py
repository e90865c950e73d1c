"""Monte Carlo oracles for the quantities entering the error bound.

Every replicate draws from its own counter-based stream ``(seed, index)``,
so results do not depend on how replicates are split across workers.
"""

from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import dataclass, field
import json
import math

import numpy as np

from hankel_arma._rng import stream
from hankel_arma.arma import ArmaModel, simulate_state_space, to_state_space
from hankel_arma.hankel import (build_hankel, build_structured, controllability, low_noise_hankel,
                                nuisance, observability)
from hankel_arma.realization import estimate_order
from hankel_arma.solver import (InfeasibleError, SolverConfig, numerical_rank, solve_constrained,
                                solve_ls)
from hankel_arma import theory

# scale guards; hard limits so that nothing here silently runs at large scale
SIGMA_H_MAX_ENTRIES = 400
WIDTH_MAX_T = 8
H_NORMS_MAX_T = 16
EXPERIMENT_MAX_T = 10
EXPERIMENT_MAX_T_LEN = 10_000
EXPERIMENT_MAX_REPLICATES = 200

# calibration draws and random cone bases use stream ids above these offsets
CALIBRATION_STREAM = 1 << 32
CONE_STREAM = 1 << 33
CHUNK = 10_000


class ScaleGuardError(ValueError):
    """A Monte Carlo request exceeds the hard-coded size limits."""


@dataclass(frozen=True)
class McConfig:
    replicates: int
    seed: int = 0
    workers: int = 1
    instance: dict = None

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def _chunks(replicates, size=CHUNK):
    for k, start in enumerate(range(0, replicates, size)):
        yield k, min(size, replicates - start)


def _mean_se(v):
    v = np.asarray(v, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
    return float(v.mean()), se


# --------------------------------------------------------------------------
# covariance of vec(H)

def mc_sigma_H(t, T, replicates, seed=0):
    """Empirical second moment of ``vec(H)`` with ``H = eps z``.

    ``eps`` is ``t x n`` Rademacher, ``z`` the ``n x t`` Hankel matrix
    ``z[s', r] = z_{s' + r}`` of standard normals, ``n = T - 2t + 1``.  ``H``
    has mean zero, so the uncentred moment is the covariance estimate.

    Returns
    -------
    dict
        ``n_terms``, ``diag_mean``, ``max_offdiag``, ``max_dev`` (max entry
        of ``|Cov - n I|``), the CLT tolerances for the off-diagonal and the
        diagonal mean, and ``degenerate`` when a single replicate was drawn.
    """
    n = theory.sigma_H_spectrum(t, T)
    if t * (T - 2 * t + 2) > SIGMA_H_MAX_ENTRIES:
        raise ScaleGuardError(f"t(T - 2t + 2) = {t * (T - 2 * t + 2)} exceeds {SIGMA_H_MAX_ENTRIES}")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    d = t * t
    acc = np.zeros((d, d))
    idx = np.arange(n)[:, None] + np.arange(t)[None, :]
    for k, m in _chunks(replicates):
        g = stream(seed, k)
        eps = g.choice(np.array([-1.0, 1.0]), size=(m, t, n))
        z = g.standard_normal((m, n + t - 1))
        H = eps @ z[:, idx]
        v = H.transpose(0, 2, 1).reshape(m, d)  # column-major vec
        acc += v.T @ v
    cov = acc / replicates
    off = cov - np.diag(np.diag(cov))
    diag_mean = float(np.diag(cov).mean())
    return {
        "t": t, "T": T, "n_terms": n, "replicates": replicates, "seed": seed,
        "diag_mean": diag_mean,
        "max_offdiag": float(np.abs(off).max()) if d > 1 else 0.0,
        "max_dev": float(np.abs(cov - n * np.eye(d)).max()),
        "offdiag_tolerance": 4.0 * math.sqrt(n * (1 + n)) / math.sqrt(replicates),
        "diag_tolerance": 3.0 * math.sqrt(2.0 * n * (n + 1)) / math.sqrt(replicates * d),
        "degenerate": replicates == 1,
        "cov": cov,
    }


# --------------------------------------------------------------------------
# descent cone of the nuclear norm

@dataclass(frozen=True, eq=False)
class DescentConeSpec:
    """Orthonormal bases splitting ``R^{t x t}`` around a rank-``r`` point."""

    U1: np.ndarray
    U2: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    r: int

    def __post_init__(self):
        U = np.hstack([self.U1, self.U2])
        V = np.hstack([self.V1, self.V2])
        t = U.shape[0]
        if U.shape != (t, t) or V.shape != (t, t):
            raise ValueError("U1|U2 and V1|V2 must be square")
        if self.U1.shape[1] != self.r or self.V1.shape[1] != self.r:
            raise ValueError("r must equal the number of columns of U1 and V1")
        for W in (U, V):
            if np.abs(W.T @ W - np.eye(t)).max() > 1e-10:
                raise ValueError("bases are not orthogonal")

    @property
    def t(self):
        return self.U1.shape[0]

    @classmethod
    def from_matrix(cls, L, tol=1e-10):
        """Cone at ``L`` with rank counted at ``tol * sigma_1``."""
        U, s, Vt = np.linalg.svd(np.asarray(L, dtype=float))
        r = numerical_rank(s, tol)
        V = Vt.T
        return cls(U1=U[:, :r], U2=U[:, r:], V1=V[:, :r], V2=V[:, r:], r=r)

    @classmethod
    def random(cls, t, r, seed=0):
        """Cone at a random rank-``r`` point with Haar-distributed bases."""
        g = stream(seed, CONE_STREAM)
        U = np.linalg.qr(g.standard_normal((t, t)))[0]
        V = np.linalg.qr(g.standard_normal((t, t)))[0]
        return cls(U1=U[:, :r], U2=U[:, r:], V1=V[:, :r], V2=V[:, r:], r=r)


def _blocks(G, cone):
    U = np.hstack([cone.U1, cone.U2])
    V = np.hstack([cone.V1, cone.V2])
    Gt = U.T @ G @ V
    r = cone.r
    return Gt[..., :r, :r], Gt[..., :r, r:], Gt[..., r:, :r], Gt[..., r:, r:]


def polar_objective(tau, G, cone):
    """``dist(G, tau * subdiff)^2`` for the rotated blocks, as a function of ``tau``."""
    G11, G12, G21, G22 = _blocks(np.asarray(G, dtype=float), cone)
    s = np.linalg.svd(G22, compute_uv=False) if G22.size else np.zeros(0)
    return (np.sum((G11 - tau * np.eye(cone.r)) ** 2) + np.sum(G12 ** 2) + np.sum(G21 ** 2)
            + np.sum(np.maximum(s - tau, 0.0) ** 2))


def _polar_dist2(G11, G12, G21, G22):
    """Vectorised minimum over ``tau >= 0`` of the polar objective.

    The objective is a convex piecewise quadratic in ``tau`` with breakpoints
    at the singular values of ``G22``; on the piece where ``k`` of them exceed
    ``tau`` the stationary point is ``(tr G11 + sum of top k) / (r + k)``.
    """
    m = G11.shape[0]
    r = G11.shape[-1]
    tr = np.trace(G11, axis1=-2, axis2=-1)
    base = np.sum(G12 ** 2, axis=(-2, -1)) + np.sum(G21 ** 2, axis=(-2, -1))
    if G22.shape[-1]:
        s = np.linalg.svd(G22, compute_uv=False)  # descending
    else:
        s = np.zeros((m, 0))
    if r == 0:
        return np.zeros(m)
    k = s.shape[1]
    csum = np.concatenate([np.zeros((m, 1)), np.cumsum(s, axis=1)], axis=1)
    taus = (tr[:, None] + csum) / (r + np.arange(k + 1))[None, :]
    hi = np.concatenate([np.full((m, 1), np.inf), s], axis=1)
    lo = np.concatenate([s, np.full((m, 1), -np.inf)], axis=1)
    ok = (taus <= hi + 1e-12 * (1 + np.abs(hi))) & (taus >= lo - 1e-12 * (1 + np.abs(lo)))
    tau = np.maximum(taus[np.arange(m), np.argmax(ok, axis=1)], 0.0)
    diag = np.diagonal(G11, axis1=-2, axis2=-1)
    d2 = (np.sum(G11 ** 2, axis=(-2, -1)) - np.sum(diag ** 2, axis=-1)
          + np.sum((diag - tau[:, None]) ** 2, axis=-1) + base
          + np.sum(np.maximum(s - tau[:, None], 0.0) ** 2, axis=-1))
    return np.maximum(d2, 0.0)


def dist_to_polar(G, cone):
    """Distance from ``G`` to the polar of the nuclear-norm descent cone.

    The polar is the closed cone over the subdifferential at the base point,
    ``{tau (U1 V1^T + U2 W V2^T) : tau >= 0, ||W|| <= 1}``; after rotating
    into the ``(U, V)`` bases the distance reduces to a 1-D convex problem
    in ``tau`` that is solved exactly on its quadratic pieces.
    """
    G = np.asarray(G, dtype=float)
    if G.shape != (cone.t, cone.t):
        raise ValueError(f"G must be {cone.t}x{cone.t}")
    return float(math.sqrt(_polar_dist2(*_blocks(G[None], cone))[0]))


def mc_width(cone, replicates, seed=0):
    """Gaussian mean width and statistical dimension of the descent cone.

    For a cone the supremum of ``<G, x>`` over its intersection with the unit
    sphere (or ball) equals the distance from ``G`` to the polar cone, so the
    width is the mean distance and the dimension the mean squared distance.
    """
    if cone.t > WIDTH_MAX_T:
        raise ScaleGuardError(f"t = {cone.t} exceeds {WIDTH_MAX_T}")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    d2 = np.empty(replicates)
    pos = 0
    for k, m in _chunks(replicates):
        G = stream(seed, k).standard_normal((m, cone.t, cone.t))
        d2[pos:pos + m] = _polar_dist2(*_blocks(G, cone))
        pos += m
    w, w_se = _mean_se(np.sqrt(d2))
    dim, dim_se = _mean_se(d2)
    return {"t": cone.t, "r": cone.r, "replicates": replicates, "seed": seed,
            "width": w, "width_se": w_se, "dimension": dim, "dimension_se": dim_se}


# --------------------------------------------------------------------------
# Gaussian matrix moments, small-ball and chi frequencies

def mc_H_norms(t, replicates, seed=0, c=1.0):
    """Moments of a ``t x t`` standard Gaussian matrix ``H``.

    Returns the means and standard errors of ``||H||``, ``||H||^2`` and
    ``||H||_F^2`` next to the reference values ``2 sqrt(t)`` (spectral mean),
    ``t^2`` (exact Frobenius moment), ``2t`` (published Frobenius moment) and
    the concentration bound ``(1 + 1/(2ct)) E||H||^2 + E||H||`` evaluated
    at the empirical ``E||H||``.
    """
    if t > H_NORMS_MAX_T:
        raise ScaleGuardError(f"t = {t} exceeds {H_NORMS_MAX_T}")
    if t < 1 or replicates < 1:
        raise ValueError("t and replicates must be >= 1")
    op = np.empty(replicates)
    fro2 = np.empty(replicates)
    pos = 0
    for k, m in _chunks(replicates):
        H = stream(seed, k).standard_normal((m, t, t))
        op[pos:pos + m] = np.linalg.norm(H, ord=2, axis=(1, 2))
        fro2[pos:pos + m] = np.sum(H * H, axis=(1, 2))
        pos += m
    m1, se1 = _mean_se(op)
    m2, se2 = _mean_se(op ** 2)
    mf, sef = _mean_se(fro2)
    return {"t": t, "replicates": replicates, "seed": seed,
            "mean_op": m1, "mean_op_se": se1, "mean_op2": m2, "mean_op2_se": se2,
            "mean_fro2": mf, "mean_fro2_se": sef,
            "gordon": 2.0 * math.sqrt(t), "fro2_exact": float(t * t), "fro2_paper": 2.0 * t,
            "concentration_rhs": (1.0 + 1.0 / (2.0 * c * t)) * m1 ** 2 + m1, "c": c}


def mc_small_ball(D, level, replicates, seed=0):
    """Empirical ``Q_level(D)`` = mean over rows of ``P(|<D_s, z>| >= level)``."""
    D = np.asarray(D, dtype=float)
    hits = np.zeros(D.shape[0])
    for k, m in _chunks(replicates):
        z = stream(seed, k).standard_normal((m, D.shape[1]))
        hits += np.count_nonzero(np.abs(z @ D.T) >= level, axis=0)
    freq = hits / replicates
    return float(freq.mean()), float(np.sqrt(np.sum(freq * (1 - freq))) / (D.shape[0] * math.sqrt(replicates)))


def mc_chi_tails(nu_dof, replicates, seed=0, s_values=(0.5, 1.0, 2.0), u_values=(0.01, 0.1, 0.5)):
    """Empirical chi tail frequencies next to their closed-form bounds."""
    chi2 = np.empty(replicates)
    pos = 0
    for k, m in _chunks(replicates, 200_000):
        z = stream(seed, k).standard_normal((m, nu_dof))
        chi2[pos:pos + m] = np.sum(z * z, axis=1)
        pos += m
    chi = np.sqrt(chi2)
    rows = []
    for s in s_values:
        level = math.sqrt(nu_dof) + math.sqrt(2 * s)
        f = float(np.mean(chi >= level))
        rows.append({"kind": "upper", "param": s, "level": level, "freq": f,
                     "se": math.sqrt(f * (1 - f) / replicates), "bound": theory.chi_upper_tail(nu_dof, s)})
    for u in u_values:
        level = math.sqrt(u * nu_dof)
        f = float(np.mean(chi <= level))
        rows.append({"kind": "small_ball", "param": u, "level": level, "freq": f,
                     "se": math.sqrt(f * (1 - f) / replicates), "bound": theory.chi_small_ball(nu_dof, u)})
    return rows


# --------------------------------------------------------------------------
# end-to-end estimation experiment

def _hankel_instance(ss, t, T, seed, stream_id, regime, noise_ratio):
    if regime == "low_noise":
        hs, sm = low_noise_hankel(ss, t, T, seed=seed, noise_ratio=noise_ratio, stream_id=stream_id)
        return hs, sm, float(np.linalg.norm(sm.N @ hs.E))
    traj = simulate_state_space(ss, T, seed=seed, stream_id=stream_id)
    hs = build_hankel(traj, t)
    sm = build_structured(ss, t, hs.n_cols, states=traj.states)
    return hs, sm, float(np.linalg.norm(nuisance(hs, sm)))


def calibrate_eta(model, t, T, nu, replicates=200, seed=0, regime="noisy", noise_ratio=1e-6):
    """Empirical ``1 - exp(-nu^2 / 2)`` quantile of the nuisance norm.

    Draws come from stream ids ``CALIBRATION_STREAM + i``, disjoint from the
    replicate streams of :func:`mc_estimation_experiment`.
    """
    ss = to_state_space(model)
    norms = np.array([_hankel_instance(ss, t, T, seed, CALIBRATION_STREAM + i, regime, noise_ratio)[2]
                      for i in range(replicates)])
    return float(np.quantile(norms, 1.0 - math.exp(-nu * nu / 2.0))), norms


@dataclass(frozen=True)
class _Job:
    model: ArmaModel
    t: int
    T: int
    seed: int
    eta: float
    regime: str
    noise_ratio: float
    order_rule: str
    threshold: float
    solver_kw: dict
    Lambda: float


def _replicate(job, i):
    ss = to_state_space(job.model)
    hs, sm, nuis = _hankel_instance(ss, job.t, job.T, job.seed, i, job.regime, job.noise_ratio)
    OK = sm.OK
    cfg = SolverConfig(eta=job.eta, rank_threshold=job.threshold, **job.solver_kw)
    try:
        res = solve_constrained(hs, cfg)
        infeasible = 0
    except InfeasibleError:
        res = solve_ls(hs)
        infeasible = 1
    err = float(np.linalg.norm(OK - res.L_hat))
    bound = 2.0 * job.eta / job.Lambda if job.Lambda > 0 else float("nan")
    event = int(nuis <= job.eta)
    return {
        "replicate": i,
        "nuisance": nuis,
        "event": event,
        "infeasible": infeasible,
        "residual": res.residual_fro,
        "error": err,
        "rel_error": err / float(np.linalg.norm(OK)),
        "error_over_2eta": err / (2.0 * job.eta) if job.eta > 0 else float("inf"),
        "rank": numerical_rank(res.singular_values, job.threshold),
        "p_hat": estimate_order(res.singular_values, job.threshold, job.order_rule),
        "bound": bound,
        "violation": int(bool(event and job.Lambda > 0 and err > bound)),
        "iters": res.iters,
        "converged": int(res.converged),
    }


COLUMNS = ["replicate", "nuisance", "event", "infeasible", "residual", "error", "rel_error",
           "error_over_2eta", "rank", "p_hat", "bound", "violation", "iters", "converged"]

COLUMN_PROVENANCE = {
    "replicate": "index; RNG stream (seed, replicate)",
    "nuisance": "computed: ||O Abar0 + N E||_F from the recorded states and noise",
    "event": "computed: nuisance <= eta",
    "infeasible": "computed: eta below the least-squares floor (estimate falls back to least squares)",
    "residual": "computed: ||X_future - L_hat X_past||_F",
    "error": "computed: ||O Kc - L_hat||_F",
    "rel_error": "computed: error / ||O Kc||_F",
    "error_over_2eta": "computed: error / (2 eta)",
    "rank": "computed: singular values of L_hat above threshold * sigma_1",
    "p_hat": "computed: order rule on the singular values of L_hat",
    "bound": "closed-form: 2 eta / Lambda (nan when Lambda <= 0)",
    "violation": "computed: event and Lambda > 0 and error > bound",
    "iters": "solver iterations (last inner solve)",
    "converged": "solver convergence flag",
}


@dataclass
class ExperimentResult:
    rows: list
    summary: dict
    report: theory.BoundReport = field(repr=False, default=None)

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# " + "; ".join(f"{k}: {COLUMN_PROVENANCE[k]}" for k in COLUMNS) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for r in self.rows:
                w.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in COLUMNS])

    def to_json(self, path=None):
        d = dict(self.summary)
        if self.report is not None:
            d["bound_report"] = self.report.to_dict()
        text = json.dumps(d, indent=2, sort_keys=True, default=float)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def mc_estimation_experiment(model, t, T, nu, replicates, seed=0, workers=1, calibration_replicates=200,
                             eta=None, xi="optimize", c=1.0, frob_moment="paper", order_rule="gap",
                             threshold=1e-6, regime="noisy", noise_ratio=1e-6, solver_kw=None):
    """Replicated estimation against the closed-form error bound.

    Each replicate simulates the model, builds the Hankel matrices, records
    the nuisance norm and solves the constrained problem at the common
    ``eta`` (the calibrated quantile unless given).  Replicates whose
    ``eta`` is below the least-squares floor are flagged ``infeasible`` and
    estimated by least squares, the smallest feasible level.

    Parameters
    ----------
    model : ArmaModel
    t, T : int
        Window depth and trajectory length; ``t <= 10``, ``T <= 10^4``.
    nu : float
        Confidence parameter; the ``eta`` event has budget ``exp(-nu^2/2)``.
    replicates : int
        At most 200.
    xi : float or "optimize"
        Level parameter of the bound; ``"optimize"`` maximises ``Lambda``.
    regime : {"noisy", "low_noise"}
        ``"low_noise"`` uses :func:`hankel_arma.hankel.low_noise_hankel`.

    Returns
    -------
    ExperimentResult
    """
    if t > EXPERIMENT_MAX_T or T > EXPERIMENT_MAX_T_LEN or replicates > EXPERIMENT_MAX_REPLICATES:
        raise ScaleGuardError(f"experiment limited to t <= {EXPERIMENT_MAX_T}, T <= {EXPERIMENT_MAX_T_LEN}, "
                              f"replicates <= {EXPERIMENT_MAX_REPLICATES}")
    if regime not in ("noisy", "low_noise"):
        raise ValueError(f"unknown regime {regime!r}")
    McConfig(replicates=replicates, seed=seed, workers=workers)
    ss = to_state_space(model)
    if eta is None:
        eta, _ = calibrate_eta(model, t, T, nu, calibration_replicates, seed, regime, noise_ratio)
        eta_source = "calibrated"
    else:
        eta_source = "given"

    OK = observability(ss, t) @ controllability(ss, t)
    rank_OK = max(numerical_rank(np.linalg.svd(OK, compute_uv=False), 1e-8), 1)
    ctx = theory.TheoryContext.from_model(model, t, T, c=c, nu=nu,
                                          **({} if xi == "optimize" else {"xi": float(xi)}))
    if xi == "optimize":
        report = theory.optimize_xi(ctx, rank_OK, eta, frob_moment)
    else:
        report = theory.lambda_bound(ctx, rank_OK, eta, frob_moment)

    job = _Job(model=model, t=t, T=T, seed=seed, eta=eta, regime=regime, noise_ratio=noise_ratio,
               order_rule=order_rule, threshold=threshold, solver_kw=dict(solver_kw or {}),
               Lambda=report.Lambda)
    idx = range(replicates)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_replicate, [job] * replicates, idx))
    else:
        rows = [_replicate(job, i) for i in idx]

    ev = np.array([r["event"] for r in rows])
    err = np.array([r["error"] for r in rows])
    budget = math.exp(-nu * nu / 2.0)
    fail_rate = float(1.0 - ev.mean())
    p_hat = np.array([r["p_hat"] for r in rows])
    summary = {
        "model": model.to_dict(), "t": t, "T": T, "nu": nu, "seed": seed, "replicates": replicates,
        "regime": regime, "eta": eta, "eta_source": eta_source,
        "calibration_replicates": calibration_replicates if eta_source == "calibrated" else 0,
        "event_failure_rate": fail_rate, "event_failure_budget": budget,
        "event_failure_se": math.sqrt(budget * (1 - budget) / replicates),
        "infeasible": int(sum(r["infeasible"] for r in rows)),
        "median_error": float(np.median(err)), "mean_error": float(err.mean()),
        "max_error_over_2eta": float(max(r["error_over_2eta"] for r in rows)),
        "rank_OK": rank_OK, "order_rule": order_rule, "threshold": threshold,
        "p_hat_counts": {str(k): int(v) for k, v in zip(*np.unique(p_hat, return_counts=True))},
        "Lambda": report.Lambda, "xi": report.xi, "vacuous": report.vacuous,
        "error_bound": report.error_bound,
        "violations": int(sum(r["violation"] for r in rows)),
        "columns": COLUMN_PROVENANCE,
    }
    return ExperimentResult(rows=rows, summary=summary, report=report)

