"""Closed-form quantities of the non-asymptotic error bound.

The bound reads ``||O Kc - L_hat||_F <= 2 eta / Lambda`` with

    Lambda = xi sqrt(t n) (1 - a xi sigma_max(Sigma^{1/2}) sqrt(t))
             - 2 sqrt(2) sqrt(t / n) sqrt(kappa(Sigma))
               * sqrt(((2ct + 1) + c sqrt(t)) sqrt(t) r / (c sqrt(sigma_min(Sigma))) + m)
             - nu xi

where ``n = T - 2t + 1``, ``a = (4 / sqrt(pi)) (e / 2)^{1/4}``, ``r`` is the
rank of ``O Kc`` and ``m = E||H||_F^2`` for a ``t x t`` standard Gaussian
matrix, taken as ``2t`` in the published chain (``frob_moment="paper"``)
or its exact value ``t^2`` (``frob_moment="exact"``).

The intermediate form that keeps the operator extremes of ``S`` and ``T``
is reported as ``Lambda_operator``.  ``Lambda`` may be negative; it is then
flagged as vacuous rather than clamped.
"""

import csv
from dataclasses import asdict, dataclass, field
import json
import math

import numpy as np
from scipy import optimize, special

SMALL_BALL = 4.0 / math.sqrt(math.pi) * (math.e / 2.0) ** 0.25

PROVENANCE = {
    "n_fact": "closed-form: T - 2t + 1",
    "sigma_min_S": "closed-form: sigma_min(Sigma^{-1/2}) / sqrt(T - 2t + 1), exact for S(.) = (.) Sigma^{-1/2} / sqrt(T - 2t + 1)",
    "sigma_min_T": "closed-form: sqrt(sigma_min(Sigma) / t), exact for T(.) = (.) Sigma^{1/2} / sqrt(t)",
    "norm_T": "closed-form: sqrt(sigma_max(Sigma) / t)",
    "q_lower": "closed-form: 1 - a xi sigma_max(Sigma^{1/2}) sqrt(t)",
    "width_upper": "closed-form: square root of the statistical dimension bound with ||T22|| <= ||T||, sigma12^2 + sigma21^2 <= 2||T||^2",
    "delta_upper": "closed-form: statistical dimension bound (square of width_upper)",
    "Lambda": "closed-form: Lambda with n = T - 2t + 1 columns of noise terms",
    "Lambda_operator": "closed-form: operator form with exact sigma_min(S), ||T||, sigma_min(T)",
    "error_bound": "closed-form: 2 eta / Lambda when Lambda > 0",
    "eta": "input (Monte Carlo quantile when produced by an experiment)",
}

NOTES = [
    "the noise term is scaled by sqrt(t (T - 2t + 1))",
    "r is rank(O Kc)",
    "E||H||_F^2 of a t x t standard Gaussian matrix is t^2; frob_moment='paper' uses 2t, 'exact' uses t^2",
    "Lambda_operator uses the exact sigma_min(S) = 1 / sqrt(sigma_max(Sigma) n) for S(.) = (.) Sigma^{-1/2} / sqrt(n)",
    "the row-sum step behind q_lower is an infimum (value sqrt(t) at equal row norms), not a supremum; D with a single nonzero row has Q_{2 xi} <= 1/t and can fall below q_lower",
]


def _check_window(t, T):
    if t < 1:
        raise ValueError("t must be >= 1")
    if not T - 2 * t + 1 > 0:
        raise ValueError(f"need T - 2t + 1 > 0, got T={T}, t={t}")


def sigma_H_spectrum(t, T):
    """Common eigenvalue of the covariance of ``vec(H)``.

    ``H = eps z`` with ``eps`` a ``t x (T - 2t + 1)`` Rademacher matrix and
    ``z`` the ``(T - 2t + 1) x t`` Hankel matrix of i.i.d. standard normals.
    Its covariance is ``(T - 2t + 1) I``, so the whitening operator is
    ``M = (T - 2t + 1)^{-1/2} Id`` and ``M^{-*} = (T - 2t + 1)^{1/2} Id``.
    """
    _check_window(t, T)
    return T - 2 * t + 1


@dataclass(frozen=True, eq=False)
class TheoryContext:
    """Inputs shared by every bound.

    Parameters
    ----------
    t, T : int
        Window depth and trajectory length.
    Sigma : ndarray
        ``t x t`` covariance of ``(x_0, ..., x_{t-1})``.
    c : float
        Gaussian concentration constant.
    xi, nu : float
        Free level and confidence parameters, both positive.
    """

    t: int
    T: int
    Sigma: np.ndarray
    c: float = 1.0
    xi: float = 0.05
    nu: float = 2.0
    sigma_min_Sigma: float = field(init=False)
    sigma_max_Sigma: float = field(init=False)

    def __post_init__(self):
        _check_window(self.t, self.T)
        S = np.array(self.Sigma, dtype=float)
        if S.shape != (self.t, self.t):
            raise ValueError(f"Sigma must be {self.t}x{self.t}, got {S.shape}")
        if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
            raise ValueError("Sigma must be symmetric")
        for name in ("c", "xi", "nu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        S.setflags(write=False)
        ev = np.linalg.eigvalsh(S)
        object.__setattr__(self, "Sigma", S)
        object.__setattr__(self, "sigma_min_Sigma", float(ev[0]))
        object.__setattr__(self, "sigma_max_Sigma", float(ev[-1]))

    @property
    def n_fact(self):
        return self.T - 2 * self.t + 1

    @classmethod
    def from_model(cls, model, t, T, **kw):
        from hankel_arma.arma import covariance_model
        return cls(t=t, T=T, Sigma=covariance_model(model, t).Sigma, **kw)

    def replace(self, **kw):
        d = {"t": self.t, "T": self.T, "Sigma": self.Sigma, "c": self.c, "xi": self.xi, "nu": self.nu}
        d.update(kw)
        return TheoryContext(**d)


def operator_extremes(ctx):
    """``(sigma_min(S), sigma_min(T), ||T||)`` for the right-multiplication maps.

    ``S(D) = D Sigma^{-1/2} / sqrt(n)`` and ``T(D) = D Sigma^{1/2} / sqrt(t)``;
    the singular values of ``D -> D W`` are those of ``W``, each repeated
    ``t`` times, so all three are exact.
    """
    if not ctx.sigma_min_Sigma > 0:
        raise ValueError(f"Sigma is not positive definite (min eigenvalue {ctx.sigma_min_Sigma:.3g})")
    smin, smax = ctx.sigma_min_Sigma, ctx.sigma_max_Sigma
    return (1.0 / math.sqrt(smax * ctx.n_fact),
            math.sqrt(smin / ctx.t),
            math.sqrt(smax / ctx.t))


def q_lower_bound(ctx):
    """Lower bound on ``inf Q_{2 xi}(D)`` over ``||D Sigma^{1/2}||_F = 1``."""
    return 1.0 - SMALL_BALL * ctx.xi * math.sqrt(ctx.sigma_max_Sigma) * math.sqrt(ctx.t)


def q_functional(D, level):
    """``Q_level(D) = mean_s P(|<D_s, z>| >= level)`` for ``z ~ N(0, I)``.

    Row ``s`` gives a centred normal with standard deviation ``||D_s||``, so
    each term is ``erfc(level / (sqrt(2) ||D_s||))``; zero rows contribute 0.
    """
    rn = np.linalg.norm(np.asarray(D, dtype=float), axis=1)
    with np.errstate(divide="ignore"):
        p = np.where(rn > 0, special.erfc(level / (math.sqrt(2.0) * np.where(rn > 0, rn, 1.0))), 0.0)
    return float(p.mean())


def frob_moment_value(t, frob_moment="paper"):
    """``E||H||_F^2`` for a ``t x t`` standard Gaussian matrix."""
    if frob_moment == "paper":
        return 2.0 * t
    if frob_moment == "exact":
        return float(t * t)
    raise ValueError(f"frob_moment must be 'paper' or 'exact', got {frob_moment!r}")


def spectral_moment_bound(t, c=1.0):
    """Bound on ``E||H||^2`` from concentration with ``E||H|| <= 2 sqrt(t)``.

    ``(1 + 1/(2ct)) 4t + 2 sqrt(t) = (2/c)(2ct + 1) + 2 sqrt(t)``.
    """
    return (1.0 + 1.0 / (2.0 * c * t)) * 4.0 * t + 2.0 * math.sqrt(t)


def delta_bound(ctx, rank_OK, frob_moment="paper"):
    """Upper bound on the statistical dimension of the whitened descent cone."""
    if rank_OK < 1:
        raise ValueError("rank_OK must be >= 1")
    _, smin_T, norm_T = operator_extremes(ctx)
    t, c = ctx.t, ctx.c
    m = frob_moment_value(t, frob_moment)
    rank_term = norm_T ** 2 * ((2 * c * t + 1) + c * math.sqrt(t)) * rank_OK / c
    cross_term = 2.0 * norm_T ** 2 * m
    return 2.0 / smin_T * (rank_term + cross_term)


def width_bound(ctx, rank_OK, frob_moment="paper"):
    """Upper bound on the Gaussian mean width of the whitened descent cone."""
    return math.sqrt(delta_bound(ctx, rank_OK, frob_moment))


def assemble_lambda(t, n_fact, xi, nu, c, rank_OK, sigma_min_Sigma, sigma_max_Sigma, m):
    """Final display for ``Lambda`` from scalar inputs."""
    head = xi * math.sqrt(t * n_fact) * (1.0 - SMALL_BALL * xi * math.sqrt(sigma_max_Sigma) * math.sqrt(t))
    inner = ((2 * c * t + 1) + c * math.sqrt(t)) * math.sqrt(t) * rank_OK / (c * math.sqrt(sigma_min_Sigma)) + m
    width = (2.0 * math.sqrt(2.0) * math.sqrt(t / n_fact)
             * math.sqrt(sigma_max_Sigma / sigma_min_Sigma) * math.sqrt(inner))
    return head - width - nu * xi


def assemble_lambda_operator(t, n_fact, xi, nu, c, rank_OK, sigma_max_Sigma,
                             sigma_min_S, sigma_min_T, norm_T, m):
    """Operator form of ``Lambda``, before substituting the extremes."""
    head = xi * math.sqrt(t * n_fact) * (1.0 - SMALL_BALL * xi * math.sqrt(sigma_max_Sigma) * math.sqrt(t))
    inner = ((2 * c * t + 1) + c * math.sqrt(t)) * rank_OK / (c * sigma_min_T) + m
    return head - 2.0 * math.sqrt(2.0) * norm_T / sigma_min_S * math.sqrt(inner) - nu * xi


@dataclass
class BoundReport:
    t: int
    T: int
    n_fact: int
    xi: float
    nu: float
    c: float
    eta: float
    rank_OK: int
    frob_moment: str
    frob_moment_value: float
    sigma_min_Sigma: float
    sigma_max_Sigma: float
    sigma_min_S: float
    sigma_min_T: float
    norm_T: float
    q_lower: float
    q_vacuous: bool
    width_upper: float
    delta_upper: float
    Lambda: float
    Lambda_operator: float
    vacuous: bool
    error_bound: float
    error_bound_operator: float
    xi_optimized: bool = False
    provenance: dict = field(default_factory=lambda: dict(PROVENANCE))
    notes: list = field(default_factory=lambda: list(NOTES))

    def to_dict(self):
        return asdict(self)

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def recompute_lambda(self):
        """Re-assemble ``Lambda`` from the serialized sub-quantities."""
        return assemble_lambda(self.t, self.n_fact, self.xi, self.nu, self.c, self.rank_OK,
                               self.sigma_min_Sigma, self.sigma_max_Sigma, self.frob_moment_value)


def lambda_bound(ctx, rank_OK, eta, frob_moment="paper"):
    """Assemble every quantity of the bound into a :class:`BoundReport`."""
    if rank_OK < 1:
        raise ValueError("rank_OK must be >= 1")
    if not eta >= 0:
        raise ValueError("eta must be >= 0")
    smin_S, smin_T, norm_T = operator_extremes(ctx)
    m = frob_moment_value(ctx.t, frob_moment)
    lam = assemble_lambda(ctx.t, ctx.n_fact, ctx.xi, ctx.nu, ctx.c, rank_OK,
                          ctx.sigma_min_Sigma, ctx.sigma_max_Sigma, m)
    lam_op = assemble_lambda_operator(ctx.t, ctx.n_fact, ctx.xi, ctx.nu, ctx.c, rank_OK,
                                      ctx.sigma_max_Sigma, smin_S, smin_T, norm_T, m)
    q = q_lower_bound(ctx)
    dlt = delta_bound(ctx, rank_OK, frob_moment)
    return BoundReport(
        t=ctx.t, T=ctx.T, n_fact=ctx.n_fact, xi=ctx.xi, nu=ctx.nu, c=ctx.c, eta=float(eta),
        rank_OK=int(rank_OK), frob_moment=frob_moment, frob_moment_value=m,
        sigma_min_Sigma=ctx.sigma_min_Sigma, sigma_max_Sigma=ctx.sigma_max_Sigma,
        sigma_min_S=smin_S, sigma_min_T=smin_T, norm_T=norm_T,
        q_lower=q, q_vacuous=not q > 0, width_upper=math.sqrt(dlt), delta_upper=dlt,
        Lambda=lam, Lambda_operator=lam_op, vacuous=not lam > 0,
        error_bound=2.0 * eta / lam if lam > 0 else None,
        error_bound_operator=2.0 * eta / lam_op if lam_op > 0 else None)


def xi_max(ctx):
    """Largest ``xi`` with a non-negative ``q_lower``."""
    return 1.0 / (SMALL_BALL * math.sqrt(ctx.sigma_max_Sigma) * math.sqrt(ctx.t))


def optimize_xi(ctx, rank_OK, eta, frob_moment="paper", upper=None, xtol=1e-10):
    """Maximise ``Lambda`` over ``xi`` in ``(0, upper]`` by bounded Brent search.

    ``upper`` defaults to :func:`xi_max`.  Returns the report at the optimum.
    """
    upper = xi_max(ctx) if upper is None else float(upper)
    if not upper > 0:
        raise ValueError("upper must be > 0")

    def neg(xi):
        return -lambda_bound(ctx.replace(xi=xi), rank_OK, eta, frob_moment).Lambda

    res = optimize.minimize_scalar(neg, bounds=(upper * 1e-12, upper), method="bounded",
                                   options={"xatol": xtol * upper})
    rep = lambda_bound(ctx.replace(xi=float(res.x)), rank_OK, eta, frob_moment)
    rep.xi_optimized = True
    return rep


def chi_upper_tail(nu_dof, s):
    """Bound ``exp(-s)`` on ``P(chi(nu) >= sqrt(nu) + sqrt(2 s))``."""
    if nu_dof < 1:
        raise ValueError("nu_dof must be >= 1")
    if s < 0:
        raise ValueError("s must be >= 0")
    return math.exp(-s)


def chi_small_ball(nu_dof, u):
    """Bound ``(2 / sqrt(pi nu)) (u e / 2)^{nu/4}`` on ``P(chi(nu) <= sqrt(u nu))``."""
    if nu_dof < 1:
        raise ValueError("nu_dof must be >= 1")
    if not 0 < u <= 1:
        raise ValueError("u must be in (0, 1]")
    return 2.0 / math.sqrt(math.pi * nu_dof) * (u * math.e / 2.0) ** (nu_dof / 4.0)


def chi_tail_bounds(nu_dof, s=None, u=None):
    """Upper-tail and small-ball bounds for a chi variable; either argument may be omitted."""
    out = {}
    if s is not None:
        out["upper"] = chi_upper_tail(nu_dof, s)
        out["upper_level"] = math.sqrt(nu_dof) + math.sqrt(2.0 * s)
    if u is not None:
        out["small_ball"] = chi_small_ball(nu_dof, u)
        out["small_ball_level"] = math.sqrt(u * nu_dof)
    return out


SWEEP_FIELDS = ["t", "T", "xi", "nu", "c", "rank_OK", "eta", "frob_moment", "q_lower",
                "width_upper", "delta_upper", "Lambda", "Lambda_operator", "vacuous", "error_bound"]


def sweep_csv(reports, path):
    """One CSV row per report."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_FIELDS)
        for r in reports:
            d = r.to_dict()
            w.writerow(["" if d[k] is None else (repr(d[k]) if isinstance(d[k], float) else d[k])
                        for k in SWEEP_FIELDS])
