"""Estimators of the past-to-future operator ``L`` in ``X_future ~ L X_past``.

* :func:`solve_ls` -- minimum-norm least squares,
* :func:`solve_nuclear` -- ``1/2 ||Y - L X||_F^2 + lam ||L||_*`` by accelerated
  proximal gradient with function-value restart,
* :func:`solve_constrained` -- ``min ||L||_*`` s.t. ``||Y - L X||_F <= eta``,
  by a bracketing search on ``lam``,
* :func:`rank_penalized_oracle` -- exhaustive search for the rank-penalized
  problem at tiny sizes (test oracle only).
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np


class InfeasibleError(ValueError):
    """``eta`` is below the least-squares residual floor."""

    def __init__(self, eta, floor):
        super().__init__(f"eta={eta:.6g} is below the least-squares residual floor {floor:.6g}")
        self.eta = eta
        self.floor = floor


@dataclass(frozen=True)
class SolverConfig:
    """Knobs shared by the solvers.

    Exactly one of ``lam`` (penalized form) and ``eta`` (constrained form)
    drives a solve.
    """

    lam: float = None
    eta: float = None
    max_iters: int = 20000
    rel_tol: float = 1e-15
    opt_tol: float = 1e-7
    step_rule: str = "fixed"
    rank_threshold: float = 1e-6
    bisect_iters: int = 20
    eta_tol: float = 1e-4

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.eta is not None and self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.step_rule != "fixed":
            raise ValueError("only the fixed step 1/sigma_max(X_past)^2 is supported")


@dataclass(eq=False)
class SolverResult:
    L_hat: np.ndarray
    singular_values: np.ndarray
    residual_fro: float
    objective_trace: list = field(default_factory=list)
    iters: int = 0
    converged: bool = True
    lam: float = None
    eta: float = None
    rank_threshold: float = 1e-6
    optimality_residual: float = None

    @property
    def rank(self):
        return numerical_rank(self.singular_values, self.rank_threshold)

    @property
    def nuclear_norm(self):
        return float(np.sum(self.singular_values))

    def to_dict(self):
        return {"singular_values": [float(s) for s in self.singular_values],
                "residual_fro": self.residual_fro,
                "nuclear_norm": self.nuclear_norm,
                "rank": self.rank,
                "rank_threshold": self.rank_threshold,
                "iterations": self.iters,
                "converged": bool(self.converged),
                "lambda": self.lam,
                "eta": self.eta,
                "optimality_residual": self.optimality_residual,
                "final_objective": self.objective_trace[-1] if self.objective_trace else None}


def numerical_rank(sv, threshold=1e-6):
    """Count of singular values ``>= threshold * sv[0]`` (zero for an all-zero spectrum)."""
    sv = np.asarray(sv, dtype=float)
    if sv.size == 0 or sv[0] <= 0:
        return 0
    return int(np.count_nonzero(sv >= threshold * sv[0]))


def nuclear_norm(M):
    return float(np.sum(np.linalg.svd(M, compute_uv=False)))


def svt(M, tau):
    """Singular value thresholding: the proximal map of ``tau ||.||_*``."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    M = np.asarray(M, dtype=float)
    if tau == 0:
        return M.copy()
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    k = np.count_nonzero(s)
    return (U[:, :k] * s[:k]) @ Vt[:k]


def subgradient_distance(G, L, lam, rank_tol=1e-9):
    """Distance from ``G`` to ``lam * d||.||_*(L)``.

    With ``L = U1 S V1^T`` (``U2``, ``V2`` completing the bases) the
    subdifferential is ``U1 V1^T + U2 W V2^T`` with ``||W|| <= 1``.
    """
    U, s, Vt = np.linalg.svd(L)
    r = numerical_rank(s, rank_tol)
    Gr = U.T @ G @ Vt.T
    d2 = np.sum((Gr[:r, :r] - lam * np.eye(r)) ** 2)
    d2 += np.sum(Gr[:r, r:] ** 2) + np.sum(Gr[r:, :r] ** 2)
    if r < min(G.shape):
        sig = np.linalg.svd(Gr[r:, r:], compute_uv=False)
        d2 += np.sum(np.maximum(sig - lam, 0.0) ** 2)
    return float(math.sqrt(d2))


class _Reduced:
    """``||Y - L X||_F^2 = ||Yq - L R^T||_F^2 + floor^2`` with ``X^T = Q R``.

    All iterations then run on ``t x t`` matrices.
    """

    def __init__(self, Y, X):
        self.Y = np.asarray(Y, dtype=float)
        self.X = np.asarray(X, dtype=float)
        Q, R = np.linalg.qr(self.X.T)
        self.R = R
        self.Yq = self.Y @ Q
        self.floor2 = float(np.sum((self.Y - self.Yq @ Q.T) ** 2))
        s = np.linalg.svd(R, compute_uv=False)
        self.lip = float(s[0] ** 2) if s.size else 0.0

    def resid2(self, L):
        return float(np.sum((self.Yq - L @ self.R.T) ** 2)) + self.floor2

    def grad(self, L):
        return (L @ self.R.T - self.Yq) @ self.R

    def true_residual(self, L):
        return float(np.linalg.norm(self.Y - L @ self.X))


def _objective(red, L, lam):
    return 0.5 * red.resid2(L) + lam * nuclear_norm(L)


def _fista(red, lam, L0, max_iters, rel_tol, opt_tol, patience=50):
    """Proximal gradient with Nesterov momentum, reset whenever the objective would rise.

    Only descending iterates are accepted, so the recorded trace never
    increases.  Stops when the subgradient certificate of an accepted
    iterate falls below ``opt_tol * max(lam, 1e-6 lam_max)`` (converged), or
    when ``patience`` consecutive accepted steps each move the iterate by
    less than ``rel_tol`` relative (stalled at rounding level), or at
    ``max_iters``.
    """
    step = 1.0 / red.lip
    lam_max = float(np.linalg.norm(red.grad(np.zeros_like(L0)), 2))
    cert_tol = opt_tol * max(lam, 1e-6 * lam_max)
    x = L0.copy()
    rx = red.Yq - x @ red.R.T
    nx = nuclear_norm(x)
    Fx = 0.5 * (float(np.sum(rx ** 2)) + red.floor2) + lam * nx
    trace = [Fx]
    y = x
    theta = 1.0
    converged = False
    stalled = 0
    restarted = False
    k = 0
    for k in range(1, max_iters + 1):
        z = svt(y - step * red.grad(y), lam * step)
        rz = red.Yq - z @ red.R.T
        nz = nuclear_norm(z)
        # objective change from differences: no cancellation against ||Y||^2
        dF = 0.5 * float(np.sum((rz - rx) * (rz + rx))) + lam * (nz - nx)
        if dF <= 0 or restarted:
            # a plain step from x cannot increase F (descent lemma); dF > 0 there is rounding
            dF = min(dF, 0.0)
            restarted = False
            theta_new = 0.5 * (1 + math.sqrt(1 + 4 * theta * theta))
            y = z + ((theta - 1) / theta_new) * (z - x)
            x_prev = x
            x, rx, nx, theta = z, rz, nz, theta_new
            Fx += dF
            trace.append(Fx)
            if subgradient_distance(rx @ red.R, x, lam) <= cert_tol:
                converged = True
                break
            moved = float(np.linalg.norm(z - x_prev))
            stalled = stalled + 1 if moved <= rel_tol * max(float(np.linalg.norm(x)), 1e-300) else 0
            if stalled >= patience:
                break
        else:
            # restart: next step is a plain proximal-gradient step from x
            y = x
            theta = 1.0
            restarted = True
            trace.append(Fx)
    return x, trace, k, converged


def _result(red, L, lam, eta, trace, iters, converged, cfg):
    sv = np.linalg.svd(L, compute_uv=False)
    G = (red.Yq - L @ red.R.T) @ red.R
    opt = subgradient_distance(G, L, lam) if lam is not None else None
    return SolverResult(L_hat=L, singular_values=sv, residual_fro=red.true_residual(L),
                        objective_trace=trace, iters=iters, converged=converged,
                        lam=lam, eta=eta, rank_threshold=cfg.rank_threshold,
                        optimality_residual=opt)


def solve_ls(hs, cfg=None, cutoff=1e-12):
    """Minimum-Frobenius-norm minimizer of ``1/2 ||X_future - L X_past||_F^2``.

    Singular values of ``X_past`` below ``cutoff * sigma_max`` are treated as zero.
    """
    cfg = cfg or SolverConfig()
    Y, X = np.asarray(hs.X_future, float), np.asarray(hs.X_past, float)
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    keep = s > cutoff * s[0] if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
    L = ((Y @ Vt[keep].T) / s[keep]) @ U[:, keep].T
    res = float(np.linalg.norm(Y - L @ X))
    return SolverResult(L_hat=L, singular_values=np.linalg.svd(L, compute_uv=False),
                        residual_fro=res, objective_trace=[0.5 * res ** 2], iters=0,
                        converged=True, lam=0.0, rank_threshold=cfg.rank_threshold)


def solve_nuclear(hs, cfg, L0=None):
    """Nuclear-norm penalized least squares at ``cfg.lam``.

    Fixed step ``1 / sigma_max(X_past)^2``.  ``converged`` is set when the
    first-order optimality certificate is met; a run that stalls at rounding
    level (relative iterate change below ``cfg.rel_tol``) or exhausts
    ``cfg.max_iters`` returns with ``converged=False``.
    """
    if cfg.lam is None:
        raise ValueError("solve_nuclear needs cfg.lam")
    red = _Reduced(hs.X_future, hs.X_past)
    t = red.Y.shape[0]
    if red.lip == 0:
        res = solve_ls(hs, cfg)
        res.lam = cfg.lam
        return res
    L0 = np.zeros((t, red.X.shape[0])) if L0 is None else np.asarray(L0, dtype=float)
    L, trace, iters, conv = _fista(red, cfg.lam, L0, cfg.max_iters, cfg.rel_tol, cfg.opt_tol)
    return _result(red, L, cfg.lam, None, trace, iters, conv, cfg)


def lambda_max(hs):
    """Smallest ``lam`` for which ``L = 0`` solves the penalized problem: ``||Y X^T||``."""
    G = np.asarray(hs.X_future) @ np.asarray(hs.X_past).T
    return float(np.linalg.norm(G, 2))


def solve_constrained(hs, cfg):
    """``min ||L||_*`` subject to ``||X_future - L X_past||_F <= cfg.eta``.

    The residual of the penalized solution is non-decreasing in ``lam``; a
    bracketing search (regula falsi with the Illinois modification, on
    ``log lam``) finds the ``lam`` whose residual is within
    ``cfg.eta_tol * eta`` of ``eta``.  Solves are warm-started from the
    nearest bracket end.
    """
    eta = cfg.eta
    if eta is None:
        raise ValueError("solve_constrained needs cfg.eta")
    Y = np.asarray(hs.X_future, float)
    t = Y.shape[0]
    ls = solve_ls(hs, cfg)
    floor = ls.residual_fro
    if eta < floor * (1 - 1e-12):
        raise InfeasibleError(eta, floor)
    y_norm = float(np.linalg.norm(Y))
    lmax = lambda_max(hs)
    if eta >= y_norm or lmax == 0:
        L = np.zeros((t, np.asarray(hs.X_past).shape[0]))
        return SolverResult(L_hat=L, singular_values=np.zeros(min(L.shape)), residual_fro=y_norm,
                            objective_trace=[0.0], iters=0, converged=True, lam=lmax, eta=eta,
                            rank_threshold=cfg.rank_threshold)

    tol = cfg.eta_tol * eta
    total_iters = 0

    def run(lam, L0):
        nonlocal total_iters
        r = solve_nuclear(hs, replace(cfg, lam=lam, eta=None), L0=L0)
        total_iters += r.iters
        r.eta = eta
        return r

    # upper end: lam_max gives L = 0, residual ||Y|| > eta
    u_hi, g_hi, sol_hi = math.log(lmax), y_norm - eta, None
    lam = lmax * 1e-8
    sol_lo = run(lam, ls.L_hat)
    while sol_lo.residual_fro > eta and lam > lmax * 1e-20:
        u_hi, g_hi, sol_hi = math.log(lam), sol_lo.residual_fro - eta, sol_lo
        lam *= 1e-4
        sol_lo = run(lam, ls.L_hat)
    if sol_lo.residual_fro > eta:
        # eta sits within rounding of the floor: the least-squares point is the answer
        ls.eta, ls.converged = eta, abs(floor - eta) <= tol
        return ls
    u_lo, g_lo = math.log(lam), sol_lo.residual_fro - eta
    best = sol_lo
    if abs(g_lo) <= tol:
        best.iters = total_iters
        return best
    side = 0
    for _ in range(cfg.bisect_iters):
        # Illinois step on g(u) = residual(exp(u)) - eta, bracket [u_lo, u_hi]
        u = (u_lo * g_hi - u_hi * g_lo) / (g_hi - g_lo)
        if not u_lo < u < u_hi:
            u = 0.5 * (u_lo + u_hi)
        warm = sol_lo.L_hat if sol_hi is None or u - u_lo < u_hi - u else sol_hi.L_hat
        sol = run(math.exp(u), warm)
        g = sol.residual_fro - eta
        if abs(g) <= tol:
            sol.iters = total_iters
            return sol
        if g < 0:
            u_lo, g_lo, sol_lo, best = u, g, sol, sol
            if side == -1:
                g_hi *= 0.5
            side = -1
        else:
            u_hi, g_hi, sol_hi = u, g, sol
            if side == 1:
                g_lo *= 0.5
            side = 1
    best.converged = False
    best.iters = total_iters
    return best


def rank_objective(Y, X, L, lam, threshold=1e-10):
    """``1/2 ||Y - L X||_F^2 + lam * rank(L)``."""
    sv = np.linalg.svd(L, compute_uv=False)
    return 0.5 * float(np.sum((Y - L @ X) ** 2)) + lam * numerical_rank(sv, threshold)


def _best_rank_r(Y, X, r, n_als=500):
    Xp = np.linalg.pinv(X)
    L_ls = Y @ Xp
    U, s, Vt = np.linalg.svd(L_ls)
    candidates = [(U[:, :r] * s[:r]) @ Vt[:r]]
    # whitened reduced-rank regression start
    Q, R = np.linalg.qr(X.T)
    if np.linalg.matrix_rank(R) == R.shape[0] == R.shape[1]:
        Uw, sw, Vwt = np.linalg.svd(Y @ Q)
        M = (Uw[:, :r] * sw[:r]) @ Vwt[:r]
        candidates.append(np.linalg.solve(R, M.T).T)
    best, best_val = None, np.inf
    for L in candidates:
        Uc, sc, Vct = np.linalg.svd(L)
        Uf, Wf = Uc[:, :r] * sc[:r], Vct[:r]
        prev = np.inf
        for _ in range(n_als):
            Wf = np.linalg.pinv(Uf) @ Y @ Xp
            Uf = Y @ np.linalg.pinv(Wf @ X)
            val = 0.5 * float(np.sum((Y - Uf @ Wf @ X) ** 2))
            if prev - val <= 1e-15 * max(val, 1e-300):
                break
            prev = val
        Lr = Uf @ Wf
        val = 0.5 * float(np.sum((Y - Lr @ X) ** 2))
        if val < best_val:
            best, best_val = Lr, val
    return best, best_val


def rank_penalized_oracle(Y, X, lam):
    """Global minimizer of ``1/2 ||Y - L X||_F^2 + lam * rank(L)`` for ``n <= 4``.

    Enumerates ranks; each fixed-rank fit starts from the truncated
    least-squares solution (and the whitened reduced-rank solution) and is
    refined by alternating least squares.
    """
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    n = Y.shape[0]
    if n > 4:
        raise ValueError(f"rank oracle limited to n <= 4, got n={n}")
    best_L = np.zeros((n, X.shape[0]))
    best_val = 0.5 * float(np.sum(Y ** 2))
    for r in range(1, n + 1):
        if r == n:
            L = Y @ np.linalg.pinv(X)
            val = 0.5 * float(np.sum((Y - L @ X) ** 2))
        else:
            L, val = _best_rank_r(Y, X, r)
        val += lam * r
        if val < best_val:
            best_L, best_val = L, val
    return best_L
