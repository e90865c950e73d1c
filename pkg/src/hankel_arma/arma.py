"""ARMA and innovations-form state-space models.

Conventions
-----------
An ARMA(p, q) process obeys

    x_t = a_1 x_{t-1} + ... + a_p x_{t-p} + e_t + b_1 e_{t-1} + ... + b_q e_{t-q}

with i.i.d. N(0, sigma_eps2) innovations.  The innovations state-space form is

    s_{t+1} = A s_t + K e_t,     x_t = B s_t + e_t,

and ``Abar = A - K B`` drives the one-step predictor
``s_{t+1} = Abar s_t + K x_t``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, signal

from hankel_arma._rng import stream


class NonStationaryError(ValueError):
    """Raised when an ARMA model has an autoregressive root on or inside the unit circle."""


class QuadratureError(RuntimeError):
    """Raised when the autocovariance quadrature does not reach its tolerance."""


def _readonly(a, ndim=None):
    a = np.array(a, dtype=float)
    if ndim is not None and a.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


def _companion(coefs):
    r = len(coefs)
    C = np.zeros((r, r))
    if r:
        C[0, :] = coefs
        C[1:, :-1] = np.eye(r - 1)
    return C


@dataclass(frozen=True)
class ArmaModel:
    """ARMA(p, q) model with Gaussian innovations.

    Parameters
    ----------
    a : sequence of float
        Autoregressive coefficients ``a_1, ..., a_p``.
    b : sequence of float
        Moving-average coefficients ``b_1, ..., b_q``.
    sigma_eps2 : float
        Innovation variance.
    """

    a: tuple = ()
    b: tuple = ()
    sigma_eps2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in np.ravel(self.a)))
        object.__setattr__(self, "b", tuple(float(v) for v in np.ravel(self.b)))
        object.__setattr__(self, "sigma_eps2", float(self.sigma_eps2))
        if not self.sigma_eps2 > 0:
            raise ValueError("sigma_eps2 must be positive")
        if not all(np.isfinite(self.a + self.b)):
            raise ValueError("coefficients must be finite")

    @property
    def p(self):
        return len(self.a)

    @property
    def q(self):
        return len(self.b)

    @property
    def order(self):
        """State dimension ``max(p, q)`` of the innovations realization."""
        return max(self.p, self.q)

    def ar_poly(self):
        """Coefficients of ``phi(z) = 1 - a_1 z - ... - a_p z^p`` in increasing powers."""
        return np.concatenate([[1.0], -np.asarray(self.a)])

    def ma_poly(self):
        """Coefficients of ``theta(z) = 1 + b_1 z + ... + b_q z^q`` in increasing powers."""
        return np.concatenate([[1.0], np.asarray(self.b)])

    def ar_spectral_radius(self):
        if self.p == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(_companion(self.a)))))

    def is_stationary(self):
        return self.ar_spectral_radius() < 1.0

    def check_stationary(self):
        rho = self.ar_spectral_radius()
        if not rho < 1.0:
            raise NonStationaryError(
                f"AR companion spectral radius {rho:.6g} >= 1; model is not stationary")

    def to_dict(self):
        return {"p": self.p, "q": self.q, "a": list(self.a), "b": list(self.b),
                "sigma_eps2": self.sigma_eps2}

    @classmethod
    def from_dict(cls, d):
        a = list(d.get("a", []))
        b = list(d.get("b", []))
        if "p" in d and int(d["p"]) != len(a):
            raise ValueError(f"p={d['p']} does not match len(a)={len(a)}")
        if "q" in d and int(d["q"]) != len(b):
            raise ValueError(f"q={d['q']} does not match len(b)={len(b)}")
        return cls(a=a, b=b, sigma_eps2=d.get("sigma_eps2", 1.0))


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Single-output innovations-form model ``(A, B, K, s0)``.

    ``A`` is ``dim x dim``, ``B`` is ``1 x dim``, ``K`` is ``dim x 1`` and ``s0``
    is the initial state.  Arrays are stored read-only.
    """

    A: np.ndarray
    B: np.ndarray
    K: np.ndarray
    s0: np.ndarray = None
    sigma_eps2: float = 1.0

    def __post_init__(self):
        A = _readonly(np.atleast_2d(self.A) if np.size(self.A) else np.zeros((0, 0)), 2)
        dim = A.shape[0]
        if A.shape != (dim, dim):
            raise ValueError(f"A must be square, got {A.shape}")
        B = _readonly(np.reshape(self.B, (1, dim)))
        K = _readonly(np.reshape(self.K, (dim, 1)))
        s0 = np.zeros(dim) if self.s0 is None else np.reshape(self.s0, (dim,))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "s0", _readonly(s0))
        object.__setattr__(self, "sigma_eps2", float(self.sigma_eps2))
        if not self.sigma_eps2 > 0:
            raise ValueError("sigma_eps2 must be positive")

    @property
    def dim(self):
        return self.A.shape[0]

    @property
    def Abar(self):
        """Predictor matrix ``A - K B``."""
        return self.A - self.K @ self.B

    def abar_spectral_radius(self):
        if self.dim == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(self.Abar))))

    @property
    def is_stable_predictor(self):
        return self.abar_spectral_radius() < 1.0

    def with_initial_state(self, s0):
        return StateSpaceModel(self.A, self.B, self.K, s0, self.sigma_eps2)

    def impulse_response(self, n):
        """Markov parameters ``B A^k K`` for ``k = 0..n-1``."""
        h = np.empty(n)
        v = self.K
        for k in range(n):
            h[k] = (self.B @ v).item() if self.dim else 0.0
            v = self.A @ v
        return h

    def to_dict(self):
        return {"dim": self.dim,
                "A": self.A.ravel().tolist(), "B": self.B.ravel().tolist(),
                "K": self.K.ravel().tolist(), "s0": self.s0.tolist(),
                "sigma_eps2": self.sigma_eps2}

    @classmethod
    def from_dict(cls, d):
        dim = int(d["dim"])
        return cls(A=np.reshape(d["A"], (dim, dim)) if dim else np.zeros((0, 0)),
                   B=d["B"], K=d["K"], s0=d.get("s0"),
                   sigma_eps2=d.get("sigma_eps2", 1.0))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Observations ``x_0..x_T`` with the innovations that produced them.

    ``states`` holds ``s_0..s_T`` when the trajectory came from a state-space
    simulation, and is ``None`` otherwise.
    """

    x: np.ndarray
    e: np.ndarray
    seed: int = None
    states: np.ndarray = field(default=None)

    def __post_init__(self):
        x = _readonly(self.x, 1)
        e = _readonly(self.e, 1)
        if len(x) != len(e) or len(x) < 1:
            raise ValueError("x and e must have equal, non-zero length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "e", e)
        if self.states is not None:
            object.__setattr__(self, "states", _readonly(self.states, 2))

    @property
    def T(self):
        return len(self.x) - 1


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Toeplitz covariance of ``[x_0, ..., x_{t-1}]`` with its square roots
    and the essential extrema ``m``, ``M`` of the spectral density."""

    Sigma: np.ndarray
    sqrtSigma: np.ndarray
    invSqrtSigma: np.ndarray
    m: float
    M: float
    autocov: np.ndarray

    @property
    def t(self):
        return self.Sigma.shape[0]

    @property
    def eigenvalues(self):
        return np.linalg.eigvalsh(self.Sigma)


def draw_noise(T, sigma_eps2, seed, stream_id=0):
    """``T + 1`` i.i.d. N(0, sigma_eps2) draws from the ``(seed, stream_id)`` stream."""
    return np.sqrt(sigma_eps2) * stream(seed, stream_id).standard_normal(T + 1)


def simulate(model, T, seed=0, noise=None, stream_id=0):
    """Simulate ``x_0..x_T`` from the ARMA recursion.

    Pre-sample values ``x_0..x_{r-1}`` (``r = max(p, q)``) are set equal to the
    innovations; from ``t = r`` on the recursion holds exactly.  ``noise``
    replaces the random draw when given (length ``T + 1``).
    """
    model.check_stationary()
    r = model.order
    if T < r:
        raise ValueError(f"T={T} is shorter than max(p, q)={r}")
    if noise is None:
        e = draw_noise(T, model.sigma_eps2, seed, stream_id)
    else:
        e = np.asarray(noise, dtype=float)
        if e.shape != (T + 1,):
            raise ValueError(f"noise must have length T+1={T + 1}")
    x = np.empty(T + 1)
    x[:r] = e[:r]
    if T + 1 > r:
        num, den = model.ma_poly(), model.ar_poly()
        if r:
            zi = signal.lfiltic(num, den, y=x[r - 1::-1], x=e[r - 1::-1])
            x[r:], _ = signal.lfilter(num, den, e[r:], zi=zi)
        else:
            x[:] = e
    return Trajectory(x=x, e=e, seed=seed)


def simulate_state_space(ss, T, seed=0, noise=None, stream_id=0):
    """Run ``s_{t+1} = A s_t + K e_t``, ``x_t = B s_t + e_t`` from ``ss.s0``.

    The returned trajectory records the states ``s_0..s_T`` (shape ``(T+1, dim)``).
    """
    if noise is None:
        e = draw_noise(T, ss.sigma_eps2, seed, stream_id)
    else:
        e = np.asarray(noise, dtype=float)
        if e.shape != (T + 1,):
            raise ValueError(f"noise must have length T+1={T + 1}")
    dim = ss.dim
    S = np.empty((T + 1, dim))
    x = np.empty(T + 1)
    A, B, K = ss.A, ss.B[0], ss.K[:, 0]
    s = ss.s0.copy()
    for k in range(T + 1):
        S[k] = s
        x[k] = B @ s + e[k]
        s = A @ s + K * e[k]
    return Trajectory(x=x, e=e, seed=seed, states=S)


def to_state_space(model, s0=None):
    """Innovations realization of dimension ``max(p, q)`` (observer companion form).

    ``A`` has ``a`` (zero padded) down its first column and ones on the
    superdiagonal, ``B = e_1^T`` and ``K = a + b`` (both zero padded), so
    that ``Abar`` is the companion matrix of the moving-average polynomial.
    """
    model.check_stationary()
    r = model.order
    a = np.zeros(r)
    b = np.zeros(r)
    a[:model.p] = model.a
    b[:model.q] = model.b
    A = np.zeros((r, r))
    if r:
        A[:, 0] = a
        A[:-1, 1:] += np.eye(r - 1)
    B = np.zeros((1, r))
    if r:
        B[0, 0] = 1.0
    K = (a + b).reshape(r, 1)
    return StateSpaceModel(A=A, B=B, K=K, s0=s0, sigma_eps2=model.sigma_eps2)


def state_from_history(model, x, e, t0):
    """State at time ``t0`` of the companion realization given the ARMA past.

    With this state, :func:`simulate_state_space` continues an ARMA trajectory
    from index ``t0 >= max(p, q)`` without any transient.
    """
    r = model.order
    if t0 < r:
        raise ValueError("t0 must be at least max(p, q)")
    a = np.zeros(r)
    b = np.zeros(r)
    a[:model.p] = model.a
    b[:model.q] = model.b
    s = np.zeros(r)
    for i in range(r):
        for k in range(i, r):
            lag = t0 - 1 - (k - i)
            s[i] += a[k] * x[lag] + b[k] * e[lag]
    return s


def spectral_density(model, nu):
    """``f(nu) = sigma_eps2 / (2 pi) |theta(e^{i nu}) / phi(e^{i nu})|^2``."""
    model.check_stationary()
    nu = np.asarray(nu, dtype=float)
    z = np.exp(1j * nu)
    num = np.polynomial.polynomial.polyval(z, model.ma_poly())
    den = np.polynomial.polynomial.polyval(z, model.ar_poly())
    if np.any(den == 0):
        raise NonStationaryError("phi vanishes on the unit circle")
    return model.sigma_eps2 / (2 * np.pi) * np.abs(num / den) ** 2


def autocovariance(model, max_lag, tol=1e-10):
    """``gamma(0..max_lag)`` by adaptive quadrature of ``f(nu) cos(k nu)``.

    Raises :class:`QuadratureError` if QUADPACK's error estimate exceeds ``tol``.
    """
    model.check_stationary()
    f = lambda nu: spectral_density(model, nu)
    gam = np.empty(max_lag + 1)
    for k in range(max_lag + 1):
        if k == 0:
            val, err = integrate.quad(f, 0.0, np.pi, epsabs=tol / 4, epsrel=0, limit=500)
        else:
            val, err = integrate.quad(f, 0.0, np.pi, weight="cos", wvar=k,
                                      epsabs=tol / 4, epsrel=0, limit=500)
        # f is even: integral over [-pi, pi] is twice the half-range one
        val, err = 2 * val, 2 * err
        if not np.isfinite(val) or err > tol:
            raise QuadratureError(
                f"autocovariance lag {k}: quadrature error estimate {err:.3g} > {tol:.3g}")
        gam[k] = val
    return gam


def density_extrema(model, n_grid=2 ** 14):
    """Infimum and supremum of the spectral density over ``[0, pi]``.

    Dense grid search followed by bounded scalar refinement around the best
    grid points.
    """
    nu = np.linspace(0.0, np.pi, n_grid + 1)
    f = spectral_density(model, nu)
    h = nu[1] - nu[0]

    def refine(i, sign):
        lo, hi = max(nu[i] - h, 0.0), min(nu[i] + h, np.pi)
        res = optimize.minimize_scalar(lambda v: sign * spectral_density(model, v),
                                       bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        return sign * res.fun

    i_min, i_max = int(np.argmin(f)), int(np.argmax(f))
    m = min(f[i_min], refine(i_min, 1.0))
    M = max(f[i_max], refine(i_max, -1.0))
    return float(m), float(M)


def _sym_power(S, power):
    w, V = np.linalg.eigh(S)
    if np.any(w <= 0):
        raise np.linalg.LinAlgError("covariance is not positive definite")
    R = (V * w ** power) @ V.T
    return (R + R.T) / 2


def covariance_model(model, t):
    """Covariance of ``[x_0, ..., x_{t-1}]`` for the stationary process."""
    if t < 1:
        raise ValueError("t must be >= 1")
    gam = autocovariance(model, t - 1)
    idx = np.arange(t)
    Sigma = gam[np.abs(idx[:, None] - idx[None, :])]
    m, M = density_extrema(model)
    return CovarianceModel(Sigma=_readonly(Sigma), sqrtSigma=_readonly(_sym_power(Sigma, 0.5)),
                           invSqrtSigma=_readonly(_sym_power(Sigma, -0.5)),
                           m=m, M=M, autocov=_readonly(gam))


def _poly_from_reciprocal_roots(roots):
    c = np.real(np.poly(roots)) if len(roots) else np.array([1.0])
    return c[1:]


def _draw_roots(n, rng, max_modulus, min_modulus):
    roots = []
    while len(roots) < n:
        mod = rng.uniform(min_modulus, max_modulus)
        if n - len(roots) >= 2 and rng.random() < 0.5:
            ang = rng.uniform(0.1, np.pi - 0.1)
            roots += [mod * np.exp(1j * ang), mod * np.exp(-1j * ang)]
        else:
            roots.append(mod * rng.choice([-1.0, 1.0]))
    return np.array(roots)


def random_stable(p, q, seed, max_modulus=0.9, min_modulus=0.2, sigma_eps2=1.0, stream_id=0):
    """Random stationary, invertible ARMA(p, q) model.

    Reciprocal roots of both polynomials are drawn with modulus in
    ``[min_modulus, max_modulus]``, so the AR companion and the predictor
    matrix ``Abar`` both have spectral radius at most ``max_modulus``.
    """
    rng = stream(seed, stream_id)
    ar = _poly_from_reciprocal_roots(_draw_roots(p, rng, max_modulus, min_modulus))
    ma = _poly_from_reciprocal_roots(_draw_roots(q, rng, max_modulus, min_modulus))
    return ArmaModel(a=-ar, b=ma, sigma_eps2=sigma_eps2)
