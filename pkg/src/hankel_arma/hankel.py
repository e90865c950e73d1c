"""Past/future Hankel matrices and the structured matrices linking them.

For a trajectory of a state-space model the matrices satisfy

    X_future = O Kc X_past + O Abar0 + N E

where ``O`` stacks ``B A^i``, ``Kc = [Abar^{t-1} K, ..., Abar K, K]`` and ``N``
is unit lower triangular with ``B A^{i-j-1} K`` below the diagonal.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from hankel_arma.arma import simulate_state_space


@dataclass(frozen=True, eq=False)
class HankelSet:
    t: int
    T: int
    X_past: np.ndarray
    X_future: np.ndarray
    E: np.ndarray
    seed: int = None

    @property
    def n_cols(self):
        return self.X_past.shape[1]

    def to_manifest(self):
        return {"t": self.t, "T": self.T, "n_cols": self.n_cols, "seed": self.seed}


@dataclass(frozen=True, eq=False)
class StructuredMatrices:
    O: np.ndarray
    Kc: np.ndarray
    N: np.ndarray
    Abar0: np.ndarray

    @property
    def OK(self):
        return self.O @ self.Kc


def n_columns(T, t):
    return T - 2 * t + 2


def _hankel(v, t, start, n_cols):
    # row i, column j holds v[start + i + j]
    return np.ascontiguousarray(sliding_window_view(v[start:start + t + n_cols - 1], n_cols))


def build_hankel(traj, t):
    """Build ``X_past``, ``X_future`` and ``E`` with ``T - 2t + 2`` columns.

    ``X_past[i, j] = x_{i+j}``, ``X_future[i, j] = x_{t+i+j}`` and
    ``E[i, j] = e_{t+i+j}``.
    """
    T = traj.T
    t = int(t)
    if t < 1:
        raise ValueError("t must be >= 1")
    if not T - 2 * t + 1 > 0:
        raise ValueError(f"need T - 2t + 1 > 0, got T={T}, t={t}: T - 2t + 1 = {T - 2 * t + 1}")
    n = n_columns(T, t)
    return HankelSet(t=t, T=T,
                     X_past=_hankel(traj.x, t, 0, n),
                     X_future=_hankel(traj.x, t, t, n),
                     E=_hankel(traj.e, t, t, n),
                     seed=traj.seed)


def observability(ss, t):
    """Rows ``B A^i`` for ``i = 0..t-1``."""
    O = np.empty((t, ss.dim))
    row = ss.B[0].copy()
    for i in range(t):
        O[i] = row
        row = row @ ss.A
    return O


def controllability(ss, t):
    """Columns ``Abar^{t-1-j} K`` for ``j = 0..t-1`` (``K`` last)."""
    Kc = np.empty((ss.dim, t))
    col = ss.K[:, 0].copy()
    Abar = ss.Abar
    for j in range(t - 1, -1, -1):
        Kc[:, j] = col
        col = Abar @ col
    return Kc


def noise_matrix(ss, t):
    """Unit lower-triangular Toeplitz matrix of the Markov parameters ``B A^k K``."""
    h = np.concatenate([[1.0], ss.impulse_response(t - 1)])
    i, j = np.indices((t, t))
    return np.where(i >= j, h[np.clip(i - j, 0, t - 1)], 0.0)


def build_structured(ss, t, n_cols, states=None):
    """Structured matrices for window depth ``t`` and ``n_cols`` Hankel columns.

    Without ``states`` the columns of ``Abar0`` are ``Abar^{t+j} s0``.  With the
    recorded states ``s_0..s_T`` of the generating simulation, column ``j``
    is ``Abar^t s_j``; this is the term that makes the Hankel relation exact
    for every column (the two agree for ``j = 0``).
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    dim = ss.dim
    Abar = ss.Abar
    Abar0 = np.empty((dim, n_cols))
    if states is None:
        col = ss.s0.copy()
        for _ in range(t):
            col = Abar @ col
        for j in range(n_cols):
            Abar0[:, j] = col
            col = Abar @ col
    else:
        states = np.asarray(states)
        if states.shape[0] < n_cols or states.shape[1] != dim:
            raise ValueError("states do not match the model dimension / column count")
        P = states[:n_cols].T.copy()
        for _ in range(t):
            P = Abar @ P
        Abar0[:] = P
    return StructuredMatrices(O=observability(ss, t), Kc=controllability(ss, t),
                              N=noise_matrix(ss, t), Abar0=Abar0)


def nuisance(hs, sm):
    """``O Abar0 + N E``: everything in ``X_future`` not explained by ``O Kc X_past``."""
    if sm.N.shape[0] != hs.t or sm.Abar0.shape[1] != hs.n_cols:
        raise ValueError("structured matrices do not match the Hankel set")
    return sm.O @ sm.Abar0 + sm.N @ hs.E


def verify_hankel_identity(hs, sm):
    """Frobenius norm of ``X_future - O Kc X_past - O Abar0 - N E``."""
    if sm.O.shape[0] != hs.t or sm.Kc.shape[1] != hs.t:
        raise ValueError(f"structured matrices built for t={sm.O.shape[0]}, Hankel set has t={hs.t}")
    R = hs.X_future - sm.OK @ hs.X_past - nuisance(hs, sm)
    return float(np.linalg.norm(R))


def low_noise_hankel(ss, t, T, seed=0, noise_ratio=1e-6, stream_id=0):
    """Hankel data for the low-noise regression regime.

    ``X_past`` comes from a unit-noise simulation of ``ss`` started at zero.
    ``X_future`` is ``O Kc X_past + N E`` with the innovations matrix rescaled
    so that ``||N E||_F = noise_ratio * ||O Kc X_past||_F``.  The innovation to
    signal ratio of an ARMA trajectory does not depend on ``sigma_eps2``, so
    this is how the near noiseless case is produced.
    """
    ss0 = ss.with_initial_state(None)
    traj = simulate_state_space(ss0, T, seed=seed, stream_id=stream_id)
    hs = build_hankel(traj, t)
    sm = build_structured(ss0, t, hs.n_cols)
    signal = sm.OK @ hs.X_past
    NE = sm.N @ hs.E
    nrm = np.linalg.norm(NE)
    scale = 0.0 if noise_ratio == 0 or nrm == 0 else noise_ratio * np.linalg.norm(signal) / nrm
    return HankelSet(t=hs.t, T=hs.T, X_past=hs.X_past, X_future=signal + scale * NE,
                     E=scale * hs.E, seed=seed), sm
