"""Recover an innovations model ``(A, B, K)`` from an estimate of ``O Kc``."""

from dataclasses import dataclass
import warnings

import numpy as np

from hankel_arma.arma import StateSpaceModel


@dataclass(eq=False)
class RealizationResult:
    p_hat: int
    model: StateSpaceModel
    sv_gap: float
    fit_residual: float
    ill_conditioned: bool = False
    shift_condition: float = None

    def to_dict(self):
        return {"p_hat": self.p_hat, "sv_gap": self.sv_gap, "fit_residual": self.fit_residual,
                "ill_conditioned": self.ill_conditioned, "shift_condition": self.shift_condition,
                "model": self.model.to_dict()}


def estimate_order(singular_values, threshold=1e-6, rule="threshold"):
    """Model order from a non-increasing singular value spectrum.

    ``rule="threshold"`` counts ``sigma_i >= threshold * sigma_1``.
    ``rule="gap"`` returns the position of the largest ratio
    ``sigma_i / max(sigma_{i+1}, threshold * sigma_1)`` for ``i < t``, which
    suits noisy spectra without exact zeros.
    """
    s = np.asarray(singular_values, dtype=float)
    if np.any(np.diff(s) > 1e-12 * max(s[0] if s.size else 0.0, 1.0)):
        raise ValueError("singular values must be sorted non-increasing")
    if s.size == 0 or s[0] <= 0:
        return 0
    above = int(np.count_nonzero(s >= threshold * s[0]))
    if rule == "threshold":
        return above
    if rule == "gap":
        if above <= 1 or s.size == 1:
            return above
        # ratios sigma_i / sigma_{i+1} with the denominator floored at the
        # threshold, so an exact zero reads as a gap of 1/threshold
        floor = threshold * s[0]
        ratios = s[:-1] / np.maximum(s[1:], floor)
        return int(np.argmax(ratios[:above])) + 1
    raise ValueError(f"unknown order rule {rule!r}")


def balanced_factors(L_hat, p_hat):
    """``O = U_p S_p^{1/2}``, ``Kc = S_p^{1/2} V_p^T`` from the truncated SVD."""
    U, s, Vt = np.linalg.svd(np.asarray(L_hat, dtype=float))
    root = np.sqrt(s[:p_hat])
    return U[:, :p_hat] * root, root[:, None] * Vt[:p_hat]


def realize(L_hat, p_hat, cond_limit=1e10):
    """State-space model of order ``p_hat`` whose ``O Kc`` factors ``L_hat``.

    ``B`` is the first row of the observability factor, ``A`` solves the
    shift equation ``O[:-1] A = O[1:]`` in least squares, ``K`` is the last
    column of ``Kc`` and ``s0 = 0``.  Realizations are unique only up to a
    change of state basis; compare them through :meth:`impulse_response`.
    """
    return _realize(L_hat, p_hat, cond_limit)[0]


def _realize(L_hat, p_hat, cond_limit=1e10):
    L_hat = np.asarray(L_hat, dtype=float)
    t = L_hat.shape[0]
    if not 1 <= p_hat <= t - 1:
        raise ValueError(f"p_hat must be in [1, t-1] = [1, {t - 1}], got {p_hat}")
    O, Kc = balanced_factors(L_hat, p_hat)
    upper = O[:-1]
    cond = float(np.linalg.cond(upper))
    A = np.linalg.lstsq(upper, O[1:], rcond=None)[0]
    if not cond <= cond_limit:
        warnings.warn(f"shift system condition number {cond:.3g} exceeds {cond_limit:.3g}",
                      RuntimeWarning, stacklevel=3)
    model = StateSpaceModel(A=A, B=O[0], K=Kc[:, -1], s0=None)
    return model, O, Kc, cond


def realize_result(L_hat, p_hat=None, threshold=1e-6, rule="threshold", cond_limit=1e10):
    """Order selection plus :func:`realize`, with fit diagnostics."""
    L_hat = np.asarray(L_hat, dtype=float)
    s = np.linalg.svd(L_hat, compute_uv=False)
    if p_hat is None:
        p_hat = estimate_order(s, threshold, rule)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model, O, Kc, cond = _realize(L_hat, p_hat, cond_limit)
    gap = float(s[p_hat] / s[p_hat - 1]) if p_hat < s.size and s[p_hat - 1] > 0 else 0.0
    return RealizationResult(p_hat=p_hat, model=model, sv_gap=gap,
                             fit_residual=float(np.linalg.norm(L_hat - O @ Kc)),
                             ill_conditioned=not cond <= cond_limit, shift_condition=cond)
