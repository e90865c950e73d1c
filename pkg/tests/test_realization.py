import numpy as np
import pytest

from hankel_arma.arma import ArmaModel, StateSpaceModel, random_stable, simulate_state_space, to_state_space
from hankel_arma.hankel import build_hankel, build_structured, low_noise_hankel
from hankel_arma.realization import balanced_factors, estimate_order, realize, realize_result
from hankel_arma.solver import SolverConfig, solve_constrained, solve_ls


def test_order_clean_gap():
    assert estimate_order([5, 3, 1e-9, 1e-10], 1e-6) == 2
    assert estimate_order([5, 3, 1e-9, 1e-10], 1e-6, rule="gap") == 2


def test_order_all_zero():
    assert estimate_order([0, 0, 0]) == 0
    assert estimate_order([0, 0, 0], rule="gap") == 0


def test_order_gap_rule_on_noisy_spectrum():
    assert estimate_order([4.0, 2.0, 0.01, 0.008, 0.005], 1e-6, rule="gap") == 2
    assert estimate_order([4.0, 2.0, 0.01, 0.008, 0.005], 1e-6) == 5


def test_order_rejects_unsorted_and_unknown_rule():
    with pytest.raises(ValueError):
        estimate_order([1.0, 2.0])
    with pytest.raises(ValueError):
        estimate_order([2.0, 1.0], rule="aic")


def test_noiseless_pipeline_finds_order_two():
    ss = to_state_space(ArmaModel([1.0, -0.6], [-0.5]))
    hs, _ = low_noise_hankel(ss, 10, 2000, seed=1, noise_ratio=0.0)
    res = solve_constrained(hs, SolverConfig(eta=1e-8 * np.linalg.norm(hs.X_future)))
    assert estimate_order(res.singular_values, 1e-6) == 2


def _impulse(model, n=20):
    return model.impulse_response(n)


def test_exact_realization_reproduces_outputs():
    ss = to_state_space(random_stable(2, 1, seed=3))
    sm = build_structured(ss, 8, 1)
    model = realize(sm.OK, 2)
    noise = np.random.default_rng(0).normal(size=301)
    a = simulate_state_space(ss, 300, noise=noise)
    b = simulate_state_space(model, 300, noise=noise)
    assert np.max(np.abs(a.x - b.x)) <= 1e-6
    np.testing.assert_allclose(_impulse(model), _impulse(ss), atol=1e-10)


def test_rank_one_factorization():
    rng = np.random.default_rng(1)
    u, v = rng.normal(size=(2, 5))
    L = np.outer(u, v)
    res = realize_result(L)
    assert res.p_hat == 1 and res.model.dim == 1
    O, Kc = balanced_factors(L, 1)
    assert np.linalg.norm(O @ Kc - L) <= 1e-10


def test_ar1_end_to_end():
    ss = to_state_space(ArmaModel([0.5], []))
    hs = build_hankel(simulate_state_space(ss, 5000, seed=4), 5)
    ls = solve_ls(hs)
    res = realize_result(ls.L_hat, p_hat=1)
    assert abs(res.model.A[0, 0] - 0.5) <= 0.05


def test_refactorization_matches_truncated_svd():
    L = np.random.default_rng(2).normal(size=(7, 7))
    U, s, Vt = np.linalg.svd(L)
    for p in range(1, 7):
        O, Kc = balanced_factors(L, p)
        Lp = (U[:, :p] * s[:p]) @ Vt[:p]
        assert np.linalg.norm(O @ Kc - Lp) <= 1e-10


def test_similarity_invariance_of_impulse_response():
    ss = to_state_space(random_stable(3, 2, seed=5))
    S = np.random.default_rng(3).normal(size=(3, 3)) + 3 * np.eye(3)
    Si = np.linalg.inv(S)
    moved = StateSpaceModel(A=S @ ss.A @ Si, B=ss.B @ Si, K=S @ ss.K)
    a = realize(build_structured(ss, 9, 1).OK, 3)
    b = realize(build_structured(moved, 9, 1).OK, 3)
    np.testing.assert_allclose(_impulse(a), _impulse(b), atol=1e-8)
    np.testing.assert_allclose(_impulse(a), _impulse(ss), atol=1e-8)


def test_fit_residual_monotone_in_order():
    L = np.random.default_rng(4).normal(size=(6, 6))
    fits = [realize_result(L, p_hat=p).fit_residual for p in range(1, 6)]
    assert all(a >= b for a, b in zip(fits, fits[1:]))


def test_result_invariants():
    ss = to_state_space(random_stable(2, 1, seed=7))
    L = build_structured(ss, 6, 1).OK + 1e-3 * np.random.default_rng(5).normal(size=(6, 6))
    res = realize_result(L, p_hat=2)
    assert res.model.dim == 2
    assert 0.0 <= res.sv_gap <= 1.0
    d = res.to_dict()
    assert StateSpaceModel.from_dict(d["model"]).dim == 2


def test_full_order_rejected():
    with pytest.raises(ValueError, match="p_hat"):
        realize(np.eye(4), 4)
    with pytest.raises(ValueError):
        realize(np.eye(4), 0)


def test_ill_conditioned_shift_flagged():
    # rank 2 with the second direction living only in the last row: the shift block is rank 1
    L = np.zeros((4, 4))
    L[0, 0], L[3, 1] = 2.0, 1.0
    res = realize_result(L, p_hat=2, cond_limit=1e6)
    assert res.ill_conditioned
    with pytest.warns(RuntimeWarning):
        realize(L, 2, cond_limit=1e6)
