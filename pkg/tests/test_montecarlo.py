import math

import numpy as np
import pytest

from hankel_arma.arma import ArmaModel
from hankel_arma.montecarlo import (DescentConeSpec, McConfig, ScaleGuardError, calibrate_eta, dist_to_polar,
                                    mc_chi_tails, mc_estimation_experiment, mc_H_norms, mc_sigma_H,
                                    mc_small_ball, mc_width, polar_objective)
from hankel_arma.theory import TheoryContext, delta_bound, sigma_H_spectrum

cp = pytest.importorskip("cvxpy")


# covariance of vec(H)

def test_sigma_H_smallest_window():
    r = mc_sigma_H(1, 3, 20000, seed=0)
    assert r["n_terms"] == 2
    assert abs(r["diag_mean"] - 2) <= 3 * math.sqrt(2 * 3) / math.sqrt(20000)


def test_sigma_H_t2_T9():
    r = mc_sigma_H(2, 9, 100_000, seed=1)
    n = sigma_H_spectrum(2, 9)
    assert r["max_offdiag"] <= 4 * math.sqrt(n * (1 + n)) / math.sqrt(100_000)
    assert abs(r["diag_mean"] - n) <= 0.02 * n
    assert r["max_dev"] <= r["offdiag_tolerance"]


def test_sigma_H_single_replicate_is_rank_one():
    r = mc_sigma_H(2, 7, 1, seed=2)
    assert r["degenerate"]
    assert np.linalg.matrix_rank(r["cov"]) == 1


def test_sigma_H_scale_guard():
    with pytest.raises(ScaleGuardError):
        mc_sigma_H(5, 100, 10)


def test_config_validation():
    with pytest.raises(ValueError):
        McConfig(replicates=0)
    with pytest.raises(ValueError):
        McConfig(replicates=5, workers=0)


# descent cone geometry

def test_cone_spec_rejects_non_orthogonal():
    U = np.eye(3)
    with pytest.raises(ValueError):
        DescentConeSpec(U1=U[:, :1] * 2, U2=U[:, 1:], V1=U[:, :1], V2=U[:, 1:], r=1)
    with pytest.raises(ValueError):
        DescentConeSpec(U1=U[:, :1], U2=U[:, 1:], V1=U[:, :1], V2=U[:, 1:], r=2)


def test_cone_from_matrix_rank():
    rng = np.random.default_rng(0)
    L = rng.normal(size=(5, 2)) @ rng.normal(size=(2, 5))
    assert DescentConeSpec.from_matrix(L).r == 2


def test_full_rank_cone_is_a_ray():
    cone = DescentConeSpec.random(4, 4, seed=1)
    G = np.random.default_rng(2).normal(size=(4, 4))
    U = np.hstack([cone.U1, cone.U2])
    V = np.hstack([cone.V1, cone.V2])
    direction = U @ V.T / 2.0  # unit Frobenius norm
    tau = max(np.sum(G * direction), 0.0)
    assert dist_to_polar(G, cone) == pytest.approx(np.linalg.norm(G - tau * direction), rel=1e-12)


def test_point_in_polar_has_zero_distance():
    cone = DescentConeSpec.random(5, 2, seed=3)
    G = 2 * (cone.U1 @ cone.V1.T + 0.5 * cone.U2 @ cone.V2.T)
    assert dist_to_polar(G, cone) <= 1e-12


def test_zero_rank_cone_has_zero_distance():
    cone = DescentConeSpec.random(4, 0, seed=0)
    assert dist_to_polar(np.random.default_rng(1).normal(size=(4, 4)), cone) == 0.0


@pytest.mark.parametrize("seed", range(3))
def test_distance_matches_projection_program(seed):
    t, r = 5, 2
    cone = DescentConeSpec.random(t, r, seed=seed)
    G = np.random.default_rng(10 + seed).normal(size=(t, t))
    Z = cp.Variable((t, t))
    tau = cp.Variable(nonneg=True)
    cons = [cone.U1.T @ Z @ cone.V1 == tau * np.eye(r),
            cone.U1.T @ Z @ cone.V2 == 0,
            cone.U2.T @ Z @ cone.V1 == 0,
            cp.sigma_max(cone.U2.T @ Z @ cone.V2) <= tau]
    prob = cp.Problem(cp.Minimize(cp.norm(G - Z, "fro")), cons)
    prob.solve(solver="CLARABEL")
    assert dist_to_polar(G, cone) == pytest.approx(prob.value, abs=1e-4)


def test_polar_objective_unimodal():
    rng = np.random.default_rng(4)
    grid = np.linspace(0, 6, 601)
    for seed in range(20):
        t = int(rng.integers(2, 8))
        r = int(rng.integers(1, t + 1))
        cone = DescentConeSpec.random(t, r, seed=seed)
        G = rng.normal(size=(t, t))
        vals = np.array([polar_objective(x, G, cone) for x in grid])
        d = np.diff(vals)
        # once the objective starts increasing it never decreases again
        first_up = np.argmax(d > 1e-12) if np.any(d > 1e-12) else d.size
        assert np.all(d[first_up:] >= -1e-12)
        assert dist_to_polar(G, cone) ** 2 <= vals.min() + 1e-10


# width and statistical dimension

def test_width_zero_rank():
    w = mc_width(DescentConeSpec.random(4, 0, seed=0), 100, seed=0)
    assert w["width"] == 0.0 and w["dimension"] == 0.0


def test_width_dimension_sandwich():
    for t, r in [(2, 1), (4, 1), (4, 2), (6, 2)]:
        w = mc_width(DescentConeSpec.random(t, r, seed=t + r), 5000, seed=1)
        assert w["width"] ** 2 <= w["dimension"] + 3 * w["dimension_se"]
        assert w["dimension"] <= w["width"] ** 2 + 1 + 3 * (w["dimension_se"] + 2 * w["width"] * w["width_se"])


def test_width_t6_r1_window():
    w = mc_width(DescentConeSpec.random(6, 1, seed=0), 10000, seed=0)
    assert 1 * (2 * 6 - 1) * 0.1 <= w["dimension"] <= 36
    # pilot value, seed 0, 10^4 draws
    assert w["dimension"] == pytest.approx(18.057158092700366, rel=1e-12)


def test_width_dimension_below_closed_form():
    ctx = TheoryContext(t=6, T=100, Sigma=np.eye(6))
    w = mc_width(DescentConeSpec.random(6, 2, seed=0), 5000, seed=2)
    assert w["dimension"] - 3 * w["dimension_se"] <= delta_bound(ctx, 2)


def test_width_scale_guard():
    with pytest.raises(ScaleGuardError):
        mc_width(DescentConeSpec.random(9, 1, seed=0), 10)


def test_width_deterministic():
    cone = DescentConeSpec.random(5, 2, seed=4)
    assert mc_width(cone, 12000, seed=9) == mc_width(cone, 12000, seed=9)


# Gaussian matrix moments

@pytest.mark.parametrize("t", [2, 4, 8])
def test_gordon_bound(t):
    r = mc_H_norms(t, 20000, seed=t)
    assert r["mean_op"] <= 2 * math.sqrt(t) + 3 * r["mean_op_se"]


def test_frobenius_moment_is_t_squared():
    r = mc_H_norms(4, 20000, seed=5)
    assert abs(r["mean_fro2"] - 16) <= 3 * r["mean_fro2_se"]
    assert abs(r["mean_fro2"] - r["fro2_paper"]) > 3 * r["mean_fro2_se"]


def test_spectral_second_moment_concentration_c1():
    r = mc_H_norms(4, 20000, seed=6, c=1.0)
    assert r["mean_op2"] <= r["concentration_rhs"]


def test_H_norms_scale_guard():
    with pytest.raises(ScaleGuardError):
        mc_H_norms(17, 10)


def test_small_ball_zero_level():
    assert mc_small_ball(np.eye(3), 0.0, 100, seed=0)[0] == 1.0


@pytest.mark.parametrize("nu", [1, 2, 4, 8])
def test_chi_tails_dominated(nu):
    for row in mc_chi_tails(nu, 200_000, seed=nu):
        assert row["freq"] <= row["bound"] + 3 * row["se"]


# estimation experiment

def test_zero_noise_experiment_recovers_OK():
    res = mc_estimation_experiment(ArmaModel([1.0, -0.6], [-0.5]), 6, 1000, 2.0, 10, seed=1,
                                   regime="low_noise", noise_ratio=1e-12, calibration_replicates=20)
    assert res.column("rel_error").max() <= 1e-6


def test_median_error_decreases_with_T():
    med = [mc_estimation_experiment(ArmaModel([0.5], []), 6, T, 2.0, 40, seed=3,
                                    calibration_replicates=100).summary["median_error"]
           for T in (500, 2000, 8000)]
    assert med[0] > med[1] > med[2]


def test_event_failure_rate_within_budget():
    res = mc_estimation_experiment(ArmaModel([0.5], []), 6, 1000, 2.0, 100, seed=5, calibration_replicates=200)
    s = res.summary
    assert s["event_failure_rate"] <= s["event_failure_budget"] + 3 * s["event_failure_se"]
    # infeasible replicates are counted, not dropped
    assert len(res.rows) == 100
    assert s["infeasible"] == int(res.column("infeasible").sum())


def test_calibrated_eta_is_quantile():
    eta, norms = calibrate_eta(ArmaModel([0.5], []), 4, 300, 2.0, replicates=50, seed=0)
    assert norms.size == 50
    assert eta == np.quantile(norms, 1 - math.exp(-2.0))
    assert np.mean(norms <= eta) >= 1 - math.exp(-2.0) - 1 / norms.size


def test_experiment_independent_of_workers(tmp_path):
    kw = dict(model=ArmaModel([0.6], [0.2]), t=4, T=400, nu=2.0, replicates=6, seed=2, calibration_replicates=20)
    a = mc_estimation_experiment(workers=1, **kw)
    b = mc_estimation_experiment(workers=2, **kw)
    a.to_csv(tmp_path / "a.csv")
    b.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert a.to_json() == b.to_json()
    assert (tmp_path / "a.csv").read_text().startswith("# replicate:")


def test_experiment_scale_guard():
    with pytest.raises(ScaleGuardError):
        mc_estimation_experiment(ArmaModel([0.5], []), 11, 1000, 2.0, 10)
    with pytest.raises(ScaleGuardError):
        mc_estimation_experiment(ArmaModel([0.5], []), 5, 20000, 2.0, 10)
    with pytest.raises(ScaleGuardError):
        mc_estimation_experiment(ArmaModel([0.5], []), 5, 1000, 2.0, 201)
