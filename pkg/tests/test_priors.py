"""Prior-model tests: samplers, norms, projections, proxes, generative maps."""

import json

import numpy as np
import pytest
from scipy.optimize import minimize

from qcslab.priors import (
    GenerativeMap,
    LowRankPrior,
    PriorError,
    SparsePrior,
    clamp_to_ball,
    generative_backward,
    generative_forward,
    generative_map_from_json,
    generative_map_to_json,
    make_generative_map,
    norm_f,
    project_l1_ball,
    project_l1_ball_cols,
    project_norm_ball,
    project_norm_ball_cols,
    prox_norm,
    prox_norm_cols,
    random_generative_map,
    sample_lowrank,
    sample_sparse,
    soft_threshold,
)


def qp_l1_projection_oracle(x, radius):
    """Brute-force l1-ball projection: QP over split positive/negative parts."""
    n = x.size

    def objective(uw):
        z = uw[:n] - uw[n:]
        return 0.5 * np.sum((z - x) ** 2)

    cons = [{"type": "ineq", "fun": lambda uw: radius - np.sum(uw)}]
    bounds = [(0, None)] * (2 * n)
    start = np.concatenate([np.maximum(x, 0), np.maximum(-x, 0)])
    start *= radius / max(start.sum(), radius)
    res = minimize(objective, start, bounds=bounds, constraints=cons, method="SLSQP",
                   options={"maxiter": 200, "ftol": 1e-14})
    return res.x[:n] - res.x[n:]


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def test_sample_sparse_support_size():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = sample_sparse(10, 3, rng)
        assert np.count_nonzero(x) == 3
    assert np.count_nonzero(sample_sparse(3, 1, rng)) == 1
    assert np.count_nonzero(sample_sparse(5, 5, rng)) == 5


def test_sample_sparse_marginal_frequency():
    rng = np.random.default_rng(1)
    hits = np.zeros(6)
    draws = 100_000
    for _ in range(draws):
        hits += sample_sparse(6, 2, rng) != 0
    freq = hits / draws
    assert np.all(np.abs(freq - 2 / 6) <= 0.01)


def test_sample_sparse_invalid():
    rng = np.random.default_rng(0)
    with pytest.raises(PriorError):
        sample_sparse(3, 4, rng)
    with pytest.raises(PriorError):
        sample_sparse(3, 0, rng)


def test_sample_lowrank_singular_values():
    rng = np.random.default_rng(2)
    x = sample_lowrank(6, 5, 2, rng)
    sv = np.linalg.svd(x, compute_uv=False)
    assert np.allclose(sv[:2], 1.0, atol=1e-10)
    assert np.allclose(sv[2:], 0.0, atol=1e-10)
    assert np.linalg.matrix_rank(x) == 2
    assert np.linalg.norm(x, "fro") == pytest.approx(np.sqrt(2), abs=1e-10)


def test_sample_lowrank_rank_one_unit():
    rng = np.random.default_rng(3)
    x = sample_lowrank(1, 1, 1, rng)
    assert abs(abs(x[0, 0]) - 1.0) <= 1e-12


def test_sample_lowrank_invalid():
    with pytest.raises(PriorError):
        sample_lowrank(3, 2, 3, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


def test_norm_f_l1_frozen():
    assert norm_f(SparsePrior(n=3, s=2), np.array([1.0, -2.0, 0.0])) == 3.0


def test_norm_f_nuclear_identity():
    prior = LowRankPrior(p=2, q=2, r=2)
    assert norm_f(prior, np.eye(2).reshape(-1)) == pytest.approx(2.0, abs=1e-12)


def test_norm_f_nuclear_vs_eig_oracle():
    rng = np.random.default_rng(4)
    prior = LowRankPrior(p=4, q=3, r=3)
    for _ in range(20):
        a = rng.normal(size=(4, 3))
        # independent oracle: nuclear norm = sum of sqrt eigenvalues of A^T A
        expected = np.sqrt(np.maximum(np.linalg.eigvalsh(a.T @ a), 0.0)).sum()
        assert norm_f(prior, a.reshape(-1)) == pytest.approx(expected, abs=1e-10)


def test_norm_f_unsupported_prior():
    gmap = make_generative_map([np.eye(2)])
    from qcslab.priors import GenerativePrior

    with pytest.raises(PriorError):
        norm_f(GenerativePrior(gmap=gmap), np.zeros(2))


# ---------------------------------------------------------------------------
# l1 projection and prox
# ---------------------------------------------------------------------------


def test_project_l1_feasible_is_identity():
    x = np.array([0.2, -0.3, 0.1])
    assert np.array_equal(project_l1_ball(x, 1.0), x)


def test_project_l1_single_coordinate():
    assert np.allclose(project_l1_ball(np.array([3.0, 0.0]), 1.0), [1.0, 0.0])


def test_project_l1_zero_radius():
    assert np.all(project_l1_ball(np.array([1.0, -2.0]), 0.0) == 0)
    with pytest.raises(PriorError):
        project_l1_ball(np.array([1.0]), -0.5)


def test_project_l1_matches_qp_oracle():
    rng = np.random.default_rng(5)
    for _ in range(40):
        n = rng.integers(2, 5)
        x = rng.normal(size=n) * 2
        radius = float(rng.uniform(0.2, 2.0))
        ours = project_l1_ball(x, radius)
        oracle = qp_l1_projection_oracle(x, radius)
        assert np.allclose(ours, oracle, atol=1e-6)
        assert np.abs(ours).sum() <= radius + 1e-9


def test_project_l1_optimality_against_feasible_samples():
    rng = np.random.default_rng(6)
    x = rng.normal(size=6) * 3
    radius = 1.0
    proj = project_l1_ball(x, radius)
    best = np.linalg.norm(proj - x)
    for _ in range(500):
        z = rng.normal(size=6)
        z = z / np.abs(z).sum() * radius * rng.uniform()
        assert np.linalg.norm(z - x) >= best - 1e-9


def test_project_l1_cols_matches_single():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(8, 5)) * 2
    radii = rng.uniform(0.0, 3.0, size=5)
    radii[0] = 0.0
    batched = project_l1_ball_cols(x, radii)
    for j in range(5):
        assert np.allclose(batched[:, j], project_l1_ball(x[:, j], radii[j]), atol=1e-12)


def test_soft_threshold_closed_form():
    assert np.allclose(soft_threshold(np.array([2.0, -0.5]), 1.0), [1.0, 0.0])
    x = np.array([0.3, -1.2, 5.0])
    assert np.array_equal(soft_threshold(x, 0.0), x)


def test_prox_l1_is_soft_threshold():
    prior = SparsePrior(n=3, s=1)
    x = np.array([2.0, -0.5, 0.1])
    assert np.allclose(prox_norm(prior, x, 1.0), [1.0, 0.0, 0.0])
    assert np.array_equal(prox_norm(prior, x, 0.0), x)
    with pytest.raises(PriorError):
        prox_norm(prior, x, -1.0)


def test_prox_large_t_drives_norm_to_zero():
    prior = SparsePrior(n=4, s=2)
    x = np.array([1.0, -2.0, 0.5, 0.2])
    assert np.all(prox_norm(prior, x, 10.0) == 0)


# ---------------------------------------------------------------------------
# nuclear projection and prox
# ---------------------------------------------------------------------------


def test_prox_nuclear_vs_symmetric_eig_oracle():
    rng = np.random.default_rng(8)
    prior = LowRankPrior(p=3, q=3, r=3)
    for _ in range(20):
        a = rng.normal(size=(3, 3))
        a = (a + a.T) / 2
        t = float(rng.uniform(0.1, 1.0))
        # eigen-shrinkage oracle for symmetric matrices
        w, v = np.linalg.eigh(a)
        shrunk = np.sign(w) * np.maximum(np.abs(w) - t, 0.0)
        oracle = (v * shrunk) @ v.T
        ours = prox_norm(prior, a.reshape(-1), t).reshape(3, 3)
        assert np.allclose(ours, oracle, atol=1e-8)


def test_project_nuclear_ball():
    rng = np.random.default_rng(9)
    prior = LowRankPrior(p=4, q=3, r=3)
    a = rng.normal(size=(4, 3))
    radius = 1.5
    proj = project_norm_ball(prior, a.reshape(-1), radius).reshape(4, 3)
    assert norm_f(prior, proj.reshape(-1)) <= radius + 1e-9
    # singular vectors are preserved; singular values are l1-projected
    u, sv, vt = np.linalg.svd(a, full_matrices=False)
    expected = (u @ np.diag(project_l1_ball(sv, radius)) @ vt)
    assert np.allclose(proj, expected, atol=1e-10)


def test_nuclear_batched_ops_match_single():
    rng = np.random.default_rng(10)
    prior = LowRankPrior(p=3, q=4, r=2)
    x = rng.normal(size=(12, 6))
    t = 0.3
    batched = prox_norm_cols(prior, x, t)
    for j in range(6):
        assert np.allclose(batched[:, j], prox_norm(prior, x[:, j], t), atol=1e-10)
    radii = rng.uniform(0.5, 2.0, size=6)
    batched = project_norm_ball_cols(prior, x, radii)
    for j in range(6):
        assert np.allclose(
            batched[:, j], project_norm_ball(prior, x[:, j], radii[j]), atol=1e-10
        )


# ---------------------------------------------------------------------------
# generative maps
# ---------------------------------------------------------------------------


def test_generative_forward_zero_weights():
    gmap = make_generative_map([np.zeros((4, 2)), np.zeros((3, 4))])
    assert np.all(generative_forward(gmap, np.array([1.0, -2.0])) == 0)


def test_generative_forward_single_linear_layer():
    w = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    gmap = make_generative_map([w])
    z = np.array([1.0, -1.0])
    assert np.allclose(generative_forward(gmap, z), w @ z)


def test_generative_lipschitz_bound_holds():
    rng = np.random.default_rng(11)
    gmap = random_generative_map(3, 16, 10, rng)
    for _ in range(1000):
        z1, z2 = rng.normal(size=3), rng.normal(size=3)
        lhs = np.linalg.norm(generative_forward(gmap, z1) - generative_forward(gmap, z2))
        assert lhs <= gmap.lipschitz_bound * np.linalg.norm(z1 - z2) + 1e-9


def test_lipschitz_bound_is_spectral_product():
    rng = np.random.default_rng(12)
    ws = [rng.normal(size=(5, 3)), rng.normal(size=(4, 5))]
    gmap = make_generative_map(ws)
    expected = np.linalg.norm(ws[0], 2) * np.linalg.norm(ws[1], 2)
    assert gmap.lipschitz_bound == pytest.approx(expected, rel=1e-10)


def test_generative_backward_linear_layer():
    w = np.array([[1.0, 2.0], [3.0, 4.0]])
    gmap = make_generative_map([w])
    c = np.array([1.0, -1.0])
    assert np.allclose(generative_backward(gmap, np.zeros(2), c), w.T @ c)


def test_generative_backward_zero_cotangent():
    rng = np.random.default_rng(13)
    gmap = random_generative_map(2, 8, 6, rng)
    assert np.all(generative_backward(gmap, rng.normal(size=2), np.zeros(6)) == 0)


def test_generative_backward_finite_difference():
    rng = np.random.default_rng(14)
    gmap = random_generative_map(3, 12, 8, rng)
    h = 1e-5
    for _ in range(50):
        z = rng.normal(size=3)
        # keep away from activation kinks
        if np.min(np.abs(gmap.weights[0] @ z)) < 1e-3:
            continue
        c = rng.normal(size=8)
        grad = generative_backward(gmap, z, c)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        fd = (
            c @ generative_forward(gmap, z + h * direction)
            - c @ generative_forward(gmap, z - h * direction)
        ) / (2 * h)
        assert abs(grad @ direction - fd) <= 1e-4 * (1 + abs(fd))


def test_generative_dimension_errors():
    gmap = make_generative_map([np.zeros((4, 2)), np.zeros((3, 4))])
    with pytest.raises(PriorError):
        generative_forward(gmap, np.zeros(3))
    with pytest.raises(PriorError):
        generative_backward(gmap, np.zeros(2), np.zeros(4))
    with pytest.raises(PriorError):
        make_generative_map([np.zeros((4, 2)), np.zeros((3, 5))])


def test_clamp_to_ball():
    z = np.array([3.0, 4.0])
    clamped = clamp_to_ball(z, 1.0)
    assert np.linalg.norm(clamped) == pytest.approx(1.0, abs=1e-12)
    inside = np.array([0.1, 0.1])
    assert clamp_to_ball(inside, 1.0) is inside
    with pytest.warns(UserWarning):
        clamp_to_ball(z, 1.0, warn=True)


def test_generative_map_json_roundtrip():
    rng = np.random.default_rng(15)
    gmap = random_generative_map(2, 6, 4, rng)
    payload = generative_map_to_json(gmap)
    json.loads(payload)  # valid JSON
    restored = generative_map_from_json(payload)
    assert isinstance(restored, GenerativeMap)
    z = rng.normal(size=2)
    assert np.allclose(generative_forward(restored, z), generative_forward(gmap, z))
    assert restored.lipschitz_bound == pytest.approx(gmap.lipschitz_bound, rel=1e-12)


def test_prior_validation():
    with pytest.raises(PriorError):
        SparsePrior(n=3, s=0)
    with pytest.raises(PriorError):
        LowRankPrior(p=2, q=3, r=3)
    assert LowRankPrior(p=2, q=3, r=2).n == 6
