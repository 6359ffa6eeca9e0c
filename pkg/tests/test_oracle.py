import math

import numpy as np
import pytest

from logit3fe.errors import AsymmetricPanel, TooLargeForDense
from logit3fe.glm import FitOptions, fit_mle, logistic_link
from logit3fe.montecarlo import DgpConfig, generate
from logit3fe.oracle import (build_constraints, build_dummies, build_oracle, closed_form_alpha_block_inverse,
                             compare_with_dense, fit_penalized_newton, incidental_hessian, is_separated,
                             penalized_gradient, penalized_hessian, penalized_objective, random_parameters,
                             run_verification, seeded_instances, verify_hessian_lemmas)
from logit3fe.panel import Panel

from conftest import grid_panel, sim_panel


def test_dummies_minus_diagonal():
    p = grid_panel(2, 2, 2, [0, 1, 1, 0], diagonal=False)
    (w1, w2, w3), _ = build_dummies(p)
    w = np.hstack([w1, w2, w3])
    assert w.shape == (4, 4 + 4 + 2)
    assert np.all(w.sum(axis=1) == 3)


def test_dummy_cap():
    with pytest.raises(TooLargeForDense):
        build_dummies(generate(DgpConfig(N=10, T=5, seed=0)), cap=100)


def test_constraints_shape_rank_and_annihilation():
    v = build_constraints(3, 3, 2)
    assert v.shape == (6 + 6 + 9, 2 + 3 + 3)
    assert np.linalg.matrix_rank(v) == 2 + 3 + 3 - 1
    model = build_oracle(grid_panel(3, 3, 2, np.arange(18) % 2))
    assert np.array_equal(model.w @ model.v, np.zeros((18, 8)))


def test_constraints_unequal_sizes():
    I, J, T = 3, 4, 2
    p = grid_panel(I, J, T, np.arange(I * J * T) % 2)
    model = build_oracle(p)
    assert np.array_equal(model.w @ model.v, np.zeros((p.n, T + I + J)))
    assert np.linalg.matrix_rank(model.v) == T + I + J - 1


def test_objective_at_zero():
    p = sim_panel(6, 4, 42)
    model = build_oracle(p)
    val = penalized_objective(model, p, np.zeros(1), np.zeros(model.n_phi))
    assert val == pytest.approx(p.n * math.log(2) / math.sqrt(6 * 4), rel=1e-14)


@pytest.mark.parametrize("seed", range(3))
def test_gradient_finite_differences(seed):
    p = sim_panel(6, 4, 42)
    model = build_oracle(p, c1=1.7)
    rng = np.random.default_rng(seed)
    beta, phi = random_parameters(model, p, rng)
    theta = np.concatenate([beta, phi])
    g = penalized_gradient(model, p, beta, phi)
    h = 1e-5
    fd = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        fd[k] = (penalized_objective(model, p, *np.split(theta + e, [1]))
                 - penalized_objective(model, p, *np.split(theta - e, [1]))) / (2 * h)
    assert np.max(np.abs(fd - g)) < 1e-6
    H = penalized_hessian(model, p, beta, phi)
    fdH = np.column_stack([
        (penalized_gradient(model, p, *np.split(theta + h * np.eye(theta.size)[k], [1]))
         - penalized_gradient(model, p, *np.split(theta - h * np.eye(theta.size)[k], [1]))) / (2 * h)
        for k in range(theta.size)])
    assert np.max(np.abs(fdH - H)) < 1e-6


def test_alpha_gamma_hessian_sparsity():
    N, T = 4, 3
    p = generate(DgpConfig(N=N, T=T, seed=1))
    model = build_oracle(p)
    rng = np.random.default_rng(0)
    beta, phi = random_parameters(model, p, rng)
    d1 = logistic_link(p.X @ beta + model.w @ phi).d1
    H = incidental_hessian(model, d1) - model.c1 * model.v @ model.v.T / model.scale
    ag = H[:N * T, N * T:2 * N * T]
    for i in range(N):
        for t in range(T):
            for j in range(N):
                for t2 in range(T):
                    val = ag[i * T + t, j * T + t2]
                    if t != t2:
                        assert val == 0.0
                    else:
                        o = np.flatnonzero((p.i == i) & (p.j == j) & (p.t == t))[0]
                        assert val == pytest.approx(d1[o] / math.sqrt(N * T), rel=1e-12)


def test_newton_agrees_and_pins_null_directions():
    p = sim_panel(6, 4, 42)
    model = build_oracle(p)
    dense = fit_penalized_newton(model, p)
    fit = fit_mle(p, FitOptions(outer_tol=1e-12, inner_tol=1e-11))
    assert abs(dense.beta[0] - fit.beta[0]) < 1e-6
    assert np.max(np.abs(dense.mu - fit.mu)) < 1e-6
    assert np.max(np.abs(model.v.T @ dense.phi)) <= 1e-8
    assert dense.grad_norm <= 1e-10


def test_c1_doubling_invariance():
    p = sim_panel(6, 4, 42)
    a = fit_penalized_newton(build_oracle(p, c1=1.0), p)
    b = fit_penalized_newton(build_oracle(p, c1=2.0), p)
    assert np.max(np.abs(a.beta - b.beta)) < 1e-8
    assert np.max(np.abs(a.phi - b.phi)) < 1e-8
    assert np.max(np.abs(a.mu - b.mu)) < 1e-8


def test_closed_form_block_inverse_and_block_diagonality():
    for N in (4, 5):
        p = generate(DgpConfig(N=N, T=N, seed=3))
        model = build_oracle(p)
        rep = verify_hessian_lemmas(model, p, (np.zeros(1), np.zeros(model.n_phi)))
        assert rep.block_inverse_max_err < 1e-10
        assert rep.offdiag_max < 1e-10
        assert rep.positive_definite


def test_closed_form_is_the_inverse():
    N = T = 4
    A = closed_form_alpha_block_inverse(N, T)
    s = math.sqrt(N * T)
    # alpha block of (w'w + v v') / s for the balanced grid
    model = build_oracle(generate(DgpConfig(N=N, T=T, seed=0)))
    Hlin = incidental_hessian(model, np.ones(N * N * T))
    Hinv = np.linalg.inv(Hlin)
    assert np.max(np.abs(A - Hinv[:N * T, :N * T])) < 1e-10
    assert s == model.scale


def test_lambda_min_positive_random_parameters():
    p = generate(DgpConfig(N=4, T=4, seed=5))
    model = build_oracle(p)
    rng = np.random.default_rng(9)
    for _ in range(20):
        rep = verify_hessian_lemmas(model, p, random_parameters(model, p, rng))
        assert rep.lambda_min > 0
        assert rep.c_min > 0


def test_hessian_checks_reject_asymmetric():
    p = generate(DgpConfig(N=4, T=3, seed=5))
    with pytest.raises(AsymmetricPanel):
        verify_hessian_lemmas(build_oracle(p), p, (np.zeros(1), np.zeros(build_oracle(p).n_phi)))
    q = grid_panel(4, 4, 4, np.arange(48) % 2, diagonal=False)
    with pytest.raises(AsymmetricPanel):
        verify_hessian_lemmas(build_oracle(q), q, (np.zeros(1), np.zeros(build_oracle(q).n_phi)))


def test_separation_detection():
    x = np.array([-2.0, -1.0, 1.0, 2.0, -1.5, 1.5, -0.5, 0.5])
    p = grid_panel(2, 2, 2, (x > 0).astype(float), X=x)
    assert is_separated(p)
    q = sim_panel(6, 4, 42)
    assert not is_separated(q)


def test_seeded_instances_are_usable():
    inst = seeded_instances(3, seed=0)
    assert [s for s, _ in inst] == sorted(s for s, _ in inst)
    for _, p in inst:
        eq = compare_with_dense(p)
        assert eq.beta_abs_diff < 1e-6 and eq.mu_abs_diff < 1e-6 and eq.se_rel_diff < 1e-6


def test_run_verification_default_and_corrupted():
    assert run_verification(n_random=3).passed
    bad = run_verification(sizes=((4, 4),), options=FitOptions(inner_tol=1e-1), n_random=2)
    assert not bad.passed
    assert any(c.name.startswith("dense_vs_fast") for c in bad.failed)
    with pytest.raises(AsymmetricPanel):
        run_verification(sizes=((4, 3),))


def test_from_arrays_panel_in_oracle():
    p = Panel.from_arrays([0, 0, 1, 1], [0, 1, 0, 1], [0, 0, 0, 0], [0, 1, 1, 0], [0.1, 0.2, 0.3, 0.4])
    (w1, w2, w3), pos = build_dummies(p)
    assert w1.shape == (4, 2) and w2.shape == (4, 2) and w3.shape == (4, 4)
