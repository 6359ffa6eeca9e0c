import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logit3fe.errors import CollinearRegressors
from logit3fe.glm import FitOptions, fit_mle, log_likelihood, logistic_link, weighted_triple_demean
from logit3fe.oracle import build_oracle, fit_penalized_newton
from logit3fe.panel import FAMILIES, Panel

from conftest import grid_panel, sim_panel


def dummies(panel):
    """Independent full-rank-agnostic dummy matrix for the three families."""
    cols = []
    for a, b in ((panel.i, panel.t), (panel.j, panel.t), (panel.i, panel.j)):
        for key in sorted(set(zip(a.tolist(), b.tolist()))):
            cols.append(((a == key[0]) & (b == key[1])).astype(float))
    return np.column_stack(cols)


def dense_residual(z, w, panel, ridge=1e-10):
    D = dummies(panel)
    A = D.T @ (D * w[:, None]) + ridge * np.eye(D.shape[1])
    c = np.linalg.solve(A, D.T @ (w * z))
    return z - D @ c


def test_link_at_zero():
    L = logistic_link(np.array([0.0]))
    assert (L.mu[0], L.d1[0], L.d2[0], L.d3[0]) == (0.5, 0.25, 0.0, -0.125)


def test_link_saturation_keeps_positive_weight():
    L = logistic_link(np.array([40.0, -40.0, 700.0, -700.0]))
    assert np.all(L.d1 > 0)
    assert L.mu[0] == pytest.approx(1.0) and L.mu[1] == pytest.approx(0.0, abs=1e-17)


def test_link_derivatives_by_finite_differences():
    eta = np.linspace(-8, 8, 161)
    h = 1e-5
    L, Lp, Lm = logistic_link(eta), logistic_link(eta + h), logistic_link(eta - h)
    for deriv, lo, hi in ((L.d1, Lm.mu, Lp.mu), (L.d2, Lm.d1, Lp.d1), (L.d3, Lm.d2, Lp.d2)):
        fd = (hi - lo) / (2 * h)
        scale = np.maximum(np.abs(deriv), 1e-3)
        assert np.max(np.abs(fd - deriv) / scale) < 1e-6


def test_log_likelihood_examples():
    p = grid_panel(2, 2, 2, [0, 1, 1, 0, 1, 0, 0, 1])
    assert log_likelihood(p, logistic_link(np.zeros(8))) == pytest.approx(8 * math.log(0.5), rel=1e-15)
    single = Panel.from_arrays([0], [0], [0], [1.0], [0.0])
    assert log_likelihood(single, logistic_link(np.array([1.0]))) == pytest.approx(math.log(0.7310585786), abs=1e-9)
    assert log_likelihood(single, logistic_link(np.array([1.0]))) == pytest.approx(-0.3133, abs=1e-4)


def _random_grid(seed, I=3, J=3, T=2):
    rng = np.random.default_rng(seed)
    p = grid_panel(I, J, T, rng.integers(0, 2, I * J * T))
    return p, rng


@pytest.mark.parametrize("seed", range(5))
def test_demean_matches_dense_least_squares(seed):
    p, rng = _random_grid(seed)
    z = rng.normal(size=p.n)
    w = rng.uniform(0.05, 1.0, size=p.n)
    r = weighted_triple_demean(z, w, p, tol=1e-13)
    assert np.max(np.abs(r - dense_residual(z, w, p))) < 1e-8


def test_demean_span_vector_is_zero():
    p, rng = _random_grid(11, 4, 3, 3)
    a = rng.normal(size=(4, 3))
    z = a[p.i, p.t]
    r = weighted_triple_demean(z, rng.uniform(0.1, 2, p.n), p, tol=1e-12)
    assert np.max(np.abs(r)) < 1e-10


def test_demean_orthogonal_vector_unchanged():
    # zero mean in every it, jt and ij cell of a 3x3x2 grid
    p = grid_panel(3, 3, 2, np.zeros(18))
    u = np.array([1.0, -1.0, 0.0])
    z = (u[p.i] * np.roll(u, 1)[p.j]) * np.where(p.t == 0, 1.0, -1.0)
    r = weighted_triple_demean(z, np.ones(p.n), p)
    assert np.array_equal(r, z)


weights_and_z = st.integers(0, 10_000)


@settings(max_examples=40, deadline=None)
@given(weights_and_z)
def test_projection_idempotent_and_cell_orthogonal(seed):
    rng = np.random.default_rng(seed)
    I, J, T = rng.integers(2, 5, size=3)
    ii, jj, tt = (a.ravel() for a in np.meshgrid(range(I), range(J), range(T), indexing="ij"))
    keep = rng.random(ii.size) < 0.8
    keep[0] = True
    p = Panel.from_arrays(ii[keep], jj[keep], tt[keep], rng.integers(0, 2, keep.sum()), np.zeros(keep.sum()))
    z = rng.normal(size=p.n)
    w = rng.uniform(0.05, 1.0, size=p.n)
    tol = 1e-9
    r = weighted_triple_demean(z, w, p, tol=tol)
    r2 = weighted_triple_demean(r, w, p, tol=tol)
    assert np.max(np.abs(r2 - r)) <= 10 * tol
    for fam in FAMILIES:
        codes = p.codes(fam)
        sums = np.abs(np.bincount(codes, weights=w * r))
        sizes = np.bincount(codes)
        assert np.all(sums <= tol * sizes)


def test_fit_matches_dense_newton_seed42():
    p = sim_panel(6, 4, 42)
    fit = fit_mle(p)
    dense = fit_penalized_newton(build_oracle(p), p)
    assert abs(fit.beta[0] - dense.beta[0]) < 1e-6


def test_zero_regressor_is_collinear(panel_20x5):
    p = panel_20x5
    q = Panel.from_arrays(p.i, p.j, p.t, p.y, np.column_stack([p.X, np.zeros(p.n)]))
    with pytest.raises(CollinearRegressors):
        fit_mle(q)


def test_fixed_effect_regressor_is_collinear(panel_20x5):
    p = panel_20x5
    rng = np.random.default_rng(0)
    a, b, c = rng.normal(size=(p.I, p.T)), rng.normal(size=(p.J, p.T)), rng.normal(size=(p.I, p.J))
    x = a[p.i, p.t] + b[p.j, p.t] + c[p.i, p.j]
    with pytest.raises(CollinearRegressors):
        fit_mle(Panel.from_arrays(p.i, p.j, p.t, p.y, x))
    with pytest.raises(CollinearRegressors):
        fit_mle(Panel.from_arrays(p.i, p.j, p.t, p.y, np.column_stack([p.X, x])))


def test_score_zero_and_deviance_monotone(panel_20x5):
    p = panel_20x5
    fit = fit_mle(p, FitOptions(outer_tol=1e-12, inner_tol=1e-11))
    r = p.y - fit.mu
    assert abs(float(p.X[:, 0] @ r)) < 1e-6
    for fam in FAMILIES:
        assert np.max(np.abs(np.bincount(p.codes(fam), weights=r))) < 1e-6
    path = np.array(fit.deviance_path)
    assert np.all(np.diff(path) <= 1e-8 * np.abs(path[:-1]))
    assert fit.converged and fit.clamp_count == 0


def test_permutation_equivariance(panel_20x5):
    p = panel_20x5
    perm = np.random.default_rng(5).permutation(p.n)
    q = Panel.from_arrays(np.asarray(p.i_labels)[p.i][perm], np.asarray(p.j_labels)[p.j][perm],
                          np.asarray(p.t_labels)[p.t][perm], p.y[perm], p.X[perm])
    f1, f2 = fit_mle(p), fit_mle(q)
    assert abs(f1.beta[0] - f2.beta[0]) < 1e-7
    assert np.max(np.abs(f1.mu[perm] - f2.mu)) < 1e-7


def test_fit_options_validation():
    with pytest.raises(ValueError):
        FitOptions(inner_tol=0)
