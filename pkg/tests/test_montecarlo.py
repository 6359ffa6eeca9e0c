import csv
import io
import math

import numpy as np
import pytest

from logit3fe.montecarlo import (DgpConfig, _stream, RepResult, draw_effects, generate, normalized_csv,
                                 normalized_differences, normalized_summary, run_study, simulate_reps, study_csv,
                                 study_text, summarize)


def test_generate_is_deterministic():
    a = generate(DgpConfig(N=8, T=3, seed=11), 4)
    b = generate(DgpConfig(N=8, T=3, seed=11), 4)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.X, b.X)
    assert a.n == 8 * 8 * 3 and a.is_balanced()
    c = generate(DgpConfig(N=8, T=3, seed=11), 5)
    assert not np.array_equal(a.X, c.X)


def test_generate_without_diagonal():
    p = generate(DgpConfig(N=5, T=2, seed=0, include_diagonal=False))
    assert p.n == (25 - 5) * 2
    assert not np.any(np.asarray(p.i_labels)[p.i] == np.asarray(p.j_labels)[p.j])


def test_null_design_outcome_mean():
    N, T = 60, 10
    p = generate(DgpConfig(N=N, T=T, beta0=0.0, seed=2, zero_effects=True))
    assert abs(p.y.mean() - 0.5) <= 3 * math.sqrt(0.25 / (N * N * T))


def test_effect_variance():
    alpha, gamma, rho = draw_effects(DgpConfig(N=100, T=1000, seed=8))
    assert alpha.size == 100_000
    assert abs(alpha.var() / (1 / 24) - 1) < 0.02
    assert abs(gamma.var() / (1 / 24) - 1) < 0.02


def test_regressor_recursion():
    cfg = DgpConfig(N=3, T=4, seed=1)
    p = generate(cfg)
    alpha, gamma, rho = draw_effects(cfg)
    v = _stream(cfg, 0, "v").normal(0.0, math.sqrt(0.5), size=(3, 3, 4))
    x = p.X[:, 0].reshape(3, 3, 4)
    fe = alpha[:, None, :] + gamma[None, :, :] + rho[:, :, None]
    assert np.allclose(x[:, :, 1:], 0.5 * x[:, :, :-1] + fe[:, :, 1:] + v[:, :, 1:], rtol=0, atol=1e-14)
    u = _stream(cfg, 0, "u").random(size=(3, 3, 4))
    assert np.array_equal(p.y.reshape(3, 3, 4), (x + fe >= np.log(u / (1 - u))).astype(float))


def test_config_validation():
    with pytest.raises(ValueError):
        DgpConfig(N=1, T=5)
    with pytest.raises(ValueError):
        DgpConfig(N=5, T=5, seed=-1)


def test_single_rep_has_undefined_sd():
    (s,) = run_study([(12, 4)], reps=1, seed=3)
    assert s.reps == 1 and s.reps_used == 1
    for st in (s.uncorrected, s.debiased):
        assert st.sd is None and st.bias_sd is None
        assert math.isfinite(st.rel_bias_pct)
    for row in csv.DictReader(io.StringIO(study_csv([s]))):
        assert row["sd"] == "" and row["bias_sd"] == "" and row["rel_bias_pct"] != ""


def test_failures_are_recorded_not_raised():
    cfg = DgpConfig(N=3, T=2, seed=0)
    results = simulate_reps(cfg, 6)
    assert len(results) == 6 and [r.rep for r in results] == list(range(6))
    s = summarize(cfg, results)
    assert s.failures == sum(not r.ok for r in results)
    assert s.failures > 0 and all(r.error for r in results if not r.ok)


def test_summary_statistics_by_hand():
    cfg = DgpConfig(N=10, T=3, beta0=2.0)
    res = [RepResult(rep=k, ok=True, beta_hat=b, beta_tilde=b - 0.5, se=0.4, n=10)
           for k, b in enumerate([2.2, 2.6, 1.9, 2.5])]
    s = summarize(cfg, res)
    hat = np.array([2.2, 2.6, 1.9, 2.5])
    assert s.uncorrected.rel_bias_pct == pytest.approx(100 * (hat.mean() - 2) / 2)
    assert s.uncorrected.bias_sd == pytest.approx((hat.mean() - 2) / hat.std(ddof=1))
    assert s.uncorrected.coverage == pytest.approx(np.mean(np.abs(hat - 2) <= 1.959964 * 0.4))
    assert s.debiased.coverage == pytest.approx(np.mean(np.abs(hat - 2.5) <= 1.959964 * 0.4))


def test_normalized_scalings():
    cfg = DgpConfig(N=12, T=4, seed=5)
    recs = normalized_differences(cfg, 4)
    assert {r["estimator"] for r in recs} == {"uncorrected", "debiased"}
    for r in recs:
        assert r["scaled_b"] == pytest.approx(r["scaled_a"] / math.sqrt(12), rel=1e-14)
    summary = normalized_summary(recs)
    assert set(summary) == {(12, 4, "uncorrected"), (12, 4, "debiased")}
    assert normalized_csv(recs).startswith("N,T,rep,estimator,scaled_a,scaled_b\n")
    with pytest.raises(ValueError):
        normalized_differences(cfg, 1)


def test_study_determinism_across_workers():
    grid = [(10, 3), (12, 4)]
    one = study_csv(run_study(grid, reps=6, seed=9, workers=1))
    many = study_csv(run_study(grid, reps=6, seed=9, workers=3))
    assert one == many
    assert one == study_csv(run_study(grid, reps=6, seed=9, workers=1))
    assert len(one.splitlines()) == 1 + 2 * len(grid)
    assert "uncorrected" in study_text(run_study(grid[:1], reps=2, seed=9))
