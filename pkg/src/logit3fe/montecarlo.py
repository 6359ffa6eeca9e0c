"""Seeded simulation studies of the uncorrected and debiased estimators.

Data follow a static design with three overlapping effects::

    y_ijt = 1{beta x_ijt + alpha_it + gamma_jt + rho_ij >= log(u / (1 - u))}
    x_ijt = x_ij,t-1 / 2 + alpha_it + gamma_jt + rho_ij + v_ijt

with alpha, gamma, rho ~ N(0, 1/24), v ~ N(0, 1/2), x_ij0 ~ N(0, 1), u ~ U(0, 1).
Every random variable of every replication comes from its own Philox stream keyed
by ``(seed, rep_index, variable)``, so results do not depend on execution order.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import logit

from .errors import Logit3FEError
from .panel import Panel

log = logging.getLogger(__name__)

Z95 = 1.959964

_TAGS = {"alpha": 0, "gamma": 1, "rho": 2, "x0": 3, "v": 4, "u": 5}


@dataclass(frozen=True)
class DgpConfig:
    N: int
    T: int
    beta0: float = 1.0
    seed: int = 0
    effect_var: float = 1.0 / 24.0
    v_var: float = 0.5
    ar: float = 0.5
    x0_var: float = 1.0
    include_diagonal: bool = True
    zero_effects: bool = False

    def __post_init__(self):
        if self.N < 2 or self.T < 2:
            raise ValueError("N and T must be at least 2")
        if min(self.effect_var, self.v_var, self.x0_var) <= 0:
            raise ValueError("variances must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def _stream(config: DgpConfig, rep_index: int, tag: str) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=config.seed, spawn_key=(rep_index, _TAGS[tag]))
    return np.random.Generator(np.random.Philox(ss))


def draw_effects(config: DgpConfig, rep_index: int = 0):
    """Draw ``(alpha (N, T), gamma (N, T), rho (N, N))`` for one replication."""
    N, T = config.N, config.T
    if config.zero_effects:
        return np.zeros((N, T)), np.zeros((N, T)), np.zeros((N, N))
    sd = math.sqrt(config.effect_var)
    alpha = _stream(config, rep_index, "alpha").normal(0.0, sd, size=(N, T))
    gamma = _stream(config, rep_index, "gamma").normal(0.0, sd, size=(N, T))
    rho = _stream(config, rep_index, "rho").normal(0.0, sd, size=(N, N))
    return alpha, gamma, rho


def generate(config: DgpConfig, rep_index: int = 0) -> Panel:
    """Simulate one full ``N x N x T`` panel (observations ordered by i, j, t)."""
    N, T = config.N, config.T
    alpha, gamma, rho = draw_effects(config, rep_index)
    x_prev = _stream(config, rep_index, "x0").normal(0.0, math.sqrt(config.x0_var), size=(N, N))
    v = _stream(config, rep_index, "v").normal(0.0, math.sqrt(config.v_var), size=(N, N, T))
    u = _stream(config, rep_index, "u").random(size=(N, N, T))
    fe = alpha[:, None, :] + gamma[None, :, :] + rho[:, :, None]
    x = np.empty((N, N, T))
    for t in range(T):
        x_prev = config.ar * x_prev + fe[:, :, t] + v[:, :, t]
        x[:, :, t] = x_prev
    y = (config.beta0 * x + fe >= logit(u)).astype(np.float64)
    ii, jj, tt = np.meshgrid(np.arange(1, N + 1), np.arange(1, N + 1), np.arange(1, T + 1), indexing="ij")
    keep = np.ones((N, N, T), dtype=bool)
    if not config.include_diagonal:
        keep &= ii != jj
    return Panel.from_arrays(ii[keep], jj[keep], tt[keep], y[keep], x[keep], x_names=("x",))


@dataclass(frozen=True)
class RepResult:
    rep: int
    ok: bool
    beta_hat: float = math.nan
    beta_tilde: float = math.nan
    se: float = math.nan
    n: int = 0
    dropped: int = 0
    error: str = ""


def _one_rep(args) -> RepResult:
    from .debias import estimate
    from .panel import drop_uninformative

    config, rep, options = args
    try:
        full = generate(config, rep)
        panel, report = drop_uninformative(full)
        _, corrected = estimate(panel, options)
    except Logit3FEError as exc:
        return RepResult(rep=rep, ok=False, error=f"{type(exc).__name__}: {exc}")
    log.debug("rep %d (N=%d, T=%d): %d of %d observations pruned", rep, config.N, config.T,
              report.dropped, full.n)
    return RepResult(rep=rep, ok=True, beta_hat=float(corrected.beta_uncorrected[0]),
                     beta_tilde=float(corrected.beta_debiased[0]), se=float(corrected.se[0]),
                     n=panel.n, dropped=report.dropped)


def simulate_reps(config: DgpConfig, reps: int, options=None, workers: int = 1) -> list[RepResult]:
    """Run replications ``0 .. reps-1``; results are ordered by replication index.

    Replications that fail (non-convergence, nothing left after pruning, ...) are
    returned with ``ok=False`` instead of aborting the run.
    """
    tasks = [(config, rep, options) for rep in range(reps)]
    if workers <= 1:
        results = [_one_rep(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_rep, tasks, chunksize=max(1, reps // (4 * workers))))
    return sorted(results, key=lambda r: r.rep)


@dataclass(frozen=True)
class EstimatorStats:
    """Table-style statistics of one estimator over the usable replications.

    SD-based fields are ``None`` with fewer than two usable replications.
    """

    rel_bias_pct: float
    bias_sd: float | None
    coverage: float
    mean_se: float
    sd: float | None


@dataclass(frozen=True)
class McSummary:
    N: int
    T: int
    beta0: float
    reps: int
    reps_used: int
    failures: int
    uncorrected: EstimatorStats
    debiased: EstimatorStats
    pruned_share: float = 0.0


def _stats(est: np.ndarray, se: np.ndarray, beta0: float) -> EstimatorStats:
    if est.size == 0:
        return EstimatorStats(math.nan, None, math.nan, math.nan, None)
    err = est - beta0
    bias = float(np.mean(err))
    sd = float(np.std(est, ddof=1)) if est.size >= 2 else None
    return EstimatorStats(
        rel_bias_pct=100.0 * bias / beta0,
        bias_sd=bias / sd if sd else None,
        coverage=float(np.mean(np.abs(err) <= Z95 * se)),
        mean_se=float(np.mean(se)),
        sd=sd,
    )


def summarize(config: DgpConfig, results: list[RepResult]) -> McSummary:
    good = [r for r in results if r.ok]
    se = np.array([r.se for r in good])
    pruned = [r.dropped / (r.dropped + r.n) for r in good]
    return McSummary(
        N=config.N, T=config.T, beta0=config.beta0, reps=len(results), reps_used=len(good),
        failures=len(results) - len(good),
        uncorrected=_stats(np.array([r.beta_hat for r in good]), se, config.beta0),
        debiased=_stats(np.array([r.beta_tilde for r in good]), se, config.beta0),
        pruned_share=float(np.mean(pruned)) if pruned else math.nan,
    )


def run_study(grid, reps: int, seed: int, options=None, workers: int = 1, beta0: float = 1.0,
              include_diagonal: bool = True) -> list[McSummary]:
    """Simulate every ``(N, T)`` cell of ``grid`` and summarize both estimators."""
    if reps < 1:
        raise ValueError("reps must be at least 1")
    out = []
    for N, T in grid:
        config = DgpConfig(N=N, T=T, beta0=beta0, seed=seed, include_diagonal=include_diagonal)
        summary = summarize(config, simulate_reps(config, reps, options, workers))
        if N >= 30 and summary.pruned_share >= 0.05:
            log.warning("(N=%d, T=%d): %.1f%% of observations pruned on average", N, T,
                        100 * summary.pruned_share)
        out.append(summary)
    return out


STUDY_COLUMNS = ["N", "T", "estimator", "reps", "reps_used", "failures", "rel_bias_pct", "bias_sd",
                 "coverage", "mean_se", "sd"]


def study_rows(summaries: list[McSummary]) -> list[dict]:
    rows = []
    for s in summaries:
        for name in ("uncorrected", "debiased"):
            st: EstimatorStats = getattr(s, name)
            rows.append({"N": s.N, "T": s.T, "estimator": name, "reps": s.reps, "reps_used": s.reps_used,
                         "failures": s.failures, "rel_bias_pct": st.rel_bias_pct,
                         "bias_sd": "" if st.bias_sd is None else st.bias_sd, "coverage": st.coverage,
                         "mean_se": st.mean_se, "sd": "" if st.sd is None else st.sd})
    return rows


def study_csv(summaries: list[McSummary]) -> str:
    from .serialize import write_csv_text

    return write_csv_text(STUDY_COLUMNS, study_rows(summaries))


def study_text(summaries: list[McSummary]) -> str:
    def cell(v, fmt):
        return f"{'n/a':>9}" if v is None or (isinstance(v, float) and math.isnan(v)) else format(v, fmt)

    lines = [f"{'(N, T)':>10} | {'uncorrected':^31} | {'debiased':^31} | fail",
             f"{'':>10} | {'Bias %':>9} {'Bias/SD':>9} {'Cover':>11} | {'Bias %':>9} {'Bias/SD':>9} {'Cover':>11} |"]
    for s in summaries:
        parts = []
        for st in (s.uncorrected, s.debiased):
            parts.append(f"{cell(st.rel_bias_pct, '9.3f')} {cell(st.bias_sd, '9.3f')} {cell(st.coverage, '11.3f')}")
        lines.append(f"{f'({s.N}, {s.T})':>10} | {parts[0]} | {parts[1]} | {s.failures}")
    return "\n".join(lines) + "\n"


def normalized_differences(config: DgpConfig, reps: int, options=None, workers: int = 1,
                           results: list[RepResult] | None = None) -> list[dict]:
    """Per-replication differences scaled by ``N sqrt(T)`` and by ``sqrt(N T)``.

    One record per replication and estimator. Pass ``results`` to reuse
    replications that were already simulated for ``config``.
    """
    if reps < 2:
        raise ValueError("reps must be at least 2")
    if results is None:
        results = simulate_reps(config, reps, options, workers)
    N, T = config.N, config.T
    a, b = N * math.sqrt(T), math.sqrt(N * T)
    records = []
    for r in results[:reps]:
        if not r.ok:
            continue
        for name, est in (("uncorrected", r.beta_hat), ("debiased", r.beta_tilde)):
            d = est - config.beta0
            records.append({"N": N, "T": T, "rep": r.rep, "estimator": name,
                            "scaled_a": a * d, "scaled_b": b * d})
    return records


def normalized_summary(records: list[dict]) -> dict:
    """Mean, SD and Monte Carlo standard error of ``scaled_a`` and ``scaled_b`` per (N, T, estimator)."""
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec["N"], rec["T"], rec["estimator"]), []).append(rec)
    out = {}
    for key, recs in groups.items():
        stats = {}
        for col in ("scaled_a", "scaled_b"):
            v = np.array([r[col] for r in recs])
            sd = float(np.std(v, ddof=1)) if v.size > 1 else math.nan
            stats[col] = {"mean": float(v.mean()), "sd": sd, "mc_se": sd / math.sqrt(v.size)}
        out[key] = stats
    return out


NORMALIZED_COLUMNS = ["N", "T", "rep", "estimator", "scaled_a", "scaled_b"]


def normalized_csv(records: list[dict]) -> str:
    from .serialize import write_csv_text

    return write_csv_text(NORMALIZED_COLUMNS, records)
