"""Fixed-effects logit MLE via IRLS with alternating weighted projections.

The dummy matrix of the three fixed-effect families is never formed. Each IRLS
step is a weighted least-squares regression of the working response on the
regressors and the dummies, solved by partialling out the dummies with cyclic
weighted cell demeaning (it-cells, then jt-cells, then ij-cells).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import expit

from .errors import CollinearRegressors, NonConvergence
from .panel import FAMILIES, Panel


@dataclass(frozen=True)
class LinkEval:
    """Logistic CDF and its first three derivatives at the linear index."""

    eta: np.ndarray
    mu: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray


def logistic_link(eta) -> LinkEval:
    """Evaluate ``mu = 1 / (1 + exp(-eta))`` and its derivatives.

    ``d1`` is computed from ``exp(-|eta|)`` so that it never underflows to an
    exact zero while ``mu`` itself rounds to 0 or 1.
    """
    eta = np.asarray(eta, dtype=np.float64)
    mu = expit(eta)
    e = np.exp(-np.abs(eta))
    d1 = e / (1.0 + e) ** 2
    d2 = -d1 * np.tanh(0.5 * eta)
    d3 = d1 * (1.0 - 6.0 * d1)
    return LinkEval(eta=eta, mu=mu, d1=d1, d2=d2, d3=d3)


def log_likelihood(panel: Panel, link: LinkEval) -> float:
    """Unscaled, unpenalized logit log-likelihood ``sum y log mu + (1-y) log(1-mu)``."""
    y = panel.y
    eta = link.eta
    if eta.shape != y.shape:
        raise ValueError(f"link has {eta.size} entries, panel has {y.size} observations")
    # log mu = -log(1 + e^-eta), log(1 - mu) = -log(1 + e^eta)
    return float(-np.sum(y * np.logaddexp(0.0, -eta) + (1.0 - y) * np.logaddexp(0.0, eta)))


class _Projector:
    """Cyclic weighted demeaning over the three cell families for fixed weights."""

    def __init__(self, panel: Panel, weights: np.ndarray):
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (panel.n,):
            raise ValueError("weights must have one entry per observation")
        if not np.all(weights > 0):
            raise ValueError("weights must be strictly positive")
        self.w = weights
        self.families = []
        for fam in FAMILIES:
            codes = panel.codes(fam)
            G = panel.n_cells(fam)
            self.families.append((codes, G, np.bincount(codes, weights=weights, minlength=G),
                                  np.bincount(codes, minlength=G)))

    def sweep(self, R: np.ndarray) -> None:
        w = self.w
        for codes, G, sw, _ in self.families:
            for k in range(R.shape[1]):
                means = np.bincount(codes, weights=w * R[:, k], minlength=G) / sw
                R[:, k] -= means[codes]

    def orthogonal(self, R: np.ndarray, tol: float) -> bool:
        """True if ``|sum_cell w r| <= tol * cell_size`` in every cell of every family."""
        w = self.w
        for codes, G, _, size in self.families:
            for k in range(R.shape[1]):
                if np.any(np.abs(np.bincount(codes, weights=w * R[:, k], minlength=G)) > tol * size):
                    return False
        return True

    def residuals(self, Z: np.ndarray, tol: float, max_sweeps: int, start: np.ndarray | None = None):
        """Return ``(R, sweeps)`` with ``R`` the weighted projection residual of ``Z``.

        Sweeps stop once no entry moves by ``tol`` or more over a sweep and every
        cell is weighted-orthogonal to ``R`` up to ``tol`` per member. ``start`` is
        an element of the dummy span used as warm start; the limit does not
        depend on it.
        """
        R = np.array(Z, dtype=np.float64, copy=True)
        if start is not None:
            R -= start
        delta = np.inf
        for sweep in range(1, max_sweeps + 1):
            before = R.copy()
            self.sweep(R)
            delta = float(np.max(np.abs(R - before))) if R.size else 0.0
            if delta < tol and self.orthogonal(R, tol):
                return R, sweep
        raise NonConvergence("weighted triple demeaning", max_sweeps, delta)


def weighted_triple_demean(z, weights, panel: Panel, tol: float = 1e-8, max_sweeps: int = 10000,
                           start=None) -> np.ndarray:
    """Residual of the weighted least-squares fit of ``z`` on the three dummy families.

    Parameters
    ----------
    z : array_like, shape (n,) or (n, m)
    weights : array_like, shape (n,)
        Strictly positive observation weights.
    panel : Panel
    tol : float
        Sweeps stop once no entry changes by ``tol`` or more over a full sweep and
        every cell satisfies ``|sum w r| <= tol * cell_size``.
    max_sweeps : int
    start : array_like, optional
        Warm start: a vector in the dummy span (for example ``z_old - r_old``).

    Raises
    ------
    NonConvergence
        Carries the last sweep delta.
    """
    z = np.asarray(z, dtype=np.float64)
    Z = z[:, None] if z.ndim == 1 else z
    if start is not None:
        start = np.asarray(start, dtype=np.float64).reshape(Z.shape)
    R, _ = _Projector(panel, weights).residuals(Z, tol, max_sweeps, start)
    return R[:, 0] if z.ndim == 1 else R


@dataclass(frozen=True)
class FitOptions:
    outer_tol: float = 1e-9
    inner_tol: float = 1e-8
    max_outer: int = 100
    max_sweeps: int = 10000
    weight_floor: float = 1e-10
    max_halvings: int = 10
    collinear_rcond: float = 1e-10

    def __post_init__(self):
        for name in ("outer_tol", "inner_tol", "weight_floor", "collinear_rcond"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer < 1 or self.max_sweeps < 1:
            raise ValueError("iteration limits must be at least 1")


@dataclass
class FitResult:
    """Uncorrected fixed-effects logit estimate.

    ``link`` holds the linear index and logistic derivatives at the optimum; the
    individual fixed effects are not reported, only their contribution to ``eta``.
    """

    beta: np.ndarray
    link: LinkEval
    residuals: np.ndarray
    deviance: float
    iterations: int
    sweeps: list[int]
    converged: bool
    options: FitOptions
    clamp_count: int
    x_names: tuple
    deviance_path: list[float] = field(default_factory=list)
    halvings: int = 0

    @property
    def eta(self) -> np.ndarray:
        return self.link.eta

    @property
    def mu(self) -> np.ndarray:
        return self.link.mu


def _check_collinearity(gram: np.ndarray, raw_diag: np.ndarray, rcond: float, names) -> None:
    if np.any(raw_diag <= 0) or not np.all(np.isfinite(gram)):
        bad = [names[k] for k in np.flatnonzero(raw_diag <= 0)]
        raise CollinearRegressors(f"regressor(s) {bad} are identically zero")
    scale = 1.0 / np.sqrt(raw_diag)
    eig = np.linalg.eigvalsh(gram * np.outer(scale, scale))
    if eig[0] < rcond:
        raise CollinearRegressors(
            f"regressors are collinear with the fixed effects or each other "
            f"(smallest scaled eigenvalue {eig[0]:.3e} < {rcond:.0e})")


def fit_mle(panel: Panel, options: FitOptions | None = None) -> FitResult:
    """Uncorrected MLE of the logit model with it, jt and ij fixed effects.

    Starts from ``eta = 0``. Each outer iteration forms the working response
    ``s = eta + (y - mu) / d1`` with weights ``d1``, partials the dummies out of
    ``s`` and the regressors, solves the K x K weighted normal equations and sets
    ``eta`` to the fitted values. Step-halving engages if the deviance rises.

    The panel should already be pruned with :func:`drop_uninformative`.

    Raises
    ------
    CollinearRegressors, NonConvergence
    """
    opts = options or FitOptions()
    n, K = panel.n, panel.K
    if K < 1:
        raise ValueError("at least one regressor is required")
    X = panel.X
    y = panel.y
    eta = np.zeros(n)
    beta = np.zeros(K)
    link = logistic_link(eta)
    deviance = -2.0 * log_likelihood(panel, link)
    path = [deviance]
    sweeps: list[int] = []
    clamp_count = 0
    halvings = 0
    fe_hint = None
    for it in range(1, opts.max_outer + 1):
        w = link.d1
        clamped = w < opts.weight_floor
        clamp_count += int(clamped.sum())
        w = np.where(clamped, opts.weight_floor, w)
        s = eta + (y - link.mu) / w
        Z = np.column_stack([s, X])
        proj = _Projector(panel, w)
        R, nsw = proj.residuals(Z, opts.inner_tol, opts.max_sweeps, fe_hint)
        sweeps.append(nsw)
        fe_hint = Z - R
        s_t, X_t = R[:, 0], R[:, 1:]
        WX = X_t * w[:, None]
        gram = X_t.T @ WX
        _check_collinearity(gram, np.einsum("ik,ik,i->k", X, X, w), opts.collinear_rcond, panel.x_names)
        beta_new = linalg.solve(gram, WX.T @ s_t, assume_a="pos")
        eta_new = s - (s_t - X_t @ beta_new)

        step = 1.0
        for h in range(opts.max_halvings + 1):
            eta_try = eta + step * (eta_new - eta)
            link_try = logistic_link(eta_try)
            dev_try = -2.0 * log_likelihood(panel, link_try)
            if np.isfinite(dev_try) and dev_try <= deviance + 1e-8 * abs(deviance):
                break
            if h == opts.max_halvings:
                break
            step *= 0.5
            halvings += 1
        beta = beta + step * (beta_new - beta)
        eta, link = eta_try, link_try
        change = abs(dev_try - deviance) / (abs(dev_try) + 0.1)
        deviance = dev_try
        path.append(deviance)
        if change < opts.outer_tol:
            return FitResult(beta=beta, link=link, residuals=y - link.mu, deviance=deviance,
                             iterations=it, sweeps=sweeps, converged=True, options=opts,
                             clamp_count=clamp_count, x_names=panel.x_names,
                             deviance_path=path, halvings=halvings)
    raise NonConvergence("IRLS", opts.max_outer, change)
