"""Analytic incidental-parameter bias correction, standard errors and odds ratios."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DegenerateCell, SingularW
from .glm import FitOptions, FitResult, LinkEval, _Projector, fit_mle
from .panel import Panel

Z95 = 1.959964


@dataclass(frozen=True)
class ProjectionResiduals:
    """Residuals of each regressor after weighted projection on the dummy span."""

    xtilde: np.ndarray
    weights: np.ndarray
    sweeps: int


@dataclass(frozen=True)
class BiasComponents:
    B_alpha: np.ndarray
    B_gamma: np.ndarray
    B_rho: np.ndarray
    W_hat: np.ndarray


@dataclass
class CorrectedFit:
    """Uncorrected and debiased coefficients with their inference quantities.

    ``se`` is shared by both coefficient sets since everything is evaluated at
    the uncorrected optimum.
    """

    x_names: tuple
    beta_uncorrected: np.ndarray
    beta_debiased: np.ndarray
    bias: BiasComponents
    se: np.ndarray
    z: np.ndarray
    z_uncorrected: np.ndarray
    I: int
    J: int
    T: int
    n: int
    correction: np.ndarray
    odds_ratio: np.ndarray | None = None
    or_se: np.ndarray | None = None
    or_z: np.ndarray | None = None
    odds_ratio_uncorrected: np.ndarray | None = None
    or_se_uncorrected: np.ndarray | None = None
    or_z_uncorrected: np.ndarray | None = None
    bias_corrected: bool = True

    def conf_int(self, debiased: bool = True, z: float = Z95) -> np.ndarray:
        b = self.beta_debiased if debiased else self.beta_uncorrected
        return np.column_stack([b - z * self.se, b + z * self.se])


def projection_residuals(panel: Panel, link: LinkEval, tol: float = 1e-8, max_sweeps: int = 10000,
                         start=None) -> ProjectionResiduals:
    """Demean every regressor with weights ``mu'(eta_hat)`` over the three families."""
    proj = _Projector(panel, link.d1)
    R, sweeps = proj.residuals(panel.X, tol, max_sweeps, start)
    return ProjectionResiduals(xtilde=R, weights=link.d1, sweeps=sweeps)


def bias_components(panel: Panel, link: LinkEval, xtilde: ProjectionResiduals) -> BiasComponents:
    """Plug-in bias components for each fixed-effect family and the profile Hessian.

    For every cell the ratio ``sum(mu'' * xtilde) / sum(mu')`` is formed; each bias
    component is minus one half of the average ratio over the cells of its family.
    ``W_hat`` is ``sum(mu' * xtilde xtilde') / n``. Unbalanced panels use the actual
    cell counts and ``n``.
    """
    xt = xtilde.xtilde
    d1, d2 = link.d1, link.d2
    out = []
    for fam in ("it", "jt", "ij"):
        codes = panel.codes(fam)
        G = panel.n_cells(fam)
        den = np.bincount(codes, weights=d1, minlength=G)
        if np.any(den < 1e-12):
            g = int(np.argmin(den))
            raise DegenerateCell(f"{fam}-cell {panel.cell_label(fam, g)} has total weight {den[g]:.3e}")
        num = np.column_stack([np.bincount(codes, weights=d2 * xt[:, k], minlength=G)
                               for k in range(xt.shape[1])])
        out.append(-0.5 * np.mean(num / den[:, None], axis=0))
    W = (xt * d1[:, None]).T @ xt / panel.n
    W = 0.5 * (W + W.T)
    return BiasComponents(B_alpha=out[0], B_gamma=out[1], B_rho=out[2], W_hat=W)


def _inverse_W(W: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(W)):
        raise SingularW("profile Hessian has non-finite entries")
    cond = np.linalg.cond(W)
    if not cond < 1e12:
        raise SingularW(f"profile Hessian condition number {cond:.3e} exceeds 1e12")
    try:
        factor = linalg.cho_factor(W)
    except linalg.LinAlgError:
        raise SingularW("profile Hessian is not positive definite") from None
    return linalg.cho_solve(factor, np.eye(W.shape[0]))


def debias(fit: FitResult, bias: BiasComponents, dims: dict) -> CorrectedFit:
    """Subtract the estimated leading bias from the uncorrected coefficients.

    ``beta_debiased = beta - W^-1 (B_alpha / J + B_gamma / I + B_rho / T)`` and
    ``se = sqrt(diag(W^-1) / n)``.

    Parameters
    ----------
    fit : FitResult
    bias : BiasComponents
    dims : mapping with keys ``I``, ``J``, ``T``, ``n``
    """
    I, J, T, n = (int(dims[k]) for k in ("I", "J", "T", "n"))
    Winv = _inverse_W(bias.W_hat)
    correction = Winv @ (bias.B_alpha / J + bias.B_gamma / I + bias.B_rho / T)
    beta = np.asarray(fit.beta, dtype=np.float64)
    beta_tilde = beta - correction
    se = np.sqrt(np.diag(Winv) / n)
    return CorrectedFit(
        x_names=tuple(fit.x_names), beta_uncorrected=beta, beta_debiased=beta_tilde, bias=bias,
        se=se, z=beta_tilde / se, z_uncorrected=beta / se, I=I, J=J, T=T, n=n, correction=correction,
    )


def odds_ratio_table(beta, se):
    """``(exp(beta), exp(beta) * se, (exp(beta) - 1) / (exp(beta) * se))`` by the delta method."""
    beta = np.asarray(beta, dtype=np.float64)
    se = np.asarray(se, dtype=np.float64)
    odds = np.exp(beta)
    odds_se = odds * se
    return odds, odds_se, (odds - 1.0) / odds_se


def odds_ratios(corrected: CorrectedFit) -> CorrectedFit:
    c = corrected
    c.odds_ratio, c.or_se, c.or_z = odds_ratio_table(c.beta_debiased, c.se)
    c.odds_ratio_uncorrected, c.or_se_uncorrected, c.or_z_uncorrected = odds_ratio_table(
        c.beta_uncorrected, c.se)
    return c


def estimate(panel: Panel, options: FitOptions | None = None):
    """Fit, debias and compute odds ratios on an already pruned panel.

    Returns ``(FitResult, CorrectedFit)``.
    """
    opts = options or FitOptions()
    fit = fit_mle(panel, opts)
    xt = projection_residuals(panel, fit.link, opts.inner_tol, opts.max_sweeps)
    bias = bias_components(panel, fit.link, xt)
    dims = {"I": panel.I, "J": panel.J, "T": panel.T, "n": panel.n}
    return fit, odds_ratios(debias(fit, bias, dims))
