"""Dense small-instance oracle for the penalized fixed-effects logit problem.

Builds the explicit dummy matrix ``w`` and the constraint matrix ``v``, evaluates
the scaled penalized negative log-likelihood

    L(beta, phi) = -(1/s) sum loglik + c1 / (2 s) phi' v v' phi,   s = sqrt(N T),

with its analytic gradient and Hessian, minimizes it by full Newton, and checks
the block structure of the incidental-parameter Hessian. Fixed-effect columns
are laid out on the full grid (alpha_it at ``i*T + t``, gamma_jt at ``j*T + t``,
rho_ij at ``i*J + j``) restricted to cells present in the panel. For ``I != J``
the scaling uses ``N = sqrt(I J)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.optimize import linprog

from .errors import AsymmetricPanel, NonConvergence, SingularHessian, TooLargeForDense
from .glm import logistic_link
from .panel import Panel

DENSE_CAP = 2000


def build_dummies(panel: Panel, cap: int = DENSE_CAP):
    """Indicator blocks ``(w1, w2, w3)`` for the it, jt and ij cells present in ``panel``.

    Returns the three blocks and, per block, the grid positions of its columns.
    """
    if panel.n > cap:
        raise TooLargeForDense(f"{panel.n} observations exceed the dense cap of {cap}")
    I, J, T = panel.I, panel.J, panel.T
    rows = np.arange(panel.n)
    blocks, positions = [], []
    for pos, size in ((panel.i * T + panel.t, I * T), (panel.j * T + panel.t, J * T),
                      (panel.i * J + panel.j, I * J)):
        present = np.unique(pos)
        col = np.searchsorted(present, pos)
        w = np.zeros((panel.n, present.size))
        w[rows, col] = 1.0
        blocks.append(w)
        positions.append(present)
    return tuple(blocks), tuple(positions)


def build_constraints(I: int, J: int, T: int) -> np.ndarray:
    """Constraint matrix of shape ``(IT + JT + IJ, T + I + J)``.

    Columns are grouped as T time constraints, I sender constraints and J
    receiver constraints; ``v' phi = 0`` pins the directions along which the
    linear index is invariant.
    """
    if min(I, J, T) < 2:
        raise ValueError("I, J and T must be at least 2")
    one = lambda k: np.ones((k, 1))  # noqa: E731
    eye = np.eye
    return np.block([
        [np.kron(one(I), eye(T)), np.kron(eye(I), one(T)), np.zeros((I * T, J))],
        [-np.kron(one(J), eye(T)), np.zeros((J * T, I)), np.kron(eye(J), one(T))],
        [np.zeros((I * J, T)), -np.kron(eye(I), one(J)), -np.kron(one(I), eye(J))],
    ])


@dataclass(frozen=True)
class OracleModel:
    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    v: np.ndarray
    c1: float
    scale: float
    I: int
    J: int
    T: int
    positions: tuple

    @property
    def w(self) -> np.ndarray:
        return np.hstack([self.w1, self.w2, self.w3])

    @property
    def n_phi(self) -> int:
        return self.w1.shape[1] + self.w2.shape[1] + self.w3.shape[1]

    def split(self, phi):
        a, b = self.w1.shape[1], self.w2.shape[1]
        return phi[:a], phi[a:a + b], phi[a + b:]


def build_oracle(panel: Panel, c1: float = 1.0, cap: int = DENSE_CAP) -> OracleModel:
    if not c1 > 0:
        raise ValueError("c1 must be positive")
    (w1, w2, w3), positions = build_dummies(panel, cap)
    I, J, T = panel.I, panel.J, panel.T
    v_full = build_constraints(I, J, T)
    offsets = (0, I * T, I * T + J * T)
    rows = np.concatenate([off + pos for off, pos in zip(offsets, positions)])
    scale = float(np.sqrt(np.sqrt(I * J) * T))
    return OracleModel(w1=w1, w2=w2, w3=w3, v=v_full[rows], c1=float(c1), scale=scale,
                       I=I, J=J, T=T, positions=positions)


def _index(model: OracleModel, panel: Panel, beta, phi):
    return panel.X @ np.asarray(beta, dtype=np.float64) + model.w @ np.asarray(phi, dtype=np.float64)


def penalized_objective(model: OracleModel, panel: Panel, beta, phi) -> float:
    eta = _index(model, panel, beta, phi)
    y = panel.y
    nll = np.sum(y * np.logaddexp(0.0, -eta) + (1.0 - y) * np.logaddexp(0.0, eta))
    vphi = model.v.T @ np.asarray(phi, dtype=np.float64)
    return float((nll + 0.5 * model.c1 * vphi @ vphi) / model.scale)


def penalized_gradient(model: OracleModel, panel: Panel, beta, phi) -> np.ndarray:
    """Gradient with respect to ``(beta, phi)``."""
    phi = np.asarray(phi, dtype=np.float64)
    r = logistic_link(_index(model, panel, beta, phi)).mu - panel.y
    g_beta = panel.X.T @ r
    g_phi = model.w.T @ r + model.c1 * model.v @ (model.v.T @ phi)
    return np.concatenate([g_beta, g_phi]) / model.scale


def penalized_hessian(model: OracleModel, panel: Panel, beta, phi) -> np.ndarray:
    """Hessian with respect to ``(beta, phi)``; the phi block carries ``c1 v v' / s``."""
    d1 = logistic_link(_index(model, panel, beta, phi)).d1
    Z = np.hstack([panel.X, model.w])
    H = (Z * d1[:, None]).T @ Z
    K = panel.K
    H[K:, K:] += model.c1 * model.v @ model.v.T
    return H / model.scale


def incidental_hessian(model: OracleModel, d1: np.ndarray) -> np.ndarray:
    """``(w' diag(d1) w + c1 v v') / s``."""
    w = model.w
    return ((w * d1[:, None]).T @ w + model.c1 * model.v @ model.v.T) / model.scale


@dataclass
class OracleFit:
    beta: np.ndarray
    phi: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    rho: np.ndarray
    hessian: np.ndarray
    mu: np.ndarray
    grad_norm: float
    iterations: int

    def beta_covariance(self, scale: float) -> np.ndarray:
        """Beta block of the inverse unscaled Hessian (``s`` times the scaled one)."""
        K = self.beta.size
        return linalg.inv(self.hessian)[:K, :K] / scale


def fit_penalized_newton(model: OracleModel, panel: Panel, tol: float = 1e-10, max_iter: int = 50) -> OracleFit:
    """Joint Newton minimization over ``(beta, phi)`` with step-halving.

    Raises
    ------
    SingularHessian
        The penalized Hessian failed a Cholesky factorization.
    NonConvergence
    """
    K = panel.K
    theta = np.zeros(K + model.n_phi)

    def parts(th):
        return th[:K], th[K:]

    f = penalized_objective(model, panel, *parts(theta))
    gnorm = np.inf
    for it in range(1, max_iter + 1):
        g = penalized_gradient(model, panel, *parts(theta))
        gnorm = float(np.max(np.abs(g)))
        H = penalized_hessian(model, panel, *parts(theta))
        if gnorm <= tol:
            break
        try:
            factor = linalg.cho_factor(H)
        except linalg.LinAlgError:
            raise SingularHessian("penalized Hessian is not positive definite") from None
        step = -linalg.cho_solve(factor, g)
        t = 1.0
        for _ in range(30):
            cand = theta + t * step
            f_new = penalized_objective(model, panel, *parts(cand))
            if f_new <= f + 1e-12 * abs(f):
                break
            t *= 0.5
        theta, f = cand, f_new
    else:
        g = penalized_gradient(model, panel, *parts(theta))
        gnorm = float(np.max(np.abs(g)))
        if gnorm > tol:
            raise NonConvergence("dense penalized Newton", max_iter, gnorm)
        H = penalized_hessian(model, panel, *parts(theta))
        it = max_iter
    beta, phi = parts(theta)
    a, b, r = model.split(phi)
    mu = logistic_link(_index(model, panel, beta, phi)).mu
    return OracleFit(beta=beta.copy(), phi=phi.copy(), alpha=a, gamma=b, rho=r, hessian=H, mu=mu,
                     grad_norm=gnorm, iterations=it)


def closed_form_alpha_block_inverse(N: int, T: int) -> np.ndarray:
    """Closed-form inverse of the alpha block of ``(w'w + v v') / sqrt(NT)`` for ``I = J = N = T``.

    Block-diagonal ``I_T - 1 1' / (2 sqrt(NT))`` plus, in every ``T x T`` block
    position, ``-I_T / (2 sqrt(NT)) + 1 1' / (3 NT)``.
    """
    s = np.sqrt(N * T)
    ones = np.ones((T, T))
    m_inv = np.kron(np.eye(N), np.eye(T) - ones / (2 * s))
    block = -np.eye(T) / (2 * s) + ones / (3 * N * T)
    return m_inv + np.kron(np.ones((N, N)), block)


@dataclass
class HessianReport:
    N: int
    T: int
    lambda_min: float
    c_min: float
    bound_margin: float
    block_inverse_max_err: float
    offdiag_max: float
    hinv_minus_dinv_max: float

    @property
    def positive_definite(self) -> bool:
        return self.lambda_min > 0


def verify_hessian_lemmas(model: OracleModel, panel: Panel, params) -> HessianReport:
    """Check the incidental-parameter Hessian algebra on a balanced ``I = J = T`` panel.

    Parameters
    ----------
    params : (beta, phi)
        Point at which the logistic Hessian is evaluated.

    The asymptotic eigenvalue bound ``(3/7) c_min`` is only reported as a margin.
    """
    I, J, T = model.I, model.J, model.T
    if I != J or not panel.is_balanced():
        raise AsymmetricPanel(f"need a balanced panel with I = J (got I={I}, J={J}, n={panel.n})")
    if I != T:
        raise AsymmetricPanel(f"closed-form block inverse needs N = T (got N={I}, T={T})")
    N = I
    beta, phi = params
    d1 = logistic_link(_index(model, panel, beta, phi)).d1
    H = incidental_hessian(model, d1)
    lam = float(np.linalg.eigvalsh(H)[0])
    c_min = float(d1.min())

    linear = OracleModel(model.w1, model.w2, model.w3, model.v, 1.0, model.scale, I, J, T, model.positions)
    Hlin_inv = linalg.inv(incidental_hessian(linear, np.ones(panel.n)))
    nt = N * T
    sizes = (nt, nt, N * N)
    bounds = np.cumsum((0,) + sizes)
    off = 0.0
    for a in range(3):
        for b in range(3):
            if a != b:
                blk = Hlin_inv[bounds[a]:bounds[a + 1], bounds[b]:bounds[b + 1]]
                off = max(off, float(np.max(np.abs(blk))))
    block_err = float(np.max(np.abs(closed_form_alpha_block_inverse(N, T) - Hlin_inv[:nt, :nt])))

    D_inv = 1.0 / np.diag(((model.w * d1[:, None]).T @ model.w) / model.scale)
    diff = linalg.inv(H) - np.diag(D_inv)
    return HessianReport(N=N, T=T, lambda_min=lam, c_min=c_min, bound_margin=lam - 3.0 / 7.0 * c_min,
                         block_inverse_max_err=block_err, offdiag_max=off,
                         hinv_minus_dinv_max=float(np.max(np.abs(diff))))


def is_separated(panel: Panel, cap: int = DENSE_CAP, tol: float = 1e-7) -> bool:
    """True if some direction in (beta, phi) weakly separates the outcomes.

    Solves ``max sum_o s_o z_o'd`` subject to ``s_o z_o'd >= 0`` and ``|d| <= 1``
    with ``s_o = 2 y_o - 1`` and ``z_o`` the full design row. A positive optimum
    means the likelihood has no finite maximizer.
    """
    (w1, w2, w3), _ = build_dummies(panel, cap)
    Z = np.hstack([panel.X, w1, w2, w3]) * (2.0 * panel.y - 1.0)[:, None]
    res = linprog(-Z.sum(axis=0), A_ub=-Z, b_ub=np.zeros(panel.n), bounds=(-1.0, 1.0), method="highs")
    if res.status != 0:
        raise RuntimeError(f"separation LP failed: {res.message}")
    return -res.fun > tol


def random_parameters(model: OracleModel, panel: Panel, rng: np.random.Generator, sd: float = 0.5):
    """Random ``(beta, phi)`` for Hessian checks."""
    return rng.normal(0.0, sd, size=panel.K), rng.normal(0.0, sd, size=model.n_phi)


def seeded_instances(count: int, N: int = 6, T: int = 4, seed: int = 0, max_tries: int = 200):
    """First ``count`` pruned simulated panels (seeds ``seed, seed+1, ...``) with a finite MLE.

    Seeds whose pruned panel is empty or separated are skipped. Returns a list
    of ``(seed, panel)``.
    """
    from .errors import NoInformativeData
    from .montecarlo import DgpConfig, generate
    from .panel import drop_uninformative

    out = []
    for s in range(seed, seed + max_tries):
        try:
            panel, _ = drop_uninformative(generate(DgpConfig(N=N, T=T, seed=s), 0))
        except NoInformativeData:
            continue
        if panel.K and not is_separated(panel):
            out.append((s, panel))
            if len(out) == count:
                return out
    raise RuntimeError(f"only {len(out)} usable instances in {max_tries} seeds")


@dataclass
class Equivalence:
    beta_abs_diff: float
    mu_abs_diff: float
    se_rel_diff: float


def compare_with_dense(panel: Panel, options=None, c1: float = 1.0) -> Equivalence:
    """Fit ``panel`` by the fast path and by dense Newton and measure the gaps."""
    from .debias import estimate

    fit, corrected = estimate(panel, options)
    model = build_oracle(panel, c1=c1)
    dense = fit_penalized_newton(model, panel)
    se_dense = np.sqrt(np.diag(dense.beta_covariance(model.scale)))
    return Equivalence(
        beta_abs_diff=float(np.max(np.abs(fit.beta - dense.beta))),
        mu_abs_diff=float(np.max(np.abs(fit.mu - dense.mu))),
        se_rel_diff=float(np.max(np.abs(corrected.se / se_dense - 1.0))),
    )


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool


@dataclass
class Verification:
    checks: list
    reports: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list:
        return [c for c in self.checks if not c.passed]


def run_verification(sizes=((4, 4), (5, 5)), seed: int = 42, options=None, n_random: int = 20,
                     equivalence_instance=(6, 4)) -> Verification:
    """Dense cross-checks: fast-vs-dense equivalence plus the Hessian algebra per size.

    Raises
    ------
    AsymmetricPanel
        If a size has ``N != T``.
    """
    from .montecarlo import DgpConfig, generate

    for N, T in sizes:
        if N != T:
            raise AsymmetricPanel(f"Hessian checks need N = T, got {N}x{T}")
    checks, reports = [], []

    def add(name, value, threshold, passed):
        checks.append(Check(name, float(value), float(threshold), bool(passed)))

    (s, panel), = seeded_instances(1, *equivalence_instance, seed=seed)
    eq = compare_with_dense(panel, options)
    add(f"dense_vs_fast_beta[seed={s}]", eq.beta_abs_diff, 1e-6, eq.beta_abs_diff < 1e-6)
    add(f"dense_vs_fast_mu[seed={s}]", eq.mu_abs_diff, 1e-6, eq.mu_abs_diff < 1e-6)
    add(f"dense_vs_fast_se[seed={s}]", eq.se_rel_diff, 1e-6, eq.se_rel_diff < 1e-6)

    rng = np.random.default_rng(seed)
    for N, T in sizes:
        panel = generate(DgpConfig(N=N, T=T, seed=seed), 0)
        model = build_oracle(panel)
        wv = float(np.max(np.abs(model.w @ model.v)))
        add(f"w_v_zero[{N}x{T}]", wv, 0.0, wv == 0.0)
        rank = np.linalg.matrix_rank(model.v)
        add(f"rank_v[{N}x{T}]", rank, T + 2 * N - 1, rank == T + 2 * N - 1)
        lam_min = np.inf
        for _ in range(n_random):
            rep = verify_hessian_lemmas(model, panel, random_parameters(model, panel, rng))
            reports.append(rep)
            lam_min = min(lam_min, rep.lambda_min)
        add(f"block_inverse[{N}x{T}]", rep.block_inverse_max_err, 1e-10, rep.block_inverse_max_err < 1e-10)
        add(f"offdiag_inverse[{N}x{T}]", rep.offdiag_max, 1e-10, rep.offdiag_max < 1e-10)
        add(f"lambda_min_positive[{N}x{T}]", lam_min, 0.0, lam_min > 0)
    return Verification(checks=checks, reports=reports)
