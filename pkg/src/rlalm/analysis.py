"""Convergence diagnostics for the relaxed linearized AL methods.

Duality gaps and their ergodic averages, the ``O(1/K)`` gap bounds of the
simple and proposed relaxations, the two-by-two modal recursion behind the
continuation sequence, and a positive-semidefiniteness checker.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigurationError, RegimeError
from .metrics import rms_difference
from .operators import DiagonalMajorizer, MatrixOperator
from .problem import CompositeProblem, L1Norm, QuadraticLoss
from .solvers import fgm_restart_run, initial_state, lalm_proposed_quadratic_step

__all__ = [
    "SaddlePointEstimate",
    "saddle_from_minimizer",
    "estimate_saddle_point",
    "duality_gap",
    "ergodic_average",
    "gap_curves",
    "bound_terms",
    "theorem1_bound",
    "theorem2_bound",
    "TransitionMatrix2x2",
    "transition_matrix",
    "critical_rho",
    "critical_rho_numeric",
    "damping_frequency",
    "observed_mode_contraction",
    "check_psd_H",
    "rms_difference",
    "LassoInstance",
    "lasso_instance",
]


@dataclass(frozen=True)
class SaddlePointEstimate:
    """Approximate saddle point ``(x_hat, u_hat, mu_hat)`` of the Lagrangian."""

    x_hat: np.ndarray
    u_hat: np.ndarray
    mu_hat: np.ndarray
    source: str = "minimizer"


def saddle_from_minimizer(problem, x_hat, source="minimizer"):
    """Complete a primal minimizer to a saddle point.

    ``u_hat = A x_hat`` and ``mu_hat = -grad g_y(u_hat)``, i.e. ``y - u_hat``
    for the unweighted loss.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    u_hat = problem.op.apply(x_hat)
    return SaddlePointEstimate(x_hat, u_hat, -problem.loss.grad(u_hat, problem.data), source)


def _polish_l1(problem, x, rel_tol=1e-9):
    """Exact LASSO solution on the support and signs of ``x``, if it passes KKT."""
    a = problem.op.toarray()
    lam = problem.prox_part.lam
    scale = max(np.abs(x).max(), 1e-300)
    support = np.abs(x) > 1e-9 * scale
    if not support.any():
        return None
    signs = np.sign(x[support])
    a_s = a[:, support]
    try:
        xs = np.linalg.solve(a_s.T @ a_s, a_s.T @ problem.data - lam * signs)
    except np.linalg.LinAlgError:
        return None
    if np.any(np.sign(xs) != signs):
        return None
    cand = np.zeros_like(x)
    cand[support] = xs
    corr = a.T @ (problem.data - a @ cand)
    if np.any(np.abs(corr[~support]) > lam * (1.0 + rel_tol)):
        return None
    return cand


def estimate_saddle_point(problem, iterations=20000, x0=None, polish=True):
    """Saddle estimate from a long restarted-FGM run.

    For an l1 problem with unweighted loss, no smooth part and a dense
    operator, the FGM result is refined by solving the optimality system on
    its support; the refinement is kept only if it satisfies the optimality
    conditions and does not increase the cost.
    """
    x_hat = fgm_restart_run(problem, iterations, x0=x0)
    source = "fgm-restart"
    if (
        polish
        and isinstance(problem.prox_part, L1Norm)
        and problem.smooth_part is None
        and problem.loss.is_isotropic
        and isinstance(problem.op, MatrixOperator)
    ):
        cand = _polish_l1(problem, x_hat)
        if cand is not None and problem.cost(cand) <= problem.cost(x_hat):
            x_hat, source = cand, "fgm-restart+active-set"
    return saddle_from_minimizer(problem, x_hat, source)


def duality_gap(w, saddle, problem):
    """``f(x, u) - f(x_hat, u_hat) - <mu_hat, A x - u>``.

    ``w`` is ``(x, u)`` or ``(x, u, mu)``; the multiplier of ``w`` does not
    enter the gap.
    """
    x, u = w[0], w[1]
    f = problem.split_cost(x, u)
    f_hat = problem.split_cost(saddle.x_hat, saddle.u_hat)
    return f - f_hat - float(np.dot(saddle.mu_hat, problem.op.apply(x) - u))


def ergodic_average(history, K):
    """Mean of iterates ``1..K`` of ``history`` (index 0 is the start)."""
    if K < 1:
        raise ConfigurationError("K must be at least 1")
    if K >= len(history):
        raise ConfigurationError(f"K={K} exceeds the {len(history) - 1} available iterates")
    return np.mean(np.asarray(history[1 : K + 1], dtype=float), axis=0)


def gap_curves(problem, states, saddle):
    """Ergodic and non-ergodic gaps for ``K = 1 .. len(states) - 1``.

    ``states`` is a list of :class:`SolverState` with ``x`` and ``u``
    populated, starting with the initial state.
    """
    xs = np.array([s.x for s in states[1:]])
    us = np.array([s.u for s in states[1:]])
    counts = np.arange(1, len(xs) + 1)[:, None]
    x_bar = np.cumsum(xs, axis=0) / counts
    u_bar = np.cumsum(us, axis=0) / counts
    ergodic = np.array([duality_gap((x, u), saddle, problem) for x, u in zip(x_bar, u_bar)])
    nonergodic = np.array([duality_gap((x, u), saddle, problem) for x, u in zip(xs, us)])
    return ergodic, nonergodic


def bound_terms(x0, u0, mu0, saddle, d_psi, d_a, rho, alpha, problem):
    """The constants ``(A, B, C)`` of the ``O(1/K)`` gap bounds.

    ``A = 1/2 ||x0 - x_hat||^2_{D_psi}``,
    ``B = rho/2 ||x0 - x_hat||^2_{D_A - A'A}`` and
    ``C = 1/(2 alpha) (sqrt(rho) ||u0 - u_hat|| + ||mu0 - mu_hat|| / sqrt(rho))^2``.
    """
    if not rho > 0:
        raise ConfigurationError("rho must be positive")
    if not 0 < alpha < 2:
        raise ConfigurationError("alpha must lie in (0, 2)")
    d_psi = getattr(d_psi, "entries", d_psi)
    d_a = getattr(d_a, "entries", d_a)
    e = np.asarray(x0, dtype=float) - saddle.x_hat
    a_term = 0.5 * float(np.dot(d_psi * e, e))
    ae = problem.op.apply(e)
    b_term = 0.5 * rho * max(float(np.dot(d_a * e, e) - np.dot(ae, ae)), 0.0)
    c_term = (
        math.sqrt(rho) * np.linalg.norm(np.asarray(u0) - saddle.u_hat)
        + np.linalg.norm(np.asarray(mu0) - saddle.mu_hat) / math.sqrt(rho)
    ) ** 2 / (2.0 * alpha)
    return a_term, b_term, float(c_term)


def theorem1_bound(K, x0, u0, mu0, saddle, d_psi, d_a, rho, alpha, problem):
    """Ergodic gap bound ``(A + B + C) / K`` for the simple relaxation."""
    a_term, b_term, c_term = bound_terms(x0, u0, mu0, saddle, d_psi, d_a, rho, alpha, problem)
    return (a_term + b_term + c_term) / K


def theorem2_bound(K, x0, u0, mu0, saddle, d_psi, d_a, rho, alpha, problem):
    """Ergodic gap bound ``(A + B / alpha + C) / K`` for the proposed relaxation."""
    a_term, b_term, c_term = bound_terms(x0, u0, mu0, saddle, d_psi, d_a, rho, alpha, problem)
    return (a_term + b_term / alpha + c_term) / K


@dataclass(frozen=True)
class TransitionMatrix2x2:
    """Modal transition matrix of the quadratic-loss recursion on ``(g_i, h_i)``."""

    t11: float
    t12: float
    t21: float
    t22: float
    lambda_i: float
    L_A: float
    rho: float
    alpha: float

    @property
    def matrix(self):
        return np.array([[self.t11, self.t12], [self.t21, self.t22]])

    @property
    def trace(self):
        return self.t11 + self.t22

    @property
    def det(self):
        return self.t11 * self.t22 - self.t12 * self.t21

    @property
    def discriminant(self):
        """``trace^2 - 4 det``; negative means complex (oscillating) eigenvalues."""
        return self.trace**2 - 4.0 * self.det

    def eigenvalues(self):
        return np.linalg.eigvals(self.matrix)

    def spectral_radius(self):
        return float(np.max(np.abs(self.eigenvalues())))


def transition_matrix(lambda_i, L_A, rho, alpha):
    """Transition matrix of mode ``lambda_i`` for ``D_A = L_A I``, ``y = 0``, ``h = 0``."""
    if not 0 < lambda_i <= L_A:
        raise ConfigurationError(f"need 0 < lambda_i <= L_A, got lambda_i={lambda_i}, L_A={L_A}")
    if not rho > 0:
        raise ConfigurationError("rho must be positive")
    c = 1.0 / (rho * L_A)
    a = alpha * rho * lambda_i / (rho + 1.0)
    b = alpha * (L_A - lambda_i)
    return TransitionMatrix2x2(
        t11=a * c * (rho - 1.0) + ((1.0 - alpha) * rho + 1.0) / (rho + 1.0),
        t12=a * c * rho,
        t21=b * c * (rho - 1.0),
        t22=b * c * rho + (1.0 - alpha),
        lambda_i=lambda_i,
        L_A=L_A,
        rho=rho,
        alpha=alpha,
    )


def critical_rho(lambda_1, L_A):
    """Penalty at which the slowest mode becomes critically damped."""
    if not 0 < lambda_1 <= L_A:
        raise ConfigurationError(f"need 0 < lambda_1 <= L_A, got {lambda_1}, {L_A}")
    r = lambda_1 / L_A
    return 2.0 * math.sqrt(r * (1.0 - r))


def critical_rho_numeric(lambda_1, L_A, alpha, rho_min=1e-8, rho_max=10.0, grid=4000):
    """Smallest root in ``rho`` of the transition-matrix discriminant.

    Scans a geometric grid for a sign change and refines with Brent's method.
    """
    rhos = np.geomspace(rho_min, rho_max, grid)
    disc = np.array([transition_matrix(lambda_1, L_A, r, alpha).discriminant for r in rhos])
    idx = np.nonzero(np.sign(disc[:-1]) * np.sign(disc[1:]) < 0)[0]
    if idx.size == 0:
        raise RegimeError("discriminant has no sign change on the scanned range")
    i = idx[0]
    return brentq(
        lambda r: transition_matrix(lambda_1, L_A, r, alpha).discriminant,
        rhos[i],
        rhos[i + 1],
        xtol=1e-15,
        rtol=4 * np.finfo(float).eps,
        maxiter=500,
    )


def damping_frequency(lambda_1, L_A, alpha, rho_small=1e-3):
    """Oscillation frequency ``omega_1`` of the slowest mode at small ``rho``.

    ``cos(omega_1) = trace / sqrt(4 det)`` of the transition matrix.
    Raises :class:`RegimeError` when the mode does not oscillate.
    """
    t = transition_matrix(lambda_1, L_A, rho_small, alpha)
    if t.det <= 0:
        raise RegimeError("non-positive determinant: no oscillating mode")
    cos_w = t.trace / math.sqrt(4.0 * t.det)
    if abs(cos_w) > 1.0:
        raise RegimeError(f"|cos(omega)| = {abs(cos_w):.6g} > 1: overdamped, no oscillation")
    return math.acos(cos_w)


def observed_mode_contraction(lambdas, L_A, rho, alpha, iterations=300, burn_in=100, seed=0):
    """Empirical per-step contraction of each mode of the quadratic toy problem.

    Runs the quadratic-loss proposed relaxed iteration (fixed ``rho``) on
    ``min 1/2 ||A x||^2`` with ``A = diag(sqrt(lambdas))`` and ``D_A = L_A I``,
    and fits the decay rate of ``||(g_i, h_i)||`` after ``burn_in`` steps.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    n = lambdas.size
    op = MatrixOperator(np.diag(np.sqrt(lambdas)))
    problem = CompositeProblem(op, np.zeros(n), QuadraticLoss(), d_a=DiagonalMajorizer.constant(L_A, n))
    rng = np.random.default_rng(seed)
    state = initial_state(problem, rng.standard_normal(n), "quadratic")
    logs = []
    for k in range(iterations):
        state = lalm_proposed_quadratic_step(state, problem, alpha, rho)
        norms = np.hypot(state.g, state.h)
        if k >= burn_in:
            logs.append(np.log(np.maximum(norms, 1e-300)))
        if np.all(norms < 1e-250):
            break
    logs = np.array(logs)
    if len(logs) < 2:
        raise ConfigurationError("not enough iterations after burn-in to fit a rate")
    steps = np.arange(len(logs))
    rates = np.empty(n)
    for i in range(n):
        live = logs[:, i] > math.log(1e-280)
        if live.sum() < 2:
            rates[i] = 0.0
            continue
        slope = np.polyfit(steps[live], logs[live, i], 1)[0]
        rates[i] = math.exp(slope)
    return rates


def check_psd_H(alpha, rho, b_matrix, d_psi, p_matrix, tol=1e-10):
    """Minimum eigenvalue of the block matrix used in the relaxed-ADMM analysis.

    ``H = [[D_psi + P, 0, 0], [0, rho/alpha B'B, (1-alpha)/alpha B'],
    [0, (1-alpha)/alpha B, 1/(alpha rho) I]]``.

    Returns
    -------
    min_eigenvalue : float
    is_psd : bool
        ``min_eigenvalue >= -tol``.
    """
    b = np.atleast_2d(np.asarray(b_matrix, dtype=float))
    p = np.atleast_2d(np.asarray(p_matrix, dtype=float))
    d = np.asarray(getattr(d_psi, "entries", d_psi), dtype=float)
    d = np.diag(d) if d.ndim == 1 else d
    n, (m, q) = p.shape[0], b.shape
    top = d + p
    size = n + q + m
    h = np.zeros((size, size))
    h[:n, :n] = top
    h[n : n + q, n : n + q] = (rho / alpha) * b.T @ b
    h[n : n + q, n + q :] = ((1.0 - alpha) / alpha) * b.T
    h[n + q :, n : n + q] = ((1.0 - alpha) / alpha) * b
    h[n + q :, n + q :] = np.eye(m) / (alpha * rho)
    lo = float(np.linalg.eigvalsh(0.5 * (h + h.T))[0])
    return lo, lo >= -tol


@dataclass(frozen=True)
class LassoInstance:
    """Random sparse-regression instance with its standard AL starting point."""

    problem: CompositeProblem
    x_true: np.ndarray
    x0: np.ndarray
    u0: np.ndarray
    mu0: np.ndarray
    L_A: float


def lasso_instance(m=100, n=400, sparsity=20, noise_var=0.1, lam=1.0, seed=0):
    """``min 1/2 ||y - A x||^2 + lam ||x||_1`` with iid standard normal ``A``.

    The truth has ``sparsity`` standard-normal entries at random positions,
    ``y = A x_true + noise`` with noise variance ``noise_var``, and
    ``D_A = lambda_max(A'A) I``.  The start is ``x0 = pinv(A) y``,
    ``u0 = A x0`` and ``mu0 = y - u0``.
    """
    if not 0 < sparsity <= n:
        raise ConfigurationError("sparsity must lie in [1, n]")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, n))
    x_true = np.zeros(n)
    x_true[rng.choice(n, size=sparsity, replace=False)] = rng.standard_normal(sparsity)
    y = a @ x_true + math.sqrt(noise_var) * rng.standard_normal(m)
    op = MatrixOperator(a)
    # the small Gram matrix shares the nonzero spectrum of A'A
    L_A = float(np.linalg.eigvalsh(a @ a.T)[-1]) if m <= n else float(np.linalg.eigvalsh(a.T @ a)[-1])
    problem = CompositeProblem(op, y, QuadraticLoss(), L1Norm(lam), d_a=DiagonalMajorizer.constant(L_A, n))
    x0 = np.linalg.lstsq(a, y, rcond=None)[0]
    u0 = a @ x0
    return LassoInstance(problem, x_true, x0, u0, y - u0, L_A)
