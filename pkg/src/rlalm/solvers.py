"""Relaxed linearized augmented Lagrangian solvers and baselines.

Non-OS forms are exposed as single-step functions acting on an immutable
:class:`SolverState`:

* :func:`relaxed_al_step` - exact relaxed AL / ADMM (dense, oracle use only)
* :func:`lalm_simple_relaxed_step` - LALM with the relaxation applied to ``u``
* :func:`lalm_proposed_literal_step` - LALM with the redundant constraint
  ``v = G^(1/2) x``, using an explicit ``G^(1/2)``
* :func:`lalm_proposed_practical_step` - the same iteration without ``G^(1/2)``
* :func:`lalm_proposed_quadratic_step` - its quadratic-loss simplification

Ordered-subset runners (:func:`os_relaxed_lalm_run`,
:func:`os_simple_relaxed_lalm_run`, :func:`os_sqs_run`) and the reference
generator :func:`fgm_restart_run` work on whole problems.
"""

from dataclasses import dataclass, field, replace
import csv
import io
import logging
import math
import time

import numpy as np

from .errors import ConfigurationError, DivergenceError, MajorizationError, NumericalError, ShapeError
from .metrics import rms_difference
from .operators import CountingOperator, MatrixOperator, OperationCounter

__all__ = [
    "SolverConfig",
    "SolverState",
    "ConvergenceRecord",
    "RECORD_COLUMNS",
    "FORMS",
    "initial_state",
    "g_sqrt_matrix",
    "relaxed_al_step",
    "lalm_simple_relaxed_step",
    "lalm_proposed_literal_step",
    "lalm_proposed_practical_step",
    "lalm_proposed_quadratic_step",
    "run_steps",
    "continuation_rho",
    "partition_subsets",
    "os_relaxed_lalm_run",
    "os_simple_relaxed_lalm_run",
    "os_sqs_run",
    "fgm_restart_run",
]

log = logging.getLogger(__name__)

RECORD_COLUMNS = ("k", "rho", "cost", "rms_hu", "ergodic_gap", "nonergodic_gap", "wall_seconds")
FORMS = ("relaxed_al", "simple", "literal", "practical", "quadratic")
DIVERGENCE_FACTOR = 10.0


def _check_alpha(alpha):
    if not 0.0 < alpha < 2.0:
        raise ConfigurationError(f"alpha must lie in (0, 2), got {alpha}")


def _check_rho(rho):
    if not rho > 0.0:
        raise ConfigurationError(f"rho must be positive, got {rho}")


@dataclass(frozen=True)
class SolverConfig:
    """Run parameters shared by the ordered-subset runners.

    ``rho=None`` selects the continuation sequence; a positive value fixes
    the AL penalty.  ``iterations`` counts full passes over the subsets.
    """

    alpha: float = 1.999
    rho: float = None
    subsets: int = 1
    iterations: int = 20
    d_psi_mode: str = "huber"
    seed: int = 0
    record_time: bool = False

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.rho is not None:
            _check_rho(self.rho)
        if self.subsets < 1:
            raise ConfigurationError("number of subsets must be at least 1")
        if self.iterations < 1:
            raise ConfigurationError("iterations must be positive")
        if self.d_psi_mode not in ("huber", "max_curvature"):
            raise ConfigurationError(f"unknown d_psi_mode {self.d_psi_mode!r}")

    @property
    def rho_mode(self):
        return "continuation" if self.rho is None else "fixed"

    def rho_at(self, k):
        return continuation_rho(k, self.alpha) if self.rho is None else self.rho


@dataclass(frozen=True)
class SolverState:
    """Iterate bundle; fields not used by a given form stay ``None``.

    ``ax`` caches ``A x``; ``q`` and ``m`` cache ``A'(u - y)`` and ``A' mu``
    so the practical form needs a single back-projection per step.
    """

    x: np.ndarray
    u: np.ndarray = None
    mu: np.ndarray = None
    v: np.ndarray = None
    nu: np.ndarray = None
    h: np.ndarray = None
    g: np.ndarray = None
    zeta: np.ndarray = None
    ax: np.ndarray = None
    q: np.ndarray = None
    m: np.ndarray = None
    rho: float = 1.0
    k: int = 0

    def is_finite(self):
        return all(
            np.all(np.isfinite(getattr(self, name)))
            for name in ("x", "u", "mu", "v", "nu", "h", "g", "zeta")
            if getattr(self, name) is not None
        )


class ConvergenceRecord:
    """Per-(sub)iteration metrics; ``k`` must increase strictly.

    Undefined metrics are stored as ``None`` and written as empty CSV fields.
    """

    def __init__(self, label="", subsets=1):
        self.label = label
        self.subsets = subsets
        self.rows = []

    def append(self, k, **metrics):
        unknown = set(metrics) - set(RECORD_COLUMNS)
        if unknown:
            raise ConfigurationError(f"unknown record columns {sorted(unknown)}")
        if self.rows and k <= self.rows[-1]["k"]:
            raise ConfigurationError(f"record index must increase, got {k} after {self.rows[-1]['k']}")
        row = dict.fromkeys(RECORD_COLUMNS)
        row.update(metrics, k=int(k))
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([np.nan if r[name] is None else r[name] for r in self.rows], dtype=float)

    def row_at(self, k):
        for r in self.rows:
            if r["k"] == k:
                return r
        raise KeyError(k)

    def at_iteration(self, n, name="rms_hu"):
        """Metric after ``n`` full iterations (``n * subsets`` subiterations)."""
        return self.row_at(n * self.subsets)[name]

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(RECORD_COLUMNS)
        for r in self.rows:
            writer.writerow(["" if r[c] is None else (r[c] if c == "k" else repr(float(r[c]))) for c in RECORD_COLUMNS])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path, label="", subsets=1):
        rec = cls(label, subsets)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != RECORD_COLUMNS:
                raise ConfigurationError(f"{path}: unexpected header {reader.fieldnames}")
            for r in reader:
                rec.append(
                    int(r["k"]),
                    **{c: (None if r[c] == "" else float(r[c])) for c in RECORD_COLUMNS[1:]},
                )
        return rec


# ---------------------------------------------------------------------------
# non-OS single steps


def _dense(op):
    if isinstance(op, CountingOperator):
        op = op.op
    if isinstance(op, MatrixOperator):
        return op.toarray()
    return np.column_stack([op.apply(e) for e in np.eye(op.domain_dim)])


def g_sqrt_matrix(problem, tol=1e-8):
    """Symmetric square root of ``G = D_A - A'A`` by eigendecomposition."""
    a = _dense(problem.op)
    gmat = np.diag(problem.d_a.entries) - a.T @ a
    w, vecs = np.linalg.eigh(0.5 * (gmat + gmat.T))
    if w.min() < -tol:
        raise MajorizationError(f"D_A - A'A has eigenvalue {w.min():.3e} < {-tol:.1e}")
    return (vecs * np.sqrt(np.clip(w, 0.0, None))) @ vecs.T


def initial_state(problem, x0, form, u0=None, mu0=None, g_sqrt=None):
    """Build the starting state of a given form.

    Defaults follow the usual AL initialization ``u0 = A x0`` and
    ``mu0 = -grad g_y(u0)`` (``y - u0`` for the unweighted loss).  The
    practical form starts from ``h0 = D_A x0 - A'(A x0 - y)``; the quadratic
    form from ``g0 = zeta0`` and ``h0 = D_A x0 - zeta0``.
    """
    if form not in FORMS:
        raise ConfigurationError(f"unknown form {form!r}; choose from {FORMS}")
    x0 = np.array(x0, dtype=float)
    if x0.shape != (problem.num_unknowns,):
        raise ShapeError(f"x0 must have shape ({problem.num_unknowns},), got {x0.shape}")
    y = problem.data
    ax = problem.op.apply(x0)
    if form == "quadratic":
        if not problem.loss.is_isotropic:
            raise ConfigurationError("quadratic form requires an unweighted quadratic loss")
        zeta = problem.op.adjoint(ax - y)
        return SolverState(x=x0, g=zeta, zeta=zeta, h=problem.d_a.entries * x0 - zeta, ax=ax)
    u = ax.copy() if u0 is None else np.array(u0, dtype=float)
    mu = -problem.loss.grad(u, y) if mu0 is None else np.array(mu0, dtype=float)
    state = SolverState(x=x0, u=u, mu=mu, ax=ax)
    if form == "literal":
        if g_sqrt is None:
            g_sqrt = g_sqrt_matrix(problem)
        state = replace(state, v=g_sqrt @ x0, nu=np.zeros(x0.size))
    elif form == "practical":
        zeta = problem.op.adjoint(ax - y)
        state = replace(state, h=problem.d_a.entries * x0 - zeta, zeta=zeta)
        if problem.loss.is_isotropic:
            state = replace(state, q=problem.op.adjoint(u - y), m=problem.op.adjoint(mu))
    return state


def _prox_step(problem, x, grad_smooth, hess):
    """``argmin phi + linearized smooth part + 1/2 ||. - x||^2_diag(hess)``."""
    safe = np.where(hess > 0, hess, 1.0)
    return problem.prox(x - grad_smooth / safe, hess, x)


def _relax_u(problem, state, ax_new, alpha, rho):
    r = alpha * ax_new + (1.0 - alpha) * state.u
    u = problem.loss.u_update(problem.data, state.mu, r, rho)
    mu = state.mu - rho * (r - u)
    return u, mu


def _solve_al_x(problem, a, target, rho, x_start, tol=1e-14, max_iter=200000):
    """``argmin_x phi(x) + rho/2 ||A x - target||^2`` exactly (dense)."""
    ata = a.T @ a
    eig = np.linalg.eigvalsh(ata)
    if eig[0] <= 1e-12 * max(eig[-1], 1e-300):
        raise NumericalError("A'A is singular; the exact x-subproblem has no unique solution")
    rhs = a.T @ target
    if problem.prox_part is None:
        return np.linalg.solve(ata, rhs)
    # accelerated proximal gradient with the optimal strongly convex momentum
    lip, mu = rho * eig[-1], rho * eig[0]
    beta = (math.sqrt(lip) - math.sqrt(mu)) / (math.sqrt(lip) + math.sqrt(mu))
    hess = np.full(a.shape[1], lip)
    x = x_start.copy()
    z = x.copy()
    for _ in range(max_iter):
        x_new = problem.prox(z - rho * (ata @ z - rhs) / lip, hess, z)
        if np.linalg.norm(x_new - x) <= tol * max(1.0, np.linalg.norm(x_new)):
            return x_new
        z = x_new + beta * (x_new - x)
        x = x_new
    raise NumericalError("exact x-subproblem did not converge")


def relaxed_al_step(state, problem, alpha, rho):
    """One exact relaxed AL (ADMM) step; small dense problems with ``psi = 0``."""
    _check_alpha(alpha)
    _check_rho(rho)
    if problem.smooth_part is not None:
        raise ConfigurationError("exact relaxed AL step supports psi = 0 only")
    a = _dense(problem.op)
    x = _solve_al_x(problem, a, state.u + state.mu / rho, rho, state.x)
    ax = a @ x
    u, mu = _relax_u(problem, state, ax, alpha, rho)
    return replace(state, x=x, u=u, mu=mu, ax=ax, rho=rho, k=state.k + 1)


def lalm_simple_relaxed_step(state, problem, alpha, rho, d_psi_mode="max_curvature"):
    """One step of LALM with simple relaxation (relaxation on ``u`` only)."""
    _check_alpha(alpha)
    _check_rho(rho)
    x = state.x
    ax = problem.op.apply(x) if state.ax is None else state.ax
    grad = problem.psi_grad(x) + problem.op.adjoint(rho * (ax - state.u) - state.mu)
    hess = rho * problem.d_a.entries + problem.psi_curvature(x, d_psi_mode)
    x_new = _prox_step(problem, x, grad, hess)
    ax_new = problem.op.apply(x_new)
    u, mu = _relax_u(problem, state, ax_new, alpha, rho)
    return replace(state, x=x_new, u=u, mu=mu, ax=ax_new, rho=rho, k=state.k + 1)


def lalm_proposed_literal_step(state, problem, alpha, rho, g_sqrt, d_psi_mode="max_curvature"):
    """One step of the redundant-constraint form with an explicit ``G^(1/2)``."""
    _check_alpha(alpha)
    _check_rho(rho)
    x = state.x
    ax = problem.op.apply(x) if state.ax is None else state.ax
    grad = (
        problem.psi_grad(x)
        + problem.op.adjoint(rho * (ax - state.u) - state.mu)
        + g_sqrt @ (rho * (g_sqrt @ x - state.v) - state.nu)
    )
    hess = rho * problem.d_a.entries + problem.psi_curvature(x, d_psi_mode)
    x_new = _prox_step(problem, x, grad, hess)
    ax_new = problem.op.apply(x_new)
    u, mu = _relax_u(problem, state, ax_new, alpha, rho)
    r_v = alpha * (g_sqrt @ x_new) + (1.0 - alpha) * state.v
    v = r_v - state.nu / rho
    nu = state.nu - rho * (r_v - v)
    return replace(state, x=x_new, u=u, mu=mu, v=v, nu=nu, ax=ax_new, rho=rho, k=state.k + 1)


def lalm_proposed_practical_step(state, problem, alpha, rho, d_psi_mode="max_curvature"):
    """One step of LALM with the proposed relaxation, free of ``G^(1/2)``.

    For the unweighted loss, ``A'(u - y)`` and ``A' mu`` are propagated by
    linearity so each step costs one projection and one back-projection.  A
    weighted loss needs one extra back-projection.
    """
    _check_alpha(alpha)
    _check_rho(rho)
    x, y = state.x, problem.data
    d_a = problem.d_a.entries
    tracked = problem.loss.is_isotropic and state.q is not None
    if tracked:
        back = state.q + state.m / rho
    else:
        back = problem.op.adjoint(state.u - y + state.mu / rho)
    gamma = rho * back + rho * state.h
    hess = rho * d_a + problem.psi_curvature(x, d_psi_mode)
    x_new = _prox_step(problem, x, problem.psi_grad(x) + rho * d_a * x - gamma, hess)
    ax_new = problem.op.apply(x_new)
    zeta = problem.op.adjoint(ax_new - y)
    u, mu = _relax_u(problem, state, ax_new, alpha, rho)
    h = alpha * (d_a * x_new - zeta) + (1.0 - alpha) * state.h
    q = m = None
    if tracked:
        relaxed = alpha * zeta + (1.0 - alpha) * state.q
        q = (rho * relaxed - state.m) / (1.0 + rho)
        m = state.m - rho * (relaxed - q)
    return replace(state, x=x_new, u=u, mu=mu, h=h, zeta=zeta, ax=ax_new, q=q, m=m, rho=rho, k=state.k + 1)


def lalm_proposed_quadratic_step(state, problem, alpha, rho, d_psi_mode="max_curvature"):
    """One step of the proposed relaxed LALM specialized to the unweighted quadratic loss."""
    _check_alpha(alpha)
    _check_rho(rho)
    if not problem.loss.is_isotropic:
        raise ConfigurationError("quadratic form requires an unweighted quadratic loss")
    x, g, h = state.x, state.g, state.h
    d_a = problem.d_a.entries
    gamma = (rho - 1.0) * g + rho * h
    hess = rho * d_a + problem.psi_curvature(x, d_psi_mode)
    x_new = _prox_step(problem, x, problem.psi_grad(x) + rho * d_a * x - gamma, hess)
    ax_new = problem.op.apply(x_new)
    zeta = problem.op.adjoint(ax_new - problem.data)
    g_new = rho / (rho + 1.0) * (alpha * zeta + (1.0 - alpha) * g) + g / (rho + 1.0)
    h_new = alpha * (d_a * x_new - zeta) + (1.0 - alpha) * h
    return replace(state, x=x_new, g=g_new, h=h_new, zeta=zeta, ax=ax_new, rho=rho, k=state.k + 1)


_STEPS = {
    "relaxed_al": relaxed_al_step,
    "simple": lalm_simple_relaxed_step,
    "literal": lalm_proposed_literal_step,
    "practical": lalm_proposed_practical_step,
    "quadratic": lalm_proposed_quadratic_step,
}


def run_steps(problem, form, state, alpha, rho, iterations, **kwargs):
    """Apply ``iterations`` steps of ``form``; returns all states including the start."""
    if form not in _STEPS:
        raise ConfigurationError(f"unknown form {form!r}; choose from {FORMS}")
    step = _STEPS[form]
    history = [state]
    for _ in range(iterations):
        state = step(state, problem, alpha, rho, **kwargs)
        history.append(state)
    return history


# ---------------------------------------------------------------------------
# ordered subsets


def continuation_rho(k, alpha):
    """Decreasing AL penalty for subiteration ``k``; ``rho_0 = 1``."""
    if k < 0:
        raise ConfigurationError("k must be nonnegative")
    if alpha <= 0:
        raise ConfigurationError("alpha must be positive")
    if k == 0:
        return 1.0
    a = math.pi / (alpha * (k + 1))
    inner = 1.0 - (a / 2.0) ** 2
    if inner < 0:
        raise ConfigurationError(f"continuation undefined for alpha={alpha} at k={k}")
    return a * math.sqrt(inner)


def partition_subsets(num_views, num_subsets):
    """Interleaved view subsets: view ``j`` goes to subset ``j mod M``.

    Subsets are returned (and visited) in order ``0, 1, ..., M-1``.
    """
    if num_subsets < 1 or num_views < 1:
        raise ConfigurationError("need at least one view and one subset")
    if num_subsets > num_views:
        raise ConfigurationError(f"{num_subsets} subsets exceed {num_views} views")
    return [list(range(m, num_views, num_subsets)) for m in range(num_subsets)]


def _subset_rows(problem, scenario, num_subsets):
    if scenario is None:
        groups = partition_subsets(problem.op.range_dim, num_subsets)
        return [np.array(g, dtype=int) for g in groups]
    geom = scenario.geometry
    groups = partition_subsets(geom.num_views, num_subsets)
    return [np.concatenate([geom.view_rows(v) for v in g]) for g in groups]


class _SubsetData:
    """Subset operators sharing one counter plus scaled subset gradients."""

    def __init__(self, problem, scenario, num_subsets, counter):
        if not problem.loss.is_isotropic:
            raise ConfigurationError("ordered-subset runs expect an unweighted loss; apply the weight substitution first")
        op = problem.op.op if isinstance(problem.op, CountingOperator) else problem.op
        if not hasattr(op, "rows"):
            raise ConfigurationError("ordered subsets need a row-sliceable operator")
        self.num_subsets = num_subsets
        self.counter = counter if counter is not None else OperationCounter()
        self.ops, self.data = [], []
        for rows in _subset_rows(problem, scenario, num_subsets):
            self.ops.append(CountingOperator(op.rows(rows), self.counter))
            self.data.append(problem.data[rows])

    def gradient(self, m, x):
        """``M * grad L_m(x)``."""
        op = self.ops[m]
        return self.num_subsets * op.adjoint(op.apply(x) - self.data[m])


class _Monitor:
    """Fills a :class:`ConvergenceRecord` and guards against divergence."""

    def __init__(self, problem, label, config, reference, mask, hu_scale, callback=None):
        self.problem = problem
        self.callback = callback
        self.reference = reference
        self.mask = mask
        self.hu_scale = hu_scale
        self.record_time = config.record_time
        self.record = ConvergenceRecord(label, config.subsets)
        self.start = time.perf_counter()
        self.initial_cost = None

    def __call__(self, k, x, rho):
        if self.callback is not None:
            self.callback(k, x)
        cost = self.problem.cost(x)
        if self.initial_cost is None:
            self.initial_cost = cost
        rms = None if self.reference is None else rms_difference(x, self.reference, self.mask, self.hu_scale)
        wall = time.perf_counter() - self.start if self.record_time else None
        self.record.append(k, rho=rho, cost=cost, rms_hu=rms, wall_seconds=wall)
        limit = DIVERGENCE_FACTOR * max(abs(self.initial_cost), np.finfo(float).tiny)
        if not np.isfinite(cost) or cost > limit:
            raise DivergenceError(f"cost {cost:.6g} exceeds {DIVERGENCE_FACTOR}x the initial cost at k={k}", self.record)


def _os_start(problem, scenario, x0):
    if x0 is None:
        x0 = getattr(scenario, "initial_image", None)
        x0 = np.zeros(problem.num_unknowns) if x0 is None else x0
    x0 = np.array(x0, dtype=float).ravel()
    if x0.size != problem.num_unknowns:
        raise ShapeError(f"x0 has {x0.size} entries, expected {problem.num_unknowns}")
    return x0


def _os_lalm(problem, scenario, config, x0, reference, mask, hu_scale, counter, callback, proposed):
    label = "proposed" if proposed else "simple"
    sub = _SubsetData(problem, scenario, config.subsets, counter)
    monitor = _Monitor(problem, label, config, reference, mask, hu_scale, callback)
    x = _os_start(problem, scenario, x0)
    d_l = problem.d_a.entries
    rho = config.rho_at(0)
    zeta = sub.gradient(config.subsets - 1, x)
    g = zeta.copy()
    h = d_l * x - zeta if proposed else None
    monitor(0, x, rho)
    j = 0
    for _ in range(config.iterations):
        for m in range(config.subsets):
            if proposed:
                s = rho * (d_l * x - h) + (1.0 - rho) * g
            else:
                s = rho * zeta + (1.0 - rho) * g
            hess = rho * d_l + problem.psi_curvature(x, config.d_psi_mode)
            x = _prox_step(problem, x, s + problem.psi_grad(x), hess)
            zeta = sub.gradient(m, x)
            g = rho / (rho + 1.0) * (config.alpha * zeta + (1.0 - config.alpha) * g) + g / (rho + 1.0)
            if proposed:
                h = config.alpha * (d_l * x - zeta) + (1.0 - config.alpha) * h
            j += 1
            rho = config.rho_at(j)
            monitor(j, x, rho)
    return x, monitor.record


def os_relaxed_lalm_run(
    problem, scenario, config, x0=None, reference=None, mask=None, hu_scale=1.0, counter=None, callback=None
):
    """Proposed (over-)relaxed OS-LALM.

    Parameters
    ----------
    problem : CompositeProblem
        Unweighted-loss problem (weights already folded into ``A`` and ``y``).
    scenario : CtScenario or None
        Supplies the view layout for subsets and the default initial image.
        Without a scenario every row of ``A`` is treated as one view.
    config : SolverConfig
    x0 : ndarray, optional
    reference : ndarray, optional
        Image for the RMS column of the record.
    counter : OperationCounter, optional
        Receives the projector call counts of the subset operators.
    callback : callable, optional
        Called as ``callback(k, x)`` at ``k = 0`` and after every subiteration.

    Returns
    -------
    x : ndarray
    record : ConvergenceRecord
        One row per subiteration, starting with ``k = 0``.
    """
    return _os_lalm(problem, scenario, config, x0, reference, mask, hu_scale, counter, callback, proposed=True)


def os_simple_relaxed_lalm_run(
    problem, scenario, config, x0=None, reference=None, mask=None, hu_scale=1.0, counter=None, callback=None
):
    """Simple (over-)relaxed OS-LALM; same interface as :func:`os_relaxed_lalm_run`."""
    return _os_lalm(problem, scenario, config, x0, reference, mask, hu_scale, counter, callback, proposed=False)


def os_sqs_run(
    problem, scenario, config, x0=None, reference=None, mask=None, hu_scale=1.0, counter=None, callback=None
):
    """Ordered-subsets separable quadratic surrogate baseline.

    ``alpha`` and ``rho`` of ``config`` are ignored.
    """
    sub = _SubsetData(problem, scenario, config.subsets, counter)
    monitor = _Monitor(problem, "os-sqs", config, reference, mask, hu_scale, callback)
    x = _os_start(problem, scenario, x0)
    d_l = problem.d_a.entries
    monitor(0, x, None)
    j = 0
    for _ in range(config.iterations):
        for m in range(config.subsets):
            hess = d_l + problem.psi_curvature(x, config.d_psi_mode)
            x = _prox_step(problem, x, sub.gradient(m, x) + problem.psi_grad(x), hess)
            j += 1
            monitor(j, x, None)
    return x, monitor.record


def fgm_restart_run(problem, iterations, x0=None, tol=0.0, history=None):
    """Fast proximal gradient with function-value adaptive restart.

    Uses the constant diagonal majorizer ``D_L + D_psi`` (maximum curvature).
    A step that increases the cost is discarded and the momentum is reset, so
    the accepted cost sequence never increases.

    Parameters
    ----------
    problem : CompositeProblem
    iterations : int
    x0 : ndarray, optional
        Starting image (zeros by default).
    tol : float
        Stop early once ``||x_new - x|| <= tol * max(1, ||x||)``.
    history : list, optional
        If given, the accepted cost is appended after every iteration.
    """
    n = problem.num_unknowns
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float).ravel()
    if problem.prox_part is not None and not problem.prox_part.contains(x):
        x = problem.prox_part.prox(x, np.ones(n))
    d = problem.loss_majorizer().entries + problem.d_psi.entries
    y = problem.data
    ax = problem.op.apply(x)
    cost = problem.split_cost(x, ax)
    z, az, t = x, ax, 1.0
    restarted = False
    for _ in range(iterations):
        grad = problem.op.adjoint(problem.loss.grad(az, y)) + problem.psi_grad(z)
        x_new = _prox_step(problem, z, grad, d)
        ax_new = problem.op.apply(x_new)
        cost_new = problem.split_cost(x_new, ax_new)
        if cost_new > cost and not restarted:
            z, az, t, restarted = x, ax, 1.0, True
            if history is not None:
                history.append(cost)
            continue
        restarted = False
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        w = (t - 1.0) / t_new
        step = np.linalg.norm(x_new - x)
        z, az = x_new + w * (x_new - x), ax_new + w * (ax_new - ax)
        x, ax, cost, t = x_new, ax_new, cost_new, t_new
        if history is not None:
            history.append(cost)
        if tol > 0 and step <= tol * max(1.0, np.linalg.norm(x)):
            break
    return x
