"""Composite problem model ``g_y(Ax) + phi(x) + psi(x)``.

``g_y`` is a (possibly weighted) quadratic loss, ``phi`` has a cheap proximal
mapping (l1 norm or box indicator) and ``psi`` is smooth with a diagonal
quadratic majorizer (the edge-preserving regularizer below, or absent).
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, ShapeError
from .operators import FD_DIRECTIONS, DiagonalMajorizer, FiniteDifference, diag_majorizer_ata

__all__ = [
    "prox_l1",
    "project_box",
    "fair_potential",
    "L1Norm",
    "BoxConstraint",
    "QuadraticLoss",
    "RegularizerSpec",
    "regularizer_eval",
    "regularizer_grad",
    "regularizer_sqs_diag",
    "weighted_quadratic_loss",
    "CompositeProblem",
    "apply_ct_substitution",
    "CURVATURE_MODES",
]

CURVATURE_MODES = ("huber", "max_curvature")


def prox_l1(x, tau):
    """Soft thresholding ``sign(x) * max(|x| - tau, 0)``.

    ``tau`` may be a scalar or a per-entry array.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ConfigurationError("tau must be nonnegative")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def project_box(x, lower=-np.inf, upper=np.inf):
    """Clamp ``x`` into ``[lower, upper]`` componentwise."""
    if lower > upper:
        raise ConfigurationError(f"empty box: lower={lower} > upper={upper}")
    return np.clip(np.asarray(x, dtype=float), lower, upper)


def fair_potential(t, delta):
    """Fair potential ``delta^2 (|t/delta| - log(1 + |t/delta|))``.

    Returns
    -------
    value, derivative, huber_curvature : ndarray or float
        ``derivative = t / (1 + |t|/delta)`` and the Huber curvature
        ``omega = 1 / (1 + |t|/delta)``, which is also ``derivative / t``
        away from zero.  The maximum curvature is ``omega(0) = 1``.
    """
    if delta <= 0:
        raise ConfigurationError("delta must be positive")
    t = np.asarray(t, dtype=float)
    a = np.abs(t) / delta
    value = delta**2 * (a - np.log1p(a))
    omega = 1.0 / (1.0 + a)
    deriv = t * omega
    if value.ndim == 0:
        return float(value), float(deriv), float(omega)
    return value, deriv, omega


@dataclass(frozen=True)
class L1Norm:
    """``phi(x) = lam * ||x||_1``."""

    lam: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigurationError("l1 weight must be nonnegative")

    def value(self, x):
        return self.lam * float(np.sum(np.abs(x)))

    def prox(self, z, hess):
        """``argmin_x phi(x) + 1/2 ||x - z||^2_diag(hess)`` for ``hess > 0``."""
        return prox_l1(z, self.lam / hess)

    def contains(self, x):
        return True


@dataclass(frozen=True)
class BoxConstraint:
    """Indicator of ``{x : lower <= x <= upper}``."""

    lower: float = 0.0
    upper: float = np.inf

    def __post_init__(self):
        if self.lower > self.upper:
            raise ConfigurationError(f"empty box: lower={self.lower} > upper={self.upper}")

    def value(self, x):
        return 0.0 if self.contains(x) else np.inf

    def prox(self, z, hess):
        return project_box(z, self.lower, self.upper)

    def contains(self, x):
        x = np.asarray(x)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


@dataclass(frozen=True)
class QuadraticLoss:
    """``g_y(u) = 1/2 (u - y)' W (u - y)``; ``weights=None`` means ``W = I``."""

    weights: np.ndarray = None

    def __post_init__(self):
        if self.weights is not None:
            w = np.array(self.weights, dtype=float).ravel()
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ConfigurationError("loss weights must be finite and nonnegative")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)

    @property
    def is_isotropic(self):
        return self.weights is None

    def _w(self, n):
        if self.weights is None:
            return np.ones(n)
        if self.weights.size != n:
            raise ShapeError(f"loss weights have length {self.weights.size}, expected {n}")
        return self.weights

    def value(self, u, y):
        r = np.asarray(u) - y
        return 0.5 * float(np.dot(self._w(r.size) * r, r))

    def grad(self, u, y):
        r = np.asarray(u) - y
        return self._w(r.size) * r

    def u_update(self, y, mu, r, rho):
        """``argmin_u g_y(u) + <mu, u> + rho/2 ||r - u||^2``."""
        w = self._w(y.size)
        return (w * y - mu + rho * r) / (w + rho)


def weighted_quadratic_loss(op, data, weights, x):
    """Value ``1/2 (y - Ax)' W (y - Ax)`` and gradient ``A' W (Ax - y)``."""
    loss = QuadraticLoss(None if weights is None else weights)
    r = op.apply(x) - np.asarray(data, dtype=float)
    wr = loss._w(r.size) * r
    return 0.5 * float(np.dot(wr, r)), op.adjoint(wr)


@dataclass(frozen=True)
class RegularizerSpec:
    """Edge-preserving roughness penalty with the Fair potential.

    ``R(x) = sum_i beta_i sum_n kappa_n kappa_{n+s_i} phi([C_i x]_n)``.
    """

    image_shape: tuple
    betas: tuple
    delta: float
    kappas: np.ndarray = None
    directions: tuple = FD_DIRECTIONS
    diff_ops: tuple = field(init=False, repr=False, compare=False)
    pair_weights: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        shape = tuple(int(v) for v in self.image_shape)
        directions = tuple(tuple(int(v) for v in d) for d in self.directions)
        betas = np.broadcast_to(np.asarray(self.betas, dtype=float), (len(directions),))
        if np.any(betas < 0):
            raise ConfigurationError("betas must be nonnegative")
        if self.delta <= 0:
            raise ConfigurationError("delta must be positive")
        n = shape[0] * shape[1]
        kappas = np.ones(n) if self.kappas is None else np.array(self.kappas, dtype=float).ravel()
        if kappas.size != n:
            raise ShapeError(f"kappas have length {kappas.size}, expected {n}")
        if np.any(kappas <= 0):
            raise ConfigurationError("kappas must be positive")
        kappas.setflags(write=False)
        ops = tuple(FiniteDifference(shape, d) for d in directions)
        pair = tuple(kappas[c.first] * kappas[c.second] for c in ops)
        object.__setattr__(self, "image_shape", shape)
        object.__setattr__(self, "directions", directions)
        object.__setattr__(self, "betas", tuple(float(b) for b in betas))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "kappas", kappas)
        object.__setattr__(self, "diff_ops", ops)
        object.__setattr__(self, "pair_weights", pair)

    @property
    def num_pixels(self):
        return self.image_shape[0] * self.image_shape[1]

    def _terms(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.num_pixels,):
            raise ShapeError(f"image vector must have shape ({self.num_pixels},), got {x.shape}")
        for beta, c, pw in zip(self.betas, self.diff_ops, self.pair_weights):
            if beta == 0.0 or c.first.size == 0:
                continue
            yield beta, c, pw, c.apply(x)

    def value(self, x):
        total = 0.0
        for beta, _, pw, t in self._terms(x):
            total += beta * float(np.dot(pw, fair_potential(t, self.delta)[0]))
        return total

    def grad(self, x):
        out = np.zeros(self.num_pixels)
        for beta, c, pw, t in self._terms(x):
            out += c.adjoint(beta * pw * fair_potential(t, self.delta)[1])
        return out

    def sqs_diag(self, x, mode="max_curvature"):
        if mode not in CURVATURE_MODES:
            raise ConfigurationError(f"mode must be one of {CURVATURE_MODES}, got {mode!r}")
        out = np.zeros(self.num_pixels)
        for beta, c, pw, t in self._terms(x):
            curv = fair_potential(t, self.delta)[2] if mode == "huber" else 1.0
            # each difference row has two unit entries, so sum_j |c_nj| = 2
            out += c.abs_adjoint(2.0 * beta * pw * curv)
        return DiagonalMajorizer(out)

    def with_betas(self, betas):
        return RegularizerSpec(self.image_shape, betas, self.delta, self.kappas, self.directions)


def regularizer_eval(spec, x):
    return spec.value(x)


def regularizer_grad(spec, x):
    return spec.grad(x)


def regularizer_sqs_diag(spec, x, mode="max_curvature"):
    return spec.sqs_diag(x, mode)


@dataclass(frozen=True)
class CompositeProblem:
    """``min_x g_y(Ax) + phi(x) + psi(x)``.

    Parameters
    ----------
    op : LinearOperator
    data : ndarray
        Measurement ``y``.
    loss : QuadraticLoss
    prox_part : L1Norm, BoxConstraint or None
    smooth_part : object with ``value``, ``grad`` and ``sqs_diag`` or None
    d_a : DiagonalMajorizer, optional
        Majorizer of ``A'A``; defaults to ``diag(|A|'|A|1)``.
    d_psi : DiagonalMajorizer, optional
        Constant majorizer of the Hessian of ``psi``; defaults to the
        maximum-curvature SQS of ``smooth_part`` (zeros when absent).
    """

    op: object
    data: np.ndarray
    loss: QuadraticLoss = field(default_factory=QuadraticLoss)
    prox_part: object = None
    smooth_part: object = None
    d_a: DiagonalMajorizer = None
    d_psi: DiagonalMajorizer = None

    def __post_init__(self):
        data = np.array(self.data, dtype=float).ravel()
        if data.size != self.op.range_dim:
            raise ShapeError(f"data has length {data.size}, operator range is {self.op.range_dim}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        n = self.op.domain_dim
        if self.d_a is None:
            object.__setattr__(self, "d_a", diag_majorizer_ata(self.op))
        if self.d_psi is None:
            if self.smooth_part is None:
                d_psi = DiagonalMajorizer(np.zeros(n))
            else:
                d_psi = self.smooth_part.sqs_diag(np.zeros(n), "max_curvature")
            object.__setattr__(self, "d_psi", d_psi)
        if len(self.d_a) != n or len(self.d_psi) != n:
            raise ShapeError("majorizer length does not match the operator domain")

    @property
    def num_unknowns(self):
        return self.op.domain_dim

    def phi(self, x):
        return 0.0 if self.prox_part is None else self.prox_part.value(x)

    def psi(self, x):
        return 0.0 if self.smooth_part is None else self.smooth_part.value(x)

    def psi_grad(self, x):
        if self.smooth_part is None:
            return np.zeros(self.num_unknowns)
        return self.smooth_part.grad(x)

    def psi_curvature(self, x, mode="max_curvature"):
        """Diagonal of ``D_psi`` at ``x``; constant in max-curvature mode."""
        if mode not in CURVATURE_MODES:
            raise ConfigurationError(f"mode must be one of {CURVATURE_MODES}, got {mode!r}")
        if self.smooth_part is None or mode == "max_curvature":
            return self.d_psi.entries
        return self.smooth_part.sqs_diag(x, mode).entries

    def prox(self, z, hess, x_prev):
        """Diagonally weighted prox of ``phi``; pixels with ``hess == 0`` keep ``x_prev``."""
        frozen = hess <= 0
        safe = np.where(frozen, 1.0, hess)
        out = z if self.prox_part is None else self.prox_part.prox(z, safe)
        return np.where(frozen, x_prev, out) if np.any(frozen) else out

    def split_cost(self, x, u):
        """``f(x, u) = g_y(u) + phi(x) + psi(x)``."""
        return self.loss.value(u, self.data) + self.phi(x) + self.psi(x)

    def cost(self, x):
        return self.split_cost(x, self.op.apply(x))

    def data_gradient(self, x):
        """Gradient of ``g_y(Ax)``."""
        return self.op.adjoint(self.loss.grad(self.op.apply(x), self.data))

    def loss_majorizer(self):
        """Diagonal majorizer of the Hessian ``A'WA`` of the data term."""
        if self.loss.is_isotropic:
            return self.d_a
        return diag_majorizer_ata(self.op, self.loss.weights)


def apply_ct_substitution(problem):
    """Fold the loss weights into the system: ``A <- W^(1/2) A``, ``y <- W^(1/2) y``.

    The returned problem has an unweighted quadratic loss with the same value
    as the weighted loss on the original pair.  ``D_A`` is recomputed, giving
    ``diag(|A|' W |A| 1)``.
    """
    if problem.loss.is_isotropic:
        return problem
    root = np.sqrt(problem.loss.weights)
    op = problem.op.scale_rows(root)
    return replace(problem, op=op, data=root * problem.data, loss=QuadraticLoss(), d_a=None)
