"""Linear operators with exact adjoints, diagonal majorizers and spectral tools.

Every realization here is backed by an explicit (dense or sparse) matrix, so
``adjoint`` is the exact transpose of ``apply``.  Operators are immutable once
built; work accounting is done by wrapping an operator in
:class:`CountingOperator`.
"""

from dataclasses import dataclass
import math

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, ConvergenceError, ShapeError

__all__ = [
    "LinearOperator",
    "MatrixOperator",
    "IdentityOperator",
    "FiniteDifference",
    "ParallelBeamGeometry",
    "ParallelBeamProjector",
    "OperationCounter",
    "CountingOperator",
    "DiagonalMajorizer",
    "apply",
    "apply_adjoint",
    "diag_majorizer_ata",
    "max_eigenvalue",
    "finite_difference_op",
    "FD_DIRECTIONS",
    "load_dense_matrix",
    "save_dense_matrix",
]

FD_DIRECTIONS = ((1, 0), (0, 1), (1, 1), (1, -1))


def _as_vector(x, n, name):
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ShapeError(f"{name}: expected shape ({n},), got {x.shape}")
    return x


class LinearOperator:
    """Abstract linear map ``R^domain_dim -> R^range_dim``.

    Subclasses implement ``_apply`` and ``_adjoint`` on validated 1-D input.
    """

    def __init__(self, range_dim, domain_dim):
        if range_dim < 1 or domain_dim < 1:
            raise ShapeError(f"operator dimensions must be positive, got {(range_dim, domain_dim)}")
        self._shape = (int(range_dim), int(domain_dim))

    @property
    def shape(self):
        return self._shape

    @property
    def range_dim(self):
        return self._shape[0]

    @property
    def domain_dim(self):
        return self._shape[1]

    def apply(self, x):
        return self._apply(_as_vector(x, self.domain_dim, "apply"))

    def adjoint(self, y):
        return self._adjoint(_as_vector(y, self.range_dim, "adjoint"))

    def abs_apply(self, x):
        """``|A| x`` with ``|A|`` the entrywise absolute value."""
        raise NotImplementedError

    def abs_adjoint(self, y):
        """``|A|' y``."""
        raise NotImplementedError

    def _apply(self, x):
        raise NotImplementedError

    def _adjoint(self, y):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.shape})"


class MatrixOperator(LinearOperator):
    """Operator backed by a dense ``ndarray`` or a scipy sparse matrix."""

    def __init__(self, matrix):
        if sp.issparse(matrix):
            matrix = sp.csr_matrix(matrix, dtype=float)
        else:
            matrix = np.array(matrix, dtype=float)
            if matrix.ndim != 2:
                raise ShapeError(f"matrix must be 2-D, got ndim={matrix.ndim}")
            matrix.setflags(write=False)
        super().__init__(*matrix.shape)
        self._matrix = matrix
        self._abs = None

    @property
    def matrix(self):
        return self._matrix

    @property
    def is_sparse(self):
        return sp.issparse(self._matrix)

    def _abs_matrix(self):
        if self._abs is None:
            self._abs = abs(self._matrix)
        return self._abs

    def _apply(self, x):
        return np.asarray(self._matrix @ x).ravel()

    def _adjoint(self, y):
        return np.asarray(self._matrix.T @ y).ravel()

    def abs_apply(self, x):
        return np.asarray(self._abs_matrix() @ _as_vector(x, self.domain_dim, "abs_apply")).ravel()

    def abs_adjoint(self, y):
        return np.asarray(self._abs_matrix().T @ _as_vector(y, self.range_dim, "abs_adjoint")).ravel()

    def toarray(self):
        return self._matrix.toarray() if self.is_sparse else np.array(self._matrix)

    def rows(self, index):
        """Operator restricted to the given output rows."""
        index = np.asarray(index, dtype=int)
        return MatrixOperator(self._matrix[index])

    def scale_rows(self, scale):
        """Return ``diag(scale) @ A``."""
        scale = _as_vector(scale, self.range_dim, "scale_rows")
        if self.is_sparse:
            return MatrixOperator(sp.diags(scale) @ self._matrix)
        return MatrixOperator(scale[:, None] * self._matrix)

    def scaled(self, factor):
        return MatrixOperator(float(factor) * self._matrix)


class IdentityOperator(LinearOperator):
    def __init__(self, n):
        super().__init__(n, n)

    def _apply(self, x):
        return x.copy()

    def _adjoint(self, y):
        return y.copy()

    def abs_apply(self, x):
        return _as_vector(x, self.domain_dim, "abs_apply").copy()

    def abs_adjoint(self, y):
        return _as_vector(y, self.range_dim, "abs_adjoint").copy()


class FiniteDifference(MatrixOperator):
    """Neighbor differences ``x[n] - x[n + s]`` on a 2-D grid.

    Only in-bounds pairs produce a row.  ``first`` and ``second`` hold the
    flat pixel indices of ``n`` and ``n + s`` for each row.
    """

    def __init__(self, image_shape, direction):
        nx, ny = (int(v) for v in image_shape)
        if nx < 1 or ny < 1:
            raise ShapeError(f"empty image shape {image_shape}")
        direction = tuple(int(v) for v in direction)
        if direction not in FD_DIRECTIONS:
            raise ConfigurationError(f"direction must be one of {FD_DIRECTIONS}, got {direction}")
        di, dj = direction
        ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        ii, jj = ii.ravel(), jj.ravel()
        ok = (ii + di >= 0) & (ii + di < nx) & (jj + dj >= 0) & (jj + dj < ny)
        first = ii[ok] * ny + jj[ok]
        second = (ii[ok] + di) * ny + (jj[ok] + dj)
        nrows = first.size
        if nrows == 0:
            # a 1-pixel-wide image has no pairs along this direction; keep a
            # single all-zero row so the operator stays well formed
            matrix = sp.csr_matrix((1, nx * ny))
        else:
            rows = np.repeat(np.arange(nrows), 2)
            cols = np.column_stack([first, second]).ravel()
            vals = np.tile([1.0, -1.0], nrows)
            matrix = sp.csr_matrix((vals, (rows, cols)), shape=(nrows, nx * ny))
        super().__init__(matrix)
        self.image_shape = (nx, ny)
        self.direction = direction
        self.first = first
        self.second = second


def finite_difference_op(image_shape, direction):
    return FiniteDifference(image_shape, direction)


@dataclass(frozen=True)
class ParallelBeamGeometry:
    """2-D parallel-beam scan of a centered square-pixel image.

    Angles are uniformly spaced over [0, pi).  Detector bins are centered on
    the rotation axis.  Lengths are in mm.
    """

    nx: int
    ny: int
    pixel_size: float = 1.0
    num_bins: int = 0
    bin_spacing: float = 0.0
    num_views: int = 90

    def __post_init__(self):
        if self.num_bins <= 0:
            object.__setattr__(self, "num_bins", int(math.ceil(math.hypot(self.nx, self.ny))) + 2)
        if self.bin_spacing <= 0:
            object.__setattr__(self, "bin_spacing", float(self.pixel_size))
        if min(self.nx, self.ny, self.num_bins, self.num_views) < 1 or self.pixel_size <= 0:
            raise ConfigurationError(f"invalid geometry {self}")

    @property
    def image_shape(self):
        return (self.nx, self.ny)

    @property
    def angles(self):
        return np.arange(self.num_views) * (np.pi / self.num_views)

    @property
    def bin_centers(self):
        return (np.arange(self.num_bins) - (self.num_bins - 1) / 2) * self.bin_spacing

    def pixel_centers(self):
        """Return (x, y) coordinates of pixel centers, each shaped (nx, ny)."""
        xc = (np.arange(self.nx) - (self.nx - 1) / 2) * self.pixel_size
        yc = (np.arange(self.ny) - (self.ny - 1) / 2) * self.pixel_size
        return np.meshgrid(xc, yc, indexing="ij")

    def view_rows(self, view):
        return np.arange(view * self.num_bins, (view + 1) * self.num_bins)


def _siddon_ray(t, theta, xb, yb, pixel_size, ny):
    """Pixel indices and intersection lengths of one ray.

    The ray is ``t*(cos, sin) + s*(-sin, cos)``.
    """
    c, s = math.cos(theta), math.sin(theta)
    px, py = t * c, t * s
    dx, dy = -s, c
    lo, hi = -np.inf, np.inf
    for p, d, b in ((px, dx, xb), (py, dy, yb)):
        if abs(d) < 1e-15:
            if p <= b[0] or p >= b[-1]:
                return None
            continue
        a0, a1 = (b[0] - p) / d, (b[-1] - p) / d
        lo, hi = max(lo, min(a0, a1)), min(hi, max(a0, a1))
    if hi <= lo:
        return None
    crossings = [np.array([lo, hi])]
    if abs(dx) >= 1e-15:
        crossings.append((xb - px) / dx)
    if abs(dy) >= 1e-15:
        crossings.append((yb - py) / dy)
    alphas = np.concatenate(crossings)
    alphas = np.unique(alphas[(alphas >= lo) & (alphas <= hi)])
    lengths = np.diff(alphas)
    mid = 0.5 * (alphas[1:] + alphas[:-1])
    keep = lengths > 1e-12 * pixel_size
    lengths, mid = lengths[keep], mid[keep]
    ix = np.floor((px + mid * dx - xb[0]) / pixel_size).astype(int)
    iy = np.floor((py + mid * dy - yb[0]) / pixel_size).astype(int)
    ix = np.clip(ix, 0, xb.size - 2)
    iy = np.clip(iy, 0, yb.size - 2)
    return ix * ny + iy, lengths


class ParallelBeamProjector(MatrixOperator):
    """Ray-driven exact line-length projector (Siddon traversal).

    Row ``view * num_bins + bin`` holds the intersection lengths (mm) of that
    ray with every pixel.
    """

    def __init__(self, geometry):
        g = geometry
        xb = (np.arange(g.nx + 1) - g.nx / 2) * g.pixel_size
        yb = (np.arange(g.ny + 1) - g.ny / 2) * g.pixel_size
        rows, cols, vals = [], [], []
        for v, theta in enumerate(g.angles):
            for b, t in enumerate(g.bin_centers):
                hit = _siddon_ray(t, theta, xb, yb, g.pixel_size, g.ny)
                if hit is None:
                    continue
                idx, lengths = hit
                rows.append(np.full(idx.size, v * g.num_bins + b))
                cols.append(idx)
                vals.append(lengths)
        nrows = g.num_views * g.num_bins
        if rows:
            matrix = sp.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(nrows, g.nx * g.ny),
            )
        else:
            matrix = sp.csr_matrix((nrows, g.nx * g.ny))
        super().__init__(matrix)
        self.geometry = g


class OperationCounter:
    """Tally of forward and adjoint applications."""

    def __init__(self):
        self.forward = 0
        self.adjoint = 0

    def reset(self):
        self.forward = 0
        self.adjoint = 0

    def snapshot(self):
        return (self.forward, self.adjoint)


class CountingOperator(LinearOperator):
    """Delegate to ``op`` while counting ``apply``/``adjoint`` calls.

    Several wrappers may share one counter (e.g. all subset operators of a
    scan).  Majorizer helpers (``abs_apply``) are not counted.
    """

    def __init__(self, op, counter=None):
        super().__init__(*op.shape)
        self.op = op
        self.counter = counter if counter is not None else OperationCounter()

    def _apply(self, x):
        self.counter.forward += 1
        return self.op.apply(x)

    def _adjoint(self, y):
        self.counter.adjoint += 1
        return self.op.adjoint(y)

    def abs_apply(self, x):
        return self.op.abs_apply(x)

    def abs_adjoint(self, y):
        return self.op.abs_adjoint(y)

    def rows(self, index):
        return CountingOperator(self.op.rows(index), self.counter)


def apply(op, x):
    return op.apply(x)


def apply_adjoint(op, y):
    return op.adjoint(y)


@dataclass(frozen=True)
class DiagonalMajorizer:
    """Nonnegative diagonal ``D`` used as a separable curvature bound."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.array(self.entries, dtype=float).ravel()
        if not np.all(np.isfinite(e)) or np.any(e < 0):
            raise ConfigurationError("majorizer entries must be finite and nonnegative")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    def __len__(self):
        return self.entries.size

    def __add__(self, other):
        return DiagonalMajorizer(self.entries + np.asarray(getattr(other, "entries", other)))

    def scaled(self, factor):
        return DiagonalMajorizer(float(factor) * self.entries)

    @classmethod
    def constant(cls, value, n):
        return cls(np.full(n, float(value)))

    def quad_form(self, x):
        """``x' D x``."""
        return float(np.dot(self.entries * x, x))


def diag_majorizer_ata(op, weights=None):
    """``diag(|A|' W |A| 1)``, a diagonal majorizer of ``A' W A``."""
    row_sums = op.abs_apply(np.ones(op.domain_dim))
    if weights is not None:
        weights = _as_vector(weights, op.range_dim, "weights")
        if np.any(weights < 0):
            raise ConfigurationError("weights must be nonnegative")
        row_sums = weights * row_sums
    return DiagonalMajorizer(op.abs_adjoint(row_sums))


def max_eigenvalue(op, tol=1e-8, max_iter=1000):
    """Largest eigenvalue of ``A'A`` by power iteration.

    Raises :class:`ConvergenceError` (with the last estimate) if the relative
    change does not drop below ``tol`` within ``max_iter`` iterations.
    """
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    rng = np.random.default_rng(20160101)
    x = np.ones(op.domain_dim) + 1e-3 * rng.standard_normal(op.domain_dim)
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(max_iter):
        z = op.adjoint(op.apply(x))
        new = float(np.dot(x, z))
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return 0.0
        if abs(new - estimate) <= tol * abs(new):
            return new
        estimate = new
        x = z / nz
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations", estimate=estimate
    )


def load_dense_matrix(path):
    """Read a matrix stored as ``rows cols`` then row-major values."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ShapeError(f"{path}: first line must be 'rows cols'")
        rows, cols = int(header[0]), int(header[1])
        values = np.array(fh.read().split(), dtype=float)
    if values.size != rows * cols:
        raise ShapeError(f"{path}: expected {rows * cols} values, found {values.size}")
    return MatrixOperator(values.reshape(rows, cols))


def save_dense_matrix(path, matrix):
    matrix = np.asarray(matrix, dtype=float)
    with open(path, "w") as fh:
        fh.write(f"{matrix.shape[0]} {matrix.shape[1]}\n")
        for row in matrix:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
