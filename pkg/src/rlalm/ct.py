"""Desk-scale 2-D CT scenario: phantom, scan simulation, weights and problem assembly.

Images are ``(nx, ny)`` arrays in HU offset so that air is 0 and water is
1000, flattened in C order.  Line integrals use the attenuation scale
``mu_water / 1000`` per mm per HU, so a 400 mm field of view gives line
integrals up to about 8.
"""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np

from .errors import ConfigurationError, ShapeError
from .operators import ParallelBeamGeometry, ParallelBeamProjector, diag_majorizer_ata
from .problem import BoxConstraint, CompositeProblem, QuadraticLoss, RegularizerSpec, apply_ct_substitution

__all__ = [
    "CtGeometry",
    "CtScenario",
    "SHEPP_LOGAN_ELLIPSES",
    "MU_WATER",
    "DEFAULT_BETA",
    "DEFAULT_DELTA",
    "shepp_logan",
    "system_operator",
    "simulate_sinogram",
    "statistical_weights",
    "kappa_weights",
    "make_ct_scenario",
    "build_ct_problem",
    "fbp_like_init",
    "write_pgm",
    "write_raw",
    "read_raw",
]

CtGeometry = ParallelBeamGeometry

# linear attenuation of water near 70 keV, per mm
MU_WATER = 0.0193
DEFAULT_DELTA = 10.0
# regularizer about 3% of the data term at the FBP initializer (64x64, 90 views, I0=1e5)
DEFAULT_BETA = 1.5e-6

# (intensity, semi-axis a, semi-axis b, center x, center y, rotation deg) on [-1, 1]^2
SHEPP_LOGAN_ELLIPSES = (
    (2.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.98, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.02, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.02, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.01, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.01, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.01, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.01, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.01, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.01, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
)


def shepp_logan(nx, ny):
    """Ten-ellipse Shepp-Logan phantom scaled by 1000 and clamped to [0, 2000].

    The phantom spans the normalized square ``[-1, 1]^2`` sampled at pixel
    centers; axis 0 is ``x`` and axis 1 is ``y``.
    """
    if nx < 16 or ny < 16:
        raise ShapeError(f"phantom needs at least 16x16 pixels, got {nx}x{ny}")
    xc = (np.arange(nx) - (nx - 1) / 2) * (2.0 / nx)
    yc = (np.arange(ny) - (ny - 1) / 2) * (2.0 / ny)
    x, y = np.meshgrid(xc, yc, indexing="ij")
    img = np.zeros((nx, ny))
    for value, a, b, x0, y0, deg in SHEPP_LOGAN_ELLIPSES:
        th = math.radians(deg)
        dx, dy = x - x0, y - y0
        xr = dx * math.cos(th) + dy * math.sin(th)
        yr = -dx * math.sin(th) + dy * math.cos(th)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += value
    return np.clip(1000.0 * img, 0.0, 2000.0)


def system_operator(geometry, mu_water=MU_WATER):
    """Projector from HU images to line integrals (dimensionless)."""
    return ParallelBeamProjector(geometry).scaled(mu_water / 1000.0)


def simulate_sinogram(x_true, geometry, i0, seed, noiseless=False, op=None, mu_water=MU_WATER):
    """Monoenergetic transmission scan with Poisson counts.

    Returns
    -------
    y : ndarray
        ``log(i0 / max(I, 1))`` (or the exact line integrals if ``noiseless``).
    counts : ndarray
        Detected counts ``I ~ Poisson(i0 exp(-l))``; the expected counts when
        ``noiseless``.
    """
    if not i0 > 0:
        raise ConfigurationError("incident photon count must be positive")
    op = system_operator(geometry, mu_water) if op is None else op
    ell = op.apply(np.asarray(x_true, dtype=float).ravel())
    mean = i0 * np.exp(-ell)
    if noiseless:
        return ell, mean
    counts = np.random.default_rng(seed).poisson(mean).astype(float)
    return np.log(i0 / np.maximum(counts, 1.0)), counts


def statistical_weights(y):
    """Diagonal statistical weights ``w_j = exp(-y_j)``."""
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ConfigurationError("sinogram must be finite")
    return np.exp(-y)


def kappa_weights(op, weights, floor=1e-6):
    """Resolution-uniformity weights ``sqrt(A'W1 / A'1)``.

    Pixels no ray touches (0/0) get 1; results are floored at ``floor`` to
    stay positive.
    """
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ConfigurationError("weights must be nonnegative")
    num = op.abs_adjoint(weights)
    den = op.abs_adjoint(np.ones(op.range_dim))
    ratio = np.divide(num, den, out=np.ones_like(num), where=den > 0)
    return np.maximum(np.sqrt(ratio), floor)


@dataclass(frozen=True)
class CtScenario:
    """Simulated scan with everything needed to pose the reconstruction."""

    geometry: CtGeometry
    x_true: np.ndarray
    sinogram: np.ndarray
    counts: np.ndarray
    weights: np.ndarray
    kappas: np.ndarray
    regularizer: RegularizerSpec
    system: object = field(repr=False)
    i0: float = 1e5
    seed: int = 0
    mu_water: float = MU_WATER
    box: tuple = (0.0, np.inf)

    def __post_init__(self):
        m = self.geometry.num_views * self.geometry.num_bins
        if self.sinogram.size != m or self.weights.size != m:
            raise ShapeError("sinogram and weights must match the scan geometry")
        if not (np.all(np.isfinite(self.sinogram)) and np.all(np.isfinite(self.weights))):
            raise ConfigurationError("sinogram and weights must be finite")

    @property
    def image_shape(self):
        return self.geometry.image_shape

    @cached_property
    def initial_image(self):
        return fbp_like_init(self)


def make_ct_scenario(
    nx=64,
    ny=64,
    num_views=90,
    i0=1e5,
    seed=0,
    beta=DEFAULT_BETA,
    delta=DEFAULT_DELTA,
    pixel_size=6.25,
    noiseless=False,
    mu_water=MU_WATER,
):
    """Shepp-Logan scan with Poisson noise, weights, kappas and regularizer."""
    geom = CtGeometry(nx=nx, ny=ny, pixel_size=pixel_size, num_views=num_views)
    op = system_operator(geom, mu_water)
    x_true = shepp_logan(nx, ny).ravel()
    y, counts = simulate_sinogram(x_true, geom, i0, seed, noiseless=noiseless, op=op)
    w = statistical_weights(y)
    kappas = kappa_weights(op, w)
    reg = RegularizerSpec((nx, ny), beta, delta, kappas)
    return CtScenario(geom, x_true, y, counts, w, kappas, reg, op, i0, seed, mu_water)


def build_ct_problem(scenario, substitute=True):
    """Penalized weighted least squares with a nonnegativity box.

    With ``substitute`` the weights are folded into ``A`` and ``y`` so the
    loss is unweighted and ``D_A = diag(A'WA1)`` of the original system.
    """
    lower, upper = scenario.box
    problem = CompositeProblem(
        scenario.system,
        scenario.sinogram,
        QuadraticLoss(scenario.weights),
        BoxConstraint(lower, upper),
        scenario.regularizer,
        d_a=diag_majorizer_ata(scenario.system, scenario.weights),
    )
    return apply_ct_substitution(problem) if substitute else problem


def _ramp_kernel(num_bins, spacing):
    """Frequency response of the band-limited ramp with a Hann window."""
    size = 1 << int(math.ceil(math.log2(2 * num_bins)))
    n = np.arange(size)
    n = np.where(n > size // 2, n - size, n)
    h = np.zeros(size)
    h[0] = 1.0 / (4.0 * spacing**2)
    odd = n % 2 == 1
    h[odd] = -1.0 / (math.pi * n[odd] * spacing) ** 2
    freq = np.abs(np.fft.fftfreq(size))
    window = 0.5 * (1.0 + np.cos(2.0 * math.pi * freq))
    return np.real(np.fft.fft(h)) * window * spacing, size


def fbp_like_init(scenario, sinogram=None):
    """Unweighted filtered backprojection in HU, clamped to the box.

    Each view is filtered with a Hann-apodized ramp and backprojected with
    linear interpolation at pixel centers.
    """
    g = scenario.geometry
    y = scenario.sinogram if sinogram is None else np.asarray(sinogram, dtype=float)
    sino = y.reshape(g.num_views, g.num_bins)
    kernel, size = _ramp_kernel(g.num_bins, g.bin_spacing)
    filtered = np.real(np.fft.ifft(np.fft.fft(sino, size, axis=1) * kernel, axis=1))[:, : g.num_bins]
    xs, ys = g.pixel_centers()
    bins = g.bin_centers
    out = np.zeros(g.image_shape)
    for v, theta in enumerate(g.angles):
        t = xs * math.cos(theta) + ys * math.sin(theta)
        out += np.interp(t, bins, filtered[v], left=0.0, right=0.0)
    # attenuation per mm back to HU
    out *= (math.pi / g.num_views) * (1000.0 / scenario.mu_water)
    lower, upper = scenario.box
    return np.clip(out.ravel(), lower, upper)


def write_pgm(path, image, window=(800.0, 1200.0)):
    """8-bit binary PGM, linearly windowed.  Rows run along ``y`` from top (max y)."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ShapeError("image must be 2-D")
    lo, hi = window
    if not hi > lo:
        raise ConfigurationError("window must satisfy lo < hi")
    scaled = np.clip((img - lo) / (hi - lo), 0.0, 1.0)
    pix = np.round(255.0 * scaled).astype(np.uint8).T[::-1]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{pix.shape[1]} {pix.shape[0]}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


def write_raw(path, array):
    """Little-endian float64 dump after a text line ``"n0 n1"``."""
    arr = np.asarray(array, dtype="<f8")
    if arr.ndim != 2:
        raise ShapeError("raw output expects a 2-D array")
    with open(path, "wb") as fh:
        fh.write(f"{arr.shape[0]} {arr.shape[1]}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_raw(path):
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 2:
            raise ShapeError(f"{path}: bad header")
        n0, n1 = int(header[0]), int(header[1])
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n0 * n1:
        raise ShapeError(f"{path}: expected {n0 * n1} values, found {data.size}")
    return data.reshape(n0, n1).copy()
