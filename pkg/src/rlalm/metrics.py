"""Image-domain error metrics shared by the solvers and the analysis tools."""

import numpy as np

from .errors import ConfigurationError, ShapeError

__all__ = ["rms_difference"]


def rms_difference(x, x_ref, mask=None, hu_scale=1.0):
    """Root-mean-square difference over the masked pixels, in HU.

    Parameters
    ----------
    x, x_ref : array_like
        Images of equal shape.
    mask : array_like of bool, optional
        Pixels to include; all pixels when omitted.
    hu_scale : float
        Factor converting image units to HU (1 for images stored in HU).
    """
    x = np.asarray(x, dtype=float)
    x_ref = np.asarray(x_ref, dtype=float)
    if x.shape != x_ref.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {x_ref.shape}")
    diff = (x - x_ref).ravel()
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).ravel()
        if mask.size != diff.size:
            raise ShapeError(f"mask has {mask.size} entries, expected {diff.size}")
        diff = diff[mask]
    if diff.size == 0:
        raise ConfigurationError("mask selects no pixels")
    return float(np.sqrt(np.mean(diff**2)) * hu_scale)
