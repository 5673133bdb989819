"""Gaussian weighting kernel shared by point correction and curve fitting."""

from __future__ import annotations

import math

import numpy as np

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gaussian_kernel(u, bandwidth):
    """Standard-normal density of u/bandwidth, scaled by 1/bandwidth.

    Broadcasts over arrays in both arguments.
    """
    z = np.asarray(u, dtype=np.float64) / bandwidth
    return INV_SQRT_2PI * np.exp(-0.5 * z * z) / bandwidth
