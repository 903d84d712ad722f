"""Hot numeric kernels with numba acceleration and a pure-numpy fallback.

Set the environment variable ``PLASTMIX_NO_NUMBA=1`` to force the numpy
path (useful for debugging and for the kernel benchmark).
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("PLASTMIX_NO_NUMBA", "0").lower() not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

__all__ = [
    "USE_NUMBA",
    "combine_stiffness",
    "radial_project",
    "weighted_frobenius_sum",
    "qnorm_sq",
]


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def _combine_stiffness_np(rx, ry, base, ax, ay):
    # K_T = base + rx[T]*ax + ry[T]*ay for each element T of one degree group
    return base[None, :, :] + rx[:, None, None] * ax[None, :, :] + ry[:, None, None] * ay[None, :, :]


def _radial_project_np(coeffs, sigma_y):
    # coeffs: (n, 2) pairs (a, b); Frobenius norm is sqrt(2(a^2+b^2)).
    out = coeffs.copy()
    norms = np.sqrt(2.0 * (coeffs[:, 0] ** 2 + coeffs[:, 1] ** 2))
    mask = norms > sigma_y
    out[mask] *= (sigma_y / norms[mask])[:, None]
    return out


def _weighted_frobenius_sum_np(coeffs, weights):
    return float(np.sum(weights * np.sqrt(2.0 * (coeffs[:, 0] ** 2 + coeffs[:, 1] ** 2))))


def _qnorm_sq_np(coeffs, weights):
    return float(np.sum(2.0 * weights * (coeffs[:, 0] ** 2 + coeffs[:, 1] ** 2)))


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if USE_NUMBA:

    @njit(cache=True)
    def _combine_stiffness_nb(rx, ry, base, ax, ay):
        ne = rx.shape[0]
        n = base.shape[0]
        out = np.empty((ne, n, n))
        for t in range(ne):
            for i in range(n):
                for j in range(n):
                    out[t, i, j] = base[i, j] + rx[t] * ax[i, j] + ry[t] * ay[i, j]
        return out

    @njit(cache=True)
    def _radial_project_nb(coeffs, sigma_y):
        n = coeffs.shape[0]
        out = coeffs.copy()
        for k in range(n):
            norm = np.sqrt(2.0 * (coeffs[k, 0] ** 2 + coeffs[k, 1] ** 2))
            if norm > sigma_y:
                s = sigma_y / norm
                out[k, 0] *= s
                out[k, 1] *= s
        return out

    @njit(cache=True)
    def _weighted_frobenius_sum_nb(coeffs, weights):
        total = 0.0
        for k in range(coeffs.shape[0]):
            total += weights[k] * np.sqrt(2.0 * (coeffs[k, 0] ** 2 + coeffs[k, 1] ** 2))
        return total

    @njit(cache=True)
    def _qnorm_sq_nb(coeffs, weights):
        total = 0.0
        for k in range(coeffs.shape[0]):
            total += 2.0 * weights[k] * (coeffs[k, 0] ** 2 + coeffs[k, 1] ** 2)
        return total

    combine_stiffness = _combine_stiffness_nb
    radial_project = _radial_project_nb
    weighted_frobenius_sum = _weighted_frobenius_sum_nb
    qnorm_sq = _qnorm_sq_nb
else:
    combine_stiffness = _combine_stiffness_np
    radial_project = _radial_project_np
    weighted_frobenius_sum = _weighted_frobenius_sum_np
    qnorm_sq = _qnorm_sq_np
