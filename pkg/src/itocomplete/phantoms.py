"""Ground-truth conductivities used by the experiments."""
from __future__ import annotations

import numpy as np

from .fem import ConductivityField, pixel_average

# Modified Shepp-Logan (Toft): intensity, semi-axis a, semi-axis b, center x0, y0, angle (deg)
_SHEPP_LOGAN = np.array(
    [
        [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
        [-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0],
        [-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0],
        [-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0],
        [0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0],
        [0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0],
        [0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0],
        [0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0],
        [0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0],
        [0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0],
    ]
)


def shepp_logan_image(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Modified Shepp-Logan intensity at points of [0, 1]^2 (phantom spans [-1, 1]^2)."""
    X, Y = 2.0 * x - 1.0, 2.0 * y - 1.0
    out = np.zeros_like(X, dtype=float)
    for rho, a, b, x0, y0, deg in _SHEPP_LOGAN:
        t = np.deg2rad(deg)
        dx, dy = X - x0, Y - y0
        u = dx * np.cos(t) + dy * np.sin(t)
        v = -dx * np.sin(t) + dy * np.cos(t)
        out += rho * ((u / a) ** 2 + (v / b) ** 2 <= 1.0)
    return out


def shepp_logan(param_grid: int, low: float = 1.0, high: float = 2.0, supersample: int = 4) -> ConductivityField:
    """Pixel-averaged Shepp-Logan phantom mapped affinely onto [low, high]."""
    v = pixel_average(param_grid, shepp_logan_image, supersample)
    span = v.max() - v.min()
    return ConductivityField(low + (high - low) * (v - v.min()) / span)


def two_blob(param_grid: int, background: float = 1.0, contrast: float = 1.0, radius: float = 0.15,
             centers=((0.32, 0.62), (0.68, 0.38)), supersample: int = 4) -> ConductivityField:
    """Background conductivity with two disc inclusions of value ``background + contrast``."""

    def f(x, y):
        v = np.full_like(x, background)
        for cx, cy in centers:
            v += contrast * ((x - cx) ** 2 + (y - cy) ** 2 <= radius**2)
        return v

    return ConductivityField.from_function(param_grid, f, supersample)


def smooth_bump(param_grid: int, amplitude: float = 0.5, width: float = 0.2, supersample: int = 4) -> ConductivityField:
    """1 + Gaussian bump centred at (0.5, 0.5)."""

    def f(x, y):
        return 1.0 + amplitude * np.exp(-((x - 0.5) ** 2 + (y - 0.5) ** 2) / (2 * width**2))

    return ConductivityField.from_function(param_grid, f, supersample)
