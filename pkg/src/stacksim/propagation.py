"""Free-space propagation between consecutive layers.

Each entry of a propagation matrix is the complex transmission gain between
one source element and one destination element, evaluated from the
Rayleigh-Sommerfeld diffraction integral for an element of effective area
``A`` re-radiating toward a parallel plane at separation ``s``:

    K(d; A, s) = A*s / (2*pi*d^3) * (1 - j*k0*d) * exp(j*k0*d)

with ``k0 = 2*pi/lambda0`` the free-space wavenumber and ``d`` the distance
between the two elements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .geometry import GridSpec

__all__ = ["SPEED_OF_LIGHT", "KernelParams", "rs_kernel", "build_propagation_matrix"]

SPEED_OF_LIGHT = 3.0e8  # m/s


@dataclass(frozen=True)
class KernelParams:
    """Physical constants of one propagation hop.

    wavelength: carrier wavelength lambda0 = c/f0 in meters.
    element_area: effective area of the radiating element in m^2.
    separation: spacing between the two parallel planes in meters.
    """

    wavelength: float
    element_area: float
    separation: float

    def __post_init__(self) -> None:
        for name in ("wavelength", "element_area", "separation"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.wavelength


def rs_kernel(d, params: KernelParams):
    """Rayleigh-Sommerfeld transmission gain at distance ``d`` (scalar or array).

    The magnitude is ``A*s/(2*pi*d^3) * sqrt(1 + (k0*d)^2)`` and decreases
    monotonically with ``d``.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("propagation distance must be positive")
    k0 = params.wavenumber
    amplitude = params.element_area * params.separation / (2.0 * math.pi * d**3)
    value = amplitude * (1.0 - 1j * k0 * d) * np.exp(1j * k0 * d)
    return complex(value) if value.ndim == 0 else value


def build_propagation_matrix(
    src: GridSpec,
    dst: GridSpec,
    params: KernelParams,
    centered: bool = False,
) -> np.ndarray:
    """Complex ``dst.total x src.total`` matrix of per-element-pair gains.

    Entry (r, c) is the kernel evaluated at the distance between destination
    element ``r`` and source element ``c`` for planes ``params.separation``
    apart. Grid alignment follows :func:`stacksim.geometry.pair_distance`.
    """
    if src.spacing != dst.spacing:
        raise ConfigurationError(
            f"source and destination grids must share a spacing, got {src.spacing} and {dst.spacing}"
        )
    sx, sy = src.axis_coordinates()
    dx_, dy_ = dst.axis_coordinates()
    dx = dx_[:, None] - sx[None, :]
    dy = dy_[:, None] - sy[None, :]
    if centered:
        # Same operation order as geometry.pair_distance, so entries match it bit for bit.
        dx = dx + (src.count_x - dst.count_x) / 2.0
        dy = dy + (src.count_y - dst.count_y) / 2.0
    d = np.sqrt((dx * dx + dy * dy) * src.spacing**2 + params.separation**2)
    matrix = rs_kernel(d, params)
    matrix.flags.writeable = False
    return matrix
