"""ULA / UPA steering vectors and rank-one path response matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidInputError(ValueError):
    """Raised for non-finite angles or malformed geometry."""


@dataclass(frozen=True)
class UlaGeometry:
    elements: int
    spacing: float = 0.5  # in wavelengths
    wavelength: float = 1.0  # meters

    def __post_init__(self):
        if self.elements < 1:
            raise InvalidInputError(f"ULA needs at least one element, got {self.elements}")
        if not self.spacing > 0 or not self.wavelength > 0:
            raise InvalidInputError("ULA spacing and wavelength must be positive")


@dataclass(frozen=True)
class UpaGeometry:
    nx: int
    nz: int
    dx: float = 0.5  # in wavelengths
    dz: float = 0.5
    wavelength: float = 1.0

    def __post_init__(self):
        if self.nx < 1 or self.nz < 1:
            raise InvalidInputError(f"UPA dims must be positive, got {self.nx}x{self.nz}")
        if not (self.dx > 0 and self.dz > 0 and self.wavelength > 0):
            raise InvalidInputError("UPA spacings and wavelength must be positive")

    @property
    def elements(self) -> int:
        return self.nx * self.nz


@dataclass(frozen=True)
class PathAngles:
    """Azimuth/elevation of departure (out) and arrival (in), radians."""

    azimuth_in: float
    elevation_in: float
    azimuth_out: float
    elevation_out: float


def _check_finite(*angles):
    for a in angles:
        if not np.isfinite(a):
            raise InvalidInputError(f"angle must be finite, got {a}")


def ula_response(geometry: UlaGeometry, phi: float) -> np.ndarray:
    """Unit-norm ULA response; element a carries exp(-j 2 pi a d sin(phi))."""
    _check_finite(phi)
    a = np.arange(geometry.elements)
    return np.exp(-2j * np.pi * a * geometry.spacing * np.sin(phi)) / np.sqrt(geometry.elements)


def upa_response(geometry: UpaGeometry, phi: float, theta: float) -> np.ndarray:
    """Unit-norm UPA response b_x(phi, theta) kron b_z(theta).

    Element ordering is x-major: index ``ix * nz + iz``. The metasurface grids
    in :mod:`mpddsim.metasurfaces` use the same ordering.
    """
    _check_finite(phi, theta)
    bx = np.exp(-2j * np.pi * geometry.dx * np.arange(geometry.nx) * np.sin(phi) * np.sin(theta))
    bz = np.exp(-2j * np.pi * geometry.dz * np.arange(geometry.nz) * np.cos(theta))
    return np.kron(bx, bz) / np.sqrt(geometry.elements)


def path_outer_product(rx_response: np.ndarray, tx_response: np.ndarray) -> np.ndarray:
    """B_p = b_R b_T^H."""
    return np.outer(rx_response, np.conj(tx_response))
