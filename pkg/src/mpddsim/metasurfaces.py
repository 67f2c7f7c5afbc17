"""RIS / SIM responses: phase matrices, Rayleigh-Sommerfeld transmission
matrices, SIM cascades and spatial correlation.

Geometry layout: each layer is a centered ``mx x mz`` grid in the x-z plane,
layers stacked along +y; the antenna ULA lies on the x axis at y = 0 and the
innermost layer (q = 1) sits ``antenna_gap`` away. Atom index is x-major,
matching :func:`mpddsim.arrays.upa_response`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np

from .arrays import InvalidInputError, UpaGeometry


class GeometryError(ValueError):
    pass


def ris_phase_matrix(phases) -> np.ndarray:
    phases = np.asarray(phases, dtype=float)
    if not np.all(np.isfinite(phases)):
        raise InvalidInputError("RIS phases must be finite")
    return np.diag(np.exp(1j * phases))


def sim_layer_matrix(phases) -> np.ndarray:
    return ris_phase_matrix(phases)


def diffraction_coefficient(atom_area, epsilon, distance, wavelength):
    """Rayleigh-Sommerfeld coefficient; vectorized over ``epsilon``/``distance``."""
    distance = np.asarray(distance, dtype=float)
    if np.any(distance <= 0):
        raise GeometryError("propagation distance must be positive")
    return (
        atom_area * np.cos(epsilon) / distance
        * (1.0 / (2 * np.pi * distance) - 1j / wavelength)
        * np.exp(2j * np.pi * distance / wavelength)
    )


def grid_positions(mx: int, mz: int, spacing: float, y: float = 0.0) -> np.ndarray:
    """(mx*mz, 3) centered grid in the x-z plane at height y, x-major order."""
    ix, iz = np.meshgrid(np.arange(mx), np.arange(mz), indexing="ij")
    x = (ix.ravel() - (mx - 1) / 2) * spacing
    z = (iz.ravel() - (mz - 1) / 2) * spacing
    return np.column_stack([x, np.full(x.shape, y), z])


def ula_positions(count: int, spacing: float, y: float = 0.0) -> np.ndarray:
    x = (np.arange(count) - (count - 1) / 2) * spacing
    return np.column_stack([x, np.full(count, y), np.zeros(count)])


def _transfer(dst, src, atom_area, wavelength, obliquity) -> np.ndarray:
    """Entry (i, j): coefficient from src point j to dst point i."""
    diff = dst[:, None, :] - src[None, :, :]
    d = np.linalg.norm(diff, axis=-1)
    if np.any(d <= 0):
        raise GeometryError("coincident source and destination points")
    if obliquity == "aligned":
        eps = np.zeros_like(d)
    else:
        eps = np.arccos(np.clip(np.abs(diff[..., 1]) / d, 0.0, 1.0))
    return diffraction_coefficient(atom_area, eps, d, wavelength)


@dataclass(frozen=True)
class SimStack:
    """Static geometry of one SIM plus its cached transmission matrices.

    Lengths are in meters. ``obliquity="aligned"`` sets every propagation angle
    to zero (antennas and atoms on a common axis grid); ``"geometric"`` uses the
    true angle from the layer normal.
    """

    side: Literal["tx", "rx"]
    layers: int
    mx: int
    mz: int
    antennas: int
    wavelength: float
    layer_gap: float
    atom_spacing: float
    atom_area: float
    antenna_spacing: float
    antenna_gap: float
    obliquity: Literal["aligned", "geometric"] = "aligned"

    def __post_init__(self):
        if self.layers < 1 or self.mx < 1 or self.mz < 1 or self.antennas < 1:
            raise InvalidInputError("SIM layer/atom/antenna counts must be positive")
        for name in ("wavelength", "layer_gap", "atom_spacing", "atom_area", "antenna_gap"):
            if not getattr(self, name) > 0:
                raise GeometryError(f"{name} must be positive")
        if self.side not in ("tx", "rx"):
            raise InvalidInputError(f"side must be 'tx' or 'rx', got {self.side!r}")

    @classmethod
    def from_wavelengths(cls, side, layers, mx, mz, antennas, wavelength,
                         layer_gap=5.0, atom_spacing=0.5, antenna_spacing=0.5,
                         antenna_gap=None, obliquity="aligned"):
        """Build from spacings expressed in wavelengths (atom area = spacing^2)."""
        antenna_gap = layer_gap if antenna_gap is None else antenna_gap
        return cls(side=side, layers=layers, mx=mx, mz=mz, antennas=antennas,
                   wavelength=wavelength, layer_gap=layer_gap * wavelength,
                   atom_spacing=atom_spacing * wavelength,
                   atom_area=(atom_spacing * wavelength) ** 2,
                   antenna_spacing=antenna_spacing * wavelength,
                   antenna_gap=antenna_gap * wavelength, obliquity=obliquity)

    @property
    def atoms(self) -> int:
        return self.mx * self.mz

    @property
    def upa(self) -> UpaGeometry:
        s = self.atom_spacing / self.wavelength
        return UpaGeometry(self.mx, self.mz, s, s, self.wavelength)

    def layer_positions(self, q: int) -> np.ndarray:
        """Atom positions of layer q (1-based, q = 1 is next to the antennas)."""
        if not 1 <= q <= self.layers:
            raise IndexError(f"layer {q} outside 1..{self.layers}")
        y = self.antenna_gap + (q - 1) * self.layer_gap
        return grid_positions(self.mx, self.mz, self.atom_spacing, y)

    def antenna_positions(self) -> np.ndarray:
        return ula_positions(self.antennas, self.antenna_spacing)

    @cached_property
    def interface(self) -> np.ndarray:
        """Gamma_1 (M x N_T) on the TX side, Xi_1 (N_R x M) on the RX side."""
        ant, atoms = self.antenna_positions(), self.layer_positions(1)
        if self.side == "tx":
            return _transfer(atoms, ant, self.atom_area, self.wavelength, self.obliquity)
        return _transfer(ant, atoms, self.atom_area, self.wavelength, self.obliquity)

    @cached_property
    def inter_layer(self) -> tuple[np.ndarray, ...]:
        """Matrices for q = 2..Q oriented along the signal flow.

        TX: Gamma_q maps layer q-1 to layer q. RX: Xi_q maps layer q to q-1.
        """
        mats = []
        for q in range(2, self.layers + 1):
            lo, hi = self.layer_positions(q - 1), self.layer_positions(q)
            if self.side == "tx":
                mats.append(_transfer(hi, lo, self.atom_area, self.wavelength, self.obliquity))
            else:
                mats.append(_transfer(lo, hi, self.atom_area, self.wavelength, self.obliquity))
        return tuple(mats)

    def transmission(self, q: int) -> np.ndarray:
        """Gamma_q / Xi_q for q = 1..Q (q = 1 is the antenna interface)."""
        if q == 1:
            return self.interface
        return inter_layer_matrix(self, q)

    @cached_property
    def correlation(self) -> np.ndarray:
        """Spatial correlation at the outermost layer."""
        return correlation_matrix(self.layer_positions(self.layers), self.wavelength)

    @cached_property
    def correlation_sqrt(self) -> np.ndarray:
        return matrix_principal_sqrt(self.correlation)

    def zero_phases(self) -> np.ndarray:
        return np.zeros((self.layers, self.atoms))


def inter_layer_matrix(stack: SimStack, q: int) -> np.ndarray:
    if not 2 <= q <= stack.layers:
        raise IndexError(f"inter-layer index {q} outside 2..{stack.layers}")
    return stack.inter_layer[q - 2]


def antenna_interface_matrix(stack: SimStack) -> np.ndarray:
    return stack.interface


def _check_phases(stack: SimStack, phases) -> np.ndarray:
    if phases is None:
        return stack.zero_phases()
    phases = np.asarray(phases, dtype=float)
    if phases.shape != (stack.layers, stack.atoms):
        raise InvalidInputError(
            f"expected phases of shape {(stack.layers, stack.atoms)}, got {phases.shape}")
    return phases


def sim_cascade_tx(stack: SimStack, phases=None) -> np.ndarray:
    """Upsilon_T = Psi_Q Gamma_Q ... Psi_1 Gamma_1 (M x N_T)."""
    phases = _check_phases(stack, phases)
    out = np.exp(1j * phases[0])[:, None] * stack.interface
    for q in range(2, stack.layers + 1):
        out = np.exp(1j * phases[q - 1])[:, None] * (stack.transmission(q) @ out)
    return out


def sim_cascade_rx(stack: SimStack, phases=None) -> np.ndarray:
    """Upsilon_R = Xi_1 Delta_1 Xi_2 Delta_2 ... Xi_Q Delta_Q (N_R x M)."""
    phases = _check_phases(stack, phases)
    out = stack.interface * np.exp(1j * phases[0])[None, :]
    for q in range(2, stack.layers + 1):
        out = (out @ stack.transmission(q)) * np.exp(1j * phases[q - 1])[None, :]
    return out


def sim_cascade(stack: SimStack, phases=None) -> np.ndarray:
    return sim_cascade_tx(stack, phases) if stack.side == "tx" else sim_cascade_rx(stack, phases)


def correlation_matrix(positions: np.ndarray, wavelength: float) -> np.ndarray:
    """sinc(2 d / lambda) correlation between all position pairs."""
    d = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=-1)
    return np.sinc(2 * d / wavelength)


def matrix_principal_sqrt(R: np.ndarray, atol: float = 1e-10) -> np.ndarray:
    """Principal square root of a Hermitian matrix, negative eigenvalues clamped to 0."""
    R = np.asarray(R)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise InvalidInputError("square matrix required")
    if not np.allclose(R, R.conj().T, atol=atol, rtol=0):
        raise InvalidInputError("matrix is not symmetric/Hermitian")
    w, V = np.linalg.eigh(R)
    root = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T
    return root.real if np.isrealobj(R) else root


def clamp_psd(R: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(R)
    out = (V * np.clip(w, 0.0, None)) @ V.conj().T
    return out.real if np.isrealobj(R) else out
