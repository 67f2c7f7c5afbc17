"""Path generation and discrete-time doubly-dispersive channel assembly.

The time-domain channel over one frame of N samples (per stream) is

    H = sum_p  Hc_p kron G_p,     G_p = Theta_p Omega^{f_p} Pi^{l_p}

with Hc_p the small spatial gain matrix of path p (rx streams x tx streams),
Theta_p the prefix phase, Omega^{f} the Doppler rotation exp(+j 2 pi f n / N)
and Pi^{l} the forward cyclic shift. Streams are the outer Kronecker index.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .arrays import (PathAngles, UlaGeometry, UpaGeometry, path_outer_product,
                     ula_response, upa_response)
from .metasurfaces import SimStack, ris_phase_matrix, sim_cascade_rx, sim_cascade_tx


class DelaySpreadError(ValueError):
    """A path delay does not fit inside the frame."""


class DegenerateChannelError(ValueError):
    pass


class UnderspreadWarning(UserWarning):
    pass


PhaseFn = Callable[[np.ndarray], np.ndarray]


def zero_phase(n):
    return np.zeros_like(np.asarray(n, dtype=float))


def afdm_phase(c1: float, N: int) -> PhaseFn:
    """Chirp-periodic prefix phase c1 (N^2 - 2 N n)."""
    def phi(n):
        return c1 * (N ** 2 - 2 * N * np.asarray(n, dtype=float))
    return phi


@dataclass(frozen=True)
class Path:
    gain: complex
    delay: int  # taps
    doppler: float  # cycles per frame, may be fractional
    angles: PathAngles


@dataclass(frozen=True)
class RisLink:
    """Paths TX -> RIS k (``tx_paths``) and RIS k -> RX (``rx_paths``)."""

    surface: UpaGeometry
    tx_paths: tuple[Path, ...]
    rx_paths: tuple[Path, ...]
    phases: np.ndarray | None = None  # J angles, identity when None

    def phase_matrix(self) -> np.ndarray:
        phases = np.zeros(self.surface.elements) if self.phases is None else self.phases
        return ris_phase_matrix(phases)


@dataclass(frozen=True)
class PathSet:
    direct: tuple[Path, ...]
    ris: tuple[RisLink, ...] = ()

    @property
    def delays(self) -> np.ndarray:
        return np.array([p.delay for p in self.direct])

    @property
    def dopplers(self) -> np.ndarray:
        return np.array([p.doppler for p in self.direct])

    @property
    def gains(self) -> np.ndarray:
        return np.array([p.gain for p in self.direct])


def _sample_angles(rng: np.random.Generator) -> PathAngles:
    az = rng.uniform(-np.pi / 2, np.pi / 2, size=2)
    el = rng.uniform(0.0, np.pi, size=2)
    return PathAngles(azimuth_in=az[0], elevation_in=el[0],
                      azimuth_out=az[1], elevation_out=el[1])


def _sample_path_list(count, max_delay, max_doppler, rng, delays=None, dopplers=None):
    out = []
    for i in range(count):
        delay = int(delays[i]) if delays is not None else int(rng.integers(0, max_delay + 1))
        if dopplers is not None:
            f = float(dopplers[i])
        else:
            f = float(max_doppler * np.cos(rng.uniform(-np.pi, np.pi)))
        g = complex(rng.normal() + 1j * rng.normal()) / np.sqrt(2)
        out.append(Path(gain=g, delay=delay, doppler=f, angles=_sample_angles(rng)))
    return tuple(out)


def sample_paths(paths: int, max_delay: int, max_doppler: float, rng: np.random.Generator,
                 N: int | None = None, *, delays: Sequence[int] | None = None,
                 dopplers: Sequence[float] | None = None, ris_count: int = 0,
                 ris_surface: UpaGeometry | None = None, ris_tx_paths: int = 0,
                 ris_rx_paths: int = 0) -> PathSet:
    """Draw a random path set.

    Delays are uniform integer taps in [0, max_delay], Dopplers follow the
    Jakes law ``max_doppler * cos(U[-pi, pi])`` (normalized units), gains are
    CN(0, 1). ``delays``/``dopplers`` override the random draws (gains and
    angles stay random). Angles: elevation U[0, pi], azimuth U[-pi/2, pi/2];
    ULA front-ends read the elevation draw as their planar angle.
    """
    if N is not None and max_delay * abs(max_doppler) / N >= 1:
        warnings.warn("tau_max * nu_max >= 1: channel is not underspread", UnderspreadWarning)
    for name, seq in (("delays", delays), ("dopplers", dopplers)):
        if seq is not None and len(seq) != paths:
            raise ValueError(f"{name} override has {len(seq)} entries for {paths} paths")
    direct = _sample_path_list(paths, max_delay, max_doppler, rng, delays, dopplers)
    links = []
    if ris_count:
        if ris_surface is None:
            raise ValueError("ris_surface required when ris_count > 0")
        for _ in range(ris_count):
            tx = _sample_path_list(ris_tx_paths, max_delay, max_doppler, rng)
            rx = _sample_path_list(ris_rx_paths, max_delay, max_doppler, rng)
            links.append(RisLink(surface=ris_surface, tx_paths=tx, rx_paths=rx))
    return PathSet(direct=direct, ris=tuple(links))


# --- per-path N x N blocks ---------------------------------------------------

def cp_phase_diag(ell: int, phase_fn: PhaseFn, N: int) -> np.ndarray:
    if not 0 <= ell < N:
        raise DelaySpreadError(f"delay {ell} taps does not fit in N={N}")
    d = np.ones(N, dtype=complex)
    if ell:
        # entries n = 0..ell-1 carry phi(ell - n)
        d[:ell] = np.exp(-2j * np.pi * phase_fn(ell - np.arange(ell)))
    return d


def cp_phase_matrix(ell: int, phase_fn: PhaseFn, N: int) -> np.ndarray:
    return np.diag(cp_phase_diag(ell, phase_fn, N))


def doppler_diag(f: float, N: int) -> np.ndarray:
    return np.exp(2j * np.pi * f * np.arange(N) / N)


def doppler_block(f: float, N: int) -> np.ndarray:
    return np.diag(doppler_diag(f, N))


def cyclic_shift_block(ell: int, N: int) -> np.ndarray:
    """Pi^ell: (Pi^ell s)[n] = s[(n - ell) mod N]."""
    if ell < 0:
        raise ValueError("shift must be nonnegative")
    return np.roll(np.eye(N), ell, axis=0)


def path_block(ell: int, f: float, N: int, phase_fn: PhaseFn = zero_phase) -> np.ndarray:
    """G = Theta Omega^f Pi^ell as a dense N x N matrix."""
    diag = cp_phase_diag(ell, phase_fn, N) * doppler_diag(f, N)
    G = np.zeros((N, N), dtype=complex)
    n = np.arange(N)
    G[n, (n - ell) % N] = diag
    return G


# --- spatial front-ends -------------------------------------------------------

@dataclass(frozen=True)
class Frontend:
    """What a path sees at one end of the link.

    ``matrix`` maps surface elements to antennas (RX: Upsilon_R R^{1/2}) or
    antennas to surface elements (TX: R^{1/2} Upsilon_T); ``None`` means the
    surface is the antenna array itself.
    """

    side: str
    elements: int
    steer: Callable[[float, float], np.ndarray]
    matrix: np.ndarray | None = None

    @property
    def antennas(self) -> int:
        if self.matrix is None:
            return self.elements
        return self.matrix.shape[0] if self.side == "rx" else self.matrix.shape[1]


def ula_frontend(ula: UlaGeometry, side: str) -> Frontend:
    return Frontend(side=side, elements=ula.elements,
                    steer=lambda az, el: ula_response(ula, el))


def sim_frontend(stack: SimStack, phases=None) -> Frontend:
    upa = stack.upa
    if stack.side == "tx":
        matrix = stack.correlation_sqrt @ sim_cascade_tx(stack, phases)
    else:
        matrix = sim_cascade_rx(stack, phases) @ stack.correlation_sqrt
    return Frontend(side=stack.side, elements=stack.atoms,
                    steer=lambda az, el: upa_response(upa, az, el), matrix=matrix)


def path_gain_matrix(gain: complex, B: np.ndarray, upsilon_t=None, upsilon_r=None,
                     r_tx_sqrt=None, r_rx_sqrt=None, V=None, U=None,
                     scale: float = 1.0) -> np.ndarray:
    """scale * gain * U^H Upsilon_R R_RX^{1/2} B R_TX^{1/2} Upsilon_T V.

    Any factor left as ``None`` is treated as an identity.
    """
    M = np.asarray(B, dtype=complex)
    if r_rx_sqrt is not None:
        M = r_rx_sqrt @ M
    if upsilon_r is not None:
        M = upsilon_r @ M
    if U is not None:
        M = U.conj().T @ M
    if r_tx_sqrt is not None:
        M = M @ r_tx_sqrt
    if upsilon_t is not None:
        M = M @ upsilon_t
    if V is not None:
        M = M @ V
    return scale * gain * M


def _apply_fronts(M, rx: Frontend, tx: Frontend, U, V):
    if rx.matrix is not None:
        M = rx.matrix @ M
    if U is not None:
        M = U.conj().T @ M
    if tx.matrix is not None:
        M = M @ tx.matrix
    if V is not None:
        M = M @ V
    return M


def direct_path_matrix(path: Path, rx: Frontend, tx: Frontend, n_paths: int,
                       U=None, V=None) -> np.ndarray:
    a = path.angles
    B = path_outer_product(rx.steer(a.azimuth_in, a.elevation_in),
                           tx.steer(a.azimuth_out, a.elevation_out))
    scale = np.sqrt(rx.elements * tx.elements / n_paths)
    return scale * path.gain * _apply_fronts(B, rx, tx, U, V)


def ris_path_matrix(link: RisLink, rx_path: Path, tx_path: Path, rx: Frontend,
                    tx: Frontend, U=None, V=None) -> np.ndarray:
    J = link.surface.elements
    ar, at = rx_path.angles, tx_path.angles
    B_rx = path_outer_product(rx.steer(ar.azimuth_in, ar.elevation_in),
                              upa_response(link.surface, ar.azimuth_out, ar.elevation_out))
    B_tx = path_outer_product(upa_response(link.surface, at.azimuth_in, at.elevation_in),
                              tx.steer(at.azimuth_out, at.elevation_out))
    # sqrt(J M_rx / P_bar) * sqrt(J M_tx / P_tilde)
    scale = np.sqrt(J * rx.elements / len(link.rx_paths)) * np.sqrt(J * tx.elements / len(link.tx_paths))
    core = B_rx @ link.phase_matrix() @ B_tx
    return scale * rx_path.gain * tx_path.gain * _apply_fronts(core, rx, tx, U, V)


# --- assembled channel --------------------------------------------------------

@dataclass
class TdChannel:
    """Channel as a sum of Kronecker terms ``gains[i] kron blocks[i]``."""

    gains: list[np.ndarray]
    blocks: list[np.ndarray]
    waveform: str = "td"
    _matrix: np.ndarray | None = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return self.blocks[0].shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        r, c = self.gains[0].shape
        return r * self.N, c * self.N

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            out = np.zeros(self.shape, dtype=complex)
            for g, G in zip(self.gains, self.blocks):
                out += np.kron(g, G)
            self._matrix = out
        return self._matrix

    def frobenius_sq(self) -> float:
        return float(np.linalg.norm(self.matrix) ** 2)

    def scaled(self, alpha: float) -> "TdChannel":
        return replace(self, gains=[alpha * g for g in self.gains], _matrix=None)

    def apply(self, s: np.ndarray) -> np.ndarray:
        """H s via the per-path decomposition (stream-major stacking)."""
        rows, cols = self.gains[0].shape
        S = np.asarray(s).reshape(cols, self.N)
        out = np.zeros((rows, self.N), dtype=complex)
        for g, G in zip(self.gains, self.blocks):
            out += g @ (S @ G.T)
        return out.ravel()


def assemble_td_channel(path_set: PathSet, rx: Frontend, tx: Frontend, N: int,
                        phase_fn: PhaseFn = zero_phase, U=None, V=None) -> TdChannel:
    gains, blocks = [], []
    P = len(path_set.direct)
    for p in path_set.direct:
        gains.append(direct_path_matrix(p, rx, tx, P, U, V))
        blocks.append(path_block(p.delay, p.doppler, N, phase_fn))
    for link in path_set.ris:
        for rp in link.rx_paths:
            for tp in link.tx_paths:
                gains.append(ris_path_matrix(link, rp, tp, rx, tx, U, V))
                blocks.append(path_block(rp.delay + tp.delay, rp.doppler + tp.doppler,
                                         N, phase_fn))
    if not gains:
        raise DegenerateChannelError("path set is empty")
    return TdChannel(gains=gains, blocks=blocks)


def conventional_mimo_channel(path_set: PathSet, tx_ula: UlaGeometry, rx_ula: UlaGeometry,
                              N: int, phase_fn: PhaseFn = zero_phase) -> TdChannel:
    """sqrt(N_T N_R / P) sum_p h_p a_R a_T^H kron G_p (no SIM, no RIS)."""
    if path_set.ris:
        raise ValueError("conventional model excludes RIS links")
    return assemble_td_channel(path_set, ula_frontend(rx_ula, "rx"),
                               ula_frontend(tx_ula, "tx"), N, phase_fn)


def normalize_channel(channel: TdChannel, target_sq_norm: float | None = None) -> TdChannel:
    """Scale so that ||H||_F^2 equals ``target_sq_norm`` (default: row count)."""
    norm_sq = channel.frobenius_sq()
    if norm_sq <= 0:
        raise DegenerateChannelError("cannot normalize an all-zero channel")
    target = channel.shape[0] if target_sq_norm is None else target_sq_norm
    return channel.scaled(np.sqrt(target / norm_sq))
