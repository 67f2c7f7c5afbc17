"""OFDM / OTFS / AFDM modulation and effective channels.

Every waveform is a unitary N x N demodulation transform T applied per
stream; modulation is T^H. The decision-domain channel of a time-domain
channel sum_p Hc_p kron G_p is sum_p Hc_p kron (T G_p T^H).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channel import PhaseFn, TdChannel, afdm_phase, zero_phase

KINDS = ("ofdm", "otfs", "afdm")


@dataclass(frozen=True)
class FrameSpec:
    kind: str
    N: int
    k_delay: int | None = None  # OTFS grid rows
    k_doppler: int | None = None  # OTFS grid columns
    c1: float = 0.0
    c2: float = 0.0
    streams: int = 1

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise ValueError(f"unknown waveform {self.kind!r}")
        if self.N < 1 or self.streams < 1:
            raise ValueError("N and streams must be positive")
        if kind == "otfs":
            if self.k_delay is None or self.k_doppler is None:
                root = math.isqrt(self.N)
                if root * root != self.N:
                    raise ValueError("OTFS needs k_delay and k_doppler when N is not a square")
                object.__setattr__(self, "k_delay", self.k_delay or root)
                object.__setattr__(self, "k_doppler", self.k_doppler or root)
            if self.k_delay * self.k_doppler != self.N:
                raise ValueError(f"OTFS grid {self.k_delay}x{self.k_doppler} != N={self.N}")

    @property
    def phase_fn(self) -> PhaseFn:
        if self.kind == "afdm":
            return afdm_phase(self.c1, self.N)
        return zero_phase


def default_c1(max_doppler: float, N: int) -> float:
    """(2 ceil(f_max) + 1) / (2N)."""
    return (2 * math.ceil(abs(max_doppler)) + 1) / (2 * N)


@lru_cache(maxsize=64)
def dft_matrix(N: int) -> np.ndarray:
    n = np.arange(N)
    F = np.exp(-2j * np.pi * np.outer(n, n) / N) / np.sqrt(N)
    F.setflags(write=False)
    return F


def afdm_lambda(c: float, N: int) -> np.ndarray:
    """diag(exp(-j 2 pi c n^2)), n = 0..N-1."""
    n = np.arange(N)
    return np.diag(np.exp(-2j * np.pi * c * n.astype(float) ** 2))


@lru_cache(maxsize=64)
def _transform(kind, N, k_delay, k_doppler, c1, c2) -> np.ndarray:
    if kind == "ofdm":
        T = np.array(dft_matrix(N))
    elif kind == "otfs":
        T = np.kron(dft_matrix(k_doppler), np.eye(k_delay))
    else:
        n = np.arange(N).astype(float)
        l1 = np.exp(-2j * np.pi * c1 * n ** 2)
        l2 = np.exp(-2j * np.pi * c2 * n ** 2)
        T = l2[:, None] * dft_matrix(N) * l1[None, :]
    T.setflags(write=False)
    return T


def demod_transform(spec: FrameSpec) -> np.ndarray:
    """Unitary T taking a received TD frame to the decision domain."""
    return _transform(spec.kind, spec.N, spec.k_delay, spec.k_doppler, spec.c1, spec.c2)


def _per_stream(x, N):
    x = np.asarray(x)
    if x.size % N:
        raise ValueError(f"length {x.size} is not a multiple of N={N}")
    return x.reshape(-1, N)


def ofdm_mod(x, N=None):
    X = _per_stream(x, N or np.size(x))
    return (X @ dft_matrix(X.shape[1]).conj()).ravel()  # F^H x per stream (F symmetric)


def ofdm_demod(r, N=None):
    R = _per_stream(r, N or np.size(r))
    return (R @ dft_matrix(R.shape[1])).ravel()


def otfs_mod(X: np.ndarray) -> np.ndarray:
    """vec(X F_{K'}^H) for a K x K' delay-Doppler grid (column stacking)."""
    X = np.asarray(X)
    S = X @ dft_matrix(X.shape[1]).conj()
    return S.ravel(order="F")


def otfs_demod(r, k_delay: int, k_doppler: int) -> np.ndarray:
    """Y = devec(r) F_{K'}, returned as a K x K' grid."""
    R = np.asarray(r).reshape((k_delay, k_doppler), order="F")
    return R @ dft_matrix(k_doppler)


def afdm_mod(x, c1: float, c2: float) -> np.ndarray:
    x = np.asarray(x)
    N = x.size
    n = np.arange(N).astype(float)
    l1 = np.exp(-2j * np.pi * c1 * n ** 2)
    l2 = np.exp(-2j * np.pi * c2 * n ** 2)
    return l1.conj() * (dft_matrix(N).conj().T @ (l2.conj() * x))


def afdm_demod(r, c1: float, c2: float) -> np.ndarray:
    r = np.asarray(r)
    N = r.size
    n = np.arange(N).astype(float)
    l1 = np.exp(-2j * np.pi * c1 * n ** 2)
    l2 = np.exp(-2j * np.pi * c2 * n ** 2)
    return l2 * (dft_matrix(N) @ (l1 * r))


def modulate(spec: FrameSpec, x) -> np.ndarray:
    """Stream-major symbols (streams * N) to the stacked TD signal."""
    T = demod_transform(spec)
    X = _per_stream(x, spec.N)
    return (X @ T.conj()).ravel()  # each row -> T^H row


def demodulate(spec: FrameSpec, r) -> np.ndarray:
    """Stacked TD receive vector (any number of rx streams) to the decision domain."""
    T = demod_transform(spec)
    R = _per_stream(r, spec.N)
    return (R @ T.T).ravel()


def effective_channel(td: TdChannel, spec: FrameSpec) -> TdChannel:
    """Replace each block G by T G T^H. The TD channel must carry the
    waveform's own prefix phase (AFDM: chirp-periodic prefix)."""
    if not td.blocks:
        raise ValueError("channel carries no per-path decomposition")
    T = demod_transform(spec)
    Th = T.conj().T
    blocks = [T @ G @ Th for G in td.blocks]
    return TdChannel(gains=list(td.gains), blocks=blocks, waveform=spec.kind)


# --- QPSK ---------------------------------------------------------------------

def qpsk_map(bits, es: float = 1.0) -> np.ndarray:
    """Gray QPSK: bit pair (b0, b1) -> c (1 - 2 b0) + j c (1 - 2 b1), c = sqrt(Es/2)."""
    bits = np.asarray(bits, dtype=np.int8).ravel()
    if bits.size % 2:
        raise ValueError("QPSK needs an even number of bits")
    c = np.sqrt(es / 2)
    b = bits.reshape(-1, 2)
    return c * ((1 - 2 * b[:, 0]) + 1j * (1 - 2 * b[:, 1]))


def qpsk_demap(symbols) -> np.ndarray:
    s = np.asarray(symbols).ravel()
    return np.column_stack([s.real < 0, s.imag < 0]).astype(np.int8).ravel()


def qpsk_slice(symbols, es: float = 1.0) -> np.ndarray:
    """Nearest constellation point."""
    s = np.asarray(symbols)
    c = np.sqrt(es / 2)
    return c * (np.where(s.real < 0, -1.0, 1.0) + 1j * np.where(s.imag < 0, -1.0, 1.0))
