"""Gradient-ascent SIM phase optimization.

Every path contributes O_p = Upsilon_R C_p Upsilon_T with the fixed core
C_p = h~_p R_RX^{1/2} B_p R_TX^{1/2}. Fixing all layers but one, O_p is linear
in that layer's diagonal psi: O_p = D diag(psi) U, which gives both the
linearization used for reconstruction checks and the closed-form gradient

    g_m = 2 Im{ e^{-j zeta_m} (D^H O_p U^H)[m, m] }.

Note on naming: the step normalization is called ``step_scale`` here to keep
it apart from the atom area and the Bernoulli sparsity, which share a symbol.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .arrays import path_outer_product, upa_response
from .channel import PathSet
from .metasurfaces import SimStack, sim_cascade_rx, sim_cascade_tx

ObjectiveKind = Literal["communication", "sensing"]


@dataclass(frozen=True)
class AscentConfig:
    iterations: int = 200
    decay: float = 0.99
    genie_gains: bool = True
    reselect: Literal["iteration", "round"] = "iteration"  # weakest-path refresh (sensing)

    def __post_init__(self):
        if self.reselect not in ("iteration", "round"):
            raise ValueError("reselect must be 'iteration' or 'round'")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")


@dataclass
class SimProblem:
    """Fixed geometry and path cores; the phases are the free variables."""

    tx: SimStack
    rx: SimStack
    cores: list[np.ndarray]  # each M_rx x M_tx

    @classmethod
    def from_paths(cls, path_set: PathSet, tx: SimStack, rx: SimStack,
                   unit_gains: bool = False) -> "SimProblem":
        """Cores for every direct and RIS-cascaded path of ``path_set``.

        ``unit_gains`` replaces each complex gain by 1 (the gains are not
        known to the optimizer in the sensing setting).
        """
        if tx.side != "tx" or rx.side != "rx":
            raise ValueError("expected a TX stack and an RX stack")
        upa_t, upa_r = tx.upa, rx.upa
        P = len(path_set.direct)
        cores = []
        for p in path_set.direct:
            a = p.angles
            B = path_outer_product(upa_response(upa_r, a.azimuth_in, a.elevation_in),
                                   upa_response(upa_t, a.azimuth_out, a.elevation_out))
            h = 1.0 if unit_gains else p.gain
            cores.append(np.sqrt(tx.atoms * rx.atoms / P) * h * B)
        for link in path_set.ris:
            J = link.surface.elements
            Phi = link.phase_matrix()
            for rp in link.rx_paths:
                for tp in link.tx_paths:
                    ar, at = rp.angles, tp.angles
                    B_rx = path_outer_product(upa_response(upa_r, ar.azimuth_in, ar.elevation_in),
                                              upa_response(link.surface, ar.azimuth_out,
                                                           ar.elevation_out))
                    B_tx = path_outer_product(upa_response(link.surface, at.azimuth_in,
                                                           at.elevation_in),
                                              upa_response(upa_t, at.azimuth_out, at.elevation_out))
                    h = 1.0 if unit_gains else rp.gain * tp.gain
                    scale = (np.sqrt(J * rx.atoms / len(link.rx_paths))
                             * np.sqrt(J * tx.atoms / len(link.tx_paths)))
                    cores.append(scale * h * (B_rx @ Phi @ B_tx))
        rr, rt = rx.correlation_sqrt, tx.correlation_sqrt
        return cls(tx=tx, rx=rx, cores=[rr @ C @ rt for C in cores])

    def components(self, Z, Zr) -> list[np.ndarray]:
        """O_p for all paths (N_R x N_T)."""
        Ut, Ur = sim_cascade_tx(self.tx, Z), sim_cascade_rx(self.rx, Zr)
        return [Ur @ C @ Ut for C in self.cores]


def path_powers(components: Sequence[np.ndarray]) -> np.ndarray:
    return np.array([np.linalg.norm(O) ** 2 for O in components])


def select_min_path(components: Sequence[np.ndarray]) -> int:
    """argmin_p ||O_p||_F (0-based, ties resolve to the lowest index)."""
    if not len(components):
        raise ValueError("no paths")
    return int(np.argmin(path_powers(components)))


def objective_value(problem: SimProblem, Z, Zr, kind: ObjectiveKind = "communication",
                    path: int | None = None) -> float:
    powers = path_powers(problem.components(Z, Zr))
    if kind == "communication":
        return float(powers.sum())
    return float(powers[int(np.argmin(powers)) if path is None else path])


# --- layer decompositions -----------------------------------------------------

def _tx_chain(stack: SimStack, Z):
    """Per layer q (0-based): (A_q, U_q) with Upsilon_T = A_q diag(psi_q) U_q."""
    Q = stack.layers
    psi = np.exp(1j * np.asarray(Z))
    # ups[q] = upstream activation entering layer q (before its phase), M x N_T
    ups, S = [], None
    for q in range(Q):
        U = stack.interface if q == 0 else stack.transmission(q + 1) @ S
        ups.append(U)
        S = psi[q][:, None] * U
    # downs[q] = Psi_Q Gamma_Q ... Gamma_{q+2}, i.e. everything after layer q
    downs = [None] * Q
    A = np.eye(stack.atoms, dtype=complex)
    for q in range(Q - 1, -1, -1):
        downs[q] = A
        if q > 0:
            A = A @ (psi[q][:, None] * stack.transmission(q + 1))
    return downs, ups


def _rx_chain(stack: SimStack, Zr):
    """Per layer q (0-based): (L_q, R_q) with Upsilon_R = L_q diag(delta_q) R_q."""
    Q = stack.layers
    delta = np.exp(1j * np.asarray(Zr))
    lefts, L = [], None
    for q in range(Q):
        L = stack.interface if q == 0 else (L * delta[q - 1][None, :]) @ stack.transmission(q + 1)
        lefts.append(L)
    rights = [None] * Q
    R = np.eye(stack.atoms, dtype=complex)
    for q in range(Q - 1, -1, -1):
        rights[q] = R
        if q > 0:
            R = (stack.transmission(q + 1) * delta[q][None, :]) @ R
    return lefts, rights


def tx_layer_linearization(problem: SimProblem, Z, Zr, q: int, p: int, nt: int) -> np.ndarray:
    """Equivalent matrix (N_R x M) with column ``nt`` of O_p = matrix @ psi_q (q 1-based)."""
    if not 1 <= q <= problem.tx.layers:
        raise IndexError(f"TX layer {q} outside 1..{problem.tx.layers}")
    downs, ups = _tx_chain(problem.tx, Z)
    D = sim_cascade_rx(problem.rx, Zr) @ problem.cores[p] @ downs[q - 1]
    return D * ups[q - 1][:, nt][None, :]


def rx_layer_linearization(problem: SimProblem, Z, Zr, q: int, p: int, nt: int) -> np.ndarray:
    """Equivalent matrix (N_R x M_rx) with column ``nt`` of O_p = matrix @ delta_q."""
    if not 1 <= q <= problem.rx.layers:
        raise IndexError(f"RX layer {q} outside 1..{problem.rx.layers}")
    lefts, rights = _rx_chain(problem.rx, Zr)
    U = rights[q - 1] @ problem.cores[p] @ sim_cascade_tx(problem.tx, Z)
    return lefts[q - 1] * U[:, nt][None, :]


def _weights(problem, Z, Zr, kind, path):
    """Which paths enter the objective."""
    P = len(problem.cores)
    if kind == "communication":
        return list(range(P))
    if path is None:
        path = select_min_path(problem.components(Z, Zr))
    return [path]


def gradients(problem: SimProblem, Z, Zr, kind: ObjectiveKind = "communication",
              path: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradients w.r.t. TX phases (Q x M) and RX phases (Q~ x M~)."""
    Z, Zr = np.asarray(Z, float), np.asarray(Zr, float)
    paths = _weights(problem, Z, Zr, kind, path)
    Ut, Ur = sim_cascade_tx(problem.tx, Z), sim_cascade_rx(problem.rx, Zr)
    downs, ups = _tx_chain(problem.tx, Z)
    lefts, rights = _rx_chain(problem.rx, Zr)
    gt = np.zeros_like(Z)
    gr = np.zeros_like(Zr)
    for p in paths:
        C = problem.cores[p]
        O = Ur @ C @ Ut
        RC = Ur @ C
        for q in range(problem.tx.layers):
            D = RC @ downs[q]
            gt[q] += 2 * np.imag(np.exp(-1j * Z[q]) * np.sum((D.conj().T @ O) * ups[q].conj(), axis=1))
        CU = C @ Ut
        for q in range(problem.rx.layers):
            U = rights[q] @ CU
            gr[q] += 2 * np.imag(np.exp(-1j * Zr[q])
                                 * np.sum((lefts[q].conj().T @ O) * U.conj(), axis=1))
    return gt, gr


def _wrap(x):
    return np.angle(np.exp(1j * x))


def ascent_step(Z, Zr, gt, gr, i: int, decay: float):
    """Normalized step: each side moves at most decay^i * pi per atom."""
    out = []
    for phases, g in ((Z, gt), (Zr, gr)):
        peak = np.max(np.abs(g)) if g.size else 0.0
        if peak > 0:
            step_scale = np.pi / peak
            phases = _wrap(phases + decay ** i * step_scale * g)
        out.append(phases)
    return out[0], out[1]


@dataclass
class AscentResult:
    tx_phases: np.ndarray
    rx_phases: np.ndarray
    history: list[float] = field(default_factory=list)


def _run(problem, Z, Zr, cfg: AscentConfig, kind, path, history, start=0):
    for i in range(start, start + cfg.iterations):
        gt, gr = gradients(problem, Z, Zr, kind, path)
        Z, Zr = ascent_step(Z, Zr, gt, gr, i, cfg.decay)
        history.append(objective_value(problem, Z, Zr, kind))
    return Z, Zr


def optimize_comm(problem: SimProblem, cfg: AscentConfig = AscentConfig(),
                  Z0=None, Zr0=None) -> AscentResult:
    """Steepest ascent on the total path power."""
    Z = problem.tx.zero_phases() if Z0 is None else np.array(Z0, float)
    Zr = problem.rx.zero_phases() if Zr0 is None else np.array(Zr0, float)
    history = [objective_value(problem, Z, Zr)]
    Z, Zr = _run(problem, Z, Zr, cfg, "communication", None, history)
    return AscentResult(Z, Zr, history)


def optimize_sensing(problem: SimProblem, cfg: AscentConfig = AscentConfig(),
                     Z0=None, Zr0=None) -> AscentResult:
    """Greedy max-min: P+1 rounds of ascent on the currently weakest path.

    With ``reselect="round"`` the weakest path is picked once per round; with
    ``"iteration"`` it is refreshed before every step, which keeps the paths
    balanced. The decay exponent keeps counting across rounds.
    """
    Z = problem.tx.zero_phases() if Z0 is None else np.array(Z0, float)
    Zr = problem.rx.zero_phases() if Zr0 is None else np.array(Zr0, float)
    history = [objective_value(problem, Z, Zr, "sensing")]
    for rnd in range(len(problem.cores) + 1):
        p_min = select_min_path(problem.components(Z, Zr))
        target = p_min if cfg.reselect == "round" else None
        Z, Zr = _run(problem, Z, Zr, cfg, "sensing", target, history, start=rnd * cfg.iterations)
    return AscentResult(Z, Zr, history)
