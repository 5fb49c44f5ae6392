#!/usr/bin/env python3
"""
Exakte Zustandsvektor-Simulation der FALQON-/Annealing-Layer
Ein Layer = Problemphase e^{-i dt b H_p} gefolgt von Treiberrotationen e^{-i dt beta H_d}.
"""

from dataclasses import dataclass

import numpy as np

from config import MAX_SIMULATION_QUBITS
from errors import InvalidArgumentError, ResourceLimitError
from graph_instances import GraphInstance
from hamiltonian import apply_driver


class StateVector:
    """2^n komplexe Amplituden (double), wird in-place aktualisiert"""

    def __init__(self, n: int, amps: np.ndarray):
        amps = np.ascontiguousarray(amps, dtype=np.complex128)
        if amps.shape != (1 << n,):
            raise InvalidArgumentError(f"Amplituden der Länge {amps.shape} passen nicht zu n={n}")
        self.n = n
        self.amps = amps

    @property
    def dim(self) -> int:
        return 1 << self.n

    def norm_squared(self) -> float:
        return float(np.vdot(self.amps, self.amps).real)

    def copy(self) -> "StateVector":
        return StateVector(self.n, self.amps.copy())


@dataclass(frozen=True)
class LayerParams:
    """dt > 0, beta = Treiberkoeffizient, b = Problemkoeffizient (1 bei FALQON)"""
    dt: float
    beta: float
    b: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidArgumentError(f"dt muss positiv sein, nicht {self.dt}")


def _check_dim(state: StateVector, size: int):
    if state.dim != size:
        raise InvalidArgumentError(f"Dimensionsfehler: Zustand {state.dim}, Operator {size}")


def init_minus_state(n: int) -> StateVector:
    """|->^n: amps[x] = (-1)^popcount(x) / 2^(n/2)"""
    if n < 1 or n > MAX_SIMULATION_QUBITS:
        raise ResourceLimitError(f"n={n} außerhalb 1..{MAX_SIMULATION_QUBITS}")
    x = np.arange(1 << n, dtype=np.int64)
    parity = np.zeros(1 << n, dtype=np.int64)
    for i in range(n):
        parity ^= (x >> i) & 1
    amps = np.where(parity == 1, -1.0, 1.0).astype(np.complex128) / np.sqrt(float(1 << n))
    return StateVector(n, amps)


def apply_problem_phase(state: StateVector, diag: np.ndarray, dt: float, b: float = 1.0) -> StateVector:
    """amps[x] *= exp(-i dt b diag[x])"""
    _check_dim(state, diag.shape[0])
    if b != 0.0:
        state.amps *= np.exp(-1j * (dt * b) * diag)
    return state


def apply_driver_rotations(state: StateVector, dt: float, beta: float) -> StateVector:
    """Exakte Rotation e^{-i dt beta X_i} für jedes Qubit (die X_i kommutieren)"""
    angle = dt * beta
    if angle == 0.0:
        return state
    c, s = np.cos(angle), np.sin(angle)
    for i in range(state.n):
        stride = 1 << i
        view = state.amps.reshape(-1, 2, stride)
        a0 = view[:, 0, :].copy()
        view[:, 0, :] = c * a0 - 1j * s * view[:, 1, :]
        view[:, 1, :] = -1j * s * a0 + c * view[:, 1, :]
    return state


def apply_layer(state: StateVector, diag: np.ndarray, params: LayerParams) -> StateVector:
    apply_problem_phase(state, diag, params.dt, params.b)
    return apply_driver_rotations(state, params.dt, params.beta)


def expect_problem(state: StateVector, diag: np.ndarray) -> float:
    """<H_p> = sum_x diag[x] |amps[x]|^2"""
    _check_dim(state, diag.shape[0])
    probs = state.amps.real ** 2 + state.amps.imag ** 2
    return float(np.dot(diag, probs))


def commutator_expectation(state: StateVector, instance: GraphInstance, diag: np.ndarray) -> float:
    """A = i<[H_d, H_p]> = -2 Im <H_d psi | H_p psi>"""
    _check_dim(state, diag.shape[0])
    if instance.n != state.n:
        raise InvalidArgumentError(f"Instanz mit n={instance.n}, Zustand mit n={state.n}")
    phi = diag * state.amps
    chi = apply_driver(state.amps, state.n)
    return float(-2.0 * np.vdot(chi, phi).imag)


def success_probability(state: StateVector, ground_set: np.ndarray) -> float:
    """Gesamtpopulation auf den entarteten Grundzuständen"""
    ground_set = np.asarray(ground_set, dtype=np.int64)
    if ground_set.size and (ground_set.min() < 0 or ground_set.max() >= state.dim):
        raise InvalidArgumentError("Grundzustandsindex außerhalb des Zustandsraums")
    amps = state.amps[ground_set]
    return float(np.sum(amps.real ** 2 + amps.imag ** 2))
