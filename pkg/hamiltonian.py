#!/usr/bin/env python3
"""
Problem- und Treiber-Hamiltonian für gewichtetes MaxCut
H_p wird nur als Diagonale gespeichert, H_d = sum_i X_i wird implizit angewandt.
"""

import math
from dataclasses import dataclass, fields
from typing import Optional, Tuple

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh
from typing_extensions import Self

from config import (
    DENSE_EIGEN_MAX_DIM,
    FEATURE_FORMAT_VERSION,
    MAX_MIDPOINT_GAP_QUBITS,
    MAX_SIMULATION_QUBITS,
    TOLERANCES,
)
from errors import DegenerateSpectrumError, InvalidArgumentError, NumericError, ResourceLimitError
from graph_instances import GraphInstance


@dataclass(frozen=True)
class ProblemDiagonal:
    """Diagonale von H_p über alle 2^n Basiszustände plus Grundzustandsdaten"""
    n: int
    diag: np.ndarray
    e_min: float
    ground_set: np.ndarray

    @property
    def dim(self) -> int:
        return 1 << self.n


@dataclass(frozen=True)
class DriverSpec:
    """Transversaler Treiber H_d = sum_i X_i auf n Qubits"""
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise InvalidArgumentError("DriverSpec braucht n >= 1")

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return apply_driver(vec, self.n)


def apply_driver(vec: np.ndarray, n: int) -> np.ndarray:
    """sum_i X_i |vec>: pro Qubit werden die Amplitudenpaare mit Bit i getauscht"""
    if vec.shape[0] != 1 << n:
        raise InvalidArgumentError(f"Dimension {vec.shape[0]} passt nicht zu n={n}")
    out = np.zeros_like(vec)
    for i in range(n):
        stride = 1 << i
        out.reshape(-1, 2, stride)[...] += vec.reshape(-1, 2, stride)[:, ::-1, :]
    return out


def build_problem_diagonal(instance: GraphInstance) -> ProblemDiagonal:
    """diag[x] = -sum_(i,j) w_ij (1 - z_i z_j) / 2, Bit k = 0 bedeutet z_k = +1"""
    n = instance.n
    if n > MAX_SIMULATION_QUBITS:
        raise ResourceLimitError(f"n={n} überschreitet das Speicherlimit von {MAX_SIMULATION_QUBITS} Qubits")
    x = np.arange(1 << n, dtype=np.int64)
    diag = np.zeros(1 << n, dtype=np.float64)
    for u, v, w in instance.edges:
        cut = ((x >> u) ^ (x >> v)) & 1
        diag -= w * cut
    e_min, ground_set = ground_data(diag)
    diag.setflags(write=False)
    ground_set.setflags(write=False)
    return ProblemDiagonal(n, diag, e_min, ground_set)


def ground_data(diag: np.ndarray, tol_rel: float = TOLERANCES["tol_rel"]) -> Tuple[float, np.ndarray]:
    """Kleinster Eigenwert und alle Basisindizes innerhalb tol_rel * |e_min|"""
    if diag.size == 0:
        raise InvalidArgumentError("Leere Diagonale")
    e_min = float(np.min(diag))
    threshold = e_min + tol_rel * abs(e_min)
    ground_set = np.flatnonzero(diag <= threshold).astype(np.int64)
    return e_min, ground_set


def gap_problem(diag: np.ndarray, tol_rel: float = TOLERANCES["tol_rel"]) -> float:
    """Abstand zwischen e_min und dem nächsten unterscheidbaren Diagonalwert"""
    e_min = float(np.min(diag))
    threshold = e_min + tol_rel * abs(e_min)
    above = diag[diag > threshold]
    if above.size == 0:
        raise DegenerateSpectrumError("Diagonale hat nur einen Wert (kantenloser Graph?)")
    return float(np.min(above) - e_min)


def dense_driver_matrix(n: int) -> np.ndarray:
    """Dichte Matrix von H_d (nur für kleine n, Qubit i = Bit i des Index)"""
    pauli_x = np.array([[0.0, 1.0], [1.0, 0.0]])
    total = np.zeros((1 << n, 1 << n))
    for i in range(n):
        total += np.kron(np.kron(np.eye(1 << (n - 1 - i)), pauli_x), np.eye(1 << i))
    return total


def dense_midpoint_matrix(diag: np.ndarray, n: int) -> np.ndarray:
    return 0.5 * (dense_driver_matrix(n) + np.diag(diag))


def gap_midpoint(instance: GraphInstance, diag: Optional[np.ndarray] = None,
                 tol: float = TOLERANCES["krylov_tol"],
                 maxiter: int = TOLERANCES["krylov_maxiter"]) -> float:
    """Spektrallücke von (H_d + H_p)/2 aus den beiden kleinsten Eigenwerten

    Kleine Dimensionen werden dicht diagonalisiert, sonst implizit neu
    gestartetes Lanczos (ARPACK) auf einem LinearOperator.
    """
    n = instance.n
    if n > MAX_MIDPOINT_GAP_QUBITS:
        raise ResourceLimitError(f"Midpoint-Lücke nur bis n={MAX_MIDPOINT_GAP_QUBITS}, nicht n={n}")
    if diag is None:
        diag = build_problem_diagonal(instance).diag
    dim = 1 << n
    if dim <= DENSE_EIGEN_MAX_DIM:
        values = np.linalg.eigvalsh(dense_midpoint_matrix(diag, n))
        return float(values[1] - values[0])

    def matvec(vec):
        vec = np.asarray(vec, dtype=np.float64).reshape(-1)
        return 0.5 * (apply_driver(vec, n) + diag * vec)

    operator = LinearOperator((dim, dim), matvec=matvec, dtype=np.float64)
    v0 = np.random.Generator(np.random.Philox(0)).standard_normal(dim)
    try:
        values, vectors = eigsh(operator, k=2, which="SA", tol=tol, maxiter=maxiter,
                                v0=v0, ncv=min(dim, 40))
    except ArpackNoConvergence as e:
        residual = _max_residual(matvec, e.eigenvalues, e.eigenvectors)
        raise NumericError(f"Lanczos nicht konvergiert nach {maxiter} Iterationen", residual=residual) from e

    order = np.argsort(values)
    values, vectors = values[order], vectors[:, order]
    residual = _max_residual(matvec, values, vectors)
    if residual > 100.0 * tol * max(1.0, float(np.max(np.abs(values)))):
        raise NumericError(f"Lanczos-Residuum zu groß: {residual:.3e}", residual=residual)
    return float(values[1] - values[0])


def _max_residual(matvec, values, vectors) -> float:
    if values is None or len(values) == 0:
        return float("inf")
    return max(float(np.linalg.norm(matvec(vectors[:, k]) - values[k] * vectors[:, k]))
               for k in range(len(values)))


@dataclass(frozen=True)
class ScalarFeatures:
    """Konditionierungsvektor s in fester Reihenfolge (Indexmerkmal bewusst weggelassen)"""
    v_count: float
    ground_energy: float
    gap_problem: float
    gap_midpoint: float
    size_sqrt: float
    size_log: float

    VERSION = FEATURE_FORMAT_VERSION

    @classmethod
    def field_names(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in self.field_names()], dtype=np.float64)

    def to_list(self):
        return [float(v) for v in self.as_array()]

    @classmethod
    def from_array(cls, values) -> Self:
        values = [float(v) for v in values]
        if len(values) != len(cls.field_names()):
            raise InvalidArgumentError(f"Erwarte {len(cls.field_names())} Skalare, nicht {len(values)}")
        return cls(*values)


def scalar_features(instance: GraphInstance) -> ScalarFeatures:
    """(|V|, E_min, gap_problem, gap_midpoint, sqrt|V|, ln|V|)"""
    problem = build_problem_diagonal(instance)
    n = instance.n
    return ScalarFeatures(
        v_count=float(n),
        ground_energy=problem.e_min,
        gap_problem=gap_problem(problem.diag),
        gap_midpoint=gap_midpoint(instance, diag=problem.diag),
        size_sqrt=math.sqrt(n),
        size_log=math.log(n),
    )
