#!/usr/bin/env python3
"""
FALQON-Rückkopplung, digitalisiertes lineares Annealing und Kurven-Replay
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Union

import numpy as np
from typing_extensions import Self

from errors import InvalidArgumentError
from graph_instances import GraphInstance, strip_weights
from hamiltonian import ProblemDiagonal, build_problem_diagonal
from metrics import approx_ratio
from serialization import fmt17, provenance_comment, read_text, write_csv, write_text
from simulator import (
    LayerParams,
    StateVector,
    apply_layer,
    commutator_expectation,
    expect_problem,
    init_minus_state,
    success_probability,
)

logger = logging.getLogger(__name__)

CURVE_SOURCES = ("falqon", "surrogate", "unweighted-baseline", "external")
TRAJECTORY_HEADER = ("layer", "beta", "energy", "approx_ratio", "success_prob", "feedback_A")


def _check_dt_ell(dt: float, ell: int):
    if not (np.isfinite(dt) and dt > 0):
        raise InvalidArgumentError(f"dt muss positiv sein, nicht {dt}")
    if int(ell) < 1:
        raise InvalidArgumentError(f"ell muss >= 1 sein, nicht {ell}")


@dataclass(frozen=True)
class ParameterCurve:
    """beta_1..beta_ell bei Zeitschritt dt"""
    dt: float
    betas: np.ndarray
    source: str = "external"

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64).reshape(-1)
        _check_dt_ell(self.dt, betas.size)
        if not np.all(np.isfinite(betas)):
            raise InvalidArgumentError("Kurve enthält nicht-endliche Werte")
        if self.source not in CURVE_SOURCES:
            raise InvalidArgumentError(f"Unbekannte Quelle '{self.source}'")
        betas.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def ell(self) -> int:
        return int(self.betas.size)

    def with_source(self, source: str) -> "ParameterCurve":
        return ParameterCurve(self.dt, self.betas, source)

    def to_text(self, prov: Optional[Dict] = None) -> str:
        lines = [f"# dt={fmt17(self.dt)} ell={self.ell} source={self.source}"]
        if prov:
            lines.append(provenance_comment(prov))
        lines.extend(fmt17(b) for b in self.betas)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Self:
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# dt="):
            raise InvalidArgumentError("Kurvendatei ohne Kopfzeile '# dt=... ell=... source=...'")
        try:
            header = dict(token.split("=", 1) for token in lines[0][1:].split())
            dt = float(header["dt"])
            ell = int(header["ell"])
            source = header.get("source", "external")
            betas = [float(line) for line in lines[1:] if line.strip() and not line.startswith("#")]
        except (KeyError, ValueError) as e:
            raise InvalidArgumentError(f"Kurvendatei fehlerhaft: {e}") from e
        if len(betas) != ell:
            raise InvalidArgumentError(f"Kurvendatei: ell={ell}, aber {len(betas)} Werte")
        return cls(dt, np.array(betas), source)

    def save(self, path: str, prov: Optional[Dict] = None):
        write_text(path, self.to_text(prov))

    @classmethod
    def load(cls, path: str) -> Self:
        return cls.from_text(read_text(path))


@dataclass(frozen=True)
class ScheduleCurve:
    """Paare (a_j, b_j) für A(t_j) H_d und B(t_j) H_p"""
    dt: float
    pairs: np.ndarray

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.float64)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise InvalidArgumentError("ScheduleCurve erwartet ell x 2 Paare")
        _check_dt_ell(self.dt, pairs.shape[0])
        if not np.all(np.isfinite(pairs)):
            raise InvalidArgumentError("Schedule enthält nicht-endliche Werte")
        pairs.setflags(write=False)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def ell(self) -> int:
        return int(self.pairs.shape[0])


@dataclass
class Trajectory:
    """Observablen pro Layer 0..ell; Layer 0 ist der Anfangszustand"""
    betas: np.ndarray          # Layer 0 = NaN; bei Schedules der Treiberkoeffizient a_j
    energy: np.ndarray
    approx_ratio: np.ndarray
    success_prob: np.ndarray
    feedback: np.ndarray       # A_j, NaN falls nicht erhoben
    b_coeffs: Optional[np.ndarray] = None

    @property
    def ell(self) -> int:
        return int(self.energy.size - 1)

    def rows(self) -> List[List]:
        return [
            [j, float(self.betas[j]), float(self.energy[j]), float(self.approx_ratio[j]),
             float(self.success_prob[j]), float(self.feedback[j])]
            for j in range(self.energy.size)
        ]

    def save_csv(self, path: str, prov: Optional[Dict] = None):
        write_csv(path, TRAJECTORY_HEADER, self.rows(), prov)


class _Recorder:
    """Sammelt Observablen Layer für Layer"""

    def __init__(self, instance: GraphInstance, problem: ProblemDiagonal, ell: int, with_feedback: bool):
        self.instance = instance
        self.problem = problem
        self.with_feedback = with_feedback
        size = ell + 1
        self.betas = np.full(size, np.nan)
        self.energy = np.zeros(size)
        self.ratio = np.zeros(size)
        self.phi = np.zeros(size)
        self.feedback = np.full(size, np.nan)

    def record(self, j: int, state: StateVector, beta: float) -> float:
        energy = expect_problem(state, self.problem.diag)
        self.betas[j] = beta
        self.energy[j] = energy
        self.ratio[j] = approx_ratio(energy, self.problem.e_min) if self.problem.e_min < 0 else np.nan
        self.phi[j] = success_probability(state, self.problem.ground_set)
        if self.with_feedback:
            self.feedback[j] = commutator_expectation(state, self.instance, self.problem.diag)
        return self.feedback[j]

    def trajectory(self, b_coeffs: Optional[np.ndarray] = None) -> Trajectory:
        return Trajectory(self.betas, self.energy, self.ratio, self.phi, self.feedback, b_coeffs)


def run_falqon(instance: GraphInstance, dt: float, ell: int,
               problem: Optional[ProblemDiagonal] = None):
    """FALQON: beta_{j+1} = -A_j, Start in |->^n, Problemphase vor Treiber"""
    _check_dt_ell(dt, ell)
    problem = problem or build_problem_diagonal(instance)
    state = init_minus_state(instance.n)
    recorder = _Recorder(instance, problem, ell, with_feedback=True)
    feedback = recorder.record(0, state, np.nan)
    betas = np.zeros(ell)
    for j in range(1, ell + 1):
        beta = -feedback + 0.0  # +0.0 normalisiert -0.0
        betas[j - 1] = beta
        apply_layer(state, problem.diag, LayerParams(dt, beta, 1.0))
        feedback = recorder.record(j, state, beta)
    return ParameterCurve(dt, betas, "falqon"), recorder.trajectory()


def linear_schedule(dt: float, ell: int) -> ScheduleCurve:
    """a_j = 1 - t_j/T, b_j = t_j/T mit t_j = j dt, T = ell dt, j = 1..ell"""
    _check_dt_ell(dt, ell)
    j = np.arange(1, ell + 1, dtype=np.float64)
    b = j / float(ell)
    return ScheduleCurve(dt, np.column_stack([1.0 - b, b]))


def replay_curve(instance: GraphInstance, curve: Union[ParameterCurve, ScheduleCurve],
                 problem: Optional[ProblemDiagonal] = None, record_feedback: bool = True) -> Trajectory:
    """Spielt eine Kurve ab, ohne Rückkopplung aus dem Zustand

    Bei ParameterCurve ist b_j = 1 und A_j wird nur protokolliert; bei
    ScheduleCurve bleibt die Feedback-Spalte NaN.
    """
    problem = problem or build_problem_diagonal(instance)
    state = init_minus_state(instance.n)
    if isinstance(curve, ParameterCurve):
        drivers, problems = curve.betas, np.ones(curve.ell)
        with_feedback = record_feedback
    elif isinstance(curve, ScheduleCurve):
        drivers, problems = curve.pairs[:, 0], curve.pairs[:, 1]
        with_feedback = False
    else:
        raise InvalidArgumentError(f"Unbekannter Kurventyp {type(curve).__name__}")
    recorder = _Recorder(instance, problem, curve.ell, with_feedback)
    recorder.record(0, state, np.nan)
    for j in range(1, curve.ell + 1):
        apply_layer(state, problem.diag, LayerParams(curve.dt, float(drivers[j - 1]), float(problems[j - 1])))
        recorder.record(j, state, float(drivers[j - 1]))
    b_coeffs = None if isinstance(curve, ParameterCurve) else np.concatenate([[np.nan], problems])
    return recorder.trajectory(b_coeffs)


def unweighted_baseline(instance: GraphInstance, dt: float, ell: int) -> ParameterCurve:
    """FALQON-Kurve der Kopie mit Einheitsgewichten"""
    curve, _ = run_falqon(strip_weights(instance), dt, ell)
    return curve.with_source("unweighted-baseline")


def monotonic_violation(trajectory: Trajectory) -> float:
    """Größter Anstieg von <H_p> zwischen zwei Layern (0 wenn monoton)"""
    if trajectory.energy.size < 2:
        return 0.0
    return float(max(0.0, np.max(np.diff(trajectory.energy))))
