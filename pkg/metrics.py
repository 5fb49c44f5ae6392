#!/usr/bin/env python3
"""
Gütemaße und Abweichungsstatistiken pro Layer
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, Optional, Sequence

import numpy as np

from errors import InvalidArgumentError
from serialization import write_csv

if TYPE_CHECKING:
    from schedules import ParameterCurve, Trajectory

DEVIATION_METRICS = ("beta", "approx_ratio", "success_prob")
AGGREGATE_HEADER = ("layer", "mean", "std", "max")


def approx_ratio(energy: float, e_min: float) -> float:
    """r_A = <H_p> / E_min"""
    if not e_min < 0:
        raise InvalidArgumentError(f"E_min muss negativ sein, nicht {e_min}")
    return float(energy) / float(e_min)


@dataclass(frozen=True)
class DeviationSeries:
    """|Δβ_j|, |Δr_A,j|, |Δφ_j| für j = 1..ell"""
    beta: np.ndarray
    approx_ratio: np.ndarray
    success_prob: np.ndarray

    @property
    def ell(self) -> int:
        return int(self.beta.size)

    def series(self, metric: str) -> np.ndarray:
        if metric not in DEVIATION_METRICS:
            raise InvalidArgumentError(f"Unbekannte Metrik '{metric}'")
        return getattr(self, metric)

    def layer_means(self) -> Dict[str, float]:
        return {metric: float(np.mean(self.series(metric))) for metric in DEVIATION_METRICS}


def deviations(reference_curve: "ParameterCurve", reference: "Trajectory",
               candidate_curve: "ParameterCurve", candidate: "Trajectory") -> DeviationSeries:
    """Elementweise Beträge der Differenzen; Layer 0 ist für beide gleich und fällt weg"""
    if reference_curve.ell != candidate_curve.ell:
        raise InvalidArgumentError(f"Ungleiche Längen: {reference_curve.ell} vs {candidate_curve.ell}")
    if reference_curve.dt != candidate_curve.dt:
        raise InvalidArgumentError(f"Ungleiche dt: {reference_curve.dt} vs {candidate_curve.dt}")
    if reference.ell != reference_curve.ell or candidate.ell != candidate_curve.ell:
        raise InvalidArgumentError("Trajektorie passt nicht zur Kurve")
    return DeviationSeries(
        beta=np.abs(np.asarray(candidate_curve.betas) - np.asarray(reference_curve.betas)),
        approx_ratio=np.abs(candidate.approx_ratio[1:] - reference.approx_ratio[1:]),
        success_prob=np.abs(candidate.success_prob[1:] - reference.success_prob[1:]),
    )


@dataclass(frozen=True)
class AggregateSeries:
    """Mittelwert, Stichproben-Standardabweichung und Maximum pro Layer"""
    mean: np.ndarray
    std: np.ndarray
    max: np.ndarray
    count: int

    def rows(self, first_layer: int = 1):
        return [[first_layer + k, float(self.mean[k]), float(self.std[k]), float(self.max[k])]
                for k in range(self.mean.size)]

    def save_csv(self, path: str, prov: Optional[Dict] = None, first_layer: int = 1):
        write_csv(path, AGGREGATE_HEADER, self.rows(first_layer), prov)


def aggregate(series: Sequence[np.ndarray]) -> AggregateSeries:
    """Statistik über Instanzen (N-1 im Nenner, std = 0 für N = 1)"""
    if len(series) == 0:
        raise InvalidArgumentError("Keine Serien zum Aggregieren")
    lengths = {np.asarray(s).size for s in series}
    if len(lengths) != 1:
        raise InvalidArgumentError(f"Ungleiche Serienlängen: {sorted(lengths)}")
    stacked = np.vstack([np.asarray(s, dtype=np.float64) for s in series])
    count = stacked.shape[0]
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0, ddof=1) if count > 1 else np.zeros(stacked.shape[1])
    return AggregateSeries(mean=mean, std=std, max=stacked.max(axis=0), count=count)


def aggregate_deviations(items: Sequence[DeviationSeries]) -> Dict[str, AggregateSeries]:
    return {metric: aggregate([item.series(metric) for item in items]) for metric in DEVIATION_METRICS}
