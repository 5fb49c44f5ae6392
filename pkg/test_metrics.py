#!/usr/bin/env python3
"""
Test-Skript für Gütemaße, Abweichungen und Aggregation
"""

import math
import os
import sys
import tempfile
import unittest

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from errors import InvalidArgumentError
from graph_instances import assign_weights, enumerate_cubic_topologies
from metrics import AGGREGATE_HEADER, DEVIATION_METRICS, aggregate, aggregate_deviations, approx_ratio, deviations
from schedules import ParameterCurve, Trajectory, replay_curve, run_falqon, unweighted_baseline
from serialization import read_csv


def _trajectory(ratio, phi) -> Trajectory:
    size = len(ratio)
    return Trajectory(
        betas=np.full(size, np.nan),
        energy=-np.asarray(ratio, dtype=float),
        approx_ratio=np.asarray(ratio, dtype=float),
        success_prob=np.asarray(phi, dtype=float),
        feedback=np.full(size, np.nan),
    )


def test_approx_ratio_examples():
    print("🧪 Teste Approximationsverhältnis...")
    assert approx_ratio(-3.25, -3.25) == 1.0
    assert approx_ratio(-1.5, -2.0) == 0.75
    assert approx_ratio(0.0, -2.0) == 0.0
    for bad in (0.0, 1.0):
        try:
            approx_ratio(-1.0, bad)
            assert False, "E_min >= 0 hätte abgelehnt werden müssen"
        except InvalidArgumentError:
            pass
    print("✅ 1, 0.75, 0")


def test_self_deviation_is_zero():
    instance = assign_weights(enumerate_cubic_topologies(6)[0], seed=12)
    curve, trajectory = run_falqon(instance, dt=0.01, ell=40)
    series = deviations(curve, trajectory, curve, replay_curve(instance, curve))
    assert series.ell == 40
    for metric in DEVIATION_METRICS:
        assert np.all(series.series(metric) == 0.0), metric


def test_hand_built_deviations():
    """Drei Layer, Differenzen per Hand nachgerechnet"""
    print("🧪 Teste Abweichungen an einem Handbeispiel...")
    reference_curve = ParameterCurve(0.1, [0.0, 0.5, 1.0])
    candidate_curve = ParameterCurve(0.1, [0.25, 0.25, 1.5])
    reference = _trajectory([0.5, 0.6, 0.7, 0.8], [0.25, 0.3, 0.35, 0.4])
    candidate = _trajectory([0.5, 0.5, 0.75, 0.8], [0.25, 0.5, 0.25, 0.375])
    series = deviations(reference_curve, reference, candidate_curve, candidate)
    assert series.beta.tolist() == [0.25, 0.25, 0.5]
    assert np.allclose(series.approx_ratio, [0.1, 0.05, 0.0], rtol=0, atol=1e-15)
    assert np.allclose(series.success_prob, [0.2, 0.1, 0.025], rtol=0, atol=1e-15)
    # symmetrisch
    swapped = deviations(candidate_curve, candidate, reference_curve, reference)
    assert np.array_equal(swapped.beta, series.beta)
    means = series.layer_means()
    assert abs(means["beta"] - 1.0 / 3.0) < 1e-15
    print("✅ Übereinstimmung mit Handrechnung")


def test_deviation_mismatches():
    short = ParameterCurve(0.1, [0.0, 0.5])
    long = ParameterCurve(0.1, [0.0, 0.5, 1.0])
    other_dt = ParameterCurve(0.2, [0.0, 0.5, 1.0])
    trajectory2 = _trajectory([0.5, 0.5, 0.5], [0.1, 0.1, 0.1])
    trajectory3 = _trajectory([0.5, 0.5, 0.5, 0.5], [0.1, 0.1, 0.1, 0.1])
    for call in (
        lambda: deviations(short, trajectory2, long, trajectory3),
        lambda: deviations(long, trajectory3, other_dt, trajectory3),
        lambda: deviations(long, trajectory2, long, trajectory3),
        lambda: deviations(long, trajectory3, long, trajectory3).series("energy"),
    ):
        try:
            call()
            assert False, "Aufruf hätte scheitern müssen"
        except InvalidArgumentError:
            pass


def test_aggregate_single_series():
    values = np.array([0.1, 0.4, 0.2])
    result = aggregate([values])
    assert np.array_equal(result.mean, values)
    assert np.array_equal(result.std, np.zeros(3))
    assert np.array_equal(result.max, values)
    assert result.count == 1


def test_aggregate_two_constants():
    print("🧪 Teste Aggregation {0}, {2}...")
    result = aggregate([np.zeros(4), np.full(4, 2.0)])
    assert np.allclose(result.mean, 1.0, rtol=0, atol=0)
    assert np.allclose(result.std, math.sqrt(2.0), rtol=0, atol=1e-15)
    assert np.array_equal(result.max, np.full(4, 2.0))
    print("✅ mean 1, std sqrt(2), max 2")


def test_aggregate_matches_streaming():
    """Welford-Akkumulation als zweite, unabhängige Rechnung"""
    rng = np.random.default_rng(40)
    series = [rng.random(25) for _ in range(40)]
    count, mean, m2 = 0, np.zeros(25), np.zeros(25)
    for values in series:
        count += 1
        delta = values - mean
        mean += delta / count
        m2 += delta * (values - mean)
    result = aggregate(series)
    assert np.allclose(result.mean, mean, rtol=0, atol=1e-12)
    assert np.allclose(result.std, np.sqrt(m2 / (count - 1)), rtol=0, atol=1e-12)
    assert np.array_equal(result.max, np.max(np.vstack(series), axis=0))


def test_aggregate_rejects_bad_input():
    for bad in ([], [np.zeros(3), np.zeros(4)]):
        try:
            aggregate(bad)
            assert False, "Aufruf hätte scheitern müssen"
        except InvalidArgumentError:
            pass


def test_baseline_deviation_csv():
    print("🧪 Teste Baseline-Abweichungen und CSV-Ausgabe...")
    items = []
    for seed in range(3):
        instance = assign_weights(enumerate_cubic_topologies(6)[seed % 2], seed=seed)
        curve, trajectory = run_falqon(instance, dt=0.01, ell=30)
        baseline = unweighted_baseline(instance, dt=0.01, ell=30)
        items.append(deviations(curve, trajectory, baseline, replay_curve(instance, baseline)))
    stats = aggregate_deviations(items)
    assert set(stats) == set(DEVIATION_METRICS)
    assert stats["beta"].count == 3
    assert np.all(stats["beta"].max >= stats["beta"].mean)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "aggregate_beta_n6.csv")
        stats["beta"].save_csv(path, {"tool": "falqon-surrogate"})
        rows = read_csv(path)
    assert tuple(rows[0].keys()) == AGGREGATE_HEADER
    assert [row["layer"] for row in rows[:2]] == ["1", "2"]
    assert len(rows) == 30
    print("✅ Layer 1..30 geschrieben")


def run_all_tests():
    """Führt alle Tests aus"""
    print("🚀 Starte Metrik-Tests...\n")
    tests = [
        test_approx_ratio_examples,
        test_self_deviation_is_zero,
        test_hand_built_deviations,
        test_deviation_mismatches,
        test_aggregate_single_series,
        test_aggregate_two_constants,
        test_aggregate_matches_streaming,
        test_aggregate_rejects_bad_input,
        test_baseline_deviation_csv,
    ]
    passed = skipped = 0
    for test in tests:
        try:
            test()
            passed += 1
        except unittest.SkipTest as e:
            skipped += 1
            print(f"⏭️  {test.__name__} übersprungen: {e}")
        except Exception as e:
            print(f"❌ {test.__name__} fehlgeschlagen: {e!r}")
    print("=" * 60)
    print(f"📊 Test-Ergebnis: {passed}/{len(tests) - skipped} Tests bestanden ({skipped} übersprungen)")
    return passed + skipped == len(tests)


if __name__ == "__main__":
    sys.exit(0 if run_all_tests() else 1)
