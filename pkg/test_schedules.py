#!/usr/bin/env python3
"""
Test-Skript für FALQON, lineares Annealing und Kurven-Replay
"""

import json
import math
import os
import sys
import tempfile
import unittest
from unittest import mock

import numpy as np
from scipy.linalg import expm

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from errors import InvalidArgumentError
from graph_instances import GraphInstance, assign_weights, derive_seed, enumerate_cubic_topologies, strip_weights
from hamiltonian import build_problem_diagonal, dense_driver_matrix
from schedules import (
    TRAJECTORY_HEADER,
    ParameterCurve,
    ScheduleCurve,
    linear_schedule,
    monotonic_violation,
    replay_curve,
    run_falqon,
    unweighted_baseline,
)
from serialization import dumps17, read_csv, read_text, write_text
from simulator import LayerParams, apply_layer, init_minus_state

TRIANGLE = GraphInstance(3, ((0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)))
SNAPSHOT_N10 = os.path.join(os.path.dirname(os.path.abspath(__file__)), "snapshots", "falqon_n10_unweighted.json")


def _weighted(n: int, index: int, seed: int) -> GraphInstance:
    return assign_weights(enumerate_cubic_topologies(n)[index], seed=seed)


def test_falqon_first_beta_is_zero():
    print("🧪 Teste FALQON-Startwert...")
    for seed in range(5):
        curve, trajectory = run_falqon(_weighted(6, seed % 2, seed), dt=0.01, ell=20)
        assert curve.betas[0] == 0.0
        assert math.copysign(1.0, curve.betas[0]) == 1.0
        assert curve.source == "falqon"
        assert curve.ell == 20
        assert trajectory.energy.size == 21
        assert np.isnan(trajectory.betas[0])
        assert np.array_equal(trajectory.betas[1:], curve.betas)
    print("✅ beta_1 = +0.0")


def test_falqon_feedback_law():
    """beta_{j+1} = -A_j mit A_j aus der Trajektorie"""
    curve, trajectory = run_falqon(_weighted(6, 1, 3), dt=0.01, ell=50)
    assert np.array_equal(curve.betas, -trajectory.feedback[:-1] + 0.0)


def test_falqon_energy_descends():
    print("🧪 Teste monotonen Abstieg von <H_p>...")
    for seed in (1, 2, 3):
        _, trajectory = run_falqon(_weighted(6, seed % 2, seed), dt=0.01, ell=300)
        assert monotonic_violation(trajectory) <= 1e-9
        assert trajectory.energy[-1] < trajectory.energy[0]
        assert trajectory.approx_ratio[-1] > trajectory.approx_ratio[0]
    print("✅ Nicht steigend innerhalb 1e-9")


def _n8_test_instances(draws: int = 8):
    topologies = enumerate_cubic_topologies(8)
    return [assign_weights(topology, seed=derive_seed(2024, 0, 8, t, d))
            for t, topology in enumerate(topologies) for d in range(draws)]


def test_falqon_beats_linear_schedule_at_equal_layers():
    print("🧪 Teste FALQON gegen lineares Annealing (40 Instanzen, n=8, ell=1001)...")
    linear = linear_schedule(0.01, 1001)
    falqon_ratio, falqon_phi, linear_ratio, linear_phi = [], [], [], []
    for instance in _n8_test_instances():
        problem = build_problem_diagonal(instance)
        _, trajectory = run_falqon(instance, 0.01, 1001, problem=problem)
        assert monotonic_violation(trajectory) <= 1e-9
        annealed = replay_curve(instance, linear, problem=problem)
        falqon_ratio.append(trajectory.approx_ratio[-1])
        falqon_phi.append(trajectory.success_prob[-1])
        linear_ratio.append(annealed.approx_ratio[-1])
        linear_phi.append(annealed.success_prob[-1])
    assert np.mean(falqon_ratio) > np.mean(linear_ratio)
    assert np.mean(falqon_phi) > np.mean(linear_phi)
    print(f"✅ r_A {np.mean(falqon_ratio):.4f} > {np.mean(linear_ratio):.4f}, "
          f"phi {np.mean(falqon_phi):.4f} > {np.mean(linear_phi):.4f}")


def test_unweighted_n10_curves_match_snapshot():
    print("🧪 Teste die 19 ungewichteten FALQON-Kurven für n=10 gegen den Snapshot...")
    curves = {}
    for topology in enumerate_cubic_topologies(10):
        curve, trajectory = run_falqon(topology, 0.01, 1001)
        assert monotonic_violation(trajectory) <= 1e-9
        curves[topology.topology_id] = curve.betas.tolist()
    assert len(curves) == 19
    if os.getenv("FALQON_UPDATE_SNAPSHOTS") == "1" or not os.path.exists(SNAPSHOT_N10):
        write_text(SNAPSHOT_N10, dumps17({"dt": 0.01, "ell": 1001, "curves": curves}) + "\n")
        raise unittest.SkipTest(f"Snapshot neu geschrieben: {SNAPSHOT_N10}")
    stored = json.loads(read_text(SNAPSHOT_N10))
    assert stored["dt"] == 0.01 and stored["ell"] == 1001
    assert sorted(stored["curves"]) == sorted(curves)
    for topology_id, betas in curves.items():
        reference = np.array(stored["curves"][topology_id], dtype=np.float64)
        assert reference.shape == (1001,)
        assert np.max(np.abs(np.array(betas) - reference)) <= 1e-10, topology_id
    print("✅ Abweichung <= 1e-10")


def test_falqon_and_replay_share_layer_kernel():
    instance = _weighted(6, 0, 4)
    with mock.patch("schedules.apply_layer", wraps=apply_layer) as layer:
        curve, _ = run_falqon(instance, dt=0.01, ell=12)
        assert layer.call_count == 12
        replay_curve(instance, linear_schedule(0.01, 7))
        assert layer.call_count == 19
    params = layer.call_args_list[11].args[2]
    assert params == LayerParams(0.01, float(curve.betas[11]), 1.0)
    last = layer.call_args_list[-1].args[2]
    assert last.beta == 0.0 and last.b == 1.0


def test_linear_schedule_endpoints():
    schedule = linear_schedule(0.1, 10)
    assert schedule.ell == 10
    assert schedule.pairs[-1].tolist() == [0.0, 1.0]
    assert schedule.pairs[4].tolist() == [0.5, 0.5]
    assert np.allclose(schedule.pairs.sum(axis=1), 1.0, rtol=0, atol=1e-15)


def test_linear_schedule_matches_dense_product():
    print("🧪 Teste Annealing-Replay gegen dichtes Trotter-Produkt...")
    schedule = linear_schedule(0.1, 10)
    problem = build_problem_diagonal(TRIANGLE)
    driver = dense_driver_matrix(3)
    psi = init_minus_state(3).amps.copy()
    for a, b in schedule.pairs:
        psi = expm(-1j * 0.1 * a * driver) @ (expm(-1j * 0.1 * b * np.diag(problem.diag)) @ psi)
    expected = float(np.dot(problem.diag, np.abs(psi) ** 2))
    trajectory = replay_curve(TRIANGLE, schedule)
    assert abs(trajectory.energy[-1] - expected) < 1e-12
    assert np.all(np.isnan(trajectory.feedback))
    assert np.array_equal(trajectory.b_coeffs[1:], schedule.pairs[:, 1])
    print("✅ Abweichung < 1e-12")


def test_replay_reproduces_falqon():
    print("🧪 Teste Replay einer FALQON-Kurve...")
    instance = _weighted(8, 2, 21)
    curve, reference = run_falqon(instance, dt=0.01, ell=100)
    replayed = replay_curve(instance, curve)
    for name in ("energy", "approx_ratio", "success_prob", "feedback"):
        assert np.allclose(getattr(replayed, name), getattr(reference, name), rtol=0, atol=1e-12), name
    assert replayed.b_coeffs is None
    print("✅ Identische Trajektorie")


def test_replay_zero_curve_keeps_energy():
    instance = _weighted(6, 0, 9)
    trajectory = replay_curve(instance, ParameterCurve(0.05, np.zeros(40)))
    assert np.allclose(trajectory.energy, trajectory.energy[0], rtol=0, atol=1e-13)
    assert np.allclose(trajectory.success_prob, trajectory.success_prob[0], rtol=0, atol=1e-13)


def test_replay_without_feedback():
    instance = _weighted(4, 0, 1)
    curve, _ = run_falqon(instance, dt=0.01, ell=10)
    trajectory = replay_curve(instance, curve, record_feedback=False)
    assert np.all(np.isnan(trajectory.feedback))


def test_unweighted_baseline():
    print("🧪 Teste ungewichtete Baseline...")
    unit = strip_weights(_weighted(6, 1, 4))
    own, _ = run_falqon(unit, dt=0.01, ell=60)
    baseline = unweighted_baseline(unit, dt=0.01, ell=60)
    assert baseline.source == "unweighted-baseline"
    assert np.array_equal(baseline.betas, own.betas)
    print("✅ Für Einheitsgewichte identisch zur eigenen FALQON-Kurve")


def test_baseline_closer_for_near_unit_weights():
    topology = enumerate_cubic_topologies(6)[0]
    near_unit = GraphInstance(6, tuple((u, v, 1.01) for u, v, _ in topology.edges), topology.topology_id)
    spread = assign_weights(topology, seed=77)
    gaps = []
    for instance in (near_unit, spread):
        curve, _ = run_falqon(instance, dt=0.01, ell=100)
        baseline = unweighted_baseline(instance, dt=0.01, ell=100)
        gaps.append(float(np.mean(np.abs(curve.betas - baseline.betas))))
    assert gaps[0] < gaps[1]


def test_curve_text_roundtrip():
    print("🧪 Teste Kurvendateien...")
    curve, _ = run_falqon(_weighted(4, 0, 5), dt=0.01, ell=25)
    text = curve.to_text({"tool": "falqon-surrogate", "command": "run-falqon"})
    lines = text.splitlines()
    assert lines[0] == "# dt=0.01 ell=25 source=falqon"
    assert lines[1].startswith("# provenance ")
    loaded = ParameterCurve.from_text(text)
    assert np.array_equal(loaded.betas, curve.betas)
    assert loaded.dt == curve.dt and loaded.source == curve.source
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "k.curve")
        curve.save(path)
        assert np.array_equal(ParameterCurve.load(path).betas, curve.betas)
    print("✅ Bitgenau zurückgelesen")


def test_curve_validation():
    print("🧪 Teste Kurvenvalidierung...")
    bad_calls = [
        lambda: ParameterCurve(0.0, [1.0]),
        lambda: ParameterCurve(0.01, []),
        lambda: ParameterCurve(0.01, [float("inf")]),
        lambda: ParameterCurve(0.01, [1.0], "unbekannt"),
        lambda: ScheduleCurve(0.01, np.zeros((3, 3))),
        lambda: ParameterCurve.from_text("0.1\n0.2\n"),
        lambda: ParameterCurve.from_text("# dt=0.01 ell=3 source=falqon\n0.1\n0.2\n"),
        lambda: run_falqon(TRIANGLE, dt=-0.01, ell=5),
        lambda: linear_schedule(0.01, 0),
    ]
    for call in bad_calls:
        try:
            call()
            assert False, "Aufruf hätte scheitern müssen"
        except InvalidArgumentError:
            pass
    print("✅ Ungültige Kurven abgelehnt")


def test_trajectory_csv():
    _, trajectory = run_falqon(TRIANGLE, dt=0.01, ell=5)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "t.csv")
        trajectory.save_csv(path, {"tool": "falqon-surrogate"})
        rows = read_csv(path)
    assert len(rows) == 6
    assert tuple(rows[0].keys()) == TRAJECTORY_HEADER
    assert rows[0]["layer"] == "0" and rows[0]["beta"] == "nan"
    assert abs(float(rows[0]["approx_ratio"]) - 0.75) < 1e-14
    assert rows[1]["beta"] == "0"


def run_all_tests():
    """Führt alle Tests aus"""
    print("🚀 Starte Schedule-Tests...\n")
    tests = [
        test_falqon_first_beta_is_zero,
        test_falqon_feedback_law,
        test_falqon_energy_descends,
        test_falqon_beats_linear_schedule_at_equal_layers,
        test_unweighted_n10_curves_match_snapshot,
        test_falqon_and_replay_share_layer_kernel,
        test_linear_schedule_endpoints,
        test_linear_schedule_matches_dense_product,
        test_replay_reproduces_falqon,
        test_replay_zero_curve_keeps_energy,
        test_replay_without_feedback,
        test_unweighted_baseline,
        test_baseline_closer_for_near_unit_weights,
        test_curve_text_roundtrip,
        test_curve_validation,
        test_trajectory_csv,
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
