#!/usr/bin/env python3
"""
Test-Skript für den Zustandsvektor-Simulator
Layer, Erwartungswerte und Kommutator gegen dichte Matrixexponentiale.
"""

import os
import sys
import unittest

import numpy as np
from scipy.linalg import expm

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from errors import InvalidArgumentError, ResourceLimitError
from graph_instances import GraphInstance, assign_weights, enumerate_cubic_topologies
from hamiltonian import build_problem_diagonal, dense_driver_matrix
from simulator import (
    LayerParams,
    StateVector,
    apply_driver_rotations,
    apply_layer,
    apply_problem_phase,
    commutator_expectation,
    expect_problem,
    init_minus_state,
    success_probability,
)

TRIANGLE = GraphInstance(3, ((0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)))


def _random_state(n: int, seed: int) -> StateVector:
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return StateVector(n, amps / np.linalg.norm(amps))


def test_minus_state():
    print("🧪 Teste Anfangszustand |->^n...")
    state = init_minus_state(3)
    expected = np.array([1, -1, -1, 1, -1, 1, 1, -1]) / np.sqrt(8.0)
    assert np.allclose(state.amps, expected, rtol=0, atol=1e-15)
    assert abs(state.norm_squared() - 1.0) < 1e-15
    # Eigenzustand von H_d zum Eigenwert -n
    assert np.allclose(dense_driver_matrix(3) @ state.amps, -3.0 * state.amps, atol=1e-14)
    print("✅ Vorzeichen nach Parität, normiert")


def test_minus_state_limits():
    for bad in (0, 25):
        try:
            init_minus_state(bad)
            assert False, f"n={bad} hätte abgelehnt werden müssen"
        except ResourceLimitError:
            pass


def test_small_minus_states_and_basis_states():
    assert np.allclose(init_minus_state(1).amps, [1 / np.sqrt(2.0), -1 / np.sqrt(2.0)], rtol=0, atol=1e-15)
    assert np.allclose(init_minus_state(2).amps, [0.5, -0.5, -0.5, 0.5], rtol=0, atol=1e-15)
    flipped = StateVector(1, np.array([1.0, 0.0]))
    apply_driver_rotations(flipped, dt=np.pi / 2, beta=1.0)
    assert np.allclose(flipped.amps, [0.0, -1j], rtol=0, atol=1e-15)
    problem = build_problem_diagonal(TRIANGLE)
    ground = np.zeros(8)
    ground[problem.ground_set[0]] = 1.0
    basis = StateVector(3, ground)
    assert expect_problem(basis, problem.diag) == problem.e_min
    assert success_probability(basis, problem.ground_set) == 1.0
    assert commutator_expectation(basis, TRIANGLE, problem.diag) == 0.0


def test_single_qubit_rotation():
    """n = 1, |0> -> cos|0> - i sin|1>"""
    state = StateVector(1, np.array([1.0, 0.0]))
    apply_driver_rotations(state, dt=0.1, beta=2.5)
    angle = 0.25
    assert np.allclose(state.amps, [np.cos(angle), -1j * np.sin(angle)], rtol=0, atol=1e-15)


def test_layer_matches_dense_exponentials():
    print("🧪 Teste Layer gegen expm für n = 4...")
    instance = assign_weights(enumerate_cubic_topologies(4)[0], seed=17)
    diag = build_problem_diagonal(instance).diag
    driver = dense_driver_matrix(4)
    for dt, beta, b in ((0.01, 0.3, 1.0), (0.2, -1.4, 0.5), (0.05, 0.0, 1.0)):
        state = _random_state(4, seed=int(100 * dt) + 1)
        reference = expm(-1j * dt * beta * driver) @ (expm(-1j * dt * b * np.diag(diag)) @ state.amps)
        apply_layer(state, diag, LayerParams(dt, beta, b))
        assert np.allclose(state.amps, reference, rtol=0, atol=1e-12)
    print("✅ Abweichung < 1e-12")


def test_problem_phase_with_zero_coefficient():
    state = _random_state(3, seed=4)
    before = state.amps.copy()
    apply_problem_phase(state, build_problem_diagonal(TRIANGLE).diag, dt=0.1, b=0.0)
    assert np.array_equal(state.amps, before)


def test_norm_is_preserved():
    instance = assign_weights(enumerate_cubic_topologies(6)[0], seed=5)
    diag = build_problem_diagonal(instance).diag
    state = init_minus_state(6)
    for layer in range(200):
        apply_layer(state, diag, LayerParams(0.05, np.sin(0.1 * layer)))
    assert abs(state.norm_squared() - 1.0) < 1e-12


def test_triangle_uniform_state_metrics():
    print("🧪 Teste Dreieck im Anfangszustand...")
    problem = build_problem_diagonal(TRIANGLE)
    state = init_minus_state(3)
    energy = expect_problem(state, problem.diag)
    assert abs(energy - (-1.5)) < 1e-14
    assert abs(energy / problem.e_min - 0.75) < 1e-14
    assert abs(success_probability(state, problem.ground_set) - 0.75) < 1e-14
    print("✅ r_A = 0.75, phi = 0.75")


def test_commutator_matches_dense():
    print("🧪 Teste Kommutator-Erwartungswert...")
    instance = assign_weights(enumerate_cubic_topologies(4)[0], seed=8)
    diag = build_problem_diagonal(instance).diag
    driver = dense_driver_matrix(4)
    problem = np.diag(diag)
    for seed in range(5):
        state = _random_state(4, seed)
        commutator = driver @ problem - problem @ driver
        expected = (1j * np.vdot(state.amps, commutator @ state.amps)).real
        assert abs(commutator_expectation(state, instance, diag) - expected) < 1e-12
    print("✅ A = i<[H_d, H_p]>")


def test_commutator_vanishes_on_minus_state():
    instance = assign_weights(enumerate_cubic_topologies(6)[1], seed=2)
    diag = build_problem_diagonal(instance).diag
    assert abs(commutator_expectation(init_minus_state(6), instance, diag)) < 1e-14


def test_non_contiguous_amplitudes_are_rotated():
    print("🧪 Teste Zustand aus einer Sicht mit Schrittweite...")
    backing = np.zeros(16, dtype=np.complex128)
    view = backing[::2]
    view[0] = 1.0
    state = StateVector(3, view)
    assert state.amps.flags["C_CONTIGUOUS"]
    reference = expm(-1j * 0.3 * 0.7 * dense_driver_matrix(3)) @ view
    apply_driver_rotations(state, dt=0.3, beta=0.7)
    assert np.allclose(state.amps, reference, rtol=0, atol=1e-14)
    assert abs(state.amps[0] - 1.0) > 1e-3
    assert abs(state.norm_squared() - 1.0) < 1e-14
    print("✅ Rotation wirkt auf die Amplituden")


def _permute_basis(amps: np.ndarray, perm, n: int) -> np.ndarray:
    """Bit perm[v] des neuen Index = Bit v des alten Index"""
    x = np.arange(1 << n, dtype=np.int64)
    target = np.zeros_like(x)
    for v in range(n):
        target |= ((x >> v) & 1) << perm[v]
    out = np.zeros_like(amps)
    out[target] = amps
    return out


def test_observables_follow_relabeling():
    print("🧪 Teste Kovarianz der Observablen unter Umnummerierung...")
    instance = assign_weights(enumerate_cubic_topologies(6)[1], seed=21)
    problem = build_problem_diagonal(instance)
    state = init_minus_state(6)
    for beta in (0.0, 0.4, -0.2, 0.9):
        apply_layer(state, problem.diag, LayerParams(0.1, beta))
    rng = np.random.default_rng(3)
    for _ in range(3):
        perm = [int(v) for v in rng.permutation(6)]
        relabeled = instance.relabel(perm)
        relabeled_problem = build_problem_diagonal(relabeled)
        moved = StateVector(6, _permute_basis(state.amps, perm, 6))
        assert np.allclose(_permute_basis(problem.diag, perm, 6), relabeled_problem.diag, rtol=0, atol=1e-14)
        assert abs(expect_problem(moved, relabeled_problem.diag) - expect_problem(state, problem.diag)) < 1e-12
        assert abs(success_probability(moved, relabeled_problem.ground_set)
                   - success_probability(state, problem.ground_set)) < 1e-12
        assert abs(commutator_expectation(moved, relabeled, relabeled_problem.diag)
                   - commutator_expectation(state, instance, problem.diag)) < 1e-12
    print("✅ <H_p>, phi und A invariant")


def test_dimension_checks():
    print("🧪 Teste Dimensionsprüfungen...")
    diag = build_problem_diagonal(TRIANGLE).diag
    state = init_minus_state(4)
    for call in (
        lambda: expect_problem(state, diag),
        lambda: apply_problem_phase(state, diag, 0.1),
        lambda: commutator_expectation(state, TRIANGLE, np.zeros(16)),
        lambda: success_probability(state, np.array([16])),
        lambda: StateVector(2, np.zeros(3)),
        lambda: LayerParams(0.0, 1.0),
    ):
        try:
            call()
            assert False, "Aufruf hätte scheitern müssen"
        except InvalidArgumentError:
            pass
    print("✅ Fehlerhafte Dimensionen abgelehnt")


def run_all_tests():
    """Führt alle Tests aus"""
    print("🚀 Starte Simulator-Tests...\n")
    tests = [
        test_minus_state,
        test_minus_state_limits,
        test_small_minus_states_and_basis_states,
        test_single_qubit_rotation,
        test_layer_matches_dense_exponentials,
        test_problem_phase_with_zero_coefficient,
        test_norm_is_preserved,
        test_triangle_uniform_state_metrics,
        test_commutator_matches_dense,
        test_commutator_vanishes_on_minus_state,
        test_non_contiguous_amplitudes_are_rotated,
        test_observables_follow_relabeling,
        test_dimension_checks,
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
