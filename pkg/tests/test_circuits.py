import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beable_lab.circuits import (
    NAMED_GATES,
    Circuit,
    CircuitFormatError,
    Gate,
    PairPartition,
    PairwiseViolation,
    circuit_unitary,
    format_circuit,
    gate_partition,
    gate_unitary,
    load_circuit,
    pairwise_transition,
    parse_circuit,
    random_circuit,
    run_circuit_ensemble,
    run_circuit_trajectory,
    verify_pairwise,
)
from beable_lab.currents import candidate_current, check_conditions, required_change
from beable_lab.hilbert import Decomposition, StateVector, haar_random_unitary, random_state

seeds = st.integers(0, 2**32 - 1)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]])


def _apply_gate_bitwise(gate, n, amps):
    """Statevector update written per basis label, qubit 0 = least significant bit."""
    out = np.zeros_like(amps)
    for x in range(1 << n):
        if gate.kind == "cnot":
            c, t = gate.qubits
            y = x ^ (1 << t) if (x >> c) & 1 else x
            out[y] += amps[x]
        else:
            k = gate.qubits[0]
            b = (x >> k) & 1
            for b2 in (0, 1):
                out[(x & ~(1 << k)) | (b2 << k)] += gate.matrix[b2, b] * amps[x]
    return out


def test_partition_x_on_qubit_0():
    assert gate_partition(Gate.single("X", 0), 2).subsets == ((0, 1), (2, 3))


def test_partition_cnot():
    part = gate_partition(Gate.cnot(0, 1), 2)
    assert part.pairs == [(1, 3)] and part.singlets == [0, 2]


def test_partition_hadamard_on_qubit_1():
    assert gate_partition(Gate.single("H", 1), 2).pairs == [(0, 2), (1, 3)]


def test_partition_validation():
    with pytest.raises(ValueError):
        PairPartition(((0, 1, 2),))
    with pytest.raises(ValueError):
        PairPartition(((0, 1), (1, 2)))
    np.testing.assert_array_equal(PairPartition(((0, 2), (1,))).partner(), [2, 1, 0])


def test_gate_validation():
    with pytest.raises(ValueError):
        Gate.single(np.array([[1, 1], [0, 1]]), 0)
    with pytest.raises(ValueError):
        Gate.cnot(1, 1)
    with pytest.raises(ValueError):
        Circuit(2, (Gate.single("X", 2),))


def test_verify_pairwise_examples():
    assert verify_pairwise(gate_unitary(Gate.single("H", 0), 2), gate_partition(Gate.single("H", 0), 2)) == (True, 0.0)
    ok, mag = verify_pairwise(SWAP, gate_partition(Gate.single("X", 0), 2))
    assert not ok and mag == pytest.approx(1.0)
    assert verify_pairwise(np.eye(8), gate_partition(Gate.cnot(2, 0), 3))[0]


@given(n=st.integers(1, 4), seed=seeds)
@settings(max_examples=60, deadline=None)
def test_gate_unitary_matches_bitwise_oracle(n, seed):
    rng = np.random.default_rng(seed)
    if n > 1 and rng.random() < 0.4:
        c, t = (int(x) for x in rng.choice(n, 2, replace=False))
        gate = Gate.cnot(c, t)
    else:
        gate = Gate.single(haar_random_unitary(2, rng).matrix, int(rng.integers(n)))
    psi = random_state(1 << n, rng).amplitudes
    U = gate_unitary(gate, n)
    np.testing.assert_allclose(U @ psi, _apply_gate_bitwise(gate, n, psi), atol=1e-14)
    ok, mag = verify_pairwise(U, gate_partition(gate, n))
    assert ok and mag <= 1e-12


@given(n=st.integers(1, 4), seed=seeds)
@settings(max_examples=60, deadline=None)
def test_pair_current_and_born_map(n, seed):
    rng = np.random.default_rng(seed)
    circ = random_circuit(n, 1, rng)
    gate = circ.gates[0]
    U = gate_unitary(gate, n)
    part = gate_partition(gate, n)
    psi = random_state(1 << n, rng)
    dec = Decomposition.singletons(1 << n)
    J = candidate_current(psi, U, dec).entries
    assert check_conditions(J, psi, U, dec).all_pass
    delta = required_change(psi, U, dec)
    for x, y in part.pairs:
        # two-state current of the pair: gain of y equals flow x -> y
        assert J[y, x] == pytest.approx(delta[y], abs=1e-12)
    T = pairwise_transition(psi, U, part)
    np.testing.assert_allclose(T.apply(np.abs(psi.amplitudes) ** 2), np.abs(U @ psi.amplitudes) ** 2, atol=1e-12)


def test_diagonal_circuit_never_moves():
    circ = parse_circuit("qubits 2\ng Z q 0\ng T q 1\ng S q 0\n")
    ens = run_circuit_ensemble(circ, random_state(4, 3), 2000, seed=1)
    assert np.all(ens.configs == ens.configs[:, :1])


def test_x_gate_jumps_with_certainty():
    circ = parse_circuit("qubits 2\ng X q 0\n")
    for s in range(20):
        traj, final = run_circuit_trajectory(circ, StateVector([1, 0, 0, 0]), q0=0, seed=s)
        assert traj.configs == [0, 1]
    np.testing.assert_allclose(final.amplitudes, [0, 1, 0, 0])


def test_trajectory_equals_ensemble_member():
    circ = random_circuit(3, 8, 5)
    psi = random_state(8, 5)
    ens = run_circuit_ensemble(circ, psi, 40, seed=2)
    traj, _ = run_circuit_trajectory(circ, psi, seed=2, run_index=23)
    assert traj.configs == ens.configs[23].tolist()


def test_ensemble_equivariance_small():
    circ = random_circuit(3, 10, 11)
    psi = random_state(8, 11)
    n = 20_000
    ens = run_circuit_ensemble(circ, psi, n, seed=4)
    emp = ens.counts() / n
    assert np.all(0.5 * np.abs(emp - ens.born).sum(axis=1) <= 0.02)
    np.testing.assert_allclose(ens.final_state.amplitudes, circuit_unitary(circ) @ psi.amplitudes, atol=1e-12)


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        run_circuit_ensemble(parse_circuit("qubits 2\n"), StateVector([1, 0]), 1, 0)


def test_pairwise_violation_reports_gate():
    from beable_lab import circuits

    bad = Circuit(2, (Gate.single("H", 0), Gate.single("X", 1)))
    original = circuits.gate_unitary
    try:
        circuits.gate_unitary = lambda g, n: SWAP if g.qubits == (1,) else original(g, n)
        with pytest.raises(PairwiseViolation) as err:
            run_circuit_ensemble(bad, StateVector([1, 0, 0, 0]), 4, 0)
    finally:
        circuits.gate_unitary = original
    assert err.value.gate_index == 1 and err.value.magnitude == pytest.approx(1.0)


def test_parse_format_round_trip(tmp_path):
    text = """# bell pair then a rotation
qubits 2
g H q 0
cnot 0 1
g u 0.0 0.0 1.0 0.0 1.0 0.0 0.0 0.0 q 1  # an explicit X
"""
    circ = parse_circuit(text)
    assert len(circ) == 3 and circ.gates[1].qubits == (0, 1)
    np.testing.assert_array_equal(circ.gates[2].matrix, NAMED_GATES["X"])
    path = tmp_path / "c.txt"
    path.write_text(format_circuit(circ))
    again = load_circuit(path)
    np.testing.assert_array_equal(circuit_unitary(again), circuit_unitary(circ))


@pytest.mark.parametrize(
    "text",
    ["g X q 0\n", "qubits 2\ng FOO q 0\n", "qubits 2\ncnot 0\n", "qubits 2\nswap 0 1\n", "qubits 1\ng X q 3\n", "qubits 2\ng u 1 0 q 0\n"],
)
def test_parse_errors(text):
    with pytest.raises(CircuitFormatError):
        parse_circuit(text)


def test_random_circuit_single_qubit_has_no_cnot():
    circ = random_circuit(1, 30, 0)
    assert all(g.kind == "single" for g in circ.gates)
