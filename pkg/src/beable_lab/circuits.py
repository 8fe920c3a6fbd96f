"""Pairwise-partition process driven by a quantum circuit.

Configurations are computational basis states; qubit 0 is the least
significant bit of the configuration label.  Each gate is one time step.
A single-qubit gate on qubit k couples only labels that differ in bit k; a
CNOT couples x and x ^ (1 << target) when the control bit of x is set.
On every such pair the minimal two-state process is applied, singlets
never move.

Circuit text format, one statement per line, ``#`` starts a comment::

    qubits 3
    g H q 0
    g u 0 0 1 0 1 0 0 0 q 2      # 2x2 matrix entries a b c d as re/im pairs
    cnot 0 1
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import streams
from .discrete import DiscreteTrajectory, TransitionMatrix
from .errors import BeableLabError
from .hilbert import STRUCTURE_TOL, Decomposition, StateVector, _as_state

log = logging.getLogger(__name__)

_S2 = 1 / np.sqrt(2)
NAMED_GATES = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "H": np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "T": np.array([[1, 0], [0, np.exp(1j * np.pi / 4)]], dtype=complex),
}


class CircuitFormatError(BeableLabError, ValueError):
    pass


class PairwiseViolation(BeableLabError, RuntimeError):
    def __init__(self, message: str, gate_index: int, magnitude: float):
        super().__init__(message)
        self.gate_index = gate_index
        self.magnitude = magnitude


@dataclass(frozen=True)
class Gate:
    kind: str  # "single" or "cnot"
    qubits: tuple[int, ...]
    matrix: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind == "single":
            m = np.asarray(self.matrix, dtype=complex)
            if m.shape != (2, 2) or np.max(np.abs(m @ m.conj().T - np.eye(2))) > STRUCTURE_TOL:
                raise ValueError("single-qubit gate needs a 2x2 unitary")
            if len(self.qubits) != 1:
                raise ValueError("single-qubit gate acts on exactly one qubit")
            m.setflags(write=False)
            object.__setattr__(self, "matrix", m)
        elif self.kind == "cnot":
            if len(self.qubits) != 2 or self.qubits[0] == self.qubits[1]:
                raise ValueError("CNOT needs distinct control and target")
        else:
            raise ValueError(f"unsupported gate kind {self.kind!r}")
        if any(q < 0 for q in self.qubits):
            raise ValueError("qubit indices must be nonnegative")

    @classmethod
    def single(cls, name_or_matrix, qubit: int) -> "Gate":
        if isinstance(name_or_matrix, str):
            return cls("single", (qubit,), NAMED_GATES[name_or_matrix.upper()], name_or_matrix.upper())
        return cls("single", (qubit,), np.asarray(name_or_matrix, dtype=complex), "u")

    @classmethod
    def cnot(cls, control: int, target: int) -> "Gate":
        return cls("cnot", (control, target), name="cnot")


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple[Gate, ...]

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("need at least one qubit")
        object.__setattr__(self, "gates", tuple(self.gates))
        for i, g in enumerate(self.gates):
            if max(g.qubits) >= self.n_qubits:
                raise ValueError(f"gate {i} acts on qubit {max(g.qubits)} of a {self.n_qubits}-qubit circuit")

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    def __len__(self):
        return len(self.gates)


@dataclass(frozen=True)
class PairPartition:
    subsets: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        subsets = tuple(tuple(sorted(int(x) for x in s)) for s in self.subsets)
        if any(len(s) not in (1, 2) for s in subsets):
            raise ValueError("subsets must be pairs or singlets")
        flat = sorted(x for s in subsets for x in s)
        if flat != list(range(len(flat))):
            raise ValueError("subsets must be disjoint and cover all configurations")
        object.__setattr__(self, "subsets", tuple(sorted(subsets)))

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [s for s in self.subsets if len(s) == 2]

    @property
    def singlets(self) -> list[int]:
        return [s[0] for s in self.subsets if len(s) == 1]

    def partner(self) -> np.ndarray:
        """partner[x] is the other member of x's pair, or x itself for singlets."""
        n = sum(len(s) for s in self.subsets)
        p = np.arange(n)
        for a, b in self.pairs:
            p[a], p[b] = b, a
        return p


def parse_circuit(text: str) -> Circuit:
    n_qubits = None
    gates = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "qubits":
                n_qubits = int(tok[1])
            elif tok[0] == "g":
                if tok[-2] != "q":
                    raise CircuitFormatError(f"line {lineno}: expected 'q <k>' at the end")
                qubit = int(tok[-1])
                parts = tok[1:-2]
                if len(parts) == 1:
                    if parts[0].upper() not in NAMED_GATES:
                        raise CircuitFormatError(f"line {lineno}: unknown gate {parts[0]!r}")
                    gates.append(Gate.single(parts[0], qubit))
                elif parts[0] == "u" and len(parts) == 9:
                    v = [float(x) for x in parts[1:]]
                    m = np.array([complex(v[0], v[1]), complex(v[2], v[3]), complex(v[4], v[5]), complex(v[6], v[7])])
                    gates.append(Gate.single(m.reshape(2, 2), qubit))
                else:
                    raise CircuitFormatError(f"line {lineno}: malformed gate {line!r}")
            elif tok[0] == "cnot":
                if len(tok) != 3:
                    raise CircuitFormatError(f"line {lineno}: cnot takes control and target")
                gates.append(Gate.cnot(int(tok[1]), int(tok[2])))
            else:
                raise CircuitFormatError(f"line {lineno}: unknown statement {tok[0]!r}")
        except CircuitFormatError:
            raise
        except (ValueError, IndexError) as exc:
            raise CircuitFormatError(f"line {lineno}: {exc}") from exc
    if n_qubits is None:
        raise CircuitFormatError("missing 'qubits N' line")
    try:
        return Circuit(n_qubits, tuple(gates))
    except ValueError as exc:
        raise CircuitFormatError(str(exc)) from exc


def load_circuit(path) -> Circuit:
    return parse_circuit(Path(path).read_text())


def format_circuit(circuit: Circuit) -> str:
    lines = [f"qubits {circuit.n_qubits}"]
    for g in circuit.gates:
        if g.kind == "cnot":
            lines.append(f"cnot {g.qubits[0]} {g.qubits[1]}")
        elif g.name in NAMED_GATES:
            lines.append(f"g {g.name} q {g.qubits[0]}")
        else:
            v = " ".join(f"{float(x.real)!r} {float(x.imag)!r}" for x in g.matrix.ravel())
            lines.append(f"g u {v} q {g.qubits[0]}")
    return "\n".join(lines) + "\n"


def gate_unitary(gate: Gate, n_qubits: int) -> np.ndarray:
    d = 1 << n_qubits
    if gate.kind == "single":
        k = gate.qubits[0]
        return np.kron(np.eye(1 << (n_qubits - 1 - k)), np.kron(gate.matrix, np.eye(1 << k)))
    c, t = gate.qubits
    x = np.arange(d)
    y = np.where((x >> c) & 1, x ^ (1 << t), x)
    U = np.zeros((d, d), dtype=complex)
    U[y, x] = 1.0
    return U


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    U = np.eye(circuit.dim, dtype=complex)
    for g in circuit.gates:
        U = gate_unitary(g, circuit.n_qubits) @ U
    return U


def gate_partition(gate: Gate, n_qubits: int) -> PairPartition:
    d = 1 << n_qubits
    x = np.arange(d)
    if gate.kind == "single":
        bit = 1 << gate.qubits[0]
        return PairPartition(tuple((int(a), int(a | bit)) for a in x[(x & bit) == 0]))
    c, t = gate.qubits
    cbit, tbit = 1 << c, 1 << t
    pairs = [(int(a), int(a | tbit)) for a in x[((x & cbit) != 0) & ((x & tbit) == 0)]]
    singles = [(int(a),) for a in x[(x & cbit) == 0]]
    return PairPartition(tuple(pairs + singles))


def verify_pairwise(U, partition: PairPartition, dec: Decomposition | None = None, tol: float = 1e-12) -> tuple[bool, float]:
    """Whether ||P(q) U P(q')|| <= tol for all q, q' in different subsets; also the largest such norm."""
    Um = np.asarray(U, dtype=complex)
    dec = Decomposition.singletons(Um.shape[0]) if dec is None else dec
    dec.check_dim(Um.shape[0])
    n = dec.n_configs
    subset_of = np.empty(n, dtype=int)
    for i, s in enumerate(partition.subsets):
        subset_of[list(s)] = i
    worst = 0.0
    for q in range(n):
        for r in range(n):
            if subset_of[q] == subset_of[r]:
                continue
            block = Um[np.ix_(dec.blocks[q], dec.blocks[r])]
            worst = max(worst, float(np.linalg.norm(block, 2)))
    return worst <= tol, worst


def pairwise_transition(psi, U, partition: PairPartition, weight_eps: float = 1e-12) -> TransitionMatrix:
    """Minimal two-state transition probabilities on every pair; singlets stay."""
    a = _as_state(psi).amplitudes
    Um = np.asarray(U, dtype=complex)
    w = np.abs(a) ** 2
    w_next = np.abs(Um @ a) ** 2
    d = a.size
    P = np.eye(d)
    flagged = []
    for x, y in partition.pairs:
        for src, dst in ((x, y), (y, x)):
            if w[src] < weight_eps:
                flagged.append(src)
                continue
            p = max(w[src] - w_next[src], 0.0) / w[src]
            P[dst, src] = p
            P[src, src] = 1.0 - p
    return TransitionMatrix(P, flagged=tuple(flagged))


@dataclass
class CircuitEnsemble:
    configs: np.ndarray  # (n_runs, n_gates + 1)
    born: np.ndarray  # (n_gates + 1, 2**n)
    final_state: StateVector
    zero_weight_events: int = 0

    def counts(self) -> np.ndarray:
        d = self.born.shape[1]
        return np.stack([np.bincount(self.configs[:, j], minlength=d) for j in range(self.configs.shape[1])])


def run_circuit_ensemble(
    circuit: Circuit,
    psi0,
    n_runs: int,
    seed: int,
    q0=None,
    run_offset: int = 0,
    pairwise_tol: float = 1e-12,
) -> CircuitEnsemble:
    """Advance ``n_runs`` configurations through the circuit alongside the state.

    Run i uses stream ``run_offset + i``: draw 0 for a Born-distributed
    start, draw 1 + g for gate g.
    """
    psi = _as_state(psi0)
    if psi.dim != circuit.dim:
        raise ValueError(f"state dimension {psi.dim} does not match {circuit.n_qubits} qubits")
    runs = np.arange(n_runs) + run_offset
    a = psi.amplitudes
    born = [np.abs(a) ** 2]
    if q0 is None or q0 == "born":
        q = streams.categorical(streams.uniforms(seed, runs, 0), np.broadcast_to(born[0], (n_runs, a.size)))
    else:
        q = np.full(n_runs, int(q0))
    out = np.empty((n_runs, len(circuit) + 1), dtype=int)
    out[:, 0] = q
    zero = 0
    for g_idx, gate in enumerate(circuit.gates):
        U = gate_unitary(gate, circuit.n_qubits)
        part = gate_partition(gate, circuit.n_qubits)
        ok, mag = verify_pairwise(U, part, tol=pairwise_tol)
        if not ok:
            raise PairwiseViolation(f"gate {g_idx} couples configurations across its partition (|PUP'| = {mag:.3e})", g_idx, mag)
        T = pairwise_transition(StateVector(a), U, part)
        partner = part.partner()
        jump = T.probs[partner[q], q]
        jump = np.where(partner[q] == q, 0.0, jump)
        zero += int(np.isin(q, T.flagged).sum())
        u = streams.uniforms(seed, runs, 1 + g_idx)
        q = np.where(u < jump, partner[q], q)
        out[:, g_idx + 1] = q
        a = U @ a
        born.append(np.abs(a) ** 2)
    return CircuitEnsemble(out, np.array(born), StateVector(a), zero)


def run_circuit_trajectory(circuit: Circuit, psi0, q0=None, seed: int = 0, run_index: int = 0) -> tuple[DiscreteTrajectory, StateVector]:
    ens = run_circuit_ensemble(circuit, psi0, 1, seed, q0=q0, run_offset=run_index)
    return DiscreteTrajectory([int(x) for x in ens.configs[0]], tau=1.0), ens.final_state


def random_circuit(n_qubits: int, n_gates: int, seed, names=("H", "X", "T", "CNOT")) -> Circuit:
    rng = np.random.default_rng(seed)
    pool = [n for n in names if n != "CNOT" or n_qubits > 1]
    gates = []
    for _ in range(n_gates):
        name = pool[rng.integers(len(pool))]
        if name == "CNOT":
            c, t = rng.choice(n_qubits, size=2, replace=False)
            gates.append(Gate.cnot(int(c), int(t)))
        else:
            gates.append(Gate.single(name, int(rng.integers(n_qubits))))
    return Circuit(n_qubits, tuple(gates))
