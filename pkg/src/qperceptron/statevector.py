"""Dense statevector simulator for the RX / CRX / H / X / Z / MCZ gate set.

Qubit 0 is the least significant bit of the basis-state index. Gates act in
place on strided views of the amplitude array; no gate matrix is ever built
at register size.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, ResourceError

MAX_QUBITS = int(os.environ.get("QPERCEPTRON_MAX_QUBITS", "24"))

GATE_KINDS = ("RX", "CRX", "H", "X", "Z", "MCZ")
_FOUR_PI = 4.0 * math.pi
_INV_SQRT2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class Gate:
    kind: str
    target: int
    controls: tuple[int, ...] = ()
    theta: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ContractError(f"unknown gate kind {self.kind!r}")
        controls = tuple(int(c) for c in self.controls)
        object.__setattr__(self, "controls", controls)
        if self.kind == "CRX" and len(controls) != 1:
            raise ContractError("CRX takes exactly one control")
        if self.kind not in ("CRX", "MCZ") and controls:
            raise ContractError(f"{self.kind} takes no controls")
        if self.target in controls:
            raise ContractError("target qubit listed among controls")
        if len(set(controls)) != len(controls):
            raise ContractError("duplicate control qubit")
        if self.kind in ("RX", "CRX"):
            if not math.isfinite(self.theta):
                raise ContractError("rotation angle must be finite")
            object.__setattr__(self, "theta", float(self.theta) % _FOUR_PI)
        elif self.theta != 0.0:
            raise ContractError(f"{self.kind} takes no angle")

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.controls + (self.target,)

    def inverse(self) -> "Gate":
        if self.kind in ("RX", "CRX"):
            return Gate(self.kind, self.target, self.controls, -self.theta)
        return self


def rx(target: int, theta: float) -> Gate:
    return Gate("RX", target, (), theta)


def crx(control: int, target: int, theta: float) -> Gate:
    return Gate("CRX", target, (control,), theta)


def h(target: int) -> Gate:
    return Gate("H", target)


def x(target: int) -> Gate:
    return Gate("X", target)


def z(target: int) -> Gate:
    return Gate("Z", target)


def mcz(qubits: Sequence[int]) -> Gate:
    """Phase flip on basis states where every listed qubit is 1."""
    qubits = list(qubits)
    if not qubits:
        raise ContractError("MCZ needs at least one qubit")
    return Gate("MCZ", qubits[-1], tuple(qubits[:-1]))


@dataclass
class Circuit:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)

    def __post_init__(self):
        self.gates = list(self.gates)
        for gate in self.gates:
            self._check(gate)

    def _check(self, gate: Gate) -> None:
        for q in gate.qubits:
            if not 0 <= q < self.n_qubits:
                raise ContractError(
                    f"gate {gate.kind} touches qubit {q}, circuit has {self.n_qubits}"
                )

    def append(self, gate: Gate) -> "Circuit":
        self._check(gate)
        self.gates.append(gate)
        return self

    def extend(self, gates: Iterable[Gate]) -> "Circuit":
        for gate in gates:
            self.append(gate)
        return self

    def __add__(self, other: "Circuit") -> "Circuit":
        if other.n_qubits != self.n_qubits:
            raise ContractError("cannot concatenate circuits of different width")
        return Circuit(self.n_qubits, self.gates + other.gates)

    def __len__(self) -> int:
        return len(self.gates)

    def count(self, kind: str) -> int:
        return sum(1 for g in self.gates if g.kind == kind)


def adjoint(circuit: Circuit) -> Circuit:
    """Reverse gate order and invert each gate."""
    return Circuit(circuit.n_qubits, [g.inverse() for g in reversed(circuit.gates)])


@dataclass
class State:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ContractError("amplitude vector length must be 2**n_qubits")

    def copy(self) -> "State":
        return State(self.n_qubits, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def _tensor(self) -> np.ndarray:
        # axis k of the tensor view is qubit n-1-k
        return self.amplitudes.reshape((2,) * self.n_qubits)

    def _axis(self, qubit: int) -> int:
        return self.n_qubits - 1 - qubit


def _check_limit(n_qubits: int, max_qubits: int | None) -> None:
    limit = MAX_QUBITS if max_qubits is None else max_qubits
    if n_qubits < 1:
        raise ContractError("need at least one qubit")
    if n_qubits > limit:
        raise ResourceError(
            f"{n_qubits} qubits exceeds the statevector limit of {limit} "
            "(set QPERCEPTRON_MAX_QUBITS or use the sampler backend)"
        )


def init_state(n_qubits: int, max_qubits: int | None = None) -> State:
    _check_limit(n_qubits, max_qubits)
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return State(n_qubits, amps)


def random_state(n_qubits: int, rng: np.random.Generator) -> State:
    amps = rng.normal(size=1 << n_qubits) + 1j * rng.normal(size=1 << n_qubits)
    amps /= np.linalg.norm(amps)
    return State(n_qubits, amps.astype(np.complex128))


def _pair_views(state: State, gate: Gate):
    """Views of the amplitudes with the target bit 0 / 1 and all controls 1."""
    t = state._tensor()
    idx0: list = [slice(None)] * state.n_qubits
    for c in gate.controls:
        idx0[state._axis(c)] = 1
    idx1 = list(idx0)
    idx0[state._axis(gate.target)] = 0
    idx1[state._axis(gate.target)] = 1
    return t, tuple(idx0), tuple(idx1)


def apply_gate(state: State, gate: Gate) -> State:
    """Apply ``gate`` to ``state`` in place and return it."""
    for q in gate.qubits:
        if not 0 <= q < state.n_qubits:
            raise ContractError(f"qubit {q} out of range for {state.n_qubits}-qubit state")
    kind = gate.kind
    if kind == "MCZ":
        t = state._tensor()
        idx: list = [slice(None)] * state.n_qubits
        for q in gate.qubits:
            idx[state._axis(q)] = 1
        t[tuple(idx)] *= -1.0
        return state
    t, i0, i1 = _pair_views(state, gate)
    if kind == "Z":
        t[i1] *= -1.0
    elif kind == "X":
        a0 = t[i0].copy()
        t[i0] = t[i1]
        t[i1] = a0
    elif kind == "H":
        a0 = t[i0].copy()
        a1 = t[i1].copy()
        t[i0] = (a0 + a1) * _INV_SQRT2
        t[i1] = (a0 - a1) * _INV_SQRT2
    else:  # RX, CRX
        c = math.cos(gate.theta / 2.0)
        s = math.sin(gate.theta / 2.0)
        a0 = t[i0].copy()
        a1 = t[i1].copy()
        t[i0] = c * a0 - 1j * s * a1
        t[i1] = -1j * s * a0 + c * a1
    return state


def apply_circuit(state: State, circuit: Circuit) -> State:
    if circuit.n_qubits != state.n_qubits:
        raise ContractError(
            f"circuit has {circuit.n_qubits} qubits, state has {state.n_qubits}"
        )
    for gate in circuit.gates:
        apply_gate(state, gate)
    return state


def simulate(circuit: Circuit, max_qubits: int | None = None) -> State:
    """Run ``circuit`` from |0...0>."""
    return apply_circuit(init_state(circuit.n_qubits, max_qubits), circuit)


def marginal_distribution(state: State, qubits: Sequence[int]) -> np.ndarray:
    """Outcome probabilities over ``qubits``; ``qubits[i]`` is bit i of the outcome index."""
    qubits = list(qubits)
    if len(set(qubits)) != len(qubits):
        raise ContractError("duplicate qubit index in marginal request")
    for q in qubits:
        if not 0 <= q < state.n_qubits:
            raise ContractError(f"qubit {q} out of range")
    probs = state.probabilities().reshape((2,) * state.n_qubits)
    keep = [state._axis(q) for q in qubits]
    drop = tuple(a for a in range(state.n_qubits) if a not in keep)
    marg = probs.sum(axis=drop) if drop else probs
    # remaining axes are in ascending axis order; reorder so that the most
    # significant axis is qubits[-1]
    remaining = sorted(keep)
    order = [remaining.index(keep[i]) for i in reversed(range(len(qubits)))]
    marg = np.transpose(marg, order) if len(order) > 1 else marg
    return np.ascontiguousarray(marg).reshape(-1)


def sample(
    state: State, qubits: Sequence[int], shots: int, rng: np.random.Generator
) -> np.ndarray:
    """Counts per outcome index, drawn i.i.d. from the marginal over ``qubits``."""
    if shots < 1:
        raise ContractError("shots must be >= 1")
    p = marginal_distribution(state, qubits)
    p = np.clip(p, 0.0, None)
    return rng.multinomial(shots, p / p.sum())


def bits_to_index(bits: Sequence[int]) -> int:
    """Outcome index with ``bits[0]`` as the least significant bit."""
    return sum(int(b) << i for i, b in enumerate(bits))


def index_to_bits(index: int, width: int) -> list[int]:
    return [(index >> i) & 1 for i in range(width)]
