"""Frozen networks as Grover phase oracles: a sampler biased toward positive inputs."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circuitry import NetworkTopology, ParameterTable, compile_network
from .errors import ContractError
from .statevector import Circuit, adjoint, h, marginal_distribution, mcz, simulate, x, z


def build_oracle(net: Circuit, output_qubit: int) -> Circuit:
    """U_net, then Z on the marked output, then U_net^dagger."""
    if not 0 <= output_qubit < net.n_qubits:
        raise ContractError(f"output qubit {output_qubit} outside a {net.n_qubits}-qubit net")
    return Circuit(net.n_qubits, net.gates + [z(output_qubit)] + adjoint(net).gates)


def diffusion(input_qubits: Sequence[int], n_qubits: int | None = None) -> Circuit:
    """Reflection about the uniform superposition of ``input_qubits`` (up to global phase)."""
    qs = list(input_qubits)
    if not qs:
        raise ContractError("diffusion needs at least one qubit")
    n = n_qubits if n_qubits is not None else max(qs) + 1
    gates = [h(q) for q in qs] + [x(q) for q in qs] + [mcz(qs)] + [x(q) for q in qs] + [h(q) for q in qs]
    return Circuit(n, gates)


def truth_table_oracle(marked: Sequence[Sequence[int]], input_qubits: Sequence[int],
                       n_qubits: int | None = None) -> Circuit:
    """Phase oracle flipping the sign of each listed input pattern (bit j on input_qubits[j])."""
    qs = list(input_qubits)
    if not qs:
        raise ContractError("oracle needs at least one qubit")
    n = n_qubits if n_qubits is not None else max(qs) + 1
    gates = []
    for pat in {tuple(int(b) for b in p) for p in marked}:
        if len(pat) != len(qs):
            raise ContractError(f"pattern {pat} does not match {len(qs)} input qubits")
        flips = [x(q) for q, b in zip(qs, pat) if b == 0]
        gates += flips + [mcz(qs)] + flips
    return Circuit(n, gates)


def grover_circuit(oracle: Circuit, input_qubits: Sequence[int], iterations: int = 1) -> Circuit:
    """H on the inputs, then ``iterations`` rounds of oracle + diffusion."""
    if iterations < 0:
        raise ContractError("iteration count must be >= 0")
    ins = list(input_qubits)
    diff = diffusion(ins, oracle.n_qubits)
    gates = [h(q) for q in ins]
    for _ in range(iterations):
        gates += oracle.gates + diff.gates
    return Circuit(oracle.n_qubits, gates)


def optimal_iterations(marked: int, total: int) -> int:
    """Round count maximising success for a deterministic oracle with ``marked`` of ``total``."""
    if not 0 < marked <= total:
        raise ContractError("need 0 < marked <= total")
    theta = math.asin(math.sqrt(marked / total))
    return max(0, round(math.pi / (4 * theta) - 0.5))


def success_probability(marked: int, total: int, iterations: int) -> float:
    theta = math.asin(math.sqrt(marked / total))
    return math.sin((2 * iterations + 1) * theta) ** 2


@dataclass
class GenerativeCircuit:
    input_qubits: list[int]
    network: Circuit
    marked_qubit: int
    iterations: int
    circuit: Circuit


def compose(topo: NetworkTopology, params: ParameterTable, iterations: int = 1,
            marked_output: int = 0) -> GenerativeCircuit:
    """Generative circuit with the trained network as oracle."""
    if not 0 <= marked_output < len(topo.outputs):
        raise ContractError(f"network has {len(topo.outputs)} outputs")
    net = compile_network(topo, params)
    marked = topo.output_qubits[marked_output]
    ins = topo.input_qubits
    circ = grover_circuit(build_oracle(net, marked), ins, iterations)
    return GenerativeCircuit(ins, net, marked, iterations, circ)


@dataclass
class GenerativeResult:
    counts: np.ndarray
    probabilities: np.ndarray
    width: int

    def pattern(self, index: int) -> str:
        """Bitstring with input 0 first."""
        return "".join(str((index >> j) & 1) for j in range(self.width))

    def mass(self, patterns: Sequence[Sequence[int]]) -> float:
        idx = [sum(int(b) << j for j, b in enumerate(p)) for p in patterns]
        return float(self.probabilities[idx].sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pattern", "count", "probability"])
        for i, (c, p) in enumerate(zip(self.counts, self.probabilities)):
            w.writerow([self.pattern(i), int(c), repr(float(p))])
        return buf.getvalue()


def generative_sample(topo: NetworkTopology, params: ParameterTable, iterations: int = 1,
                      shots: int = 4096, rng: np.random.Generator | None = None,
                      marked_output: int = 0, max_qubits: int | None = None) -> GenerativeResult:
    """Simulate the generative circuit; exact input marginals plus ``shots`` sampled counts."""
    gen = compose(topo, params, iterations, marked_output)
    state = simulate(gen.circuit, max_qubits)
    probs = marginal_distribution(state, gen.input_qubits)
    rng = rng if rng is not None else np.random.default_rng(0)
    counts = rng.multinomial(shots, np.clip(probs, 0, None) / probs.sum()) if shots else \
        np.zeros_like(probs, dtype=int)
    return GenerativeResult(counts, probs, len(gen.input_qubits))
