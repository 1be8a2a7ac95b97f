"""Stochastic perceptron math, network topologies and the circuit compiler.

A neuron with bias ``b`` and incoming weights ``w_i`` fires with probability
``sin^2(asin(sqrt(b)) + sum_{i: a_i=1} asin(sqrt(w_i)))``. On a gate-based
device this is one RX for the bias followed by one CRX per incoming edge,
with the source qubit as control. Parameters live in probability space and
are converted to rotation angles only when a circuit is emitted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractError
from .statevector import Circuit, crx, rx, x

# Parameter keys: ("w", source_id, target_id) for an edge, ("b", neuron_id)
# for a bias.
Key = tuple


def wkey(src: str, dst: str) -> Key:
    return ("w", src, dst)


def bkey(neuron: str) -> Key:
    return ("b", neuron)


def key_to_str(key: Key) -> str:
    return ":".join(key)


def key_from_str(text: str) -> Key:
    parts = tuple(text.split(":"))
    if parts[0] == "w" and len(parts) == 3 or parts[0] == "b" and len(parts) == 2:
        return parts
    raise ContractError(f"malformed parameter key {text!r}")


def weight_to_angle(omega: float) -> float:
    """Rotation angle whose lone RX on |0> yields P(1) = omega."""
    if not 0.0 <= omega <= 1.0:
        raise ContractError(f"weight {omega} outside [0, 1]")
    return 2.0 * math.asin(math.sqrt(omega))


def half_angle(omega):
    """asin(sqrt(omega)), vectorised; the additive unit of activation."""
    return np.arcsin(np.sqrt(np.clip(omega, 0.0, 1.0)))


def activation_probability(b: float, omega: Sequence[float], a: Sequence[int]) -> float:
    if len(omega) != len(a):
        raise ContractError(f"{len(omega)} weights for {len(a)} inputs")
    for v in list(omega) + [b]:
        if not 0.0 <= v <= 1.0:
            raise ContractError(f"probability {v} outside [0, 1]")
    total = math.asin(math.sqrt(b))
    for w, bit in zip(omega, a):
        if bit:
            total += math.asin(math.sqrt(w))
    return math.sin(total) ** 2


@dataclass(frozen=True)
class NeuronSpec:
    id: str
    incoming: tuple[str, ...]
    layer: int


@dataclass(frozen=True)
class ConstraintSet:
    """Shared-weight groups, cut connections and box bounds."""

    ties: tuple[tuple[Key, ...], ...] = ()
    masks: frozenset = frozenset()
    bounds: Mapping[Key, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        ties = tuple(tuple(tuple(k) for k in group) for group in self.ties)
        object.__setattr__(self, "ties", ties)
        object.__setattr__(self, "masks", frozenset(tuple(k) for k in self.masks))
        seen: set = set()
        for group in ties:
            for k in group:
                if k in seen:
                    raise ContractError(f"key {k} appears in two tie groups")
                if k in self.masks:
                    raise ContractError(f"masked key {k} appears in a tie group")
                seen.add(k)
        for k, (lo, hi) in self.bounds.items():
            if not 0.0 <= lo <= hi <= 1.0:
                raise ContractError(f"bad bounds {lo, hi} for {k}")

    def bound(self, key: Key) -> tuple[float, float]:
        return tuple(self.bounds.get(key, (0.0, 1.0)))


@dataclass(frozen=True)
class NetworkTopology:
    inputs: tuple[str, ...]
    layers: tuple[tuple[NeuronSpec, ...], ...]
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    recurrent: bool = False
    kind: str = "custom"
    shape: Mapping = field(default_factory=dict)
    qubits: Mapping[str, int] = field(default=None)

    def __post_init__(self):
        if self.qubits is None:
            ids = list(self.inputs) + [n.id for layer in self.layers for n in layer]
            object.__setattr__(self, "qubits", {nid: q for q, nid in enumerate(ids)})
        validate_topology(self)

    @property
    def n_inputs(self) -> int:
        return len(self.inputs)

    @property
    def n_qubits(self) -> int:
        return len(self.inputs) + sum(len(layer) for layer in self.layers)

    @property
    def neurons(self) -> list[NeuronSpec]:
        return [n for layer in self.layers for n in layer]

    @property
    def outputs(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.layers[-1])

    @property
    def output_qubits(self) -> list[int]:
        return [self.qubits[o] for o in self.outputs]

    @property
    def input_qubits(self) -> list[int]:
        return [self.qubits[i] for i in self.inputs]

    @property
    def edges(self) -> list[tuple[str, str]]:
        return [(src, n.id) for n in self.neurons for src in n.incoming]

    def weight_keys(self) -> list[Key]:
        return [wkey(s, d) for s, d in self.edges]

    def bias_keys(self) -> list[Key]:
        return [bkey(n.id) for n in self.neurons]

    def keys(self) -> list[Key]:
        """All parameter keys: biases then weights, in layer order."""
        out = []
        for n in self.neurons:
            out.append(bkey(n.id))
            out.extend(wkey(s, n.id) for s in n.incoming)
        return out


def validate_topology(topo: NetworkTopology) -> None:
    """Raise ContractError unless the qubit map, layering and constraints are consistent."""
    if not topo.inputs:
        raise ContractError("topology needs at least one input")
    if not topo.layers or any(len(layer) == 0 for layer in topo.layers):
        raise ContractError("every layer needs at least one neuron")
    ids = list(topo.inputs) + [n.id for n in topo.neurons]
    if len(set(ids)) != len(ids):
        raise ContractError("duplicate node id")
    for nid in ids:
        if ":" in nid:
            raise ContractError(f"node id {nid!r} may not contain ':'")
    if set(topo.qubits) != set(ids) or sorted(topo.qubits.values()) != list(range(len(ids))):
        raise ContractError("qubit assignment is not a bijection onto 0..n-1")
    layer_of = {i: -1 for i in topo.inputs}
    for li, layer in enumerate(topo.layers):
        for n in layer:
            if n.layer != li:
                raise ContractError(f"neuron {n.id} records layer {n.layer}, sits in {li}")
            layer_of[n.id] = li
    for li, layer in enumerate(topo.layers):
        for n in layer:
            if len(set(n.incoming)) != len(n.incoming):
                raise ContractError(f"neuron {n.id} lists a source twice")
            for src in n.incoming:
                if src not in layer_of:
                    raise ContractError(f"neuron {n.id} has unknown source {src}")
                if layer_of[src] >= li:
                    raise ContractError(
                        f"edge {src}->{n.id} is not feedforward; unroll recurrent nets"
                    )
    known = set(topo.keys())
    for group in topo.constraints.ties:
        for k in group:
            if k not in known:
                raise ContractError(f"tie references unknown key {k}")
    for k in topo.constraints.bounds:
        if k not in known:
            raise ContractError(f"bound references unknown key {k}")


@dataclass
class ParameterTable:
    weights: dict[tuple[str, str], float]
    biases: dict[str, float]

    def __post_init__(self):
        for k, v in list(self.weights.items()) + list(self.biases.items()):
            if not (0.0 <= v <= 1.0):
                raise ContractError(f"parameter {k} = {v} outside [0, 1]")

    def get(self, key: Key) -> float:
        if key[0] == "w":
            return self.weights[(key[1], key[2])]
        return self.biases[key[1]]

    def as_dict(self) -> dict[Key, float]:
        out = {bkey(n): v for n, v in self.biases.items()}
        out.update({wkey(s, d): v for (s, d), v in self.weights.items()})
        return out

    @classmethod
    def from_dict(cls, values: Mapping[Key, float]) -> "ParameterTable":
        weights, biases = {}, {}
        for k, v in values.items():
            if k[0] == "w":
                weights[(k[1], k[2])] = float(v)
            else:
                biases[k[1]] = float(v)
        return cls(weights, biases)

    @classmethod
    def uniform(cls, topo: NetworkTopology, value: float = 0.0) -> "ParameterTable":
        return cls({e: value for e in topo.edges}, {n.id: value for n in topo.neurons})

    def check(self, topo: NetworkTopology) -> None:
        if set(self.weights) != set(topo.edges):
            missing = set(topo.edges) - set(self.weights)
            extra = set(self.weights) - set(topo.edges)
            raise ContractError(
                f"weights do not match topology edges (missing {sorted(missing)[:3]}, "
                f"extra {sorted(extra)[:3]})"
            )
        if set(self.biases) != {n.id for n in topo.neurons}:
            raise ContractError("biases do not match topology neurons")


def compile_network(topo: NetworkTopology, params: ParameterTable) -> Circuit:
    """Emit RX(bias) then CRX(weight) per incoming edge, neuron by neuron in layer order."""
    params.check(topo)
    circ = Circuit(topo.n_qubits)
    q = topo.qubits
    for n in topo.neurons:
        circ.append(rx(q[n.id], weight_to_angle(params.biases[n.id])))
        for src in n.incoming:
            circ.append(crx(q[src], q[n.id], weight_to_angle(params.weights[(src, n.id)])))
    return circ


def prepare_input(circuit: Circuit, topo: NetworkTopology, bits: Sequence[int]) -> Circuit:
    """Prepend X gates on the input qubits whose bit is 1."""
    if len(bits) != topo.n_inputs:
        raise ContractError(f"{len(bits)} bits for {topo.n_inputs} inputs")
    prep = [x(topo.qubits[i]) for i, b in zip(topo.inputs, bits) if b]
    return Circuit(circuit.n_qubits, prep + circuit.gates)


# -- model file ---------------------------------------------------------------

MODEL_FORMAT = "qperceptron-model/1"


def topology_to_json(topo: NetworkTopology) -> dict:
    c = topo.constraints
    return {
        "kind": topo.kind,
        "shape": dict(topo.shape),
        "recurrent": topo.recurrent,
        "inputs": list(topo.inputs),
        "layers": [
            [{"id": n.id, "incoming": list(n.incoming)} for n in layer] for layer in topo.layers
        ],
        "qubits": dict(topo.qubits),
        "edges": [list(e) for e in topo.edges],
        "ties": [[key_to_str(k) for k in g] for g in c.ties],
        "masks": sorted(key_to_str(k) for k in c.masks),
        "bounds": {key_to_str(k): list(v) for k, v in c.bounds.items()},
    }


def topology_from_json(doc: Mapping) -> NetworkTopology:
    try:
        layers = tuple(
            tuple(NeuronSpec(str(n["id"]), tuple(n["incoming"]), li) for n in layer)
            for li, layer in enumerate(doc["layers"])
        )
        constraints = ConstraintSet(
            ties=tuple(tuple(key_from_str(k) for k in g) for g in doc.get("ties", [])),
            masks=frozenset(key_from_str(k) for k in doc.get("masks", [])),
            bounds={key_from_str(k): tuple(v) for k, v in doc.get("bounds", {}).items()},
        )
        topo = NetworkTopology(
            inputs=tuple(doc["inputs"]),
            layers=layers,
            constraints=constraints,
            recurrent=bool(doc.get("recurrent", False)),
            kind=doc.get("kind", "custom"),
            shape=doc.get("shape", {}),
            qubits={k: int(v) for k, v in doc["qubits"].items()} if "qubits" in doc else None,
        )
    except (KeyError, TypeError) as exc:
        raise ContractError(f"malformed topology document: {exc!r}") from exc
    if "edges" in doc and sorted(map(tuple, doc["edges"])) != sorted(topo.edges):
        raise ContractError("edge list disagrees with layer incoming lists")
    return topo


def params_to_json(params: ParameterTable) -> dict:
    return {
        "weights": {key_to_str(wkey(s, d)): v for (s, d), v in params.weights.items()},
        "biases": dict(params.biases),
    }


def params_from_json(doc: Mapping) -> ParameterTable:
    try:
        weights = {}
        for k, v in doc["weights"].items():
            key = key_from_str(k)
            weights[(key[1], key[2])] = float(v)
        biases = {str(k): float(v) for k, v in doc["biases"].items()}
    except (KeyError, TypeError, AttributeError) as exc:
        raise ContractError(f"malformed parameter document: {exc!r}") from exc
    return ParameterTable(weights, biases)


def save_model(path, topo: NetworkTopology, params: ParameterTable, extra: Mapping | None = None):
    doc = {"format": MODEL_FORMAT, **topology_to_json(topo), **params_to_json(params)}
    if extra:
        doc["meta"] = dict(extra)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_model(path) -> tuple[NetworkTopology, ParameterTable]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ContractError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ContractError(f"{path}: not a {MODEL_FORMAT} document")
    topo = topology_from_json(doc)
    params = params_from_json(doc)
    params.check(topo)
    return topo, params


def iter_bits(width: int) -> Iterable[list[int]]:
    """All bit patterns of ``width`` bits, pattern i having bit j = (i >> j) & 1."""
    for i in range(1 << width):
        yield [(i >> j) & 1 for j in range(width)]
