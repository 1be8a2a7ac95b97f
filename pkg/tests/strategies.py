"""Hypothesis strategies and builders shared across the test modules."""

import numpy as np
from hypothesis import strategies as st

from qperceptron import models
from qperceptron.circuitry import NetworkTopology, NeuronSpec, ParameterTable


def random_feedforward(rng: np.random.Generator, max_qubits: int = 12, max_hidden: int = 2):
    """Sparse random feedforward net: sources drawn from any earlier layer."""
    while True:
        n_in = int(rng.integers(1, 5))
        widths = [int(rng.integers(1, 4)) for _ in range(int(rng.integers(0, max_hidden + 1)))]
        widths.append(int(rng.integers(1, 4)))
        if n_in + sum(widths) <= max_qubits:
            break
    inputs = tuple(f"i{k}" for k in range(n_in))
    earlier = list(inputs)
    layers = []
    for li, w in enumerate(widths):
        layer = []
        for j in range(w):
            k = int(rng.integers(0, len(earlier) + 1))
            src = tuple(rng.choice(earlier, size=k, replace=False).tolist()) if k else ()
            layer.append(NeuronSpec(f"n{li}_{j}", src, li))
        layers.append(tuple(layer))
        earlier += [n.id for n in layer]
    return NetworkTopology(inputs, tuple(layers))


def random_params(topo, rng: np.random.Generator) -> ParameterTable:
    return ParameterTable({e: float(rng.uniform()) for e in topo.edges},
                          {n.id: float(rng.uniform()) for n in topo.neurons})


@st.composite
def shallow_nets(draw, max_in=4, max_hidden=3, max_out=3):
    n_in = draw(st.integers(1, max_in))
    hidden = draw(st.lists(st.integers(1, max_hidden), max_size=2))
    n_out = draw(st.integers(1, max_out))
    return models.shallow(n_in, hidden, n_out)


seeds = st.integers(0, 2**31 - 1)
