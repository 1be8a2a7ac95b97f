"""Independent reference implementations used as test oracles.

Nothing here imports the package's simulation code; gates are dense matrices
built with np.kron and network statistics come from brute-force enumeration.
"""

import itertools
import math

import numpy as np

I2 = np.eye(2, dtype=complex)
Xm = np.array([[0, 1], [1, 0]], dtype=complex)
Zm = np.diag([1, -1]).astype(complex)
Hm = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
P0 = np.diag([1, 0]).astype(complex)
P1 = np.diag([0, 1]).astype(complex)


def rx_matrix(theta):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def embed(ops: dict, n: int) -> np.ndarray:
    """Kronecker product with ops[q] on qubit q (qubit 0 = least significant)."""
    out = np.eye(1, dtype=complex)
    for q in reversed(range(n)):
        out = np.kron(out, ops.get(q, I2))
    return out


def gate_matrix(kind, target, controls=(), theta=0.0, n=1):
    if kind == "RX":
        return embed({target: rx_matrix(theta)}, n)
    if kind == "H":
        return embed({target: Hm}, n)
    if kind == "X":
        return embed({target: Xm}, n)
    if kind == "Z":
        return embed({target: Zm}, n)
    if kind == "CRX":
        (c,) = controls
        return embed({c: P0}, n) + embed({c: P1, target: rx_matrix(theta)}, n)
    if kind == "MCZ":
        qs = list(controls) + [target]
        diag = np.ones(1 << n, dtype=complex)
        for i in range(1 << n):
            if all((i >> q) & 1 for q in qs):
                diag[i] = -1
        return np.diag(diag)
    raise ValueError(kind)


def activation(b, omegas, bits):
    ang = math.asin(math.sqrt(b)) + sum(math.asin(math.sqrt(w)) for w, a in zip(omegas, bits) if a)
    return math.sin(ang) ** 2


def brute_force_outputs(inputs, layers, weights, biases, bits):
    """P(output_j = 1) by enumerating every neuron configuration.

    ``layers`` is a list of lists of (id, incoming ids); weights maps
    (src, dst) -> omega and biases maps id -> b.
    """
    neurons = [n for layer in layers for n in layer]
    outs = [nid for nid, _ in layers[-1]]
    marg = {o: 0.0 for o in outs}
    for config in itertools.product([0, 1], repeat=len(neurons)):
        val = dict(zip(inputs, bits))
        val.update({nid: v for (nid, _), v in zip(neurons, config)})
        p = 1.0
        for nid, inc in neurons:
            q = activation(biases[nid], [weights[(s, nid)] for s in inc], [val[s] for s in inc])
            p *= q if val[nid] else 1 - q
        for o in outs:
            if val[o]:
                marg[o] += p
    return [marg[o] for o in outs]


def grover_mass(marked: int, total: int, k: int) -> float:
    return math.sin((2 * k + 1) * math.asin(math.sqrt(marked / total))) ** 2
