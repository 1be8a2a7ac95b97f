"""Constructors for the shallow, Hopfield, RBM, autoencoder and CNN topologies."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circuitry import (
    ConstraintSet,
    NetworkTopology,
    NeuronSpec,
    ParameterTable,
    bkey,
    wkey,
)
from .errors import ContractError
from .sampler import NetworkProgram


def _layer(ids, incoming, li):
    return tuple(NeuronSpec(nid, tuple(src), li) for nid, src in zip(ids, incoming))


def shallow(inputs: int, hidden: Sequence[int], outputs: int) -> NetworkTopology:
    """Fully connected feedforward net: inputs -> hidden[0] -> ... -> outputs."""
    hidden = list(hidden)
    if inputs < 1 or outputs < 1 or any(h < 1 for h in hidden):
        raise ContractError("layer sizes must be >= 1")
    ins = tuple(f"x{i}" for i in range(inputs))
    prev = list(ins)
    layers = []
    for li, width in enumerate(hidden):
        ids = [f"h{li}_{j}" for j in range(width)]
        layers.append(_layer(ids, [prev] * width, li))
        prev = ids
    ids = [f"y{j}" for j in range(outputs)]
    layers.append(_layer(ids, [prev] * outputs, len(hidden)))
    return NetworkTopology(
        ins, tuple(layers), kind="shallow",
        shape={"inputs": inputs, "hidden": hidden, "outputs": outputs},
    )


def hopfield(n: int) -> NetworkTopology:
    """One recall step of an n-unit Hopfield net: no self-connection, symmetric weights."""
    if n < 2:
        raise ContractError("a Hopfield net needs at least 2 units")
    ins = tuple(f"x{i}" for i in range(n))
    outs = [f"y{j}" for j in range(n)]
    incoming = [[f"x{i}" for i in range(n) if i != j] for j in range(n)]
    ties = tuple(
        (wkey(f"x{i}", f"y{j}"), wkey(f"x{j}", f"y{i}"))
        for i in range(n) for j in range(i + 1, n)
    )
    masks = frozenset(wkey(f"x{i}", f"y{i}") for i in range(n))
    return NetworkTopology(
        ins, (_layer(outs, incoming, 0),), ConstraintSet(ties=ties, masks=masks),
        recurrent=True, kind="hopfield", shape={"n": n},
    )


def _encoder_decoder(visible: int, hidden: int, tied: bool, kind: str) -> NetworkTopology:
    if visible < 1 or hidden < 1:
        raise ContractError("layer sizes must be >= 1")
    vs = tuple(f"v{i}" for i in range(visible))
    hs = [f"h{j}" for j in range(hidden)]
    rs = [f"r{i}" for i in range(visible)]
    layers = (_layer(hs, [vs] * hidden, 0), _layer(rs, [hs] * visible, 1))
    ties = ()
    if tied:
        ties = tuple(
            (wkey(f"v{i}", f"h{j}"), wkey(f"h{j}", f"r{i}"))
            for i in range(visible) for j in range(hidden)
        )
    return NetworkTopology(
        vs, layers, ConstraintSet(ties=ties), kind=kind,
        shape={"visible": visible, "hidden": hidden},
    )


def rbm(visible: int, hidden: int) -> NetworkTopology:
    """RBM unrolled to encoder/decoder; v_i->h_j shares its weight with h_j->r_i."""
    return _encoder_decoder(visible, hidden, True, "rbm")


def autoencoder(visible: int, hidden: int) -> NetworkTopology:
    return _encoder_decoder(visible, hidden, False, "autoencoder")


def cnn(height: int, width: int, kernel: tuple[int, int], stride: int,
        fc_hidden: Sequence[int], outputs: int) -> NetworkTopology:
    """One shared-kernel convolution layer followed by fully connected layers."""
    kh, kw = kernel
    fc_hidden = list(fc_hidden)
    if min(height, width, kh, kw, stride, outputs) < 1 or kh > height or kw > width:
        raise ContractError("kernel does not fit the image")
    rows = (height - kh) // stride + 1
    cols = (width - kw) // stride + 1
    pix = tuple(f"p{r}_{c}" for r in range(height) for c in range(width))
    feats, incoming = [], []
    kernel_groups: dict[tuple[int, int], list] = {(dr, dc): [] for dr in range(kh) for dc in range(kw)}
    for i in range(rows):
        for j in range(cols):
            fid = f"f{i}_{j}"
            feats.append(fid)
            src = []
            for dr in range(kh):
                for dc in range(kw):
                    p = f"p{i * stride + dr}_{j * stride + dc}"
                    src.append(p)
                    kernel_groups[(dr, dc)].append(wkey(p, fid))
            incoming.append(src)
    layers = [_layer(feats, incoming, 0)]
    prev = feats
    for li, w in enumerate(fc_hidden, start=1):
        ids = [f"h{li}_{j}" for j in range(w)]
        layers.append(_layer(ids, [prev] * w, li))
        prev = ids
    outs = [f"y{j}" for j in range(outputs)]
    layers.append(_layer(outs, [prev] * outputs, len(layers)))
    ties = tuple(tuple(g) for g in kernel_groups.values())
    if len(feats) > 1:
        ties += (tuple(bkey(f) for f in feats),)
    return NetworkTopology(
        pix, tuple(layers), ConstraintSet(ties=ties), kind="cnn",
        shape={"height": height, "width": width, "kernel": [kh, kw], "stride": stride,
               "fc_hidden": fc_hidden, "outputs": outputs},
    )


def build(kind: str, shape: dict) -> NetworkTopology:
    """Construct a topology from a config-style (kind, shape) pair."""
    try:
        if kind == "shallow":
            return shallow(shape["inputs"], shape.get("hidden", []), shape["outputs"])
        if kind == "hopfield":
            return hopfield(shape["n"])
        if kind == "rbm":
            return rbm(shape["visible"], shape["hidden"])
        if kind == "autoencoder":
            return autoencoder(shape["visible"], shape["hidden"])
        if kind == "cnn":
            return cnn(shape["height"], shape["width"], tuple(shape["kernel"]),
                       shape.get("stride", 1), shape.get("fc_hidden", []), shape["outputs"])
    except KeyError as exc:
        raise ContractError(f"{kind} model is missing shape field {exc}") from exc
    raise ContractError(f"unknown model kind {kind!r}")


def hopfield_weight_matrix(topo: NetworkTopology, params: ParameterTable) -> np.ndarray:
    n = topo.n_inputs
    W = np.zeros((n, n))
    for (src, dst), v in params.weights.items():
        W[int(src[1:]), int(dst[1:])] = v
    return W


@dataclass
class HopfieldTrajectory:
    patterns: list[list[int]]
    marginals: list[list[float]] = field(default_factory=list)
    converged: bool = False

    @property
    def final(self) -> list[int]:
        return self.patterns[-1]

    @property
    def iterations(self) -> int:
        return len(self.patterns) - 1


def hopfield_recall(topo: NetworkTopology, params: ParameterTable, probe: Sequence[int],
                    max_iters: int = 10, mode: str = "sample",
                    rng: np.random.Generator | None = None,
                    program: NetworkProgram | None = None) -> HopfieldTrajectory:
    """Feed outputs back as inputs until a pattern repeats or ``max_iters`` is reached."""
    if len(probe) != topo.n_inputs:
        raise ContractError(f"probe has {len(probe)} bits, net has {topo.n_inputs} units")
    if mode not in ("sample", "argmax"):
        raise ContractError(f"unknown recall mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ContractError("sample mode needs an rng")
    prog = program or NetworkProgram(topo)
    vec = prog.vector(params)
    current = [int(b) for b in probe]
    traj = HopfieldTrajectory([current])
    for _ in range(max_iters):
        p = prog.exact(vec, np.asarray([current]))[0]
        if mode == "sample":
            nxt = (rng.random(len(p)) < p).astype(int).tolist()
        else:
            nxt = (p >= 0.5).astype(int).tolist()
        traj.marginals.append(p.tolist())
        traj.patterns.append(nxt)
        if nxt == current:
            traj.converged = True
            break
        current = nxt
    return traj


def stripe_patterns(rows: int = 3, columns: Sequence[Sequence[int]] = ((1, 0, 1), (0, 1, 0))):
    """Vertical stripe patterns: each column profile replicated over ``rows`` rows, row-major."""
    return [[int(v) for _ in range(rows) for v in col] for col in columns]


def hopfield_dataset(patterns: Sequence[Sequence[int]], corrupted: bool = True):
    """Stored patterns map to themselves; optionally every one-bit flip maps to its source."""
    X, Y = [], []
    for pat in patterns:
        X.append(list(pat))
        Y.append(list(pat))
        if corrupted:
            for i in range(len(pat)):
                flipped = list(pat)
                flipped[i] ^= 1
                X.append(flipped)
                Y.append(list(pat))
    return np.array(X, dtype=float), np.array(Y, dtype=float)
