"""Classical engine equivalent to the compiled circuits on basis-state inputs.

Every control in a compiled network is diagonal in the computational basis,
so measuring all qubits gives the same statistics as firing neurons layer by
layer with independent Bernoulli draws. This module does exactly that, either
by sampling or by carrying the exact joint distribution of the hidden bits
that later layers still read.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .circuitry import NetworkTopology, ParameterTable, compile_network, half_angle, prepare_input
from .errors import ContractError, ResourceError
from .statevector import marginal_distribution, simulate

ENUMERATION_LIMIT = 16
LIVE_LIMIT = 22
DEFAULT_SHOTS = 4096
_CHUNK_ELEMENTS = 1 << 22


@dataclass
class ForwardTrace:
    layers: list[list[int]]

    @property
    def outputs(self) -> list[int]:
        return self.layers[-1]


@dataclass
class _Layer:
    ids: list[str]
    bias_k: np.ndarray
    in_rows: np.ndarray
    in_cols: np.ndarray
    in_k: np.ndarray
    sources: list[str]
    src_rows: np.ndarray
    src_cols: np.ndarray
    src_k: np.ndarray
    live_before: list[str]
    live_after: list[str]


class NetworkProgram:
    """Index bookkeeping that turns a parameter vector into per-layer angle arrays.

    The parameter vector is ordered as ``topology.keys()``.
    """

    def __init__(self, topo: NetworkTopology):
        self.topo = topo
        self.keys = topo.keys()
        self.key_index = {k: i for i, k in enumerate(self.keys)}
        inputs = {name: i for i, name in enumerate(topo.inputs)}
        needed_from: dict[str, int] = {}
        for li, layer in enumerate(topo.layers):
            for n in layer:
                for src in n.incoming:
                    if src not in inputs:
                        needed_from[src] = max(needed_from.get(src, -1), li)

        order = {n.id: i for i, n in enumerate(topo.neurons)}
        self.layers: list[_Layer] = []
        live: list[str] = []
        last = len(topo.layers) - 1
        for li, layer in enumerate(topo.layers):
            ids = [n.id for n in layer]
            col = {nid: j for j, nid in enumerate(ids)}
            bias_k = np.array([self.key_index[("b", nid)] for nid in ids])
            in_rows, in_cols, in_k = [], [], []
            sources = sorted(
                {s for n in layer for s in n.incoming if s not in inputs}, key=order.get
            )
            srow = {s: r for r, s in enumerate(sources)}
            src_rows, src_cols, src_k = [], [], []
            for n in layer:
                for s in n.incoming:
                    k = self.key_index[("w", s, n.id)]
                    if s in inputs:
                        in_rows.append(inputs[s])
                        in_cols.append(col[n.id])
                        in_k.append(k)
                    else:
                        src_rows.append(srow[s])
                        src_cols.append(col[n.id])
                        src_k.append(k)
            combined = live + ids
            if li == last:
                live_after = list(ids)
            else:
                live_after = [nid for nid in combined if needed_from.get(nid, -1) > li]
            self.layers.append(
                _Layer(
                    ids, bias_k,
                    np.array(in_rows, dtype=int), np.array(in_cols, dtype=int),
                    np.array(in_k, dtype=int),
                    sources,
                    np.array(src_rows, dtype=int), np.array(src_cols, dtype=int),
                    np.array(src_k, dtype=int),
                    list(live), live_after,
                )
            )
            live = live_after

    def vector(self, params: ParameterTable | Mapping) -> np.ndarray:
        if isinstance(params, ParameterTable):
            params.check(self.topo)
            return np.array([params.get(k) for k in self.keys], dtype=float)
        return np.array([params[k] for k in self.keys], dtype=float)

    def angles(self, vec: np.ndarray):
        """Per layer: bias half-angles (B, w), input matrix (B, n_in, w), source matrix (B, |src|, w).

        ``vec`` is one key vector or a (B, K) stack of them.
        """
        ha = half_angle(np.atleast_2d(np.asarray(vec, dtype=float)))
        B = ha.shape[0]
        n_in = self.topo.n_inputs
        out = []
        for L in self.layers:
            w = len(L.ids)
            win = np.zeros((B, n_in, w))
            win[:, L.in_rows, L.in_cols] = ha[:, L.in_k]
            wsrc = np.zeros((B, len(L.sources), w))
            wsrc[:, L.src_rows, L.src_cols] = ha[:, L.src_k]
            out.append((ha[:, L.bias_k], win, wsrc))
        return out

    # -- exact ----------------------------------------------------------------

    def check_enumerable(self, joint_outputs: bool, limit: int = ENUMERATION_LIMIT) -> None:
        last = len(self.layers) - 1
        for li, L in enumerate(self.layers):
            enumerated = li < last or joint_outputs
            if enumerated and len(L.ids) > limit:
                raise ResourceError(
                    f"layer {li} has {len(L.ids)} neurons, above the enumeration limit "
                    f"of {limit}; use shot-based estimation instead"
                )
            width = len(L.live_before) + (len(L.ids) if enumerated else 0)
            if width > LIVE_LIMIT:
                raise ResourceError(
                    f"exact propagation would track {width} hidden bits at layer {li} "
                    f"(limit {LIVE_LIMIT}); use shot-based estimation instead"
                )

    def exact(self, vec: np.ndarray, X: np.ndarray, joint: bool = False,
              limit: int = ENUMERATION_LIMIT) -> np.ndarray:
        """Exact output statistics for a batch of input rows ``X`` (N, n_in).

        Returns per-output marginals P(out_j = 1) with shape (N, n_out), or with
        ``joint=True`` the full distribution (N, 2**n_out) indexed LSB-first by
        output position. A (B, K) stack of key vectors adds a leading B axis.
        """
        self.check_enumerable(joint, limit)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.topo.n_inputs:
            raise ContractError(f"input width {X.shape[1]} != {self.topo.n_inputs}")
        single = np.ndim(vec) == 1
        angles = self.angles(vec)
        B = angles[0][0].shape[0]
        widest = max(len(L.live_before) + len(L.ids) for L in self.layers)
        chunk = max(1, _CHUNK_ELEMENTS >> widest)
        if B * len(X) <= chunk:
            res = self._exact_chunk(angles, X, joint)
        else:
            rows = max(1, chunk // B)
            parts = []
            for bi in range(B):
                one = [(b[bi:bi + 1], wi[bi:bi + 1], ws[bi:bi + 1]) for b, wi, ws in angles]
                parts.append(np.concatenate(
                    [self._exact_chunk(one, X[i:i + rows], joint) for i in range(0, len(X), rows)],
                    axis=1))
            res = np.concatenate(parts, axis=0)
        return res[0] if single else res

    def _exact_chunk(self, angles, X, joint):
        N = len(X)
        B = angles[0][0].shape[0]
        P = np.ones((B, N, 1))
        last = len(self.layers) - 1
        for li, (L, (b, win, wsrc)) in enumerate(zip(self.layers, angles)):
            live = L.live_before
            w = len(L.ids)
            base = b[:, None, :] + X @ win  # (B, N, w)
            if L.sources:
                C = _configs(len(live))
                rows = [live.index(s) for s in L.sources]
                contrib = C[:, rows] @ wsrc  # (B, 2^L, w)
            else:
                contrib = np.zeros((B, P.shape[2], w))
            if li == last and not joint:
                # sum_c P_c sin^2(a + d_c) = 1/2 - 1/2 Re(e^{2ia} sum_c P_c e^{2i d_c})
                M = P @ np.concatenate([np.cos(2 * contrib), np.sin(2 * contrib)], axis=2)
                return 0.5 - 0.5 * (np.cos(2 * base) * M[..., :w] - np.sin(2 * base) * M[..., w:])
            p = np.sin(base[:, :, None, :] + contrib[:, None, :, :]) ** 2  # (B, N, 2^L, w)
            # joint over (live, new layer); neuron j becomes bit j of the new index
            J = P[..., None]
            for j in range(w):
                pj = p[..., j:j + 1, None]
                # (.., 2^L, 2^j) -> (.., 2^L, 2, 2^j): the new bit is the most significant
                J = (np.concatenate([1.0 - pj, pj], axis=3) * J[..., None, :]).reshape(
                    B, N, -1, 2 << j)
            # (B, N, 2^L, 2^w) -> flat index m + (y << L)
            J = J.transpose(0, 1, 3, 2).reshape(B * N, -1)
            P = _marginalize(J, live + L.ids, L.live_after).reshape(B, N, -1)
        return P  # joint over outputs, LSB-first


@lru_cache(maxsize=64)
def _configs(width: int) -> np.ndarray:
    idx = np.arange(1 << width)
    return ((idx[:, None] >> np.arange(width)[None, :]) & 1).astype(float)


def _marginalize(P: np.ndarray, bits: list[str], keep: list[str]) -> np.ndarray:
    """Sum a (N, 2**len(bits)) LSB-first table down to the ``keep`` bits (LSB-first)."""
    n = len(bits)
    N = P.shape[0]
    if not keep:
        return P.sum(axis=1, keepdims=True)
    T = P.reshape((N,) + (2,) * n)
    axis_of = {name: 1 + (n - 1 - i) for i, name in enumerate(bits)}
    drop = tuple(axis_of[name] for name in bits if name not in keep)
    if drop:
        T = T.sum(axis=drop)
    remaining = sorted(axis_of[name] for name in keep)
    order = [0] + [1 + remaining.index(axis_of[name]) for name in reversed(keep)]
    return np.ascontiguousarray(T.transpose(order)).reshape(N, -1)


def _as_program(topo, params):
    prog = topo if isinstance(topo, NetworkProgram) else NetworkProgram(topo)
    return prog, prog.vector(params)


def exact_output_distribution(topo, params, bits: Sequence[int],
                              limit: int = ENUMERATION_LIMIT) -> np.ndarray:
    """P(output bitstring) indexed with output j as bit j."""
    prog, vec = _as_program(topo, params)
    return prog.exact(vec, np.asarray([bits]), joint=True, limit=limit)[0]


def output_marginals(topo, params, X, limit: int = ENUMERATION_LIMIT) -> np.ndarray:
    prog, vec = _as_program(topo, params)
    return prog.exact(vec, np.asarray(X), joint=False, limit=limit)


# -- sampling -----------------------------------------------------------------


def sample_layers(prog: NetworkProgram, vec: np.ndarray, bits: Sequence[int], shots: int,
                  rng: np.random.Generator) -> list[np.ndarray]:
    """``shots`` independent forward passes on one input; per layer a (shots, w) 0/1 array."""
    bits = np.asarray(bits, dtype=float)
    if bits.shape != (prog.topo.n_inputs,):
        raise ContractError(f"{bits.size} input bits for {prog.topo.n_inputs} inputs")
    fired: dict[str, np.ndarray] = {}
    out = []
    for L, (b, win, wsrc) in zip(prog.layers, prog.angles(vec)):
        b, win, wsrc = b[0], win[0], wsrc[0]
        ang = np.broadcast_to(b + bits @ win, (shots, len(L.ids)))
        if L.sources:
            S = np.stack([fired[s] for s in L.sources], axis=1)
            ang = ang + S @ wsrc
        p = np.sin(ang) ** 2
        layer_bits = (rng.random((shots, len(L.ids))) < p).astype(np.int8)
        for j, nid in enumerate(L.ids):
            fired[nid] = layer_bits[:, j].astype(float)
        out.append(layer_bits)
    return out


def forward_sample(topo, params, bits: Sequence[int], rng: np.random.Generator) -> ForwardTrace:
    prog, vec = _as_program(topo, params)
    layers = sample_layers(prog, vec, bits, 1, rng)
    return ForwardTrace([[int(v) for v in layer[0]] for layer in layers])


def sample_outputs(topo, params, bits: Sequence[int], shots: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Output bitstring counts (LSB-first index) over ``shots`` forward passes."""
    prog, vec = _as_program(topo, params)
    outs = sample_layers(prog, vec, bits, shots, rng)[-1]
    idx = outs.astype(np.int64) @ (1 << np.arange(outs.shape[1]))
    return np.bincount(idx, minlength=1 << outs.shape[1])


def shot_marginals(prog: NetworkProgram, vec: np.ndarray, X: np.ndarray, shots: int,
                   seed: int) -> np.ndarray:
    """Shot estimate of P(out_j = 1); sample i draws from its own stream (seed, i)."""
    X = np.atleast_2d(X)
    out = np.empty((len(X), len(prog.layers[-1].ids)))
    for i, row in enumerate(X):
        rng = np.random.default_rng([seed, i])
        out[i] = sample_layers(prog, vec, row, shots, rng)[-1].mean(axis=0)
    return out


def statevector_marginals(prog: NetworkProgram, vec: np.ndarray, X: np.ndarray,
                          max_qubits: int | None = None) -> np.ndarray:
    """Per-output marginals from full circuit simulation, one input row at a time."""
    topo = prog.topo
    params = ParameterTable.from_dict(dict(zip(prog.keys, np.asarray(vec, dtype=float).tolist())))
    net = compile_network(topo, params)
    outs = topo.output_qubits
    X = np.atleast_2d(X)
    P = np.empty((len(X), len(outs)))
    for i, row in enumerate(X):
        state = simulate(prepare_input(net, topo, [int(b) for b in row]), max_qubits)
        for j, q in enumerate(outs):
            P[i, j] = marginal_distribution(state, [q])[1]
    return P


# -- loss -----------------------------------------------------------------------


def as_arrays(dataset) -> tuple[np.ndarray, np.ndarray]:
    """Accept (X, Y) arrays or a list of (input bits, target bits) pairs."""
    if isinstance(dataset, tuple) and len(dataset) == 2 and hasattr(dataset[0], "shape"):
        X, Y = dataset
    else:
        pairs = list(dataset)
        if not pairs:
            raise ContractError("dataset is empty")
        X = [p[0] for p in pairs]
        Y = [p[1] for p in pairs]
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if len(X) == 0:
        raise ContractError("dataset is empty")
    return X, Y


class LossFunction:
    """Mean over samples of sum_j (P(out_j = 1) - target_j)^2 as a function of the key vector.

    ``backend`` is "exact" (enumeration), "shots", "statevector" (full circuit
    simulation, slow) or "auto" (exact when the network is within the
    enumeration limit). Optional non-negative sample
    ``weights`` turn the mean into a weighted mean.
    """

    def __init__(self, topo, dataset, backend: str = "auto", shots: int = DEFAULT_SHOTS,
                 seed: int = 0, limit: int = ENUMERATION_LIMIT, weights=None):
        self.prog = topo if isinstance(topo, NetworkProgram) else NetworkProgram(topo)
        self.X, self.Y = as_arrays(dataset)
        if self.Y.shape[1] != len(self.prog.layers[-1].ids):
            raise ContractError("target width does not match output count")
        if weights is None:
            w = np.ones(len(self.X))
        else:
            w = np.asarray(weights, dtype=float)
            if w.shape != (len(self.X),) or np.any(w < 0) or w.sum() <= 0:
                raise ContractError("weights must be non-negative, one per sample, not all zero")
        self.weights = w / w.sum()
        if backend == "auto":
            try:
                self.prog.check_enumerable(False, limit)
                backend = "exact"
            except ResourceError:
                backend = "shots"
        if backend not in ("exact", "shots", "statevector"):
            raise ContractError(f"unknown loss backend {backend!r}")
        self.backend = backend
        self.shots = shots
        self.seed = seed
        self.limit = limit

    def marginals(self, vec, X=None) -> np.ndarray:
        X = self.X if X is None else X
        if self.backend == "exact":
            return self.prog.exact(vec, X, limit=self.limit)
        if self.backend == "statevector":
            return statevector_marginals(self.prog, vec, X)
        return shot_marginals(self.prog, vec, X, self.shots, self.seed)

    def __call__(self, vec) -> float:
        P = self.marginals(vec)
        return float(np.sum((P - self.Y) ** 2, axis=1) @ self.weights)

    def many(self, vecs) -> np.ndarray:
        """Loss for each row of a (B, K) stack of key vectors."""
        vecs = np.atleast_2d(vecs)
        if self.backend != "exact":
            return np.array([self(v) for v in vecs])
        P = self.prog.exact(vecs, self.X, limit=self.limit)
        return np.sum((P - self.Y[None]) ** 2, axis=2) @ self.weights


def network_loss(topo, params, dataset, backend: str = "auto", shots: int = DEFAULT_SHOTS,
                 seed: int = 0) -> float:
    fn = LossFunction(topo, dataset, backend, shots, seed)
    return fn(fn.prog.vector(params))


def predict(marginals: np.ndarray) -> np.ndarray:
    """Class index: argmax over output marginals (ties to the lowest index); one output thresholds at 0.5."""
    marginals = np.atleast_2d(marginals)
    if marginals.shape[1] == 1:
        return (marginals[:, 0] >= 0.5).astype(int)
    return np.argmax(marginals, axis=1)


def accuracy(marginals: np.ndarray, Y: np.ndarray) -> float:
    Y = np.atleast_2d(Y)
    truth = Y[:, 0].astype(int) if Y.shape[1] == 1 else np.argmax(Y, axis=1)
    return float(np.mean(predict(marginals) == truth))
