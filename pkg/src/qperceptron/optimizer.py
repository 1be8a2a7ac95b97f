"""Kiefer-Wolfowitz gradient estimates inside a simulated-annealing accept/reject loop.

The optimizer works on a vector of *groups*: one entry per tie group and per
untied, unmasked parameter. Masked parameters are pinned at zero. Every
candidate passes through :meth:`ParameterSpace.project`, so bounds, ties and
masks hold at every iterate.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .circuitry import Key, NetworkTopology, ParameterTable
from .errors import ContractError


class ParameterSpace:
    def __init__(self, topo: NetworkTopology):
        self.topo = topo
        self.keys: list[Key] = topo.keys()
        index = {k: i for i, k in enumerate(self.keys)}
        cons = topo.constraints
        self.masked = [k for k in self.keys if k in cons.masks]
        groups: list[tuple[Key, ...]] = [tuple(g) for g in cons.ties]
        tied = {k for g in groups for k in g}
        groups += [(k,) for k in self.keys if k not in tied and k not in cons.masks]
        self.groups = groups
        self.group_of: dict[Key, int] = {k: gi for gi, g in enumerate(groups) for k in g}
        self.key_group = np.array([self.group_of.get(k, -1) for k in self.keys])
        self.lo = np.array([max(cons.bound(k)[0] for k in g) for g in groups])
        self.hi = np.array([min(cons.bound(k)[1] for k in g) for g in groups])
        if np.any(self.lo > self.hi):
            raise ContractError("tie group has disjoint bounds")
        self._index = index

    @property
    def size(self) -> int:
        return len(self.groups)

    def resolve(self, coord) -> int:
        """Group index for an int or a parameter key; masked keys are rejected."""
        if isinstance(coord, (int, np.integer)):
            if not 0 <= coord < self.size:
                raise ContractError(f"group index {coord} out of range")
            return int(coord)
        key = tuple(coord)
        if key in self.topo.constraints.masks:
            raise ContractError(f"parameter {key} is masked")
        if key not in self.group_of:
            raise ContractError(f"unknown parameter {key}")
        return self.group_of[key]

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)

    def expand(self, x: np.ndarray) -> np.ndarray:
        """Group vector -> key vector in ``topology.keys()`` order."""
        x = np.asarray(x, dtype=float)
        full = np.zeros(len(self.keys))
        live = self.key_group >= 0
        full[live] = x[self.key_group[live]]
        return full

    def to_table(self, x: np.ndarray) -> ParameterTable:
        return ParameterTable.from_dict(dict(zip(self.keys, self.expand(x).tolist())))

    def from_table(self, params: ParameterTable) -> np.ndarray:
        params.check(self.topo)
        return self.project(np.array([np.mean([params.get(k) for k in g]) for g in self.groups]))

    def random(self, rng: np.random.Generator, low: float = 0.05, high: float = 0.5) -> np.ndarray:
        return self.project(rng.uniform(low, high, size=self.size))

    def satisfied(self, params: ParameterTable | np.ndarray, tol: float = 0.0) -> bool:
        """True when bounds hold, tied keys are equal and masked keys are zero."""
        if isinstance(params, ParameterTable):
            vals = {k: params.get(k) for k in self.keys}
        else:
            vals = dict(zip(self.keys, np.asarray(params, dtype=float)))
        cons = self.topo.constraints
        for k, v in vals.items():
            lo, hi = cons.bound(k)
            if not lo - tol <= v <= hi + tol:
                return False
            if k in cons.masks and abs(v) > tol:
                return False
        for g in cons.ties:
            ref = vals[g[0]]
            if any(abs(vals[k] - ref) > tol for k in g[1:]):
                return False
        return True


@dataclass(frozen=True)
class KWSchedule:
    a0: float = 1.0
    c0: float = 0.05
    alpha: float = 0.602
    gamma: float = 0.101

    def __post_init__(self):
        if self.a0 <= 0 or self.c0 <= 0 or self.alpha < 0 or self.gamma < 0:
            raise ContractError("KW seeds must be positive and exponents non-negative")

    def a(self, n: int) -> float:
        return self.a0 / (n + 1) ** self.alpha

    def c(self, n: int) -> float:
        return self.c0 / (n + 1) ** self.gamma


@dataclass(frozen=True)
class AnnealSchedule:
    t0: float = 0.1
    beta: float = 0.995
    k: float = 1.0

    def __post_init__(self):
        if self.t0 <= 0 or not 0 < self.beta < 1 or self.k <= 0:
            raise ContractError("need t0 > 0, 0 < beta < 1, k > 0")

    def temperature(self, t: int) -> float:
        # floor keeps T > 0 once beta**t underflows
        return max(self.t0 * self.beta**t, 1e-300)


@dataclass
class TrainConfig:
    iterations: int = 2000
    subset: int = 8
    eval_every: int = 0
    mode: str = "sa"
    init_low: float = 0.05
    init_high: float = 0.5

    def __post_init__(self):
        if self.iterations < 1:
            raise ContractError("iteration budget must be >= 1")
        if self.subset < 1:
            raise ContractError("coordinate subset must be >= 1")
        if self.mode not in ("sa", "descent"):
            raise ContractError(f"unknown mode {self.mode!r}; expected 'sa' or 'descent'")


@dataclass
class TraceRecord:
    iteration: int
    loss: float
    temperature: float
    accepted: bool
    accuracy: float | None = None


@dataclass
class TrainingTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def append(self, rec: TraceRecord) -> None:
        if self.records and rec.iteration <= self.records[-1].iteration:
            raise ContractError("trace iterations must increase")
        self.records.append(rec)

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "loss", "temperature", "accepted", "accuracy"])
        for r in self.records:
            w.writerow([
                r.iteration, repr(r.loss), repr(r.temperature), int(r.accepted),
                "" if r.accuracy is None else repr(r.accuracy),
            ])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrainingTrace":
        trace = cls()
        for row in csv.DictReader(io.StringIO(text)):
            trace.append(TraceRecord(
                int(row["iteration"]), float(row["loss"]), float(row["temperature"]),
                bool(int(row["accepted"])),
                float(row["accuracy"]) if row["accuracy"] else None,
            ))
        return trace


def kw_gradient(loss_fn: Callable[[np.ndarray], float], x: np.ndarray, c: float,
                coords: Sequence, space: ParameterSpace) -> dict[int, float]:
    """Central-difference estimate per group; perturbed values are clipped to bounds.

    The difference is divided by the realised spread, so a coordinate sitting
    on a bound gets a one-sided estimate instead of a halved one.
    """
    if c <= 0:
        raise ContractError("difference step must be positive")
    x = np.asarray(x, dtype=float)
    groups = [space.resolve(coord) for coord in coords]
    ups, dns, spreads = [], [], []
    for g in groups:
        up = x.copy()
        dn = x.copy()
        up[g] = min(x[g] + c, space.hi[g])
        dn[g] = max(x[g] - c, space.lo[g])
        ups.append(up)
        dns.append(dn)
        spreads.append(up[g] - dn[g])
    if not groups:
        return {}
    if hasattr(loss_fn, "many"):
        vals = loss_fn.many(np.array(ups + dns))
    else:
        vals = np.array([loss_fn(v) for v in ups + dns])
    m = len(groups)
    return {
        g: 0.0 if s <= 0 else float((vals[i] - vals[m + i]) / s)
        for i, (g, s) in enumerate(zip(groups, spreads))
    }


def propose(x: np.ndarray, gradient: dict[int, float] | np.ndarray, a: float,
            space: ParameterSpace) -> np.ndarray:
    """Descend the loss: project(x - a * gradient)."""
    cand = np.asarray(x, dtype=float).copy()
    if isinstance(gradient, dict):
        for g, v in gradient.items():
            cand[g] -= a * v
    else:
        cand -= a * np.asarray(gradient, dtype=float)
    return space.project(cand)


def acceptance_probability(e_old: float, e_new: float, T: float, k: float) -> float:
    if T <= 0 or k <= 0:
        raise ContractError("need T > 0 and k > 0")
    delta = e_new - e_old
    if delta <= 0:
        return 1.0
    return math.exp(-delta / (k * T))


def sa_accept(e_old: float, e_new: float, T: float, k: float, rng: np.random.Generator) -> bool:
    p = acceptance_probability(e_old, e_new, T, k)
    # always draw, so the stream position does not depend on the outcome
    return bool(rng.random() < p)


class _GroupLoss:
    """Adapts a key-vector loss to group vectors, keeping batch evaluation if offered."""

    def __init__(self, loss_fn, space: ParameterSpace):
        self.loss_fn = loss_fn
        self.space = space
        if hasattr(loss_fn, "many"):
            self.many = self._many

    def __call__(self, xg) -> float:
        return float(self.loss_fn(self.space.expand(xg)))

    def _many(self, xgs) -> np.ndarray:
        return np.asarray(self.loss_fn.many(np.array([self.space.expand(v) for v in xgs])))


def train(topology: NetworkTopology, loss_fn: Callable[[np.ndarray], float],
          kw: KWSchedule | None = None, anneal: AnnealSchedule | None = None,
          config: TrainConfig | None = None, rng: np.random.Generator | None = None,
          evaluate: Callable[[np.ndarray], float] | None = None,
          init: ParameterTable | None = None,
          check_constraints: bool = False):
    """Run the KW + SA search.

    ``loss_fn`` and ``evaluate`` take key vectors (``topology.keys()`` order).
    Returns the best-so-far ParameterTable and the full TrainingTrace.
    """
    kw = kw or KWSchedule()
    anneal = anneal or AnnealSchedule()
    config = config or TrainConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    space = ParameterSpace(topology)

    f = _GroupLoss(loss_fn, space)

    x = space.from_table(init) if init is not None else space.random(
        rng, config.init_low, config.init_high)
    e = f(x)
    best_x, best_e = x.copy(), e
    trace = TrainingTrace()
    trace.append(TraceRecord(0, e, anneal.temperature(0), True,
                             evaluate(space.expand(x)) if evaluate and config.eval_every else None))
    m = min(config.subset, space.size)
    for n in range(config.iterations):
        coords = rng.choice(space.size, size=m, replace=False) if m < space.size else range(m)
        grad = kw_gradient(f, x, kw.c(n), coords, space)
        cand = propose(x, grad, kw.a(n), space)
        e_new = f(cand)
        T = anneal.temperature(n)
        if config.mode == "sa":
            ok = sa_accept(e, e_new, T, anneal.k, rng)
        else:
            ok = e_new <= e
        if ok:
            x, e = cand, e_new
        if e < best_e:
            best_x, best_e = x.copy(), e
        if check_constraints and not space.satisfied(space.expand(x)):
            raise AssertionError(f"constraints violated at iteration {n + 1}")
        acc = None
        if evaluate and config.eval_every and (n + 1) % config.eval_every == 0:
            acc = evaluate(space.expand(x))
        trace.append(TraceRecord(n + 1, e, T, ok, acc))
    return space.to_table(best_x), trace
