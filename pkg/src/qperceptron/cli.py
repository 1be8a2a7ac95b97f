"""Command line harness: config-driven training, evaluation, recall and generative runs.

Every subcommand writes the resolved config next to its outputs, so a run is
reproducible from (resolved_config.json, seed) alone.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import datasets as D
from . import models
from .circuitry import ParameterTable, load_model, save_model
from .errors import ConfigError, ContractError, ResourceError
from .grover import generative_sample
from .optimizer import AnnealSchedule, KWSchedule, TrainConfig, train
from .sampler import (LossFunction, NetworkProgram, accuracy, predict, shot_marginals,
                      statevector_marginals)


@dataclass
class Split:
    X: np.ndarray
    Y: np.ndarray
    name: str


@dataclass
class Data:
    train: Split
    test: Split | None
    classes: list[str] = field(default_factory=list)
    encoder: dict = field(default_factory=dict)
    metric: str = "accuracy"


def _bundled(name: str) -> str:
    return str(resources.files("qperceptron").joinpath("data", name))


def load_data(ds: dict, rng: np.random.Generator, encoder: dict | None = None) -> Data:
    """Materialise the configured dataset; ``rng`` drives splitting and encoder fitting.

    A stored ``encoder`` spec (from a model file) replaces refitting for UCI data.
    """
    src = ds["source"]
    if src == "uci":
        raw = D.load_uci(ds["name"], ds["train_fraction"], rng, ds["path"])
        cols = ds["columns"] or list(raw.features)
        ks = ds["ks"] if isinstance(ds["ks"], list) else [ds["ks"]] * len(cols)
        if encoder is not None:
            enc = D.FeatureEncoder.from_json(encoder)
            idx = [raw.features.index(c) for c in enc.columns]
            n = len(raw.classes)
            tr = D.EncodedDataset(enc.encode(raw.X_train[:, idx]), D.one_hot(raw.y_train, n),
                                  "train", encoder, raw.classes)
            te = D.EncodedDataset(enc.encode(raw.X_test[:, idx]), D.one_hot(raw.y_test, n),
                                  "test", encoder, raw.classes)
        else:
            tr, te = D.encode_split(raw, ks, rng, cols)
        if ds["target"] == "reconstruct":
            return Data(Split(tr.X, tr.X, "train"), Split(te.X, te.X, "test"), [], tr.encoder,
                        "mse")
        return Data(Split(tr.X, tr.Y, "train"), Split(te.X, te.Y, "test"), tr.classes,
                    tr.encoder)
    if src == "mnist":
        imgs, labs = D.load_mnist(ds["images"] or _bundled("mnist04-images-idx3-ubyte.gz"),
                                  ds["labels"] or _bundled("mnist04-labels-idx1-ubyte.gz"))
        tr, te = D.mnist_prepare(imgs, labs, ds["classes"], ds["train"], ds["test"], rng)
        return Data(Split(tr.X, tr.Y, "train"), Split(te.X, te.Y, "test"), tr.classes,
                    tr.encoder)
    if src == "bars_and_stripes":
        d = D.bars_and_stripes_dataset(ds["n"])
        return Data(Split(d.X, d.Y, "all"), None, d.classes, d.encoder)
    if src == "one_dot":
        d = D.one_dot_dataset(ds["side"])
        return Data(Split(d.X, d.Y, "all"), None, d.classes, d.encoder)
    if src == "stripes":
        pats = models.stripe_patterns(ds["rows"], ds["patterns"])
        X, Y = models.hopfield_dataset(pats, ds["corrupted"])
        return Data(Split(X, Y, "all"), None, [], {"kind": "stripes", "patterns": pats}, "mse")
    X = np.asarray(ds["X"], dtype=float)
    Y = np.asarray(ds["Y"], dtype=float)
    metric = "accuracy" if Y.shape[1] == 1 or np.all(Y.sum(axis=1) == 1) else "mse"
    return Data(Split(X, Y, "all"), None, [], {"kind": "table"}, metric)


def build_topology(model: dict, data: Data):
    """Fill shape fields the dataset determines, then build the topology."""
    kind = model["kind"]
    shape = dict(model.get("shape", {}))
    n_in, n_out = data.train.X.shape[1], data.train.Y.shape[1]
    if kind == "shallow":
        shape.setdefault("inputs", n_in)
        shape.setdefault("hidden", [])
        shape.setdefault("outputs", n_out)
    elif kind == "hopfield":
        shape.setdefault("n", n_in)
    elif kind in ("rbm", "autoencoder"):
        shape.setdefault("visible", n_in)
        shape.setdefault("hidden", 2)
    model["shape"] = shape
    return models.build(kind, shape)


def _weights(Y: np.ndarray, balance: bool):
    if not balance:
        return None
    labels = Y[:, 0].astype(int) if Y.shape[1] == 1 else np.argmax(Y, axis=1)
    counts = np.bincount(labels)
    return 1.0 / counts[labels]


def marginals(prog: NetworkProgram, vec, X, cfg: dict, seed: int) -> np.ndarray:
    backend = cfg["backend"]
    if backend == "statevector":
        return statevector_marginals(prog, vec, X)
    if backend == "shots":
        return shot_marginals(prog, vec, X, cfg["shots"], seed)
    return prog.exact(vec, X)


def score(P: np.ndarray, Y: np.ndarray, metric: str) -> float:
    if metric == "mse":
        return float(np.mean((P - Y) ** 2))
    return accuracy(P, Y)


def confusion(P: np.ndarray, Y: np.ndarray) -> list[list[int]]:
    truth = Y[:, 0].astype(int) if Y.shape[1] == 1 else np.argmax(Y, axis=1)
    n = max(2, Y.shape[1])
    M = np.zeros((n, n), dtype=int)
    np.add.at(M, (truth, predict(P)), 1)
    return M.tolist()


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _prepare_out(cfg: dict, out: str | None) -> Path:
    path = Path(out or cfg["out"])
    path.mkdir(parents=True, exist_ok=True)
    _write_json(path / "resolved_config.json", cfg)
    return path


def _summary(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=float)
    return {"mean": float(arr.mean()), "std": float(arr.std()), "values": arr.tolist()}


# -- training -------------------------------------------------------------------


def fit(cfg: dict, seed: int):
    """Train one seed; returns (topology, params, trace, data, program)."""
    rng = np.random.default_rng(seed)
    data = load_data(cfg["dataset"], rng)
    model_cfg = dict(cfg["model"])
    topo = build_topology(model_cfg, data)
    cfg["model"]["shape"] = model_cfg["shape"]
    loss_backend = "exact" if cfg["backend"] == "exact" else cfg["backend"]
    loss = LossFunction(topo, (data.train.X.astype(float), data.train.Y.astype(float)),
                        loss_backend, cfg["shots"], seed,
                        weights=_weights(data.train.Y, cfg["dataset"]["balance"]))
    opt = cfg["optimizer"]
    init = None
    if cfg["init_model"]:
        _, init = load_model(cfg["init_model"])
    evaluate = None
    if opt["eval_every"] and data.test is not None:
        Xt, Yt = data.test.X.astype(float), data.test.Y.astype(float)
        evaluate = lambda v: score(marginals(loss.prog, v, Xt, cfg, seed), Yt, data.metric)  # noqa: E731
    params, trace = train(
        topo, loss, KWSchedule(**opt["kw"]), AnnealSchedule(**opt["anneal"]),
        TrainConfig(opt["iterations"], opt["subset"], opt["eval_every"], opt["mode"],
                    opt["init_low"], opt["init_high"]),
        rng=rng, evaluate=evaluate, init=init,
    )
    return topo, params, trace, data, loss.prog


def _meta(cfg: dict, seed: int, data: Data, **extra) -> dict:
    return {"seed": seed, "name": cfg["name"], "dataset": cfg["dataset"],
            "encoder": data.encoder, "classes": data.classes, "metric": data.metric,
            "backend": cfg["backend"], **extra}


def run_train(cfg: dict, out: str | None = None) -> dict:
    path = _prepare_out(cfg, out)
    per_seed = []
    for seed in cfg["seeds"]:
        topo, params, trace, data, prog = fit(cfg, seed)
        vec = prog.vector(params)
        res = {"seed": seed, "final_loss": float(trace.losses.min()),
               "train_" + data.metric: score(marginals(prog, vec, data.train.X, cfg, seed),
                                              data.train.Y, data.metric)}
        if data.test is not None:
            res["test_" + data.metric] = score(marginals(prog, vec, data.test.X, cfg, seed),
                                                data.test.Y, data.metric)
        save_model(path / f"model_seed{seed}.json", topo, params, _meta(cfg, seed, data))
        (path / f"trace_seed{seed}.csv").write_text(trace.to_csv())
        per_seed.append(res)
        print(json.dumps(res), flush=True)
    metrics = {"name": cfg["name"], "seeds": per_seed}
    for key in per_seed[0]:
        if key != "seed":
            metrics[key] = _summary([r[key] for r in per_seed])
    _write_json(path / "resolved_config.json", cfg)
    _write_json(path / "metrics.json", metrics)
    return metrics


def _read_meta(model_path) -> dict:
    return json.loads(Path(model_path).read_text()).get("meta", {})


def run_eval(model_path, cfg: dict | None = None, out: str | None = None, split: str = "test",
             seed: int | None = None) -> dict:
    """Accuracy (or reconstruction MSE) and confusion counts of a saved model."""
    topo, params = load_model(model_path)
    meta = _read_meta(model_path)
    if cfg is None:
        if "dataset" not in meta:
            raise ContractError("model file carries no dataset; pass a config")
        cfg = cfgmod.resolve({"model": {"kind": topo.kind}, "dataset": meta["dataset"],
                              "backend": meta.get("backend", "exact")})
    seed = seed if seed is not None else meta.get("seed", cfg["seeds"][0])
    enc = meta.get("encoder") if cfg["dataset"]["source"] == "uci" and meta.get("encoder") else None
    data = load_data(cfg["dataset"], np.random.default_rng(seed), enc)
    part = data.test if split == "test" and data.test is not None else data.train
    prog = NetworkProgram(topo)
    P = marginals(prog, prog.vector(params), part.X.astype(float), cfg, seed)
    res = {"model": str(model_path), "split": part.name, "n": len(part.X),
           data.metric: score(P, part.Y.astype(float), data.metric)}
    if data.metric == "accuracy":
        res["confusion"] = confusion(P, part.Y)
        res["classes"] = data.classes
    if out is not None:
        path = _prepare_out(cfg, out)
        _write_json(path / "eval_metrics.json", res)
    return res


def _model_for(cfg: dict, seed: int, model_path):
    if model_path is not None:
        topo, params = load_model(model_path)
        data = load_data(cfg["dataset"], np.random.default_rng(seed))
        return topo, params, data, NetworkProgram(topo), None
    topo, params, trace, data, prog = fit(cfg, seed)
    return topo, params, data, prog, trace


# -- recall and generative runs ---------------------------------------------------


def _probes(spec, patterns):
    if spec == "stored":
        return [list(p) for p in patterns]
    if spec == "corrupted":
        out = [list(p) for p in patterns]
        for p in patterns:
            for i in range(len(p)):
                q = list(p)
                q[i] ^= 1
                out.append(q)
        return out
    return [list(p) for p in spec]


def _nearest(probe, patterns):
    d = [sum(a != b for a, b in zip(probe, p)) for p in patterns]
    return list(patterns[int(np.argmin(d))])


def recall_run(topo, params, patterns, hcfg: dict, seed: int, prog=None):
    """Recall every probe ``runs`` times; returns (csv rows, summary dict)."""
    prog = prog or NetworkProgram(topo)
    vec = prog.vector(params)
    stored = np.asarray(patterns, dtype=float)
    P = prog.exact(vec, stored)
    fix = np.where(stored == 1, P, 1 - P).min(axis=1)
    rng = np.random.default_rng([seed, 1])
    rows, hits, trials, truncated = [], 0, 0, 0
    for pi, probe in enumerate(_probes(hcfg["probes"], patterns)):
        target = _nearest(probe, patterns)
        for run in range(hcfg["runs"]):
            traj = models.hopfield_recall(topo, params, probe, hcfg["max_iters"], hcfg["mode"],
                                          rng, prog)
            for step, state in enumerate(traj.patterns):
                rows.append([pi, "".join(map(str, probe)), run, step, "".join(map(str, state)),
                             int(traj.converged), "".join(map(str, target))])
            if probe != target:
                trials += 1
                hits += traj.converged and traj.final == target
            truncated += not traj.converged
    summary = {"seed": seed, "fixpoint_min_marginal": fix.tolist(),
               "recall_rate": hits / trials if trials else None, "truncated_runs": truncated}
    return rows, summary


def run_hopfield(cfg: dict, out: str | None = None, model_path=None) -> dict:
    path = _prepare_out(cfg, out)
    ds = cfg["dataset"]
    if ds["source"] != "stripes":
        raise ContractError("hopfield runs need the stripes dataset source")
    patterns = models.stripe_patterns(ds["rows"], ds["patterns"])
    summaries = []
    for seed in cfg["seeds"]:
        topo, params, data, prog, trace = _model_for(cfg, seed, model_path)
        if model_path is None:
            save_model(path / f"model_seed{seed}.json", topo, params, _meta(cfg, seed, data))
            (path / f"trace_seed{seed}.csv").write_text(trace.to_csv())
        rows, summary = recall_run(topo, params, patterns, cfg["hopfield"], seed, prog)
        with open(path / f"trajectories_seed{seed}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["probe_index", "probe", "run", "step", "state", "converged", "target"])
            w.writerows(rows)
        summaries.append(summary)
        print(json.dumps(summary), flush=True)
    _write_json(path / "hopfield_summary.json", {"seeds": summaries})
    return {"seeds": summaries}


def run_grover(cfg: dict, out: str | None = None, model_path=None) -> dict:
    path = _prepare_out(cfg, out)
    g = cfg["grover"]
    summaries = []
    for seed in cfg["seeds"]:
        topo, params, data, prog, trace = _model_for(cfg, seed, model_path)
        if model_path is None:
            save_model(path / f"model_seed{seed}.json", topo, params, _meta(cfg, seed, data))
            (path / f"trace_seed{seed}.csv").write_text(trace.to_csv())
        res = generative_sample(topo, params, g["iterations"], g["shots"],
                                np.random.default_rng(seed), g["marked_output"])
        (path / f"grover_seed{seed}.csv").write_text(res.to_csv())
        positives = [row for row, y in zip(data.train.X.astype(int).tolist(),
                                           data.train.Y[:, g["marked_output"]]) if y == 1]
        mass = res.mass(positives) if positives else 0.0
        share = len(positives) / len(res.probabilities)
        summary = {"seed": seed, "positive_patterns": len(positives), "positive_mass": mass,
                   "uniform_share": share, "ratio": mass / share if share else None}
        summaries.append(summary)
        print(json.dumps(summary), flush=True)
    _write_json(path / "grover_summary.json", {"seeds": summaries})
    return {"seeds": summaries}


def run_encode(cfg: dict, out: str | None = None) -> dict:
    """Write the encoded train/test splits (and encoder spec) for each seed."""
    path = _prepare_out(cfg, out)
    written = []
    for seed in cfg["seeds"]:
        data = load_data(cfg["dataset"], np.random.default_rng(seed))
        doc = {"seed": seed, "encoder": data.encoder, "classes": data.classes, "splits": []}
        for part in (data.train, data.test):
            if part is not None:
                doc["splits"].append({
                    "split": part.name,
                    "X": ["".join(map(str, r)) for r in part.X.astype(int).tolist()],
                    "Y": ["".join(map(str, r)) for r in part.Y.astype(int).tolist()],
                })
        target = path / f"encoded_seed{seed}.json"
        _write_json(target, doc)
        written.append(str(target))
    return {"files": written}


# -- entry point ------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qperceptron", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("train", "eval", "hopfield", "grover", "encode"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="config file or preset name")
        s.add_argument("--seed", type=int, help="run this single seed")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--backend", choices=["exact", "shots", "statevector"])
        if name in ("eval", "hopfield", "grover"):
            s.add_argument("--model", help="saved model file")
        if name == "eval":
            s.add_argument("--split", choices=["train", "test"], default="test")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = None
        if args.config:
            cfg = cfgmod.load(args.config)
        elif args.command != "eval":
            raise ConfigError(["--config: required for this command"])
        if cfg is not None:
            if args.seed is not None:
                cfg["seeds"] = [args.seed]
            if args.backend:
                cfg["backend"] = args.backend
        if args.command == "eval":
            if not args.model:
                raise ConfigError(["--model: required for eval"])
            res = run_eval(args.model, cfg, args.out, args.split, args.seed)
            print(json.dumps(res))
        elif args.command == "train":
            run_train(cfg, args.out)
        elif args.command == "hopfield":
            run_hopfield(cfg, args.out, args.model)
        elif args.command == "grover":
            run_grover(cfg, args.out, args.model)
        else:
            run_encode(cfg, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ContractError, ResourceError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
