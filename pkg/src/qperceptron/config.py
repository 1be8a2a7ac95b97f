"""Experiment configuration: JSON schema, defaults and preset lookup."""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ConfigError

PRESETS = ("iris", "wine", "zoo", "mnist5", "hopfield3x3", "rbm-iris", "ae-iris", "cnn-bas",
           "grover-onedot")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_BITS = {"type": "array", "items": {"type": "array", "items": {"enum": [0, 1]}}, "minItems": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "dataset"],
    "properties": {
        "name": {"type": "string"},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["shallow", "hopfield", "rbm", "autoencoder", "cnn"]},
                "shape": {"type": "object"},
            },
        },
        "dataset": {
            "type": "object",
            "required": ["source"],
            "properties": {
                "source": {"enum": ["uci", "bars_and_stripes", "one_dot", "stripes", "mnist",
                                    "table"]},
                "name": {"enum": ["iris", "wine", "zoo"]},
                "path": {"type": ["string", "null"]},
                "train_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "ks": {"oneOf": [{"type": "integer", "minimum": 0},
                                 {"type": "array", "items": {"type": "integer", "minimum": 0}}]},
                "columns": {"type": ["array", "null"], "items": {"type": "string"}},
                "target": {"enum": ["class", "reconstruct"]},
                "n": {"type": "integer", "minimum": 2},
                "side": {"type": "integer", "minimum": 1},
                "rows": {"type": "integer", "minimum": 1},
                "patterns": _BITS,
                "corrupted": {"type": "boolean"},
                "images": {"type": ["string", "null"]},
                "labels": {"type": ["string", "null"]},
                "classes": {"type": "array", "items": {"type": "integer"}, "minItems": 2},
                "train": {"type": "integer", "minimum": 1},
                "test": {"type": "integer", "minimum": 1},
                "X": _BITS,
                "Y": _BITS,
                "balance": {"type": "boolean"},
            },
        },
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "iterations": {"type": "integer", "minimum": 1},
                "subset": {"type": "integer", "minimum": 1},
                "mode": {"enum": ["sa", "descent"]},
                "eval_every": {"type": "integer", "minimum": 0},
                "init_low": _NUM,
                "init_high": _NUM,
                "kw": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"a0": _POS, "c0": _POS, "alpha": {"type": "number", "minimum": 0},
                                   "gamma": {"type": "number", "minimum": 0}},
                },
                "anneal": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"t0": _POS, "beta": {"type": "number", "exclusiveMinimum": 0,
                                                        "exclusiveMaximum": 1}, "k": _POS},
                },
            },
        },
        "seeds": {"oneOf": [{"type": "integer", "minimum": 1},
                            {"type": "array", "items": {"type": "integer", "minimum": 0},
                             "minItems": 1}]},
        "backend": {"enum": ["exact", "shots", "statevector"]},
        "shots": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
        "init_model": {"type": ["string", "null"]},
        "hopfield": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_iters": {"type": "integer", "minimum": 1},
                "mode": {"enum": ["sample", "argmax"]},
                "runs": {"type": "integer", "minimum": 1},
                "probes": {"oneOf": [{"enum": ["stored", "corrupted"]}, _BITS]},
            },
        },
        "grover": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "iterations": {"type": "integer", "minimum": 0},
                "shots": {"type": "integer", "minimum": 0},
                "marked_output": {"type": "integer", "minimum": 0},
            },
        },
    },
}

DEFAULTS = {
    "name": "experiment",
    "model": {"shape": {}},
    "optimizer": {
        "iterations": 2000,
        "subset": 8,
        "mode": "sa",
        "eval_every": 0,
        "init_low": 0.05,
        "init_high": 0.5,
        "kw": {"a0": 1.0, "c0": 0.05, "alpha": 0.602, "gamma": 0.101},
        "anneal": {"t0": 0.1, "beta": 0.995, "k": 1.0},
    },
    "seeds": [0],
    "backend": "exact",
    "shots": 4096,
    "out": "runs",
    "init_model": None,
    "hopfield": {"max_iters": 5, "mode": "sample", "runs": 1, "probes": "corrupted"},
    "grover": {"iterations": 1, "shots": 4096, "marked_output": 0},
}

DATASET_DEFAULTS = {
    "uci": {"name": "iris", "path": None, "train_fraction": 0.8, "ks": 3, "columns": None,
            "target": "class", "balance": False},
    "bars_and_stripes": {"n": 3, "balance": False},
    "one_dot": {"side": 2, "balance": False},
    "stripes": {"rows": 3, "patterns": [[1, 0, 1], [0, 1, 0]], "corrupted": True,
                "balance": False},
    "mnist": {"images": None, "labels": None, "classes": [0, 1, 2, 3, 4], "train": 4500,
              "test": 500, "balance": False},
    "table": {"balance": False},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(cfg: dict) -> None:
    """Raise ConfigError naming every offending field."""
    validator = jsonschema.Draft7Validator(SCHEMA)
    problems = []
    for err in sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path)):
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        problems.append(f"{where}: {err.message}")
    if not problems:
        ds = cfg["dataset"]
        if ds["source"] == "table" and ("X" not in ds or "Y" not in ds):
            problems.append("dataset: table source needs X and Y")
        opt = cfg.get("optimizer", {})
        if opt.get("init_low", 0) > opt.get("init_high", 1):
            problems.append("optimizer.init_low: must not exceed init_high")
    if problems:
        raise ConfigError(problems)


def resolve(cfg: dict) -> dict:
    """Validate, then fill every default so the result is self-describing."""
    if not isinstance(cfg, dict):
        raise ConfigError(["<root>: config must be a JSON object"])
    validate(cfg)
    full = _merge(DEFAULTS, cfg)
    full["dataset"] = _merge(DATASET_DEFAULTS[cfg["dataset"]["source"]], cfg["dataset"])
    if isinstance(full["seeds"], int):
        full["seeds"] = list(range(full["seeds"]))
    validate(full)
    return full


def load(path_or_name: str | Path) -> dict:
    """Read a config file, or a shipped preset by name."""
    text = None
    if str(path_or_name) in PRESETS and not Path(path_or_name).exists():
        text = resources.files("qperceptron.presets").joinpath(f"{path_or_name}.json").read_text()
    else:
        path = Path(path_or_name)
        if not path.exists():
            raise FileNotFoundError(f"config not found: {path}")
        text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<root>: not valid JSON ({exc})"]) from exc
    return resolve(raw)
