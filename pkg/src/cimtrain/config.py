"""Declarative experiment configs: schema validation, presets, manifests.

A config is a JSON-shaped dict validated exhaustively before any compute;
unknown or ill-typed fields fail with the exact field path. Presets bundle
the figure-reproduction recipes so `--preset fig3` and friends reproduce
the paper-trend datasets directly.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass

from .analog import CrossbarConfig
from .dataio import SyntheticSpec
from .network import ACTIVATIONS, Topology
from .numerics import Quantizer
from .training import HyperParams, TrainerKind

DATA_ROOT_ENV = "CIMTRAIN_DATA"

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


class ConfigError(ValueError):
    """Validation failure with a field-precise message."""


def _fail(path: str, msg: str):
    raise ConfigError(f"config.{path}: {msg}" if path else f"config: {msg}")


def _expect_keys(d: dict, path: str, known: dict, required: tuple = ()):
    if not isinstance(d, dict):
        _fail(path, f"expected an object, got {type(d).__name__}")
    for key in d:
        if key not in known:
            _fail(f"{path}.{key}" if path else key, "unknown field")
    for key in required:
        if key not in d:
            _fail(path, f"missing required field {key!r}")


def _expect(cond: bool, path: str, msg: str):
    if not cond:
        _fail(path, msg)


_QUANT_KEYS = {"bits": int, "range": (int, float), "mode": str}
_PRECISION_SLOTS = ("weight", "activation", "error", "gradient")

_CROSSBAR_KEYS = {
    "subarray": int, "subarray_rows": int, "subarray_cols": int,
    "adc_bits": (int, type(None)), "g_min": (int, float), "g_max": (int, float),
    "weight_bits": int, "d2d_sigma": (int, float), "c2c_sigma": (int, float),
    "wire_r": (int, float), "w_range": (int, float), "adc_range_frac": (int, float),
}

_SCHEMA = {
    "name": str,
    "topology": dict,
    "trainer": str,
    "hyperparams": dict,
    "backend": dict,
    "unit_costs": (str, dict),
    "tile_dim": int,
    "dataset": dict,
    "seeds": list,
    "sweep": dict,
    "cost_only": bool,
}


def validate_config(cfg: dict) -> dict:
    """Validate and normalize a raw config dict; returns a deep copy."""
    cfg = copy.deepcopy(cfg)
    _expect_keys(cfg, "", _SCHEMA, required=("topology", "trainer", "dataset"))
    for key, typ in _SCHEMA.items():
        if key in cfg:
            _expect(isinstance(cfg[key], typ), key,
                    f"expected {typ if isinstance(typ, type) else 'one of several types'}, "
                    f"got {type(cfg[key]).__name__}")

    topo = cfg["topology"]
    _expect_keys(topo, "topology",
                 {"layer_dims": list, "input": int, "width": int, "depth": int,
                  "classes": int, "activation": str})
    if "layer_dims" in topo:
        _expect(all(isinstance(d, int) and d >= 1 for d in topo["layer_dims"]),
                "topology.layer_dims", "all dims must be positive integers")
        _expect(len(topo["layer_dims"]) >= 2, "topology.layer_dims", "need >= 2 dims")
    else:
        for key in ("input", "width", "depth", "classes"):
            _expect(key in topo, "topology",
                    f"needs either layer_dims or input/width/depth/classes (missing {key!r})")
            _expect(topo[key] >= 1, f"topology.{key}", "must be >= 1")
    act = topo.get("activation", "relu")
    _expect(act in ACTIVATIONS, "topology.activation", f"must be one of {ACTIVATIONS}")

    _expect(cfg["trainer"] in ("bp", "dfa"), "trainer", "must be 'bp' or 'dfa'")

    hp = cfg.get("hyperparams", {})
    _expect_keys(hp, "hyperparams",
                 {"learning_rate": (int, float), "batch_size": int, "epochs": int,
                  "precisions": dict, "bp_requantize_error": bool})
    for key, lo in (("learning_rate", 0.0), ("batch_size", 1), ("epochs", 0)):
        if key in hp:
            _expect(hp[key] >= lo, f"hyperparams.{key}", f"must be >= {lo}")
    for slot, q in hp.get("precisions", {}).items():
        _expect(slot in _PRECISION_SLOTS, f"hyperparams.precisions.{slot}",
                f"must be one of {_PRECISION_SLOTS}")
        _expect_keys(q, f"hyperparams.precisions.{slot}", _QUANT_KEYS, required=("bits",))
        _expect(q["bits"] >= 1, f"hyperparams.precisions.{slot}.bits", "must be >= 1")
        if "range" in q:
            _expect(q["range"] > 0, f"hyperparams.precisions.{slot}.range", "must be > 0")
        if "mode" in q:
            _expect(q["mode"] in ("nearest", "stochastic"),
                    f"hyperparams.precisions.{slot}.mode", "must be nearest or stochastic")

    backend = cfg.get("backend", {"kind": "digital"})
    _expect_keys(backend, "backend", {"kind": str, "crossbar": dict})
    _expect(backend.get("kind", "digital") in ("digital", "analog"),
            "backend.kind", "must be 'digital' or 'analog'")
    xb = backend.get("crossbar", {})
    _expect_keys(xb, "backend.crossbar", _CROSSBAR_KEYS)
    for key, val in xb.items():
        _expect(isinstance(val, _CROSSBAR_KEYS[key]) and not isinstance(val, bool),
                f"backend.crossbar.{key}", "wrong type")
    cfg["backend"] = backend

    uc = cfg.get("unit_costs", "default-v1")
    if isinstance(uc, dict):
        _expect_keys(uc, "unit_costs", {"path": str}, required=("path",))
    if "tile_dim" in cfg:
        _expect(cfg["tile_dim"] >= 1, "tile_dim", "must be >= 1")

    ds = cfg["dataset"]
    _expect_keys(ds, "dataset",
                 {"kind": str, "root": (str, type(None)),
                  "train_images": str, "train_labels": str,
                  "test_images": str, "test_labels": str,
                  "limit_train": (int, type(None)), "limit_test": (int, type(None)),
                  "classes": int, "features": int, "samples_per_class": int,
                  "test_samples_per_class": int, "cluster_std": (int, float),
                  "seed": int},
                 required=("kind",))
    _expect(ds["kind"] in ("idx", "mnist_idx", "synthetic"), "dataset.kind",
            "must be 'idx', 'mnist_idx' or 'synthetic'")
    if ds["kind"] == "idx":
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            _expect(key in ds, "dataset", f"idx dataset requires {key!r}")

    seeds = cfg.get("seeds", [0])
    _expect(isinstance(seeds, list) and len(seeds) >= 1
            and all(isinstance(s, int) for s in seeds),
            "seeds", "must be a non-empty list of integers")
    cfg["seeds"] = seeds

    sweep = cfg.get("sweep", {"axes": []})
    _expect_keys(sweep, "sweep", {"axes": list})
    for i, axis in enumerate(sweep.get("axes", [])):
        _expect_keys(axis, f"sweep.axes[{i}]", {"param": str, "values": list},
                     required=("param", "values"))
        _expect(len(axis["values"]) >= 1, f"sweep.axes[{i}].values", "must be non-empty")
        _check_sweep_param(cfg, axis["param"], f"sweep.axes[{i}].param")
    cfg["sweep"] = sweep
    return cfg


_SWEEPABLE = {
    "trainer": ("bp", "dfa"),
    "topology.width": None,
    "topology.depth": None,
    "topology.input": None,
    "hyperparams.learning_rate": None,
    "hyperparams.batch_size": None,
    "hyperparams.epochs": None,
    "hyperparams.precisions.weight.bits": None,
    "hyperparams.precisions.activation.bits": None,
    "hyperparams.precisions.error.bits": None,
    "hyperparams.precisions.gradient.bits": None,
    "backend.crossbar.adc_bits": None,
    "backend.crossbar.subarray": None,
    "backend.crossbar.c2c_sigma": None,
    "backend.crossbar.d2d_sigma": None,
    "backend.crossbar.wire_r": None,
}


def _check_sweep_param(cfg: dict, param: str, at: str):
    if param not in _SWEEPABLE:
        _fail(at, f"unknown sweep parameter {param!r} "
                  f"(known: {', '.join(sorted(_SWEEPABLE))})")
    if param.startswith("topology.") and "layer_dims" in cfg.get("topology", {}):
        _fail(at, f"{param!r} requires the input/width/depth/classes topology form")


def apply_override(cfg: dict, param: str, value) -> dict:
    """Return a copy of cfg with one dotted sweep parameter replaced."""
    out = copy.deepcopy(cfg)
    node = out
    parts = param.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    leaf = parts[-1]
    if leaf == "bits":  # precision slots may be absent from the base config
        node.setdefault("bits", 0)
    node[leaf] = value
    return out


# ---------------------------------------------------------------------------
# resolution into runtime objects

@dataclass
class ResolvedConfig:
    raw: dict
    topology: Topology
    trainer: TrainerKind
    hyperparams: HyperParams
    backend_kind: str
    crossbar: CrossbarConfig
    unit_costs_path: str | None
    tile_dim: int
    cost_only: bool
    seeds: list[int]


def resolve_topology(cfg: dict) -> Topology:
    topo = cfg["topology"]
    if "layer_dims" in topo:
        dims = tuple(topo["layer_dims"])
    else:
        dims = (topo["input"], *([topo["width"]] * (topo["depth"] - 1)), topo["classes"])
    return Topology(dims, topo.get("activation", "relu"))


def _resolve_quantizer(q: dict | None) -> Quantizer | None:
    if q is None:
        return None
    return Quantizer(bits=q["bits"], range=float(q.get("range", 1.0)),
                     mode=q.get("mode", "nearest"))


def resolve_crossbar(cfg: dict) -> CrossbarConfig:
    xb = dict(cfg.get("backend", {}).get("crossbar", {}))
    if "subarray" in xb:
        side = xb.pop("subarray")
        xb.setdefault("subarray_rows", side)
        xb.setdefault("subarray_cols", side)
    return CrossbarConfig(**xb)


def resolve_config(cfg: dict, seed: int) -> ResolvedConfig:
    """Turn a validated config dict plus one seed into runtime objects."""
    topo = resolve_topology(cfg)
    hp_cfg = cfg.get("hyperparams", {})
    prec = hp_cfg.get("precisions", {})
    hp = HyperParams(
        learning_rate=float(hp_cfg.get("learning_rate", 0.05)),
        batch_size=int(hp_cfg.get("batch_size", 128)),
        epochs=int(hp_cfg.get("epochs", 25)),
        seed=seed,
        weight_quantizer=_resolve_quantizer(prec.get("weight")),
        activation_quantizer=_resolve_quantizer(prec.get("activation")),
        error_quantizer=_resolve_quantizer(prec.get("error")),
        gradient_quantizer=_resolve_quantizer(prec.get("gradient")),
        bp_requantize_error=bool(hp_cfg.get("bp_requantize_error", True)),
    )
    uc = cfg.get("unit_costs", "default-v1")
    uc_path = uc["path"] if isinstance(uc, dict) else None
    return ResolvedConfig(
        raw=cfg,
        topology=topo,
        trainer=TrainerKind(cfg["trainer"]),
        hyperparams=hp,
        backend_kind=cfg.get("backend", {}).get("kind", "digital"),
        crossbar=resolve_crossbar(cfg),
        unit_costs_path=uc_path,
        tile_dim=int(cfg.get("tile_dim", 1024)),
        cost_only=bool(cfg.get("cost_only", False)),
        seeds=list(cfg["seeds"]),
    )


def dataset_root(cfg: dict) -> str | None:
    root = cfg["dataset"].get("root")
    return root if root is not None else os.environ.get(DATA_ROOT_ENV)


def resolve_dataset_paths(cfg: dict) -> dict:
    """Absolute train/test IDX paths for file-backed datasets."""
    ds = cfg["dataset"]
    names = dict(MNIST_FILES) if ds["kind"] == "mnist_idx" else {
        key: ds[key] for key in MNIST_FILES
    }
    root = dataset_root(cfg)
    out = {}
    for key, name in names.items():
        path = os.path.join(root, name) if root and not os.path.isabs(name) else name
        out[key] = path
    return out


def resolve_synthetic_specs(cfg: dict) -> tuple[SyntheticSpec, SyntheticSpec]:
    ds = cfg["dataset"]
    base = dict(classes=ds.get("classes", 10), features=ds.get("features", 784),
                cluster_std=ds.get("cluster_std", 0.12), seed=ds.get("seed", 1234))
    train = SyntheticSpec(samples_per_class=ds.get("samples_per_class", 128), **base)
    test = SyntheticSpec(samples_per_class=ds.get("test_samples_per_class", 32), **base)
    return train, test


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict, dataset_files: dict | None = None) -> str:
    """Content hash over the resolved config and any input files."""
    h = hashlib.sha256()
    h.update(canonical_json(cfg).encode())
    for key in sorted(dataset_files or {}):
        h.update(key.encode())
        with open(dataset_files[key], "rb") as f:
            while chunk := f.read(1 << 20):
                h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# presets: figure-reproduction recipes

def _mnist_dataset(limit_train: int | None = None, limit_test: int | None = None) -> dict:
    return {"kind": "mnist_idx", "limit_train": limit_train, "limit_test": limit_test}


def _synth_dataset(**kw) -> dict:
    return {"kind": "synthetic", **kw}


PRESETS: dict[str, dict] = {
    # bundled example: the paper's default five layers x 1024 hidden features
    "default": {
        "name": "default",
        "topology": {"input": 784, "width": 1024, "depth": 5, "classes": 10},
        "trainer": "dfa",
        "hyperparams": {"learning_rate": 0.05, "batch_size": 128, "epochs": 3},
        "backend": {"kind": "digital"},
        "dataset": _synth_dataset(samples_per_class=96, test_samples_per_class=32,
                                  cluster_std=0.12, seed=1234),
        "seeds": [0],
    },
    # width sweep, 5 layers, 100 epochs (final-accuracy-vs-width table)
    "table1": {
        "name": "table1",
        "topology": {"input": 784, "width": 64, "depth": 5, "classes": 10},
        "trainer": "bp",
        "hyperparams": {"learning_rate": 0.05, "batch_size": 128, "epochs": 100},
        "backend": {"kind": "digital"},
        "dataset": _mnist_dataset(),
        "seeds": [0, 1, 2],
        "sweep": {"axes": [{"param": "topology.width", "values": [8, 16, 32, 64]},
                           {"param": "trainer", "values": ["bp", "dfa"]}]},
    },
    # convergence-speed comparison at depth 2 vs depth 8
    "fig2": {
        "name": "fig2",
        "topology": {"input": 784, "width": 256, "depth": 2, "classes": 10},
        "trainer": "bp",
        "hyperparams": {"learning_rate": 0.05, "batch_size": 128, "epochs": 25},
        "backend": {"kind": "digital"},
        "dataset": _mnist_dataset(),
        "seeds": [0, 1, 2],
        "sweep": {"axes": [{"param": "topology.depth", "values": [2, 8]},
                           {"param": "trainer", "values": ["bp", "dfa"]}]},
    },
    # ADC precision sweep on the analog backend (3-layer DFA)
    "fig3": {
        "name": "fig3",
        "topology": {"input": 784, "width": 64, "depth": 3, "classes": 10},
        "trainer": "dfa",
        "hyperparams": {"learning_rate": 0.05, "batch_size": 128, "epochs": 50},
        "backend": {"kind": "analog",
                    "crossbar": {"subarray": 128, "adc_bits": 4, "weight_bits": 8,
                                 "g_min": 0.01, "g_max": 1.0, "w_range": 1.0,
                                 "adc_range_frac": 0.05}},
        "dataset": _mnist_dataset(),
        "seeds": [0, 1, 2],
        "sweep": {"axes": [{"param": "backend.crossbar.adc_bits", "values": [1, 2, 3, 4]}]},
    },
    # subarray-size sweep under IR drop (3-layer DFA)
    "fig3_subarray": {
        "name": "fig3_subarray",
        "topology": {"input": 784, "width": 64, "depth": 3, "classes": 10},
        "trainer": "dfa",
        "hyperparams": {"learning_rate": 0.05, "batch_size": 128, "epochs": 20},
        "backend": {"kind": "analog",
                    "crossbar": {"subarray": 128, "adc_bits": 8, "weight_bits": 8,
                                 "g_min": 0.01, "g_max": 1.0, "w_range": 1.0,
                                 "adc_range_frac": 0.05, "wire_r": 0.001}},
        "dataset": _mnist_dataset(),
        "seeds": [0, 1],
        "sweep": {"axes": [{"param": "backend.crossbar.subarray", "values": [64, 128, 256]}]},
    },
    # gradient-precision cliff (both rules)
    "fig4_gradient": {
        "name": "fig4_gradient",
        "topology": {"input": 784, "width": 64, "depth": 3, "classes": 10},
        "trainer": "bp",
        "hyperparams": {"learning_rate": 0.05, "batch_size": 128, "epochs": 30,
                        "precisions": {"gradient": {"bits": 5, "range": 0.05}}},
        "backend": {"kind": "digital"},
        "dataset": _mnist_dataset(),
        "seeds": [0],
        "sweep": {"axes": [{"param": "hyperparams.precisions.gradient.bits",
                            "values": [3, 4, 5, 6]},
                           {"param": "trainer", "values": ["bp", "dfa"]}]},
    },
    # error-precision sweep (BP steps by bits, DFA nearly flat)
    "fig4_error": {
        "name": "fig4_error",
        "topology": {"input": 784, "width": 64, "depth": 5, "classes": 10},
        "trainer": "bp",
        "hyperparams": {"learning_rate": 0.05, "batch_size": 128, "epochs": 30,
                        "precisions": {"error": {"bits": 5, "range": 1.0}}},
        "backend": {"kind": "digital"},
        "dataset": _mnist_dataset(),
        "seeds": [0],
        "sweep": {"axes": [{"param": "hyperparams.precisions.error.bits",
                            "values": [2, 3, 4, 6]},
                           {"param": "trainer", "values": ["bp", "dfa"]}]},
    },
    # cycle-to-cycle programming-noise sweep
    "variation_c2c": {
        "name": "variation_c2c",
        "topology": {"input": 784, "width": 64, "depth": 3, "classes": 10},
        "trainer": "dfa",
        "hyperparams": {"learning_rate": 0.05, "batch_size": 128, "epochs": 40},
        "backend": {"kind": "analog",
                    "crossbar": {"subarray": 128, "adc_bits": 8, "weight_bits": 8,
                                 "adc_range_frac": 0.05, "c2c_sigma": 0.01}},
        "dataset": _mnist_dataset(),
        "seeds": [0, 1, 2],
        "sweep": {"axes": [{"param": "backend.crossbar.c2c_sigma",
                            "values": [0.01, 0.02, 0.03]},
                           {"param": "trainer", "values": ["bp", "dfa"]}]},
    },
    # static device-to-device variation sweep (absorbed by training)
    "variation_d2d": {
        "name": "variation_d2d",
        "topology": {"input": 784, "width": 64, "depth": 3, "classes": 10},
        "trainer": "dfa",
        "hyperparams": {"learning_rate": 0.05, "batch_size": 128, "epochs": 30},
        "backend": {"kind": "analog",
                    "crossbar": {"subarray": 128, "adc_bits": 8, "weight_bits": 8,
                                 "adc_range_frac": 0.05, "d2d_sigma": 0.01}},
        "dataset": _mnist_dataset(),
        "seeds": [0, 1, 2],
        "sweep": {"axes": [{"param": "backend.crossbar.d2d_sigma",
                            "values": [0.01, 0.02, 0.03, 0.04, 0.05]}]},
    },
    # total-area-vs-depth crossover (cost only, uniform width 512)
    "fig6": {
        "name": "fig6",
        "topology": {"input": 512, "width": 512, "depth": 5, "classes": 10},
        "trainer": "bp",
        "hyperparams": {"batch_size": 128, "epochs": 1},
        "backend": {"kind": "analog", "crossbar": {"subarray": 128, "adc_bits": 8}},
        "dataset": _synth_dataset(samples_per_class=128),
        "seeds": [0],
        "cost_only": True,
        "sweep": {"axes": [{"param": "topology.depth",
                            "values": [2, 3, 4, 5, 6, 7, 8, 9, 10]},
                           {"param": "trainer", "values": ["bp", "dfa"]}]},
    },
    # tile-limit step at 1024 -> 1025 hidden features (cost only)
    "fig7": {
        "name": "fig7",
        "topology": {"input": 784, "width": 1024, "depth": 5, "classes": 10},
        "trainer": "dfa",
        "hyperparams": {"batch_size": 128, "epochs": 1},
        "backend": {"kind": "analog", "crossbar": {"subarray": 128, "adc_bits": 8}},
        "dataset": _synth_dataset(samples_per_class=128),
        "seeds": [0],
        "cost_only": True,
        "sweep": {"axes": [{"param": "topology.width", "values": [1024, 1025]},
                           {"param": "trainer", "values": ["bp", "dfa"]}]},
    },
    # training-latency scaling over depth (cost only)
    "fig9": {
        "name": "fig9",
        "topology": {"input": 784, "width": 1024, "depth": 10, "classes": 10},
        "trainer": "bp",
        "hyperparams": {"batch_size": 128, "epochs": 1},
        "backend": {"kind": "analog", "crossbar": {"subarray": 128, "adc_bits": 8}},
        "dataset": _synth_dataset(samples_per_class=128),
        "seeds": [0],
        "cost_only": True,
        "sweep": {"axes": [{"param": "topology.depth", "values": [2, 4, 6, 8, 10]},
                           {"param": "trainer", "values": ["bp", "dfa"]}]},
    },
}


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r} (known: {', '.join(sorted(PRESETS))})")
    return validate_config(copy.deepcopy(PRESETS[name]))
