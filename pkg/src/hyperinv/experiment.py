"""Run configuration and the glue between data, training and analysis.

A run config is a nested dict (read from TOML by the CLI). Every section is
optional; missing keys fall back to ``DEFAULTS``.
"""
from __future__ import annotations

import copy
import logging

import numpy as np

from .data import SYNTHETIC_FAMILIES, TransformFamily, glyph_splits, idx_splits
from .data.datasets import N_CLASSES
from .rng import derive_seed
from .training import (
    CONTRASTIVE,
    DOWNSTREAM,
    PRETRAIN,
    TrainConfig,
    pretrain_contrastive,
    pretrain_multitask,
    run_downstream_cell,
    synthetic_tasks,
    train_mtl_baseline,
)

log = logging.getLogger(__name__)

DEFAULTS = {
    "seed": 0,
    "data": {  # pre-training corpus
        "source": "glyph",  # glyph | idx
        "alphabet": "source",  # glyph alphabet
        "name": "mnist",  # IDX dataset directory name
        "data_dir": "",
        "limit": 0,
        "n_train_per_class": 600,
        "n_test_per_class": 20,
    },
    "downstream_data": {
        "source": "glyph",
        "alphabet": "target",
        "name": "kmnist",
        "data_dir": "",
        "limit": 0,
        "n_train_per_class": 220,
        "n_test_per_class": 50,
    },
    "pretrain": {"model": "hyper", "hidden": 40, "activation": "relu", "augment": True},
    "pretrain_train": {},  # TrainConfig overrides
    "downstream": {"tasks": ["digit", "rotation"], "n_per_class": [10, 20, 50, 100, 200],
                   "seeds": [0, 1, 2, 3, 4]},
    "downstream_train": {},
    "measure": {"n_images": 200, "n_aug": 2, "points": 11},
    "sweep": {"task": "digit", "n_per_class": 50, "points": 11},
    "sweep_train": {},
    "bound": {"task": "digit", "n_per_class": 10, "trials": 20, "delta": 0.05, "levels": 2},
}

SECTIONS = {k for k, v in DEFAULTS.items() if isinstance(v, dict)}
TRAIN_SECTIONS = ("pretrain_train", "downstream_train", "sweep_train")


class ConfigError(ValueError):
    def __init__(self, message, section=None, key=None):
        super().__init__(message)
        self.section = section
        self.key = key


def merge_config(user):
    """DEFAULTS overlaid with ``user``; unknown sections or keys raise ConfigError."""
    cfg = copy.deepcopy(DEFAULTS)
    for key, value in user.items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown top-level key {key!r}", key, None)
        if key in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"[{key}] must be a table", key, None)
            if key in TRAIN_SECTIONS:
                known = set(TrainConfig.__dataclass_fields__)
            else:
                known = set(DEFAULTS[key])
            for k in value:
                if k not in known:
                    raise ConfigError(f"unknown field {k!r} in [{key}]; expected one of {sorted(known)}", key, k)
            cfg[key].update(value)
        else:
            cfg[key] = value
    return cfg


def train_config(cfg, section):
    model = cfg["pretrain"]["model"]
    if section == "pretrain_train":
        base = CONTRASTIVE if model == "contrastive" else PRETRAIN
    elif section == "sweep_train":
        base = train_config(cfg, "downstream_train")
    else:
        base = DOWNSTREAM
    try:
        return base.but(**cfg[section])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}", section, None) from None


def load_splits(section_cfg, seed):
    """(train, test) LabeledDatasets for a data section."""
    src = section_cfg["source"]
    if src == "glyph":
        return glyph_splits(section_cfg["alphabet"], section_cfg["n_train_per_class"],
                            section_cfg["n_test_per_class"], seed)
    if src == "idx":
        return idx_splits(section_cfg["name"], seed, section_cfg["data_dir"] or None,
                          section_cfg["limit"] or None)
    raise ConfigError(f"unknown data source {src!r}; expected 'glyph' or 'idx'", "data", "source")


def pretrain_data(cfg):
    return load_splits(cfg["data"], derive_seed(cfg["seed"], "data", "pretrain") % 2 ** 31)


def downstream_data(cfg):
    return load_splits(cfg["downstream_data"], derive_seed(cfg["seed"], "data", "downstream") % 2 ** 31)


def run_pretrain(cfg, train=None, model=None):
    """Pre-train the configured model kind on the pre-training corpus."""
    train = train if train is not None else pretrain_data(cfg)[0]
    model = model or cfg["pretrain"]["model"]
    pcfg = train_config(cfg, "pretrain_train").but(seed=cfg["seed"])
    p = cfg["pretrain"]
    if model == "hyper":
        return pretrain_multitask(synthetic_tasks(train), pcfg, hidden=p["hidden"], activation=p["activation"],
                                  augment=p["augment"])
    if model == "mtl":
        return train_mtl_baseline(synthetic_tasks(train), pcfg, augment=p["augment"])
    if model == "contrastive":
        return pretrain_contrastive(train.images, pcfg, hidden=p["hidden"], activation=p["activation"])
    raise ConfigError(f"unknown model kind {model!r}; expected hyper, mtl or contrastive", "pretrain", "model")


def run_downstream_grid(cfg, bundle, data=None, baseline=None, on_result=None, tasks=None, ns=None, seeds=None):
    """Every (task, N, seed) cell; returns {task: [DownstreamResult, ...]}."""
    train, test = data if data is not None else downstream_data(cfg)
    d = cfg["downstream"]
    dcfg = train_config(cfg, "downstream_train")
    out = {}
    for task in tasks or d["tasks"]:
        if task not in N_CLASSES:
            raise ConfigError(f"unknown downstream task {task!r}", "downstream", "tasks")
        out[task] = []
        for n in ns or d["n_per_class"]:
            for seed in seeds if seeds is not None else d["seeds"]:
                r = run_downstream_cell(bundle, train, test, task, N_CLASSES[task], n, dcfg.but(seed=seed),
                                        baseline=baseline)
                log.info("%s N=%d seed=%d i*=%s", task, n, seed, np.round(r.descriptor, 3).tolist())
                out[task].append(r)
                if on_result:
                    on_result(r)
    return out


def measure_families(bundle):
    """Transform families matching the bundle's descriptor components."""
    if bundle.config.get("objective") == "nt-xent":
        return [TransformFamily("ventral"), TransformFamily("dorsal")]
    return list(SYNTHETIC_FAMILIES)
