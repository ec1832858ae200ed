"""Flat dotted-key configuration.

Config files are plain text, one ``key=value`` per line, ``#`` comments
allowed. CLI ``--set key=value`` flags override file values, and the
REGBANK_SEED environment variable overrides the seed last.
"""

from __future__ import annotations

import os
from pathlib import Path

from .errors import ConfigError

DEFAULTS: dict[str, object] = {
    "seed": 42,
    "system": "bor_chi2",
    "workers": 1,

    "features.win_ms": 50.0,
    "features.overlap_ms": 10.0,
    "features.n_bands": 16,
    "features.f_min": 64.0,
    "features.window": "hamming",

    "forest.trees": 10,
    "forest.tests_per_node": 20000,
    "forest.max_depth": 12,
    "forest.min_samples": 20,
    "forest.subsample": 0.5,
    "forest.var_floor": 1.0,

    "matcher.trees": 200,
    "matcher.max_depth": 0,
    "matcher.min_samples_split": 2,
    "matcher.mtry": 0,
    "matcher.folds": 10,

    "descriptor.pad_factor": 5,

    "svm.c_grid": "0.1,1,10,100",
    "svm.gamma_grid": "0.5,1,2,5",
    "svm.tune_folds": 5,
    "svm.loo": False,
    "svm.tol": 1e-3,

    "bow.codebook_sizes": "50,75,100,125,150,175,200,225,250",
    "bow.levels": 2,
    "bow.kernels": "linear,rbf,chi2,hist",
    "bow.kmeans_iters": 50,

    "data.manifest": "",
    "split.train": "train",
    "split.test": "test",

    "synth.enable": False,
    "synth.classes": 5,
    "synth.events_per_class": 100,
    "synth.units_per_class": 5,
    "synth.unit_ms": 150.0,
    "synth.noise_sigma": 0.01,
    "synth.duration_jitter": 0.2,
    "synth.shared_histogram": True,
    "synth.train_fraction": 0.5,
    "synth.seed": 7,

    "report.figures": True,
}

SYSTEMS = ("bor_linear", "bor_chi2", "bor_plus", "phi_hat", "max_voting",
           "bow", "pbow")


def _parse_value(key: str, text: str) -> object:
    default = DEFAULTS[key]
    text = text.strip()
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    if isinstance(default, int):
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {text!r}") \
                from None
    if isinstance(default, float):
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {text!r}") \
                from None
    return text


def default_config() -> dict[str, object]:
    return dict(DEFAULTS)


def load_config(path: Path | None = None,
                overrides: list[str] | None = None) -> dict[str, object]:
    """Defaults, then file values, then --set overrides, then REGBANK_SEED."""
    cfg = default_config()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path} line {lineno}: expected key=value")
            key, _, value = stripped.partition("=")
            key = key.strip()
            if key not in DEFAULTS:
                raise ConfigError(f"{path} line {lineno}: unknown key {key!r}")
            cfg[key] = _parse_value(key, value)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = _parse_value(key, value)
    env_seed = os.environ.get("REGBANK_SEED")
    if env_seed is not None:
        cfg["seed"] = _parse_value("seed", env_seed)
    if cfg["system"] not in SYSTEMS:
        raise ConfigError(f"unknown system {cfg['system']!r}; "
                          f"choose one of {', '.join(SYSTEMS)}")
    return cfg


def parse_number_list(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


def parse_name_list(text: str) -> list[str]:
    return [v.strip() for v in str(text).split(",") if v.strip()]
