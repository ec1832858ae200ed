"""Shared fixtures: a small shared-histogram synthetic run configuration."""

import pytest

from regbank.config import default_config


def tiny_config(**extra):
    """Config sized for seconds-long end-to-end runs."""
    cfg = default_config()
    cfg.update({
        "synth.enable": True,
        "synth.classes": 3,
        "synth.events_per_class": 8,
        "synth.units_per_class": 3,
        "synth.unit_ms": 90.0,
        "synth.noise_sigma": 0.01,
        "forest.trees": 3,
        "forest.tests_per_node": 40,
        "forest.max_depth": 6,
        "forest.min_samples": 6,
        "matcher.trees": 8,
        "matcher.folds": 2,
        "svm.c_grid": "1,10",
        "svm.gamma_grid": "1",
        "svm.tune_folds": 2,
        "bow.codebook_sizes": "12",
        "bow.kmeans_iters": 15,
    })
    cfg.update(extra)
    return cfg


@pytest.fixture
def small_cfg():
    return tiny_config()
