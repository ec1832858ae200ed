"""Versioned, checksummed model bundles.

A bundle is a JSON document ``{format, version, sha256, payload}`` where the
checksum covers the canonical serialization of the payload (sorted keys,
compact separators). Floats survive the round-trip bit-exactly because JSON
encoding uses the shortest representation that parses back to the same
double, so save -> load -> save reproduces identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .baselines import Codebook
from .descriptor import NormalizationStats
from .errors import CorruptBundle, VersionMismatch
from .features import FeatureConfig
from .matcher import FoldedMatchers, MatcherModel
from .regforest import RegressorForest
from .svm import SvmModel

FORMAT_NAME = "regbank-bundle"
FORMAT_VERSION = 1

_COMPONENT_CODECS = {
    "bank": (
        lambda v: [f.to_dict() for f in v],
        lambda d: [RegressorForest.from_dict(f) for f in d],
    ),
    "matcher": (lambda v: v.to_dict(), MatcherModel.from_dict),
    "folded_matchers": (lambda v: v.to_dict(), FoldedMatchers.from_dict),
    "normalizer": (lambda v: v.to_dict(), NormalizationStats.from_dict),
    "svm": (lambda v: v.to_dict(), SvmModel.from_dict),
    "codebook": (lambda v: v.to_dict(), Codebook.from_dict),
}


def _canonical(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"),
                      allow_nan=False)


def _feature_config_to_dict(cfg: FeatureConfig) -> dict:
    return {"win_ms": cfg.win_ms, "overlap_ms": cfg.overlap_ms,
            "n_bands": cfg.n_bands, "f_min": cfg.f_min, "window": cfg.window}


def _feature_config_from_dict(d: dict) -> FeatureConfig:
    return FeatureConfig(**d)


def save_bundle(path: Path, components: dict) -> None:
    """Serialize a component dict; see load_bundle for the inverse.

    Recognized keys: feature_config, classes, class_names, config, system,
    bow_levels, plus the model components bank / matcher / folded_matchers /
    normalizer / svm / codebook. Unknown keys must already be JSON-ready.
    """
    payload: dict = {}
    for key, value in components.items():
        if value is None:
            continue
        if key == "feature_config":
            payload[key] = _feature_config_to_dict(value)
        elif key in _COMPONENT_CODECS:
            payload[key] = _COMPONENT_CODECS[key][0](value)
        else:
            payload[key] = value
    canonical = _canonical(payload)
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "payload": payload,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")))


def load_bundle(path: Path) -> dict:
    """Parse, verify, and reconstruct model objects from a bundle file."""
    path = Path(path)
    if not path.exists():
        raise CorruptBundle(f"bundle not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptBundle(f"{path}: cannot parse bundle ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise CorruptBundle(f"{path}: not a {FORMAT_NAME} file")
    if doc.get("version") != FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: bundle version {doc.get('version')} != "
            f"supported {FORMAT_VERSION}")
    payload = doc.get("payload")
    digest = hashlib.sha256(_canonical(payload).encode()).hexdigest()
    if digest != doc.get("sha256"):
        raise CorruptBundle(f"{path}: checksum mismatch")
    components: dict = {}
    for key, value in payload.items():
        if key == "feature_config":
            components[key] = _feature_config_from_dict(value)
        elif key in _COMPONENT_CODECS:
            components[key] = _COMPONENT_CODECS[key][1](value)
        else:
            components[key] = value
    return components
