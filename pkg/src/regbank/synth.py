"""Synthetic event generator for end-to-end verification.

Every class is an ordered sequence of sound units (tones and narrow-band
noise bursts). In shared-histogram mode all classes draw on the same unit
multiset but in different orders, so any order-blind histogram encoding
sees near-identical events while the temporal structure fully separates
the classes. Events get per-unit duration jitter and additive white noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import DatasetManifest, ManifestRow, save_manifest, write_wav
from .features import Waveform


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 5
    events_per_class: int = 100
    units_per_class: int = 5
    unit_ms: float = 150.0
    noise_sigma: float = 0.01
    duration_jitter: float = 0.2
    shared_histogram: bool = True
    sample_rate: int = 16000
    train_fraction: float = 0.5


@dataclass
class SynthDataset:
    manifest: DatasetManifest
    waveforms: dict[str, Waveform]
    class_orders: list[list[int]]


def _unit_frequencies(n_units: int) -> np.ndarray:
    if n_units == 1:
        return np.asarray([800.0])
    return np.geomspace(300.0, 3200.0, n_units)


def _unit_waveform(unit: int, freq: float, n_samples: int, sample_rate: int,
                   seed: int) -> np.ndarray:
    """Deterministic unit signal: tones on even units, noise bands on odd."""
    t = np.arange(n_samples) / sample_rate
    rng = np.random.default_rng([seed, 7, unit, n_samples])
    if unit % 2 == 0:
        phase = rng.uniform(0, 2 * np.pi, size=2)
        x = 0.30 * np.sin(2 * np.pi * freq * t + phase[0]) \
            + 0.12 * np.sin(2 * np.pi * 2 * freq * t + phase[1])
    else:
        noise = rng.normal(size=n_samples)
        spec = np.fft.rfft(noise)
        freqs = np.fft.rfftfreq(n_samples, 1.0 / sample_rate)
        band = (freqs >= freq * 0.8) & (freqs <= freq * 1.25)
        spec[~band] = 0.0
        x = np.fft.irfft(spec, n=n_samples)
        rms = np.sqrt(np.mean(x ** 2))
        x = 0.25 * x / rms if rms > 0 else x
    return x


def _distinct_orders(n_units: int, n_classes: int,
                     rng: np.random.Generator) -> list[list[int]]:
    orders: list[list[int]] = []
    seen = set()
    while len(orders) < n_classes:
        cand = tuple(int(v) for v in rng.permutation(n_units))
        if cand not in seen:
            seen.add(cand)
            orders.append(list(cand))
    return orders


def class_unit_orders(spec: SynthSpec, seed: int) -> list[list[int]]:
    """Per-class unit index sequence.

    Shared-histogram mode permutes one shared unit set; otherwise each
    class owns a disjoint block of units in fixed order.
    """
    if spec.shared_histogram:
        rng = np.random.default_rng([seed, 1])
        return _distinct_orders(spec.units_per_class, spec.n_classes, rng)
    return [
        list(range(c * spec.units_per_class, (c + 1) * spec.units_per_class))
        for c in range(spec.n_classes)
    ]


def class_template(spec: SynthSpec, seed: int, class_index: int) -> Waveform:
    """Noise-free, jitter-free rendering of one class's unit sequence."""
    orders = class_unit_orders(spec, seed)
    n_units_total = (spec.units_per_class if spec.shared_histogram
                     else spec.units_per_class * spec.n_classes)
    freqs = _unit_frequencies(n_units_total)
    nominal = int(round(spec.unit_ms * spec.sample_rate / 1000.0))
    parts = [
        _unit_waveform(u, float(freqs[u]), nominal, spec.sample_rate, seed)
        for u in orders[class_index]
    ]
    return Waveform(samples=np.concatenate(parts),
                    sample_rate=spec.sample_rate)


def synth_dataset(spec: SynthSpec, seed: int = 0) -> SynthDataset:
    """Generate events, a manifest with a stratified train/test split,
    and the waveforms keyed by manifest path."""
    if spec.n_classes < 2:
        raise ValueError("need at least two classes")
    orders = class_unit_orders(spec, seed)
    n_units_total = (spec.units_per_class if spec.shared_histogram
                     else spec.units_per_class * spec.n_classes)
    freqs = _unit_frequencies(n_units_total)
    nominal = int(round(spec.unit_ms * spec.sample_rate / 1000.0))

    rows: list[ManifestRow] = []
    waveforms: dict[str, Waveform] = {}
    for c in range(spec.n_classes):
        class_name = f"c{c:02d}"
        split_rng = np.random.default_rng([seed, 2, c])
        order_of_events = split_rng.permutation(spec.events_per_class)
        n_train = int(round(spec.train_fraction * spec.events_per_class))
        split_of = {int(e): ("train" if rank < n_train else "test")
                    for rank, e in enumerate(order_of_events)}
        for e in range(spec.events_per_class):
            rng = np.random.default_rng([seed, 3, c, e])
            parts = []
            for u in orders[c]:
                jitter = spec.duration_jitter * rng.uniform(-1.0, 1.0)
                n_samples = max(2, int(round(nominal * (1.0 + jitter))))
                parts.append(_unit_waveform(u, float(freqs[u]), n_samples,
                                            spec.sample_rate, seed))
            samples = np.concatenate(parts)
            if spec.noise_sigma > 0:
                samples = samples + rng.normal(0.0, spec.noise_sigma,
                                               size=len(samples))
            event_id = f"{class_name}_e{e:04d}"
            path = f"wav/{event_id}.wav"
            waveforms[path] = Waveform(samples=samples,
                                       sample_rate=spec.sample_rate)
            rows.append(ManifestRow(
                path=path, onset_s=0.0,
                offset_s=len(samples) / spec.sample_rate,
                class_name=class_name, split=split_of[e]))
    manifest = DatasetManifest(rows=rows)
    return SynthDataset(manifest=manifest, waveforms=waveforms,
                        class_orders=orders)


def write_synth_dataset(ds: SynthDataset, out_dir: Path) -> Path:
    """Materialize waveforms and manifest on disk; returns the manifest path."""
    out_dir = Path(out_dir)
    for path, w in ds.waveforms.items():
        write_wav(out_dir / path, w)
    manifest_path = out_dir / "manifest.csv"
    ds.manifest.base_dir = out_dir
    save_manifest(ds.manifest, manifest_path)
    return manifest_path
