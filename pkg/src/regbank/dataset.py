"""Dataset ingestion: WAV reading, resampling, and manifest handling.

Manifests are comma-delimited with a header row::

    path,onset_s,offset_s,class,split

The split column is optional and defaults to "train". An empty class field
marks an unlabeled event (allowed at predict time). Paths are resolved
relative to the manifest location. All audio is converted to mono and
resampled to 16 kHz before feature extraction.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInterval, MissingFile, ParseError, RegbankError
from .features import Waveform

TARGET_SAMPLE_RATE = 16000

MANIFEST_HEADER = ["path", "onset_s", "offset_s", "class", "split"]


@dataclass
class ManifestRow:
    path: str
    onset_s: float
    offset_s: float
    class_name: str | None
    split: str = "train"


@dataclass
class DatasetManifest:
    rows: list[ManifestRow]
    base_dir: Path = Path(".")

    def __len__(self) -> int:
        return len(self.rows)

    def class_names(self) -> list[str]:
        return sorted({r.class_name for r in self.rows
                       if r.class_name is not None})

    def class_to_id(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.class_names())}

    def split_rows(self, split: str) -> list[tuple[int, ManifestRow]]:
        return [(i, r) for i, r in enumerate(self.rows) if r.split == split]


@dataclass
class EventInstance:
    """One audio event, backed by either a waveform or precomputed features."""

    event_id: str
    label: int | None
    waveform: Waveform | None = None
    features: np.ndarray | None = None

    def __post_init__(self):
        if (self.waveform is None) == (self.features is None):
            raise ValueError(
                "exactly one of waveform/features must be present")


def read_wav(path: Path) -> Waveform:
    """16-bit PCM WAV to float samples in [-1, 1]; channels are averaged."""
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getsampwidth() != 2:
                raise RegbankError(
                    f"{path}: only 16-bit PCM WAV is supported")
            n_channels = wf.getnchannels()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except FileNotFoundError:
        raise MissingFile(f"audio file not found: {path}") from None
    except wave.Error as exc:
        raise RegbankError(f"{path}: {exc}") from None
    samples = np.frombuffer(raw, dtype=np.int16).astype(np.float64) / 32768.0
    if n_channels > 1:
        samples = samples.reshape(-1, n_channels).mean(axis=1)
    return Waveform(samples=samples, sample_rate=rate)


def write_wav(path: Path, w: Waveform) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pcm = np.clip(np.round(w.samples * 32767.0), -32768, 32767).astype(np.int16)
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(w.sample_rate)
        wf.writeframes(pcm.tobytes())


def resample(w: Waveform, target_rate: int = TARGET_SAMPLE_RATE) -> Waveform:
    """Linear-interpolation resampling; identity when rates already match."""
    if w.sample_rate == target_rate:
        return w
    duration = len(w.samples) / w.sample_rate
    new_len = int(round(duration * target_rate))
    positions = np.arange(new_len) * (w.sample_rate / target_rate)
    resampled = np.interp(positions, np.arange(len(w.samples)), w.samples)
    return Waveform(samples=resampled, sample_rate=target_rate)


def load_manifest(path: Path, check_files: bool = True) -> DatasetManifest:
    """Parse and validate a manifest file."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"manifest not found: {path}")
    rows: list[ManifestRow] = []
    lines = path.read_text().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty manifest")
    header = [h.strip() for h in lines[0].split(",")]
    if header[:4] != MANIFEST_HEADER[:4]:
        raise ParseError(
            f"{path} line 1: header must start with "
            f"{','.join(MANIFEST_HEADER[:4])}")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (4, 5):
            raise ParseError(f"{path} line {lineno}: expected 4 or 5 fields, "
                             f"got {len(parts)}")
        try:
            onset = float(parts[1])
            offset = float(parts[2])
        except ValueError:
            raise ParseError(
                f"{path} line {lineno}: onset/offset must be numeric"
            ) from None
        if onset >= offset:
            raise InvalidInterval(
                f"{path} line {lineno}: onset {onset} >= offset {offset}")
        class_name = parts[3] or None
        split = parts[4] if len(parts) == 5 and parts[4] else "train"
        rows.append(ManifestRow(parts[0], onset, offset, class_name, split))
    manifest = DatasetManifest(rows=rows, base_dir=path.parent)
    if check_files:
        for i, row in enumerate(manifest.rows):
            if not (manifest.base_dir / row.path).exists():
                raise MissingFile(
                    f"{path} row {i + 1}: audio file not found: {row.path}")
    return manifest


def save_manifest(manifest: DatasetManifest, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(MANIFEST_HEADER)]
    for r in manifest.rows:
        lines.append(",".join([
            r.path, f"{r.onset_s:g}", f"{r.offset_s:g}",
            r.class_name or "", r.split,
        ]))
    path.write_text("\n".join(lines) + "\n")


def load_event_waveform(manifest: DatasetManifest, row: ManifestRow,
                        waveforms: dict[str, Waveform] | None = None,
                        ) -> Waveform:
    """Event slice of the referenced audio, resampled to 16 kHz mono.

    ``waveforms`` lets callers supply in-memory audio keyed by the row path,
    which the synthetic generator uses to avoid disk round-trips.
    """
    if waveforms is not None and row.path in waveforms:
        w = waveforms[row.path]
    else:
        w = read_wav(manifest.base_dir / row.path)
    w = resample(w)
    a = int(round(row.onset_s * w.sample_rate))
    b = int(round(row.offset_s * w.sample_rate))
    a = max(0, a)
    b = min(len(w.samples), b)
    if b <= a:
        raise InvalidInterval(
            f"{row.path}: interval [{row.onset_s}, {row.offset_s}]s empty "
            "after clipping")
    return Waveform(samples=w.samples[a:b], sample_rate=w.sample_rate)
