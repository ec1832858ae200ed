"""Low-level acoustic features for overlapping audio segments.

A mono waveform is cut into fixed-length windows (default 50 ms with 10 ms
overlap between neighbours) and each window is described by a 56-dim vector:
16 log filter bank coefficients, their first and second temporal derivatives
taken across the segment sequence, plus eight frame scalars (zero-crossing
rate, short-time energy, four sub-band energies, spectral centroid and
spectral bandwidth).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidWindow, WaveformTooShort

# Floor added to filter bank energies before the log.
LOG_EPS = 1e-10


@dataclass(frozen=True)
class Waveform:
    """Mono signal with its sample rate. Samples are expected in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(
            self, "samples", np.asarray(self.samples, dtype=np.float64)
        )

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class FeatureConfig:
    win_ms: float = 50.0
    overlap_ms: float = 10.0
    n_bands: int = 16
    f_min: float = 64.0
    window: str = "hamming"  # "hamming" or "none"

    @property
    def hop_ms(self) -> float:
        # Neighbouring windows share overlap_ms of signal.
        return self.win_ms - self.overlap_ms

    @property
    def dim(self) -> int:
        # bands + delta + delta-delta + 8 frame scalars
        return 3 * self.n_bands + 8

    def feature_names(self) -> list[str]:
        names = [f"fb{i:02d}" for i in range(self.n_bands)]
        names += [f"d1_{i:02d}" for i in range(self.n_bands)]
        names += [f"d2_{i:02d}" for i in range(self.n_bands)]
        names += ["zcr", "ste", "sub0", "sub1", "sub2", "sub3",
                  "centroid", "bandwidth"]
        return names


def segment_signal(w: Waveform, win_ms: float, overlap_ms: float) -> np.ndarray:
    """Cut ``w`` into overlapping frames, shape (n_frames, win_samples).

    Frame i starts at sample i*hop with hop = (win_ms - overlap_ms) worth of
    samples; a trailing partial window is discarded.
    """
    if win_ms <= overlap_ms or overlap_ms < 0:
        raise InvalidWindow(
            f"window {win_ms} ms must exceed overlap {overlap_ms} ms"
        )
    win = int(round(win_ms * w.sample_rate / 1000.0))
    hop = int(round((win_ms - overlap_ms) * w.sample_rate / 1000.0))
    samples = w.samples
    if len(samples) < win:
        raise WaveformTooShort(
            f"waveform has {len(samples)} samples, window needs {win}"
        )
    count = (len(samples) - win) // hop + 1
    idx = np.arange(win)[None, :] + hop * np.arange(count)[:, None]
    return samples[idx]


def _window_vector(length: int, kind: str) -> np.ndarray:
    if kind == "hamming":
        return np.hamming(length)
    if kind == "none":
        return np.ones(length)
    raise ValueError(f"unknown window kind {kind!r}")


def _power_spectra(frames: np.ndarray, window: str) -> np.ndarray:
    """|rfft|^2 of each row after windowing; shape (n, n_bins)."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    spec = np.fft.rfft(frames * _window_vector(frames.shape[1], window), axis=1)
    return spec.real ** 2 + spec.imag ** 2


@lru_cache(maxsize=16)
def _triangle_bank(frame_len: int, sample_rate: int, n_bands: int,
                   f_min: float) -> np.ndarray:
    """Triangular filters with log-spaced centers, shape (n_bands, n_bins)."""
    freqs = np.fft.rfftfreq(frame_len, 1.0 / sample_rate)
    edges = np.geomspace(f_min, sample_rate / 2.0, n_bands + 2)
    bank = np.zeros((n_bands, len(freqs)))
    for b in range(n_bands):
        lo, mid, hi = edges[b], edges[b + 1], edges[b + 2]
        rising = (freqs - lo) / (mid - lo)
        falling = (hi - freqs) / (hi - mid)
        bank[b] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def _log_filter_bank_batch(frames: np.ndarray, n_bands: int, sample_rate: int,
                           f_min: float, window: str) -> np.ndarray:
    power = _power_spectra(frames, window)
    bank = _triangle_bank(frames.shape[1], sample_rate, n_bands, f_min)
    return np.log(power @ bank.T + LOG_EPS)


def log_filter_bank(frame: np.ndarray, n_bands: int = 16,
                    sample_rate: int = 16000, f_min: float = 64.0,
                    window: str = "hamming") -> np.ndarray:
    """Log energies of triangular filters on log-spaced center frequencies."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.size < 2:
        raise ValueError("frame must have at least 2 samples")
    if n_bands < 1:
        raise ValueError("n_bands must be >= 1")
    return _log_filter_bank_batch(frame[None, :], n_bands, sample_rate,
                                  f_min, window)[0]


def temporal_derivatives(seq: np.ndarray, order: int = 1) -> np.ndarray:
    """Delta features over a (n, d) sequence with a +-2 regression window.

    Sequence edges are replicated before the delta is applied; order 2
    applies the delta to the order-1 output.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    seq = np.atleast_2d(np.asarray(seq, dtype=np.float64))
    if len(seq) == 0:
        raise ValueError("sequence must be non-empty")
    out = seq
    for _ in range(order):
        out = _delta(out)
    return out


def _delta(seq: np.ndarray) -> np.ndarray:
    n = len(seq)
    padded = np.concatenate([seq[[0, 0]], seq, seq[[-1, -1]]])
    # sum_{k=1,2} k*(x[t+k] - x[t-k]) / (2 * sum k^2)
    num = (padded[3:3 + n] - padded[1:1 + n]) \
        + 2.0 * (padded[4:4 + n] - padded[:n])
    return num / 10.0


@dataclass(frozen=True)
class FrameScalars:
    zcr: float
    short_time_energy: float
    subband_energy: np.ndarray  # 4 equal-width linear bands of [0, sr/2]
    spectral_centroid: float
    spectral_bandwidth: float

    def as_vector(self) -> np.ndarray:
        return np.concatenate([
            [self.zcr, self.short_time_energy],
            self.subband_energy,
            [self.spectral_centroid, self.spectral_bandwidth],
        ])


def _frame_scalars_batch(frames: np.ndarray, sample_rate: int,
                         window: str) -> np.ndarray:
    """Scalar features per row, shape (n, 8)."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    n, length = frames.shape
    zcr = np.count_nonzero(frames[:, :-1] * frames[:, 1:] < 0, axis=1) \
        / (length - 1)
    ste = np.mean(frames ** 2, axis=1)

    power = _power_spectra(frames, window)
    freqs = np.fft.rfftfreq(length, 1.0 / sample_rate)
    nyquist = sample_rate / 2.0
    band_idx = np.minimum((freqs / nyquist * 4).astype(int), 3)
    sub = np.zeros((n, 4))
    for b in range(4):
        sub[:, b] = power[:, band_idx == b].sum(axis=1)

    total = power.sum(axis=1)
    safe = np.where(total > 0, total, 1.0)
    centroid = np.where(total > 0, (power * freqs).sum(axis=1) / safe, 0.0)
    spread = (power * (freqs[None, :] - centroid[:, None]) ** 2).sum(axis=1)
    bandwidth = np.where(total > 0, np.sqrt(spread / safe), 0.0)

    return np.column_stack([zcr, ste, sub, centroid, bandwidth])


def frame_scalars(frame: np.ndarray, sample_rate: int = 16000,
                  window: str = "hamming") -> FrameScalars:
    """zcr, short-time energy, 4 sub-band energies, centroid, bandwidth.

    An all-zero frame yields centroid = bandwidth = 0 by convention.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.size < 2:
        raise ValueError("frame must have at least 2 samples")
    row = _frame_scalars_batch(frame[None, :], sample_rate, window)[0]
    return FrameScalars(
        zcr=float(row[0]),
        short_time_energy=float(row[1]),
        subband_energy=row[2:6].copy(),
        spectral_centroid=float(row[6]),
        spectral_bandwidth=float(row[7]),
    )


def extract_event_features(w: Waveform,
                           cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Per-segment feature matrix for one event, shape (n_segments, dim).

    Row order matches segment order; the row index is the segment index used
    throughout training and regression. Derivatives are taken across the
    segment sequence, not within a segment.
    """
    frames = segment_signal(w, cfg.win_ms, cfg.overlap_ms)
    fb = _log_filter_bank_batch(frames, cfg.n_bands, w.sample_rate,
                                cfg.f_min, cfg.window)
    d1 = temporal_derivatives(fb, 1)
    d2 = temporal_derivatives(fb, 2)
    scalars = _frame_scalars_batch(frames, w.sample_rate, cfg.window)
    return np.hstack([fb, d1, d2, scalars])
