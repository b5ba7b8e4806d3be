"""MFCC-variant feature extraction and the Data1..Data5 feature sets.

Cepstra come from a band-configurable mel filterbank (triangles on integer
FFT bins, peaks at 1), an orthonormal DCT-II, and exclude c0; frame energy
is modeled as a separate log-energy stream. Dynamic (velocity/acceleration)
features use a symmetric regression window with edge replication.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.fft import dct

from . import frontend
from .audio_io import PcmSignal
from .errors import DegenerateBand, EmptyUtterance
from .frontend import VadConfig

ENERGY_FLOOR = 1e-10

CACHE_MAGIC = b"EMFV"
CACHE_VERSION = 1


class Band(Enum):
    NARROW = "narrow"      # 300-3400 Hz
    LOW = "low"            # 0-300 Hz
    COMBINED = "combined"  # 0-3400 Hz


class Dataset(Enum):
    DATA1 = "data1"  # cepstra
    DATA2 = "data2"  # cepstra + log-energy
    DATA3 = "data3"  # cepstra + velocity
    DATA4 = "data4"  # cepstra + velocity + acceleration
    DATA5 = "data5"  # [cepstra, log-energy] + velocity + acceleration of all statics


@dataclass(frozen=True)
class _BandPreset:
    f_low: float
    f_high: float
    num_filters: int
    nfft: int


# The low band spans so few 62.5 Hz bins that it needs both a finer FFT grid
# and fewer triangles to stay non-degenerate.
_BAND_PRESETS = {
    Band.NARROW: _BandPreset(300.0, 3400.0, 24, 256),
    Band.LOW: _BandPreset(0.0, 300.0, 8, 512),
    Band.COMBINED: _BandPreset(0.0, 3400.0, 24, 256),
}


@dataclass(frozen=True)
class FeatureConfig:
    """Extraction settings; None fields fall back to per-band presets."""

    band: Band = Band.COMBINED
    dataset: Dataset = Dataset.DATA5
    num_filters: int | None = None
    num_ceps: int | None = None
    nfft: int | None = None
    f_low: float | None = None
    f_high: float | None = None
    window_ms: float = frontend.WINDOW_MS
    shift_ms: float = frontend.SHIFT_MS
    delta_window: int = 2
    preemph: float = 0.95
    vad: VadConfig = field(default_factory=VadConfig)

    @property
    def resolved_num_filters(self) -> int:
        return self.num_filters if self.num_filters is not None else _BAND_PRESETS[self.band].num_filters

    @property
    def resolved_num_ceps(self) -> int:
        if self.num_ceps is not None:
            return self.num_ceps
        return min(12, self.resolved_num_filters - 1)

    @property
    def resolved_nfft(self) -> int:
        return self.nfft if self.nfft is not None else _BAND_PRESETS[self.band].nfft

    @property
    def resolved_f_low(self) -> float:
        return self.f_low if self.f_low is not None else _BAND_PRESETS[self.band].f_low

    @property
    def resolved_f_high(self) -> float:
        return self.f_high if self.f_high is not None else _BAND_PRESETS[self.band].f_high

    def validate(self) -> None:
        if self.resolved_num_ceps >= self.resolved_num_filters:
            raise ValueError("num_ceps must be smaller than num_filters")
        if self.resolved_num_ceps < 1:
            raise ValueError("need at least one cepstral coefficient")
        if self.delta_window < 1:
            raise ValueError("delta_window must be >= 1")

    def to_items(self) -> list[tuple[str, str]]:
        """Canonical (key, value) pairs over resolved settings."""
        return [
            ("band", self.band.value),
            ("dataset", self.dataset.value),
            ("num_filters", str(self.resolved_num_filters)),
            ("num_ceps", str(self.resolved_num_ceps)),
            ("nfft", str(self.resolved_nfft)),
            ("f_low", repr(self.resolved_f_low)),
            ("f_high", repr(self.resolved_f_high)),
            ("window_ms", repr(self.window_ms)),
            ("shift_ms", repr(self.shift_ms)),
            ("delta_window", str(self.delta_window)),
            ("preemph", repr(self.preemph)),
            ("vad_floor_db", repr(self.vad.floor_db)),
        ]

    def digest(self) -> str:
        text = "\n".join(f"{k} = {v}" for k, v in self.to_items())
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def feature_dim(self) -> int:
        """Output dimension implied by dataset and cepstrum count."""
        c = self.resolved_num_ceps
        return {
            Dataset.DATA1: c,
            Dataset.DATA2: c + 1,
            Dataset.DATA3: 2 * c,
            Dataset.DATA4: 3 * c,
            Dataset.DATA5: 3 * (c + 1),
        }[self.dataset]


@dataclass(frozen=True)
class MelFilterbank:
    filters: np.ndarray  # (M, nfft//2 + 1) triangle weights
    f_low: float
    f_high: float
    nfft: int
    sample_rate: int

    @property
    def num_filters(self) -> int:
        return self.filters.shape[0]


@dataclass(frozen=True)
class FeatureSequence:
    vectors: np.ndarray  # (T, D) float64
    dim: int
    config_tag: str


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (np.power(10.0, np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def build_filterbank(
    band: Band,
    num_filters: int,
    nfft: int,
    sample_rate: int,
    f_low: float | None = None,
    f_high: float | None = None,
) -> MelFilterbank:
    """Place num_filters triangular filters, equally spaced on the mel scale.

    Boundary frequencies are snapped to the nearest FFT bin; each triangle
    rises from one boundary bin to a unit peak and falls to the next.
    """
    preset = _BAND_PRESETS[band]
    lo = preset.f_low if f_low is None else f_low
    hi = preset.f_high if f_high is None else f_high
    if not (0.0 <= lo < hi <= sample_rate / 2.0):
        raise ValueError(f"band edges {lo}-{hi} Hz outside [0, {sample_rate / 2}]")
    if nfft < 2 or nfft & (nfft - 1):
        raise ValueError("nfft must be a power of two")

    mel_points = np.linspace(hz_to_mel(lo), hz_to_mel(hi), num_filters + 2)
    bins = np.rint(mel_to_hz(mel_points) / sample_rate * nfft).astype(int)

    available = bins[-1] - bins[0] + 1
    if available < num_filters + 2:
        raise DegenerateBand(
            f"{band.value} band [{lo:g}-{hi:g}] Hz covers {available} FFT bins at "
            f"nfft={nfft}; {num_filters} filters need at least {num_filters + 2}"
        )
    if np.any(np.diff(bins) < 1):
        raise DegenerateBand(
            f"{band.value} band: adjacent mel boundaries collide on the FFT grid "
            f"for {num_filters} filters at nfft={nfft}"
        )

    filters = np.zeros((num_filters, nfft // 2 + 1))
    for j in range(num_filters):
        left, center, right = bins[j], bins[j + 1], bins[j + 2]
        for i in range(left, center):
            filters[j, i] = (i - left) / (center - left)
        for i in range(center, right + 1):
            filters[j, i] = (right - i) / (right - center)
    return MelFilterbank(filters=filters, f_low=lo, f_high=hi, nfft=nfft, sample_rate=sample_rate)


def mfcc_frames(frames: np.ndarray, filterbank: MelFilterbank, num_ceps: int) -> np.ndarray:
    """Cepstra (coefficients 1..num_ceps, c0 excluded) for each windowed frame."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    nfft = filterbank.nfft
    if frames.shape[1] > nfft:
        raise ValueError(f"frame length {frames.shape[1]} exceeds nfft {nfft}")
    if num_ceps >= filterbank.num_filters:
        raise ValueError("num_ceps must be smaller than the filter count")
    power = np.abs(np.fft.rfft(frames, n=nfft, axis=1)) ** 2
    energies = np.maximum(power @ filterbank.filters.T, ENERGY_FLOOR)
    cepstra = dct(np.log(energies), type=2, norm="ortho", axis=1)
    return cepstra[:, 1 : num_ceps + 1]


def mfcc_frame(windowed_frame: np.ndarray, filterbank: MelFilterbank, num_ceps: int) -> np.ndarray:
    """Cepstral vector for a single windowed frame."""
    return mfcc_frames(np.asarray(windowed_frame)[None, :], filterbank, num_ceps)[0]


def log_energy(frame: np.ndarray) -> float:
    """ln of the frame's sum of squares, floored to stay finite on silence."""
    frame = np.asarray(frame, dtype=np.float64)
    return float(np.log(max(np.sum(frame * frame), ENERGY_FLOOR)))


def deltas(sequence: np.ndarray, window: int = 2) -> np.ndarray:
    """Regression-slope dynamic features with edge frames replicated.

    d_t = sum_n n*(c_{t+n} - c_{t-n}) / (2 * sum_n n^2) for n = 1..window.
    """
    x = np.atleast_2d(np.asarray(sequence, dtype=np.float64))
    if window < 1:
        raise ValueError("window must be >= 1")
    t = x.shape[0]
    padded = np.vstack([x[:1]] * window + [x] + [x[-1:]] * window)
    out = np.zeros_like(x)
    for n in range(1, window + 1):
        out += n * (padded[window + n : window + n + t] - padded[window - n : window - n + t])
    return out / (2.0 * sum(n * n for n in range(1, window + 1)))


def assemble_features(signal: PcmSignal, cfg: FeatureConfig) -> FeatureSequence:
    """Run the full frame pipeline and assemble the configured feature set."""
    cfg.validate()
    emphasized = frontend.pre_emphasize(signal.samples, cfg.preemph)
    framed = frontend.frame_signal(emphasized, cfg.window_ms, cfg.shift_ms, signal.sample_rate)
    if framed.num_frames == 0:
        raise EmptyUtterance(
            f"signal of {signal.samples.size} samples is shorter than one analysis window"
        )
    voiced = frontend.remove_silence(framed, cfg.vad)

    fbank = build_filterbank(
        cfg.band, cfg.resolved_num_filters, cfg.resolved_nfft, signal.sample_rate,
        cfg.f_low, cfg.f_high,
    )
    windowed = voiced.frames * np.hamming(voiced.frame_width)
    cepstra = mfcc_frames(windowed, fbank, cfg.resolved_num_ceps)
    # energy uses the rectangular (pre-window) frame so it is taper-independent
    energies = np.log(np.maximum(np.sum(voiced.frames**2, axis=1), ENERGY_FLOOR))

    n = cfg.delta_window
    if cfg.dataset is Dataset.DATA1:
        vectors = cepstra
    elif cfg.dataset is Dataset.DATA2:
        vectors = np.hstack([cepstra, energies[:, None]])
    elif cfg.dataset is Dataset.DATA3:
        vectors = np.hstack([cepstra, deltas(cepstra, n)])
    elif cfg.dataset is Dataset.DATA4:
        vel = deltas(cepstra, n)
        vectors = np.hstack([cepstra, vel, deltas(vel, n)])
    else:  # DATA5: dynamics of cepstra and log-energy together
        statics = np.hstack([cepstra, energies[:, None]])
        vel = deltas(statics, n)
        vectors = np.hstack([statics, vel, deltas(vel, n)])

    return FeatureSequence(vectors=vectors, dim=vectors.shape[1], config_tag=cfg.digest())


def write_feature_cache(path: str | Path, vectors: np.ndarray) -> None:
    """Write a T x D float64 matrix in the EMFV binary cache format."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    t, d = vectors.shape
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<III", CACHE_VERSION, t, d))
        fh.write(vectors.astype("<f8").tobytes(order="C"))


def read_feature_cache(path: str | Path) -> np.ndarray:
    """Read a matrix written by write_feature_cache."""
    raw = Path(path).read_bytes()
    if raw[:4] != CACHE_MAGIC:
        raise ValueError(f"{path}: not a feature cache file")
    version, t, d = struct.unpack_from("<III", raw, 4)
    if version != CACHE_VERSION:
        raise ValueError(f"{path}: unsupported cache version {version}")
    expected = 16 + 8 * t * d
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f8", offset=16).reshape(t, d).copy()
