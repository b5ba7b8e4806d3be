"""Frame-level preprocessing: pre-emphasis, framing, energy VAD, Hamming window.

Pipeline order used by the feature extractor: pre-emphasis -> framing ->
silence removal -> windowing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput

WINDOW_MS = 16.0
SHIFT_MS = 8.0

# floor keeps the dB computation finite on all-zero frames
_ENERGY_EPS = 1e-30


@dataclass(frozen=True)
class VadConfig:
    """Energy threshold: keep frames within floor_db of the loudest frame."""

    floor_db: float = 40.0

    def __post_init__(self):
        if self.floor_db <= 0:
            raise ValueError("floor_db must be positive")


@dataclass(frozen=True)
class FrameMatrix:
    frames: np.ndarray  # (T, W) float64
    frame_shift: int  # samples
    sample_rate: int

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_width(self) -> int:
        return self.frames.shape[1]


def pre_emphasize(samples: np.ndarray, coeff: float = 0.95) -> np.ndarray:
    """First-order high-pass: y[0]=x[0], y[n]=x[n]-coeff*x[n-1]."""
    if not 0.0 <= coeff < 1.0:
        raise ValueError("pre-emphasis coefficient must be in [0, 1)")
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        return x
    return np.concatenate(([x[0]], x[1:] - coeff * x[:-1]))


def frame_signal(
    samples: np.ndarray,
    window_ms: float = WINDOW_MS,
    shift_ms: float = SHIFT_MS,
    sample_rate: int = 16000,
) -> FrameMatrix:
    """Slice a signal into overlapping frames; a trailing partial frame is dropped."""
    if shift_ms <= 0 or window_ms < shift_ms:
        raise ValueError("need window_ms >= shift_ms > 0")
    x = np.asarray(samples, dtype=np.float64)
    width = round(window_ms / 1000.0 * sample_rate)
    shift = round(shift_ms / 1000.0 * sample_rate)
    n = x.size
    if n < width:
        frames = np.empty((0, width), dtype=np.float64)
    else:
        num = 1 + (n - width) // shift
        frames = np.lib.stride_tricks.sliding_window_view(x, width)[:: shift][:num].copy()
    return FrameMatrix(frames=frames, frame_shift=shift, sample_rate=sample_rate)


def hamming_window(frame: np.ndarray) -> np.ndarray:
    """Apply the 0.54 - 0.46*cos(2*pi*n/(W-1)) taper to one frame."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.size < 2:
        raise ValueError("frame must hold at least 2 samples")
    return frame * np.hamming(frame.size)


def frame_log_energies_db(frames: np.ndarray) -> np.ndarray:
    """Per-frame energy in dB (10*log10 of the sum of squares)."""
    energy = np.sum(np.square(frames), axis=1)
    return 10.0 * np.log10(np.maximum(energy, _ENERGY_EPS))


def remove_silence(frames: FrameMatrix, cfg: VadConfig = VadConfig()) -> FrameMatrix:
    """Drop frames more than cfg.floor_db below the loudest frame.

    At least one frame (the loudest) always survives, so downstream stages
    never see an empty utterance. Idempotent.
    """
    if frames.num_frames == 0:
        raise EmptyInput("no frames to classify as speech or silence")
    db = frame_log_energies_db(frames.frames)
    keep = db >= db.max() - cfg.floor_db
    if not keep.any():
        keep[int(np.argmax(db))] = True
    return FrameMatrix(
        frames=frames.frames[keep], frame_shift=frames.frame_shift, sample_rate=frames.sample_rate
    )
