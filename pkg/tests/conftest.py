"""Shared helpers: oracle WAV writing and synthetic corpus generation."""

import wave
from pathlib import Path

import numpy as np
import pytest

RATE = 16000

# Synthetic "emotion" sources: every class shares the same two tone clusters;
# class identity is the amplitude balance between them, drawn per segment
# from a class-specific gaussian source.
CLASS_MIXES = {
    "A": (0.75, 0.15),
    "H": (0.45, 0.45),
    "S": (0.15, 0.75),
}


def write_wav_oracle(path, samples, rate=RATE, channels=1):
    """Independent WAV writer built on the stdlib wave module."""
    samples = np.asarray(samples, dtype=np.int16)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(samples.astype("<i2").tobytes())


def wav_bytes_oracle(samples, rate=RATE, channels=1, tmp_path=None, name="oracle.wav"):
    import io

    samples = np.asarray(samples, dtype=np.int16)
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(samples.astype("<i2").tobytes())
    return buf.getvalue()


def synth_utterance(rng, code, seconds=0.8, seg_ms=60):
    """Segment-wise two-tone signal whose amplitude mix encodes the class."""
    a1c, a2c = CLASS_MIXES[code]
    seg = int(seg_ms / 1000 * RATE)
    n = int(seconds * RATE)
    x = np.empty(n)
    pos = 0
    while pos < n:
        f1 = rng.normal(600.0, 40.0)
        f2 = rng.normal(1800.0, 80.0)
        a1 = max(rng.normal(a1c, 0.05), 0.02)
        a2 = max(rng.normal(a2c, 0.05), 0.02)
        t = np.arange(min(seg, n - pos)) / RATE
        x[pos : pos + len(t)] = a1 * np.sin(
            2 * np.pi * f1 * t + rng.uniform(0, 2 * np.pi)
        ) + a2 * np.sin(2 * np.pi * f2 * t + rng.uniform(0, 2 * np.pi))
        pos += seg
    x += rng.normal(0, 0.01, n)
    return np.clip(x * 12000, -32768, 32767).astype(np.int16)


def build_corpus(root, per_class=60, seconds=0.8, seed=20240601, classes="AHS"):
    """Write WAVs plus a manifest under `root`; returns the manifest path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows = ["id,path,emotion"]
    for code in classes:
        for i in range(per_class):
            name = f"{code}{i:03d}.wav"
            write_wav_oracle(root / name, synth_utterance(rng, code, seconds))
            rows.append(f"{code}{i:03d},{name},{code}")
    manifest = root / "manifest.csv"
    manifest.write_text("\n".join(rows) + "\n")
    return manifest


@pytest.fixture(scope="session")
def synthetic_corpus(tmp_path_factory):
    """180-utterance three-class corpus shared by the slow end-to-end tests."""
    root = tmp_path_factory.mktemp("corpus")
    manifest = build_corpus(root, per_class=60)
    return manifest


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Tiny corpus for CLI-level tests (8 utterances per class)."""
    root = tmp_path_factory.mktemp("small_corpus")
    manifest = build_corpus(root, per_class=8, seconds=0.4, seed=11)
    return manifest
