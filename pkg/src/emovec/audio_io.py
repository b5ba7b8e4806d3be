"""WAV decoding and labeled-manifest ingestion.

Accepted audio is RIFF/WAVE, integer PCM, 16 bits per sample, 16 kHz.
Anything else is rejected rather than converted; see the error types for
the failure modes.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateId,
    MalformedRiff,
    MissingColumn,
    UnknownLabel,
    UnsupportedFormat,
    UnsupportedRate,
)

REQUIRED_SAMPLE_RATE = 16000
WAVE_FORMAT_PCM = 1


class EmotionLabel(Enum):
    """The seven emotion categories, keyed by their one-letter codes."""

    ANGER = "A"
    BOREDOM = "B"
    DISGUST = "D"
    FEAR = "F"
    HAPPINESS = "H"
    SADNESS = "S"
    NEUTRAL = "N"

    @property
    def code(self) -> str:
        return self.value

    @property
    def display_name(self) -> str:
        return self.name.capitalize()

    @classmethod
    def from_token(cls, token: str) -> "EmotionLabel":
        """Resolve a one-letter code or a full (lowercase) name."""
        token = token.strip()
        if len(token) == 1:
            for label in cls:
                if label.value == token.upper():
                    return label
        else:
            for label in cls:
                if label.name.lower() == token.lower():
                    return label
        raise UnknownLabel(f"unknown emotion label {token!r}")


@dataclass(frozen=True)
class PcmSignal:
    """Decoded mono audio for one utterance."""

    samples: np.ndarray  # int16, shape (N,)
    sample_rate: int

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.int16))


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    audio_path: str
    emotion: EmotionLabel
    speaker: str | None = None


def parse_wav(data: bytes) -> PcmSignal:
    """Decode a RIFF/WAVE byte string into a mono 16 kHz PcmSignal.

    Multi-channel input is downmixed by the per-frame arithmetic mean.
    """
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedRiff("not a RIFF/WAVE container")

    fmt_chunk = None
    data_chunk = None
    offset = 12
    while offset + 8 <= len(data):
        chunk_id = data[offset : offset + 4]
        (size,) = struct.unpack_from("<I", data, offset + 4)
        body_start = offset + 8
        if body_start + size > len(data):
            raise MalformedRiff(f"chunk {chunk_id!r} overruns the file")
        if chunk_id == b"fmt " and fmt_chunk is None:
            fmt_chunk = data[body_start : body_start + size]
        elif chunk_id == b"data" and data_chunk is None:
            data_chunk = data[body_start : body_start + size]
        # chunks are word-aligned: odd sizes carry a pad byte
        offset = body_start + size + (size & 1)

    if fmt_chunk is None or data_chunk is None:
        raise MalformedRiff("missing fmt or data chunk")
    if len(fmt_chunk) < 16:
        raise MalformedRiff("fmt chunk too short")

    audio_format, channels, sample_rate, _, _, bits = struct.unpack_from(
        "<HHIIHH", fmt_chunk, 0
    )
    if audio_format != WAVE_FORMAT_PCM:
        raise UnsupportedFormat(f"audio format tag {audio_format}, expected PCM (1)")
    if bits != 16:
        raise UnsupportedFormat(f"{bits} bits/sample, expected 16")
    if channels < 1:
        raise MalformedRiff("fmt chunk declares zero channels")
    if sample_rate != REQUIRED_SAMPLE_RATE:
        raise UnsupportedRate(f"sample rate {sample_rate}, expected {REQUIRED_SAMPLE_RATE}")

    frame_bytes = 2 * channels
    if len(data_chunk) % frame_bytes != 0:
        raise MalformedRiff("data chunk size is not a whole number of sample frames")
    n_frames = len(data_chunk) // frame_bytes
    if n_frames == 0:
        raise MalformedRiff("data chunk holds no samples")

    samples = np.frombuffer(data_chunk, dtype="<i2")
    if channels > 1:
        mixed = samples.reshape(n_frames, channels).mean(axis=1)
        samples = np.rint(mixed).astype(np.int16)
    return PcmSignal(samples=samples.copy(), sample_rate=sample_rate)


def encode_wav(signal: PcmSignal) -> bytes:
    """Serialize a mono PcmSignal back to RIFF/WAVE bytes."""
    payload = signal.samples.astype("<i2").tobytes()
    fmt = struct.pack(
        "<HHIIHH", WAVE_FORMAT_PCM, 1, signal.sample_rate, signal.sample_rate * 2, 2, 16
    )
    body = (
        b"fmt " + struct.pack("<I", len(fmt)) + fmt
        + b"data" + struct.pack("<I", len(payload)) + payload
    )
    return b"RIFF" + struct.pack("<I", 4 + len(body)) + b"WAVE" + body


def read_wav(path: str | Path) -> PcmSignal:
    """Decode a WAV file from disk."""
    return parse_wav(Path(path).read_bytes())


_REQUIRED_COLUMNS = ("id", "path", "emotion")


def load_manifest(text: str) -> list[UtteranceRecord]:
    """Parse a CSV manifest (`id,path,emotion[,speaker]`) into records.

    Lines whose first cell starts with `#` are comments. Emotion fields may
    be one-letter codes or full lowercase names.
    """
    reader = csv.reader(io.StringIO(text))
    header: list[str] | None = None
    records: list[UtteranceRecord] = []
    seen: set[str] = set()

    for row in reader:
        if not row or (row[0].lstrip().startswith("#")):
            continue
        cells = [c.strip() for c in row]
        if header is None:
            header = [c.lower() for c in cells]
            for col in _REQUIRED_COLUMNS:
                if col not in header:
                    raise MissingColumn(f"manifest header lacks column {col!r}")
            continue
        if all(c == "" for c in cells):
            continue
        line = reader.line_num
        if len(cells) < len(_REQUIRED_COLUMNS):
            raise MissingColumn(f"line {line}: expected at least 3 fields, got {len(cells)}")
        field = dict(zip(header, cells))
        utt_id = field["id"]
        if utt_id in seen:
            raise DuplicateId(f"line {line}: duplicate utterance id {utt_id!r}")
        seen.add(utt_id)
        try:
            emotion = EmotionLabel.from_token(field["emotion"])
        except UnknownLabel as exc:
            raise UnknownLabel(f"line {line}: {exc}") from None
        speaker = field.get("speaker") or None
        records.append(
            UtteranceRecord(id=utt_id, audio_path=field["path"], emotion=emotion, speaker=speaker)
        )

    if header is None:
        raise MissingColumn("manifest has no header line")
    return records


def render_manifest(records: list[UtteranceRecord]) -> str:
    """Serialize records to manifest CSV text (inverse of load_manifest)."""
    with_speaker = any(r.speaker for r in records)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", "path", "emotion", "speaker"] if with_speaker else ["id", "path", "emotion"])
    for r in records:
        row = [r.id, r.audio_path, r.emotion.code]
        if with_speaker:
            row.append(r.speaker or "")
        writer.writerow(row)
    return out.getvalue()


def load_manifest_file(path: str | Path) -> list[UtteranceRecord]:
    return load_manifest(Path(path).read_text(encoding="utf-8"))
