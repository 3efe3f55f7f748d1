"""Audio ingestion: WAV decoding, polyphase resampling, slicing and corpus manifests."""

from __future__ import annotations

import json
import logging
import math
import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class WavFormatError(ValueError):
    """Malformed RIFF/WAVE structure."""


class UnsupportedEncodingError(ValueError):
    """Well-formed WAV whose sample encoding is not handled."""


class CorpusError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioBuffer holds mono samples only")
        if not np.all(np.isfinite(samples)):
            raise ValueError("non-finite samples")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return len(self.samples)

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class Recording:
    path: Path
    singer: str
    style: str = ""

    @property
    def source_id(self) -> str:
        return self.path.stem


@dataclass
class Corpus:
    recordings: list[Recording] = field(default_factory=list)

    @property
    def singers(self) -> list[str]:
        return sorted({r.singer for r in self.recordings})

    def by_singer(self) -> dict[str, list[Recording]]:
        out: dict[str, list[Recording]] = {s: [] for s in self.singers}
        for r in self.recordings:
            out[r.singer].append(r)
        return out

    def find(self, source_id: str) -> Recording:
        for r in self.recordings:
            if r.source_id == source_id:
                return r
        raise KeyError(source_id)


# --------------------------------------------------------------------------- WAV


def _iter_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise WavFormatError(f"chunk {cid!r} truncated")
        yield cid, body
        pos += 8 + size + (size & 1)


def decode_wav(data: bytes, source_id: str = "") -> AudioBuffer:
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError("not a RIFF/WAVE file")
    fmt = None
    pcm = None
    for cid, body in _iter_chunks(data):
        if cid == b"fmt ":
            if len(body) < 16:
                raise WavFormatError("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body)
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE:
                if len(body) < 40:
                    raise WavFormatError("extensible fmt chunk too short")
                subformat = struct.unpack_from("<H", body, 24)[0]
                fmt = (subformat,) + fmt[1:]
        elif cid == b"data":
            pcm = body
    if fmt is None or pcm is None:
        raise WavFormatError("missing fmt or data chunk")

    code, channels, rate, _, block_align, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedEncodingError(f"{channels} channels")
    if rate <= 0:
        raise WavFormatError("zero sample rate")
    width = bits // 8
    if bits % 8 or block_align != width * channels:
        raise WavFormatError(f"inconsistent block alignment ({block_align} for {bits}-bit x{channels})")
    n = len(pcm) // block_align
    raw = pcm[: n * block_align]

    if code == WAVE_FORMAT_PCM:
        if bits == 8:
            x = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
        elif bits == 16:
            x = np.frombuffer(raw, dtype="<i2") / 32768.0
        elif bits == 24:
            b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
            v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
            v = np.where(v >= 1 << 23, v - (1 << 24), v)
            x = v / float(1 << 23)
        elif bits == 32:
            x = np.frombuffer(raw, dtype="<i4") / float(1 << 31)
        else:
            raise UnsupportedEncodingError(f"{bits}-bit integer PCM")
    elif code == WAVE_FORMAT_IEEE_FLOAT:
        if bits != 32:
            raise UnsupportedEncodingError(f"{bits}-bit float")
        x = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedEncodingError(f"format code {code:#06x}")

    x = x.reshape(n, channels)
    mono = x[:, 0] if channels == 1 else x.mean(axis=1)
    return AudioBuffer(mono, int(rate), source_id)


def load_wav(path) -> AudioBuffer:
    path = Path(path)
    return decode_wav(path.read_bytes(), source_id=path.stem)


def write_wav(path, buf: AudioBuffer) -> None:
    """Write 16-bit mono PCM. Samples are clipped to [-1, 1)."""
    q = np.clip(np.round(buf.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(buf.sample_rate)
        w.writeframes(q.tobytes())


# --------------------------------------------------------------------- resampling

TAPS_PER_PHASE = 64
KAISER_BETA = 8.6
ROLLOFF = 0.9


def _polyphase_bank(up: int, down: int, taps: int) -> np.ndarray:
    # Row p holds the taps for output instants with fractional input offset p/up.
    cutoff = 0.5 * min(1.0, up / down) * ROLLOFF  # cycles per input sample
    half = taps // 2
    frac = np.arange(up)[:, None] / up
    k = np.arange(-half + 1, half + 1)[None, :]
    t = frac - k  # distance (input samples) from output instant to tap
    h = 2 * cutoff * np.sinc(2 * cutoff * t)
    h *= np.i0(KAISER_BETA * np.sqrt(np.clip(1 - (t / half) ** 2, 0, None))) / np.i0(KAISER_BETA)
    h /= h.sum(axis=1, keepdims=True)
    return h


def resample(buf: AudioBuffer, target_rate: int) -> AudioBuffer:
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == buf.sample_rate:
        return buf
    g = math.gcd(int(target_rate), buf.sample_rate)
    up, down = int(target_rate) // g, buf.sample_rate // g
    n_in = len(buf.samples)
    n_out = int(round(n_in * up / down))
    bank = _polyphase_bank(up, down, TAPS_PER_PHASE)
    half = TAPS_PER_PHASE // 2
    padded = np.concatenate([np.zeros(half), buf.samples, np.zeros(half + 1)])
    out = np.empty(n_out)
    offsets = np.arange(-half + 1, half + 1)
    block = 16384
    for s in range(0, n_out, block):
        n = np.arange(s, min(s + block, n_out))
        base = (n * down) // up
        phase = (n * down) % up
        idx = base[:, None] + offsets[None, :] + half
        out[s : s + len(n)] = np.einsum("ij,ij->i", padded[idx], bank[phase])
    return AudioBuffer(out, int(target_rate), buf.source_id)


# ------------------------------------------------------------------------ slicing


def slice_audio(buf: AudioBuffer, start: float, end: float, pad: bool = False) -> AudioBuffer:
    """Samples in ``[start*rate, end*rate)``.

    With ``pad=True`` the window may extend past either end of the recording;
    the missing part is filled with zeros.
    """
    if not end > start:
        raise ValueError(f"inverted slice bounds [{start}, {end})")
    if not pad and (start < 0 or end > buf.duration_seconds + 1e-9):
        raise ValueError(f"slice [{start}, {end}) outside [0, {buf.duration_seconds}]")
    rate = buf.sample_rate
    i0 = int(round(start * rate))
    i1 = int(round(end * rate))
    n = len(buf.samples)
    lo, hi = max(i0, 0), min(i1, n)
    core = buf.samples[lo:hi] if hi > lo else np.zeros(0)
    if i0 >= 0 and i1 <= n:
        out = core
    else:
        out = np.concatenate([np.zeros(max(0, min(-i0, i1 - i0))), core, np.zeros(max(0, min(i1 - n, i1 - i0)))])
    return AudioBuffer(out, rate, buf.source_id)


def context_window(buf: AudioBuffer, start: float, end: float, total: float) -> AudioBuffer:
    """A ``total``-second window centred on ``[start, end)``, zero-padded at the edges."""
    centre = 0.5 * (start + end)
    n = int(round(total * buf.sample_rate))
    i0 = int(round(centre * buf.sample_rate)) - n // 2
    return slice_audio(buf, i0 / buf.sample_rate, (i0 + n) / buf.sample_rate, pad=True)


# ------------------------------------------------------------------------- corpus


def load_manifest(path, min_recordings: int = 3) -> Corpus:
    path = Path(path)
    try:
        entries = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CorpusError(f"{path}: {e}") from e
    if not isinstance(entries, list):
        raise CorpusError(f"{path}: manifest must be a JSON array")
    recs = []
    for i, e in enumerate(entries):
        if not isinstance(e, dict) or "path" not in e or "singer" not in e:
            raise CorpusError(f"{path}: entry {i} needs 'path' and 'singer'")
        p = Path(e["path"])
        if not p.is_absolute():
            p = path.parent / p
        recs.append(Recording(p, str(e["singer"]), str(e.get("style", ""))))
    ids = [r.source_id for r in recs]
    if len(set(ids)) != len(ids):
        raise CorpusError(f"{path}: duplicate recording stems")
    corpus = Corpus(recs)
    for singer, rs in corpus.by_singer().items():
        if len(rs) < min_recordings:
            raise CorpusError(f"singer {singer!r} has {len(rs)} recordings, need >= {min_recordings}")
    return corpus


def write_manifest(path, corpus: Corpus) -> None:
    path = Path(path)
    entries = []
    for r in corpus.recordings:
        p = r.path
        try:
            p = p.relative_to(path.parent)
        except ValueError:
            pass
        entries.append({"path": p.as_posix(), "singer": r.singer, "style": r.style})
    path.write_text(json.dumps(entries, indent=1) + "\n", encoding="utf-8")
