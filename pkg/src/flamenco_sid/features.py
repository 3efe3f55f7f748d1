"""Frame-level acoustic features (spectrogram, log mel, MFCC) on a fixed 128 x 426 grid."""

from __future__ import annotations

import enum
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import AudioBuffer

log = logging.getLogger(__name__)

SAMPLE_RATE = 16000
WINDOW = 400  # 25 ms
HOP = 160  # 10 ms
N_FFT = 400
ROWS = 128
COLS = 426
DB_FLOOR = -80.0
LOG_FLOOR = 1e-10
N_MFCC_FILTERS = 40

MAGIC = b"FMTX"
HEADER_SIZE = 32
FORMAT_VERSION = 1


class ShapeError(ValueError):
    pass


class FeatureKind(enum.IntEnum):
    SPEC = 1
    MELSPEC = 2
    MFCC = 3

    @classmethod
    def parse(cls, name) -> "FeatureKind":
        if isinstance(name, FeatureKind):
            return name
        key = str(name).upper().replace("-", "").replace("_", "")
        aliases = {"SPECTROGRAM": "SPEC", "MEL": "MELSPEC", "MELSPECTROGRAM": "MELSPEC"}
        return cls[aliases.get(key, key)]


@dataclass
class FeatureMatrix:
    kind: FeatureKind
    data: np.ndarray
    valid_frames: int
    source_id: str = ""
    start: float = 0.0
    end: float = 0.0
    label: int = -1

    def __post_init__(self):
        if self.data.shape != (ROWS, COLS):
            raise ShapeError(f"feature grid must be {ROWS}x{COLS}, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("non-finite feature values")


# ----------------------------------------------------------------------- spectra


def power_spectrogram(samples: np.ndarray, n_fft: int = N_FFT) -> np.ndarray:
    """|STFT|^2, bins x frames, Hann window of 400 samples and 160-sample hop.

    Inputs shorter than one window are zero-extended to a single frame.
    """
    x = np.asarray(samples, dtype=np.float64)
    if len(x) == 0:
        raise ValueError("empty buffer")
    if len(x) < WINDOW:
        x = np.concatenate([x, np.zeros(WINDOW - len(x))])
    win = np.hanning(WINDOW + 1)[:-1]
    frames = np.lib.stride_tricks.sliding_window_view(x, WINDOW)[::HOP]
    spec = np.fft.rfft(frames * win, n=n_fft, axis=1)
    return (spec.real ** 2 + spec.imag ** 2).T


def rebin_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Area-weighted averaging of ``n_in`` unit-width bins into ``n_out`` equal bins."""
    edges = np.linspace(0.0, n_in, n_out + 1)
    lo = np.arange(n_in)
    m = np.clip(np.minimum(edges[1:, None], lo + 1) - np.maximum(edges[:-1, None], lo), 0.0, None)
    return m / m.sum(axis=1, keepdims=True)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_centers(n_filters: int, fmin: float = 0.0, fmax: float = SAMPLE_RATE / 2) -> np.ndarray:
    """Filter centre frequencies (Hz), HTK mel spacing."""
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_filters + 2))[1:-1]


def mel_filterbank(n_filters: int, n_fft: int = N_FFT, sample_rate: int = SAMPLE_RATE,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular HTK-mel filters, n_filters x (n_fft//2 + 1).

    The triangles have unit height (see :func:`mel_response`). Each weight is
    the triangle averaged over the FFT bin's span (centre +/- half a bin), so
    filters narrower than a bin still get support; a row's largest weight
    reaches 1 only when the filter is much wider than a bin.
    """
    fmax = sample_rate / 2 if fmax is None else fmax
    pts = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_filters + 2))
    df = sample_rate / n_fft
    centres = np.arange(n_fft // 2 + 1) * df
    lo_e, hi_e = centres - df / 2, centres + df / 2
    fb = np.zeros((n_filters, len(centres)))
    for m in range(n_filters):
        a, c, b = pts[m], pts[m + 1], pts[m + 2]
        fb[m] = _tri_area(a, c, b, lo_e, hi_e) / df
    return fb


def mel_response(freqs, n_filters: int, sample_rate: int = SAMPLE_RATE,
                 fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Unit-height triangle responses at arbitrary frequencies, n_filters x len(freqs)."""
    fmax = sample_rate / 2 if fmax is None else fmax
    pts = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_filters + 2))
    f = np.asarray(freqs, dtype=np.float64)[None, :]
    a, c, b = pts[:-2, None], pts[1:-1, None], pts[2:, None]
    return np.clip(np.minimum((f - a) / (c - a), (b - f) / (b - c)), 0.0, None)


def _ramp_integral(x, a, c):
    """Integral from a to x of the rising edge (t - a)/(c - a), with x clipped to [a, c]."""
    x = np.clip(x, a, c)
    return 0.5 * (x - a) ** 2 / (c - a)


def _tri_area(a, c, b, lo, hi):
    up = _ramp_integral(hi, a, c) - _ramp_integral(lo, a, c)
    # falling edge mirrored: integral of (b - t)/(b - c) over [lo, hi] within [c, b]
    down = _ramp_integral(-lo, -b, -c) - _ramp_integral(-hi, -b, -c)
    return up + down


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II, rows = coefficients."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.cos(np.pi * k * (2 * i + 1) / (2 * n)) * np.sqrt(2.0 / n)
    m[0] /= np.sqrt(2.0)
    return m


_CACHE: dict = {}


def _cached(key, fn):
    if key not in _CACHE:
        _CACHE[key] = fn()
    return _CACHE[key]


# ------------------------------------------------------------------------- shapes


def pad_to_shape(matrix: np.ndarray, rows: int = ROWS, cols: int = COLS) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError("feature grid must be 2-D")
    if m.shape[0] > rows:
        raise ShapeError(f"{m.shape[0]} rows exceeds {rows}")
    if m.shape[1] > cols:
        log.warning("truncating %d frames to %d", m.shape[1], cols)
        m = m[:, :cols]
    out = np.zeros((rows, cols))
    out[: m.shape[0], : m.shape[1]] = m
    return out


def _check_rate(buf: AudioBuffer):
    if buf.sample_rate != SAMPLE_RATE:
        raise ValueError(f"features expect {SAMPLE_RATE} Hz audio, got {buf.sample_rate}")
    if len(buf.samples) == 0:
        raise ValueError("empty buffer")


def _finish(kind, grid, buf, **src) -> FeatureMatrix:
    valid = min(grid.shape[1], COLS)
    return FeatureMatrix(kind, pad_to_shape(grid), valid, buf.source_id, **src)


def spectrogram_features(buf: AudioBuffer, n_fft: int = N_FFT, **src) -> FeatureMatrix:
    _check_rate(buf)
    p = power_spectrogram(buf.samples, n_fft)
    rb = _cached(("rebin", p.shape[0]), lambda: rebin_matrix(p.shape[0], ROWS))
    p = rb @ p
    top = p.max()
    if top > 0:
        with np.errstate(divide="ignore"):
            db = 10.0 * np.log10(p / top)
        db = np.maximum(db, DB_FLOOR)
    else:
        db = np.full_like(p, DB_FLOOR)
    return _finish(FeatureKind.SPEC, db, buf, **src)


def melspec_features(buf: AudioBuffer, n_fft: int = N_FFT, **src) -> FeatureMatrix:
    _check_rate(buf)
    fb = _cached(("mel", ROWS, n_fft), lambda: mel_filterbank(ROWS, n_fft))
    mel = fb @ power_spectrogram(buf.samples, n_fft)
    return _finish(FeatureKind.MELSPEC, np.log(np.maximum(mel, LOG_FLOOR)), buf, **src)


def mfcc_features(buf: AudioBuffer, n_filters: int = N_MFCC_FILTERS, n_fft: int = N_FFT, **src) -> FeatureMatrix:
    _check_rate(buf)
    if not 1 <= n_filters <= ROWS:
        raise ShapeError(f"mfcc_filters must be in [1, {ROWS}]")
    fb = _cached(("mel", n_filters, n_fft), lambda: mel_filterbank(n_filters, n_fft))
    dct = _cached(("dct", n_filters), lambda: dct_matrix(n_filters))
    logmel = np.log(np.maximum(fb @ power_spectrogram(buf.samples, n_fft), LOG_FLOOR))
    return _finish(FeatureKind.MFCC, dct @ logmel, buf, **src)


EXTRACTORS = {
    FeatureKind.SPEC: spectrogram_features,
    FeatureKind.MELSPEC: melspec_features,
    FeatureKind.MFCC: mfcc_features,
}


def compute_features(kind, buf: AudioBuffer, fft_bins: int = N_FFT, mfcc_filters: int = N_MFCC_FILTERS,
                     **src) -> FeatureMatrix:
    """Dispatch on kind. ``fft_bins`` is the FFT size (window stays 400 samples)."""
    kind = FeatureKind.parse(kind)
    if fft_bins < WINDOW:
        raise ValueError(f"fft_bins must be >= the {WINDOW}-sample window")
    if kind == FeatureKind.MFCC:
        return mfcc_features(buf, mfcc_filters, fft_bins, **src)
    return EXTRACTORS[kind](buf, fft_bins, **src)


# -------------------------------------------------------------------------- files


def write_feature_file(path, fm: FeatureMatrix) -> None:
    """32-byte header (magic, version, kind, valid_frames, label, rows, cols, 0) + float32 LE grid."""
    header = MAGIC + struct.pack("<7i", FORMAT_VERSION, int(fm.kind), fm.valid_frames, fm.label, ROWS, COLS, 0)
    assert len(header) == HEADER_SIZE
    Path(path).write_bytes(header + fm.data.astype("<f4").tobytes())


def read_feature_file(path) -> FeatureMatrix:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC or len(raw) < HEADER_SIZE:
        raise ValueError(f"{path}: not a feature file")
    version, kind, valid, label, rows, cols, _ = struct.unpack_from("<7i", raw, 4)
    if version != FORMAT_VERSION or (rows, cols) != (ROWS, COLS):
        raise ShapeError(f"{path}: unsupported layout v{version} {rows}x{cols}")
    data = np.frombuffer(raw, dtype="<f4", offset=HEADER_SIZE, count=rows * cols).reshape(rows, cols)
    return FeatureMatrix(FeatureKind(kind), data.astype(np.float64), valid, label=label)


def write_index(path, entries: list[dict], **extra) -> None:
    Path(path).write_text(json.dumps({**extra, "files": entries}, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def read_index(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
