"""Monophonic f0 tracking by harmonic summation over spectral peaks."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import median_filter

from .audio_io import AudioBuffer, resample

REF_HZ = 55.0
GRID_MIN_HZ = 55.0
GRID_MAX_HZ = 1760.0
GRID_STEP_CENTS = 10.0

DEFAULT_RATE = 44100
DEFAULT_WINDOW = 2048
DEFAULT_HOP = 256
DEFAULT_HARMONICS = 8
DEFAULT_DECAY = 0.8
DEFAULT_VOICING = 0.2

# Half-width of the harmonic matching tolerance, in cents.
MATCH_CENTS = 50.0
MEDIAN_SECONDS = 2.0
OCTAVE_JUMP_CENTS = 1150.0


def hz_to_cents(f):
    f = np.asarray(f, dtype=np.float64)
    if np.any(~(f > 0)):
        raise ValueError("frequency must be positive")
    out = 1200.0 * np.log2(f / REF_HZ)
    return float(out) if out.ndim == 0 else out


def cents_to_hz(c):
    return REF_HZ * np.power(2.0, np.asarray(c, dtype=np.float64) / 1200.0)


def salience_grid() -> np.ndarray:
    """Centre frequencies (Hz) of the 10-cent candidate grid."""
    n = int(round(1200 * math.log2(GRID_MAX_HZ / GRID_MIN_HZ) / GRID_STEP_CENTS)) + 1
    return GRID_MIN_HZ * 2.0 ** (np.arange(n) * GRID_STEP_CENTS / 1200.0)


@dataclass
class PitchTrack:
    times: np.ndarray
    f0_cents: np.ndarray  # NaN marks an unvoiced frame
    salience: np.ndarray
    hop_samples: int
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.f0_cents = np.asarray(self.f0_cents, dtype=np.float64)
        self.salience = np.asarray(self.salience, dtype=np.float64)
        if not (len(self.times) == len(self.f0_cents) == len(self.salience)):
            raise ValueError("PitchTrack columns differ in length")

    def __len__(self):
        return len(self.times)

    @property
    def voiced(self) -> np.ndarray:
        return np.isfinite(self.f0_cents)

    @property
    def hop_seconds(self) -> float:
        return self.hop_samples / self.sample_rate

    def validate(self) -> None:
        if len(self.times) > 1:
            step = np.diff(self.times)
            if np.any(step <= 0) or not np.allclose(step, self.hop_seconds, rtol=1e-9, atol=1e-9):
                raise ValueError("frame times must advance by hop_samples / sample_rate")
        v = self.voiced
        if np.any(self.salience[v] <= 0):
            raise ValueError("voiced frame with zero salience")

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["time_s", "f0_cents", "salience"])
        for t, c, s in zip(self.times, self.f0_cents, self.salience):
            w.writerow([repr(float(t)), "" if not np.isfinite(c) else repr(float(c)), repr(float(s))])
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str, hop_samples: int = DEFAULT_HOP, sample_rate: int = DEFAULT_RATE,
                 source_id: str = "") -> "PitchTrack":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["time_s", "f0_cents", "salience"]:
            raise ValueError("expected header time_s,f0_cents,salience")
        body = rows[1:]
        times = [float(r[0]) for r in body]
        cents = [float(r[1]) if r[1] != "" else math.nan for r in body]
        sal = [float(r[2]) for r in body]
        track = cls(np.array(times), np.array(cents), np.array(sal), hop_samples, sample_rate, source_id)
        track.validate()
        return track


# ---------------------------------------------------------------------------- STFT


def stft(buf: AudioBuffer, window_samples: int, hop_samples: int) -> np.ndarray:
    """Hann-windowed one-sided STFT, frames x (fft_size // 2 + 1)."""
    x = buf.samples
    if window_samples > len(x):
        raise ValueError(f"window of {window_samples} samples exceeds signal length {len(x)}")
    if hop_samples < 1:
        raise ValueError("hop must be >= 1")
    nfft = 1 << (window_samples - 1).bit_length()
    win = np.hanning(window_samples + 1)[:-1]  # periodic Hann
    frames = np.lib.stride_tricks.sliding_window_view(x, window_samples)[::hop_samples]
    return np.fft.rfft(frames * win, n=nfft, axis=1)


def _spectral_peaks(mag: np.ndarray, bin_hz: float):
    """Local maxima refined by parabolic interpolation on log magnitude.

    Returns flat arrays (frame index, frequency Hz, magnitude).
    """
    left, mid, right = mag[:, :-2], mag[:, 1:-1], mag[:, 2:]
    is_peak = (mid > left) & (mid >= right) & (mid > 0)
    fi, bi = np.nonzero(is_peak)
    a = np.log(left[fi, bi] + 1e-300)
    b = np.log(mid[fi, bi])
    c = np.log(right[fi, bi] + 1e-300)
    denom = a - 2 * b + c
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(denom < 0, 0.5 * (a - c) / denom, 0.0)
    delta = np.clip(delta, -0.5, 0.5)
    freq = (bi + 1 + delta) * bin_hz
    amp = np.exp(b - 0.25 * (a - c) * delta)
    return fi, freq, amp


def salience(mag: np.ndarray, sample_rate: int, fft_size: int,
             n_harmonics: int = DEFAULT_HARMONICS, decay: float = DEFAULT_DECAY) -> np.ndarray:
    """Harmonic-summation salience on the 10-cent grid.

    ``mag`` is one magnitude frame (bins,) or a stack (frames, bins). Each
    harmonic ``h`` of a candidate contributes ``decay**(h-1)`` times the
    strongest nearby spectral peak, weighted by a cos^2 taper over
    +/- 50 cents around ``h`` times the candidate frequency.
    """
    if not 0 < decay <= 1:
        raise ValueError("decay must be in (0, 1]")
    single = mag.ndim == 1
    mag = np.atleast_2d(np.abs(mag))
    grid = salience_grid()
    n_frames, n_bins = mag.shape[0], len(grid)
    out = np.zeros((n_frames, n_bins))
    fi, freq, amp = _spectral_peaks(mag, sample_rate / fft_size)
    # Peaks more than 80 dB below the frame maximum are noise.
    keep = (freq > 0) & (amp >= 1e-4 * mag.max(axis=1)[fi])
    fi, freq, amp = fi[keep], freq[keep], amp[keep]
    if len(fi) == 0:
        return out[0] if single else out
    half = int(MATCH_CENTS // GRID_STEP_CENTS)
    offsets = np.arange(-half, half + 1)
    for h in range(1, n_harmonics + 1):
        pos = hz_to_cents(freq / h) / GRID_STEP_CENTS  # fractional grid index of candidate f0
        centre = np.round(pos).astype(np.int64)
        best = np.zeros((n_frames, n_bins))
        for off in offsets:
            b = centre + off
            ok = (b >= 0) & (b < n_bins)
            dist = np.abs(b[ok] - pos[ok]) * GRID_STEP_CENTS
            w = np.where(dist < MATCH_CENTS, np.cos(0.5 * np.pi * dist / MATCH_CENTS) ** 2, 0.0)
            np.maximum.at(best, (fi[ok], b[ok]), amp[ok] * w)
        out += decay ** (h - 1) * best
    return out[0] if single else out


# -------------------------------------------------------------------------- track


def _refine(sal_row: np.ndarray, i: int) -> float:
    """Parabolic refinement of a salience maximum, in grid units."""
    if 0 < i < len(sal_row) - 1:
        a, b, c = sal_row[i - 1], sal_row[i], sal_row[i + 1]
        d = a - 2 * b + c
        if d < 0:
            return i + float(np.clip(0.5 * (a - c) / d, -0.5, 0.5))
    return float(i)


def _voiced_median(cents: np.ndarray, width: int) -> np.ndarray:
    out = cents.copy()
    half = width // 2
    n = len(cents)
    for i in np.flatnonzero(np.isfinite(cents)):
        w = cents[max(0, i - half) : min(n, i + half + 1)]
        out[i] = np.median(w[np.isfinite(w)])
    return out


def track_f0(sal: np.ndarray, voicing_threshold: float = DEFAULT_VOICING,
             hop_samples: int = DEFAULT_HOP, sample_rate: int = DEFAULT_RATE,
             source_id: str = "", window_samples: int = DEFAULT_WINDOW) -> PitchTrack:
    sal = np.atleast_2d(sal)
    n = sal.shape[0]
    peak = sal.max(axis=1) if n else np.zeros(0)
    best = sal.argmax(axis=1) if n else np.zeros(0, dtype=int)
    span = max(1, int(round(MEDIAN_SECONDS * sample_rate / hop_samples)) | 1)
    running = median_filter(peak, size=span, mode="nearest") if n else peak
    voiced = (peak > 0) & (peak >= voicing_threshold * running)

    cents = np.full(n, np.nan)
    for i in np.flatnonzero(voiced):
        cents[i] = _refine(sal[i], int(best[i])) * GRID_STEP_CENTS + hz_to_cents(GRID_MIN_HZ)

    cents = _voiced_median(cents, 5)
    # Isolated octave jumps survive the median only at run edges; patch them.
    for i in range(1, n - 1):
        a, c, b = cents[i - 1], cents[i], cents[i + 1]
        if np.isfinite(a) and np.isfinite(b) and np.isfinite(c):
            if abs(c - a) >= OCTAVE_JUMP_CENTS and abs(c - b) >= OCTAVE_JUMP_CENTS:
                cents[i] = 0.5 * (a + b)

    # Frame t is stamped at the centre of its analysis window.
    times = (np.arange(n) * hop_samples + window_samples / 2) / sample_rate
    return PitchTrack(times, cents, np.where(voiced, peak, 0.0), hop_samples, sample_rate, source_id)


def extract_f0(buf: AudioBuffer, window_samples: int = DEFAULT_WINDOW, hop_samples: int = DEFAULT_HOP,
               n_harmonics: int = DEFAULT_HARMONICS, decay: float = DEFAULT_DECAY,
               voicing_threshold: float = DEFAULT_VOICING, sample_rate: int = DEFAULT_RATE) -> PitchTrack:
    if buf.sample_rate != sample_rate:
        buf = resample(buf, sample_rate)
    spec = stft(buf, window_samples, hop_samples)
    nfft = 2 * (spec.shape[1] - 1)
    mag = np.abs(spec)
    chunks = [salience(mag[i : i + 512], sample_rate, nfft, n_harmonics, decay) for i in range(0, len(mag), 512)]
    sal = np.concatenate(chunks) if chunks else np.zeros((0, len(salience_grid())))
    return track_f0(sal, voicing_threshold, hop_samples, sample_rate, buf.source_id, window_samples)
