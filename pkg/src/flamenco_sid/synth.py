"""Synthetic a cappella corpus with planted motif grammars and per-singer timbre."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import AudioBuffer, Corpus, Recording, write_manifest, write_wav
from .pitch import cents_to_hz

SAMPLE_RATE = 44100
BREATH_SECONDS = 0.3
FADE_SECONDS = 0.01
PAUSE_PROB = 0.5  # chance of a longer silent pause after a phrase
PAUSE_SECONDS = (2.5, 5.0)


@dataclass
class SingerProfile:
    name: str
    grammar: list[tuple[tuple[int, ...], float]]
    base_cents: float
    scale: list[float]  # degree offsets in cents above base, ascending
    vibrato_rate: float = 5.5
    vibrato_depth: float = 15.0
    harmonics: list[float] = field(default_factory=lambda: [1.0, 0.5, 0.33, 0.25, 0.2, 0.16, 0.14, 0.12])
    jitter: float = 5.0
    note_seconds: tuple[float, float] = (0.18, 0.34)
    motifs_per_phrase: tuple[int, int] = (2, 3)

    def __post_init__(self):
        self.grammar = [(tuple(int(s) for s in p), float(w)) for p, w in self.grammar]
        total = sum(w for _, w in self.grammar)
        if not self.grammar or abs(total - 1.0) > 1e-9:
            raise ValueError(f"{self.name}: emission probabilities must sum to 1 (got {total})")
        if self.vibrato_depth < 0 or self.vibrato_rate < 0:
            raise ValueError("vibrato rate and depth must be >= 0")
        if any(b <= a for a, b in zip(self.scale[:-1], self.scale[1:])):
            raise ValueError("scale must be strictly ascending")
        for p, _ in self.grammar:
            if any(s == 0 for s in p):
                raise ValueError("motif steps must be nonzero")
            lo, hi = _excursion(p)
            if hi - lo >= len(self.scale):
                raise ValueError(f"motif {p} does not fit a {len(self.scale)}-degree scale")

    def to_dict(self):
        d = asdict(self)
        d["grammar"] = [[list(p), w] for p, w in self.grammar]
        return d

    @classmethod
    def from_dict(cls, d) -> "SingerProfile":
        d = dict(d)
        d["grammar"] = [(tuple(p), w) for p, w in d["grammar"]]
        for key in ("note_seconds", "motifs_per_phrase"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _excursion(pattern):
    pos = np.concatenate([[0], np.cumsum(pattern)])
    return int(pos.min()), int(pos.max())


def _phrase_degrees(profile: SingerProfile, rng: np.random.Generator):
    """Degree sequence of one phrase and the grammar patterns it realises."""
    n_deg = len(profile.scale)
    pats = [p for p, _ in profile.grammar]
    probs = np.array([w for _, w in profile.grammar])
    count = int(rng.integers(profile.motifs_per_phrase[0], profile.motifs_per_phrase[1] + 1))
    degrees: list[int] = []
    used = []
    for _ in range(count):
        p = pats[int(rng.choice(len(pats), p=probs))]
        lo, hi = _excursion(p)
        starts = [s for s in range(-lo, n_deg - hi) if not degrees or s != degrees[-1]]
        start = int(rng.choice(starts))
        degrees.extend(int(start + x) for x in np.concatenate([[0], np.cumsum(p)]))
        used.append(p)
    return degrees, used


def synthesize_recording(profile: SingerProfile, duration: float, seed: int,
                         source_id: str = "", return_log: bool = False,
                         pause_prob: float = PAUSE_PROB, pause_seconds=PAUSE_SECONDS):
    """Additive-harmonic rendering of sampled motif phrases separated by breath gaps.

    After each phrase's breath gap a silent pause of ``pause_seconds`` follows
    with probability ``pause_prob``, so recordings contain audio that no
    motif covers.
    """
    if duration < 5:
        raise ValueError("duration must be >= 5 s")
    rng = np.random.default_rng(seed)
    n_total = int(round(duration * SAMPLE_RATE))
    cents = np.full(n_total, np.nan)
    phrases = []
    pos = int(round(BREATH_SECONDS * SAMPLE_RATE))
    while True:
        degrees, used = _phrase_degrees(profile, rng)
        lengths = [int(round(rng.uniform(*profile.note_seconds) * SAMPLE_RATE)) for _ in degrees]
        if pos + sum(lengths) + int(BREATH_SECONDS * SAMPLE_RATE) > n_total:
            break
        start = pos
        for d, n in zip(degrees, lengths):
            offset = rng.normal(0.0, profile.jitter) if profile.jitter > 0 else 0.0
            cents[pos : pos + n] = profile.base_cents + profile.scale[d] + offset
            pos += n
        phrases.append({"start_s": start / SAMPLE_RATE, "end_s": pos / SAMPLE_RATE,
                        "degrees": degrees, "motifs": [list(p) for p in used]})
        pos += int(round(BREATH_SECONDS * SAMPLE_RATE))
        if pause_prob > 0 and rng.random() < pause_prob:
            pos += int(round(rng.uniform(*pause_seconds) * SAMPLE_RATE))

    voiced = np.isfinite(cents)
    t = np.arange(n_total) / SAMPLE_RATE
    vib = profile.vibrato_depth * np.sin(2 * np.pi * profile.vibrato_rate * t + rng.uniform(0, 2 * np.pi))
    f0 = cents_to_hz(np.where(voiced, cents + vib, 0.0))
    phase = 2 * np.pi * np.cumsum(np.where(voiced, f0, 0.0)) / SAMPLE_RATE

    env = np.zeros(n_total)
    fade = int(FADE_SECONDS * SAMPLE_RATE)
    for ph in phrases:
        a, b = int(round(ph["start_s"] * SAMPLE_RATE)), int(round(ph["end_s"] * SAMPLE_RATE))
        env[a:b] = 1.0
        env[a : a + fade] = np.linspace(0, 1, fade)
        env[b - fade : b] = np.linspace(1, 0, fade)

    x = np.zeros(n_total)
    for h, amp in enumerate(profile.harmonics, start=1):
        ok = voiced & (h * f0 < 0.45 * SAMPLE_RATE)
        x += np.where(ok, amp * np.sin(h * phase), 0.0)
    x *= env
    peak = np.abs(x).max()
    if peak > 0:
        x *= 0.5 / peak
    buf = AudioBuffer(x, SAMPLE_RATE, source_id)
    return (buf, phrases) if return_log else buf


# ----------------------------------------------------------------------- profiles


def default_profiles() -> list[SingerProfile]:
    """Five singers differing in grammar, register, scale, vibrato and harmonic envelope.

    Each grammar leads with a signature motif drawn often enough to appear in
    most phrases.
    """
    return [
        SingerProfile("S1", [((2, -1, 2), 0.6), ((1, 1, -3), 0.25), ((-1, 2, -1), 0.15)],
                      base_cents=2500, scale=[0, 180, 350, 520, 700, 880, 1050],
                      vibrato_rate=5.0, vibrato_depth=12, jitter=4,
                      harmonics=[1.0, 0.6, 0.4, 0.25, 0.15, 0.1, 0.06, 0.04]),
        SingerProfile("S2", [((-2, 1, -2), 0.6), ((3, -1, -1), 0.25), ((1, -2, 1), 0.15)],
                      base_cents=2000, scale=[0, 200, 390, 560, 760, 950, 1120],
                      vibrato_rate=6.0, vibrato_depth=18, jitter=5,
                      harmonics=[1.0, 0.8, 0.7, 0.5, 0.4, 0.3, 0.2, 0.15]),
        SingerProfile("S3", [((1, 2, -1, -2), 0.6), ((-1, -1, 3), 0.25), ((2, -3, 1), 0.15)],
                      base_cents=3100, scale=[0, 150, 320, 500, 650, 820, 1000],
                      vibrato_rate=4.5, vibrato_depth=10, jitter=4,
                      harmonics=[1.0, 0.3, 0.5, 0.15, 0.3, 0.08, 0.15, 0.04]),
        SingerProfile("S4", [((3, -2, 1), 0.6), ((-1, 3, -2), 0.25), ((1, 1, 1), 0.15)],
                      base_cents=2250, scale=[0, 220, 400, 610, 790, 990, 1180],
                      vibrato_rate=5.5, vibrato_depth=15, jitter=5,
                      harmonics=[1.0, 0.9, 0.3, 0.6, 0.2, 0.4, 0.1, 0.2]),
        SingerProfile("S5", [((-1, -1, 2, 1), 0.6), ((2, 2, -3), 0.25), ((-2, 3, -2), 0.15)],
                      base_cents=2800, scale=[0, 170, 340, 540, 710, 890, 1060],
                      vibrato_rate=6.5, vibrato_depth=14, jitter=3,
                      harmonics=[1.0, 0.45, 0.2, 0.1, 0.05, 0.03, 0.02, 0.01]),
    ]


def generate_corpus(out_dir, profiles: list[SingerProfile] | None = None, n_recordings: int = 4,
                    duration: float = 30.0, seed: int = 0, style: str = "synthetic",
                    pause_prob: float = PAUSE_PROB, pause_seconds=PAUSE_SECONDS) -> Corpus:
    """Render ``n_recordings`` per profile; writes WAVs, manifest.json, profiles.json and truth.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    profiles = profiles or default_profiles()
    recs = []
    truth = {}
    for si, prof in enumerate(profiles):
        for r in range(n_recordings):
            sid = f"{prof.name}_r{r}"
            buf, phrases = synthesize_recording(prof, duration, seed * 100003 + si * 1009 + r, sid,
                                                 return_log=True, pause_prob=pause_prob,
                                                 pause_seconds=tuple(pause_seconds))
            path = out / f"{sid}.wav"
            write_wav(path, buf)
            recs.append(Recording(path, prof.name, style))
            truth[sid] = {"singer": prof.name, "phrases": phrases}
    corpus = Corpus(recs)
    write_manifest(out / "manifest.json", corpus)
    (out / "profiles.json").write_text(json.dumps([p.to_dict() for p in profiles], indent=1) + "\n")
    (out / "truth.json").write_text(json.dumps(truth, indent=1, sort_keys=True) + "\n")
    return corpus


def load_profiles(path) -> list[SingerProfile]:
    return [SingerProfile.from_dict(d) for d in json.loads(Path(path).read_text())]
