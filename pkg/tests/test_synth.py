import json

import numpy as np
import pytest

from flamenco_sid.audio_io import load_manifest, load_wav
from flamenco_sid.contour import contours_from_track
from flamenco_sid.mining import SequenceDatabase, build_dictionary
from flamenco_sid.pitch import extract_f0
from flamenco_sid.synth import (BREATH_SECONDS, SingerProfile, default_profiles, generate_corpus, load_profiles,
                                synthesize_recording)


def plain(name="P", grammar=(((2, -1), 1.0),), **kw):
    kw.setdefault("base_cents", 2400)
    kw.setdefault("scale", [0, 200, 400, 500, 700, 900, 1100])
    return SingerProfile(name, list(grammar), **kw)


def test_same_seed_same_audio_and_log():
    p = default_profiles()[0]
    a, log_a = synthesize_recording(p, 10, seed=4, return_log=True)
    b, log_b = synthesize_recording(p, 10, seed=4, return_log=True)
    assert np.array_equal(a.samples, b.samples) and log_a == log_b
    c = synthesize_recording(p, 10, seed=5)
    assert not np.array_equal(a.samples, c.samples)
    assert len(a.samples) == 10 * a.sample_rate and np.abs(a.samples).max() == pytest.approx(0.5)


def test_corpus_files_are_byte_identical(tmp_path):
    profs = default_profiles()[:1]
    for d in ("a", "b"):
        generate_corpus(tmp_path / d, profs, n_recordings=3, duration=6, seed=2)
    names = sorted(f.name for f in (tmp_path / "a").iterdir())
    assert names == sorted(f.name for f in (tmp_path / "b").iterdir())
    assert {"manifest.json", "profiles.json", "truth.json", "S1_r0.wav"} <= set(names)
    for n in names:
        if n != "manifest.json":  # the manifest stores absolute paths
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
    corpus = load_manifest(tmp_path / "a" / "manifest.json")
    assert [r.singer for r in corpus.recordings] == ["S1"] * 3
    assert load_profiles(tmp_path / "a" / "profiles.json") == profs


def test_phrase_log_realises_the_grammar():
    p = default_profiles()[2]
    _, phrases = synthesize_recording(p, 30, seed=1, return_log=True, pause_prob=0)
    allowed = {pat for pat, _ in p.grammar}
    for ph in phrases:
        steps = list(np.diff(ph["degrees"]))
        pos = 0
        for m in ph["motifs"]:
            assert tuple(m) in allowed
            assert steps[pos : pos + len(m)] == m
            pos += len(m) + 1  # one linking step between consecutive motifs
        assert 0 <= min(ph["degrees"]) and max(ph["degrees"]) < len(p.scale)


def test_pause_switch():
    p = default_profiles()[1]
    _, tight = synthesize_recording(p, 30, seed=2, return_log=True, pause_prob=0)
    gaps = [b["start_s"] - a["end_s"] for a, b in zip(tight, tight[1:])]
    np.testing.assert_allclose(gaps, BREATH_SECONDS, atol=1e-4)
    _, loose = synthesize_recording(p, 30, seed=2, return_log=True, pause_prob=1, pause_seconds=(2.5, 3.0))
    gaps = [b["start_s"] - a["end_s"] for a, b in zip(loose, loose[1:])]
    assert all(2.8 - 1e-4 <= g <= 3.3 + 1e-4 for g in gaps)


def test_steady_notes_are_tracked_within_15_cents():
    p = plain(vibrato_depth=0, jitter=0)
    buf = synthesize_recording(p, 8, seed=0, pause_prob=0)
    track = extract_f0(buf)
    v = track.f0_cents[track.voiced]
    targets = p.base_cents + np.array(p.scale)
    err = np.min(np.abs(v[:, None] - targets[None, :]), axis=1)
    # frames straddling a note change may sit between two targets
    assert np.mean(err < 15) > 0.9
    assert np.median(err) < 5


def test_disjoint_grammars_share_no_motifs(tmp_path):
    up = plain("UP", [((1, 1, 1), 1.0)], base_cents=2400, vibrato_depth=5, jitter=0, motifs_per_phrase=(1, 1))
    down = plain("DN", [((-2, -2, -2), 1.0)], base_cents=2300, vibrato_depth=5, jitter=0, motifs_per_phrase=(1, 1))
    corpus = generate_corpus(tmp_path, [up, down], n_recordings=3, duration=15, seed=1, pause_prob=0)
    dbs = {}
    for rec in corpus.recordings:
        _, seqs = contours_from_track(extract_f0(load_wav(rec.path)))
        dbs.setdefault(rec.singer, SequenceDatabase(rec.singer)).contours.extend(seqs)
    a, b = build_dictionary([dbs["DN"], dbs["UP"]], min_support=3)
    assert a.motifs and b.motifs
    assert not {m.pattern for m in a.motifs} & {m.pattern for m in b.motifs}


def test_profile_validation():
    with pytest.raises(ValueError):
        plain(grammar=[((1, 1), 0.5)])
    with pytest.raises(ValueError):
        plain(grammar=[((1, 0), 1.0)])
    with pytest.raises(ValueError):
        plain(grammar=[((3, 3, 3), 1.0)])
    with pytest.raises(ValueError):
        plain(scale=[0, 200, 100])
    with pytest.raises(ValueError):
        plain(vibrato_depth=-1)
    with pytest.raises(ValueError):
        synthesize_recording(plain(), 4, seed=0)
    p = default_profiles()[3]
    assert SingerProfile.from_dict(json.loads(json.dumps(p.to_dict()))) == p
