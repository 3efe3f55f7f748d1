import logging
import math

import numpy as np
import pytest

from flamenco_sid.audio_io import AudioBuffer
from flamenco_sid.features import (COLS, DB_FLOOR, LOG_FLOOR, ROWS, FeatureKind, FeatureMatrix, ShapeError,
                                   compute_features, dct_matrix, hz_to_mel, mel_centers, mel_filterbank,
                                   mel_response, melspec_features, mfcc_features, pad_to_shape, power_spectrogram,
                                   read_feature_file, rebin_matrix, spectrogram_features, write_feature_file)

RATE = 16000


def tone(freq, seconds=1.0, amp=0.5):
    t = np.arange(int(seconds * RATE)) / RATE
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t), RATE)


def test_frame_count_for_three_seconds():
    fm = melspec_features(AudioBuffer(np.random.default_rng(0).normal(0, 0.1, 3 * RATE), RATE))
    assert fm.valid_frames == 298 == 1 + (48000 - 400) // 160
    assert fm.data.shape == (ROWS, COLS)
    assert not fm.data[:, 298:].any()


def test_silence():
    z = AudioBuffer(np.zeros(RATE), RATE)
    spec = spectrogram_features(z)
    n = spec.valid_frames
    assert np.all(spec.data[:, :n] == DB_FLOOR) and not spec.data[:, n:].any()
    mel = melspec_features(z)
    assert np.all(mel.data[:, :n] == pytest.approx(math.log(LOG_FLOOR)))
    mf = mfcc_features(z)
    assert np.allclose(mf.data[0, :n], math.sqrt(40) * math.log(LOG_FLOOR))
    assert np.allclose(mf.data[1:40, :n], 0.0, atol=1e-9)
    assert not mf.data[40:].any()


def test_empty_and_wrong_rate():
    with pytest.raises(ValueError):
        spectrogram_features(AudioBuffer(np.zeros(0), RATE))
    with pytest.raises(ValueError):
        melspec_features(AudioBuffer(np.zeros(1000), 44100))


def test_spectrogram_1khz_row():
    fm = spectrogram_features(tone(1000.0))
    # 1 kHz is FFT bin 25 of 201; the rebinning oracle puts most of its area in one row
    expected = np.argmax(rebin_matrix(201, ROWS)[:, 25])
    assert expected == 16  # bin [25, 26) vs row 16 = [25.13, 26.70)
    assert np.all(np.argmax(fm.data[:, : fm.valid_frames], axis=0) == expected)
    assert fm.data.max() == 0.0


def test_melspec_1khz_band():
    fm = melspec_features(tone(1000.0))
    target = np.argmin(np.abs(hz_to_mel(mel_centers(ROWS)) - 1127 * math.log(1 + 1000 / 700)))
    assert np.all(np.argmax(fm.data[:, : fm.valid_frames], axis=0) == target)


def test_mel_formula_matches_natural_log_form():
    f = np.linspace(0, 8000, 50)
    np.testing.assert_allclose(hz_to_mel(f), 1127 * np.log(1 + f / 700), rtol=1e-5)


def test_filterbank_shape_and_unimodal():
    fb = mel_filterbank(ROWS)
    assert fb.shape == (ROWS, 201)
    assert np.all(fb >= 0) and np.all(fb <= 1 + 1e-12)
    for row in fb:
        nz = row[row > 0]
        peak = int(np.argmax(nz))
        assert np.all(np.diff(nz[: peak + 1]) >= -1e-12) and np.all(np.diff(nz[peak:]) <= 1e-12)
    wide = mel_filterbank(40, 4096)
    assert np.all(wide.max(axis=1) > 0.95)  # bin averaging shaves the apex of narrow triangles
    resp = mel_response(mel_centers(ROWS), ROWS)
    np.testing.assert_allclose(np.diag(resp), 1.0)


def test_flat_spectrum_gives_row_sums():
    fb = mel_filterbank(ROWS)
    flat = np.ones((201, 3))
    np.testing.assert_allclose(fb @ flat, np.repeat(fb.sum(axis=1)[:, None], 3, axis=1), rtol=1e-12)


def test_dct_orthonormal():
    for n in (8, 40, 128):
        m = dct_matrix(n)
        assert np.max(np.abs(m @ m.T - np.eye(n))) < 1e-10


def test_energy_scaling():
    x = np.random.default_rng(2).normal(0, 0.1, 4000)
    p1 = power_spectrogram(x)
    p3 = power_spectrogram(3.0 * x)
    np.testing.assert_allclose(p3, 9.0 * p1, rtol=1e-12)


def _direct_mfcc(frame, n_filters=40):
    """Straight-line reference: explicit DFT sum, the filterbank, log, explicit DCT-II sum."""
    n = len(frame)
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    xw = frame * w
    power = np.zeros(n // 2 + 1)
    for k in range(n // 2 + 1):
        ang = -2j * np.pi * k * np.arange(n) / n
        power[k] = abs(np.sum(xw * np.exp(ang))) ** 2
    logmel = np.log(np.maximum(mel_filterbank(n_filters) @ power, LOG_FLOOR))
    out = np.zeros(n_filters)
    for k in range(n_filters):
        scale = math.sqrt(1.0 / n_filters) if k == 0 else math.sqrt(2.0 / n_filters)
        out[k] = scale * sum(logmel[i] * math.cos(math.pi * k * (2 * i + 1) / (2 * n_filters))
                             for i in range(n_filters))
    return out


def test_mfcc_matches_direct_oracle():
    x = np.random.default_rng(3).normal(0, 0.3, 400)
    fm = mfcc_features(AudioBuffer(x, RATE))
    assert fm.valid_frames == 1
    ref = _direct_mfcc(x)
    np.testing.assert_allclose(fm.data[:40, 0], ref, rtol=1e-6, atol=1e-9)
    assert not fm.data[40:].any()


def test_feature_options():
    buf = tone(440.0, 0.5)
    a = compute_features("mfcc", buf, mfcc_filters=20)
    assert a.data[:20].any() and not a.data[20:].any()
    b = compute_features("melspec", buf, fft_bins=512)
    assert b.kind == FeatureKind.MELSPEC and b.data.shape == (ROWS, COLS)
    with pytest.raises(ValueError):
        compute_features("spec", buf, fft_bins=256)
    with pytest.raises(ShapeError):
        compute_features("mfcc", buf, mfcc_filters=129)
    with pytest.raises(KeyError):
        FeatureKind.parse("cqt")


def test_pad_to_shape(caplog):
    m = np.ones((128, 300))
    p = pad_to_shape(m)
    assert p.shape == (ROWS, COLS) and not p[:, 300:].any()
    np.testing.assert_array_equal(pad_to_shape(p), p)
    with caplog.at_level(logging.WARNING):
        t = pad_to_shape(np.ones((128, 500)))
    assert t.shape == (ROWS, COLS) and "truncating" in caplog.text
    with pytest.raises(ShapeError):
        pad_to_shape(np.ones((129, 10)))
    r = np.random.default_rng(0).normal(size=(40, 200))
    np.testing.assert_array_equal(pad_to_shape(pad_to_shape(r)), pad_to_shape(r))


def test_feature_matrix_invariants():
    with pytest.raises(ShapeError):
        FeatureMatrix(FeatureKind.SPEC, np.zeros((128, 10)), 10)
    bad = np.zeros((ROWS, COLS))
    bad[0, 0] = np.inf
    with pytest.raises(ValueError):
        FeatureMatrix(FeatureKind.SPEC, bad, 1)


def test_feature_file_round_trip(tmp_path):
    fm = melspec_features(tone(300.0, 2.0))
    fm.label = 3
    write_feature_file(tmp_path / "a.fmtx", fm)
    raw = (tmp_path / "a.fmtx").read_bytes()
    assert raw[:4] == b"FMTX" and len(raw) == 32 + 4 * ROWS * COLS
    back = read_feature_file(tmp_path / "a.fmtx")
    assert back.kind == FeatureKind.MELSPEC and back.valid_frames == fm.valid_frames and back.label == 3
    np.testing.assert_array_equal(back.data, fm.data.astype(np.float32))
    (tmp_path / "b.fmtx").write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(ValueError):
        read_feature_file(tmp_path / "b.fmtx")
