import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dct2_direct, naive_dft
from ser.audio_io import AudioClip
from ser.dsp import (
    DspConfig,
    dct2_orthonormal,
    dct_matrix,
    featurize,
    fft_radix2,
    hann,
    hz_to_mel,
    log_mel,
    mel_filterbank,
    mel_to_hz,
    mfcc,
    minmax_normalize,
    resize_bilinear,
    stft,
    time_average,
    to_feature_vector,
)


def test_fft_impulse_and_constant():
    np.testing.assert_allclose(fft_radix2([1, 0, 0, 0]), [1, 1, 1, 1])
    np.testing.assert_allclose(fft_radix2([1, 1, 1, 1]), [4, 0, 0, 0], atol=1e-15)


def test_fft_cosine_puts_energy_in_two_bins():
    x = np.cos(2 * np.pi * np.arange(8) / 8)
    out = fft_radix2(x)
    expected = np.zeros(8)
    expected[[1, 7]] = 4
    np.testing.assert_allclose(out, expected, atol=1e-12)


@pytest.mark.parametrize("n", [2, 4, 16, 64, 256])
def test_fft_matches_naive_dft(n):
    rng = np.random.default_rng(n)
    x = rng.normal(size=n) + 1j * rng.normal(size=n)
    ref = naive_dft(x)
    assert np.abs(fft_radix2(x) - ref).max() <= 1e-6 * np.abs(ref).max()


def test_fft_batched_rows_match_single_rows():
    x = np.random.default_rng(0).normal(size=(3, 32))
    out = fft_radix2(x)
    for row_in, row_out in zip(x, out):
        np.testing.assert_allclose(fft_radix2(row_in), row_out)


def test_fft_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        fft_radix2(np.zeros(12))


def test_inverse_round_trip():
    x = np.random.default_rng(1).normal(size=1024)
    np.testing.assert_allclose(fft_radix2(fft_radix2(x), inverse=True).real, x, atol=1e-12)


def test_hann_is_periodic():
    w = hann(8)
    assert w[0] == 0.0
    assert w[4] == pytest.approx(1.0)
    np.testing.assert_allclose(w[1:4], w[7:4:-1])


def test_stft_shape_for_default_clip():
    clip = AudioClip(np.zeros(88200), 22050)
    ps = stft(clip)
    assert ps.values.shape == (1025, 173)
    assert np.all(ps.values == 0)
    assert ps.bin_hz == pytest.approx(22050 / 2048)


def test_stft_frame_matches_naive_dft_of_windowed_frame():
    sr = 22050
    t = np.arange(88200) / sr
    x = 0.5 * np.sin(2 * np.pi * 1000 * t)
    ps = stft(AudioClip(x, sr))
    frame = 40
    seg = x[frame * 512 - 1024 : frame * 512 + 1024] * hann(2048)
    ref = np.abs(naive_dft(seg, bins=np.arange(60, 130))) ** 2
    np.testing.assert_allclose(ps.values[60:130, frame], ref, rtol=1e-9, atol=1e-9)
    interior = ps.values[:, 2:-2]
    assert np.all(interior.argmax(axis=0) == 93)


def test_mel_scale_examples():
    assert hz_to_mel(0.0) == 0.0
    assert hz_to_mel(700.0) == pytest.approx(2595 * math.log10(2))
    assert mel_to_hz(hz_to_mel(1234.5)) == pytest.approx(1234.5)
    with pytest.raises(ValueError):
        hz_to_mel(-1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 20000.0))
def test_mel_round_trip(f):
    assert mel_to_hz(hz_to_mel(f)) == pytest.approx(f, rel=1e-9, abs=1e-9)


def test_filterbank_structure():
    fb = mel_filterbank()
    assert fb.shape == (128, 1025)
    np.testing.assert_allclose(fb.max(axis=1), 1.0)
    assert np.all(fb >= 0)
    for row in fb:
        nz = np.flatnonzero(row)
        assert np.all(np.diff(nz) == 1)  # single contiguous support
    centers = fb.argmax(axis=1)
    assert np.all(np.diff(centers) >= 0)
    # interior bins are covered by at least one filter
    covered = fb.sum(axis=0) > 0
    assert covered[centers[0] : centers[-1]].all()


def test_filterbank_rejects_bad_ranges():
    with pytest.raises(ValueError):
        mel_filterbank(fmin=5000, fmax=4000)
    with pytest.raises(ValueError):
        mel_filterbank(n_mels=2000, n_fft=256)


def test_log_mel_floor_and_gain():
    fb = mel_filterbank(8, 64, 8000)
    zeros = np.zeros((33, 5))
    assert np.all(log_mel(zeros, fb).values == -100.0)
    ones = np.ones((33, 5))
    diff = log_mel(10 * ones, fb).values - log_mel(ones, fb).values
    np.testing.assert_allclose(diff, 10.0)


def test_white_noise_band_means_match_explicit_sums():
    rng = np.random.default_rng(7)
    clip = AudioClip(0.1 * rng.normal(size=22050), 22050)
    ps = stft(clip).values
    fb = mel_filterbank()
    got = log_mel(ps, fb).values.mean(axis=1)
    ref = []
    for m in range(0, 128, 9):
        band = [10 * math.log10(max(math.fsum(fb[m] * ps[:, t]), 1e-10)) for t in range(ps.shape[1])]
        ref.append(math.fsum(band) / len(band))
    np.testing.assert_allclose(got[::9], ref, rtol=1e-9)


def test_dct_examples():
    out = dct2_orthonormal(np.ones(4))
    np.testing.assert_allclose(out, [2.0, 0, 0, 0], atol=1e-12)
    x = np.random.default_rng(3).normal(size=12)
    np.testing.assert_allclose(dct2_orthonormal(x), dct2_direct(x), atol=1e-12)
    d = dct_matrix(128)
    assert np.abs(d @ d.T - np.eye(128)).max() < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=64))
def test_dct_preserves_energy(values):
    x = np.array(values)
    y = dct2_orthonormal(x)
    assert np.sum(y**2) == pytest.approx(np.sum(x**2), rel=1e-9, abs=1e-9)


def test_mfcc_shape_and_validation():
    lm = np.random.default_rng(0).normal(size=(128, 173))
    assert mfcc(lm).shape == (20, 173)
    with pytest.raises(ValueError):
        mfcc(lm[:10], 20)


def test_time_average_examples():
    np.testing.assert_allclose(time_average([[1.0, 3.0]]), [2.0])
    col = np.arange(5.0)[:, None]
    np.testing.assert_allclose(time_average(np.repeat(col, 7, axis=1)), np.arange(5.0))
    m = np.random.default_rng(2).normal(size=(20, 173)) * 50
    ref = [math.fsum(row) / len(row) for row in m]
    np.testing.assert_allclose(time_average(m), ref, atol=1e-9)
    with pytest.raises(ValueError):
        time_average(np.zeros((20, 0)))


def test_resize_examples():
    img = np.random.default_rng(0).normal(size=(5, 7))
    np.testing.assert_array_equal(resize_bilinear(img, 5, 7), img)
    out = resize_bilinear(np.array([[0.0, 1.0], [1.0, 2.0]]), 3, 3)
    np.testing.assert_allclose(out, [[0, 0.5, 1], [0.5, 1, 1.5], [1, 1.5, 2]])
    assert resize_bilinear(np.ones((128, 173)), 128, 128).shape == (128, 128)


def test_minmax_normalize():
    np.testing.assert_allclose(minmax_normalize([[1.0, 3.0], [2.0, 5.0]]), [[0, 0.5], [0.25, 1]])
    np.testing.assert_array_equal(minmax_normalize(np.full((2, 2), 7.0)), 0.5)
    with pytest.raises(ValueError):
        minmax_normalize(np.zeros((0, 3)))


def test_pipeline_shape_contract():
    t = np.arange(88200) / 22050
    clip = AudioClip(0.3 * np.sin(2 * np.pi * 440 * t), 22050)
    assert featurize(clip, "logmel").shape == (128, 173)
    assert featurize(clip, "mfcc").shape == (20, 173)
    assert featurize(clip, "mfcc-mean").shape == (20,)
    np.testing.assert_allclose(to_feature_vector(featurize(clip, "logmel")), featurize(clip, "mfcc-mean"))


def test_featurize_resamples_and_fixes_duration():
    clip = AudioClip(np.random.default_rng(0).normal(size=16000) * 0.1, 16000)
    assert featurize(clip, "logmel", DspConfig()).shape == (128, 173)
    with pytest.raises(ValueError):
        featurize(clip, "chroma")
