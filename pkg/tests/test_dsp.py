import numpy as np
import pytest

from dccrnplus import dsp
from dccrnplus.wavio import WavFormatError, WavHeaderError, wav_read, wav_write

FR = dsp.Framing()


def test_framing_constants():
    assert (FR.frame_len, FR.hop, FR.fft_size, FR.n_bins) == (320, 160, 512, 257)


def test_frame_count():
    assert dsp.stft(np.zeros(16000)).shape == (99, 257)


def test_too_short_rejected():
    with pytest.raises(ValueError):
        dsp.stft(np.zeros(319))


def test_zeros():
    assert not np.any(dsp.stft(np.zeros(1000)))
    assert not np.any(dsp.istft(np.zeros((5, 257))))


def test_tone_peak_bin():
    n = np.arange(16000)
    x = np.sin(2 * np.pi * 1000 * n / 16000)
    spec = dsp.stft(x)
    # DFT oracle on frame 10: explicit sum over the windowed, zero-padded frame
    frame = np.zeros(512)
    frame[:320] = x[1600:1920] * dsp.sqrt_hann(320)
    k = np.arange(257)[:, None]
    oracle = (frame[None, :] * np.exp(-2j * np.pi * k * np.arange(512)[None, :] / 512)).sum(axis=1)
    np.testing.assert_allclose(spec[10], oracle, atol=1e-9)
    assert np.argmax(np.abs(spec[10])) == round(1000 * 512 / 16000) == 32


def test_round_trip_interior():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, 16000)
    y = dsp.istft(dsp.stft(x))
    interior = slice(FR.hop, len(y) - FR.hop)
    assert np.max(np.abs(y[interior] - x[:len(y)][interior])) < 1e-5


def test_round_trip_float32():
    x = np.random.default_rng(1).uniform(-1, 1, 8000).astype(np.float32)
    y = dsp.istft(dsp.stft(x))
    interior = slice(FR.hop, len(y) - FR.hop)
    assert np.max(np.abs(y[interior] - x[:len(y)][interior])) < 1e-5


def test_single_frame_is_window_squared():
    x = np.random.default_rng(2).standard_normal(320)
    y = dsp.istft(dsp.stft(x))
    np.testing.assert_allclose(y, x * dsp.sqrt_hann(320) ** 2, atol=1e-12)


def test_cola():
    w2 = dsp.sqrt_hann(320) ** 2
    np.testing.assert_allclose(w2[:160] + w2[160:], 1.0, atol=1e-15)


def test_parseval():
    x = np.random.default_rng(3).standard_normal(3200)
    spec = dsp.stft(x)
    weights = np.full(257, 2.0)
    weights[[0, -1]] = 1.0
    frames = np.lib.stride_tricks.sliding_window_view(x, 320)[::160] * dsp.sqrt_hann(320)
    e_time = np.sum(frames ** 2, axis=1)
    e_spec = np.sum(weights * np.abs(spec) ** 2, axis=1) / 512
    np.testing.assert_allclose(e_spec, e_time, rtol=1e-4)


def test_synthesis_matrices_match_istft():
    spec = dsp.stft(np.random.default_rng(4).standard_normal(1600))
    cr, ci = dsp.synthesis_matrices()
    frames = spec.real @ cr + spec.imag @ ci
    np.testing.assert_allclose(dsp.overlap_add(frames, 160), dsp.istft(spec), atol=1e-12)


class TestMix:
    @pytest.mark.parametrize("snr", [0.0, 20.0, -5.0, 7.3])
    def test_exact_snr(self, snr):
        rng = np.random.default_rng(5)
        noisy, clean, noise = dsp.mix_at_snr(rng.standard_normal(4000), rng.standard_normal(1000), snr)
        assert abs(dsp.measured_snr_db(clean, noise) - snr) < 1e-6
        np.testing.assert_allclose(noisy, clean + noise)

    def test_equal_powers_at_zero_db(self):
        rng = np.random.default_rng(6)
        _, clean, noise = dsp.mix_at_snr(rng.standard_normal(500), 3 * rng.standard_normal(500), 0.0)
        assert dsp.power(clean) == pytest.approx(dsp.power(noise), rel=1e-12)

    def test_twenty_db(self):
        rng = np.random.default_rng(7)
        _, clean, noise = dsp.mix_at_snr(rng.standard_normal(500), rng.standard_normal(500), 20.0)
        assert dsp.power(noise) == pytest.approx(dsp.power(clean) / 100, rel=1e-12)

    def test_noise_looped(self):
        noise = np.array([1.0, -1.0, 2.0])
        _, _, n = dsp.mix_at_snr(np.ones(7), noise, 0.0)
        np.testing.assert_allclose(n / n[0], [1, -1, 2, 1, -1, 2, 1])

    def test_silent_rejected(self):
        with pytest.raises(dsp.SilentSignalError):
            dsp.mix_at_snr(np.zeros(10), np.ones(10), 0.0)
        with pytest.raises(dsp.SilentSignalError):
            dsp.mix_at_snr(np.ones(10), np.zeros(10), 0.0)


class TestRir:
    def test_delta_identity(self):
        x = np.random.default_rng(8).standard_normal(100)
        np.testing.assert_allclose(dsp.convolve_rir(x, np.array([1.0])), x, atol=1e-12)

    def test_delayed_delta(self):
        x = np.zeros(50)
        x[5] = 1.0
        x[10] = -0.5
        rir = np.zeros(4)
        rir[3] = 1.0
        out = dsp.convolve_rir(x, rir)
        np.testing.assert_allclose(out, np.concatenate([np.zeros(3), x[:-3]]), atol=1e-12)

    def test_two_tap_direct_sum(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal(64)
        rir = np.array([0.8, 0.0, -0.3])
        direct = np.array([sum(rir[k] * x[n - k] for k in range(3) if n - k >= 0) for n in range(64)])
        direct *= np.max(np.abs(x)) / np.max(np.abs(direct))
        np.testing.assert_allclose(dsp.convolve_rir(x, rir), direct, atol=1e-12)

    def test_peak_preserved(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal(2000)
        out = dsp.convolve_rir(x, rng.standard_normal(300) * np.exp(-np.arange(300) / 50))
        assert np.max(np.abs(out)) == pytest.approx(np.max(np.abs(x)))

    def test_empty_rir(self):
        with pytest.raises(ValueError):
            dsp.convolve_rir(np.ones(10), np.array([]))


class TestBiquad:
    def test_identity_coefficients(self):
        x = np.random.default_rng(11).standard_normal(200)
        np.testing.assert_allclose(dsp.biquad(x, [1, 0, 0], [1, 0, 0]), x)

    def test_seeded(self):
        x = np.random.default_rng(12).standard_normal(500)
        np.testing.assert_array_equal(dsp.biquad_augment(x, 3), dsp.biquad_augment(x, 3))
        assert not np.allclose(dsp.biquad_augment(x, 3), dsp.biquad_augment(x, 4))

    def test_impulse_response_recursion(self):
        b1, b2, a1, a2 = 0.2, -0.1, -0.3, 0.25
        x = np.zeros(30)
        x[0] = 1.0
        y = np.zeros(30)
        for n in range(30):
            y[n] = x[n]
            y[n] += b1 * x[n - 1] if n >= 1 else 0
            y[n] += b2 * x[n - 2] if n >= 2 else 0
            y[n] -= a1 * y[n - 1] if n >= 1 else 0
            y[n] -= a2 * y[n - 2] if n >= 2 else 0
        np.testing.assert_allclose(dsp.biquad(x, [1, b1, b2], [1, a1, a2]), y, atol=1e-14)

    def test_coefficient_range_and_stability(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            b, a = dsp.draw_biquad(rng)
            assert b[0] == 1 and a[0] == 1
            assert np.all(np.abs(np.r_[b[1:], a[1:]]) <= dsp.BIQUAD_RANGE)
            assert np.all(np.abs(np.roots(a)) < 1)


class TestWav:
    def test_float_round_trip_bit_exact(self, tmp_path):
        x = np.random.default_rng(14).uniform(-1, 1, 1000).astype(np.float32)
        wav_write(tmp_path / "a.wav", x, 16000)
        w = wav_read(tmp_path / "a.wav")
        assert w.sample_rate == 16000 and w.samples.tobytes() == x.tobytes()

    def test_pcm16_quantization(self, tmp_path):
        x = np.random.default_rng(15).uniform(-1, 1, 1000)
        wav_write(tmp_path / "a.wav", x, 16000, subtype="pcm16")
        assert np.max(np.abs(wav_read(tmp_path / "a.wav").samples - x)) <= 2 ** -15

    def test_truncated(self, tmp_path):
        wav_write(tmp_path / "a.wav", np.zeros(100, np.float32), 16000)
        raw = (tmp_path / "a.wav").read_bytes()
        for n in (10, 30, 44, len(raw) - 3):
            (tmp_path / "t.wav").write_bytes(raw[:n])
            with pytest.raises(WavHeaderError):
                wav_read(tmp_path / "t.wav")

    def test_stereo_rejected(self, tmp_path):
        from scipy.io import wavfile

        wavfile.write(tmp_path / "s.wav", 16000, np.zeros((10, 2), np.float32))
        with pytest.raises(WavFormatError, match="mono"):
            wav_read(tmp_path / "s.wav")

    def test_unsupported_codec(self, tmp_path):
        from scipy.io import wavfile

        wavfile.write(tmp_path / "u.wav", 16000, np.zeros(10, np.uint8))
        with pytest.raises(WavFormatError):
            wav_read(tmp_path / "u.wav")
