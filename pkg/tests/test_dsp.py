import numpy as np
import pytest
from scipy.io import wavfile

from tatumscribe import dsp
from tatumscribe.errors import InputTooShortError, UnsupportedRateError

SR = 44100


def test_zero_clip_gives_zero_magnitude():
    mag = np.abs(dsp.stft(dsp.AudioClip(np.zeros(SR))))
    assert mag.shape == (1025, (SR - 2048) // 441 + 1)
    assert np.all(mag == 0.0)


def test_sine_peaks_at_expected_bin():
    t = np.arange(SR) / SR
    mag = np.abs(dsp.stft(dsp.AudioClip(np.sin(2 * np.pi * 441.0 * t))))
    assert round(441 * 2048 / 44100) == 20
    assert np.all(mag.argmax(axis=0) == 20)


def test_parseval_per_frame(rng):
    x = rng.uniform(-1, 1, size=5000)
    spec = dsp.stft(dsp.AudioClip(x))
    frames = dsp.frame_signal(x) * dsp.hann_window()
    power = np.abs(spec) ** 2
    # rebuild the two-sided mean from the one-sided spectrum
    weights = np.full(1025, 2.0)
    weights[0] = weights[-1] = 1.0
    two_sided_mean = (weights[:, None] * power).sum(axis=0) / 2048
    np.testing.assert_allclose((frames ** 2).sum(axis=1), two_sided_mean, rtol=1e-6)


def test_frames_cover_documented_sample_ranges(rng):
    x = rng.normal(size=3000)
    frames = dsp.frame_signal(x)
    np.testing.assert_array_equal(frames[1], x[441:441 + 2048])


@pytest.mark.parametrize("n", [2048, 2049, 2488, 2489, 2930, 44100, 44101])
def test_frame_count_formula(n):
    spec = dsp.mel_spectrogram(dsp.AudioClip(np.zeros(n)))
    assert spec.shape == (80, (n - 2048) // 441 + 1)


def test_short_clip_rejected():
    with pytest.raises(InputTooShortError):
        dsp.AudioClip(np.zeros(2047))


def test_filterbank_rows_peak_at_one():
    bank = dsp.mel_filterbank()
    assert bank.shape == (80, 1025)
    assert np.all(bank >= 0)
    for row in bank:
        assert row.max() == 1.0
        assert np.count_nonzero(row == row.max()) == 1


def test_filterbank_supports_overlap_only_neighbours():
    bank = dsp.mel_filterbank()
    support = [np.flatnonzero(row) for row in bank]
    starts = [s[0] for s in support]
    ends = [s[-1] for s in support]
    assert starts == sorted(starts) and ends == sorted(ends)
    for i in range(80):
        for j in range(i + 2, 80):
            assert not set(support[i]) & set(support[j])


def test_filterbank_centres_follow_mel_formula():
    mel = lambda f: 2595 * np.log10(1 + f / 700)  # noqa: E731
    inv = lambda m: 700 * (10 ** (m / 2595) - 1)  # noqa: E731
    edges = inv(np.linspace(mel(20.0), mel(20000.0), 82))
    assert abs(edges[0] - 20.0) < 1e-9 and abs(edges[-1] - 20000.0) < 1e-6
    freqs = np.arange(1025) * 44100 / 2048
    bank = dsp.mel_filterbank()
    for i in range(80):
        # the unit peak sits on the FFT bin nearest below/above the centre
        peak_freq = freqs[bank[i].argmax()]
        assert abs(peak_freq - edges[i + 1]) <= 44100 / 2048
        # triangle values at bins follow the closed form
        left, centre, right = edges[i:i + 3]
        tri = np.clip(np.minimum((freqs - left) / (centre - left),
                                 (right - freqs) / (right - centre)), 0, None)
        np.testing.assert_allclose(bank[i], tri / tri.max(), atol=1e-12)


def test_zero_clip_mel_is_zero():
    assert np.all(dsp.mel_spectrogram(dsp.AudioClip(np.zeros(SR))) == 0.0)


def test_doubling_amplitude_never_decreases(rng):
    x = rng.uniform(-0.4, 0.4, size=8000)
    a = dsp.mel_spectrogram(dsp.AudioClip(x))
    b = dsp.mel_spectrogram(dsp.AudioClip(2 * x))
    assert np.all(b >= a)


def test_mel_matches_naive_triple_loop(rng):
    x = rng.uniform(-1, 1, size=2048 + 441 * 2)
    clip = dsp.AudioClip(x)
    mag = np.abs(dsp.stft(clip))
    bank = dsp.mel_filterbank()
    ref = np.zeros((80, mag.shape[1]))
    for f in range(80):
        for t in range(mag.shape[1]):
            acc = 0.0
            for k in range(1025):
                acc += bank[f, k] * mag[k, t]
            ref[f, t] = np.log(1.0 + acc)
    assert np.max(np.abs(dsp.mel_spectrogram(clip) - ref)) < 1e-9


def test_mel_is_deterministic(rng):
    x = rng.normal(size=6000) * 0.1
    assert dsp.mel_spectrogram(dsp.AudioClip(x)).tobytes() == \
        dsp.mel_spectrogram(dsp.AudioClip(x.copy())).tobytes()


def test_wav_pcm16_and_stereo(tmp_path, rng):
    x = rng.uniform(-0.5, 0.5, size=(4000, 2))
    pcm = np.round(x * 32767).astype(np.int16)
    path = tmp_path / "stereo.wav"
    wavfile.write(path, SR, pcm)
    clip = dsp.read_wav(path)
    np.testing.assert_allclose(clip.samples, pcm.astype(float).mean(axis=1) / 32768.0)


def test_wav_float32(tmp_path, rng):
    x = rng.uniform(-1, 1, size=3000).astype(np.float32)
    path = tmp_path / "f.wav"
    wavfile.write(path, SR, x)
    np.testing.assert_array_equal(dsp.read_wav(path).samples, x.astype(np.float64))


def test_wav_wrong_rate(tmp_path):
    path = tmp_path / "r.wav"
    wavfile.write(path, 22050, np.zeros(4000, dtype=np.int16))
    with pytest.raises(UnsupportedRateError):
        dsp.read_wav(path)


def test_write_then_read_round_trip(tmp_path, rng):
    x = rng.uniform(-0.9, 0.9, size=3000)
    path = tmp_path / "rt.wav"
    dsp.write_wav(path, x)
    assert np.max(np.abs(dsp.read_wav(path).samples - x)) < 1.0 / 32767
