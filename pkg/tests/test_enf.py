import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from enfloc.enf import (
    EnfConfig,
    EnfSignal,
    audio_candidates,
    dump_enf,
    extract_enf,
    extract_enf_audio,
    extract_enf_power,
    hampel_filter,
    smooth,
    snr_weights,
    total_variation,
)
from enfloc.errors import SilentSegment, TooShort
from enfloc.signal_io import Recording
from enfloc.synth import GridProfile, render_recording, trajectory_frame_means


def hampel_oracle(x, window=11, k=3.0):
    """Direct loop over truncated windows, repeated until nothing changes."""
    x = np.array(x, dtype=float)
    h = window // 2
    while True:
        med = np.array([np.median(x[max(i - h, 0):i + h + 1]) for i in range(x.size)])
        mad = np.array([np.median(np.abs(x[max(i - h, 0):i + h + 1] - med[i]))
                        for i in range(x.size)])
        out = np.abs(x - med) > k * np.maximum(1.4826 * mad, 1e-9)
        if not out.any():
            return x
        x[out] = med[out]


def harmonic_audio(f_of_t, fs, seconds, snr_db=None, seed=0, amps=(1, .5, .4, .3, .2, .1)):
    rng = np.random.default_rng(seed)
    t = np.arange(int(fs * seconds)) / fs
    phase = 2 * np.pi * np.cumsum(f_of_t(t)) / fs
    x = sum(a * np.sin(k * phase + rng.uniform(0, 6)) for k, a in enumerate(amps, 1))
    if snr_db is not None:
        # per-harmonic SNR: noise power in the whole band relative to each harmonic
        x = x + rng.normal(size=t.size) * np.sqrt(0.5) * 10 ** (-snr_db / 20)
    return x


# ---------------------------------------------------------------- power path

def test_constant_tone_power():
    fs = 400
    t = np.arange(fs * 60) / fs
    enf = extract_enf_power(Recording(np.sin(2 * np.pi * 60 * t), fs), 60)
    assert np.all(np.abs(enf.values_hz - 60.0) <= 1e-3)
    assert enf.source_type == "power" and enf.hop_seconds == 2.0


def test_power_ramp():
    fs = 1000
    t = np.arange(fs * 600) / fs
    f = 49.95 + 0.1 * t / 600
    x = np.sin(2 * np.pi * np.cumsum(f) / fs)
    enf = extract_enf_power(Recording(x, fs), 50)
    assert len(enf) == 300
    truth = 49.95 + 0.1 * (enf.times) / 600
    assert np.max(np.abs(enf.values_hz - truth)) < 0.005


def test_power_is_unfiltered():
    # a single corrupted frame survives in the power path
    fs = 400
    t = np.arange(fs * 40) / fs
    x = np.sin(2 * np.pi * 50 * t)
    x[8000:8800] = np.sin(2 * np.pi * 51 * t[8000:8800])
    enf = extract_enf_power(Recording(x, fs), 50)
    assert abs(enf.values_hz[10] - 51.0) < 1e-3


def test_power_frame_counts():
    rec = Recording(np.sin(np.arange(400 * 600) * 2 * np.pi * 50 / 400), 400)
    assert len(extract_enf_power(rec, 50)) == 300
    with pytest.raises(TooShort):
        extract_enf_power(Recording(np.ones(700), 400), 50)


# ---------------------------------------------------------------- audio path

def test_audio_sample_count_30_min():
    # floor((1800 - 5) / 2) + 1 frames for 5 s windows with a 2 s hop
    fs = 250
    x = harmonic_audio(lambda t: np.full_like(t, 50.0), fs, 1800, snr_db=20)
    cfg = EnfConfig(n_harmonics=2)
    enf = extract_enf_audio(Recording(x, fs), 50, cfg)
    assert len(enf) == 898 == (1800 - 3) // 2


def test_audio_constant_tone():
    fs = 1000
    x = harmonic_audio(lambda t: np.full_like(t, 50.02), fs, 60)
    enf = extract_enf_audio(Recording(x, fs), 50)
    assert len(enf) == 28
    assert np.all(np.abs(enf.values_hz - 50.02) <= 0.01)
    assert enf.times[0] == 2.5 and enf.hop_seconds == 2.0


def test_audio_noisy_varying():
    fs = 1000
    f_of_t = lambda t: 50 + 0.03 * np.sin(2 * np.pi * t / 120.0)
    x = harmonic_audio(f_of_t, fs, 300, snr_db=-10, seed=4)
    enf = extract_enf_audio(Recording(x, fs), 50)
    # frame-mean of the known trajectory
    truth = np.array([f_of_t(np.linspace(s, s + 5, 2001)).mean()
                      for s in np.arange(len(enf)) * 2.0])
    rmse = np.sqrt(np.mean((enf.values_hz - truth) ** 2))
    assert rmse < 0.02


def test_audio_picks_min_variation():
    fs = 1000
    x = harmonic_audio(lambda t: 60 + 0.02 * np.sin(t / 20), fs, 120, snr_db=-5, seed=2)
    rec = Recording(x, fs)
    cands = audio_candidates(rec, 60)
    enf = extract_enf_audio(rec, 60)
    tv = {fb: total_variation(v) for fb, v in cands.items()}
    assert enf.chosen_bandwidth_hz == min(tv, key=tv.get)
    assert enf.candidate_variation == pytest.approx(tv)
    assert set(cands) == {1.0, 3.0, 8.0}


def test_audio_silent_raises():
    with pytest.raises(SilentSegment):
        extract_enf_audio(Recording(np.zeros(10_000), 1000), 50)
    with pytest.raises(TooShort):
        extract_enf_audio(Recording(np.ones(4000), 1000), 50)


def test_extract_enf_dispatch(tmp_path):
    fs = 400
    x = np.sin(2 * np.pi * 50 * np.arange(fs * 20) / fs)
    enf = extract_enf(Recording(x, fs), 50, "power")
    dump_enf(enf, tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "t,enf_hz" and len(lines) == 11
    t0, f0 = map(float, lines[1].split(","))
    assert t0 == 1.0 and abs(f0 - 50.0) < 1e-3
    with pytest.raises(ValueError):
        extract_enf(Recording(x, fs), 50, "video")


def test_synth_audio_closed_loop_zero_db():
    prof = GridProfile("T", 50, enf_std_hz=0.02, enf_range_hz=0.1, noise_snr_db=0.0)
    from enfloc.synth import generate_enf_trajectory
    traj = generate_enf_trajectory(prof, 300, seed=5)
    rec = render_recording(prof, traj, "audio", 1000, seed=6)
    enf = extract_enf_audio(rec, 50)
    truth = trajectory_frame_means(traj, 5.0, 2.0, len(enf))
    assert np.sqrt(np.mean((enf.values_hz - truth) ** 2)) < 0.02


# ---------------------------------------------------------------- weights

def test_snr_weights_examples():
    rng = np.random.default_rng(0)
    noise = rng.exponential(size=(5, 64))
    tone = np.full(64, 1e-6)
    tone[30] = 1e3
    w = snr_weights(np.vstack([tone, noise]))
    assert w[0] > 0.9 and w.sum() == pytest.approx(1.0)
    same = np.tile(rng.exponential(size=64), (4, 1))
    np.testing.assert_allclose(snr_weights(same), 0.25)
    assert snr_weights(noise[:1]).tolist() == [1.0]
    with pytest.raises(SilentSegment):
        snr_weights(np.zeros((3, 10)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(3, 40), st.integers(0, 1000))
def test_snr_weights_simplex(L, nb, seed):
    b = np.random.default_rng(seed).exponential(size=(L, nb))
    w = snr_weights(b)
    assert np.all(w >= 0) and w.sum() == pytest.approx(1.0)


# ---------------------------------------------------------------- Hampel / smoothing

def test_hampel_examples():
    x = np.full(30, 50.0)
    x[12] += 5
    y = hampel_filter(x)
    np.testing.assert_array_equal(y, np.full(30, 50.0))
    ramp = np.linspace(49.9, 50.1, 40)
    np.testing.assert_array_equal(hampel_filter(ramp), ramp)
    np.testing.assert_array_equal(hampel_filter(np.full(15, 60.0)), np.full(15, 60.0))


def test_hampel_keeps_signal_type():
    sig = EnfSignal(np.r_[np.full(10, 50.0), 55.0, np.full(10, 50.0)], 2.0, 50, "audio", 5.0)
    out = hampel_filter(sig)
    assert isinstance(out, EnfSignal) and out.values_hz[10] == 50.0
    assert out.hop_seconds == 2.0


@settings(max_examples=60, deadline=None)
@given(n=st.integers(11, 80), seed=st.integers(0, 10_000), n_out=st.integers(0, 5))
def test_hampel_matches_loop_oracle(n, seed, n_out):
    rng = np.random.default_rng(seed)
    x = 50 + 0.01 * np.cumsum(rng.normal(size=n))
    x[rng.integers(0, n, n_out)] += rng.normal(size=n_out) * 2
    got = hampel_filter(x)
    np.testing.assert_allclose(got, hampel_oracle(x), rtol=0, atol=1e-12)
    # fixed point: a second application changes nothing
    np.testing.assert_array_equal(hampel_filter(got), got)


def test_hampel_short_input_and_bad_window():
    x = np.array([1.0, 9.0, 1.0])
    np.testing.assert_array_equal(hampel_filter(x), x)
    with pytest.raises(ValueError):
        hampel_filter(x, window=4)


def test_smooth_examples():
    np.testing.assert_array_equal(smooth(np.full(12, 3.0)), np.full(12, 3.0))
    alt = 50 + 0.01 * (-1.0) ** np.arange(40)
    assert np.abs(smooth(alt) - 50).max() < 0.01
    ramp = np.arange(20.0) * 0.1 + 49
    np.testing.assert_allclose(smooth(ramp), ramp, atol=1e-12)


def test_smooth_edges_shrink_symmetrically():
    x = np.array([0.0, 3.0, 6.0, 100.0, 1.0, 2.0, 9.0])
    y = smooth(x, 5)
    assert y[0] == 0.0
    assert y[1] == pytest.approx(3.0)
    assert y[3] == pytest.approx((3 + 6 + 100 + 1 + 2) / 5)
    assert y[-1] == 9.0 and y[-2] == pytest.approx(4.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=60))
def test_smooth_bounded_by_extremes(vals):
    y = smooth(np.array(vals))
    assert y.min() >= min(vals) - 1e-9 and y.max() <= max(vals) + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.floats(40, 70), st.floats(1e-4, 1e3))
def test_power_output_in_band_and_scale_free(f, scale):
    fs = 1000
    x = np.sin(2 * np.pi * f * np.arange(6 * fs) / fs)
    a = extract_enf_power(Recording(x, fs), 50).values_hz
    b = extract_enf_power(Recording(scale * x, fs), 50).values_hz
    assert np.all((a >= 46) & (a <= 64))
    np.testing.assert_allclose(a, b, atol=1e-9)
    if 46 <= f <= 64:
        assert np.max(np.abs(a - f)) < 0.01


def test_audio_scale_free():
    fs = 1000
    x = harmonic_audio(lambda t: np.full_like(t, 60.01), fs, 40, snr_db=0, seed=9)
    a = extract_enf_audio(Recording(x, fs), 60).values_hz
    b = extract_enf_audio(Recording(37.0 * x, fs), 60).values_hz
    np.testing.assert_allclose(a, b, atol=1e-9)
    assert np.all((a >= 59) & (a <= 61))
