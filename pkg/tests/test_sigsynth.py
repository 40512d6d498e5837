import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from freqamc import sigsynth
from freqamc.errors import ConfigurationError, DegenerateInputError, InputError
from freqamc.sigsynth import ChannelConfig, ModulationScheme


def test_qpsk_gray_constellation():
    s = sigsynth.modulate([0, 0, 0, 1, 1, 1, 1, 0], ModulationScheme("QPSK", samples_per_symbol=1))
    expected = np.array([1 + 1j, 1 - 1j, -1 - 1j, -1 + 1j]) / math.sqrt(2)
    np.testing.assert_allclose(s, expected, atol=1e-15)
    np.testing.assert_allclose(np.abs(s), 1.0, atol=1e-15)


def test_pam4_levels_average_unit_power():
    # every 2-bit pattern once: levels {-3,-1,1,3}/sqrt(5)
    s = sigsynth.modulate([0, 0, 0, 1, 1, 1, 1, 0], ModulationScheme("PAM4", samples_per_symbol=1))
    assert sorted(np.round(s.real * math.sqrt(5), 12)) == [-3, -1, 1, 3]
    assert np.all(s.imag == 0)
    assert abs(np.mean(np.abs(s) ** 2) - (9 + 1 + 1 + 9) / 20) < 1e-12


@pytest.mark.parametrize("name", ["CPFSK", "GFSK"])
def test_frequency_shift_schemes_are_constant_envelope(name, rng):
    s = sigsynth.modulate(rng.integers(0, 2, 200), ModulationScheme(name))
    mag = np.abs(s)
    assert mag.max() - mag.min() < 1e-9
    assert abs(mag[0] - 1) < 1e-12


def test_modulate_lengths():
    s = sigsynth.modulate(np.ones(40, int), ModulationScheme("QPSK"))
    assert s.size == 20 * 8


def test_modulate_errors():
    with pytest.raises(InputError):
        sigsynth.modulate([], ModulationScheme("QPSK"))
    with pytest.raises(ConfigurationError):
        ModulationScheme("OOK")
    with pytest.raises(ConfigurationError):
        ModulationScheme("GFSK", gaussian_bt=1.5)
    with pytest.raises(ConfigurationError):
        ModulationScheme("QPSK", samples_per_symbol=0)


def test_identity_channel_is_exact(rng):
    s = sigsynth.modulate(rng.integers(0, 2, 64), ModulationScheme("QPSK"))
    cfg = ChannelConfig(snr_db=0.0, noise_enabled=False, random_phase=False)
    out = sigsynth.apply_channel(s, cfg, rng)
    assert np.array_equal(out, s)


def test_snr_scales_amplitude():
    cfg = ChannelConfig(snr_db=18.0, noise_enabled=False, random_phase=False)
    assert abs(cfg.rho - 63.0957344480193) < 1e-9
    s = np.ones(16, complex)
    out = sigsynth.apply_channel(s, cfg, np.random.default_rng(0))
    np.testing.assert_allclose(out, math.sqrt(10 ** 1.8), rtol=1e-14)


def test_empirical_snr_monte_carlo():
    cfg = ChannelConfig(snr_db=18.0, random_phase=False)
    quiet = ChannelConfig(snr_db=18.0, noise_enabled=False, random_phase=False)
    scheme = ModulationScheme("QPSK")
    sig_pow = noise_pow = 0.0
    for i in range(10_000):
        r = np.random.default_rng([99, i])
        s = sigsynth.modulate(r.integers(0, 2, 32), scheme)
        clean = sigsynth.apply_channel(s, quiet, r)
        noisy = sigsynth.apply_channel(s, cfg, r)
        sig_pow += np.sum(np.abs(clean) ** 2)
        noise_pow += np.sum(np.abs(noisy - clean) ** 2)
    est = 10 * math.log10(sig_pow / noise_pow)
    assert abs(est - 18.0) < 0.5


def test_fading_taps_convolve(rng):
    s = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    taps = (0.8 + 0j, 0.3j)
    cfg = ChannelConfig(snr_db=0.0, fading_taps=taps, noise_enabled=False, random_phase=False)
    out = sigsynth.apply_channel(s, cfg, rng)
    direct = np.array([taps[0] * s[k + 1] + taps[1] * s[k] for k in range(19)])
    np.testing.assert_allclose(out, direct, atol=1e-14)


def test_cfo_rotates_phase(rng):
    s = np.ones(32, complex)
    cfg = ChannelConfig(snr_db=0.0, cfo_hz_normalized=0.01, noise_enabled=False, random_phase=False)
    out = sigsynth.apply_channel(s, cfg, rng)
    np.testing.assert_allclose(out, np.exp(2j * np.pi * 0.01 * np.arange(32)), atol=1e-14)


def test_sro_resamples(rng):
    ramp = np.arange(100, dtype=complex)
    cfg = ChannelConfig(snr_db=0.0, sro_ppm=1000.0, noise_enabled=False, random_phase=False)
    out = sigsynth.apply_channel(ramp, cfg, rng)
    np.testing.assert_allclose(out.real, np.arange(out.size) * 1.001, atol=1e-12)


def test_random_phase_rotates_whole_frame(rng):
    s = sigsynth.modulate(rng.integers(0, 2, 64), ModulationScheme("QPSK"))
    cfg = ChannelConfig(snr_db=0.0, noise_enabled=False)
    phasors = []
    for i in range(2000):
        out = sigsynth.apply_channel(s, cfg, np.random.default_rng(i))
        ratio = out / s
        np.testing.assert_allclose(np.abs(ratio), 1.0, atol=1e-12)
        np.testing.assert_allclose(ratio, ratio[0], atol=1e-12)
        phasors.append(ratio[0])
    # uniform on the circle: first moment vanishes, phases cover every quadrant
    assert abs(np.mean(phasors)) < 0.05
    quadrants = np.floor(np.angle(phasors) / (np.pi / 2)) % 4
    assert np.all(np.bincount(quadrants.astype(int), minlength=4) > 400)


def test_channel_rejects_bad_config():
    with pytest.raises(ConfigurationError):
        ChannelConfig(snr_db=-math.inf)
    with pytest.raises(ConfigurationError):
        ChannelConfig(fading_taps=())


def test_normalize_examples():
    frame = np.full((4, 2), 0.5 * math.sqrt(2))  # energy 4
    np.testing.assert_allclose(sigsynth.normalize_unit_energy(frame), frame / 2, rtol=1e-15)
    unit = frame / 2
    np.testing.assert_allclose(sigsynth.normalize_unit_energy(unit), unit, atol=1e-9)
    with pytest.raises(DegenerateInputError):
        sigsynth.normalize_unit_energy(np.zeros((8, 2)))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (16, 2), elements=st.floats(-1e3, 1e3, allow_subnormal=False)))
def test_normalize_property(frame):
    if np.sum(frame ** 2) < 1e-12:
        return
    out = sigsynth.normalize_unit_energy(frame)
    assert abs(np.sum(out ** 2) - 1) < 1e-6
    # single positive scale: directions preserved
    nz = frame != 0
    ratios = out[nz] / frame[nz]
    assert np.all(ratios > 0)
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-9)


def test_dataset_shape_and_balance(small_dataset):
    ds = small_dataset
    assert len(ds) == 240
    assert ds.frames.shape == (240, 128, 2)
    assert np.array_equal(np.bincount(ds.labels), [60] * 4)
    assert ds.class_names == ["CPFSK", "GFSK", "PAM4", "QPSK"]
    energy = np.sum(ds.frames.astype(np.float64) ** 2, axis=(1, 2))
    assert np.max(np.abs(energy - 1)) < 1e-6


def test_dataset_full_scale_count():
    ds = sigsynth.synthesize_dataset(6000, seed=7)
    assert len(ds) == 24000
    assert np.array_equal(np.bincount(ds.labels), [6000] * 4)


def test_dataset_deterministic():
    cfg = ChannelConfig(noise_enabled=False, random_phase=False)
    a = sigsynth.synthesize_dataset(1, cfg=cfg, seed=11)
    b = sigsynth.synthesize_dataset(1, cfg=cfg, seed=11)
    assert a.frames.tobytes() == b.frames.tobytes()
    c = sigsynth.synthesize_dataset(1, cfg=cfg, seed=12)
    assert a.frames.tobytes() != c.frames.tobytes()


def test_frames_independent_of_generation_order():
    # frame (class 2, index 5) is the same whether 6 or 10 frames per class are drawn
    a = sigsynth.synthesize_dataset(6, seed=4)
    b = sigsynth.synthesize_dataset(10, seed=4)
    assert np.array_equal(a.frames[2 * 6 + 5], b.frames[2 * 10 + 5])


def test_noise_free_fsk_frames_constant_envelope():
    cfg = ChannelConfig(noise_enabled=False, random_phase=False)
    ds = sigsynth.synthesize_dataset(3, cfg=cfg, seed=1,
                                     schemes=[ModulationScheme("CPFSK"), ModulationScheme("GFSK")])
    mag = np.hypot(ds.frames[..., 0].astype(np.float64), ds.frames[..., 1])
    assert np.all(mag.max(axis=1) - mag.min(axis=1) < 1e-6)  # float32 storage


def test_snr_changes_only_noise():
    a = sigsynth.synthesize_dataset(5, cfg=ChannelConfig(snr_db=18), seed=2)
    b = sigsynth.synthesize_dataset(5, cfg=ChannelConfig(snr_db=0), seed=2)
    assert np.array_equal(a.labels, b.labels)
    assert a.snr_db == 18 and b.snr_db == 0


def test_dataset_errors():
    with pytest.raises(InputError):
        sigsynth.synthesize_dataset(0)
    with pytest.raises(InputError):
        sigsynth.synthesize_dataset(1, schemes=[])
