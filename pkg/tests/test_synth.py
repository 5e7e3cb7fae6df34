"""Signal synthesis: determinism, power/SNR budgets, channel behaviour."""

import math

import numpy as np
import pytest

from modgraph import synth
from modgraph.synth import ChannelConfig, channel_preset, default_schemes, synthesize_frame


SCHEMES = default_schemes()
IDENT = channel_preset("identity")
RML16 = channel_preset("rml16-like")


def test_same_seed_same_frame():
    a = synthesize_frame(SCHEMES["QPSK"], 18, IDENT, 3)
    b = synthesize_frame(SCHEMES["QPSK"], 18, IDENT, 3)
    assert np.array_equal(a.i, b.i) and np.array_equal(a.q, b.q)
    c = synthesize_frame(SCHEMES["QPSK"], 18, IDENT, 4)
    assert not np.array_equal(a.i, c.i)


def test_noise_is_drawn_last():
    clean = synthesize_frame(SCHEMES["8PSK"], 10, RML16, 42, with_noise=False)
    noisy = synthesize_frame(SCHEMES["8PSK"], 10, RML16, 42, with_noise=True)
    # the pre-noise signal is embedded identically inside the noisy frame
    resid = (noisy.i - clean.i) + 1j * (noisy.q - clean.q)
    expect = 10.0 ** (-10 / 10.0)
    assert 0.3 * expect < np.mean(np.abs(resid) ** 2) < 3.0 * expect


def test_prenoise_power_is_unit():
    for name in SCHEMES:
        fr = synthesize_frame(SCHEMES[name], 0, RML16, 7, with_noise=False)
        assert abs(np.mean(fr.i ** 2 + fr.q ** 2) - 1.0) < 1e-6, name


def test_bpsk_through_identity_channel_is_real():
    fr = synthesize_frame(SCHEMES["BPSK"], 20, IDENT, 7)
    rms_i = np.sqrt(np.mean(fr.i ** 2))
    rms_q = np.sqrt(np.mean(fr.q ** 2))
    # Q carries only the snr=20 noise; I carries the RRC-shaped +-1 stream
    assert rms_q < 0.15
    assert rms_i > 5 * rms_q
    assert np.mean(np.abs(fr.i)) > 0.6


def test_constant_modulus_schemes_have_flat_envelope():
    for name in ("GFSK", "CPFSK", "WBFM"):
        fr = synthesize_frame(SCHEMES[name], 18, IDENT, 5, with_noise=False)
        env = np.sqrt(fr.i ** 2 + fr.q ** 2)
        assert np.max(np.abs(env - 1.0)) < 1e-9, name


def test_empirical_snr_matches_nominal():
    # signal and noise separated by rerunning each seed without noise
    rng_seeds = np.random.default_rng(123).integers(0, 2 ** 63, size=1000)
    ratios = []
    for seed in rng_seeds:
        noisy = synthesize_frame(SCHEMES["QPSK"], 0, RML16, int(seed), with_noise=True)
        clean = synthesize_frame(SCHEMES["QPSK"], 0, RML16, int(seed), with_noise=False)
        ps = np.mean(clean.i ** 2 + clean.q ** 2)
        pn = np.mean((noisy.i - clean.i) ** 2 + (noisy.q - clean.q) ** 2)
        ratios.append(ps / pn)
    snr_db = 10.0 * np.log10(np.mean(ratios))
    assert abs(snr_db) < 1.0


def test_rician_envelope_collapses_at_large_k():
    cfg = ChannelConfig(sample_rate_hz=200e3, tap_magnitudes_db=(0.0,), tap_delays_ns=(0.0,),
                        max_doppler_hz=1.0, num_sinusoids=8, k_factor=1e6)
    rng = np.random.default_rng(0)
    t = np.arange(4096) / cfg.sample_rate_hz
    gain = synth._fading_gain(cfg, rng, t, with_los=True)
    assert np.var(np.abs(gain)) < 1e-3


def test_scattered_gain_has_unit_average_power():
    cfg = ChannelConfig(sample_rate_hz=200e3, tap_magnitudes_db=(0.0,), tap_delays_ns=(0.0,),
                        max_doppler_hz=50.0, num_sinusoids=8, k_factor=0.0)
    rng = np.random.default_rng(1)
    t = np.arange(256) / cfg.sample_rate_hz
    powers = [np.mean(np.abs(synth._fading_gain(cfg, rng, t, with_los=True)) ** 2)
              for _ in range(2000)]
    assert abs(np.mean(powers) - 1.0) < 0.05


def test_channel_config_validation():
    with pytest.raises(ValueError):
        ChannelConfig(sample_rate_hz=200e3, tap_magnitudes_db=(0.0, -3.0), tap_delays_ns=(0.0,))
    with pytest.raises(ValueError):
        ChannelConfig(sample_rate_hz=200e3, tap_magnitudes_db=(), tap_delays_ns=())
    with pytest.raises(ValueError):
        ChannelConfig(sample_rate_hz=0.0, tap_magnitudes_db=(0.0,), tap_delays_ns=(0.0,))
    with pytest.raises(ValueError):
        ChannelConfig(sample_rate_hz=1.0, tap_magnitudes_db=(0.0,), tap_delays_ns=(0.0,), k_factor=-1.0)


def test_frame_argument_validation():
    with pytest.raises(ValueError):
        synthesize_frame(SCHEMES["QPSK"], 7, IDENT, 0)     # odd SNR
    with pytest.raises(ValueError):
        synthesize_frame(SCHEMES["QPSK"], -22, IDENT, 0)   # out of range
    with pytest.raises(ValueError):
        synthesize_frame(SCHEMES["QPSK"], 0, IDENT, 0, n_samples=8)
    with pytest.raises(TypeError):
        synthesize_frame("QPSK", 0, IDENT, 0)


def test_presets_cover_expected_profiles():
    assert len(RML16.tap_magnitudes_db) == 3
    assert RML16.k_factor == 4.0 and RML16.max_doppler_hz == 1.0
    rml22 = channel_preset("rml22-like")
    assert len(rml22.tap_magnitudes_db) == len(rml22.tap_delays_ns) == 9
    assert rml22.k_factor == 0.0 and rml22.max_doppler_hz == 70.0
    assert math.isinf(IDENT.k_factor)
    with pytest.raises(ValueError):
        channel_preset("nope")


def test_analog_frames_never_degenerate():
    for name in ("WBFM", "AM-DSB", "AM-SSB"):
        for seed in range(50):
            fr = synthesize_frame(SCHEMES[name], 0, RML16, seed, with_noise=False)
            assert abs(np.mean(fr.i ** 2 + fr.q ** 2) - 1.0) < 1e-6


def test_symbol_streams_are_independent_across_seeds():
    a = synthesize_frame(SCHEMES["QAM16"], 18, IDENT, 100, with_noise=False)
    b = synthesize_frame(SCHEMES["QAM16"], 18, IDENT, 101, with_noise=False)
    r = np.corrcoef(a.i, b.i)[0, 1]
    assert abs(r) < 0.5


def test_all_eleven_schemes_present():
    assert set(SCHEMES) == set(synth.SCHEME_NAMES)
    assert len(synth.SCHEME_NAMES) == 11


def test_dataset_synthesis_is_deterministic_and_ordered():
    schemes = [SCHEMES["BPSK"], SCHEMES["GFSK"]]
    a = synth.synthesize_dataset(schemes, [10, 18], 5, RML16, seed=9)
    b = synth.synthesize_dataset(schemes, [10, 18], 5, RML16, seed=9)
    assert np.array_equal(a.i, b.i) and np.array_equal(a.q, b.q)
    assert a.n_records == 2 * 2 * 5 and a.gamma == 128
    assert a.label_names == ["BPSK", "GFSK"]
    # (scheme, snr, repeat) nesting
    assert list(a.label[:10]) == [0] * 10 and list(a.label[10:]) == [1] * 10
    assert list(a.snr_db[:5]) == [10] * 5 and list(a.snr_db[5:10]) == [18] * 5
    cells = a.cells()
    assert set(cells) == {(0, 10), (0, 18), (1, 10), (1, 18)}
    assert all(len(v) == 5 for v in cells.values())
