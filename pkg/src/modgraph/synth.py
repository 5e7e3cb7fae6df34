"""Synthetic modulated I/Q frames through an impaired radio channel.

Eleven schemes are provided: six linearly modulated (BPSK, QPSK, 8PSK,
QAM16, QAM64, PAM4 with root-raised-cosine shaping), two frequency-shift
(GFSK with a Gaussian premodulation filter, CPFSK), and three analog (WBFM,
AM-DSB, AM-SSB) driven by an internally generated band-limited message with
occasional silent gaps.

The channel applies, in order: a Rician tapped delay line whose per-tap
gains are Jakes-style sums of sinusoids, a local-oscillator frequency
offset realized as a clipped Gaussian random walk integrated into a phase
rotation, and a sample-rate offset realized as nearest-neighbour resampling
(skip/duplicate).  Tap delays land on the nearest integer sample; at the
bundled presets' sample rates every tap collapses to offset zero, which is
a documented limitation of those parameter sets.  The direct path uses
phase 0 (the LOS is the phase reference), so a single-tap channel with
``k_factor=inf`` and zero Doppler is an exact pass-through.

Every frame is normalized to unit mean power `before` noise injection; the
AWGN variance is then ``10**(-snr_db/10)``, so the nominal SNR is exact in
expectation.  All randomness flows from one ``numpy`` generator per frame
seed, with the noise drawn last: synthesizing the same seed with and
without noise yields the identical pre-noise signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import firwin, hilbert

from .datastore import Dataset

__all__ = [
    "ModulationScheme", "ChannelConfig", "IQFrame",
    "SCHEME_NAMES", "default_schemes", "channel_preset", "CHANNEL_PRESETS",
    "synthesize_frame", "synthesize_dataset",
]

SCHEME_NAMES = ("BPSK", "QPSK", "8PSK", "QAM16", "QAM64",
                "GFSK", "CPFSK", "PAM4", "WBFM", "AM-DSB", "AM-SSB")


@dataclass(frozen=True)
class ModulationScheme:
    """One modulation: its identity plus the knobs its modulator needs."""

    name: str
    kind: str                      # "linear" | "fsk" | "analog"
    samples_per_symbol: int = 8
    constellation: tuple = ()      # linear kinds
    mod_index: float = 0.5         # fsk kinds
    gaussian_bt: float = 0.0       # fsk kinds; 0 disables the Gaussian filter
    analog_mode: str = ""          # "fm" | "am-dsb" | "am-ssb"

    def __post_init__(self):
        if self.kind not in ("linear", "fsk", "analog"):
            raise ValueError(f"ModulationScheme: unknown kind {self.kind!r}")
        if self.samples_per_symbol < 1:
            raise ValueError("ModulationScheme: samples_per_symbol must be >= 1")
        if self.kind == "linear" and len(self.constellation) < 2:
            raise ValueError(f"ModulationScheme {self.name}: linear kind needs a constellation")
        if self.kind == "analog" and self.analog_mode not in ("fm", "am-dsb", "am-ssb"):
            raise ValueError(f"ModulationScheme {self.name}: bad analog_mode {self.analog_mode!r}")


def _unit_power(points):
    pts = np.asarray(points, dtype=np.complex128)
    return tuple(pts / np.sqrt(np.mean(np.abs(pts) ** 2)))


def _qam_points(levels):
    axis = np.arange(-(levels - 1), levels, 2, dtype=float)
    return _unit_power([complex(a, b) for b in axis for a in axis])


def default_schemes(samples_per_symbol=8):
    """The eleven stock schemes keyed by name."""
    sps = samples_per_symbol
    psk = lambda m: _unit_power(np.exp(2j * np.pi * np.arange(m) / m))
    schemes = [
        ModulationScheme("BPSK", "linear", sps, constellation=_unit_power([1, -1])),
        ModulationScheme("QPSK", "linear", sps, constellation=_unit_power([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j])),
        ModulationScheme("8PSK", "linear", sps, constellation=psk(8)),
        ModulationScheme("QAM16", "linear", sps, constellation=_qam_points(4)),
        ModulationScheme("QAM64", "linear", sps, constellation=_qam_points(8)),
        ModulationScheme("GFSK", "fsk", sps, mod_index=0.5, gaussian_bt=0.35),
        ModulationScheme("CPFSK", "fsk", sps, mod_index=0.5),
        ModulationScheme("PAM4", "linear", sps, constellation=_unit_power([-3, -1, 1, 3])),
        ModulationScheme("WBFM", "analog", sps, analog_mode="fm"),
        ModulationScheme("AM-DSB", "analog", sps, analog_mode="am-dsb"),
        ModulationScheme("AM-SSB", "analog", sps, analog_mode="am-ssb"),
    ]
    return {s.name: s for s in schemes}


@dataclass(frozen=True)
class ChannelConfig:
    """Impairment parameters for the synthetic channel.

    ``k_factor`` is the Rician K of the first tap (0 = pure scattering,
    ``math.inf`` = pure line of sight); the remaining taps are always pure
    scattering.  LO/SRO walks are parameterized by a max deviation (Hz, the
    walk is clipped there) and a per-sample standard deviation (Hz); a max
    deviation of 0 disables the effect.
    """

    sample_rate_hz: float
    tap_magnitudes_db: tuple
    tap_delays_ns: tuple
    max_doppler_hz: float = 0.0
    num_sinusoids: int = 8
    k_factor: float = 0.0
    lo_max_dev_hz: float = 0.0
    lo_std_hz: float = 0.0
    sro_max_dev_hz: float = 0.0
    sro_std_hz: float = 0.0

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError("ChannelConfig: sample_rate_hz must be positive")
        if len(self.tap_magnitudes_db) == 0:
            raise ValueError("ChannelConfig: at least one tap required")
        if len(self.tap_magnitudes_db) != len(self.tap_delays_ns):
            raise ValueError("ChannelConfig: tap magnitude and delay lists must have equal length")
        if self.max_doppler_hz < 0 or self.num_sinusoids < 1:
            raise ValueError("ChannelConfig: bad Doppler parameters")
        if not (self.k_factor >= 0):  # also rejects NaN
            raise ValueError("ChannelConfig: k_factor must be nonnegative")


CHANNEL_PRESETS = {
    # three-tap Rician profile sampled at 200 kHz, slow fading
    "rml16-like": ChannelConfig(
        sample_rate_hz=200e3,
        tap_magnitudes_db=(0.0, -0.97, -5.23),
        tap_delays_ns=(0.0, 4.5, 8.5),
        max_doppler_hz=1.0,
        num_sinusoids=8,
        k_factor=4.0,
        lo_max_dev_hz=500.0, lo_std_hz=1e-2,
        sro_max_dev_hz=500.0, sro_std_hz=1e-2,
    ),
    # nine-tap ETU-style Rayleigh profile, faster fading, 30 kHz
    "rml22-like": ChannelConfig(
        sample_rate_hz=30e3,
        tap_magnitudes_db=(-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, -3.0, -5.0, -7.0),
        tap_delays_ns=(0.0, 50.0, 120.0, 200.0, 230.0, 500.0, 1600.0, 2300.0, 5000.0),
        max_doppler_hz=70.0,
        num_sinusoids=8,
        k_factor=0.0,
        lo_max_dev_hz=500.0, lo_std_hz=1e-2,
        sro_max_dev_hz=50.0, sro_std_hz=1e-3,
    ),
    # exact pass-through: single unit tap, no fading, no clock impairments
    "identity": ChannelConfig(
        sample_rate_hz=200e3,
        tap_magnitudes_db=(0.0,),
        tap_delays_ns=(0.0,),
        max_doppler_hz=0.0,
        num_sinusoids=8,
        k_factor=math.inf,
    ),
}


def channel_preset(name):
    try:
        return CHANNEL_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown channel preset {name!r}; have {sorted(CHANNEL_PRESETS)}") from None


@dataclass
class IQFrame:
    """One synthesized record: I/Q samples plus its label, SNR, and seed."""

    i: np.ndarray
    q: np.ndarray
    label: str
    snr_db: int
    seed: int

    def __post_init__(self):
        self.i = np.asarray(self.i, dtype=np.float64)
        self.q = np.asarray(self.q, dtype=np.float64)
        if self.i.shape != self.q.shape or self.i.ndim != 1:
            raise ValueError("IQFrame: i and q must be equal-length 1-D arrays")
        _check_snr(self.snr_db)


def _check_snr(snr_db):
    if int(snr_db) != snr_db or not (-20 <= snr_db <= 20) or snr_db % 2:
        raise ValueError(f"snr_db must be an even integer in [-20, 20], got {snr_db!r}")


# ---------------------------------------------------------------------------
# pulse shaping filters
# ---------------------------------------------------------------------------

def rrc_taps(beta, span, sps):
    """Root-raised-cosine impulse response (unit-energy, odd length)."""
    if not 0 < beta < 1:
        raise ValueError("rrc_taps: roll-off must be in (0, 1)")
    t = np.arange(-span * sps, span * sps + 1, dtype=np.float64) / sps
    taps = np.empty_like(t)
    for n, ti in enumerate(t):
        if abs(ti) < 1e-12:
            taps[n] = 1.0 - beta + 4.0 * beta / np.pi
        elif abs(abs(ti) - 1.0 / (4.0 * beta)) < 1e-9:
            taps[n] = (beta / np.sqrt(2.0)) * (
                (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
                + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta)))
        else:
            num = np.sin(np.pi * ti * (1 - beta)) + 4 * beta * ti * np.cos(np.pi * ti * (1 + beta))
            taps[n] = num / (np.pi * ti * (1 - 4 * beta * ti) * (1 + 4 * beta * ti))
    return taps / np.sqrt(np.sum(taps ** 2))


def gaussian_taps(bt, sps, span=4):
    """Gaussian premodulation filter convolved with the NRZ rectangle."""
    sigma = np.sqrt(np.log(2.0)) / (2.0 * np.pi * bt)
    t = np.arange(-span * sps, span * sps + 1, dtype=np.float64) / sps
    g = np.exp(-0.5 * (t / sigma) ** 2)
    taps = np.convolve(g, np.ones(sps))
    return taps / taps.sum()


_MESSAGE_LPF = firwin(33, 0.1)  # band-limited "audio" shaping, cutoff 0.1 fs


# ---------------------------------------------------------------------------
# modulators
# ---------------------------------------------------------------------------

def _modulate_linear(scheme, n_out, rng):
    sps = scheme.samples_per_symbol
    span = 8
    taps = rrc_taps(0.35, span, sps)
    warm = span * sps
    n_sym = (n_out + 2 * warm) // sps + 2 * span
    symbols = np.asarray(scheme.constellation)[rng.integers(0, len(scheme.constellation), n_sym)]
    up = np.zeros(n_sym * sps, dtype=np.complex128)
    up[::sps] = symbols
    shaped = np.convolve(up, taps)
    return shaped[warm:warm + n_out]


def _modulate_fsk(scheme, n_out, rng):
    sps = scheme.samples_per_symbol
    warm = 4 * sps
    n_sym = (n_out + 2 * warm) // sps + 8
    bits = rng.integers(0, 2, n_sym) * 2.0 - 1.0
    pulse = np.repeat(bits, sps)
    if scheme.gaussian_bt > 0:
        pulse = np.convolve(pulse, gaussian_taps(scheme.gaussian_bt, sps), mode="same")
    phase = np.pi * scheme.mod_index * np.cumsum(pulse) / sps
    return np.exp(1j * phase)[warm:warm + n_out]


def _message(rng, n):
    """Band-limited Gaussian message with 0-2 silent gaps, RMS ~ 1.

    Gaps are capped at a quarter of the buffer each so no window of the
    message is ever fully silent.
    """
    pad = len(_MESSAGE_LPF)
    white = rng.standard_normal(n + 2 * pad)
    m = np.convolve(white, _MESSAGE_LPF, mode="same")[pad:pad + n]
    for _ in range(rng.integers(0, 3)):
        gap = int(rng.integers(n // 8, n // 4 + 1))
        start = int(rng.integers(0, n - gap + 1))
        m[start:start + gap] = 0.0
    rms = np.sqrt(np.mean(m ** 2))
    return m / rms


def _modulate_analog(scheme, n_out, rng, sample_rate_hz):
    m = _message(rng, n_out)
    if scheme.analog_mode in ("fm", "am-dsb"):
        # Carrier-bearing modes keep transmitting through message pauses, so
        # a slice of captures lands in silence and is bare carrier.  A
        # silent FM frame and a silent DSB frame are the same waveform - the
        # classic source of WBFM/AM-DSB ambiguity.  Suppressed-carrier SSB
        # has nothing on air during a pause, so it keeps the active message.
        roll = rng.random()
        if roll < 0.25:
            m[:] = 0.0
        elif roll < 0.45:
            pause = int(rng.integers(n_out // 2, (9 * n_out) // 10 + 1))
            start = int(rng.integers(0, n_out - pause + 1))
            m[start:start + pause] = 0.0
    if scheme.analog_mode == "fm":
        # deviation fs/8: wideband relative to the 0.1 fs message bandwidth
        phase = 2.0 * np.pi * (sample_rate_hz / 8.0) * np.cumsum(m) / sample_rate_hz
        return np.exp(1j * phase)
    if scheme.analog_mode == "am-dsb":
        return (1.0 + 0.5 * m).astype(np.complex128)
    analytic = hilbert(m)  # am-ssb: upper sideband, suppressed carrier
    return 0.5 * analytic


def _modulate(scheme, n_out, rng, sample_rate_hz):
    if scheme.kind == "linear":
        return _modulate_linear(scheme, n_out, rng)
    if scheme.kind == "fsk":
        return _modulate_fsk(scheme, n_out, rng)
    return _modulate_analog(scheme, n_out, rng, sample_rate_hz)


# ---------------------------------------------------------------------------
# channel impairments
# ---------------------------------------------------------------------------

def _fading_gain(channel, rng, t, with_los):
    """Unit-power complex gain process for one tap.

    The scattered part is a sum of ``num_sinusoids`` plane waves with random
    arrival angles and phases; the optional LOS part rides at Doppler
    ``f_d cos(aoa)`` with phase 0.  Draws happen in a fixed order regardless
    of parameter values so frame determinism only depends on the seed.
    """
    m = channel.num_sinusoids
    aoa = rng.uniform(0.0, 2.0 * np.pi, m)
    phases = rng.uniform(0.0, 2.0 * np.pi, m)
    los_aoa = rng.uniform(0.0, 2.0 * np.pi)
    fd = channel.max_doppler_hz
    scatter = np.exp(1j * (2.0 * np.pi * fd * np.cos(aoa)[:, None] * t[None, :]
                           + phases[:, None])).sum(axis=0) / np.sqrt(m)
    if not with_los:
        return scatter
    los = np.exp(1j * 2.0 * np.pi * fd * np.cos(los_aoa) * t)
    k = channel.k_factor
    if math.isinf(k):
        return los
    return np.sqrt(k / (k + 1.0)) * los + np.sqrt(1.0 / (k + 1.0)) * scatter


def _apply_fading(x, channel, rng):
    fs = channel.sample_rate_hz
    amps = 10.0 ** (np.asarray(channel.tap_magnitudes_db, dtype=np.float64) / 20.0)
    amps = amps / np.sqrt(np.sum(amps ** 2))
    offsets = np.rint(np.asarray(channel.tap_delays_ns, dtype=np.float64) * 1e-9 * fs).astype(int)
    t = np.arange(len(x)) / fs
    y = np.zeros_like(x)
    for tap, (amp, off) in enumerate(zip(amps, offsets)):
        gain = _fading_gain(channel, rng, t, with_los=(tap == 0))
        shifted = x if off == 0 else np.concatenate([np.zeros(off, dtype=x.dtype), x[:-off]])
        y += amp * gain * shifted
    return y


def _walk(rng, n, start_max, std, clip_max):
    start = rng.uniform(-start_max, start_max)
    steps = rng.normal(0.0, std, n) if std > 0 else np.zeros(n)
    return np.clip(start + np.cumsum(steps), -clip_max, clip_max)


def _apply_lo(x, channel, rng):
    if channel.lo_max_dev_hz <= 0:
        return x
    f = _walk(rng, len(x), channel.lo_max_dev_hz, channel.lo_std_hz, channel.lo_max_dev_hz)
    phase = 2.0 * np.pi * np.cumsum(f) / channel.sample_rate_hz
    return x * np.exp(1j * phase)


def _apply_sro(x, channel, rng):
    if channel.sro_max_dev_hz <= 0:
        return x
    f = _walk(rng, len(x), channel.sro_max_dev_hz, channel.sro_std_hz, channel.sro_max_dev_hz)
    ratio = 1.0 + f / channel.sample_rate_hz
    pos = np.concatenate([[0.0], np.cumsum(ratio[:-1])])
    idx = np.minimum(np.rint(pos).astype(int), len(x) - 1)
    return x[idx]


# ---------------------------------------------------------------------------
# frame and dataset entry points
# ---------------------------------------------------------------------------

def synthesize_frame(scheme, snr_db, channel, seed, n_samples=128, with_noise=True):
    """Generate one labelled I/Q frame.

    The returned frame has unit mean power before the AWGN term; pass
    ``with_noise=False`` to obtain that pre-noise signal (the same seed
    yields the identical signal either way, since noise is drawn last).
    """
    if not isinstance(scheme, ModulationScheme):
        raise TypeError(f"synthesize_frame: scheme must be a ModulationScheme, got {type(scheme).__name__}")
    _check_snr(snr_db)
    if n_samples < 16:
        raise ValueError("synthesize_frame: n_samples must be >= 16")
    rng = np.random.default_rng(int(seed))

    lead = 8 * scheme.samples_per_symbol
    max_off = int(np.rint(max(channel.tap_delays_ns) * 1e-9 * channel.sample_rate_hz))
    n_total = n_samples + lead + max_off + 8

    x = _modulate(scheme, n_total, rng, channel.sample_rate_hz)
    x = _apply_fading(x, channel, rng)
    x = _apply_lo(x, channel, rng)
    x = _apply_sro(x, channel, rng)
    x = x[lead:lead + n_samples]

    power = np.mean(np.abs(x) ** 2)
    if power <= 0:
        raise RuntimeError(f"synthesize_frame: degenerate zero-power signal ({scheme.name}, seed {seed})")
    x = x / np.sqrt(power)

    if with_noise:
        sigma2 = 10.0 ** (-snr_db / 10.0)
        nr, ni = rng.standard_normal((2, n_samples))
        x = x + np.sqrt(sigma2 / 2.0) * (nr + 1j * ni)

    return IQFrame(i=x.real, q=x.imag, label=scheme.name, snr_db=int(snr_db), seed=int(seed))


def synthesize_dataset(schemes, snrs_db, frames_per_cell, channel, seed,
                       n_samples=128, meta=None):
    """Full-factorial dataset: every scheme at every SNR, ``frames_per_cell``
    records each, in deterministic (scheme, snr, repeat) order.

    Returns a ``datastore.Dataset`` whose label indices follow the order of
    ``schemes``; per-record seeds are drawn once from the master seed, so the
    result is a pure function of the arguments.
    """
    schemes = list(schemes)
    snrs = [int(s) for s in snrs_db]
    if not schemes or not snrs or frames_per_cell < 1:
        raise ValueError("synthesize_dataset: need at least one scheme, one SNR, and one frame per cell")
    names = [s.name for s in schemes]
    if len(set(names)) != len(names):
        raise ValueError("synthesize_dataset: duplicate scheme names")
    n = len(schemes) * len(snrs) * frames_per_cell
    frame_seeds = np.random.default_rng(int(seed)).integers(0, 2 ** 63, size=n)

    i = np.empty((n, n_samples), dtype=np.float32)
    q = np.empty((n, n_samples), dtype=np.float32)
    snr_col = np.empty(n, dtype=np.int16)
    label_col = np.empty(n, dtype=np.uint8)
    row = 0
    for li, scheme in enumerate(schemes):
        for snr in snrs:
            for _ in range(frames_per_cell):
                fr = synthesize_frame(scheme, snr, channel, int(frame_seeds[row]), n_samples)
                i[row] = fr.i
                q[row] = fr.q
                snr_col[row] = snr
                label_col[row] = li
                row += 1

    info = {
        "seed": str(int(seed)),
        "frames_per_cell": str(frames_per_cell),
        "snrs_db": ",".join(str(s) for s in snrs),
        "sample_rate_hz": repr(channel.sample_rate_hz),
        "samples_per_symbol": str(schemes[0].samples_per_symbol),
    }
    if meta:
        info.update(meta)
    return Dataset(i=i, q=q, snr_db=snr_col, label=label_col, label_names=names, meta=info)
