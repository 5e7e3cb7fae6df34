"""
A tour of the synthetic signal path
===================================

Generates a handful of labeled I/Q frames through the impaired channel,
verifies the power/SNR bookkeeping, and looks at the time-frequency image
the model consumes. Run it from the repository root:

    python3 demos/signal_tour.py
"""

import numpy as np

from modgraph import dsp, synth

# ---------------------------------------------------------------------------
# 1. one frame at a time
# ---------------------------------------------------------------------------

schemes = synth.default_schemes()
channel = synth.channel_preset("rml16-like")

print("available schemes:", ", ".join(schemes))
print()

frame = synth.synthesize_frame(schemes["QPSK"], snr_db=18, channel=channel, seed=7)
power = np.mean(frame.i ** 2 + frame.q ** 2)
print(f"QPSK @ +18 dB: {len(frame.i)} samples, mean power {power:.3f}")

# the same seed gives the same bytes back; a different seed does not
again = synth.synthesize_frame(schemes["QPSK"], snr_db=18, channel=channel, seed=7)
other = synth.synthesize_frame(schemes["QPSK"], snr_db=18, channel=channel, seed=8)
print("same seed reproduces the frame:", np.array_equal(frame.i, again.i))
print("different seed differs:       ", not np.array_equal(frame.i, other.i))
print()

# ---------------------------------------------------------------------------
# 2. SNR bookkeeping: noise power follows the requested level
# ---------------------------------------------------------------------------

# synthesize the same carrier with and without noise and difference them;
# averaged over many seeds the residual power matches the target SNR
rng = np.random.default_rng(0)
for snr in (18, 0, -10):
    ratios = []
    for _ in range(50):
        seed = int(rng.integers(0, 2 ** 62))
        clean = synth.synthesize_frame(schemes["BPSK"], snr, channel, seed,
                                       with_noise=False)
        noisy = synth.synthesize_frame(schemes["BPSK"], snr, channel, seed)
        noise = (noisy.i - clean.i) ** 2 + (noisy.q - clean.q) ** 2
        signal = clean.i ** 2 + clean.q ** 2
        ratios.append(np.mean(signal) / np.mean(noise))
    measured = 10 * np.log10(np.mean(ratios))
    print(f"requested {snr:+3d} dB, measured {measured:+6.2f} dB over 50 frames")
print()

# ---------------------------------------------------------------------------
# 3. the spectrogram, and why rotation does not disturb it
# ---------------------------------------------------------------------------

mag = dsp.dstft_batch(frame.i, frame.q, n_dft=128, win_len=32)
print(f"spectrogram shape {mag.shape}: one column per sample, one row per bin")
peak_bin = int(np.argmax(mag.sum(axis=1)))
print(f"most energetic bin: {peak_bin} (of 128)")

# rotating the constellation by a quarter turn multiplies the complex samples
# by a unit factor, so the magnitudes cannot move
ri, rq = dsp.rotate(frame.i, frame.q, 90)
mag_rot = dsp.dstft_batch(ri, rq, n_dft=128, win_len=32)
print(f"rotation changes the spectrogram by {np.max(np.abs(mag - mag_rot)):.2e}")
print()

# ---------------------------------------------------------------------------
# 4. a whole dataset in one call
# ---------------------------------------------------------------------------

wanted = [schemes[name] for name in ("BPSK", "QPSK", "GFSK")]
ds = synth.synthesize_dataset(wanted, snrs_db=(0, 18), frames_per_cell=20,
                              channel=channel, seed=1)
print(f"dataset: {ds.n_records} records, labels {ds.label_names}")
for (label, snr), rows in sorted(ds.cells().items()):
    print(f"  {ds.label_names[label]:>5s} @ {snr:+3d} dB: {len(rows)} frames")
