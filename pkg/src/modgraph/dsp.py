"""Rotation augmentation and the dense short-time Fourier transform.

The DSTFT here is "dense" in the sense that the hop is one sample: with
reflect padding the transform yields exactly one frame per input sample, so
a length-``n`` record maps to an ``n_dft x n`` magnitude image.  Each frame
is a Blackman-windowed slice of ``win_len`` samples, zero-padded to
``n_dft`` points; the spectrum is kept two-sided in raw FFT bin order.

Window centering convention: frame ``m`` covers input samples
``m - win_len//2 .. m + (win_len - win_len//2 - 1)``, with the input
reflect-padded (no edge duplication) at both ends.

Rotations are the four quarter-turn constellation rotations.  They are
applied with exact sign-swap tables rather than cos/sin products, so the
90-degree map is literally (i, q) -> (-q, i) and per-sample magnitude is
preserved bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "ROTATION_ANGLES",
    "Spectrogram",
    "rotate",
    "rotate_batch",
    "dstft",
    "dstft_batch",
]

ROTATION_ANGLES = (0, 90, 180, 270)


@dataclass
class Spectrogram:
    """Two-sided magnitude spectrogram: ``mag[k, m]`` is DFT bin ``k`` of the
    frame centered on input sample ``m``."""

    mag: np.ndarray  # (n_dft, n_samples)
    n_dft: int
    win_len: int

    def __post_init__(self):
        if self.mag.ndim != 2 or self.mag.shape[0] != self.n_dft:
            raise ValueError(f"Spectrogram: mag shape {self.mag.shape} inconsistent with n_dft={self.n_dft}")


def rotate(i, q, angle):
    """Rotate an I/Q pair by one of the four quarter turns (degrees)."""
    if angle not in ROTATION_ANGLES:
        raise ValueError(f"rotate: angle must be one of {ROTATION_ANGLES}, got {angle!r}")
    i = np.asarray(i)
    q = np.asarray(q)
    if angle == 0:
        return i.copy(), q.copy()
    if angle == 90:
        return -q, i.copy()
    if angle == 180:
        return -i, -q
    return q.copy(), -i


def rotate_batch(frames, quarter_turns):
    """Rotate a batch of stacked frames.

    Parameters
    ----------
    frames : (B, 2, n) array, I on channel 0, Q on channel 1.
    quarter_turns : (B,) ints in {0,1,2,3} (multiples of 90 degrees).
    """
    frames = np.asarray(frames)
    k = np.asarray(quarter_turns)
    if frames.ndim != 3 or frames.shape[1] != 2:
        raise ValueError(f"rotate_batch: expected (B,2,n) frames, got {frames.shape}")
    if k.shape != (frames.shape[0],):
        raise ValueError("rotate_batch: one quarter-turn count per frame required")
    i, q = frames[:, 0], frames[:, 1]
    out = np.empty_like(frames)
    k = k % 4
    for turn, (oi, oq) in enumerate(((1, 1), (-1, 1), (-1, -1), (1, -1))):
        sel = k == turn
        if not np.any(sel):
            continue
        if turn % 2 == 0:
            out[sel, 0] = oi * i[sel]
            out[sel, 1] = oq * q[sel]
        else:
            out[sel, 0] = oi * q[sel]
            out[sel, 1] = oq * i[sel]
    return out


def _validate_stft_args(n_samples, n_dft, win_len):
    if win_len < 4:
        raise ValueError(f"dstft: win_len must be >= 4, got {win_len}")
    if n_dft < win_len:
        raise ValueError(f"dstft: n_dft ({n_dft}) must be >= win_len ({win_len})")
    if n_samples < win_len:
        raise ValueError(f"dstft: record length {n_samples} shorter than window {win_len}")


def dstft_batch(i, q, n_dft=128, win_len=32):
    """Hop-1 magnitude spectrograms for a batch of I/Q records.

    Returns a float64 array of shape (B, n_dft, n); accepts (n,) or (B, n)
    inputs.
    """
    i = np.asarray(i, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if i.shape != q.shape:
        raise ValueError(f"dstft: I/Q shape mismatch {i.shape} vs {q.shape}")
    squeeze = i.ndim == 1
    if squeeze:
        i, q = i[None], q[None]
    n = i.shape[-1]
    _validate_stft_args(n, n_dft, win_len)

    x = i + 1j * q
    left = win_len // 2
    right = win_len - left - 1
    xp = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(left, right)], mode="reflect")
    frames = sliding_window_view(xp, win_len, axis=-1)  # (B, n, win_len)
    win = np.blackman(win_len)
    spec = np.fft.fft(frames * win, n=n_dft, axis=-1)
    mag = np.abs(spec).swapaxes(-1, -2)  # (B, n_dft, n)
    return mag[0] if squeeze else mag


def dstft(frame, n_dft=128, win_len=32):
    """Spectrogram of a single frame object carrying ``.i`` and ``.q``."""
    mag = dstft_batch(frame.i, frame.q, n_dft=n_dft, win_len=win_len)
    return Spectrogram(mag=mag, n_dft=n_dft, win_len=win_len)
