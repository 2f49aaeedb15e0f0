"""Hann-windowed gain oracle and classical FFT tone-power baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .signals import Burst, mw_to_dbm

DEFAULT_FFT_SIZE = 4096


@dataclass(frozen=True)
class GainEstimate:
    """Complex gain estimate and its derived powers."""

    gain: complex
    power_mw: float
    power_dbm: float

    @classmethod
    def from_gain(cls, gain: complex) -> "GainEstimate":
        power_mw = abs(gain) ** 2
        return cls(gain=complex(gain), power_mw=power_mw, power_dbm=mw_to_dbm(power_mw))


@dataclass(frozen=True)
class Spectrum:
    """Windowed, zero-padded FFT of a burst."""

    bins: np.ndarray
    bin_width_hz: float
    window: str = "hann"

    def __post_init__(self) -> None:
        m = self.bins.size
        if m < 1 or m & (m - 1):
            raise ValueError("spectrum size must be a power of two")


def hann_window(n: int) -> np.ndarray:
    """Symmetric Hann window, endpoints zero."""
    if n < 2:
        raise ValueError("hann window needs n >= 2")
    k = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / (n - 1)))


def extract_gain(burst: Burst) -> GainEstimate:
    """Hann-weighted complex mean of a DC-centered tone burst.

    The burst must already be frequency-shifted so the tone sits at 0 Hz;
    the estimate is then the squared-window weighted average of the samples.
    A 2-sample burst is rejected because both Hann endpoints are zero there,
    which would leave the weighted average undefined.
    """
    if burst.length < 3:
        raise ValueError("gain extraction needs at least three samples")
    w2 = hann_window(burst.length) ** 2
    gain = np.sum(w2 * burst.samples) / np.sum(w2)
    return GainEstimate.from_gain(gain)


def _bit_reversal(m: int) -> np.ndarray:
    rev = np.zeros(1, dtype=np.intp)
    while rev.size < m:
        rev = np.concatenate([2 * rev, 2 * rev + 1])
    return rev


_REV_CACHE: dict = {}


def fft(x: np.ndarray) -> np.ndarray:
    """Radix-2 decimation-in-time DFT along the last axis, no normalization."""
    x = np.asarray(x, dtype=np.complex128)
    m = x.shape[-1]
    if m < 1 or m & (m - 1):
        raise ValueError("fft length must be a power of two")
    if m == 1:
        return x.copy()
    rev = _REV_CACHE.get(m)
    if rev is None:
        rev = _bit_reversal(m)
        _REV_CACHE[m] = rev
    lead = x.shape[:-1]
    y = x[..., rev].reshape(-1, m)
    size = 1
    while size < m:
        y = y.reshape(-1, 2, size)
        twiddle = np.exp(-1j * np.pi * np.arange(size) / size)
        odd = y[:, 1, :] * twiddle
        even = y[:, 0, :]
        y = np.concatenate([even + odd, even - odd], axis=-1)
        size *= 2
    return y.reshape(*lead, m)


def spectrum(burst: Burst, fft_size: int = DEFAULT_FFT_SIZE) -> Spectrum:
    """Hann-window the burst, zero-pad to ``fft_size``, and transform."""
    n = burst.length
    if n < 2:
        raise ValueError("spectrum needs at least two samples")
    if n > fft_size:
        raise ValueError("burst longer than the FFT size")
    buf = np.zeros(fft_size, dtype=np.complex128)
    buf[:n] = hann_window(n) * burst.samples
    return Spectrum(bins=fft(buf), bin_width_hz=burst.sample_rate_hz / fft_size)


_CAL_CACHE: dict = {}


def _three_bin_raw(bins: np.ndarray, k0: int) -> float:
    m = bins.size
    window = bins[[(k0 - 1) % m, k0, (k0 + 1) % m]]
    return float(np.mean(np.abs(window) ** 2))


def _three_bin_calibration(n: int, fft_size: int, fs: float) -> float:
    """Scale such that a clean unit-amplitude tone on a bin center reads 1.0.

    The three-bin response of a windowed tone is independent of which bin it
    sits on, so one reference tone fixes the constant for all frequencies.
    """
    key = (n, fft_size)
    cached = _CAL_CACHE.get(key)
    if cached is not None:
        return cached
    k_ref = fft_size // 8
    tone = np.exp(1j * 2.0 * np.pi * k_ref * np.arange(n) / fft_size)
    buf = np.zeros(fft_size, dtype=np.complex128)
    buf[:n] = hann_window(n) * tone
    cal = 1.0 / _three_bin_raw(fft(buf), k_ref)
    _CAL_CACHE[key] = cal
    return cal


def fft_3bin_estimate(burst: Burst, f_cw_hz: float, fft_size: int = DEFAULT_FFT_SIZE) -> GainEstimate:
    """Average the squared magnitudes of the three FFT bins around the tone.

    Calibrated so a clean on-bin unit tone returns power 1.0; the phase of
    the center bin is carried through informationally on the gain field.
    """
    fs = burst.sample_rate_hz
    if not abs(f_cw_hz) < fs / 2:
        raise ValueError("tone frequency must be below Nyquist")
    spec = spectrum(burst, fft_size)
    k0 = int(round(f_cw_hz / fs * fft_size)) % fft_size
    power_mw = _three_bin_calibration(burst.length, fft_size, fs) * _three_bin_raw(spec.bins, k0)
    center = spec.bins[k0]
    mag = abs(center)
    phase = center / mag if mag > 0 else 1.0 + 0.0j
    return GainEstimate(gain=phase * math.sqrt(power_mw), power_mw=power_mw, power_dbm=mw_to_dbm(power_mw))


PSD_FLOOR_DB = -400.0


def welch_psd(burst: Burst, segment: int = 1024, overlap: float = 0.5) -> np.ndarray:
    """Hann-windowed averaged periodogram in dBm per bin, natural FFT order.

    The linear per-bin powers sum to the mean burst power (for a
    time-uniform signal); zero bins are floored at -400 dB.
    """
    n = burst.length
    if segment < 2 or segment & (segment - 1):
        raise ValueError("segment must be a power of two >= 2")
    if segment > n:
        raise ValueError("segment must not exceed the burst length")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must be in [0, 1)")
    hop = max(1, int(round(segment * (1.0 - overlap))))
    starts = range(0, n - segment + 1, hop)
    window = hann_window(segment)
    scale = 1.0 / (segment * np.sum(window**2))
    acc = np.zeros(segment)
    count = 0
    for start in starts:
        seg = fft(window * burst.samples[start : start + segment])
        acc += np.abs(seg) ** 2
        count += 1
    psd_lin = scale * acc / count
    return 10.0 * np.log10(np.maximum(psd_lin, 10.0 ** (PSD_FLOOR_DB / 10.0)))


def psd_bin_freqs_hz(segment: int, fs: float) -> np.ndarray:
    """Bin center frequencies matching ``welch_psd`` output order."""
    k = np.arange(segment)
    return np.where(k < segment / 2, k, k - segment) * (fs / segment)
