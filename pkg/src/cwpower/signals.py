"""Calibrated complex-baseband burst synthesis.

All sample values carry units of sqrt(mW), so the mean of |x|^2 over a burst
is its power in mW and dBm conversions need no impedance convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_SAMPLE_RATE_HZ = 10e6


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    if mw <= 0.0:
        return -math.inf
    return 10.0 * math.log10(mw)


@dataclass(frozen=True)
class RfConfig:
    """RF constants of the capture setup plus the synthesis choices.

    The QPSK symbol rate and roll-off are tied so that the occupied
    bandwidth Rs*(1+rolloff) equals ``qpsk_bandwidth_hz`` with an integer
    oversampling factor.
    """

    f_c_hz: float = 5.0e9
    f_cw_offset_hz: float = 200e3
    qpsk_bandwidth_hz: float = 4e6
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    cw_path_loss_db: float = 17.5
    qpsk_path_loss_db: float = 24.2
    noise_floor_dbm: float = -102.0
    qpsk_symbol_rate_baud: float = 2.5e6
    rrc_rolloff: float = 0.6
    burst_len: int = 1000
    rrc_span_symbols: int = 8

    def __post_init__(self) -> None:
        if not math.isclose(
            self.qpsk_symbol_rate_baud * (1.0 + self.rrc_rolloff),
            self.qpsk_bandwidth_hz,
            rel_tol=1e-12,
        ):
            raise ValueError("symbol rate * (1 + rolloff) must equal the QPSK bandwidth")
        sps = self.sample_rate_hz / self.qpsk_symbol_rate_baud
        if sps < 1 or abs(sps - round(sps)) > 1e-9:
            raise ValueError("sample rate must be an integer multiple of the symbol rate")
        if self.f_cw_offset_hz + self.qpsk_bandwidth_hz / 2 >= self.sample_rate_hz / 2:
            raise ValueError("CW offset plus half the QPSK bandwidth must stay in-band")
        if self.burst_len < 1:
            raise ValueError("burst_len must be >= 1")

    @property
    def oversampling(self) -> int:
        return int(round(self.sample_rate_hz / self.qpsk_symbol_rate_baud))


@dataclass(frozen=True)
class PowerGrid:
    """The 8 x 5 grid of transmitted CW/QPSK power levels (dBm)."""

    cw_tx_dbm: tuple = (-10.0, -20.0, -25.0, -30.0, -35.0, -40.0, -45.0, -50.0)
    qpsk_tx_dbm: tuple = (-10.0, -20.0, -30.0, -40.0, -50.0)

    def __post_init__(self) -> None:
        if len(self.cw_tx_dbm) != 8 or len(self.qpsk_tx_dbm) != 5:
            raise ValueError("power grid must have 8 CW and 5 QPSK levels (40 cells)")

    def cells(self):
        """Iterate (cw_tx_dbm, qpsk_tx_dbm) in row-major order."""
        for cw in self.cw_tx_dbm:
            for qpsk in self.qpsk_tx_dbm:
                yield (cw, qpsk)

    @property
    def n_cells(self) -> int:
        return len(self.cw_tx_dbm) * len(self.qpsk_tx_dbm)


@dataclass(frozen=True)
class Burst:
    """Fixed-length complex baseband I/Q record, sample unit sqrt(mW)."""

    samples: np.ndarray
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.complex128)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size < 1:
            raise ValueError("burst needs at least one sample")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample rate must be positive")
        if not np.all(np.isfinite(samples.view(np.float64))):
            raise ValueError("burst samples must be finite")

    @property
    def length(self) -> int:
        return self.samples.size

    def mean_power_mw(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))

    def mean_power_dbm(self) -> float:
        return mw_to_dbm(self.mean_power_mw())


@dataclass(frozen=True)
class BurstLabel:
    """Ground truth for one burst: complex gain, received powers, nominal SIR."""

    gain: complex
    cw_rx_dbm: float
    qpsk_rx_dbm: float
    sir_db: float
    cw_tx_dbm: float
    qpsk_tx_dbm: float
    seed: int

    def __post_init__(self) -> None:
        power_dbm = mw_to_dbm(abs(self.gain) ** 2)
        if abs(power_dbm - self.cw_rx_dbm) > 1e-9:
            raise ValueError("gain magnitude inconsistent with cw_rx_dbm")
        if abs(self.sir_db - (self.cw_rx_dbm - self.qpsk_rx_dbm)) > 1e-9:
            raise ValueError("sir_db inconsistent with received powers")

    @property
    def cell(self) -> tuple:
        return (self.cw_tx_dbm, self.qpsk_tx_dbm)


def _require_finite(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")


def synthesize_cw(
    amplitude: float,
    freq_hz: float,
    phase_rad: float,
    n: int,
    fs: float = DEFAULT_SAMPLE_RATE_HZ,
) -> Burst:
    """Complex exponential a * exp(j(2*pi*(f/fs)*k + phase)); mean power a^2."""
    _require_finite(amplitude=amplitude, freq_hz=freq_hz, phase_rad=phase_rad, fs=fs)
    if amplitude < 0:
        raise ValueError("amplitude must be >= 0")
    if not abs(freq_hz) < fs / 2:
        raise ValueError("freq_hz must be below Nyquist")
    if n < 1:
        raise ValueError("n must be >= 1")
    k = np.arange(n)
    samples = amplitude * np.exp(1j * (2.0 * np.pi * (freq_hz / fs) * k + phase_rad))
    return Burst(samples, fs)


def rrc_taps(rolloff: float, sps: int, span_symbols: int) -> np.ndarray:
    """Root-raised-cosine taps, Hann-tapered truncation, unit energy.

    ``span_symbols`` is the one-sided span; total length 2*span*sps + 1.
    """
    if not 0.0 < rolloff <= 1.0:
        raise ValueError("rolloff must be in (0, 1]")
    n = 2 * span_symbols * sps + 1
    t = (np.arange(n) - (n - 1) / 2) / sps  # symbol units
    h = np.empty(n)
    t_special = 1.0 / (4.0 * rolloff)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            h[i] = 1.0 - rolloff + 4.0 * rolloff / np.pi
        elif abs(abs(ti) - t_special) < 1e-9:
            h[i] = (rolloff / np.sqrt(2.0)) * (
                (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * rolloff))
                + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * rolloff))
            )
        else:
            h[i] = (
                np.sin(np.pi * ti * (1.0 - rolloff))
                + 4.0 * rolloff * ti * np.cos(np.pi * ti * (1.0 + rolloff))
            ) / (np.pi * ti * (1.0 - (4.0 * rolloff * ti) ** 2))
    # Hann taper suppresses truncation sidelobes (<0.01% out-of-band at rolloff 0.6).
    taper = 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / (n - 1)))
    h = h * taper
    return h / np.sqrt(np.sum(h * h))


_GRAY_QPSK = np.exp(1j * np.pi * np.array([0.25, 0.75, 1.75, 1.25]))  # index = (b1<<1)|b0


def synthesize_qpsk(rx_power_dbm: float, cfg: RfConfig, rng_seed: int, n: int | None = None) -> Burst:
    """Random Gray-mapped QPSK, RRC-shaped, centered at 0 Hz.

    The burst is rescaled so that its measured mean power equals
    ``rx_power_dbm`` exactly (per-burst normalization, not expectation).
    """
    _require_finite(rx_power_dbm=rx_power_dbm)
    if n is None:
        n = cfg.burst_len
    if n < 1:
        raise ValueError("n must be >= 1")
    sps = cfg.oversampling
    span = cfg.rrc_span_symbols
    taps = rrc_taps(cfg.rrc_rolloff, sps, span)
    n_sym = -(-n // sps) + 2 * span  # ceil(n/sps) plus filter settling on both sides
    rng = np.random.default_rng(rng_seed)
    bits = rng.integers(0, 2, size=2 * n_sym)
    symbols = _GRAY_QPSK[(bits[0::2] << 1) | bits[1::2]]
    upsampled = np.zeros(n_sym * sps, dtype=np.complex128)
    upsampled[::sps] = symbols
    shaped = np.convolve(upsampled, taps)
    start = (shaped.size - n) // 2
    x = shaped[start : start + n]
    power = np.mean(np.abs(x) ** 2)
    x = x * np.sqrt(dbm_to_mw(rx_power_dbm) / power)
    return Burst(x, cfg.sample_rate_hz)


def synthesize_noise(
    floor_dbm: float,
    n: int,
    rng_seed: int,
    fs: float = DEFAULT_SAMPLE_RATE_HZ,
) -> Burst:
    """Circularly symmetric complex Gaussian with total in-band power
    10^(floor_dbm/10) mW in expectation; -inf floor yields a zero burst."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if floor_dbm == -math.inf:
        return Burst(np.zeros(n, dtype=np.complex128), fs)
    _require_finite(floor_dbm=floor_dbm)
    rng = np.random.default_rng(rng_seed)
    sigma = math.sqrt(dbm_to_mw(floor_dbm) / 2.0)
    samples = sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return Burst(samples, fs)


def tx_to_rx_dbm(tx_dbm: float, path_loss_db: float) -> float:
    _require_finite(tx_dbm=tx_dbm, path_loss_db=path_loss_db)
    return tx_dbm - path_loss_db


def nominal_sir_db(cw_tx_dbm: float, qpsk_tx_dbm: float, cfg: RfConfig) -> float:
    """Received CW power minus received QPSK power for a grid cell, in dB."""
    _require_finite(cw_tx_dbm=cw_tx_dbm, qpsk_tx_dbm=qpsk_tx_dbm)
    return (cw_tx_dbm - cfg.cw_path_loss_db) - (qpsk_tx_dbm - cfg.qpsk_path_loss_db)


def mix(bursts: list) -> Burst:
    """Element-wise complex sum of equally shaped bursts."""
    if not bursts:
        raise ValueError("mix needs at least one burst")
    first = bursts[0]
    total = np.array(first.samples, dtype=np.complex128, copy=True)
    for burst in bursts[1:]:
        if burst.length != first.length:
            raise ValueError("bursts must have equal length")
        if burst.sample_rate_hz != first.sample_rate_hz:
            raise ValueError("bursts must share a sample rate")
        total += burst.samples
    return Burst(total, first.sample_rate_hz)


def frequency_shift(burst: Burst, delta_hz: float) -> Burst:
    """Multiply by exp(j*2*pi*(delta/fs)*k); per-sample magnitude preserved."""
    _require_finite(delta_hz=delta_hz)
    fs = burst.sample_rate_hz
    if not abs(delta_hz) < fs / 2:
        raise ValueError("delta_hz must be below Nyquist")
    k = np.arange(burst.length)
    rotated = burst.samples * np.exp(1j * 2.0 * np.pi * (delta_hz / fs) * k)
    return Burst(rotated, fs)
