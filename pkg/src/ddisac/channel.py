"""Doubly-dispersive time-domain channel synthesis.

A channel realization is a sum of per-path factors: a prefix phase diagonal
(identity for plain cyclic prefixes, a chirp-dependent diagonal for AFDM's
chirp-periodic prefix), a fractional-power Doppler diagonal, and an integer
cyclic shift. All operations are pure functions of their inputs plus an
explicit seeded random generator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError

SPEED_OF_LIGHT = 3.0e8  # m/s

# Prefix phase rule: sample index -> phase in cycles (exponent is -j*2*pi*phase).
PhaseFn = Callable[[int], float]


def no_cp_phase(n: int) -> float:
    """Prefix phase rule for OFDM/OTFS: a plain cyclic prefix adds no phase."""
    return 0.0


def afdm_cp_phase(n_samples: int, c1: float) -> PhaseFn:
    """Chirp-periodic prefix phase rule for AFDM with chirp rate ``c1``."""

    def phase(n: int) -> float:
        return c1 * (n_samples**2 - 2.0 * n_samples * n)

    return phase


@dataclass(frozen=True)
class SystemConfig:
    """Static link parameters shared by all waveforms.

    ``bandwidth_hz`` doubles as the sampling rate, so the delay resolution is
    ``1 / bandwidth_hz`` and Doppler is expressed as the dimensionless digital
    shift ``f = n * nu / bandwidth_hz``.
    """

    n: int
    carrier_hz: float
    bandwidth_hz: float
    ell_max: int
    f_max: float
    n_cp: int

    def __post_init__(self):
        if self.n <= 0:
            raise ConfigurationError(f"frame length must be positive, got {self.n}")
        if not 0 <= self.ell_max < self.n:
            raise ConfigurationError(
                f"ell_max must lie in [0, {self.n}), got {self.ell_max}"
            )
        if not 0 <= self.f_max < self.n / 2:
            raise ConfigurationError(
                f"f_max must lie in [0, {self.n / 2}), got {self.f_max}"
            )
        if self.bandwidth_hz <= 0:
            raise ConfigurationError("bandwidth must be positive")
        if self.n_cp < self.ell_max:
            raise ConfigurationError(
                f"cyclic prefix ({self.n_cp}) shorter than ell_max ({self.ell_max})"
            )

    @property
    def sample_period(self) -> float:
        return 1.0 / self.bandwidth_hz


@dataclass(frozen=True)
class ChannelPath:
    """One propagation path: complex gain, integer delay tap, digital Doppler."""

    gain: complex
    delay_tap: int
    doppler: float

    def __post_init__(self):
        if self.delay_tap < 0:
            raise ConfigurationError(f"negative delay tap {self.delay_tap}")


@dataclass(frozen=True)
class ChannelRealization:
    """An ordered set of paths; index 0 is the line-of-sight path."""

    config: SystemConfig
    paths: tuple[ChannelPath, ...]

    def __post_init__(self):
        if not self.paths:
            raise ConfigurationError("realization needs at least one path")
        for p in self.paths:
            if p.delay_tap > self.config.ell_max:
                raise ConfigurationError(
                    f"delay tap {p.delay_tap} exceeds ell_max {self.config.ell_max}"
                )
            if abs(p.doppler) > self.config.f_max + 1e-12:
                raise ConfigurationError(
                    f"Doppler {p.doppler} exceeds f_max {self.config.f_max}"
                )

    @property
    def num_paths(self) -> int:
        return len(self.paths)

    @property
    def gains(self) -> np.ndarray:
        return np.array([p.gain for p in self.paths], dtype=np.complex128)

    @property
    def delay_taps(self) -> np.ndarray:
        return np.array([p.delay_tap for p in self.paths], dtype=np.int64)

    @property
    def dopplers(self) -> np.ndarray:
        return np.array([p.doppler for p in self.paths], dtype=np.float64)


def sample_paths(
    config: SystemConfig,
    num_paths: int,
    sigma_h2: float,
    rng: np.random.Generator,
) -> ChannelRealization:
    """Draw a random realization with one LoS path plus ``num_paths`` NLoS paths.

    Delay taps are uniform integers on {0, ..., ell_max} (LoS pinned to tap 0),
    Dopplers follow a Jakes spectrum ``f_max * cos(theta)`` with theta uniform
    on [-pi, pi], and gains are i.i.d. circular complex Gaussian with variance
    ``sigma_h2``.
    """
    if num_paths < 1:
        raise ConfigurationError(f"need at least one NLoS path, got {num_paths}")
    if sigma_h2 <= 0:
        raise ConfigurationError(f"sigma_h2 must be positive, got {sigma_h2}")
    total = num_paths + 1
    taps = rng.integers(0, config.ell_max + 1, size=total)
    taps[0] = 0
    theta = rng.uniform(-np.pi, np.pi, size=total)
    dopplers = config.f_max * np.cos(theta)
    gains = np.sqrt(sigma_h2 / 2.0) * (
        rng.standard_normal(total) + 1j * rng.standard_normal(total)
    )
    paths = tuple(
        ChannelPath(gain=complex(g), delay_tap=int(t), doppler=float(f))
        for g, t, f in zip(gains, taps, dopplers)
    )
    return ChannelRealization(config=config, paths=paths)


def cyclic_shift(n: int, ell: int) -> np.ndarray:
    """Forward cyclic shift matrix raised to the power ``ell``.

    Right-multiplying by the result moves the first ``ell`` columns of a
    matrix to the last ``ell`` positions.
    """
    if not 0 <= ell < n:
        raise ConfigurationError(f"shift power must lie in [0, {n}), got {ell}")
    return np.roll(np.eye(n), ell, axis=0)


def doppler_diag(n: int, f: float) -> np.ndarray:
    """Diagonal Doppler matrix ``diag(exp(-j*2*pi*f*k/n))`` for k = 0..n-1.

    Fractional powers of the root-of-unity diagonal are defined entrywise,
    which is the unique continuous extension of the integer powers.
    """
    return np.diag(doppler_vector(n, f))


def doppler_vector(n: int, f: float) -> np.ndarray:
    """Diagonal entries of :func:`doppler_diag` as a vector."""
    return np.exp(-2j * np.pi * f * np.arange(n) / n)


def cp_phase_diag(n: int, ell: int, phase_fn: PhaseFn) -> np.ndarray:
    """Prefix phase diagonal for a path with delay tap ``ell``.

    The first ``ell`` entries carry ``exp(-j*2*pi*phase_fn(k))`` for
    k = ell, ell-1, ..., 1; the remaining entries are 1.
    """
    return np.diag(cp_phase_vector(n, ell, phase_fn))


def cp_phase_vector(n: int, ell: int, phase_fn: PhaseFn) -> np.ndarray:
    """Diagonal entries of :func:`cp_phase_diag` as a vector."""
    if not 0 <= ell < n:
        raise ConfigurationError(f"delay tap must lie in [0, {n}), got {ell}")
    diag = np.ones(n, dtype=np.complex128)
    if ell > 0:
        phases = np.array([phase_fn(k) for k in range(ell, 0, -1)], dtype=np.float64)
        diag[:ell] = np.exp(-2j * np.pi * phases)
    return diag


def path_factor_vector(n: int, ell: int, f: float, phase_fn: PhaseFn) -> np.ndarray:
    """Combined diagonal of the prefix-phase and Doppler factors for one path."""
    return cp_phase_vector(n, ell, phase_fn) * doppler_vector(n, f)


def build_td_channel(
    realization: ChannelRealization, phase_fn: PhaseFn
) -> np.ndarray:
    """Dense time-domain channel matrix for a realization.

    Each path contributes ``gain * Phi * Omega^f * Pi^ell``, i.e. exactly n
    nonzero entries (a phased cyclic shift), and the result is the sum over
    paths.
    """
    n = realization.config.n
    h = np.zeros((n, n), dtype=np.complex128)
    rows = np.arange(n)
    for path in realization.paths:
        diag = path_factor_vector(n, path.delay_tap, path.doppler, phase_fn)
        cols = (rows - path.delay_tap) % n
        h[rows, cols] += path.gain * diag
    return h
