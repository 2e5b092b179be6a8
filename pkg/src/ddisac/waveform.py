"""Modems and effective channels for OFDM, OTFS and AFDM.

All three waveforms share the structure ``y = T H T^H x + noise`` where T is
the unitary demodulation transform (DFT for OFDM, Doppler-axis DFT of the
delay-Doppler grid for OTFS, discrete affine Fourier transform for AFDM) and
H is the time-domain channel. This module owns the transforms, the per-path
effective operators, constellation mapping, and pilot/frame construction.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import (
    ChannelRealization,
    PhaseFn,
    afdm_cp_phase,
    no_cp_phase,
    path_factor_vector,
)
from .errors import ConfigurationError

WAVEFORM_KINDS = ("ofdm", "otfs", "afdm")


def afdm_tuning(n: int, f_max: float) -> tuple[float, float]:
    """Default AFDM chirp rates for a channel with maximum digital Doppler ``f_max``.

    The first chirp rate follows the orthogonality rule
    ``c1 = (2*ceil(f_max) + 1) / (2n)`` so the delay-Doppler response of each
    path stays resolvable; the second defaults to the irrational
    ``1 / (2*pi*n^2)`` to avoid chirp resonances. Both can be overridden when
    constructing a :class:`WaveformSpec`.
    """
    if f_max < 0:
        raise ConfigurationError(f"f_max must be nonnegative, got {f_max}")
    c1 = (2.0 * np.ceil(f_max) + 1.0) / (2.0 * n)
    c2 = 1.0 / (2.0 * np.pi * n**2)
    return float(c1), float(c2)


@dataclass(frozen=True)
class WaveformSpec:
    """Choice of modem plus its shape parameters.

    OTFS frames are ``k x m`` delay-Doppler grids with ``k*m == n`` vectorized
    column-major; AFDM carries the two chirp rates ``c1, c2``.
    """

    kind: str
    n: int
    k: int = 0
    m: int = 0
    c1: float = 0.0
    c2: float = 0.0

    def __post_init__(self):
        if self.kind not in WAVEFORM_KINDS:
            raise ConfigurationError(f"unknown waveform kind {self.kind!r}")
        if self.n <= 0:
            raise ConfigurationError(f"frame length must be positive, got {self.n}")
        if self.kind == "otfs":
            if self.k <= 0 or self.m <= 0 or self.k * self.m != self.n:
                raise ConfigurationError(
                    f"OTFS needs k*m == n, got k={self.k}, m={self.m}, n={self.n}"
                )
        if self.kind == "afdm" and self.c1 < 0:
            raise ConfigurationError(f"AFDM chirp rate c1 must be >= 0, got {self.c1}")

    @classmethod
    def ofdm(cls, n: int) -> "WaveformSpec":
        return cls(kind="ofdm", n=n)

    @classmethod
    def otfs(cls, k: int, m: int) -> "WaveformSpec":
        return cls(kind="otfs", n=k * m, k=k, m=m)

    @classmethod
    def afdm(
        cls,
        n: int,
        f_max: float = 0.0,
        c1: Optional[float] = None,
        c2: Optional[float] = None,
    ) -> "WaveformSpec":
        c1_def, c2_def = afdm_tuning(n, f_max)
        return cls(
            kind="afdm",
            n=n,
            c1=c1_def if c1 is None else c1,
            c2=c2_def if c2 is None else c2,
        )

    @property
    def cp_phase(self) -> PhaseFn:
        """Prefix phase rule induced by this waveform."""
        if self.kind == "afdm":
            return afdm_cp_phase(self.n, self.c1)
        return no_cp_phase


def _afdm_lambdas(spec: WaveformSpec) -> tuple[np.ndarray, np.ndarray]:
    idx2 = np.arange(spec.n) ** 2
    lam1 = np.exp(-2j * np.pi * spec.c1 * idx2)
    lam2 = np.exp(-2j * np.pi * spec.c2 * idx2)
    return lam1, lam2


def modulate(spec: WaveformSpec, x: np.ndarray) -> np.ndarray:
    """Map a length-n symbol vector to time-domain samples (unitary)."""
    x = np.asarray(x)
    if x.shape != (spec.n,):
        raise ValueError(f"expected shape ({spec.n},), got {x.shape}")
    return modulate_columns(spec, x[:, None])[:, 0]


def demodulate(spec: WaveformSpec, r: np.ndarray) -> np.ndarray:
    """Inverse of :func:`modulate`: time-domain samples back to symbols."""
    r = np.asarray(r)
    if r.shape != (spec.n,):
        raise ValueError(f"expected shape ({spec.n},), got {r.shape}")
    return demodulate_columns(spec, r[:, None])[:, 0]


def modulate_columns(spec: WaveformSpec, a: np.ndarray) -> np.ndarray:
    """Apply the modulation transform to every column of an (n, c) array."""
    if spec.kind == "ofdm":
        return np.fft.ifft(a, axis=0, norm="ortho")
    if spec.kind == "otfs":
        grid = a.reshape(spec.k, spec.m, -1, order="F")
        out = np.fft.ifft(grid, axis=1, norm="ortho")
        return out.reshape(spec.n, -1, order="F")
    lam1, lam2 = _afdm_lambdas(spec)
    out = np.fft.ifft(lam2.conj()[:, None] * a, axis=0, norm="ortho")
    return lam1.conj()[:, None] * out


def demodulate_columns(spec: WaveformSpec, a: np.ndarray) -> np.ndarray:
    """Apply the demodulation transform to every column of an (n, c) array."""
    if spec.kind == "ofdm":
        return np.fft.fft(a, axis=0, norm="ortho")
    if spec.kind == "otfs":
        grid = a.reshape(spec.k, spec.m, -1, order="F")
        out = np.fft.fft(grid, axis=1, norm="ortho")
        return out.reshape(spec.n, -1, order="F")
    lam1, lam2 = _afdm_lambdas(spec)
    out = np.fft.fft(lam1[:, None] * a, axis=0, norm="ortho")
    return lam2[:, None] * out


@functools.lru_cache(maxsize=16)
def demod_matrix(spec: WaveformSpec) -> np.ndarray:
    """Dense demodulation transform T (unitary n x n matrix)."""
    return demodulate_columns(spec, np.eye(spec.n, dtype=np.complex128))


@functools.lru_cache(maxsize=16)
def _mod_matrix(spec: WaveformSpec) -> np.ndarray:
    return modulate_columns(spec, np.eye(spec.n, dtype=np.complex128))


@dataclass(frozen=True)
class PathOperator:
    """Effective channel factor of a single (delay tap, Doppler) pair.

    ``matrix`` is the unitary conjugation ``T * Phi(ell) * Omega^f * Pi^ell * T^H``
    for the owning waveform; multiplying by the path gain and summing over
    paths yields the effective channel.
    """

    ell: int
    f: float
    matrix: np.ndarray


def path_operator_matrices(
    spec: WaveformSpec, ells: np.ndarray, fs: np.ndarray
) -> np.ndarray:
    """Stack of effective path operators, shape (p, n, n)."""
    ells = np.asarray(ells, dtype=np.int64)
    fs = np.asarray(fs, dtype=np.float64)
    if ells.shape != fs.shape or ells.ndim != 1:
        raise ValueError("ells and fs must be 1-D arrays of equal length")
    n = spec.n
    mod = _mod_matrix(spec)
    phase_fn = spec.cp_phase
    blocks = np.empty((len(ells), n, n), dtype=np.complex128)
    for i, (ell, f) in enumerate(zip(ells, fs)):
        diag = path_factor_vector(n, int(ell), float(f), phase_fn)
        blocks[i] = diag[:, None] * np.roll(mod, int(ell), axis=0)
    stacked = demodulate_columns(spec, np.hstack(blocks))
    return stacked.reshape(n, len(ells), n).transpose(1, 0, 2).copy()


def build_path_operator(spec: WaveformSpec, ell: int, f: float) -> PathOperator:
    """Effective channel operator for one (delay tap, Doppler) pair."""
    if not 0 <= ell < spec.n:
        raise ConfigurationError(f"delay tap must lie in [0, {spec.n}), got {ell}")
    matrix = path_operator_matrices(spec, np.array([ell]), np.array([f]))[0]
    return PathOperator(ell=int(ell), f=float(f), matrix=matrix)


def build_effective_channel(
    spec: WaveformSpec, realization: ChannelRealization
) -> np.ndarray:
    """Post-demodulation linear map G = sum_p h_p * Gamma_p."""
    mats = path_operator_matrices(spec, realization.delay_taps, realization.dopplers)
    return np.tensordot(realization.gains, mats, axes=(0, 0))


def zadoff_chu(length: int, root: int = 1) -> np.ndarray:
    """Constant-modulus Zadoff-Chu sequence of the given length."""
    if length < 1:
        raise ConfigurationError(f"sequence length must be >= 1, got {length}")
    idx = np.arange(length)
    if length % 2:
        phase = root * idx * (idx + 1) / length
    else:
        phase = root * idx**2 / length
    return np.exp(-1j * np.pi * phase)


@dataclass(frozen=True)
class Constellation:
    """QPSK constellation with average symbol energy ``es``."""

    kind: str = "qpsk"
    es: float = 1.0

    def __post_init__(self):
        if self.kind != "qpsk":
            raise ConfigurationError(f"unsupported constellation {self.kind!r}")
        if self.es <= 0:
            raise ConfigurationError(f"symbol energy must be positive, got {self.es}")

    @property
    def c_x(self) -> float:
        """Per-axis amplitude of the constellation points."""
        return float(np.sqrt(self.es / 2.0))

    @property
    def bits_per_symbol(self) -> int:
        return 2

    def map_bits(self, bits: np.ndarray) -> np.ndarray:
        """Gray-map a flat bit array (pairs per symbol: bit0 -> Re, bit1 -> Im)."""
        bits = np.asarray(bits)
        if bits.size % 2:
            raise ValueError("bit count must be even for QPSK")
        pairs = bits.reshape(-1, 2)
        return self.c_x * ((1 - 2 * pairs[:, 0]) + 1j * (1 - 2 * pairs[:, 1]))

    def hard_bits(self, symbols: np.ndarray) -> np.ndarray:
        """Per-axis sign decisions, inverse of :meth:`map_bits`."""
        symbols = np.asarray(symbols)
        bits = np.empty((symbols.size, 2), dtype=np.int64)
        bits[:, 0] = symbols.real < 0
        bits[:, 1] = symbols.imag < 0
        return bits.reshape(-1)

    def hard_decision(self, symbols: np.ndarray) -> np.ndarray:
        """Nearest constellation point for each input symbol."""
        symbols = np.asarray(symbols)
        return self.c_x * (
            np.where(symbols.real >= 0, 1.0, -1.0)
            + 1j * np.where(symbols.imag >= 0, 1.0, -1.0)
        )


@dataclass(frozen=True)
class FrameLayout:
    """Pilot/null/payload partition of the length-n symbol vector.

    ``pilot_values`` holds the unboosted pilot symbols; the transmitted pilots
    are scaled by ``sqrt(pilot_power_boost)``. Null indices are guard symbols
    known to be zero.
    """

    n: int
    pilot_indices: np.ndarray
    null_indices: np.ndarray
    pilot_values: np.ndarray
    pilot_power_boost: float = 1.0

    def __post_init__(self):
        object.__setattr__(
            self, "pilot_indices", np.asarray(self.pilot_indices, dtype=np.int64)
        )
        object.__setattr__(
            self, "null_indices", np.asarray(self.null_indices, dtype=np.int64)
        )
        object.__setattr__(
            self, "pilot_values", np.asarray(self.pilot_values, dtype=np.complex128)
        )
        if self.pilot_power_boost < 1.0:
            raise ConfigurationError(
                f"pilot power boost must be >= 1, got {self.pilot_power_boost}"
            )
        all_idx = np.concatenate([self.pilot_indices, self.null_indices])
        if all_idx.size and (all_idx.min() < 0 or all_idx.max() >= self.n):
            raise ConfigurationError("pilot/null indices out of range")
        if len(np.unique(all_idx)) != all_idx.size:
            raise ConfigurationError("pilot and null index sets must be disjoint")
        if self.pilot_values.shape != self.pilot_indices.shape:
            raise ConfigurationError("one pilot value per pilot index required")
        if self.pilot_indices.size and np.any(np.abs(self.pilot_values) == 0):
            raise ConfigurationError("pilot values must be nonzero")

    @property
    def data_indices(self) -> np.ndarray:
        """Complement of the pilot set (includes nulls)."""
        return np.setdiff1d(np.arange(self.n), self.pilot_indices)

    @property
    def payload_indices(self) -> np.ndarray:
        """Data indices that actually carry constellation symbols."""
        return np.setdiff1d(self.data_indices, self.null_indices)

    @property
    def boosted_pilot_values(self) -> np.ndarray:
        return self.pilot_values * np.sqrt(self.pilot_power_boost)

    def known_symbols(self) -> tuple[np.ndarray, np.ndarray]:
        """Indices and values of all symbols known to the receiver a priori."""
        idx = np.concatenate([self.pilot_indices, self.null_indices])
        vals = np.concatenate(
            [self.boosted_pilot_values, np.zeros(self.null_indices.size)]
        )
        order = np.argsort(idx)
        return idx[order], vals[order]


def block_pilot_layout(
    n: int, block_len: int, es: float = 1.0, pilot_power_boost: float = 1.0
) -> FrameLayout:
    """Zadoff-Chu pilot block at the frame head, data everywhere else."""
    if not 1 <= block_len <= n:
        raise ConfigurationError(f"block length must lie in [1, {n}], got {block_len}")
    values = np.sqrt(es) * zadoff_chu(block_len)
    return FrameLayout(
        n=n,
        pilot_indices=np.arange(block_len),
        null_indices=np.array([], dtype=np.int64),
        pilot_values=values,
        pilot_power_boost=pilot_power_boost,
    )


def single_pilot_layout(
    n: int, block_len: int, es: float = 1.0, pilot_power_boost: float = 1.0
) -> FrameLayout:
    """One pilot at index 0 followed by a null guard of ``block_len - 1``."""
    if not 1 <= block_len <= n:
        raise ConfigurationError(f"block length must lie in [1, {n}], got {block_len}")
    return FrameLayout(
        n=n,
        pilot_indices=np.array([0]),
        null_indices=np.arange(1, block_len),
        pilot_values=np.array([np.sqrt(es) + 0j]),
        pilot_power_boost=pilot_power_boost,
    )


def build_frame(
    layout: FrameLayout,
    data_symbols: np.ndarray,
    constellation: Optional[Constellation] = None,
) -> np.ndarray:
    """Assemble the transmit symbol vector from a layout and payload symbols."""
    data_symbols = np.asarray(data_symbols, dtype=np.complex128)
    payload = layout.payload_indices
    if data_symbols.shape != payload.shape:
        raise ValueError(
            f"expected {payload.size} payload symbols, got {data_symbols.size}"
        )
    if constellation is not None and data_symbols.size:
        points = constellation.hard_decision(data_symbols)
        if not np.allclose(points, data_symbols, atol=1e-9):
            raise ValueError("payload symbols are not constellation points")
    x = np.zeros(layout.n, dtype=np.complex128)
    x[layout.pilot_indices] = layout.boosted_pilot_values
    x[payload] = data_symbols
    return x
