"""Sparse delay-Doppler radar parameter estimation.

The received frame is modeled as a sparse combination of dictionary columns,
one per candidate (delay tap, Doppler) grid cell. Two estimators recover the
sparse gain vector: an expectation-maximization sparse Bayesian learner
(baseline) and a probabilistic-data-association message passer with a
Bernoulli-Gaussian denoiser whose distribution parameters are tuned by EM.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit

from .channel import SPEED_OF_LIGHT, SystemConfig, path_factor_vector
from .errors import ConfigurationError, NumericalFailureError
from .waveform import FrameLayout, WaveformSpec, demodulate_columns, modulate

VAR_FLOOR = 1e-15


@dataclass(frozen=True)
class DelayDopplerGrid:
    """Candidate delay taps and digital Doppler points, both strictly increasing."""

    delay_taps: np.ndarray
    doppler_points: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "delay_taps", np.asarray(self.delay_taps, dtype=np.int64)
        )
        object.__setattr__(
            self, "doppler_points", np.asarray(self.doppler_points, dtype=np.float64)
        )
        if self.delay_taps.size == 0 or self.doppler_points.size == 0:
            raise ConfigurationError("grid axes must be nonempty")
        if np.any(np.diff(self.delay_taps) <= 0) or np.any(
            np.diff(self.doppler_points) <= 0
        ):
            raise ConfigurationError("grid axes must be strictly increasing")

    @property
    def num_delay(self) -> int:
        return self.delay_taps.size

    @property
    def num_doppler(self) -> int:
        return self.doppler_points.size

    @property
    def num_cells(self) -> int:
        return self.num_delay * self.num_doppler

    def cell_index(self, k: int, d: int) -> int:
        """Flat cell index; delay-major, Doppler-minor ordering."""
        return k * self.num_doppler + d

    def cell_coords(self, m: int) -> tuple[int, int]:
        return divmod(m, self.num_doppler)

    @property
    def cell_delay_taps(self) -> np.ndarray:
        return np.repeat(self.delay_taps, self.num_doppler)

    @property
    def cell_dopplers(self) -> np.ndarray:
        return np.tile(self.doppler_points, self.num_delay)


def default_grid(config: SystemConfig, num_doppler: int = 11) -> DelayDopplerGrid:
    """All integer taps up to ell_max crossed with a uniform Doppler axis."""
    return DelayDopplerGrid(
        delay_taps=np.arange(config.ell_max + 1),
        doppler_points=np.linspace(-config.f_max, config.f_max, num_doppler),
    )


@dataclass(frozen=True)
class DelayDopplerDictionary:
    """Grid plus the induced dictionary matrix (one column per cell)."""

    grid: DelayDopplerGrid
    matrix: np.ndarray


def build_dictionary(
    spec: WaveformSpec, x: np.ndarray, grid: DelayDopplerGrid
) -> DelayDopplerDictionary:
    """Dictionary whose column for cell (k, d) is the cell's path operator applied to x."""
    x = np.asarray(x, dtype=np.complex128)
    if not np.any(x):
        raise ConfigurationError("transmit vector must be nonzero")
    if grid.num_cells < 1:
        raise ConfigurationError("grid must contain at least one cell")
    n = spec.n
    s = modulate(spec, x)
    phase_fn = spec.cp_phase
    dopp = np.exp(
        -2j * np.pi * np.outer(np.arange(n) / n, grid.doppler_points)
    )  # (n, D)
    pre = np.empty((n, grid.num_cells), dtype=np.complex128)
    for k, ell in enumerate(grid.delay_taps):
        shifted = path_factor_vector(n, int(ell), 0.0, phase_fn) * np.roll(s, int(ell))
        cols = slice(k * grid.num_doppler, (k + 1) * grid.num_doppler)
        pre[:, cols] = shifted[:, None] * dopp
    return DelayDopplerDictionary(grid=grid, matrix=demodulate_columns(spec, pre))


def restrict_to_pilot_block(
    dictionary: Union[DelayDopplerDictionary, np.ndarray],
    y: np.ndarray,
    layout: FrameLayout,
) -> tuple[np.ndarray, np.ndarray]:
    """Rows of the dictionary and receive vector in the pilot + null-guard block."""
    if layout.pilot_indices.size != 1:
        raise ConfigurationError(
            "pilot-block restriction requires a single-pilot layout"
        )
    matrix = dictionary.matrix if isinstance(dictionary, DelayDopplerDictionary) else dictionary
    rows = np.sort(
        np.concatenate([layout.pilot_indices, layout.null_indices])
    )
    return matrix[rows, :], np.asarray(y)[rows]


@dataclass(frozen=True)
class BgParams:
    """Bernoulli-Gaussian prior: sparsity rate, slab mean and slab variance."""

    rho: float
    h_bar: complex = 0.0 + 0.0j
    sigma_bar: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigurationError(f"sparsity rate must lie in [0, 1], got {self.rho}")
        if self.sigma_bar <= 0:
            raise ConfigurationError(
                f"slab variance must be positive, got {self.sigma_bar}"
            )


@dataclass
class SparseChannelEstimate:
    """Posterior summary of the sparse gain vector."""

    h_hat: np.ndarray
    variance: np.ndarray
    iterations: int
    rho_hat: Optional[np.ndarray] = None
    support_trace: Optional[list] = None


def bg_denoise(h_tilde, sigma_tilde2, params: BgParams):
    """Bernoulli-Gaussian scalar denoiser.

    Returns the posterior support probability together with the slab-component
    mean and variance (the caller blends them and applies damping).
    """
    h_tilde = np.asarray(h_tilde)
    st2 = np.asarray(sigma_tilde2, dtype=np.float64)
    if np.any(st2 <= 0):
        raise ValueError("extrinsic variance must be positive")
    sb = params.sigma_bar
    with np.errstate(divide="ignore"):
        log_g = (
            np.log1p(-params.rho)
            - np.log(params.rho)
            + np.log(st2 + sb)
            - np.log(st2)
        )
    expo = -np.abs(h_tilde) ** 2 / st2 + np.abs(h_tilde - params.h_bar) ** 2 / (
        st2 + sb
    )
    rho_hat = expit(-(log_g + expo))
    h_hat = (sb * h_tilde + st2 * params.h_bar) / (st2 + sb)
    sigma_hat2 = sb * st2 / (st2 + sb)
    return rho_hat, h_hat, sigma_hat2


def _top_support(h_hat: np.ndarray, size: int) -> tuple[int, ...]:
    order = np.argsort(-np.abs(h_hat), kind="stable")[:size]
    return tuple(sorted(int(i) for i in order))


def sbl_em(
    y: np.ndarray,
    e_mat: np.ndarray,
    rw: Union[float, np.ndarray],
    epsilon: float = 1e-6,
    i_max: int = 80,
    support_size: Optional[int] = None,
) -> SparseChannelEstimate:
    """Sparse Bayesian learning with EM hyperparameter updates.

    Alternates the posterior covariance/mean of the gain vector under a
    per-entry Gaussian prior with the closed-form hyperparameter refresh,
    stopping when the squared Frobenius change of the hyperparameter matrix
    drops to ``epsilon`` or the iteration cap is reached.
    """
    y = np.asarray(y, dtype=np.complex128)
    e_mat = np.asarray(e_mat, dtype=np.complex128)
    n, num_cells = e_mat.shape
    if np.isscalar(rw):
        if rw <= 0:
            raise ConfigurationError("noise covariance must be positive definite")
        ew = e_mat / rw
    else:
        rw = np.asarray(rw)
        try:
            rw_fac = cho_factor(rw)
        except LinAlgError as exc:
            raise ConfigurationError("noise covariance must be positive definite") from exc
        ew = cho_solve(rw_fac, e_mat)
    gram = e_mat.conj().T @ ew
    b = ew.conj().T @ y
    xi = np.ones(num_cells)
    xi_prev = np.zeros(num_cells)
    h_hat = np.zeros(num_cells, dtype=np.complex128)
    variance = np.ones(num_cells)
    it = 0
    trace = [] if support_size else None
    while np.sum((xi - xi_prev) ** 2) > epsilon and it < i_max:
        it += 1
        inner = gram + np.diag(1.0 / xi)
        try:
            fac = cho_factor(inner)
        except LinAlgError as exc:
            raise NumericalFailureError("singular SBL inner matrix", iteration=it) from exc
        sigma = cho_solve(fac, np.eye(num_cells, dtype=np.complex128))
        h_hat = sigma @ b
        variance = np.real(np.diag(sigma))
        xi_prev = xi
        xi = np.maximum(variance + np.abs(h_hat) ** 2, np.finfo(np.float64).tiny)
        if trace is not None:
            trace.append(_top_support(h_hat, support_size))
    return SparseChannelEstimate(
        h_hat=h_hat,
        variance=variance,
        iterations=it,
        support_trace=trace,
    )


def pda_em(
    y: np.ndarray,
    e_mat: np.ndarray,
    n0: float,
    num_targets: int,
    beta_h: float = 0.5,
    i_max: int = 40,
    update_mean: bool = False,
    track_support: bool = True,
) -> SparseChannelEstimate:
    """Probabilistic-data-association estimator with a Bernoulli-Gaussian prior.

    Each iteration performs vector soft interference cancellation per cell,
    computes extrinsic beliefs through a single shared covariance inverse,
    denoises with the Bernoulli-Gaussian posterior, damps the replicas, and
    refreshes the prior parameters (sparsity rate and slab variance; the slab
    mean stays at zero unless ``update_mean`` is set) by EM.
    """
    y = np.asarray(y, dtype=np.complex128)
    e_mat = np.asarray(e_mat, dtype=np.complex128)
    n, num_cells = e_mat.shape
    if num_targets < 1:
        raise ConfigurationError(f"need at least one target, got {num_targets}")
    if not 0.0 < beta_h <= 1.0:
        raise ConfigurationError(f"damping factor must lie in (0, 1], got {beta_h}")
    tiny = np.finfo(np.float64).tiny
    eh = e_mat.conj().T
    rho = num_targets / num_cells
    sigma_bar = 1.0 / num_targets
    h_bar = 0.0 + 0.0j
    sigma_h2 = 1.0 / num_cells
    h_hat = np.zeros(num_cells, dtype=np.complex128)
    v_hat = np.full(num_cells, sigma_h2)
    rho_hat = np.full(num_cells, rho)
    trace = [] if track_support else None
    for it in range(1, i_max + 1):
        cov = (e_mat * v_hat) @ eh + n0 * np.eye(n)
        try:
            fac = cho_factor(cov)
        except LinAlgError as exc:
            raise NumericalFailureError(
                "interference covariance not invertible", iteration=it
            ) from exc
        resid = y - e_mat @ h_hat
        z = cho_solve(fac, resid)
        zc = cho_solve(fac, e_mat)
        eta = np.maximum(np.real(np.sum(e_mat.conj() * zc, axis=0)), tiny)
        h_tilde = (eh @ z) / eta + h_hat
        sigma_tilde2 = np.maximum(1.0 / eta - v_hat, VAR_FLOOR)
        rho_hat, h_den, v_den = bg_denoise(
            h_tilde, sigma_tilde2, BgParams(rho=rho, h_bar=h_bar, sigma_bar=sigma_bar)
        )
        if np.any(~np.isfinite(rho_hat)):
            raise NumericalFailureError("non-finite sparsity posterior", iteration=it)
        h_hat = beta_h * rho_hat * h_den + (1.0 - beta_h) * h_hat
        v_new = (1.0 - rho_hat) * rho_hat * np.abs(h_den) ** 2 + rho_hat * v_den
        v_hat = beta_h * v_new + (1.0 - beta_h) * v_hat
        rho = float(np.mean(rho_hat))
        denom = num_cells * max(rho, tiny)
        if update_mean:
            h_bar = complex(np.sum(rho_hat * h_hat) / denom)
        sigma_bar = float(
            np.sum(rho_hat * (np.abs(h_hat - h_bar) ** 2 + v_hat)) / denom
        )
        sigma_bar = max(sigma_bar, tiny)
        if trace is not None:
            trace.append(_top_support(h_hat, num_targets))
    return SparseChannelEstimate(
        h_hat=h_hat,
        variance=v_hat,
        iterations=i_max,
        rho_hat=rho_hat,
        support_trace=trace,
    )


@dataclass(frozen=True)
class RadarTarget:
    """One estimated target: grid cell plus physical range/velocity."""

    delay_tap: int
    doppler: float
    range_m: float
    velocity_mps: float
    gain: complex


def extract_targets(
    est: SparseChannelEstimate,
    grid: DelayDopplerGrid,
    config: SystemConfig,
    num_targets: int,
) -> list[RadarTarget]:
    """Largest-magnitude cells converted to ranges and velocities.

    Ties are broken toward the lower flat cell index. Monostatic round-trip
    conventions: range = c*tau/2 and velocity = nu*c/(2*f_c).
    """
    if num_targets > grid.num_cells:
        raise ConfigurationError(
            f"cannot extract {num_targets} targets from {grid.num_cells} cells"
        )
    order = np.argsort(-np.abs(est.h_hat), kind="stable")[:num_targets]
    targets = []
    for m in order:
        k, d = grid.cell_coords(int(m))
        ell = int(grid.delay_taps[k])
        f = float(grid.doppler_points[d])
        tau = ell * config.sample_period
        nu = f * config.bandwidth_hz / config.n
        targets.append(
            RadarTarget(
                delay_tap=ell,
                doppler=f,
                range_m=SPEED_OF_LIGHT * tau / 2.0,
                velocity_mps=nu * SPEED_OF_LIGHT / (2.0 * config.carrier_hz),
                gain=complex(est.h_hat[m]),
            )
        )
    return targets


def normalized_rmse(estimates: Sequence[float], truths: Sequence[float]) -> float:
    """Squared error normalized by the truth magnitude, averaged over targets."""
    estimates = np.asarray(estimates, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if estimates.shape != truths.shape or estimates.ndim != 1 or estimates.size == 0:
        raise ValueError("estimates and truths must be equal-length 1-D sequences")
    if np.any(truths == 0):
        raise ValueError("truth values must be nonzero")
    return float(np.mean((estimates - truths) ** 2 / np.abs(truths)))
