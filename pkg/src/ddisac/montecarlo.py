"""Monte Carlo experiment engine: seeded trials, SNR sweeps, metric records.

Every random draw is determined by (base_seed, snr_index, trial_index), so
single trials can be replayed in isolation and sweeps are reproducible
bit-for-bit regardless of how trials are scheduled. Trials at one SNR point
are independent and may run on a small thread pool (capped by the
``DDISAC_THREADS`` environment variable).
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .channel import (
    SPEED_OF_LIGHT,
    ChannelPath,
    ChannelRealization,
    SystemConfig,
    sample_paths,
)
from .errors import ConfigurationError, NumericalFailureError
from .jcde import JcdeConfig, genie_linear_gabp, pilot_only_estimate, run_pbigabp
from .rpe import (
    DelayDopplerGrid,
    RadarTarget,
    build_dictionary,
    extract_targets,
    normalized_rmse,
    pda_em,
    restrict_to_pilot_block,
    sbl_em,
)
from .waveform import (
    Constellation,
    FrameLayout,
    PathOperator,
    WaveformSpec,
    build_frame,
    path_operator_matrices,
)

JCDE_METHODS = ("pbigabp", "genie", "pilot_only")
RPE_METHODS = ("pda", "sbl")

_TRIAL_CHUNK = 32


@dataclass(frozen=True)
class JcdeSettings:
    """Solver parameters for the joint estimator and its baselines."""

    beta_x: float = 0.3
    beta_h: float = 0.3
    i_max: int = 40


@dataclass(frozen=True)
class RpeSettings:
    """Grid, observation window and solver parameters for radar estimation."""

    num_doppler: int = 11
    num_delay: Optional[int] = None
    observation: str = "full"  # "full" or "pilot_block"
    num_targets: int = 1
    targets: Optional[tuple[tuple[int, float], ...]] = None
    pda_beta: float = 0.5
    pda_i_max: int = 40
    sbl_epsilon: float = 1e-6
    sbl_i_max: int = 80

    def __post_init__(self):
        if self.observation not in ("full", "pilot_block"):
            raise ConfigurationError(
                f"observation must be 'full' or 'pilot_block', got {self.observation!r}"
            )
        if self.num_targets < 1:
            raise ConfigurationError("need at least one target")
        if self.num_doppler < 1:
            raise ConfigurationError("need at least one Doppler grid point")


@dataclass(frozen=True)
class ExperimentPlan:
    """Fully resolved description of one sweep."""

    scenario: str
    waveform: WaveformSpec
    system: SystemConfig
    layout: FrameLayout
    methods: tuple[str, ...]
    snr_points_db: tuple[float, ...]
    trials_per_point: int
    base_seed: int
    num_paths: int = 4  # NLoS path count seen by the communication receiver
    es: float = 1.0
    sigma_h2: float = 1.0
    jcde: JcdeSettings = JcdeSettings()
    rpe: RpeSettings = RpeSettings()

    def __post_init__(self):
        if self.scenario not in ("jcde", "rpe"):
            raise ConfigurationError(f"unknown scenario {self.scenario!r}")
        if not self.methods:
            raise ConfigurationError("at least one method is required")
        allowed = JCDE_METHODS if self.scenario == "jcde" else RPE_METHODS
        for m in self.methods:
            if m not in allowed:
                raise ConfigurationError(
                    f"method {m!r} not valid for scenario {self.scenario!r}"
                )
        if not self.snr_points_db:
            raise ConfigurationError("SNR point list must be nonempty")
        if self.trials_per_point < 1:
            raise ConfigurationError("trials per point must be >= 1")
        if self.base_seed < 0:
            raise ConfigurationError("base seed must be nonnegative")
        if not self.waveform.n == self.system.n == self.layout.n:
            raise ConfigurationError(
                "waveform, system and layout frame lengths must agree"
            )

    def noise_power(self, snr_db: float) -> float:
        """Noise power from SNR = es * sigma_h2 / n0."""
        return self.es * self.sigma_h2 / (10.0 ** (snr_db / 10.0))

    def grid(self) -> DelayDopplerGrid:
        num_delay = self.rpe.num_delay or (self.system.ell_max + 1)
        return DelayDopplerGrid(
            delay_taps=np.arange(num_delay),
            doppler_points=np.linspace(
                -self.system.f_max, self.system.f_max, self.rpe.num_doppler
            ),
        )


@dataclass(frozen=True)
class MetricsRecord:
    """Aggregated results for one (SNR point, method) pair."""

    scenario: str
    waveform: str
    method: str
    snr_db: float
    trials: int
    ber: Optional[float]
    nmse: Optional[float]
    rmse_range: Optional[float]
    rmse_velocity: Optional[float]
    mean_iterations: Optional[float]
    failures: int
    seed: int
    wall_time_seconds: float


@dataclass
class TrialMetrics:
    """Raw per-trial outcomes; aggregation happens in :func:`summarize_point`."""

    failed: bool = False
    bit_errors: int = 0
    bit_count: int = 0
    nmse: float = math.nan
    rmse_range: float = math.nan
    rmse_velocity: float = math.nan
    iterations: float = math.nan
    support_exact: bool = False


def ber(decoded_bits: np.ndarray, true_bits: np.ndarray) -> float:
    """Fraction of differing bits."""
    decoded_bits = np.asarray(decoded_bits)
    true_bits = np.asarray(true_bits)
    if decoded_bits.shape != true_bits.shape:
        raise ValueError("bit vectors must have equal length")
    if decoded_bits.size == 0:
        raise ValueError("bit vectors must be nonempty")
    return float(np.mean(decoded_bits != true_bits))


def nmse(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Squared error energy normalized by the truth energy."""
    estimate = np.asarray(estimate)
    truth = np.asarray(truth)
    if estimate.shape != truth.shape:
        raise ValueError("estimate and truth must have equal shape")
    denom = float(np.sum(np.abs(truth) ** 2))
    if denom == 0:
        raise ValueError("truth must be nonzero")
    return float(np.sum(np.abs(estimate - truth) ** 2) / denom)


def _trial_rng(plan: ExperimentPlan, snr_index: int, trial_index: int):
    return np.random.default_rng([plan.base_seed, snr_index, trial_index])


def _thread_count() -> int:
    env = os.environ.get("DDISAC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigurationError(f"DDISAC_THREADS must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def _run_trials(plan, snr_index, trial_indices, trial_fn):
    """Run trials (possibly on a thread pool) and return {trial_index: result}."""
    indices = list(trial_indices)
    workers = min(_thread_count(), len(indices))
    if workers <= 1:
        return {t: trial_fn(plan, snr_index, t) for t in indices}
    chunks = [indices[i : i + _TRIAL_CHUNK] for i in range(0, len(indices), _TRIAL_CHUNK)]

    def worker(chunk):
        return [(t, trial_fn(plan, snr_index, t)) for t in chunk]

    results = {}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(worker, chunks):
            for t, res in part:
                results[t] = res
    return results


# ---------------------------------------------------------------------------
# JCDE scenario
# ---------------------------------------------------------------------------


def _jcde_trial(plan: ExperimentPlan, snr_index: int, trial_index: int):
    rng = _trial_rng(plan, snr_index, trial_index)
    n0 = plan.noise_power(plan.snr_points_db[snr_index])
    realization = sample_paths(plan.system, plan.num_paths, plan.sigma_h2, rng)
    gam = path_operator_matrices(
        plan.waveform, realization.delay_taps, realization.dopplers
    )
    constellation = Constellation(es=plan.es)
    payload = plan.layout.payload_indices
    bits = rng.integers(0, 2, size=2 * payload.size)
    x = build_frame(plan.layout, constellation.map_bits(bits))
    n = plan.system.n
    noise = np.sqrt(n0 / 2.0) * (
        rng.standard_normal(n) + 1j * rng.standard_normal(n)
    )
    y = realization.gains @ (gam @ x) + noise
    operators = [
        PathOperator(ell=int(e), f=float(f), matrix=gam[p])
        for p, (e, f) in enumerate(zip(realization.delay_taps, realization.dopplers))
    ]
    cfg = JcdeConfig(
        n0=n0,
        beta_x=plan.jcde.beta_x,
        beta_h=plan.jcde.beta_h,
        i_max=plan.jcde.i_max,
        es=plan.es,
        sigma_h2=plan.sigma_h2,
    )
    results = {}
    for method in plan.methods:
        try:
            if method == "pbigabp":
                out = run_pbigabp(y, operators, plan.layout, cfg)
            elif method == "genie":
                out = genie_linear_gabp(
                    y, operators, realization.gains, plan.layout, cfg, true_frame=x
                )
            else:
                out = pilot_only_estimate(y, operators, plan.layout, cfg)
            results[method] = TrialMetrics(
                bit_errors=int(np.sum(out.bits != bits)),
                bit_count=int(bits.size),
                nmse=nmse(out.gains, realization.gains),
                iterations=float(out.iterations),
            )
        except NumericalFailureError:
            results[method] = TrialMetrics(failed=True)
    return results


# ---------------------------------------------------------------------------
# RPE scenario
# ---------------------------------------------------------------------------


def _snap_to_grid(grid: DelayDopplerGrid, delay_tap: int, doppler: float) -> int:
    k_candidates = np.where(grid.delay_taps == delay_tap)[0]
    if k_candidates.size == 0:
        raise ConfigurationError(f"delay tap {delay_tap} is not on the grid")
    d = int(np.argmin(np.abs(grid.doppler_points - doppler)))
    return grid.cell_index(int(k_candidates[0]), d)


def _draw_target_cells(plan: ExperimentPlan, grid: DelayDopplerGrid, rng) -> np.ndarray:
    if plan.rpe.targets is not None:
        cells = np.array(
            [_snap_to_grid(grid, ell, f) for ell, f in plan.rpe.targets], dtype=np.int64
        )
        if len(np.unique(cells)) != cells.size:
            raise ConfigurationError("fixed targets must occupy distinct grid cells")
        return cells
    # Random targets stay off zero range and zero Doppler so the normalized
    # error metric is defined for every realization.
    candidates = np.where(
        (grid.cell_delay_taps > 0) & (grid.cell_dopplers != 0.0)
    )[0]
    if candidates.size < plan.rpe.num_targets:
        raise ConfigurationError("grid too small for the requested target count")
    return np.sort(rng.choice(candidates, size=plan.rpe.num_targets, replace=False))


def cell_range_m(config: SystemConfig, delay_tap: int) -> float:
    """Round-trip range of a delay tap."""
    return SPEED_OF_LIGHT * delay_tap * config.sample_period / 2.0


def cell_velocity_mps(config: SystemConfig, doppler: float) -> float:
    """Round-trip radial velocity of a digital Doppler shift."""
    nu = doppler * config.bandwidth_hz / config.n
    return nu * SPEED_OF_LIGHT / (2.0 * config.carrier_hz)


def _match_targets(
    estimates: Sequence[RadarTarget], true_ranges, true_velocities
) -> tuple[np.ndarray, np.ndarray]:
    """Associate estimated targets to truths minimizing total normalized error."""
    est_r = np.array([t.range_m for t in estimates])
    est_v = np.array([t.velocity_mps for t in estimates])
    cost = (est_r[:, None] - true_ranges[None, :]) ** 2 / np.abs(true_ranges)[None, :]
    cost = cost + (est_v[:, None] - true_velocities[None, :]) ** 2 / np.abs(
        true_velocities
    )[None, :]
    rows, cols = linear_sum_assignment(cost)
    order = np.argsort(cols)
    return est_r[rows[order]], est_v[rows[order]]


def _iterations_to_plateau(trace) -> float:
    if not trace:
        return math.nan
    final = trace[-1]
    j = len(trace) - 1
    while j > 0 and trace[j - 1] == final:
        j -= 1
    return float(j + 1)


def _rpe_trial(plan: ExperimentPlan, snr_index: int, trial_index: int):
    rng = _trial_rng(plan, snr_index, trial_index)
    n0 = plan.noise_power(plan.snr_points_db[snr_index])
    grid = plan.grid()
    cells = _draw_target_cells(plan, grid, rng)
    num_targets = cells.size
    gains = np.sqrt(plan.sigma_h2 / 2.0) * (
        rng.standard_normal(num_targets) + 1j * rng.standard_normal(num_targets)
    )
    cell_taps = grid.cell_delay_taps[cells]
    cell_fs = grid.cell_dopplers[cells]
    paths = tuple(
        ChannelPath(gain=complex(g), delay_tap=int(e), doppler=float(f))
        for g, e, f in zip(gains, cell_taps, cell_fs)
    )
    realization = ChannelRealization(config=plan.system, paths=paths)
    constellation = Constellation(es=plan.es)
    payload = plan.layout.payload_indices
    bits = rng.integers(0, 2, size=2 * payload.size)
    x = build_frame(plan.layout, constellation.map_bits(bits))
    gam = path_operator_matrices(
        plan.waveform, realization.delay_taps, realization.dopplers
    )
    n = plan.system.n
    noise = np.sqrt(n0 / 2.0) * (
        rng.standard_normal(n) + 1j * rng.standard_normal(n)
    )
    y = realization.gains @ (gam @ x) + noise
    dictionary = build_dictionary(plan.waveform, x, grid)
    if plan.rpe.observation == "pilot_block":
        e_obs, y_obs = restrict_to_pilot_block(dictionary, y, plan.layout)
    else:
        e_obs, y_obs = dictionary.matrix, y
    h_true = np.zeros(grid.num_cells, dtype=np.complex128)
    h_true[cells] = gains
    true_r = np.array([cell_range_m(plan.system, int(e)) for e in cell_taps])
    true_v = np.array([cell_velocity_mps(plan.system, float(f)) for f in cell_fs])
    results = {}
    for method in plan.methods:
        try:
            if method == "sbl":
                est = sbl_em(
                    y_obs,
                    e_obs,
                    rw=n0,
                    epsilon=plan.rpe.sbl_epsilon,
                    i_max=plan.rpe.sbl_i_max,
                    support_size=num_targets,
                )
            else:
                est = pda_em(
                    y_obs,
                    e_obs,
                    n0=n0,
                    num_targets=num_targets,
                    beta_h=plan.rpe.pda_beta,
                    i_max=plan.rpe.pda_i_max,
                )
            found = extract_targets(est, grid, plan.system, num_targets)
            est_r, est_v = _match_targets(found, true_r, true_v)
            support = tuple(sorted(int(c) for c in cells))
            results[method] = TrialMetrics(
                nmse=nmse(est.h_hat, h_true),
                rmse_range=normalized_rmse(est_r, true_r),
                rmse_velocity=normalized_rmse(est_v, true_v),
                iterations=_iterations_to_plateau(est.support_trace),
                support_exact=bool(est.support_trace)
                and est.support_trace[-1] == support,
            )
        except NumericalFailureError:
            results[method] = TrialMetrics(failed=True)
    return results


# ---------------------------------------------------------------------------
# Sweeps and aggregation
# ---------------------------------------------------------------------------


def summarize_point(
    plan: ExperimentPlan,
    method: str,
    snr_db: float,
    trials: dict[int, TrialMetrics],
    wall_time_seconds: float,
) -> MetricsRecord:
    """Collapse per-trial outcomes (in trial-index order) into one record."""
    ordered = [trials[t] for t in sorted(trials)]
    ok = [t for t in ordered if not t.failed]
    failures = len(ordered) - len(ok)
    total_bits = sum(t.bit_count for t in ok)
    record_ber = (
        float(sum(t.bit_errors for t in ok)) / total_bits if total_bits else None
    )
    nmse_vals = np.array([t.nmse for t in ok if not math.isnan(t.nmse)])
    rr = np.array([t.rmse_range for t in ok if not math.isnan(t.rmse_range)])
    rv = np.array([t.rmse_velocity for t in ok if not math.isnan(t.rmse_velocity)])
    iters = np.array([t.iterations for t in ok if not math.isnan(t.iterations)])
    return MetricsRecord(
        scenario=plan.scenario,
        waveform=plan.waveform.kind,
        method=method,
        snr_db=snr_db,
        trials=len(ordered),
        ber=record_ber,
        nmse=float(np.mean(nmse_vals)) if nmse_vals.size else None,
        rmse_range=float(np.mean(rr)) if rr.size else None,
        rmse_velocity=float(np.mean(rv)) if rv.size else None,
        mean_iterations=float(np.mean(iters)) if iters.size else None,
        failures=failures,
        seed=plan.base_seed,
        wall_time_seconds=wall_time_seconds,
    )


def run_point_trials(
    plan: ExperimentPlan, snr_index: int, trial_indices: Sequence[int]
) -> dict[str, dict[int, TrialMetrics]]:
    """Per-trial outcomes for one SNR point, keyed by method then trial index."""
    trial_fn = _jcde_trial if plan.scenario == "jcde" else _rpe_trial
    raw = _run_trials(plan, snr_index, trial_indices, trial_fn)
    return {
        method: {t: res[method] for t, res in raw.items()} for method in plan.methods
    }


def merge_point_trials(
    a: dict[str, dict[int, TrialMetrics]], b: dict[str, dict[int, TrialMetrics]]
) -> dict[str, dict[int, TrialMetrics]]:
    """Combine per-trial outcome maps with disjoint trial index sets."""
    merged = {}
    for method in a:
        overlap = set(a[method]) & set(b.get(method, {}))
        if overlap:
            raise ValueError(f"overlapping trial indices: {sorted(overlap)[:5]}")
        merged[method] = {**a[method], **b.get(method, {})}
    return merged


def _run_sweep(plan: ExperimentPlan, trial_indices) -> list[MetricsRecord]:
    indices = (
        range(plan.trials_per_point) if trial_indices is None else trial_indices
    )
    records = []
    for snr_index, snr_db in enumerate(plan.snr_points_db):
        start = time.perf_counter()
        by_method = run_point_trials(plan, snr_index, indices)
        elapsed = time.perf_counter() - start
        for method in plan.methods:
            records.append(
                summarize_point(plan, method, snr_db, by_method[method], elapsed)
            )
    return records


def run_jcde_sweep(
    plan: ExperimentPlan, trial_indices: Optional[Sequence[int]] = None
) -> list[MetricsRecord]:
    """SNR sweep of the joint estimator and requested baselines."""
    if plan.scenario != "jcde":
        raise ConfigurationError("plan scenario must be 'jcde'")
    return _run_sweep(plan, trial_indices)


def run_rpe_sweep(
    plan: ExperimentPlan, trial_indices: Optional[Sequence[int]] = None
) -> list[MetricsRecord]:
    """SNR sweep of the radar parameter estimators."""
    if plan.scenario != "rpe":
        raise ConfigurationError("plan scenario must be 'rpe'")
    return _run_sweep(plan, trial_indices)


def run_sweep(
    plan: ExperimentPlan, trial_indices: Optional[Sequence[int]] = None
) -> list[MetricsRecord]:
    if plan.scenario == "jcde":
        return run_jcde_sweep(plan, trial_indices)
    return run_rpe_sweep(plan, trial_indices)
