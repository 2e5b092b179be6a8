"""Joint channel and data estimation via bilinear Gaussian belief propagation.

The main estimator passes messages between per-observation symbol replicas
and per-observation channel-gain replicas (soft interference cancellation,
scalar-Gaussian belief combination, conditional-expectation denoising with
damping). Two baselines are provided: a genie-aided linear GaBP that is
granted the true value of one factor at a time, and a traditional pilot-only
estimator that never refines the channel from payload symbols.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .errors import ConfigurationError, NumericalFailureError
from .waveform import Constellation, FrameLayout, PathOperator

VAR_FLOOR = 1e-15


@njit(cache=True, inline="always")
def _tanh64(x):
    # tanh(x) rounds to +-1.0 in float64 once |x| >= 20, so skip libm there.
    if x > 20.0:
        return 1.0
    if x < -20.0:
        return -1.0
    return np.tanh(x)


@dataclass(frozen=True)
class JcdeConfig:
    """Solver knobs: damping, iteration cap, energies and noise level."""

    n0: float
    beta_x: float = 0.3
    beta_h: float = 0.3
    i_max: int = 40
    es: float = 1.0
    sigma_h2: float = 1.0
    num_paths: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.beta_x <= 1.0 or not 0.0 < self.beta_h <= 1.0:
            raise ConfigurationError(
                f"damping factors must lie in (0, 1], got {self.beta_x}, {self.beta_h}"
            )
        if self.i_max < 1:
            raise ConfigurationError(f"iteration cap must be >= 1, got {self.i_max}")
        if self.n0 < 0:
            raise ConfigurationError(f"noise power must be >= 0, got {self.n0}")
        if self.es <= 0 or self.sigma_h2 <= 0:
            raise ConfigurationError("symbol energy and path variance must be positive")


@dataclass
class JcdeState:
    """Per-edge replica means and variances after the last iteration."""

    x_mean: np.ndarray  # (n, n), entry [n, m] is symbol m's replica at observation n
    x_var: np.ndarray
    h_mean: np.ndarray  # (n, p)
    h_var: np.ndarray
    iteration: int


@dataclass
class JcdeOutput:
    """Hard payload decisions plus consensus channel estimates."""

    symbols: np.ndarray
    bits: np.ndarray
    gains: np.ndarray
    gain_variances: np.ndarray
    iterations: int
    nmse_trace: Optional[np.ndarray] = None
    ber_trace: Optional[np.ndarray] = None
    state: Optional[JcdeState] = None


def denoise_qpsk(belief_mean, belief_var, c_x: float):
    """Conditional-expectation QPSK denoiser.

    Returns the posterior mean ``c_x * (tanh(2*c_x*Re/var) + j*tanh(2*c_x*Im/var))``
    and its variance ``es - |mean|^2`` with ``es = 2*c_x**2``.
    """
    belief_mean = np.asarray(belief_mean)
    belief_var = np.asarray(belief_var, dtype=np.float64)
    if np.any(belief_var <= 0):
        raise ValueError("belief variance must be positive")
    scale = 2.0 * c_x / belief_var
    mean = c_x * (
        np.tanh(scale * belief_mean.real) + 1j * np.tanh(scale * belief_mean.imag)
    )
    var = 2.0 * c_x**2 - np.abs(mean) ** 2
    return mean, var


def denoise_channel_gaussian(belief_mean, belief_var, sigma_h2: float):
    """Gaussian-product denoiser for a zero-mean CN(0, sigma_h2) prior."""
    belief_mean = np.asarray(belief_mean)
    belief_var = np.asarray(belief_var, dtype=np.float64)
    if np.any(belief_var <= 0) or sigma_h2 <= 0:
        raise ValueError("variances must be positive")
    mean = sigma_h2 * belief_mean / (belief_var + sigma_h2)
    var = sigma_h2 * belief_var / (belief_var + sigma_h2)
    return mean, var


def damp(new: tuple, old: tuple, beta: float) -> tuple:
    """Convex combination ``beta*new + (1-beta)*old`` of (mean, variance) pairs."""
    if not 0.0 < beta <= 1.0:
        raise ConfigurationError(f"damping factor must lie in (0, 1], got {beta}")
    return tuple(beta * n + (1.0 - beta) * o for n, o in zip(new, old))


@njit(cache=True, fastmath={"contract", "reassoc", "nsz", "arcp"})
def _pbigabp_iteration(
    y,
    g_re,
    g_im,
    xh,
    vx,
    hh,
    vh,
    known,
    n0,
    sigma_h2,
    es,
    beta_x,
    beta_h,
    c_x,
    update_channel,
    update_data,
    yh,
    cc,
    num_h,
    den_h,
    num_x,
    den_x,
    cons_h_num,
    cons_h_den,
    cons_x_num,
    cons_x_den,
):
    # One full message-passing iteration over all (observation, symbol) and
    # (observation, path) edges; state arrays are updated in place. Operators
    # are split into real/imaginary planes of shape (n, p, m) so every sweep
    # over symbols is a contiguous fused-multiply loop. Returns 0 on success,
    # 1 if a non-finite value appeared.
    n_obs = xh.shape[0]
    n_path = hh.shape[1]
    floor = VAR_FLOOR
    ok = True

    xr = np.empty(n_obs, dtype=np.float64)
    xi = np.empty(n_obs, dtype=np.float64)
    vxx = np.empty(n_obs, dtype=np.float64)
    tr = np.empty(n_obs, dtype=np.float64)
    ti = np.empty(n_obs, dtype=np.float64)

    if update_channel:
        for n in range(n_obs):
            for m in range(n_obs):
                xr[m] = xh[n, m].real
                xi[m] = xh[n, m].imag
                vxx[m] = vx[n, m]
                tr[m] = 0.0
                ti[m] = 0.0
            # Per-path synthesized signal yh, symbol-variance weight cc, and
            # the combined-channel row tot, all from the previous replicas.
            for p in range(n_path):
                hr = hh[n, p].real
                hi = hh[n, p].imag
                yr = 0.0
                yi = 0.0
                c = 0.0
                for m in range(n_obs):
                    gr = g_re[n, p, m]
                    gi = g_im[n, p, m]
                    yr += gr * xr[m] - gi * xi[m]
                    yi += gr * xi[m] + gi * xr[m]
                    c += vxx[m] * (gr * gr + gi * gi)
                    tr[m] += hr * gr - hi * gi
                    ti[m] += hr * gi + hi * gr
                yh[n, p] = complex(yr, yi)
                cc[n, p] = c
            s0 = 0.0
            for m in range(n_obs):
                s0 += vxx[m] * (tr[m] * tr[m] + ti[m] * ti[m])
                tr[m] = vxx[m] * tr[m]
                ti[m] = -vxx[m] * ti[m]
            sa = 0.0
            svc = 0.0
            sy = 0.0 + 0.0j
            for p in range(n_path):
                ay2 = yh[n, p].real ** 2 + yh[n, p].imag ** 2
                sa += vh[n, p] * ay2
                svc += vh[n, p] * cc[n, p]
                sy += hh[n, p] * yh[n, p]
            for p in range(n_path):
                ur = 0.0
                ui = 0.0
                for m in range(n_obs):
                    gr = g_re[n, p, m]
                    gi = g_im[n, p, m]
                    ur += tr[m] * gr - ti[m] * gi
                    ui += tr[m] * gi + ti[m] * gr
                ay2 = yh[n, p].real ** 2 + yh[n, p].imag ** 2
                b = (
                    s0
                    - 2.0 * (hh[n, p].real * ur - hh[n, p].imag * ui)
                    + (hh[n, p].real ** 2 + hh[n, p].imag ** 2) * cc[n, p]
                )
                if b < 0.0:
                    b = 0.0
                sig = (
                    (sa - vh[n, p] * ay2)
                    + b
                    + n0
                    + (svc - vh[n, p] * cc[n, p])
                    + sigma_h2 * cc[n, p]
                )
                if sig < floor:
                    sig = floor
                inv = 1.0 / sig
                yt = y[n] - sy + hh[n, p] * yh[n, p]
                num_h[n, p] = np.conj(yh[n, p]) * yt * inv
                den_h[n, p] = ay2 * inv
        for p in range(n_path):
            cn = 0.0 + 0.0j
            cd = 0.0
            for n in range(n_obs):
                cn += num_h[n, p]
                cd += den_h[n, p]
            cons_h_num[p] = cn
            cons_h_den[p] = cd
            for n in range(n_obs):
                d = cd - den_h[n, p]
                if d < floor:
                    d = floor
                var_b = 1.0 / d
                mean_b = (cn - num_h[n, p]) * var_b
                hn = sigma_h2 * mean_b / (var_b + sigma_h2)
                vn = sigma_h2 * var_b / (var_b + sigma_h2)
                hd = beta_h * hn + (1.0 - beta_h) * hh[n, p]
                vd = beta_h * vn + (1.0 - beta_h) * vh[n, p]
                hh[n, p] = hd
                vh[n, p] = vd
                if not (
                    np.isfinite(hd.real)
                    and np.isfinite(hd.imag)
                    and np.isfinite(vd)
                ):
                    ok = False
    else:
        for n in range(n_obs):
            for m in range(n_obs):
                xr[m] = xh[n, m].real
                xi[m] = xh[n, m].imag
                vxx[m] = vx[n, m]
            for p in range(n_path):
                yr = 0.0
                yi = 0.0
                c = 0.0
                for m in range(n_obs):
                    gr = g_re[n, p, m]
                    gi = g_im[n, p, m]
                    yr += gr * xr[m] - gi * xi[m]
                    yi += gr * xi[m] + gi * xr[m]
                    c += vxx[m] * (gr * gr + gi * gi)
                yh[n, p] = complex(yr, yi)
                cc[n, p] = c

    if update_data:
        gxr = np.empty(n_obs, dtype=np.float64)
        gxi = np.empty(n_obs, dtype=np.float64)
        ttr = np.empty(n_obs, dtype=np.float64)
        tti = np.empty(n_obs, dtype=np.float64)
        ww = np.empty(n_obs, dtype=np.float64)
        for n in range(n_obs):
            v1 = 0.0
            xi_c = 0.0 + 0.0j
            svc = 0.0
            for p in range(n_path):
                ay2 = yh[n, p].real ** 2 + yh[n, p].imag ** 2
                v1 += vh[n, p] * ay2
                xi_c += hh[n, p] * yh[n, p]
                svc += vh[n, p] * cc[n, p]
            for m in range(n_obs):
                gxr[m] = 0.0
                gxi[m] = 0.0
                ttr[m] = 0.0
                tti[m] = 0.0
                ww[m] = 0.0
                vxx[m] = vx[n, m]
            for p in range(n_path):
                hr = hh[n, p].real
                hi = hh[n, p].imag
                vhp = vh[n, p]
                vyr = vhp * yh[n, p].real
                vyi = -vhp * yh[n, p].imag
                for m in range(n_obs):
                    gr = g_re[n, p, m]
                    gi = g_im[n, p, m]
                    gxr[m] += hr * gr - hi * gi
                    gxi[m] += hr * gi + hi * gr
                    ttr[m] += vyr * gr - vyi * gi
                    tti[m] += vyr * gi + vyi * gr
                    ww[m] += vhp * (gr * gr + gi * gi)
            rs = 0.0
            for m in range(n_obs):
                rs += vxx[m] * (gxr[m] * gxr[m] + gxi[m] * gxi[m])
            for m in range(n_obs):
                if known[m]:
                    continue
                g2 = gxr[m] * gxr[m] + gxi[m] * gxi[m]
                x = xh[n, m]
                ax2 = x.real**2 + x.imag**2
                t1 = (
                    v1
                    - 2.0 * (x.real * ttr[m] - x.imag * tti[m])
                    + ax2 * ww[m]
                )
                if t1 < 0.0:
                    t1 = 0.0
                sig = (
                    t1
                    + (rs - vxx[m] * g2)
                    + n0
                    + (svc - vxx[m] * ww[m])
                    + es * ww[m]
                )
                if sig < floor:
                    sig = floor
                inv = 1.0 / sig
                g = complex(gxr[m], gxi[m])
                yt = y[n] - xi_c + g * x
                num_x[n, m] = np.conj(g) * yt * inv
                den_x[n, m] = g2 * inv
        for m in range(n_obs):
            if known[m]:
                cons_x_num[m] = 0.0 + 0.0j
                cons_x_den[m] = 0.0
                continue
            cn = 0.0 + 0.0j
            cd = 0.0
            for n in range(n_obs):
                cn += num_x[n, m]
                cd += den_x[n, m]
            cons_x_num[m] = cn
            cons_x_den[m] = cd
            for n in range(n_obs):
                nm = cn - num_x[n, m]
                xn = c_x * (
                    _tanh64(2.0 * c_x * nm.real) + 1j * _tanh64(2.0 * c_x * nm.imag)
                )
                xd = beta_x * xn + (1.0 - beta_x) * xh[n, m]
                vv = es - (xd.real**2 + xd.imag**2)
                if vv < 0.0:
                    vv = 0.0
                vd = beta_x * vv + (1.0 - beta_x) * vx[n, m]
                xh[n, m] = xd
                vx[n, m] = vd
                if not (
                    np.isfinite(xd.real)
                    and np.isfinite(xd.imag)
                    and np.isfinite(vd)
                ):
                    ok = False

    return 0 if ok else 1


@njit(cache=True, fastmath={"contract", "reassoc", "nsz", "arcp"})
def _linear_data_iteration(
    y, g_mat, xh, vx, known, n0, es, beta_x, c_x, num_x, den_x, cons_num, cons_den
):
    # Symbol-detection iteration for y = G x + w with G treated as exact
    # (the channel-variance terms of the general update vanish identically).
    n_obs = xh.shape[0]
    floor = VAR_FLOOR
    ok = True
    for n in range(n_obs):
        xi = 0.0 + 0.0j
        rs = 0.0
        for m in range(n_obs):
            g = g_mat[n, m]
            xi += g * xh[n, m]
            rs += vx[n, m] * (g.real * g.real + g.imag * g.imag)
        for m in range(n_obs):
            if known[m]:
                continue
            g = g_mat[n, m]
            g2 = g.real * g.real + g.imag * g.imag
            sig = rs - vx[n, m] * g2 + n0
            if sig < floor:
                sig = floor
            inv = 1.0 / sig
            yt = y[n] - xi + g * xh[n, m]
            num_x[n, m] = np.conj(g) * yt * inv
            den_x[n, m] = g2 * inv
    for m in range(n_obs):
        if known[m]:
            cons_num[m] = 0.0 + 0.0j
            cons_den[m] = 0.0
            continue
        cn = 0.0 + 0.0j
        cd = 0.0
        for n in range(n_obs):
            cn += num_x[n, m]
            cd += den_x[n, m]
        cons_num[m] = cn
        cons_den[m] = cd
        for n in range(n_obs):
            nm = cn - num_x[n, m]
            xn = c_x * (
                _tanh64(2.0 * c_x * nm.real) + 1j * _tanh64(2.0 * c_x * nm.imag)
            )
            xd = beta_x * xn + (1.0 - beta_x) * xh[n, m]
            vv = es - (xd.real**2 + xd.imag**2)
            if vv < 0.0:
                vv = 0.0
            vx[n, m] = beta_x * vv + (1.0 - beta_x) * vx[n, m]
            xh[n, m] = xd
            if not (np.isfinite(xd.real) and np.isfinite(xd.imag)):
                ok = False
    return 0 if ok else 1


def _stack_operators(operators: Sequence[PathOperator]) -> np.ndarray:
    gam = np.stack([np.asarray(op.matrix, dtype=np.complex128) for op in operators])
    if gam.ndim != 3 or gam.shape[1] != gam.shape[2]:
        raise ValueError("path operators must be square matrices of equal size")
    return gam


def _consensus_gains(cons_num, cons_den, sigma_h2):
    den = np.maximum(cons_den, VAR_FLOOR)
    belief = cons_num / den
    var = 1.0 / den
    return denoise_channel_gaussian(belief, var, sigma_h2)


class _Engine:
    """Shared state and iteration driver for the kernel-based estimators."""

    def __init__(
        self,
        y: np.ndarray,
        gam: np.ndarray,
        layout: FrameLayout,
        cfg: JcdeConfig,
    ):
        n_path, n, _ = gam.shape
        if y.shape != (n,):
            raise ValueError(f"expected receive vector of shape ({n},), got {y.shape}")
        if cfg.num_paths is not None and cfg.num_paths != n_path:
            raise ConfigurationError(
                f"config expects {cfg.num_paths} operators, got {n_path}"
            )
        self.cfg = cfg
        self.y = np.ascontiguousarray(y, dtype=np.complex128)
        # Planar (n, p, m) layout keeps the innermost kernel sweeps contiguous.
        gam_t = gam.transpose(1, 0, 2)
        self.g_re = np.ascontiguousarray(gam_t.real)
        self.g_im = np.ascontiguousarray(gam_t.imag)
        self.known = np.zeros(n, dtype=np.bool_)
        known_idx, known_vals = layout.known_symbols()
        self.known[known_idx] = True
        self.payload = layout.payload_indices

        self.xh = np.zeros((n, n), dtype=np.complex128)
        self.vx = np.full((n, n), cfg.es, dtype=np.float64)
        self.xh[:, known_idx] = known_vals[None, :]
        self.vx[:, known_idx] = 0.0
        self.hh = np.zeros((n, n_path), dtype=np.complex128)
        self.vh = np.full((n, n_path), cfg.sigma_h2, dtype=np.float64)

        self.yh = np.empty((n, n_path), dtype=np.complex128)
        self.cc = np.empty((n, n_path), dtype=np.float64)
        self.num_h = np.empty((n, n_path), dtype=np.complex128)
        self.den_h = np.empty((n, n_path), dtype=np.float64)
        self.num_x = np.empty((n, n), dtype=np.complex128)
        self.den_x = np.empty((n, n), dtype=np.float64)
        self.cons_h_num = np.zeros(n_path, dtype=np.complex128)
        self.cons_h_den = np.zeros(n_path, dtype=np.float64)
        self.cons_x_num = np.zeros(n, dtype=np.complex128)
        self.cons_x_den = np.zeros(n, dtype=np.float64)

    def iterate(self, iteration: int, update_channel: bool, update_data: bool):
        status = _pbigabp_iteration(
            self.y,
            self.g_re,
            self.g_im,
            self.xh,
            self.vx,
            self.hh,
            self.vh,
            self.known,
            self.cfg.n0,
            self.cfg.sigma_h2,
            self.cfg.es,
            self.cfg.beta_x,
            self.cfg.beta_h,
            np.sqrt(self.cfg.es / 2.0),
            update_channel,
            update_data,
            self.yh,
            self.cc,
            self.num_h,
            self.den_h,
            self.num_x,
            self.den_x,
            self.cons_h_num,
            self.cons_h_den,
            self.cons_x_num,
            self.cons_x_den,
        )
        if status:
            raise NumericalFailureError("non-finite belief", iteration=iteration)

    def consensus_gains(self):
        return _consensus_gains(self.cons_h_num, self.cons_h_den, self.cfg.sigma_h2)

    def payload_decisions(self, constellation: Constellation):
        raw = self.cons_x_num[self.payload]
        symbols = constellation.hard_decision(raw)
        return symbols, constellation.hard_bits(symbols)

    def state(self, iteration: int) -> JcdeState:
        return JcdeState(
            x_mean=self.xh,
            x_var=self.vx,
            h_mean=self.hh,
            h_var=self.vh,
            iteration=iteration,
        )


def run_pbigabp(
    y: np.ndarray,
    operators: Sequence[PathOperator],
    layout: FrameLayout,
    cfg: JcdeConfig,
    true_gains: Optional[np.ndarray] = None,
    true_bits: Optional[np.ndarray] = None,
    keep_state: bool = False,
    update_channel: bool = True,
    update_data: bool = True,
) -> JcdeOutput:
    """Joint channel and data estimation on one received frame.

    Each iteration refreshes the channel-gain replicas (soft interference
    cancellation, belief combination, Gaussian denoising, damping) and then
    the symbol replicas (same steps with the QPSK denoiser). Pilot and
    null-guard entries stay clamped to their known values throughout. Final
    decisions and gain estimates come from beliefs combined over all
    observations. Per-iteration NMSE/BER traces are recorded when the
    corresponding ground truth is passed in.
    """
    gam = _stack_operators(operators)
    eng = _Engine(np.asarray(y), gam, layout, cfg)
    constellation = Constellation(es=cfg.es)
    nmse_trace = [] if true_gains is not None else None
    ber_trace = [] if true_bits is not None else None
    for it in range(1, cfg.i_max + 1):
        eng.iterate(it, update_channel, update_data)
        if nmse_trace is not None:
            gains, _ = eng.consensus_gains()
            err = np.sum(np.abs(gains - true_gains) ** 2)
            nmse_trace.append(err / np.sum(np.abs(true_gains) ** 2))
        if ber_trace is not None:
            _, bits = eng.payload_decisions(constellation)
            ber_trace.append(np.mean(bits != true_bits) if bits.size else 0.0)
    gains, gain_var = eng.consensus_gains()
    symbols, bits = eng.payload_decisions(constellation)
    return JcdeOutput(
        symbols=symbols,
        bits=bits,
        gains=gains,
        gain_variances=gain_var,
        iterations=cfg.i_max,
        nmse_trace=np.asarray(nmse_trace) if nmse_trace is not None else None,
        ber_trace=np.asarray(ber_trace) if ber_trace is not None else None,
        state=eng.state(cfg.i_max) if keep_state else None,
    )


@njit(cache=True, fastmath={"contract", "reassoc", "nsz", "arcp"})
def _linear_channel_iteration(
    y, a_cols, hh, vh, n0, sigma_h2, beta_h, num_h, den_h, cons_num, cons_den
):
    # Gain-estimation iteration for y = A h + w with the frame fully known
    # (the symbol-variance terms of the general update vanish identically).
    n_obs, n_path = a_cols.shape
    floor = VAR_FLOOR
    ok = True
    for n in range(n_obs):
        sa = 0.0
        sy = 0.0 + 0.0j
        for p in range(n_path):
            a = a_cols[n, p]
            sa += vh[n, p] * (a.real * a.real + a.imag * a.imag)
            sy += hh[n, p] * a
        for p in range(n_path):
            a = a_cols[n, p]
            a2 = a.real * a.real + a.imag * a.imag
            sig = sa - vh[n, p] * a2 + n0
            if sig < floor:
                sig = floor
            inv = 1.0 / sig
            yt = y[n] - sy + hh[n, p] * a
            num_h[n, p] = np.conj(a) * yt * inv
            den_h[n, p] = a2 * inv
    for p in range(n_path):
        cn = 0.0 + 0.0j
        cd = 0.0
        for n in range(n_obs):
            cn += num_h[n, p]
            cd += den_h[n, p]
        cons_num[p] = cn
        cons_den[p] = cd
        for n in range(n_obs):
            d = cd - den_h[n, p]
            if d < floor:
                d = floor
            var_b = 1.0 / d
            mean_b = (cn - num_h[n, p]) * var_b
            hn = sigma_h2 * mean_b / (var_b + sigma_h2)
            vn = sigma_h2 * var_b / (var_b + sigma_h2)
            hh[n, p] = beta_h * hn + (1.0 - beta_h) * hh[n, p]
            vh[n, p] = beta_h * vn + (1.0 - beta_h) * vh[n, p]
            if not (
                np.isfinite(hh[n, p].real)
                and np.isfinite(hh[n, p].imag)
                and np.isfinite(vh[n, p])
            ):
                ok = False
    return 0 if ok else 1


def _linear_channel_gabp(
    y: np.ndarray,
    a_cols: np.ndarray,
    cfg: JcdeConfig,
    h_init: np.ndarray,
    v_init: np.ndarray,
):
    """Linear GaBP gain estimation for y = A h + w with A fully known."""
    n, n_path = a_cols.shape
    a_cols = np.ascontiguousarray(a_cols, dtype=np.complex128)
    hh = np.tile(h_init, (n, 1)).astype(np.complex128)
    vh = np.tile(v_init, (n, 1)).astype(np.float64)
    num_h = np.empty((n, n_path), dtype=np.complex128)
    den_h = np.empty((n, n_path), dtype=np.float64)
    cn = np.zeros(n_path, dtype=np.complex128)
    cd = np.zeros(n_path, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.complex128)
    for it in range(1, cfg.i_max + 1):
        status = _linear_channel_iteration(
            y, a_cols, hh, vh, cfg.n0, cfg.sigma_h2, cfg.beta_h, num_h, den_h, cn, cd
        )
        if status:
            raise NumericalFailureError("non-finite belief", iteration=it)
    return _consensus_gains(cn, cd, cfg.sigma_h2)


def _linear_data_gabp(
    y: np.ndarray,
    g_mat: np.ndarray,
    layout: FrameLayout,
    cfg: JcdeConfig,
):
    """Linear GaBP symbol detection for y = G x + w with G treated as exact."""
    n = g_mat.shape[0]
    constellation = Constellation(es=cfg.es)
    known_idx, known_vals = layout.known_symbols()
    known = np.zeros(n, dtype=np.bool_)
    known[known_idx] = True
    xh = np.zeros((n, n), dtype=np.complex128)
    xh[:, known_idx] = known_vals[None, :]
    vx = np.full((n, n), cfg.es, dtype=np.float64)
    vx[:, known_idx] = 0.0
    g_mat = np.ascontiguousarray(g_mat, dtype=np.complex128)
    num_x = np.empty((n, n), dtype=np.complex128)
    den_x = np.empty((n, n), dtype=np.float64)
    cons_num = np.zeros(n, dtype=np.complex128)
    cons_den = np.zeros(n, dtype=np.float64)
    for it in range(1, cfg.i_max + 1):
        status = _linear_data_iteration(
            np.ascontiguousarray(y, dtype=np.complex128),
            g_mat,
            xh,
            vx,
            known,
            cfg.n0,
            cfg.es,
            cfg.beta_x,
            constellation.c_x,
            num_x,
            den_x,
            cons_num,
            cons_den,
        )
        if status:
            raise NumericalFailureError("non-finite belief", iteration=it)
    payload = layout.payload_indices
    symbols = constellation.hard_decision(cons_num[payload])
    return symbols, constellation.hard_bits(symbols)


def genie_linear_gabp(
    y: np.ndarray,
    operators: Sequence[PathOperator],
    true_gains: np.ndarray,
    layout: FrameLayout,
    cfg: JcdeConfig,
    true_frame: np.ndarray,
) -> JcdeOutput:
    """Idealized baseline: each factor is estimated with the other one known.

    Channel gains are estimated by linear GaBP over the fully known frame
    (LMMSE-initialized); symbols are detected by linear GaBP under perfect
    channel knowledge. The result lower-bounds the joint estimator.
    """
    gam = _stack_operators(operators)
    true_gains = np.asarray(true_gains, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    # Gain estimation with the whole frame known: y = A h + w.
    a_cols = (gam @ true_frame).T
    n_path = a_cols.shape[1]
    n0 = max(cfg.n0, VAR_FLOOR)
    gram = a_cols.conj().T @ a_cols
    post_cov = np.linalg.inv(gram / n0 + np.eye(n_path) / cfg.sigma_h2)
    h0 = post_cov @ (a_cols.conj().T @ y) / n0
    v0 = np.maximum(np.real(np.diag(post_cov)), VAR_FLOOR)
    gains, gain_var = _linear_channel_gabp(y, a_cols, cfg, h0, v0)
    # Symbol detection with the channel known exactly.
    g_true = np.tensordot(true_gains, gam, axes=(0, 0))
    symbols, bits = _linear_data_gabp(y, g_true, layout, cfg)
    return JcdeOutput(
        symbols=symbols,
        bits=bits,
        gains=gains,
        gain_variances=gain_var,
        iterations=cfg.i_max,
    )


def pilot_only_estimate(
    y: np.ndarray,
    operators: Sequence[PathOperator],
    layout: FrameLayout,
    cfg: JcdeConfig,
) -> JcdeOutput:
    """Traditional baseline: gains from pilots alone, then data detection.

    The channel stage runs the message-passing channel half with payload
    symbols left at their zero-mean prior (they are never refined), so only
    pilot contributions carry information. Data detection then runs with the
    resulting gain estimates held fixed.
    """
    if layout.pilot_indices.size == 0:
        raise ConfigurationError("pilot-only estimation needs a nonempty pilot set")
    gam = _stack_operators(operators)
    eng = _Engine(np.asarray(y), gam, layout, cfg)
    for it in range(1, cfg.i_max + 1):
        eng.iterate(it, update_channel=True, update_data=False)
    gains, gain_var = eng.consensus_gains()
    g_hat = np.tensordot(gains, gam, axes=(0, 0))
    symbols, bits = _linear_data_gabp(np.asarray(y), g_hat, layout, cfg)
    return JcdeOutput(
        symbols=symbols,
        bits=bits,
        gains=gains,
        gain_variances=gain_var,
        iterations=cfg.i_max,
    )
