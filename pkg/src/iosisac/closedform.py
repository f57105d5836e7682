"""Closed-form SNR, rate and interference expressions.

All formulas are the large-surface asymptotics: the beamforming-gain
expectations collapse to the kernel-density series h(x, y) and the
cross-beam term I(x, y, z).  Everything here is in linear units; dB
conversion happens at I/O boundaries only.

Known print-level quirk carried over as published: the full series
I(x, y, z) carries a prefactor 2 while its two-term simplification
``interference_tilde`` does not, so the tilde form sits a factor ~2 below
the series (and below the Monte Carlo expectation) near the main lobe.
The tilde form is nevertheless what the multi-vehicle rate formulas use;
the series is exposed for validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from iosisac.geometry import ArrayConfig, clamp_angle
from iosisac.kinematics import NoiseModel, tracking_variance


@dataclass(frozen=True)
class SeriesParams:
    """Truncation control for the infinite sums in h and I."""

    max_index: int = 3
    term_tol: float = 1e-15

    def __post_init__(self):
        if self.max_index < 1:
            raise ValueError("max_index must be >= 1")
        if self.term_tol <= 0.0:
            raise ValueError("term_tol must be positive")


DEFAULT_SERIES = SeriesParams()


@dataclass(frozen=True)
class LinkBudget:
    """Scalar link budget of one RSU--IOS--device chain."""

    p_max: float
    beta_g: float
    beta_h: float
    arrays: ArrayConfig
    noise: NoiseModel

    def __post_init__(self):
        for name in ("p_max", "beta_g", "beta_h"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    def c0(self) -> float:
        """Communication SNR constant 4 P beta_G beta_h L M_t / sigma_c^2."""
        a = self.arrays
        return 4.0 * self.p_max * self.beta_g * self.beta_h * a.l_total * a.m_tx / self.noise.noise_c

    def c2(self) -> float:
        """Per-watt variant 4 beta_G beta_h L M_t / sigma_c^2 (noise-limited form)."""
        a = self.arrays
        return 4.0 * self.beta_g * self.beta_h * a.l_total * a.m_tx / self.noise.noise_c

    def echo_snr_coeff(self) -> float:
        """Echo SNR at eta = beta_r = 1 divided by h(phi) h(phi_y)."""
        a = self.arrays
        n = self.noise
        return (n.slot_time * self.p_max * self.beta_g**2 * a.l_total * a.m_tx * a.m_rx
                / (n.symbol_time * n.noise_s))

    def a_values(self, phi_x: float, phi_y: float, h_phi: float, h_phiy: float,
                 include_power: bool = True) -> tuple[float, float]:
        """Angle-variance coefficients A_phi, A_phiy.

        With ``include_power`` the single-vehicle form (P^max inside) is
        returned; without it the multi-vehicle form where the sensing
        power multiplies eta*beta_r instead.
        """
        gamma_unit = self.echo_snr_coeff() * h_phi * h_phiy
        if not include_power:
            gamma_unit /= self.p_max
        a_phi = self.noise.sigma_r2 / (gamma_unit * math.sin(phi_x) ** 2)
        a_phiy = self.noise.sigma_r2 / (gamma_unit * math.sin(phi_y) ** 2)
        return a_phi, a_phiy


class RateTriple(NamedTuple):
    r_sc: float
    r_c: float
    r_avg: float


def h_series(x: float, y, params: SeriesParams = DEFAULT_SERIES):
    """Kernel-density series h(x, y); vectorized over the variance y.

    h(x,y) = sum_i (2*pi*y*sin^2 x)^(-1/2) * (exp(-2(i pi)^2/y)
             + exp(-2((i+1) pi - x)^2 / y)).
    """
    x = clamp_angle(x)
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(y_arr <= 0.0):
        raise ValueError("variance must be positive")
    acc = np.zeros_like(y_arr)
    for i in range(-params.max_index, params.max_index + 1):
        t1 = np.exp(-2.0 * (i * math.pi) ** 2 / y_arr)
        t2 = np.exp(-2.0 * ((i + 1) * math.pi - x) ** 2 / y_arr)
        acc += t1 + t2
        if abs(i) >= 1 and float(np.max(t1 + t2)) < params.term_tol:
            if i > 0:
                break
    out = acc / np.sqrt(2.0 * math.pi * y_arr * math.sin(x) ** 2)
    if np.ndim(y) == 0:
        return float(out[0])
    return out


def h_tilde(x: float, y):
    """Two-term approximation of h, valid when the variance is well below 2*pi."""
    x = clamp_angle(x)
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(y_arr <= 0.0):
        raise ValueError("variance must be positive")
    out = (1.0 + np.exp(-2.0 * (math.pi - x) ** 2 / y_arr)) / np.sqrt(
        2.0 * math.pi * y_arr * math.sin(x) ** 2)
    if np.ndim(y) == 0:
        return float(out[0])
    return out


def echo_snr(budget: LinkBudget, eta: float, beta_r: float,
             h_phi: float, h_phiy: float) -> float:
    """Expected matched-filter echo SNR; linear in every budget factor.

    The per-axis factors ``h_phi``/``h_phiy`` are the caller's kernel
    collapses (use 1.0 for a single-element axis, where F_1 == 1 exactly).
    """
    if eta < 0.0 or beta_r < 0.0:
        raise ValueError("eta and beta_r must be nonnegative")
    return beta_r * eta * budget.echo_snr_coeff() * h_phi * h_phiy


def sensing_condition(var_phi: float, a_phi: float, var_phiy: float, a_phiy: float) -> bool:
    """Sensing gate: a positive S&C stage is optimal iff this holds."""
    return var_phiy / a_phiy + var_phi / a_phi > 2.0


def rate_single(budget: LinkBudget, phi_x: float, phi_y: float, eta: float,
                beta_r: float, var_phi: float, var_phiy: float,
                a_phi: float, a_phiy: float,
                params: SeriesParams = DEFAULT_SERIES) -> RateTriple:
    """Single-vehicle two-stage rates at predicted angles.

    r_sc uses the prediction variances; r_c uses the post-sensing
    tracking variances implied by eta*beta_r and the A coefficients.
    """
    c0 = budget.c0()
    hp = h_series(phi_x, var_phi, params)
    hq = h_series(phi_y, var_phiy, params)
    r_sc = math.log2(1.0 + c0 * (1.0 - beta_r) * hp * hq)
    vt_phi = tracking_variance(var_phi, a_phi, eta * beta_r)
    vt_phiy = tracking_variance(var_phiy, a_phiy, eta * beta_r)
    r_c = math.log2(1.0 + c0 * h_series(phi_x, vt_phi, params) * h_series(phi_y, vt_phiy, params))
    return RateTriple(r_sc, r_c, eta * r_sc + (1.0 - eta) * r_c)


def rate_hat(budget: LinkBudget, phi_x: float, phi_y: float, eta: float,
             beta_r: float, var_phi: float, var_phiy: float,
             a_phi: float, a_phiy: float) -> float:
    """Simplified average rate used by the sensing-gate analysis.

    hat R = eta log2(1 + C1 (1 - beta_r))
          + (1-eta) log2(1 + C1 sqrt((s2p x + Ap)(s2q x + Aq)/(Ap Aq)))
    with x = eta*beta_r.
    """
    phi_x = clamp_angle(phi_x)
    phi_y = clamp_angle(phi_y)
    a = budget.arrays
    c1 = (2.0 * budget.p_max * budget.beta_g * budget.beta_h * a.l_total * a.m_tx
          / (math.pi * math.sin(phi_x) * math.sin(phi_y)
             * math.sqrt(var_phi) * math.sqrt(var_phiy) * budget.noise.noise_c))
    x = eta * beta_r
    stage_sc = math.log2(1.0 + c1 * (1.0 - beta_r))
    gain = math.sqrt((var_phi * x + a_phi) * (var_phiy * x + a_phiy) / (a_phi * a_phiy))
    stage_c = math.log2(1.0 + c1 * gain)
    return eta * stage_sc + (1.0 - eta) * stage_c


def interference_term(x: float, y: float, z: float,
                      params: SeriesParams = DEFAULT_SERIES) -> float:
    """Cross-beam leakage series I(x, y, z) (large-M_t asymptotic).

    I(x,y,z) = 2 (2 pi z sin^2 x)^(-1/2) * sum_i (exp(-(2 i pi + x - y)^2 / 2z)
               + exp(-(2(i+1) pi - x - y)^2 / 2z)).
    """
    x = clamp_angle(x)
    if z <= 0.0:
        raise ValueError("variance must be positive")
    acc = 0.0
    for i in range(-params.max_index, params.max_index + 1):
        acc += math.exp(-((2 * i * math.pi + x - y) ** 2) / (2.0 * z))
        acc += math.exp(-((2 * (i + 1) * math.pi - x - y) ** 2) / (2.0 * z))
    return 2.0 * acc / math.sqrt(2.0 * math.pi * z * math.sin(x) ** 2)


def interference_tilde(x: float, y: float, z: float) -> float:
    """Two-term simplification of I as published (see module note on the factor 2)."""
    x = clamp_angle(x)
    if z <= 0.0:
        raise ValueError("variance must be positive")
    acc = math.exp(-((x - y) ** 2) / (2.0 * z)) + math.exp(
        -((2.0 * math.pi - x - y) ** 2) / (2.0 * z))
    return acc / math.sqrt(2.0 * math.pi * z * math.sin(x) ** 2)


@dataclass
class MultiVehicleContext:
    """Per-slot inputs of the multi-vehicle rate formulas.

    Arrays are indexed by vehicle.  ``a_phi``/``a_phiy`` are the
    power-free variance coefficients (``include_power=False``).
    """

    arrays: ArrayConfig
    noise: NoiseModel
    p_max: float
    beta_g: np.ndarray
    beta_h: np.ndarray
    phi_x: np.ndarray
    phi_y: np.ndarray
    a_phi: np.ndarray
    a_phiy: np.ndarray
    var_phi: float
    var_phiy: float

    def __post_init__(self):
        self.beta_g = np.asarray(self.beta_g, dtype=float)
        self.beta_h = np.asarray(self.beta_h, dtype=float)
        self.phi_x = np.asarray(self.phi_x, dtype=float)
        self.phi_y = np.asarray(self.phi_y, dtype=float)
        self.a_phi = np.asarray(self.a_phi, dtype=float)
        self.a_phiy = np.asarray(self.a_phiy, dtype=float)
        k = self.beta_g.size
        for name in ("beta_h", "phi_x", "phi_y", "a_phi", "a_phiy"):
            if getattr(self, name).size != k:
                raise ValueError(f"{name} must have one entry per vehicle")

    @property
    def n_vehicles(self) -> int:
        return self.beta_g.size

    def tracking_variances(self, eta: float, beta_r, p_sc) -> tuple[np.ndarray, np.ndarray]:
        beta_r = np.broadcast_to(np.asarray(beta_r, dtype=float), (self.n_vehicles,))
        p_sc = np.asarray(p_sc, dtype=float)
        vt_phi = np.array([tracking_variance(self.var_phi, self.a_phi[k],
                                             p_sc[k] * eta * beta_r[k])
                           for k in range(self.n_vehicles)])
        vt_phiy = np.array([tracking_variance(self.var_phiy, self.a_phiy[k],
                                              p_sc[k] * eta * beta_r[k])
                            for k in range(self.n_vehicles)])
        return vt_phi, vt_phiy


def _multi_noise_floor(ctx: MultiVehicleContext, vt_phi, vt_phiy) -> np.ndarray:
    """Equivalent noise sigma_k = sigma_c^2 / (bG bh L h~ h~) per vehicle."""
    k_range = range(ctx.n_vehicles)
    hh = np.array([h_tilde(ctx.phi_x[k], vt_phi[k]) * h_tilde(ctx.phi_y[k], vt_phiy[k])
                   for k in k_range])
    return ctx.noise.noise_c / (ctx.beta_g * ctx.beta_h * ctx.arrays.l_total * hh)


def interference_matrix(ctx: MultiVehicleContext, z_per_source) -> np.ndarray:
    """Zero-diagonal matrix G[k, j] = I~(phi_k, phi_j, z_j)."""
    k_n = ctx.n_vehicles
    z = np.broadcast_to(np.asarray(z_per_source, dtype=float), (k_n,))
    out = np.zeros((k_n, k_n))
    for k in range(k_n):
        for j in range(k_n):
            if j != k:
                out[k, j] = interference_tilde(ctx.phi_x[k], ctx.phi_x[j], z[j])
    return out


def rate_multi(ctx: MultiVehicleContext, eta: float, beta_r, p_sc, p_c,
               include_interference: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-vehicle two-stage rates (joint S&C, communication-only, average).

    Reduces to :func:`rate_single` for a one-vehicle context and to the
    noise-limited forms when ``include_interference`` is off.
    """
    k_n = ctx.n_vehicles
    beta_r = np.broadcast_to(np.asarray(beta_r, dtype=float), (k_n,)).copy()
    p_sc = np.asarray(p_sc, dtype=float)
    p_c = np.asarray(p_c, dtype=float)
    m_tx = ctx.arrays.m_tx

    sig_sc = _multi_noise_floor(ctx, np.full(k_n, ctx.var_phi), np.full(k_n, ctx.var_phiy))
    vt_phi, vt_phiy = ctx.tracking_variances(eta, beta_r, p_sc)
    sig_c = _multi_noise_floor(ctx, vt_phi, vt_phiy)

    if include_interference and k_n > 1:
        g_sc = interference_matrix(ctx, ctx.var_phi)
        g_c = interference_matrix(ctx, vt_phi)
        int_sc = g_sc @ p_sc
        int_c = g_c @ p_c
    else:
        int_sc = np.zeros(k_n)
        int_c = np.zeros(k_n)

    r_sc = np.log2(1.0 + 4.0 * (1.0 - beta_r) * p_sc * m_tx
                   / (4.0 * (1.0 - beta_r) * int_sc + sig_sc))
    r_c = np.log2(1.0 + 4.0 * p_c * m_tx / (4.0 * int_c + sig_c))
    return r_sc, r_c, eta * r_sc + (1.0 - eta) * r_c


def nl_rates(ctx: MultiVehicleContext, eta: float, beta_r, p_sc, p_c):
    """Noise-limited rates: the multi-vehicle forms with no cross terms."""
    return rate_multi(ctx, eta, beta_r, p_sc, p_c, include_interference=False)


def il_rates(p_sc, p_c, phi_pred, phi_meas, var_phi: float, m_tx: int,
             params: SeriesParams = DEFAULT_SERIES) -> tuple[np.ndarray, np.ndarray]:
    """Interference-limited SIR rates for both stages.

    The S&C stage uses the tilde leakage at the predicted angles; the
    communication-only stage uses the deterministic Fejer coupling at the
    measured angles.  Scale-invariant in the power vectors.
    """
    from iosisac.geometry import fejer_kernel

    p_sc = np.asarray(p_sc, dtype=float)
    p_c = np.asarray(p_c, dtype=float)
    phi_pred = np.asarray(phi_pred, dtype=float)
    phi_meas = np.asarray(phi_meas, dtype=float)
    k_n = p_sc.size
    if k_n < 2:
        raise ValueError("interference-limited rates need at least two vehicles")
    r_sc = np.zeros(k_n)
    r_c = np.zeros(k_n)
    for k in range(k_n):
        den_sc = sum(p_sc[j] * interference_tilde(phi_pred[j], phi_pred[k], var_phi)
                     for j in range(k_n) if j != k)
        den_c = sum(p_c[j] * fejer_kernel(m_tx, math.cos(phi_meas[k]) - math.cos(phi_meas[j]))
                    for j in range(k_n) if j != k)
        r_sc[k] = math.log2(1.0 + p_sc[k] * m_tx / den_sc) if den_sc > 0 else math.inf
        r_c[k] = math.log2(1.0 + p_c[k] * m_tx / den_c) if den_c > 0 else math.inf
    return r_sc, r_c


def il_upper_bound(phi_meas, m_tx: int) -> float:
    """Rate ceiling log2(1 + M_t / min_k sum_j F_{M_t}(cos k - cos j)).

    Infinite for a single vehicle (no interference to bound).
    """
    from iosisac.geometry import fejer_kernel

    phi_meas = np.asarray(phi_meas, dtype=float)
    k_n = phi_meas.size
    if k_n < 2:
        return math.inf
    sums = [sum(fejer_kernel(m_tx, math.cos(phi_meas[k]) - math.cos(phi_meas[j]))
                for j in range(k_n) if j != k)
            for k in range(k_n)]
    worst = min(sums)
    if worst <= 0.0:
        return math.inf
    return math.log2(1.0 + m_tx / worst)
