"""Resource allocation: grid search, AO with an SCA power step, water-filling
and SIR balancing.

The convexified max-min power subproblem is solved without an external
solver: bisection on the common rate target with an inner fixed-point
power update, projected onto the total-power budget.  The surrogate is
tight at the expansion point, so each accepted step never decreases the
true minimum rate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from iosisac.closedform import (
    LinkBudget,
    MultiVehicleContext,
    h_series,
    h_tilde,
    interference_matrix,
    nl_rates,
    rate_multi,
    rate_single,
    sensing_condition,
)


@dataclass
class SlotAllocation:
    """Per-slot decision variables; power vectors are indexed by vehicle."""

    eta: float
    beta_r: np.ndarray
    p_sc: np.ndarray
    p_c: np.ndarray

    def __post_init__(self):
        self.beta_r = np.atleast_1d(np.asarray(self.beta_r, dtype=float))
        self.p_sc = np.atleast_1d(np.asarray(self.p_sc, dtype=float))
        self.p_c = np.atleast_1d(np.asarray(self.p_c, dtype=float))

    def check(self, p_max: float, tol: float = 1e-9) -> None:
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta out of [0, 1]")
        if np.any(self.beta_r < -tol) or np.any(self.beta_r > 1.0 + tol):
            raise ValueError("beta_r out of [0, 1]")
        if np.any(self.p_sc < -tol) or np.any(self.p_c < -tol):
            raise ValueError("negative power")
        if self.p_sc.sum() > p_max + tol or self.p_c.sum() > p_max + tol:
            raise ValueError("power budget exceeded")


@dataclass
class SolverSettings:
    grid_step: float = 0.01
    sca_max_iter: int = 30
    ao_max_iter: int = 20
    rate_tol: float = 1e-4
    bisection_tol: float = 1e-6

    def __post_init__(self):
        for name in ("grid_step", "sca_max_iter", "ao_max_iter", "rate_tol", "bisection_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def grid(self) -> np.ndarray:
        n = int(round(1.0 / self.grid_step))
        return np.linspace(0.0, 1.0, n + 1)


DEFAULT_SETTINGS = SolverSettings()


def grid_search_single(budget: LinkBudget, phi_x: float, phi_y: float,
                       var_phi: float, var_phiy: float, a_phi: float, a_phiy: float,
                       settings: SolverSettings = DEFAULT_SETTINGS,
                       objective: str = "rate") -> tuple[float, float, float]:
    """Exhaustive (eta, beta_r) grid maximization of the single-vehicle rate.

    ``objective`` selects the full closed-form average rate or the
    simplified ``rate_hat`` surface.  First-maximum scanning order breaks
    ties toward smaller eta, then smaller beta_r.  Returns
    (eta, beta_r, rate).
    """
    grid = settings.grid()
    etas = grid[:, None]
    betas = grid[None, :]
    c0 = budget.c0()
    prod = etas * betas
    if objective == "rate":
        hp = h_series(phi_x, var_phi)
        hq = h_series(phi_y, var_phiy)
        r_sc = np.log2(1.0 + c0 * (1.0 - grid) * hp * hq)[None, :]
        vt_phi = np.where(prod > 0, var_phi * a_phi / (var_phi * prod + a_phi), var_phi)
        vt_phiy = np.where(prod > 0, var_phiy * a_phiy / (var_phiy * prod + a_phiy), var_phiy)
        r_c = np.log2(1.0 + c0 * h_series(phi_x, vt_phi.ravel()).reshape(vt_phi.shape)
                      * h_series(phi_y, vt_phiy.ravel()).reshape(vt_phiy.shape))
    elif objective == "rate_hat":
        a = budget.arrays
        c1 = (2.0 * budget.p_max * budget.beta_g * budget.beta_h * a.l_total * a.m_tx
              / (math.pi * math.sin(phi_x) * math.sin(phi_y)
                 * math.sqrt(var_phi * var_phiy) * budget.noise.noise_c))
        r_sc = np.log2(1.0 + c1 * (1.0 - grid))[None, :]
        gain = np.sqrt((var_phi * prod + a_phi) * (var_phiy * prod + a_phiy) / (a_phi * a_phiy))
        r_c = np.log2(1.0 + c1 * gain)
    else:
        raise ValueError(f"unknown objective: {objective}")
    r_avg = etas * r_sc + (1.0 - etas) * r_c
    flat = int(np.argmax(r_avg))
    i, j = divmod(flat, grid.size)
    return float(grid[i]), float(grid[j]), float(r_avg[i, j])


def optimize_single(budget: LinkBudget, phi_x: float, phi_y: float,
                    var_phi: float, var_phiy: float, a_phi: float, a_phiy: float,
                    settings: SolverSettings = DEFAULT_SETTINGS,
                    apply_gate: bool = True) -> tuple[SlotAllocation, float]:
    """Single-vehicle optimum over (eta, beta_r) with the sensing-gate shortcut.

    When the gate condition fails, sensing cannot pay off and the search
    is skipped entirely.
    """
    if apply_gate and not sensing_condition(var_phi, a_phi, var_phiy, a_phiy):
        rate = rate_single(budget, phi_x, phi_y, 0.0, 0.0, var_phi, var_phiy,
                           a_phi, a_phiy).r_avg
        alloc = SlotAllocation(eta=0.0, beta_r=np.zeros(1),
                               p_sc=np.array([budget.p_max]), p_c=np.array([budget.p_max]))
        return alloc, rate
    eta, beta_r, rate = grid_search_single(budget, phi_x, phi_y, var_phi, var_phiy,
                                           a_phi, a_phiy, settings)
    alloc = SlotAllocation(eta=eta, beta_r=np.array([beta_r]),
                           p_sc=np.array([budget.p_max]), p_c=np.array([budget.p_max]))
    return alloc, rate


def equal_sensing_powers(a_phi, p_max: float) -> np.ndarray:
    """Sensing powers proportional to the A coefficients (equal accuracy)."""
    a_phi = np.asarray(a_phi, dtype=float)
    if np.any(a_phi <= 0.0):
        raise ValueError("A coefficients must be positive")
    return p_max * a_phi / a_phi.sum()


def _stage_rates_sc(ctx: MultiVehicleContext, eta: float, beta_r, p_sc) -> np.ndarray:
    r_sc, _, _ = rate_multi(ctx, eta, beta_r, p_sc, np.full(ctx.n_vehicles, ctx.p_max / ctx.n_vehicles))
    return r_sc


def sca_power_step(ctx: MultiVehicleContext, eta: float, beta_r, p_sc, p_c,
                   settings: SolverSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """One SCA round of the communication-power block.

    Linearizes the interference log at the incumbent ``p_c``, then
    bisects the common rate target; each target is checked by a
    fixed-point update of the per-vehicle minimum powers.  Returns the
    incumbent when the slot has no communication-only stage or no
    improvement is found.
    """
    k_n = ctx.n_vehicles
    p_c = np.asarray(p_c, dtype=float).copy()
    if k_n == 1:
        return np.array([ctx.p_max])
    if eta >= 1.0 - 1e-12:
        return p_c

    beta_r = np.broadcast_to(np.asarray(beta_r, dtype=float), (k_n,))
    m_tx = ctx.arrays.m_tx
    r_sc, r_c, r_avg = rate_multi(ctx, eta, beta_r, p_sc, p_c)
    incumbent = float(np.min(r_avg))

    vt_phi, vt_phiy = ctx.tracking_variances(eta, beta_r, p_sc)
    hh = np.array([h_tilde(ctx.phi_x[k], vt_phi[k]) * h_tilde(ctx.phi_y[k], vt_phiy[k])
                   for k in range(k_n)])
    sigma = ctx.noise.noise_c / (ctx.beta_g * ctx.beta_h * ctx.arrays.l_total * hh)
    g = interference_matrix(ctx, vt_phi)

    x_ref = 4.0 * g @ p_c + sigma
    d_coef = 4.0 * g / (x_ref[:, None] * math.log(2.0))

    def feasible(target: float) -> np.ndarray | None:
        t_k = (target - eta * r_sc) / (1.0 - eta)
        p = np.zeros(k_n)
        for _ in range(400):
            rhs = t_k + np.log2(x_ref) + d_coef @ (p - p_c)
            need = (np.exp2(rhs) - 4.0 * g @ p - sigma) / (4.0 * m_tx)
            p_new = np.maximum(0.0, need)
            if p_new.sum() > ctx.p_max * (1.0 + 1e-9):
                return None
            if np.max(np.abs(p_new - p)) < 1e-14 * (1.0 + np.max(p_new)):
                return p_new
            p = p_new
        return None

    lo = incumbent
    hi = float(np.min(eta * r_sc + (1.0 - eta)
                      * np.log2(1.0 + 4.0 * ctx.p_max * m_tx / sigma)))
    if hi <= lo + settings.bisection_tol:
        return p_c
    best = p_c
    for _ in range(80):
        if hi - lo <= settings.bisection_tol:
            break
        mid = 0.5 * (lo + hi)
        sol = feasible(mid)
        if sol is not None:
            lo, best = mid, sol
        else:
            hi = mid
    _, _, r_new = rate_multi(ctx, eta, beta_r, p_sc, best)
    if float(np.min(r_new)) < incumbent:
        return p_c
    return best


def _grid_best_eta(ctx, beta_r, p_sc, p_c, grid) -> tuple[float, float]:
    best_eta, best_val = 0.0, -math.inf
    for eta in grid:
        _, _, r = rate_multi(ctx, float(eta), beta_r, p_sc, p_c)
        v = float(np.min(r))
        if v > best_val + 1e-12:
            best_eta, best_val = float(eta), v
    return best_eta, best_val


def _grid_best_beta(ctx, eta, p_sc, p_c, grid) -> tuple[float, float]:
    best_beta, best_val = 0.0, -math.inf
    for beta in grid:
        _, _, r = rate_multi(ctx, eta, float(beta), p_sc, p_c)
        v = float(np.min(r))
        if v > best_val + 1e-12:
            best_beta, best_val = float(beta), v
    return best_beta, best_val


def optimize_multi_ao(ctx: MultiVehicleContext,
                      settings: SolverSettings = DEFAULT_SETTINGS
                      ) -> tuple[SlotAllocation, list[float]]:
    """Alternating optimization of (p_c, eta, common beta_r).

    Sensing powers follow the equal-accuracy rule and stay fixed.  The
    minimum-rate trace is non-decreasing; iteration stops once the gain
    drops below ``rate_tol`` or after ``ao_max_iter`` rounds.
    """
    k_n = ctx.n_vehicles
    p_sc = equal_sensing_powers(ctx.a_phi, ctx.p_max)
    eta, beta = 0.2, 0.5
    p_c = np.full(k_n, ctx.p_max / k_n)
    grid = settings.grid()
    trace: list[float] = []
    _, _, r0 = rate_multi(ctx, eta, beta, p_sc, p_c)
    current = float(np.min(r0))
    for _ in range(settings.ao_max_iter):
        for _ in range(settings.sca_max_iter):
            p_new = sca_power_step(ctx, eta, beta, p_sc, p_c, settings)
            _, _, r = rate_multi(ctx, eta, beta, p_sc, p_new)
            gain = float(np.min(r)) - current
            p_c = p_new
            current = max(current, float(np.min(r)))
            if gain < settings.rate_tol:
                break
        eta, val = _grid_best_eta(ctx, beta, p_sc, p_c, grid)
        current = max(current, val)
        beta, val = _grid_best_beta(ctx, eta, p_sc, p_c, grid)
        current = max(current, val)
        trace.append(current)
        if len(trace) >= 2 and trace[-1] - trace[-2] < settings.rate_tol:
            break
    if eta == 0.0:
        beta = 0.0
    alloc = SlotAllocation(eta=eta, beta_r=np.full(k_n, beta), p_sc=p_sc, p_c=p_c)
    return alloc, trace


def waterfill(gains, p_max: float) -> np.ndarray:
    """Classic water-filling p_k = max(0, mu - 1/g_k) with sum p = p_max."""
    g = np.asarray(gains, dtype=float)
    if np.any(g <= 0.0):
        raise ValueError("channel gains must be positive")
    if p_max <= 0.0:
        raise ValueError("p_max must be positive")
    order = np.argsort(g)[::-1]
    inv = 1.0 / g[order]
    n = g.size
    active = n
    while active > 0:
        mu = (p_max + inv[:active].sum()) / active
        if mu > inv[active - 1]:
            break
        active -= 1
    p_sorted = np.zeros(n)
    p_sorted[:active] = mu - inv[:active]
    p = np.zeros(n)
    p[order] = p_sorted
    return p


def _equalize_rates_nl(ctx: MultiVehicleContext, eta: float, beta_r, p_sc,
                       settings: SolverSettings) -> np.ndarray:
    """Max-min communication powers without interference: rate equalization."""
    k_n = ctx.n_vehicles
    beta_r = np.broadcast_to(np.asarray(beta_r, dtype=float), (k_n,))
    r_sc, _, _ = rate_multi(ctx, eta, beta_r, p_sc, np.full(k_n, ctx.p_max / k_n),
                            include_interference=False)
    vt_phi, vt_phiy = ctx.tracking_variances(eta, beta_r, p_sc)
    sigma = _nl_noise(ctx, vt_phi, vt_phiy)
    gains = 4.0 * ctx.arrays.m_tx / sigma
    if eta >= 1.0 - 1e-12:
        return np.full(k_n, ctx.p_max / k_n)

    def power_for(target: float) -> np.ndarray:
        t_k = np.maximum(0.0, (target - eta * r_sc) / (1.0 - eta))
        return (np.exp2(t_k) - 1.0) / gains

    lo = 0.0
    hi = float(np.min(eta * r_sc + (1.0 - eta) * np.log2(1.0 + gains * ctx.p_max)))
    for _ in range(100):
        if hi - lo <= settings.bisection_tol:
            break
        mid = 0.5 * (lo + hi)
        if power_for(mid).sum() <= ctx.p_max:
            lo = mid
        else:
            hi = mid
    p = power_for(lo)
    slack = ctx.p_max - p.sum()
    if slack > 0:
        p = p + slack / k_n
    return p


def _nl_noise(ctx: MultiVehicleContext, vt_phi, vt_phiy) -> np.ndarray:
    hh = np.array([h_tilde(ctx.phi_x[k], vt_phi[k]) * h_tilde(ctx.phi_y[k], vt_phiy[k])
                   for k in range(ctx.n_vehicles)])
    return ctx.noise.noise_c / (ctx.beta_g * ctx.beta_h * ctx.arrays.l_total * hh)


def optimize_nl(ctx: MultiVehicleContext,
                settings: SolverSettings = DEFAULT_SETTINGS
                ) -> tuple[SlotAllocation, list[float]]:
    """Noise-limited two-branch solver.

    Water-filling first; if no vehicle passes the sensing gate at those
    powers the water-filled allocation with eta = beta_r = 0 is final,
    otherwise AO (eta/beta grids plus rate equalization) refines it using
    the interference-free rates.
    """
    k_n = ctx.n_vehicles
    vt0_phi = np.full(k_n, ctx.var_phi)
    vt0_phiy = np.full(k_n, ctx.var_phiy)
    sigma0 = _nl_noise(ctx, vt0_phi, vt0_phiy)
    gains = 4.0 * ctx.arrays.m_tx / sigma0
    p_wf = waterfill(gains, ctx.p_max)
    gate = [sensing_condition(ctx.var_phi, ctx.a_phi[k] / max(p_wf[k], 1e-300),
                              ctx.var_phiy, ctx.a_phiy[k] / max(p_wf[k], 1e-300))
            for k in range(k_n)]
    if not any(gate):
        alloc = SlotAllocation(eta=0.0, beta_r=np.zeros(k_n), p_sc=p_wf.copy(), p_c=p_wf)
        _, _, r = nl_rates(ctx_or_same := ctx, 0.0, np.zeros(k_n), p_wf, p_wf)
        return alloc, [float(np.min(r))]

    p_sc = equal_sensing_powers(ctx.a_phi, ctx.p_max)
    eta, beta = 0.2, 0.5
    p_c = p_wf.copy()
    grid = settings.grid()
    trace: list[float] = []
    current = -math.inf
    for _ in range(settings.ao_max_iter):
        p_c = _equalize_rates_nl(ctx, eta, beta, p_sc, settings)
        best_eta, best_val = 0.0, -math.inf
        for e in grid:
            _, _, r = rate_multi(ctx, float(e), beta, p_sc, p_c, include_interference=False)
            v = float(np.min(r))
            if v > best_val + 1e-12:
                best_eta, best_val = float(e), v
        eta = best_eta
        best_beta, best_val = 0.0, -math.inf
        for b in grid:
            _, _, r = rate_multi(ctx, eta, float(b), p_sc, p_c, include_interference=False)
            v = float(np.min(r))
            if v > best_val + 1e-12:
                best_beta, best_val = float(b), v
        beta = best_beta
        trace.append(best_val)
        if len(trace) >= 2 and trace[-1] - trace[-2] < settings.rate_tol:
            break
        current = best_val
    if eta == 0.0:
        beta = 0.0
    alloc = SlotAllocation(eta=eta, beta_r=np.full(k_n, beta), p_sc=p_sc, p_c=p_c)
    return alloc, trace


def equal_sir_powers(cross_gains, p_max: float, m_tx: int,
                     max_iter: int = 2000, tol: float = 1e-14
                     ) -> tuple[np.ndarray, float]:
    """SIR-balancing powers: the Perron eigenvector of the cross-gain matrix.

    Vehicles with no incoming interference are excluded from the
    equalization (their SIR is unbounded), flagged with a warning, and
    given a uniform share of the budget.
    """
    f = np.asarray(cross_gains, dtype=float)
    k_n = f.shape[0]
    if f.shape != (k_n, k_n):
        raise ValueError("cross-gain matrix must be square")
    if np.any(np.diL := np.diag(f) != 0.0):
        raise ValueError("cross-gain matrix must have a zero diagonal")
    row = f.sum(axis=1)
    coupled = row > 0.0
    if not np.all(coupled):
        warnings.warn("vehicles without interference excluded from SIR equalization")
    idx = np.where(coupled)[0]
    if idx.size < 2:
        raise ValueError("need at least two mutually interfering vehicles")
    sub = f[np.ix_(idx, idx)]
    v = np.full(idx.size, 1.0 / idx.size)
    lam = 0.0
    for _ in range(max_iter):
        w = sub @ v
        lam_new = float(np.linalg.norm(w))
        if lam_new == 0.0:
            raise ValueError("cross-gain matrix is reducible within the coupled set")
        w = w / lam_new
        if abs(lam_new - lam) < tol * max(1.0, lam_new):
            v = w
            lam = lam_new
            break
        v, lam = w, lam_new
    v = np.abs(v)
    p = np.zeros(k_n)
    share = p_max * (idx.size / k_n) if idx.size < k_n else p_max
    p[idx] = share * v / v.sum()
    if idx.size < k_n:
        p[~coupled] = (p_max - share) / (k_n - idx.size)
    sir = m_tx / lam
    return p, float(sir)


def il_maxmin_powers(cross_gains, noise_floor, p_max: float, m_tx: int,
                     settings: SolverSettings = DEFAULT_SETTINGS
                     ) -> tuple[np.ndarray, float]:
    """Max-min SINR powers for gains ``m_tx``/cross-gain matrix plus noise.

    Bisection on the common SINR target with the standard fixed-point
    power update; exact for this quasi-convex problem.  Returns the power
    vector and the achieved common SINR.
    """
    f = np.asarray(cross_gains, dtype=float)
    sigma = np.asarray(noise_floor, dtype=float)
    k_n = f.shape[0]

    def feasible(gamma: float) -> np.ndarray | None:
        p = np.zeros(k_n)
        for _ in range(4000):
            p_new = gamma * (f @ p + sigma) / m_tx
            if p_new.sum() > p_max * (1.0 + 1e-12):
                return None
            if np.max(np.abs(p_new - p)) < 1e-16 + 1e-12 * np.max(p_new):
                return p_new
            p = p_new
        return None

    lo, hi = 0.0, float(m_tx * p_max / np.min(sigma))
    best = np.full(k_n, p_max / k_n)
    for _ in range(200):
        if hi - lo <= settings.bisection_tol * max(1.0, lo):
            break
        mid = 0.5 * (lo + hi)
        sol = feasible(mid)
        if sol is not None:
            lo, best = mid, sol
        else:
            hi = mid
    return best, lo
