"""Array geometry, steering vectors, Fejer kernels and IOS phase profiles.

Conventions: uniform half-wavelength spacing everywhere, so element phase
factors are multiples of pi times the relevant direction cosine and no
explicit wavelength appears.  The angle relative to the x-axis ULA is
``phi_x`` and the angle relative to the y-axis ULA is ``phi_y``; both live
in (0, pi) and are clamped away from the endpoints before any 1/sin^2
expression is evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

ANGLE_CLAMP = 1e-3


class ConfigurationError(ValueError):
    """Raised for inconsistent array or scenario parameters."""


def clamp_angle(x: float) -> float:
    """Clamp an angle into [ANGLE_CLAMP, pi - ANGLE_CLAMP]."""
    return min(max(float(x), ANGLE_CLAMP), math.pi - ANGLE_CLAMP)


@dataclass(frozen=True)
class ArrayConfig:
    """RSU ULA sizes and IOS UPA dimensions (half-wavelength spacing)."""

    m_tx: int = 8
    m_rx: int = 8
    l_x: int = 80
    l_y: int = 80

    def __post_init__(self):
        for name in ("m_tx", "m_rx", "l_x", "l_y"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")

    @property
    def l_total(self) -> int:
        return self.l_x * self.l_y


@dataclass(frozen=True)
class LinkGeometry:
    """Geometry of one RSU--IOS--device link.

    Angles are derived from 3-D positions in meters: ``phi_x``/``phi_y``
    are the angles seen by the x-/y-axis ULAs, ``dist`` the RSU-IOS range,
    and ``psi_ux``/``psi_uz`` the azimuth/elevation of the in-vehicle
    device as seen from the IOS.
    """

    phi_x: float
    phi_y: float
    dist: float
    psi_ux: float
    psi_uz: float
    device_dist: float

    @classmethod
    def from_positions(cls, rsu_position, vehicle_position, device_offset=(0.0, 0.0, -1.5)):
        rsu = np.asarray(rsu_position, dtype=float)
        veh = np.asarray(vehicle_position, dtype=float)
        off = np.asarray(device_offset, dtype=float)
        u = veh - rsu
        dist = float(np.linalg.norm(u))
        if dist <= 0.0:
            raise ConfigurationError("vehicle coincides with the RSU")
        u = u / dist
        # cos(phi_x) = sin(psi_z) cos(psi_x), cos(phi_y) = sin(psi_z) sin(psi_x)
        phi_x = clamp_angle(math.acos(np.clip(u[0], -1.0, 1.0)))
        phi_y = clamp_angle(math.acos(np.clip(u[1], -1.0, 1.0)))
        d_dev = float(np.linalg.norm(off))
        if d_dev <= 0.0:
            raise ConfigurationError("device offset must be nonzero")
        ud = off / d_dev
        psi_uz = math.acos(np.clip(ud[2], -1.0, 1.0))
        psi_ux = math.atan2(ud[1], ud[0])
        return cls(phi_x=phi_x, phi_y=phi_y, dist=dist,
                   psi_ux=psi_ux, psi_uz=psi_uz, device_dist=d_dev)


@dataclass(frozen=True)
class PhaseProfile:
    """Linear-gradient IOS phase profile for one mode (reflect or refract).

    Element (lx, ly) carries phase ``pi*(lx-1)*gradient_x +
    pi*(ly-1)*gradient_y + reference_phase`` (mod 2*pi) and a uniform
    amplitude ``sqrt(splitting_ratio)``.  ``phases`` overrides the linear
    form with explicit per-element values (used for quantized or random
    profiles); it is stored flat in the Kronecker order of the steering
    vector, index (lx-1)*L_y + (ly-1).
    """

    mode: str
    gradient_x: float
    gradient_y: float
    reference_phase: float = 0.0
    splitting_ratio: float = 1.0
    phases: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in ("reflect", "refract"):
            raise ConfigurationError("mode must be 'reflect' or 'refract'")
        if not 0.0 <= self.splitting_ratio <= 1.0:
            raise ConfigurationError("splitting_ratio must be in [0, 1]")

    def phase_vector(self, arrays: ArrayConfig) -> np.ndarray:
        """Per-element phases in [0, 2*pi), flat Kronecker order."""
        if self.phases is not None:
            if self.phases.size != arrays.l_total:
                raise ConfigurationError("explicit phases do not match the array size")
            return np.mod(self.phases, 2.0 * np.pi)
        lx = np.arange(arrays.l_x)[:, None]
        ly = np.arange(arrays.l_y)[None, :]
        theta = (np.pi * lx * self.gradient_x + np.pi * ly * self.gradient_y
                 + self.reference_phase)
        return np.mod(theta.ravel(), 2.0 * np.pi)


def fejer_kernel(m: int, x) -> np.ndarray | float:
    """Fejer kernel F_m(x) = (1/m) (sin(m*pi*x/2) / sin(pi*x/2))^2.

    2-periodic, even, with 0 <= F_m <= m and removable singularities at
    even integers where the limit value is m.
    """
    if m < 1:
        raise ConfigurationError("m must be >= 1")
    scalar = np.ndim(x) == 0
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    s = np.sin(np.pi * x_arr / 2.0)
    num = np.sin(m * np.pi * x_arr / 2.0)
    regular = np.abs(s) >= 1e-9
    ratio = np.divide(num, s, out=np.zeros_like(num), where=regular)
    out = np.where(regular, ratio * ratio / m, float(m))
    if scalar:
        return float(out[0])
    return out


def pathloss(beta0: float, d: float) -> float:
    """Free-space channel power gain beta0 * d^-2 at range d meters."""
    if d <= 0.0:
        raise ValueError("distance must be positive")
    if beta0 <= 0.0:
        raise ValueError("beta0 must be positive")
    return beta0 / (d * d)


def steering_vector(kind: str, arrays: ArrayConfig, phi_x: float | None = None,
                    phi_y: float | None = None) -> np.ndarray:
    """Unit-modulus steering vector for the RSU ULAs or the IOS UPA.

    ``rsu_tx`` and ``rsu_rx`` use exponent -j*pi*m*cos(angle).  ``ios``
    is the Kronecker product of the x-factor with exponent
    +j*pi*(lx-1)*cos(phi_x) and the y-factor with exponent
    -j*pi*(ly-1)*cos(phi_y), exactly the printed sign convention.
    """
    if kind == "rsu_tx":
        if phi_x is None:
            raise ConfigurationError("rsu_tx needs phi_x")
        m = np.arange(arrays.m_tx)
        return np.exp(-1j * np.pi * m * math.cos(phi_x))
    if kind == "rsu_rx":
        angle = phi_x if phi_x is not None else phi_y
        if angle is None:
            raise ConfigurationError("rsu_rx needs an angle")
        m = np.arange(arrays.m_rx)
        return np.exp(-1j * np.pi * m * math.cos(angle))
    if kind == "ios":
        if phi_x is None or phi_y is None:
            raise ConfigurationError("ios needs both phi_x and phi_y")
        ax = np.exp(1j * np.pi * np.arange(arrays.l_x) * math.cos(phi_x))
        ay = np.exp(-1j * np.pi * np.arange(arrays.l_y) * math.cos(phi_y))
        return np.kron(ax, ay)
    raise ConfigurationError(f"unknown steering vector kind: {kind}")


def optimal_phase_profiles(phi_x_pred: float, phi_y_pred: float, psi_ux: float,
                           psi_uz: float, beta_r: float,
                           reference_phase: float = 0.0) -> tuple[PhaseProfile, PhaseProfile]:
    """Gain-maximizing reflect/refract profiles at the predicted angles.

    Reflect gradients are (-2cos(phi_x), +2cos(phi_y)); refract gradients
    point the passed beam at the device direction (psi_ux, psi_uz).  The
    two profiles share the element-wise power split beta_r / (1 - beta_r).
    """
    cx = math.cos(phi_x_pred)
    cy = math.cos(phi_y_pred)
    du_x = math.sin(psi_uz) * math.cos(psi_ux)
    du_y = math.sin(psi_uz) * math.sin(psi_ux)
    reflect = PhaseProfile(mode="reflect", gradient_x=-2.0 * cx, gradient_y=2.0 * cy,
                           reference_phase=reference_phase, splitting_ratio=beta_r)
    refract = PhaseProfile(mode="refract", gradient_x=-cx + du_x, gradient_y=cy + du_y,
                           reference_phase=reference_phase, splitting_ratio=1.0 - beta_r)
    return reflect, refract


def quantize_phases(profile: PhaseProfile, arrays: ArrayConfig, bits: int) -> PhaseProfile:
    """Map each element phase to the nearest b-bit codeword.

    Codebook {0, 2pi/2^b, ..., 2pi(2^b-1)/2^b}; distances are taken on
    the principal range [0, 2pi) without circular wrap-around, matching
    the printed quantizer, and ties break toward the smaller codeword.
    Splitting ratios are unchanged.
    """
    if bits < 1:
        raise ConfigurationError("bits must be >= 1")
    theta = profile.phase_vector(arrays)
    step = 2.0 * np.pi / (1 << bits)
    codebook = step * np.arange(1 << bits)
    dist = np.abs(theta[:, None] - codebook[None, :])
    quantized = codebook[np.argmin(dist, axis=1)]  # argmin takes the first (smaller) on ties
    return replace(profile, phases=quantized)


def exact_reflect_gain(arrays: ArrayConfig, profile: PhaseProfile,
                       phi_x_true: float, phi_y_true: float) -> float:
    """|a_IOS^T Theta a_IOS|^2 by direct summation (any profile)."""
    a = steering_vector("ios", arrays, phi_x=phi_x_true, phi_y=phi_y_true)
    theta = profile.phase_vector(arrays)
    amp = math.sqrt(profile.splitting_ratio)
    return float(np.abs(np.sum(a * a * amp * np.exp(1j * theta))) ** 2)


def exact_refract_gain(arrays: ArrayConfig, profile: PhaseProfile,
                       phi_x_true: float, phi_y_true: float,
                       psi_ux: float, psi_uz: float) -> float:
    """|h_dir^T Theta a_IOS|^2 with a unit-gain LoS device channel."""
    a = steering_vector("ios", arrays, phi_x=phi_x_true, phi_y=phi_y_true)
    du_x = math.sin(psi_uz) * math.cos(psi_ux)
    du_y = math.sin(psi_uz) * math.sin(psi_ux)
    hx = np.exp(-1j * np.pi * np.arange(arrays.l_x) * du_x)
    hy = np.exp(-1j * np.pi * np.arange(arrays.l_y) * du_y)
    h = np.kron(hx, hy)
    theta = profile.phase_vector(arrays)
    amp = math.sqrt(profile.splitting_ratio)
    return float(np.abs(np.sum(h * a * amp * np.exp(1j * theta))) ** 2)


def exact_gains(arrays: ArrayConfig, profile: PhaseProfile, p_tx: float,
                phi_x_true: float, phi_y_true: float,
                phi_x_beam: float) -> tuple[float, float, float]:
    """Sample-path (tx_gain, ios_gain, rx_gain) for one echo realization.

    tx_gain = p_tx * F_{M_t}(dcos), rx_gain = F_{M_r}(dcos) for beam and
    filter steered at ``phi_x_beam``; ios_gain is the exact quadratic-form
    reflect gain of ``profile`` at the true angles.
    """
    dcos = math.cos(phi_x_beam) - math.cos(phi_x_true)
    tx_gain = p_tx * fejer_kernel(arrays.m_tx, dcos)
    rx_gain = fejer_kernel(arrays.m_rx, dcos)
    ios_gain = exact_reflect_gain(arrays, profile, phi_x_true, phi_y_true)
    return float(tx_gain), float(ios_gain), float(rx_gain)
