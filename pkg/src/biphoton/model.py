"""Closed-form Gaussian two-photon state and its second moments.

All widths are intensity standard deviations (1/sqrt(e) widths).  Angular
frequencies are in rad/ps, times in ps and quadratic spectral phase
coefficients ("chirps") in ps^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

#: Speed of light in nm/ps.
C_NM_PER_PS = 299792.458

#: Grating-compressor dispersion per mm of grating displacement, ps^2/mm.
COMPRESSOR_CHIRP_PER_MM = {"signal": 1.315e-3, "idler": 1.925e-3}

Side = Literal["signal", "idler"]


def _side(side: str) -> str:
    side = {"s": "signal", "i": "idler"}.get(side, side)
    if side not in ("signal", "idler"):
        raise ValueError(f"side must be 'signal' or 'idler', got {side!r}")
    return side


@dataclass(frozen=True)
class BiphotonState:
    """Gaussian joint spectral amplitude with separable quadratic phase.

    ``rho_w`` is the statistical correlation of the joint spectral intensity.
    Values with ``1 - rho_w**2 < 1e-10`` are accepted but lose precision in
    every ``1/(1 - rho_w**2)`` factor.
    """

    sigma_s: float
    sigma_i: float
    rho_w: float
    omega0_s: float = 0.0
    omega0_i: float = 0.0
    chirp_s: float = 0.0
    chirp_i: float = 0.0

    def __post_init__(self):
        for name in ("sigma_s", "sigma_i", "rho_w", "omega0_s", "omega0_i", "chirp_s", "chirp_i"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.sigma_s <= 0 or self.sigma_i <= 0:
            raise ValueError(f"bandwidths must be positive, got ({self.sigma_s}, {self.sigma_i})")
        if abs(self.rho_w) >= 1:
            raise ValueError(f"|rho_w| must be < 1 (state is not normalizable), got {self.rho_w}")

    @property
    def purity(self) -> float:
        """Purity of the single-photon reduced state."""
        return math.sqrt(1.0 - self.rho_w**2)

    def with_chirps(self, chirp_s: float = 0.0, chirp_i: float = 0.0) -> "BiphotonState":
        return replace(self, chirp_s=chirp_s, chirp_i=chirp_i)


@dataclass(frozen=True)
class GatePulse:
    """Optical gate used for time-resolved (upconversion) detection.

    ``tau_g`` is the gate intensity width in ps; its spectral intensity
    width is ``sigma_g = 1 / (2 tau_g)``.
    """

    tau_g: float
    omega_g0: float = 0.0

    def __post_init__(self):
        if not (self.tau_g > 0 and math.isfinite(self.tau_g)):
            raise ValueError(f"tau_g must be positive, got {self.tau_g!r}")

    @property
    def sigma_g(self) -> float:
        return 1.0 / (2.0 * self.tau_g)


@dataclass(frozen=True)
class MomentSummary:
    """Widths and correlation of one joint distribution.

    ``width_sum``/``width_diff`` are the widths of ``x_s + x_i`` and
    ``x_s - x_i``; they are ``None`` for mixed time-frequency distributions.
    ``rho_clamped`` marks a deconvolved correlation forced back inside +-1.
    """

    marginal_s: float
    marginal_i: float
    heralded_s: float
    heralded_i: float
    rho: float
    width_sum: float | None = None
    width_diff: float | None = None
    unit_s: str = ""
    unit_i: str = ""
    rho_clamped: bool = False

    def as_dict(self) -> dict:
        return {
            "marginal_s": self.marginal_s,
            "marginal_i": self.marginal_i,
            "heralded_s": self.heralded_s,
            "heralded_i": self.heralded_i,
            "rho": self.rho,
            "width_sum": self.width_sum,
            "width_diff": self.width_diff,
        }


def make_state(sigma_s, sigma_i, rho_w, omega0_s=0.0, omega0_i=0.0, chirp_s=0.0, chirp_i=0.0):
    return BiphotonState(
        float(sigma_s), float(sigma_i), float(rho_w),
        float(omega0_s), float(omega0_i), float(chirp_s), float(chirp_i),
    )


def jsa(state: BiphotonState, omega_s, omega_i):
    """Joint spectral amplitude including the quadratic spectral phase.

    Broadcasts over ``omega_s`` and ``omega_i``.  ``|jsa|^2`` is a bivariate
    normal density, so it integrates to one over the plane.
    """
    x = np.asarray(omega_s, dtype=float) - state.omega0_s
    y = np.asarray(omega_i, dtype=float) - state.omega0_i
    ss, si, r = state.sigma_s, state.sigma_i, state.rho_w
    one_m = 1.0 - r * r
    norm = 1.0 / (math.sqrt(2 * math.pi * ss * si) * one_m**0.25)
    q = (x * x / (2 * ss * ss) + y * y / (2 * si * si) - r * x * y / (ss * si)) / (2 * one_m)
    phase = state.chirp_s * x * x + state.chirp_i * y * y
    return norm * np.exp(-q + 1j * phase)


def spectral_moments(state: BiphotonState) -> MomentSummary:
    ss, si, r = state.sigma_s, state.sigma_i, state.rho_w
    h = math.sqrt(1.0 - r * r)
    return MomentSummary(
        marginal_s=ss,
        marginal_i=si,
        heralded_s=h * ss,
        heralded_i=h * si,
        rho=r,
        width_sum=math.sqrt(ss * ss + 2 * r * ss * si + si * si),
        width_diff=math.sqrt(ss * ss - 2 * r * ss * si + si * si),
        unit_s="rad/ps",
        unit_i="rad/ps",
    )


def _heralded_pulse_var(s1, s2, a1, a2, r):
    # Heralded arrival-time variance of photon 1 with photon 2's time fixed.
    one_m = 1.0 - r * r
    return (
        1.0 / (4 * s1 * s1)
        + 4 * a1 * a1 * one_m * s1 * s1
        + 4 * r * r * (a1 * s1 * s1 + a2 * s2 * s2) ** 2
        / (s1 * s1 * (1 + 16 * a2 * a2 * one_m * s2**4))
    )


def temporal_covariance(state: BiphotonState) -> np.ndarray:
    """Covariance matrix of the joint temporal intensity, ps^2.

    The transform-limited part is the inverse spectral covariance over four;
    a quadratic phase adds the covariance of the group delays
    ``2 A (omega - omega0)``.
    """
    ss, si, r = state.sigma_s, state.sigma_i, state.rho_w
    a_s, a_i = state.chirp_s, state.chirp_i
    one_m = 1.0 - r * r
    var_s = 1.0 / (4 * one_m * ss * ss) + 4 * a_s * a_s * ss * ss
    var_i = 1.0 / (4 * one_m * si * si) + 4 * a_i * a_i * si * si
    cov = -r / (4 * one_m * ss * si) + 4 * a_s * a_i * r * ss * si
    return np.array([[var_s, cov], [cov, var_i]])


def fourier_limited_temporal_moments(state: BiphotonState) -> MomentSummary:
    """Arrival-time moments of the state with its spectral phase removed."""
    ss, si, r = state.sigma_s, state.sigma_i, state.rho_w
    root = math.sqrt(1.0 - r * r)
    return MomentSummary(
        marginal_s=1.0 / (2 * root * ss),
        marginal_i=1.0 / (2 * root * si),
        heralded_s=1.0 / (2 * ss),
        heralded_i=1.0 / (2 * si),
        rho=-r,
        width_sum=math.sqrt(ss * ss - 2 * r * ss * si + si * si) / (2 * root * ss * si),
        width_diff=math.sqrt(ss * ss + 2 * r * ss * si + si * si) / (2 * root * ss * si),
        unit_s="ps",
        unit_i="ps",
    )


def temporal_moments(state: BiphotonState) -> MomentSummary:
    """Arrival-time widths and correlation of the (possibly chirped) pair."""
    ss, si, r = state.sigma_s, state.sigma_i, state.rho_w
    a_s, a_i = state.chirp_s, state.chirp_i
    one_m = 1.0 - r * r
    marginal_s = math.sqrt(1.0 / (4 * one_m * ss * ss) + 4 * a_s * a_s * ss * ss)
    marginal_i = math.sqrt(1.0 / (4 * one_m * si * si) + 4 * a_i * a_i * si * si)
    heralded_s = math.sqrt(_heralded_pulse_var(ss, si, a_s, a_i, r))
    heralded_i = math.sqrt(_heralded_pulse_var(si, ss, a_i, a_s, r))
    cov = -r / (4 * one_m * ss * si) + 4 * a_s * a_i * r * ss * si
    rho_t = cov / (marginal_s * marginal_i)
    fourier_limit = 1.0 / (4 * one_m * ss * ss * si * si)
    diff_var = (
        (ss * ss + 2 * r * ss * si + si * si) * fourier_limit
        + 4 * (a_s * ss + a_i * si) ** 2
        - 8 * a_i * a_s * (1 + r) * ss * si
    )
    sum_var = (
        (ss * ss - 2 * r * ss * si + si * si) * fourier_limit
        + 4 * (a_s * ss + a_i * si) ** 2
        - 8 * a_i * a_s * (1 - r) * ss * si
    )
    return MomentSummary(
        marginal_s=marginal_s,
        marginal_i=marginal_i,
        heralded_s=heralded_s,
        heralded_i=heralded_i,
        rho=rho_t,
        width_sum=math.sqrt(sum_var),
        width_diff=math.sqrt(diff_var),
        unit_s="ps",
        unit_i="ps",
    )


def joint_uncertainty_product(state: BiphotonState) -> float:
    """Width of the frequency sum times width of the arrival-time difference."""
    return spectral_moments(state).width_sum * temporal_moments(state).width_diff


def time_bandwidth_products(state: BiphotonState) -> dict[str, float]:
    """The four single-photon time-bandwidth products of the signal.

    Keys are ``"marginal_heralded"`` (marginal bandwidth times heralded pulse
    width), ``"heralded_marginal"``, ``"marginal"`` and ``"heralded"``.  The
    idler values are identical.  Chirped states are routed through
    :func:`temporal_moments`, so all four only grow with spectral phase.
    """
    w = spectral_moments(state)
    t = temporal_moments(state)
    return {
        "marginal_heralded": w.marginal_s * t.heralded_s,
        "heralded_marginal": w.heralded_s * t.marginal_s,
        "marginal": w.marginal_s * t.marginal_s,
        "heralded": w.heralded_s * t.heralded_s,
    }


def spectrogram_moments(state: BiphotonState, gate: GatePulse, gated_side: Side = "signal"):
    """Moments of the coincidence map of gate delay on one photon and
    frequency of the other, assuming infinitely broad phasematching.

    Returns ``(other_bandwidth, gated_pulse_width, rho_f)``.  The bandwidth
    is that of the spectrally resolved partner.  Sign convention: positive
    chirp on the gated photon with anti-correlated frequencies gives
    ``rho_f > 0``.
    """
    gated_side = _side(gated_side)
    if gated_side == "signal":
        s_g, s_o, chirp = state.sigma_s, state.sigma_i, state.chirp_s
    else:
        s_g, s_o, chirp = state.sigma_i, state.sigma_s, state.chirp_i
    r = state.rho_w
    one_m = 1.0 - r * r
    sg = gate.sigma_g
    pulse = math.sqrt(1 / (4 * sg * sg) + 1 / (4 * one_m * s_g * s_g) + 4 * chirp * chirp * s_g * s_g)
    rho_f = (-4 * chirp * r * math.sqrt(one_m) * sg * s_g * s_g) / math.sqrt(
        one_m * s_g * s_g + sg * sg * (1 + 16 * chirp * chirp * one_m * s_g**4)
    )
    return s_o, pulse, rho_f


def wavelength_to_angfreq(lambda_nm: float) -> float:
    if not lambda_nm > 0:
        raise ValueError(f"wavelength must be positive, got {lambda_nm!r}")
    return 2 * math.pi * C_NM_PER_PS / lambda_nm


def angfreq_resolution(lambda_nm: float, dlambda_nm: float) -> float:
    """Angular-frequency width equivalent to a small wavelength width."""
    if not lambda_nm > 0:
        raise ValueError(f"wavelength must be positive, got {lambda_nm!r}")
    if dlambda_nm < 0:
        raise ValueError(f"wavelength resolution must be non-negative, got {dlambda_nm!r}")
    return 2 * math.pi * C_NM_PER_PS * dlambda_nm / lambda_nm**2


def displacement_to_chirp(mm: float, side: Side) -> float:
    """Chirp applied by a grating compressor displaced ``mm`` from zero dispersion."""
    return mm * COMPRESSOR_CHIRP_PER_MM[_side(side)]
