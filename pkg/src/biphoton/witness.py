"""Energy-time entanglement witnesses and the classical dispersion bound."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

Verdict = Literal["violated", "not violated", "inconclusive"]

#: Default significance, in standard deviations, for a verdict.
DEFAULT_K = 3.0


@dataclass(frozen=True)
class WitnessReport:
    """A measured quantity compared against the bound obeyed by separable (or classical) light.

    ``sigma_distance`` is ``(threshold - value) / error``: positive when the
    value sits below the threshold.
    """

    name: str
    value: float
    error: float
    threshold: float
    verdict: Verdict
    sigma_distance: float
    k: float = DEFAULT_K

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "error": self.error,
            "threshold": self.threshold,
            "verdict": self.verdict,
            "sigma_distance": self.sigma_distance,
            "k": self.k,
        }


def verdict(value: float, error: float, threshold: float, k: float = DEFAULT_K) -> Verdict:
    """Violated iff ``value + k*error < threshold``; inconclusive within ``k*error`` of it."""
    if not (error >= 0 and k >= 0):
        raise ValueError(f"error and k must be non-negative, got error={error}, k={k}")
    if value + k * error < threshold:
        return "violated"
    if error > 0 and abs(value - threshold) <= k * error:
        return "inconclusive"
    return "not violated"


def _sigma_distance(value, error, threshold):
    gap = threshold - value
    if error > 0:
        return gap / error
    return 0.0 if gap == 0 else math.copysign(math.inf, gap)


def _report(name, value, error, threshold, k) -> WitnessReport:
    return WitnessReport(name, value, error, threshold, verdict(value, error, threshold, k),
                         _sigma_distance(value, error, threshold), k)


def _product(name, a, ea, b, eb, threshold, k) -> WitnessReport:
    if not (a > 0 and b > 0):
        raise ValueError(f"{name}: widths must be positive, got ({a}, {b})")
    if not (ea >= 0 and eb >= 0):
        raise ValueError(f"{name}: errors must be non-negative, got ({ea}, {eb})")
    value = a * b
    error = value * math.hypot(ea / a, eb / b)
    return _report(name, value, error, threshold, k)


def uncertainty_witness(dw_sum: float, dt_diff: float, e_sum: float = 0.0, e_diff: float = 0.0,
                        k: float = DEFAULT_K) -> WitnessReport:
    """Width of the frequency sum times width of the arrival-time difference.

    Separable states satisfy ``value >= 1``.
    """
    return _product("uncertainty", dw_sum, e_sum, dt_diff, e_diff, 1.0, k)


def mirrored_uncertainty_witness(dw_diff: float, dt_sum: float, e_diff: float = 0.0, e_sum: float = 0.0,
                                 k: float = DEFAULT_K) -> WitnessReport:
    """Frequency-difference width times arrival-time-sum width; falls below 1 for positive correlation."""
    return _product("mirrored_uncertainty", dw_diff, e_diff, dt_sum, e_sum, 1.0, k)


def heralded_tbp_witness(dw_heralded: float, dt_heralded: float, e_w: float = 0.0, e_t: float = 0.0,
                         k: float = DEFAULT_K) -> WitnessReport:
    """Heralded time-bandwidth product; a pure single photon cannot go below 1/2."""
    return _product("heralded_tbp", dw_heralded, e_w, dt_heralded, e_t, 0.5, k)


@dataclass(frozen=True)
class DispersionBound:
    """Smallest arrival-time-difference width reachable by classically correlated pulses.

    ``error`` is the first-order uncertainty of ``bound`` inherited from
    the error on ``dt0``.
    """

    dt0: float
    chirp: float
    bound: float
    error: float = 0.0

    def compare(self, dt_measured: float, error: float = 0.0, k: float = DEFAULT_K) -> WitnessReport:
        """Quantum verdict ("violated") when ``dt_measured`` lies ``k`` combined sigmas under the bound.

        The measurement and bound errors are combined in quadrature.
        """
        if not dt_measured > 0:
            raise ValueError(f"measured width must be positive, got {dt_measured}")
        if not error >= 0:
            raise ValueError(f"error must be non-negative, got {error}")
        return _report("dispersion_cancellation", dt_measured, math.hypot(error, self.error), self.bound, k)


def classical_dispersion_bound(dt0: float, chirp: float, dt0_error: float = 0.0) -> DispersionBound:
    """``sqrt(dt0^2 + 4 A^2 / dt0^2)`` for undispersed width ``dt0`` and chirp ``A`` on both photons."""
    if not dt0 > 0:
        raise ValueError(f"undispersed width dt0 must be positive, got {dt0}")
    if not dt0_error >= 0:
        raise ValueError(f"dt0_error must be non-negative, got {dt0_error}")
    extra = 4 * chirp * chirp / (dt0 * dt0)
    bound = math.sqrt(dt0 * dt0 + extra)
    slope = (dt0 - extra / dt0) / bound
    return DispersionBound(dt0, chirp, bound, abs(slope) * dt0_error)
