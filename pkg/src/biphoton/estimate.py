"""Estimation pipeline for coincidence grids.

Marginal and rotated histograms are fitted with one-dimensional Gaussians,
heralded widths are averaged over slices, the correlation is fitted with the
marginals frozen, and finally the instrument response is removed.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from .model import MomentSummary
from .simulate import STREAM_MONTE_CARLO, CountGrid, InstrumentResponse, philox

FIELDS = ("marginal_s", "marginal_i", "heralded_s", "heralded_i", "rho", "width_sum", "width_diff")


class FitError(ValueError):
    """A fit did not converge; ``last`` holds the final iterate, if any."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class DegenerateHistogramError(FitError):
    pass


class ResolutionLimitedError(ValueError):
    pass


class MonteCarloError(RuntimeError):
    pass


@dataclass(frozen=True)
class Hist1D:
    centers: np.ndarray
    weights: np.ndarray
    unit: str = ""

    def __post_init__(self):
        if len(self.centers) != len(self.weights):
            raise ValueError("centers and weights differ in length")
        if len(self.centers) < 8:
            raise ValueError(f"histogram needs at least 8 bins, got {len(self.centers)}")
        steps = np.diff(self.centers)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0) or steps[0] <= 0:
            raise ValueError("bin centers must be uniformly increasing")
        if np.any(np.asarray(self.weights) < 0):
            raise ValueError("weights must be non-negative")

    @property
    def step(self) -> float:
        return float(self.centers[1] - self.centers[0])


@dataclass(frozen=True)
class GaussFit1D:
    amplitude: float
    center: float
    width: float
    offset: float
    residual_norm: float


@dataclass(frozen=True)
class SlicePolicy:
    """Which slices enter a heralded width: those whose marginal weight is at
    least ``threshold`` of the peak; at least ``min_slices`` must fit."""

    threshold: float = 0.5
    min_slices: int = 3


@dataclass(frozen=True)
class FitSummary:
    raw: MomentSummary
    deconvolved: MomentSummary
    raw_errors: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)


def _axis_index(axis) -> int:
    index = {"s": 0, "signal": 0, 0: 0, "i": 1, "idler": 1, 1: 1}.get(axis)
    if index is None:
        raise ValueError(f"axis must be 'signal' or 'idler', got {axis!r}")
    return index


def marginal_hist(counts: CountGrid, axis) -> Hist1D:
    """Counts summed over the other photon's axis."""
    index = _axis_index(axis)
    grid_axis = (counts.grid.axis_s, counts.grid.axis_i)[index]
    return Hist1D(grid_axis.values, counts.counts.sum(axis=1 - index), grid_axis.unit)


def rotated_hist(counts: CountGrid, mode: Literal["sum", "difference"]) -> Hist1D:
    """Histogram of ``x_s + x_i`` or ``x_s - x_i``.

    Bins are ``max(step_s, step_i)`` wide and centred on the lattice through
    ``center_s +- center_i``; each cell goes whole to its nearest bin.
    """
    if mode not in ("sum", "difference"):
        raise ValueError(f"mode must be 'sum' or 'difference', got {mode!r}")
    ax_s, ax_i = counts.grid.axis_s, counts.grid.axis_i
    if ax_s.kind != ax_i.kind:
        raise ValueError("rotated histograms need two axes of the same kind")
    sign = 1.0 if mode == "sum" else -1.0
    width = max(ax_s.step, ax_i.step)
    anchor = ax_s.center + sign * ax_i.center
    offsets = (ax_s.values - ax_s.center)[:, None] + sign * (ax_i.values - ax_i.center)[None, :]
    index = np.rint(offsets / width).astype(np.int64)
    lo = index.min()
    weights = np.bincount((index - lo).ravel(), weights=counts.counts.ravel().astype(float))
    centers = anchor + (lo + np.arange(len(weights))) * width
    return Hist1D(centers, np.rint(weights).astype(np.int64), ax_s.unit)


def _gauss_residuals(p, x, y):
    a, mu, w, b = p
    return a * np.exp(-0.5 * ((x - mu) / w) ** 2) + b - y


def _gauss_jacobian(p, x, y):
    a, mu, w, _ = p
    u = (x - mu) / w
    g = np.exp(-0.5 * u * u)
    return np.column_stack([g, a * g * u / w, a * g * u * u / w, np.ones_like(x)])


def fit_gauss1d(hist: Hist1D, offset: bool = True, max_iter: int = 200) -> GaussFit1D:
    """Least-squares fit of ``A exp(-(x - mu)^2 / 2 w^2) + b``.

    Starts from the sample mean and standard deviation and from the
    histogram's max and min.  With ``offset=False`` the constant is pinned
    at zero.
    """
    x = np.asarray(hist.centers, dtype=float)
    y = np.asarray(hist.weights, dtype=float)
    if np.count_nonzero(y) < 2 or y.max() == y.min():
        raise DegenerateHistogramError("histogram is degenerate (flat or a single occupied bin)")
    shift = x[np.argmax(y)]
    xs = x - shift
    total = y.sum()
    mu0 = (xs * y).sum() / total
    w0 = math.sqrt(max(((xs - mu0) ** 2 * y).sum() / total, (hist.step / 2) ** 2))
    b0 = float(y.min()) if offset else 0.0
    p0 = [float(y.max()) - b0, mu0, w0, b0]

    if offset:
        fun, jac, start = _gauss_residuals, _gauss_jacobian, p0
    else:
        def fun(p, x, y):
            return _gauss_residuals([*p, 0.0], x, y)

        def jac(p, x, y):
            return _gauss_jacobian([*p, 0.0], x, y)[:, :3]

        start = p0[:3]
    res = least_squares(
        fun, start, jac=jac, args=(xs, y), method="lm",
        xtol=1e-10, ftol=1e-15, gtol=1e-15, max_nfev=max_iter, x_scale="jac",
    )
    p = list(res.x) + ([] if offset else [0.0])
    if res.status <= 0:
        raise FitError(f"Gaussian fit did not converge: {res.message}", last=p)
    a, mu, w, b = p
    if not (a > 0 and abs(w) > 0 and math.isfinite(w)):
        raise FitError(f"Gaussian fit ended at a non-physical point (A={a:.4g}, w={w:.4g})", last=p)
    return GaussFit1D(float(a), float(mu + shift), float(abs(w)), float(b), float(np.linalg.norm(res.fun)))


def heralded_width(counts: CountGrid, side, policy: SlicePolicy = SlicePolicy()) -> tuple[float, float]:
    """Mean Gaussian width of ``side`` with the partner fixed, and its standard error.

    Every slice whose partner marginal reaches ``policy.threshold`` of the
    peak is fitted; slices whose fit fails are skipped.
    """
    index = _axis_index(side)
    axis = (counts.grid.axis_s, counts.grid.axis_i)[index]
    data = counts.counts if index == 0 else counts.counts.T
    partner = data.sum(axis=0)
    chosen = np.flatnonzero(partner >= policy.threshold * partner.max())
    widths = []
    for k in chosen:
        try:
            widths.append(fit_gauss1d(Hist1D(axis.values, data[:, k], axis.unit)).width)
        except FitError:
            continue
    if len(widths) < max(policy.min_slices, 2):
        raise FitError(f"only {len(widths)} heralded slices could be fitted (need {policy.min_slices})")
    widths = np.asarray(widths)
    return float(widths.mean()), float(widths.std(ddof=1) / math.sqrt(len(widths)))


def _gauss2d_shape(u, v, rho):
    return np.exp(-(u * u - 2 * rho * u * v + v * v) / (2 * (1 - rho * rho)))


def fit_correlation(
    counts: CountGrid, fits: tuple[GaussFit1D, GaussFit1D] | None = None, tol: float = 1e-7
) -> tuple[float, float]:
    """Correlation of the 2D Gaussian with the measured marginals that best fits the grid.

    Centres and widths are frozen from the marginal fits; amplitude and
    offset are solved linearly for each trial correlation.  The error is
    the curvature estimate of the profiled residual.
    """
    if fits is None:
        fits = (fit_gauss1d(marginal_hist(counts, "s")), fit_gauss1d(marginal_hist(counts, "i")))
    fs, fi = fits
    if not (fs.width > 0 and fi.width > 0):
        raise FitError("degenerate marginal widths")
    u = ((counts.grid.axis_s.values - fs.center) / fs.width)[:, None]
    v = ((counts.grid.axis_i.values - fi.center) / fi.width)[None, :]
    y = counts.counts.astype(float).ravel()
    ones = np.ones_like(y)

    def ssr(rho):
        g = _gauss2d_shape(u, v, rho).ravel()
        design = np.column_stack([g, ones])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        r = design @ coef - y
        return float(r @ r)

    edge = 1 - 1e-9
    res = minimize_scalar(ssr, bounds=(-edge, edge), method="bounded", options={"xatol": tol, "maxiter": 500})
    if not res.success:
        raise FitError(f"correlation fit did not converge: {res.message}", last=res.x)
    rho = float(res.x)
    h = min(1e-4, (1 - abs(rho)) / 4)
    curvature = (ssr(rho + h) - 2 * res.fun + ssr(rho - h)) / (h * h)
    dof = max(y.size - 3, 1)
    err = math.sqrt(2 * (res.fun / dof) / curvature) if curvature > 0 else math.nan
    return rho, err


def deconvolve_width(measured: float, resolution: float) -> float:
    """Remove a Gaussian instrument width in quadrature."""
    if resolution < 0:
        raise ValueError(f"resolution must be non-negative, got {resolution}")
    if not measured > resolution:
        raise ResolutionLimitedError(
            f"resolution-limited: measured width {measured:.6g} does not exceed response {resolution:.6g}"
        )
    return math.sqrt(measured * measured - resolution * resolution)


def deconvolve_summary(raw: MomentSummary, response: InstrumentResponse) -> MomentSummary:
    """Remove independent Gaussian responses from every entry of ``raw``.

    The responses add to each axis without touching the covariance, so the
    correlation is rescaled by the ratio of raw to deconvolved marginals.
    Heralded widths subtract the conditional variance the responses add:
    ``r_s^2 + rho^2 sigma_s^2 r_i^2 / (sigma_i^2 + r_i^2)`` for the signal.
    A correlation pushed past +-1 is clamped and flagged.
    """
    rs, ri = response.res_s, response.res_i
    ms = deconvolve_width(raw.marginal_s, rs)
    mi = deconvolve_width(raw.marginal_i, ri)
    rho = raw.rho * (raw.marginal_s * raw.marginal_i) / (ms * mi)
    clamped = abs(rho) >= 1
    if clamped:
        rho = math.copysign(1 - 1e-12, rho)
    eff_s = math.sqrt(rs * rs + rho * rho * ms * ms * ri * ri / (mi * mi + ri * ri))
    eff_i = math.sqrt(ri * ri + rho * rho * mi * mi * rs * rs / (ms * ms + rs * rs))
    combined = math.hypot(rs, ri)
    return MomentSummary(
        marginal_s=ms,
        marginal_i=mi,
        heralded_s=deconvolve_width(raw.heralded_s, eff_s),
        heralded_i=deconvolve_width(raw.heralded_i, eff_i),
        rho=rho,
        width_sum=None if raw.width_sum is None else deconvolve_width(raw.width_sum, combined),
        width_diff=None if raw.width_diff is None else deconvolve_width(raw.width_diff, combined),
        unit_s=raw.unit_s,
        unit_i=raw.unit_i,
        rho_clamped=clamped,
    )


def estimate_moments(counts: CountGrid, policy: SlicePolicy = SlicePolicy()) -> MomentSummary:
    """Raw (instrument-broadened) moment summary of a coincidence grid."""
    fs = fit_gauss1d(marginal_hist(counts, "s"))
    fi = fit_gauss1d(marginal_hist(counts, "i"))
    hs, _ = heralded_width(counts, "s", policy)
    hi, _ = heralded_width(counts, "i", policy)
    rho, _ = fit_correlation(counts, (fs, fi))
    same_kind = counts.grid.axis_s.kind == counts.grid.axis_i.kind
    width_sum = fit_gauss1d(rotated_hist(counts, "sum")).width if same_kind else None
    width_diff = fit_gauss1d(rotated_hist(counts, "difference")).width if same_kind else None
    return MomentSummary(
        marginal_s=fs.width,
        marginal_i=fi.width,
        heralded_s=hs,
        heralded_i=hi,
        rho=rho,
        width_sum=width_sum,
        width_diff=width_diff,
        unit_s=counts.grid.axis_s.unit,
        unit_i=counts.grid.axis_i.unit,
    )


def monte_carlo_errors(
    counts: CountGrid,
    n_trials: int,
    seed: int,
    estimator: Callable[[CountGrid], dict],
    workers: int = 1,
    max_failure: float = 0.2,
) -> dict[str, float]:
    """Sample standard deviation of each estimator output under Poisson resampling.

    Every trial redraws each cell as Poisson with the observed count as
    mean.  Trial ``k`` uses its own counter-split stream of ``seed``, so the
    result is independent of ``workers``.
    """
    if n_trials < 50:
        raise ValueError(f"n_trials must be >= 50, got {n_trials}")
    observed = counts.counts.astype(float)

    def trial(k):
        rng = philox(seed, STREAM_MONTE_CARLO, k)
        resampled = CountGrid(counts.grid, rng.poisson(observed), counts.total_expected, counts.seed)
        try:
            return estimator(resampled)
        except (ValueError, ArithmeticError):
            return None

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(trial, range(n_trials)))
    else:
        results = [trial(k) for k in range(n_trials)]
    good = [r for r in results if r is not None]
    failures = n_trials - len(good)
    if failures > max_failure * n_trials:
        raise MonteCarloError(f"estimator failed in {failures} of {n_trials} Monte-Carlo trials")
    keys = [k for k, v in good[0].items() if v is not None]
    return {k: float(np.std([r[k] for r in good], ddof=1)) for k in keys}


def analyze(
    counts: CountGrid,
    response: InstrumentResponse,
    n_trials: int = 50,
    seed: int | None = None,
    policy: SlicePolicy = SlicePolicy(),
    workers: int = 1,
) -> FitSummary:
    """Raw and deconvolved summaries with Monte-Carlo errors (seeded by the grid's seed by default)."""
    raw = estimate_moments(counts, policy)
    dec = deconvolve_summary(raw, response)

    def estimator(grid):
        r = estimate_moments(grid, policy)
        d = deconvolve_summary(r, response)
        out = {f"raw.{k}": v for k, v in r.as_dict().items()}
        out.update({f"dec.{k}": v for k, v in d.as_dict().items()})
        return out

    errs = monte_carlo_errors(counts, n_trials, counts.seed if seed is None else seed, estimator, workers)
    raw_errors = {k[4:]: v for k, v in errs.items() if k.startswith("raw.")}
    dec_errors = {k[4:]: v for k, v in errs.items() if k.startswith("dec.")}
    return FitSummary(raw, dec, raw_errors, dec_errors)
