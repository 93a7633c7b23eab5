"""Sampled joint distributions, instrument blur and Poissonian coincidence counts."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .model import (
    BiphotonState,
    GatePulse,
    _side,
    jsa,
    spectrogram_moments,
    temporal_covariance,
    temporal_moments,
)

AxisKind = Literal["frequency", "time"]
UNITS = {"frequency": "rad/ps", "time": "ps"}

#: Name of the bit generator behind every Poisson draw.
GENERATOR_NAME = "numpy.random.Philox"

# Philox key namespaces: key = seed + (namespace << 64).
STREAM_COUNTS = 0
STREAM_MONTE_CARLO = 1

# Spectral half-width, in marginal sigmas, that must fit below the Nyquist frequency.
NYQUIST_SIGMAS = 6
# Automatic refinement leaves this much room, so spectral tails alias below 1e-12.
REFINE_SIGMAS = 10


class AliasingError(ValueError):
    """The requested time grid cannot be reached from an adequately sampled spectrum."""


def philox(seed: int, namespace: int, stream: int) -> np.random.Generator:
    """Counter-split generator: stream ``k`` starts ``k * 2**128`` draws into the key's sequence."""
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    bit_gen = np.random.Philox(key=seed + (namespace << 64))
    if stream:
        bit_gen = bit_gen.jumped(stream)
    return np.random.Generator(bit_gen)


@dataclass(frozen=True)
class Axis:
    center: float
    step: float
    n: int
    kind: AxisKind

    def __post_init__(self):
        if self.kind not in UNITS:
            raise ValueError(f"axis kind must be 'frequency' or 'time', got {self.kind!r}")
        if not self.step > 0:
            raise ValueError(f"axis step must be positive, got {self.step}")
        if self.n < 8:
            raise ValueError(f"axis needs at least 8 points, got {self.n}")

    @property
    def values(self) -> np.ndarray:
        return self.center + (np.arange(self.n) - (self.n - 1) / 2) * self.step

    @property
    def unit(self) -> str:
        return UNITS[self.kind]


@dataclass(frozen=True)
class Grid2D:
    """Sampling grid; the first array index runs over the signal axis."""

    axis_s: Axis
    axis_i: Axis

    @property
    def shape(self) -> tuple[int, int]:
        return self.axis_s.n, self.axis_i.n

    @property
    def kinds(self) -> tuple[str, str]:
        return self.axis_s.kind, self.axis_i.kind

    def mesh(self):
        return np.meshgrid(self.axis_s.values, self.axis_i.values, indexing="ij")

    def _require(self, kind_s, kind_i):
        if self.kinds != (kind_s, kind_i):
            raise ValueError(f"expected a ({kind_s}, {kind_i}) grid, got {self.kinds}")


@dataclass(frozen=True)
class Intensity2D:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")


@dataclass(frozen=True)
class CountGrid:
    grid: Grid2D
    counts: np.ndarray
    total_expected: float
    seed: int
    generator: str = GENERATOR_NAME

    def __post_init__(self):
        if self.counts.shape != self.grid.shape:
            raise ValueError(f"counts shape {self.counts.shape} does not match grid {self.grid.shape}")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")


@dataclass(frozen=True)
class InstrumentResponse:
    """Gaussian response widths along the signal and idler axes, in axis units."""

    res_s: float = 0.0
    res_i: float = 0.0

    def __post_init__(self):
        if self.res_s < 0 or self.res_i < 0:
            raise ValueError(f"response widths must be non-negative, got ({self.res_s}, {self.res_i})")


def _normalized(grid: Grid2D, values: np.ndarray) -> Intensity2D:
    total = values.sum()
    if not total > 0:
        raise ValueError("distribution has no weight on the grid")
    return Intensity2D(grid, values / total)


def _gaussian2d(grid: Grid2D, mean, cov) -> np.ndarray:
    xs, xi = grid.mesh()
    u = xs - mean[0]
    v = xi - mean[1]
    a, b, c = cov[0][0], cov[0][1], cov[1][1]
    det = a * c - b * b
    q = (c * u * u - 2 * b * u * v + a * v * v) / det
    return np.exp(-0.5 * q)


def _axis_width(state: BiphotonState, side: str, kind: str, gate: GatePulse | None, mixed: bool) -> float:
    if kind == "frequency":
        return state.sigma_s if side == "signal" else state.sigma_i
    if mixed and gate is not None:
        return spectrogram_moments(state, gate, side)[1]
    t = temporal_moments(state)
    return t.marginal_s if side == "signal" else t.marginal_i


def make_grid(
    state: BiphotonState,
    kind_s: AxisKind = "frequency",
    kind_i: AxisKind = "frequency",
    half_span: float = 4.0,
    n: int = 128,
    *,
    gate: GatePulse | None = None,
    equal_steps: bool = False,
    center_s: float | None = None,
    center_i: float | None = None,
) -> Grid2D:
    """Grid spanning ``+-half_span`` marginal widths on each axis.

    Frequency axes are centred on the state's central frequencies and time
    axes on zero unless explicit centres are given.  A time axis paired
    with a frequency axis is sized by the gated pulse width when ``gate``
    is supplied.  With ``equal_steps`` both axes share the larger step, so
    sums and differences of coordinates fall on a common lattice.
    """
    if n < 8:
        raise ValueError(f"grid needs n >= 8, got {n}")
    if not half_span > 0:
        raise ValueError(f"half_span must be positive, got {half_span}")
    mixed = kind_s != kind_i
    w_s = _axis_width(state, "signal", kind_s, gate, mixed)
    w_i = _axis_width(state, "idler", kind_i, gate, mixed)
    step_s = 2 * half_span * w_s / n
    step_i = 2 * half_span * w_i / n
    if equal_steps:
        if mixed:
            raise ValueError("equal_steps needs two axes of the same kind")
        step_s = step_i = max(step_s, step_i)
    if center_s is None:
        center_s = state.omega0_s if kind_s == "frequency" else 0.0
    if center_i is None:
        center_i = state.omega0_i if kind_i == "frequency" else 0.0
    return Grid2D(Axis(center_s, step_s, n, kind_s), Axis(center_i, step_i, n, kind_i))


def joint_spectral_intensity(state: BiphotonState, grid: Grid2D) -> Intensity2D:
    grid._require("frequency", "frequency")
    ws, wi = grid.mesh()
    return _normalized(grid, np.abs(jsa(state, ws, wi)) ** 2)


def joint_temporal_intensity(state: BiphotonState, grid: Grid2D) -> Intensity2D:
    """Closed-form joint temporal intensity, chirp included."""
    grid._require("time", "time")
    return _normalized(grid, _gaussian2d(grid, (0.0, 0.0), temporal_covariance(state)))


def _fft_window(state: BiphotonState, grid: Grid2D, oversample: int, refine):
    """Temporal amplitude ``f(t) = int F(w) exp(i w t) dw`` on a DFT window.

    The window starts at the grid's first time sample and is ``oversample``
    times longer than the grid on each axis.  Its internal step is the grid
    step divided by ``refine`` (per axis; chosen automatically when None).
    Returns ``(f, dt_s, dt_i, refine_s, refine_i)``.
    """
    grid._require("time", "time")
    if oversample < 1:
        raise ValueError(f"oversample must be >= 1, got {oversample}")
    if refine is None or isinstance(refine, int):
        refine = (refine, refine)
    tm = temporal_moments(state)
    axes = []
    for axis, sigma, width, m in (
        (grid.axis_s, state.sigma_s, tm.marginal_s, refine[0]),
        (grid.axis_i, state.sigma_i, tm.marginal_i, refine[1]),
    ):
        if m is None:
            m = max(1, math.ceil(REFINE_SIGMAS * sigma * axis.step / math.pi))
        dt = axis.step / m
        # spectrum must fit inside the Nyquist band with NYQUIST_SIGMAS to spare
        if NYQUIST_SIGMAS * sigma * dt > math.pi:
            raise AliasingError(
                f"time step {dt:.4g} ps undersamples a {sigma:.4g} rad/ps spectrum "
                f"(need step <= {math.pi / (NYQUIST_SIGMAS * sigma):.4g} ps)"
            )
        n_f = oversample * axis.n * m
        extent = abs(axis.center) + axis.n * axis.step / 2 + 6 * width
        if n_f * dt < 2 * extent:
            raise AliasingError(
                f"DFT window {n_f * dt:.4g} ps is too short for a {width:.4g} ps pulse; raise oversample"
            )
        dw = 2 * math.pi / (n_f * dt)
        axes.append(((np.arange(n_f) - n_f // 2) * dw, dw, n_f, dt, m))
    (k_s, dw_s, n_s, dt_s, m_s), (k_i, dw_i, n_i, dt_i, m_i) = axes
    t0_s = grid.axis_s.values[0]
    t0_i = grid.axis_i.values[0]
    spec = jsa(state, state.omega0_s + k_s[:, None], state.omega0_i + k_i[None, :])
    spec = spec * np.exp(1j * k_s[:, None] * t0_s) * np.exp(1j * k_i[None, :] * t0_i)
    f = np.fft.ifft2(spec) * (n_s * n_i * dw_s * dw_i)
    return f, dt_s, dt_i, m_s, m_i


def joint_temporal_intensity_fft(
    state: BiphotonState, grid: Grid2D, oversample: int = 4, refine: int | None = None
) -> Intensity2D:
    """Joint temporal intensity by discrete Fourier transform of the sampled JSA.

    Independent of :func:`joint_temporal_intensity`; intended as a test
    oracle.  Raises :class:`AliasingError` when the internal time step
    (grid step over ``refine``) cannot hold the spectrum or the DFT window
    cannot hold the pulse.
    """
    f, _, _, m_s, m_i = _fft_window(state, grid, oversample, refine)
    n_s, n_i = grid.shape
    f = f[: n_s * m_s : m_s, : n_i * m_i : m_i]
    return _normalized(grid, np.abs(f) ** 2)


def time_frequency_intensity(
    state: BiphotonState, gate: GatePulse, grid: Grid2D, gated_side="signal"
) -> Intensity2D:
    """Coincidences versus gate delay on one photon and frequency of the other.

    The gate convolution is part of the result; only the spectrometer
    response remains to be applied with :func:`blur`.
    """
    gated_side = _side(gated_side)
    bandwidth, pulse, rho_f = spectrogram_moments(state, gate, gated_side)
    cov_to = rho_f * pulse * bandwidth
    if gated_side == "signal":
        grid._require("time", "frequency")
        mean = (0.0, state.omega0_i)
        cov = ((pulse * pulse, cov_to), (cov_to, bandwidth * bandwidth))
    else:
        grid._require("frequency", "time")
        mean = (state.omega0_s, 0.0)
        cov = ((bandwidth * bandwidth, cov_to), (cov_to, pulse * pulse))
    return _normalized(grid, _gaussian2d(grid, mean, cov))


def _gaussian_filter_axis(values: np.ndarray, res: float, step: float, axis: int) -> np.ndarray:
    # Zero padding of 6 response widths makes the circular product a linear convolution.
    pad = math.ceil(6 * res / step) + 8
    widths = [(0, 0)] * values.ndim
    widths[axis] = (pad, pad)
    padded = np.pad(values, widths)
    n = padded.shape[axis]
    k = 2 * math.pi * np.fft.rfftfreq(n, d=step)
    shape = [1] * values.ndim
    shape[axis] = -1
    transfer = np.exp(-0.5 * (res * k) ** 2).reshape(shape)
    out = np.fft.irfft(np.fft.rfft(padded, axis=axis) * transfer, n=n, axis=axis)
    return np.take(out, np.arange(pad, pad + values.shape[axis]), axis=axis)


def blur(intensity: Intensity2D, response: InstrumentResponse) -> Intensity2D:
    """Separable Gaussian convolution with the instrument response, renormalized.

    The convolution is applied as the Gaussian transfer function on the
    zero-padded grid.  For well-sampled inputs this equals sampling the
    continuous convolution, including responses narrower than one step.
    Slight ringing below zero, from input content near the Nyquist
    frequency, is clipped.
    """
    values = intensity.values
    for axis_index, (res, axis) in enumerate(
        ((response.res_s, intensity.grid.axis_s), (response.res_i, intensity.grid.axis_i))
    ):
        if res < 0:
            raise ValueError(f"response width must be non-negative, got {res}")
        if res > 0:
            values = _gaussian_filter_axis(values, res, axis.step, axis_index)
    return _normalized(intensity.grid, np.clip(values, 0.0, None))


def draw_counts(intensity: Intensity2D, total_counts: float, seed: int, workers: int = 1) -> CountGrid:
    """Independent Poisson counts per cell with mean ``total_counts * value``.

    Row ``j`` (signal index) draws from its own counter-split Philox stream,
    so the result does not depend on ``workers``.
    """
    if not total_counts >= 0:
        raise ValueError(f"total_counts must be non-negative, got {total_counts}")
    means = total_counts * intensity.values

    def row(j):
        return philox(seed, STREAM_COUNTS, j).poisson(means[j])

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(row, range(means.shape[0])))
    else:
        rows = [row(j) for j in range(means.shape[0])]
    counts = np.asarray(rows, dtype=np.int64)
    return CountGrid(intensity.grid, counts, float(total_counts), int(seed))
