"""Scenario runner: simulate counts, analyze them and assemble the report."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Mapping

import numpy as np

from . import __version__
from .estimate import FIELDS, FitSummary, SlicePolicy, analyze, marginal_hist, rotated_hist
from .io import read_count_grid, read_json_report, write_count_grid, write_hist, write_json
from .model import MomentSummary, spectral_moments, temporal_covariance, temporal_moments
from .scenario import DISTRIBUTION_KINDS, DISTRIBUTIONS, Scenario
from .simulate import (
    CountGrid,
    InstrumentResponse,
    blur,
    draw_counts,
    joint_spectral_intensity,
    joint_temporal_intensity,
    make_grid,
    time_frequency_intensity,
)
from .witness import (
    DEFAULT_K,
    WitnessReport,
    classical_dispersion_bound,
    heralded_tbp_witness,
    mirrored_uncertainty_witness,
    uncertainty_witness,
)

Mode = Literal["simulate", "analyze", "witness", "all"]

REPORT_SCHEMA = "biphoton.report"
REPORT_VERSION = 1

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCONCLUSIVE = 2

TITLES = {
    "jsi": "Joint spectrum",
    "jti": "Joint temporal",
    "freq_time": "Sig. freq / Idl. time",
    "time_freq": "Sig. time / Idl. freq",
}

ROWS = {
    "marginal_s": "Signal marginal width",
    "heralded_s": "Signal heralded width",
    "marginal_i": "Idler marginal width",
    "heralded_i": "Idler heralded width",
    "rho": "Correlation",
    "width_sum": "Sum width",
    "width_diff": "Difference width",
}


@dataclass(frozen=True)
class DistributionResult:
    name: str
    counts: CountGrid
    response: InstrumentResponse
    fit: FitSummary


@dataclass
class RunResult:
    report: dict | None
    files: list[Path] = field(default_factory=list)
    exit_code: int = EXIT_OK


def distribution_name(counts: CountGrid) -> str:
    """Distribution measured by a grid, from its axis kinds."""
    kinds = counts.grid.kinds
    for name, k in DISTRIBUTION_KINDS.items():
        if k == kinds:
            return name
    raise ValueError(f"no distribution has axis kinds {kinds}")


def distribution_seed(seed: int, name: str) -> int:
    """Count seed of one distribution, derived from the scenario's master seed."""
    ss = np.random.SeedSequence([seed, DISTRIBUTIONS.index(name)])
    return int(ss.generate_state(1, np.uint64)[0])


def scenario_grid(scenario: Scenario, name: str):
    kind_s, kind_i = DISTRIBUTION_KINDS[name]
    g = scenario.grid
    return make_grid(
        scenario.state, kind_s, kind_i, g.half_span, g.n,
        gate=scenario.gate, equal_steps=g.equal_steps and kind_s == kind_i,
    )


def simulate_distribution(scenario: Scenario, name: str, workers: int | None = None) -> CountGrid:
    """Poissonian coincidence counts of one distribution, instrument response included."""
    grid = scenario_grid(scenario, name)
    state = scenario.state
    if name == "jsi":
        intensity = joint_spectral_intensity(state, grid)
    elif name == "jti":
        intensity = joint_temporal_intensity(state, grid)
    elif name == "freq_time":
        intensity = time_frequency_intensity(state, scenario.gate, grid, "idler")
    elif name == "time_freq":
        intensity = time_frequency_intensity(state, scenario.gate, grid, "signal")
    else:
        raise ValueError(f"unknown distribution {name!r}")
    intensity = blur(intensity, scenario.blur_response(name))
    return draw_counts(
        intensity, scenario.total_counts, distribution_seed(scenario.seed, name),
        scenario.workers if workers is None else workers,
    )


def _summary_from_cov(cov, unit_s, unit_i) -> MomentSummary:
    vs, vi, c = cov[0][0], cov[1][1], cov[0][1]
    return MomentSummary(
        marginal_s=math.sqrt(vs),
        marginal_i=math.sqrt(vi),
        heralded_s=math.sqrt(vs - c * c / vi),
        heralded_i=math.sqrt(vi - c * c / vs),
        rho=c / math.sqrt(vs * vi),
        unit_s=unit_s,
        unit_i=unit_i,
    )


def model_summary(scenario: Scenario, name: str) -> MomentSummary:
    """Closed-form moments of one distribution with every instrument response removed."""
    state = scenario.state
    if name == "jsi":
        return spectral_moments(state)
    if name == "jti":
        return temporal_moments(state)
    # A gated photon's arrival time shares covariance -2 A rho sigma_g sigma_o with
    # its partner's frequency; the gate only adds variance on the time axis.
    t = temporal_covariance(state)
    r = state.rho_w
    if name == "freq_time":
        c = -2 * state.chirp_i * r * state.sigma_i * state.sigma_s
        return _summary_from_cov(((state.sigma_s**2, c), (c, t[1][1])), "rad/ps", "ps")
    if name == "time_freq":
        c = -2 * state.chirp_s * r * state.sigma_s * state.sigma_i
        return _summary_from_cov(((t[0][0], c), (c, state.sigma_i**2)), "ps", "rad/ps")
    raise ValueError(f"unknown distribution {name!r}")


def analyze_counts(
    name: str,
    counts: CountGrid,
    response: InstrumentResponse,
    n_trials: int = 50,
    workers: int = 1,
    policy: SlicePolicy = SlicePolicy(),
) -> DistributionResult:
    fit = analyze(counts, response, n_trials=n_trials, policy=policy, workers=workers)
    return DistributionResult(name, counts, response, fit)


def _entries(fit: FitSummary) -> dict:
    raw, dec = fit.raw, fit.deconvolved
    out = {}
    for key in FIELDS:
        value = getattr(raw, key)
        if value is None:
            continue
        if key == "rho":
            unit = "1"
        elif key.endswith("_i"):
            unit = raw.unit_i
        else:
            unit = raw.unit_s
        out[key] = {
            "raw": value,
            "raw_error": fit.raw_errors.get(key, math.nan),
            "deconvolved": getattr(dec, key),
            "error": fit.errors.get(key, math.nan),
            "unit": unit,
        }
    return out


def _axis_dict(axis) -> dict:
    return {"kind": axis.kind, "center": axis.center, "step": axis.step, "n": axis.n, "unit": axis.unit}


def distribution_block(result: DistributionResult) -> dict:
    counts = result.counts
    return {
        "axes": {"signal": _axis_dict(counts.grid.axis_s), "idler": _axis_dict(counts.grid.axis_i)},
        "seed": counts.seed,
        "total_counts": int(counts.counts.sum()),
        "response": {"signal": result.response.res_s, "idler": result.response.res_i},
        "rho_clamped": result.fit.deconvolved.rho_clamped,
        "entries": _entries(result.fit),
    }


def _witness_dict(report: WitnessReport, basis: str, inputs: dict) -> dict:
    out = report.as_dict()
    out["basis"] = basis
    out["inputs"] = inputs
    return out


def evaluate_witnesses(
    distributions: Mapping[str, dict],
    k: float = DEFAULT_K,
    dispersion: tuple[float, float] | None = None,
) -> list[dict]:
    """Witness verdicts from the report blocks of the measured distributions.

    The uncertainty-type witnesses need both the joint spectrum and the
    joint temporal intensity.  ``dispersion = (dt0, chirp)`` adds the
    classical dispersion bound, tested on the deconvolved temporal
    difference width.
    """
    out = []
    jsi = distributions.get("jsi", {}).get("entries")
    jti = distributions.get("jti", {}).get("entries")
    if jsi and jti:
        for basis, val, err in (("raw", "raw", "raw_error"), ("deconvolved", "deconvolved", "error")):
            pairs = (
                (uncertainty_witness, ("jsi", "width_sum"), ("jti", "width_diff")),
                (mirrored_uncertainty_witness, ("jsi", "width_diff"), ("jti", "width_sum")),
                (heralded_tbp_witness, ("jsi", "heralded_s"), ("jti", "heralded_s")),
                (heralded_tbp_witness, ("jsi", "heralded_i"), ("jti", "heralded_i")),
            )
            for fn, (da, ka), (db, kb) in pairs:
                a = distributions[da]["entries"][ka]
                b = distributions[db]["entries"][kb]
                report = fn(a[val], b[val], a[err], b[err], k=k)
                if fn is heralded_tbp_witness:
                    report = _rename(report, f"heralded_tbp_{ka[-1]}")
                out.append(_witness_dict(report, basis, {f"{da}.{ka}": a[val], f"{db}.{kb}": b[val]}))
    if dispersion is not None and jti:
        dt0, chirp = dispersion
        bound = classical_dispersion_bound(dt0, chirp)
        d = jti["width_diff"]
        report = bound.compare(d["deconvolved"], d["error"], k=k)
        out.append(_witness_dict(report, "deconvolved", {"dt0": dt0, "chirp": chirp, "jti.width_diff": d["deconvolved"]}))
    return out


def _rename(report: WitnessReport, name: str) -> WitnessReport:
    return replace(report, name=name)


def exit_code_for(witnesses) -> int:
    return EXIT_INCONCLUSIVE if any(w["verdict"] == "inconclusive" for w in witnesses) else EXIT_OK


def build_report(
    results: Mapping[str, DistributionResult],
    scenario: Scenario | None = None,
    k: float = DEFAULT_K,
    dispersion: tuple[float, float] | None = None,
) -> dict:
    """Versioned report dictionary; key order is fixed so the JSON text is reproducible."""
    order = [n for n in DISTRIBUTIONS if n in results]
    blocks = {n: distribution_block(results[n]) for n in order}
    if scenario is not None:
        k = scenario.k
        if scenario.dispersion_dt0 is not None:
            dispersion = (scenario.dispersion_dt0, scenario.dispersion_chirp)
    seeds = {n: results[n].counts.seed for n in order}
    generators = sorted({results[n].counts.generator for n in order})
    return {
        "schema": REPORT_SCHEMA,
        "version": REPORT_VERSION,
        "scenario": None if scenario is None else {"name": scenario.name, **scenario.echo},
        "distributions": blocks,
        "witnesses": evaluate_witnesses(blocks, k, dispersion),
        "model": None if scenario is None else {
            n: {key: getattr(model_summary(scenario, n), key) for key in FIELDS} for n in order
        },
        "provenance": {
            "seed": None if scenario is None else scenario.seed,
            "distribution_seeds": seeds,
            "generator": generators[0] if len(generators) == 1 else generators,
            "monte_carlo_trials": None if scenario is None else scenario.mc_trials,
            "tool": "biphoton",
            "version": __version__,
        },
    }


def _fmt(value, error, unit="") -> str:
    if value is None:
        return "-"
    if error is None or not math.isfinite(error) or error <= 0:
        text = f"{value:.4g}"
    else:
        digits = max(0, 1 - math.floor(math.log10(error)))
        text = f"{value:.{digits}f} ± {error:.{digits}f}"
    return f"{text} {unit}".rstrip() if unit and unit != "1" else text


def format_table(report: dict) -> str:
    """Aligned plain-text table: raw fits with deconvolved values in parentheses."""
    blocks = report["distributions"]
    names = list(blocks)
    rows = [["Property"] + [TITLES[n] for n in names]]
    for key, label in ROWS.items():
        if not any(key in blocks[n]["entries"] for n in names):
            continue
        raw_row, dec_row = [label], [""]
        for n in names:
            e = blocks[n]["entries"].get(key)
            if e is None:
                raw_row.append("-")
                dec_row.append("")
            else:
                raw_row.append(_fmt(e["raw"], e["raw_error"], e["unit"]))
                dec_row.append("(" + _fmt(e["deconvolved"], e["error"], e["unit"]) + ")")
        rows += [raw_row, dec_row]
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    lines = []
    name = (report.get("scenario") or {}).get("name", "external data")
    prov = report["provenance"]
    lines.append(f"biphoton {prov['version']} report: {name}")
    lines.append(f"seed {prov['seed']}, generator {prov['generator']}, "
                 f"Monte-Carlo trials {prov['monte_carlo_trials']}")
    lines.append("Raw fit values; deconvolved values in parentheses; errors are Monte-Carlo standard deviations.")
    lines.append("")
    for i, r in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    if report["witnesses"]:
        lines.append("")
        lines.append("Witnesses")
        for w in report["witnesses"]:
            lines.append(
                f"  {w['name']:<24} {w['basis']:<12} {_fmt(w['value'], w['error']):<20} "
                f"threshold {w['threshold']:.4g}  {w['verdict']} ({w['sigma_distance']:.1f} sigma, k={w['k']:g})"
            )
    return "\n".join(lines) + "\n"


def _write_hists(out: Path, name: str, counts: CountGrid) -> list[Path]:
    files = [
        write_hist(out / f"hist_{name}_marginal_s.csv", marginal_hist(counts, "s"), f"{name} signal marginal"),
        write_hist(out / f"hist_{name}_marginal_i.csv", marginal_hist(counts, "i"), f"{name} idler marginal"),
    ]
    if counts.grid.axis_s.kind == counts.grid.axis_i.kind:
        for mode in ("sum", "difference"):
            files.append(write_hist(out / f"hist_{name}_{mode}.csv", rotated_hist(counts, mode), f"{name} {mode}"))
    return files


def write_report(out: Path, report: dict) -> list[Path]:
    path_txt = out / "report.txt"
    path_txt.write_text(format_table(report), encoding="utf-8", newline="\n")
    return [write_json(out / "report.json", report), path_txt]


def count_file(out: Path, name: str) -> Path:
    return Path(out) / f"counts_{name}.csv"


def run(scenario: Scenario, mode: Mode, out_dir, counts_dir=None) -> RunResult:
    """Execute ``mode`` for ``scenario`` and write its files into ``out_dir``.

    ``analyze`` reads ``counts_<name>.csv`` from ``counts_dir`` (default
    ``out_dir``); ``witness`` re-evaluates the verdicts of an existing
    ``report.json`` with the scenario's significance and bound.
    """
    if mode not in ("simulate", "analyze", "witness", "all"):
        raise ValueError(f"unknown mode {mode!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: list[Path] = []
    grids: dict[str, CountGrid] = {}
    if mode in ("simulate", "all"):
        for name in scenario.distributions:
            grids[name] = simulate_distribution(scenario, name)
            files.append(write_count_grid(count_file(out, name), grids[name]))
        if mode == "simulate":
            return RunResult(None, files, EXIT_OK)
    if mode == "witness":
        report = read_json_report(out / "report.json")
        dispersion = None
        if scenario.dispersion_dt0 is not None:
            dispersion = (scenario.dispersion_dt0, scenario.dispersion_chirp)
        report["witnesses"] = evaluate_witnesses(report["distributions"], scenario.k, dispersion)
        files += write_report(out, report)
        return RunResult(report, files, exit_code_for(report["witnesses"]))
    source = Path(counts_dir) if counts_dir is not None else out
    results = {}
    for name in scenario.distributions:
        counts = grids[name] if name in grids else read_count_grid(count_file(source, name))
        results[name] = analyze_counts(name, counts, scenario.response(name), scenario.mc_trials, scenario.workers)
        files += _write_hists(out, name, counts)
    report = build_report(results, scenario)
    files += write_report(out, report)
    return RunResult(report, files, exit_code_for(report["witnesses"]))


def analyze_external(
    counts_csv,
    responses,
    out=None,
    *,
    n_trials: int = 50,
    k: float = DEFAULT_K,
    dispersion: tuple[float, float] | None = None,
    workers: int = 1,
) -> dict:
    """Fit, deconvolve and test user-supplied count grids.

    ``counts_csv`` is one path or a sequence of paths in the count grid
    format; each grid's distribution follows from its axis kinds.
    ``responses`` maps distribution names to :class:`InstrumentResponse`
    (a single response is accepted for a single grid).  Monte-Carlo errors
    are seeded by each grid's recorded seed.  Writes histograms and the
    report into ``out`` when given.
    """
    paths = [counts_csv] if isinstance(counts_csv, (str, Path)) else list(counts_csv)
    grids = {}
    for p in paths:
        counts = read_count_grid(p)
        name = distribution_name(counts)
        if name in grids:
            raise ValueError(f"two grids describe the same distribution {name!r}")
        grids[name] = counts
    if isinstance(responses, InstrumentResponse):
        if len(grids) != 1:
            raise ValueError("a single response needs a single grid; pass a mapping by distribution name")
        responses = {next(iter(grids)): responses}
    results = {}
    for name, counts in grids.items():
        if name not in responses:
            raise ValueError(f"no instrument response given for {name!r}")
        results[name] = analyze_counts(name, counts, responses[name], n_trials, workers)
    report = build_report(results, None, k, dispersion)
    report["provenance"]["monte_carlo_trials"] = n_trials
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        for name, counts in grids.items():
            _write_hists(out, name, counts)
        write_report(out, report)
    return report


def dispersion_comparison(reference: dict, dispersed: dict, chirp: float, k: float = DEFAULT_K,
                          basis: str = "deconvolved") -> WitnessReport:
    """Test a dispersed run against the classical bound built from an undispersed one.

    Both arguments are reports holding a joint temporal intensity.  The
    reference width and its error set the bound and its uncertainty.
    """
    val, err = ("deconvolved", "error") if basis == "deconvolved" else ("raw", "raw_error")
    try:
        ref = reference["distributions"]["jti"]["entries"]["width_diff"]
        got = dispersed["distributions"]["jti"]["entries"]["width_diff"]
    except KeyError:
        raise ValueError("both reports need a joint temporal intensity with a difference width") from None
    bound = classical_dispersion_bound(ref[val], chirp, ref[err])
    return bound.compare(got[val], got[err], k)
