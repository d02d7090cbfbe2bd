"""Experiment driver: slowness sweeps, rate fits, verdicts, CSV/SVG output.

An experiment runs one catalogue example across a decreasing ladder of
slowness parameters, records how far the driven evolution strays from
the spectral-subspace-following one, fits a log-log slope, and issues a
verdict against the rate the example is expected to show:

* ``first_order`` -- deviations O(eps): fitted slope in [0.85, 1.3];
* ``vanishing``  -- deviations o(1): value at the smallest eps at most
  half the value at the largest, monotone up to one inversion;
* ``rate``       -- decay at least as fast as a predicted exponent,
  minus 0.1 of slack (the theory gives one-sided bounds, so steeper
  decay than predicted is a pass);
* ``non_adiabatic`` -- deviations must NOT decay (counterexamples):
  value at the smallest eps at least 0.9 of the value at the largest;
* any example whose deviations sit at the numerical floor (<= 1e-7
  throughout) is "trivially adiabatic" and the slope fit is skipped.

Each sweep point also records two hard invariants -- the intertwining
residual of the comparison flow (relative to the flow's operator norm
when that norm exceeds one, so that unstable counterexamples are judged
at their own scale) and the residual of the commutator-equation
construction -- which must hold regardless of verdict.

Reports are deterministic: repeated runs of the same config produce
byte-identical CSV files, and a parallel run (``jobs > 1``, process
pool, ordered reduction) produces the same bytes as a serial one.  For
that reason the ``runtime_ms`` CSV column is a deterministic cost model
-- total integrator substeps at a nominal rate of 1000 substeps per
millisecond -- not wall-clock time, which is exposed separately on the
in-memory records as ``wall_ms``.

Config files are TOML::

    [experiment]
    example = "gap_uniform"      # catalogue name
    eps_max = 1e-1               # geometric ladder, or epsilons = [...]
    eps_min = 1e-3
    eps_count = 8
    metric = "auto"              # auto | sup_norm | projected
    tol_step = 1e-9
    grid = 33                    # output grid points per propagation
    mollifier_n = 16             # gapless runs: mollifier index
    schedule = "quantitative"    # gapless runs: delta schedule variant
    jobs = 1
    force = false                # keep sweep points below floor_epsilon
    out_dir = "results"          # optional: per-eps deviation profiles

    [experiment.params]          # forwarded to the example builder
    d = 6

CSV schema: header ``example,epsilon,sup_dev,adiab_resid,comm_resid,
runtime_ms``, one row per sweep point, floats at 12 significant digits.
SVG output is a self-contained log-log figure: measured points, the
fitted line, and a dashed expected-rate guide.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import t as _student_t

from .commutator import delta_schedule, solve_gap_contour, solve_nogap
from .evolve import (
    deviation,
    propagate,
    propagate_intertwined,
    propagate_projected,
)
from .opfamily import example as build_example
from .spectral import Contour, compute_eta

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "run",
    "fit_slope",
    "emit",
    "plot_csv",
    "CSV_HEADER",
]

CSV_HEADER = ["example", "epsilon", "sup_dev", "adiab_resid",
              "comm_resid", "runtime_ms"]

#: Hard invariant ceilings; exceeding either flags the report as failed.
ADIABATIC_RESIDUAL_CAP = 1e-7
COMMUTATOR_RESIDUAL_CAP = 1e-8

#: Deviations at or below this across the whole sweep are "trivially
#: adiabatic": there is nothing left to fit a rate to.
TRIVIAL_DEVIATION = 1e-7

#: Deterministic cost model for the runtime_ms column.
SUBSTEPS_PER_MS = 1000.0

_FIRST_ORDER_BAND = (0.85, 1.3)
_VANISHING_FACTOR = 0.5
_NON_DECAY_FACTOR = 0.9
_RATE_SLACK = 0.1


def _fmt(value: float) -> str:
    return "%.12g" % float(value)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Validated description of one sweep; see the module docstring for
    the TOML surface that maps onto these fields."""

    example: str
    params: dict = field(default_factory=dict)
    epsilons: Optional[Sequence[float]] = None
    metric: str = "auto"
    tol_step: float = 1e-9
    grid: int = 33
    mollifier_n: int = 16
    schedule: str = "quantitative"
    jobs: int = 1
    force: bool = False
    out_dir: Optional[str] = None

    def __post_init__(self):
        if self.epsilons is None:
            self.epsilons = tuple(np.geomspace(1e-1, 1e-3, 8))
        eps = tuple(float(e) for e in self.epsilons)
        if len(eps) == 0:
            raise ValueError("the eps ladder must not be empty")
        if any(not 0.0 < e < 1.0 for e in eps):
            raise ValueError("every eps must lie in (0, 1)")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("the eps ladder must be strictly decreasing")
        self.epsilons = eps
        if self.metric not in ("auto", "sup_norm", "projected"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.schedule not in ("quantitative", "qualitative"):
            raise ValueError(f"unknown schedule variant {self.schedule!r}")
        if self.grid < 9:
            raise ValueError("need at least 9 output grid points")
        if self.tol_step <= 0:
            raise ValueError("tol_step must be positive")
        if self.mollifier_n < 1:
            raise ValueError("mollifier_n must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        try:
            import tomllib  # Python >= 3.11
        except ModuleNotFoundError:  # pragma: no cover - version dependent
            import tomli as tomllib
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        table = data.get("experiment")
        if not isinstance(table, dict):
            raise ValueError("config must contain an [experiment] table")
        if "example" not in table:
            raise ValueError("config must name an example")
        known = {
            "example", "params", "epsilons", "eps_max", "eps_min",
            "eps_count", "metric", "tol_step", "grid", "mollifier_n",
            "schedule", "jobs", "force", "out_dir",
        }
        unknown = sorted(set(table) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        if "epsilons" in table:
            eps = tuple(float(e) for e in table["epsilons"])
        elif any(k in table for k in ("eps_max", "eps_min", "eps_count")):
            eps = tuple(
                np.geomspace(
                    float(table.get("eps_max", 1e-1)),
                    float(table.get("eps_min", 1e-3)),
                    int(table.get("eps_count", 8)),
                )
            )
        else:
            eps = None
        return cls(
            example=str(table["example"]),
            params=dict(table.get("params", {})),
            epsilons=eps,
            metric=str(table.get("metric", "auto")),
            tol_step=float(table.get("tol_step", 1e-9)),
            grid=int(table.get("grid", 33)),
            mollifier_n=int(table.get("mollifier_n", 16)),
            schedule=str(table.get("schedule", "quantitative")),
            jobs=int(table.get("jobs", 1)),
            force=bool(table.get("force", False)),
            out_dir=table.get("out_dir"),
        )


# ---------------------------------------------------------------------------
# per-example recipes
# ---------------------------------------------------------------------------


def _recipe(name: str, fam, curve):
    """How to measure a catalogue entry: comparison flow, deviation
    metric, commutator construction, probe times, expected verdict."""
    width = fam.t_hi - fam.t_lo
    probes = np.linspace(
        fam.t_lo + width / 16.0, fam.t_hi - width / 16.0, 9
    )
    base = {
        "flavor": "intertwined",
        "metric": "sup_norm",
        "comm": "contour",
        "radius": 0.45,
        "probes": probes,
        "verdict": "first_order",
        "predicted": 1.0,
    }
    if name in ("gap_uniform",):
        base["radius"] = 0.45 * float(fam.metadata.get("gap", 1.0))
    elif name == "gap_crossing":
        # the tracked curve meets another at mid-window: shrink the
        # contour with the gap and keep probes away from the touch point
        mid = 0.5 * (fam.t_lo + fam.t_hi)
        base["radius"] = ("crossing", mid, 1.0)
        base["probes"] = probes[np.abs(probes - mid) >= width / 8.0]
        base["verdict"] = "vanishing"
        base["predicted"] = None
    elif name in ("nogap_dense_rationals", "nogap_shift"):
        base.update(
            flavor="projected", metric="projected", comm="nogap",
            verdict="vanishing", predicted=None,
        )
    elif name in ("hölder_density", "holder_density"):
        alpha = float(fam.metadata.get("alpha", 1.0))
        base.update(
            flavor="projected", metric="projected", comm="nogap",
            verdict="rate", predicted=alpha / (2.0 * (1.0 + alpha)),
        )
    elif name == "rotation_counterexample":
        # the tracked growth rate t meets the resting rate 0 at the left
        # endpoint, so the separating circle must shrink towards it
        base["radius"] = ("crossing", fam.t_lo, 0.5)
        base["probes"] = probes[probes - fam.t_lo >= width / 8.0]
        base["verdict"] = "non_adiabatic"
        base["predicted"] = None
    elif name == "multiplication_diag":
        base["radius"] = float(curve.ray_radius)
        base["verdict"] = "first_order"  # resolved to trivial by the data
        base["predicted"] = None
    return base


def _sweep_point(payload: dict) -> dict:
    """One sweep point, rebuilt from primitives so it can run in a
    worker process; returns a plain dict of floats and strings."""
    fam, curve, proj = build_example(payload["example"], **payload["params"])
    recipe = _recipe(payload["example"], fam, curve)
    metric = payload["metric"]
    if metric == "auto":
        metric = recipe["metric"]
    eps = payload["eps"]
    tol_step = payload["tol_step"]
    grid = payload["grid"]
    notes = []

    t0 = time.perf_counter()
    u = propagate(fam, eps, grid=grid, tol_step=tol_step)
    if recipe["flavor"] == "projected":
        v = propagate_projected(fam, proj, eps, grid=grid, tol_step=tol_step)
    else:
        v = propagate_intertwined(fam, proj, eps, grid=grid, tol_step=tol_step)
    p_start = proj.value(fam.t_lo)
    dev = deviation(
        u, v, metric=metric, p0=p_start if metric == "projected" else None
    )

    # intertwining residual of the comparison flow, relative to the
    # flow's size: unstable counterexamples grow without bound, and
    # only the residual at the flow's own scale is meaningful there
    # (for norm-bounded flows this is the plain residual)
    p_path = proj.sample(v.t_grid)
    resid_path = np.linalg.norm(
        p_path @ v.accumulated - v.accumulated @ p_start,
        ord=2, axis=(1, 2),
    )
    flow_path = np.linalg.norm(v.accumulated, ord=2, axis=(1, 2))
    adiab = float((resid_path / np.maximum(1.0, flow_path)).max())

    # commutator-equation residual
    if recipe["comm"] == "nogap":
        m0 = int(curve.order)
        eta_cache: dict = {}

        def eta(delta: float) -> float:
            if delta not in eta_cache:
                eta_cache[delta] = max(compute_eta(fam, curve, proj, delta))
            return eta_cache[delta]

        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            deltas = delta_schedule(
                eps, m0, eta, variant=payload["schedule"],
                delta0=float(curve.ray_radius),
            )
        notes.extend(str(w.message) for w in caught)
        sol = solve_nogap(fam, proj, curve, payload["mollifier_n"], deltas)
    else:
        radius = recipe["radius"]
        if isinstance(radius, tuple):
            _, mid, factor = radius
            contour = lambda t: Contour(
                center=curve.eigenvalue(t), radius=factor * abs(t - mid)
            )
        else:
            contour = lambda t: Contour(
                center=curve.eigenvalue(t), radius=radius
            )
        sol = solve_gap_contour(fam, proj, contour)
    comm = max(sol.residual_norm(t) for t in recipe["probes"])

    wall_ms = (time.perf_counter() - t0) * 1000.0
    substeps = int(u.substeps) + int(v.substeps)

    profile_path = ""
    if payload["out_dir"]:
        pdir = os.path.join(payload["out_dir"], "profiles")
        os.makedirs(pdir, exist_ok=True)
        profile_path = os.path.join(
            pdir, "%s-%02d.csv" % (payload["example"], payload["index"])
        )
        with open(profile_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "deviation"])
            for t, val in zip(dev.t_grid, dev.values):
                writer.writerow([_fmt(t), _fmt(val)])

    return {
        "epsilon": float(eps),
        "sup_dev": float(dev.sup),
        "adiab_resid": adiab,
        "comm_resid": float(comm),
        "runtime_ms": substeps / SUBSTEPS_PER_MS,
        "wall_ms": wall_ms,
        "substeps": substeps,
        "profile_path": profile_path,
        "notes": notes,
    }


# ---------------------------------------------------------------------------
# slope fits and verdicts
# ---------------------------------------------------------------------------


def fit_slope(pairs) -> tuple[float, float, float]:
    """Least squares on (log eps, log value).

    Returns ``(slope, intercept, interval)`` where ``interval`` is the
    half-width of the 95% confidence interval for the slope from the
    standard regression formulas.  Requires at least 4 pairs and
    strictly positive values.
    """
    pts = [(float(e), float(v)) for e, v in pairs]
    if len(pts) < 4:
        raise ValueError("slope fit needs at least 4 points")
    if any(
        e <= 0 or v <= 0 or not (math.isfinite(e) and math.isfinite(v))
        for e, v in pts
    ):
        raise ValueError("slope fit needs positive finite eps and values")
    x = np.log([e for e, _ in pts])
    y = np.log([v for _, v in pts])
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise ValueError("slope fit needs at least two distinct eps")
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    dof = len(pts) - 2
    se = math.sqrt(float(resid @ resid) / dof / sxx)
    half = float(_student_t.ppf(0.975, dof)) * se
    return slope, intercept, half


def _monotone_up_to_one_inversion(values) -> bool:
    inversions = sum(1 for a, b in zip(values, values[1:]) if b > a)
    return inversions <= 1


def _verdict(kind, records, slope, predicted):
    """(verdict text, verdict_ok) for the expected-behavior kind."""
    devs = [r["sup_dev"] for r in records]
    if kind == "non_adiabatic":
        ok = devs[-1] >= _NON_DECAY_FACTOR * devs[0]
        text = (
            "non-adiabatic: deviations do not decay"
            if ok
            else "unexpected decay for a stability counterexample"
        )
        return text, ok
    if all(d <= TRIVIAL_DEVIATION for d in devs):
        return "trivially adiabatic: deviations at the numerical floor", True
    if kind == "first_order":
        if slope is None:
            return "slope unavailable (fewer than 4 usable points)", False
        lo, hi = _FIRST_ORDER_BAND
        ok = lo <= slope <= hi
        text = (
            f"first-order adiabatic: slope {slope:.3f} within [{lo}, {hi}]"
            if ok
            else f"rate mismatch: slope {slope:.3f} outside [{lo}, {hi}]"
        )
        return text, ok
    if kind == "vanishing":
        shrunk = devs[-1] <= _VANISHING_FACTOR * devs[0]
        steady = _monotone_up_to_one_inversion(devs)
        ok = shrunk and steady
        text = (
            "adiabatic: deviations vanish with eps"
            if ok
            else "deviations fail to vanish "
            f"(shrunk {devs[-1] / devs[0]:.3f}x, monotone {steady})"
        )
        return text, ok
    if kind == "rate":
        if slope is None:
            return "slope unavailable (fewer than 4 usable points)", False
        ok = slope >= predicted - _RATE_SLACK
        text = (
            f"rate confirmed: slope {slope:.3f} >= predicted "
            f"{predicted:.3f} - {_RATE_SLACK}"
            if ok
            else f"rate too shallow: slope {slope:.3f} < predicted "
            f"{predicted:.3f} - {_RATE_SLACK}"
        )
        return text, ok
    raise ValueError(f"unknown verdict kind {kind!r}")


# ---------------------------------------------------------------------------
# the driver
# ---------------------------------------------------------------------------


@dataclass
class ExperimentReport:
    """Everything a sweep produced; ``emit`` serializes it."""

    example: str
    params: dict
    metric: str
    records: list
    slope: Optional[float]
    intercept: Optional[float]
    interval: Optional[float]
    predicted: Optional[float]
    verdict: str
    verdict_ok: bool
    invariants_ok: bool
    annotations: list

    @property
    def passed(self) -> bool:
        return self.verdict_ok and self.invariants_ok


def run(config: ExperimentConfig) -> ExperimentReport:
    """Execute the sweep described by ``config``.

    Deterministic: identical configs produce identical reports (and
    byte-identical CSV files), whether run serially or on a process
    pool.  Sweep points below the example's truncation floor are
    dropped with an annotation unless ``force`` is set.  Integrator
    stiffness errors propagate to the caller; invariant violations do
    not raise -- they flag the report instead.
    """
    fam, curve, proj = build_example(config.example, **config.params)
    annotations = []

    floor = fam.metadata.get("floor_epsilon") or 0.0
    eps_ladder = list(config.epsilons)
    if floor > 0.0 and not config.force:
        kept = [e for e in eps_ladder if e >= floor * (1.0 - 1e-12)]
        dropped = len(eps_ladder) - len(kept)
        if dropped:
            annotations.append(
                f"sweep restricted to eps >= floor_epsilon = {floor:.6g}; "
                f"dropped {dropped} point(s) (set force to keep them)"
            )
        eps_ladder = kept
    if not eps_ladder:
        raise ValueError(
            f"no sweep points at or above floor_epsilon = {floor:.6g}; "
            f"lower the ladder or set force"
        )

    payloads = [
        {
            "example": config.example,
            "params": config.params,
            "eps": eps,
            "tol_step": config.tol_step,
            "grid": config.grid,
            "metric": config.metric,
            "mollifier_n": config.mollifier_n,
            "schedule": config.schedule,
            "out_dir": config.out_dir,
            "index": i,
        }
        for i, eps in enumerate(eps_ladder)
    ]
    if config.jobs == 1 or len(payloads) == 1:
        records = [_sweep_point(p) for p in payloads]
    else:
        workers = min(config.jobs, len(payloads))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_sweep_point, payloads))

    for rec in records:
        annotations.extend(n for n in rec["notes"] if n not in annotations)

    recipe = _recipe(config.example, fam, curve)
    trivial = all(r["sup_dev"] <= TRIVIAL_DEVIATION for r in records)
    slope = intercept = interval = None
    if trivial:
        annotations.append("slope fit skipped: deviations at the numerical floor")
    elif len(records) >= 4 and all(
        r["sup_dev"] > 0 and math.isfinite(r["sup_dev"]) for r in records
    ):
        slope, intercept, interval = fit_slope(
            [(r["epsilon"], r["sup_dev"]) for r in records]
        )
    else:
        annotations.append(
            "slope fit skipped: need >= 4 points with positive deviations"
        )

    verdict, verdict_ok = _verdict(
        recipe["verdict"], records, slope, recipe["predicted"]
    )
    invariants_ok = all(
        r["adiab_resid"] <= ADIABATIC_RESIDUAL_CAP
        and r["comm_resid"] <= COMMUTATOR_RESIDUAL_CAP
        for r in records
    )
    if not invariants_ok:
        annotations.append(
            "invariant violation: an intertwining or commutator residual "
            "exceeded its hard ceiling"
        )

    return ExperimentReport(
        example=config.example,
        params=dict(config.params),
        metric=config.metric if config.metric != "auto" else recipe["metric"],
        records=records,
        slope=slope,
        intercept=intercept,
        interval=interval,
        predicted=recipe["predicted"],
        verdict=verdict,
        verdict_ok=verdict_ok,
        invariants_ok=invariants_ok,
        annotations=annotations,
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def emit(report: ExperimentReport, format: str, path) -> None:
    """Write the report as ``csv`` or ``svg``; no file on error."""
    if not report.records:
        raise ValueError("report has no sweep points; nothing to emit")
    if format == "csv":
        text = _csv_text(report)
    elif format == "svg":
        text = _svg_text(
            example=report.example,
            metric=report.metric,
            points=[(r["epsilon"], r["sup_dev"]) for r in report.records],
            fit=(report.slope, report.intercept)
            if report.slope is not None
            else None,
            expected=report.predicted,
        )
    else:
        raise ValueError(f"unknown emit format {format!r}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)


def _csv_text(report: ExperimentReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in report.records:
        writer.writerow(
            [
                report.example,
                _fmt(r["epsilon"]),
                _fmt(r["sup_dev"]),
                _fmt(r["adiab_resid"]),
                _fmt(r["comm_resid"]),
                _fmt(r["runtime_ms"]),
            ]
        )
    return buf.getvalue()


# catalogue-default exponents for the guide line when plotting a bare CSV
_DEFAULT_GUIDES = {
    "gap_uniform": 1.0,
    "hölder_density": 0.25,
    "holder_density": 0.25,
    "multiplication_diag": None,
    "gap_crossing": None,
    "nogap_dense_rationals": None,
    "nogap_shift": None,
    "rotation_counterexample": None,
}


def plot_csv(csv_path, svg_path) -> None:
    """Re-plot a previously emitted report CSV as the log-log figure."""
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CSV_HEADER:
        raise ValueError(f"{csv_path} is not a sweep report CSV")
    if len(rows) < 2:
        raise ValueError(f"{csv_path} has no data rows")
    example = rows[1][0]
    points = [(float(r[1]), float(r[2])) for r in rows[1:]]
    fit = None
    if len(points) >= 4 and all(v > 0 for _, v in points):
        slope, intercept, _ = fit_slope(points)
        fit = (slope, intercept)
    text = _svg_text(
        example=example,
        metric="sup_dev",
        points=points,
        fit=fit,
        expected=_DEFAULT_GUIDES.get(example),
    )
    with open(svg_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# SVG rendering (self-contained, no external assets)
# ---------------------------------------------------------------------------

_W, _H = 640.0, 480.0
_ML, _MR, _MT, _MB = 70.0, 20.0, 42.0, 48.0


def _f(value: float) -> str:
    return "%.6g" % float(value)


def _svg_text(example, metric, points, fit, expected) -> str:
    if not points:
        raise ValueError("nothing to plot")
    xs = [math.log10(e) for e, _ in points]
    ys = [math.log10(max(v, 1e-16)) for _, v in points]
    x_lo, x_hi = min(xs) - 0.15, max(xs) + 0.15
    y_lo, y_hi = min(ys) - 0.25, max(ys) + 0.25
    if y_hi - y_lo < 0.5:
        pad = 0.5 * (0.5 - (y_hi - y_lo))
        y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x):
        return _ML + (x - x_lo) / (x_hi - x_lo) * (_W - _ML - _MR)

    def py(y):
        return _H - _MB - (y - y_lo) / (y_hi - y_lo) * (_H - _MT - _MB)

    parts = [
        '<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{_f(_W)}" height="{_f(_H)}" '
        f'viewBox="0 0 {_f(_W)} {_f(_H)}">',
        '<rect width="100%" height="100%" fill="#ffffff"/>',
        f'<text x="{_f(_W / 2)}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{example}: deviation '
        "vs slowness (log-log)</text>",
        f'<rect x="{_f(_ML)}" y="{_f(_MT)}" width="{_f(_W - _ML - _MR)}" '
        f'height="{_f(_H - _MT - _MB)}" fill="none" stroke="#404040"/>',
    ]

    # decade ticks
    for k in range(math.ceil(x_lo), math.floor(x_hi) + 1):
        x = px(k)
        parts.append(
            f'<line x1="{_f(x)}" y1="{_f(_H - _MB)}" x2="{_f(x)}" '
            f'y2="{_f(_H - _MB + 6)}" stroke="#404040"/>'
        )
        parts.append(
            f'<text x="{_f(x)}" y="{_f(_H - _MB + 20)}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">1e{k}</text>'
        )
    for k in range(math.ceil(y_lo), math.floor(y_hi) + 1):
        y = py(k)
        parts.append(
            f'<line x1="{_f(_ML - 6)}" y1="{_f(y)}" x2="{_f(_ML)}" '
            f'y2="{_f(y)}" stroke="#404040"/>'
        )
        parts.append(
            f'<text x="{_f(_ML - 10)}" y="{_f(y + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="12">1e{k}</text>'
        )
    parts.append(
        f'<text x="{_f((_ML + _W - _MR) / 2)}" y="{_f(_H - 8)}" '
        'text-anchor="middle" font-family="sans-serif" font-size="13">'
        "slowness eps</text>"
    )
    parts.append(
        f'<text x="16" y="{_f((_MT + _H - _MB) / 2)}" text-anchor="middle" '
        'font-family="sans-serif" font-size="13" transform="rotate(-90 16 '
        f'{_f((_MT + _H - _MB) / 2)})">{metric}</text>'
    )

    # expected-rate guide through the largest-eps point (dashed)
    legend = []
    if expected is not None:
        e0, v0 = points[0]
        y0 = math.log10(max(v0, 1e-16))
        ya = y0 + expected * (x_lo - math.log10(e0))
        yb = y0 + expected * (x_hi - math.log10(e0))
        parts.append(
            f'<path d="M {_f(px(x_lo))} {_f(py(ya))} L {_f(px(x_hi))} '
            f'{_f(py(yb))}" stroke="#b2451f" stroke-width="1.5" '
            'stroke-dasharray="7 5" fill="none"/>'
        )
        legend.append(("#b2451f", f"expected slope {_f(expected)}", True))

    # fitted line (solid)
    if fit is not None:
        slope, intercept = fit
        ln10 = math.log(10.0)
        ya = (intercept + slope * x_lo * ln10) / ln10
        yb = (intercept + slope * x_hi * ln10) / ln10
        parts.append(
            f'<path d="M {_f(px(x_lo))} {_f(py(ya))} L {_f(px(x_hi))} '
            f'{_f(py(yb))}" stroke="#1f6fb2" stroke-width="1.5" fill="none"/>'
        )
        legend.append(("#1f6fb2", f"fitted slope {_f(slope)}", False))
    else:
        legend.append(("#1f6fb2", "slope fit skipped", False))

    for x, y in zip(xs, ys):
        parts.append(
            f'<circle cx="{_f(px(x))}" cy="{_f(py(y))}" r="4" '
            'fill="#1f6fb2" stroke="#123f66"/>'
        )
    legend.insert(0, ("#1f6fb2", "measured sup deviation", None))

    ly = _MT + 16
    for color, label, dashed in legend:
        if dashed is None:
            parts.append(
                f'<circle cx="{_f(_ML + 16)}" cy="{_f(ly - 4)}" r="4" '
                f'fill="{color}" stroke="#123f66"/>'
            )
        else:
            dash = ' stroke-dasharray="7 5"' if dashed else ""
            parts.append(
                f'<line x1="{_f(_ML + 8)}" y1="{_f(ly - 4)}" '
                f'x2="{_f(_ML + 24)}" y2="{_f(ly - 4)}" stroke="{color}" '
                f'stroke-width="1.5"{dash}/>'
            )
        parts.append(
            f'<text x="{_f(_ML + 30)}" y="{_f(ly)}" font-family="sans-serif" '
            f'font-size="12">{label}</text>'
        )
        ly += 16

    parts.append("</svg>")
    return "\n".join(parts) + "\n"
