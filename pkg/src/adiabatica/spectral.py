"""Spectral projections, stability probes, and resolvent-ray diagnostics.

Two constructions of the spectral projection live here: the contour
integral of the resolvent over a circle enclosing part of the spectrum
(`riesz_projection`) and the generalized-eigenspace projection for a
single eigenvalue obtained from an ordered Schur form plus one Sylvester
solve (`weakly_associated_projection`).  For matrices they agree whenever
the contour encloses exactly the chosen eigenvalue; tests enforce that.

The remaining utilities quantify the hypotheses the evolution theory
feeds on: contraction/stability checks (`check_stability`), the fitted
constant in the ray-resolvent estimate ``||(lam + delta e^{i theta} -
A)^-1 (1 - P)|| <= M0 / delta`` (`probe_resolvent_estimate`), the
ray-resolvent integrals eta+/eta- entering the quantitative error bounds
(`compute_eta`), and per-time gap/crossing diagnostics with CSV output
(`gap_diagnostics`).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .matrixkit import (
    CMatrix,
    as_cmatrix,
    opnorm,
    ordered_schur,
)
from .opfamily import OperatorFamily, ProjectionFamily, SpectralCurve

__all__ = [
    "Contour",
    "SpectralAnalysis",
    "StabilityReport",
    "ResolventProbe",
    "ContourError",
    "ClusterAmbiguityError",
    "RayLeavesResolventError",
    "riesz_projection",
    "weakly_associated_projection",
    "check_stability",
    "probe_resolvent_estimate",
    "compute_eta",
    "gap_diagnostics",
]

RIESZ_NODE_CAP = 4096
RIESZ_STABLE_TOL = 1e-12
PROJECTION_TOL = 1e-10
TRACE_TOL = 1e-6


class ContourError(RuntimeError):
    """The integration circle touches the spectrum or quadrature stalls."""


class ClusterAmbiguityError(RuntimeError):
    """Another eigenvalue sits too close to the requested one to separate."""

    def __init__(self, lam, offender, radius):
        self.lam, self.offender, self.radius = lam, offender, radius
        super().__init__(
            f"eigenvalue cluster around {lam} is ambiguous: {offender} lies "
            f"within twice the cluster radius {radius:g}"
        )


class RayLeavesResolventError(RuntimeError):
    """A probe point on the spectral ray failed to be in the resolvent set."""

    def __init__(self, t, delta, sigma_min):
        self.t, self.delta, self.sigma_min = t, delta, sigma_min
        super().__init__(
            f"ray point at t={t:g}, delta={delta:g} is numerically in the "
            f"spectrum (sigma_min={sigma_min:.3e})"
        )


@dataclass(frozen=True)
class Contour:
    """A circle in the complex plane with a starting quadrature resolution."""

    center: complex
    radius: float
    nodes: int = 16

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.nodes < 4:
            raise ValueError("need at least 4 quadrature nodes")

    def points(self, n: Optional[int] = None) -> np.ndarray:
        n = n or self.nodes
        phi = 2.0 * math.pi * np.arange(n) / n
        return self.center + self.radius * np.exp(1j * phi)


def _resolvents(a: CMatrix, zs: np.ndarray) -> np.ndarray:
    """Stack of (z - A)^-1 over the 1-D array `zs`."""
    d = a.shape[0]
    shifted = zs[:, None, None] * np.eye(d) - a[None]
    return np.linalg.solve(shifted, np.broadcast_to(np.eye(d, dtype=complex),
                                                    (len(zs), d, d)))


def riesz_projection(a: CMatrix, contour: Contour) -> CMatrix:
    """Spectral projection by trapezoidal contour integration of the resolvent.

    The node count doubles until the projector moves by less than 1e-12,
    up to 4096 nodes.  Trapezoid sums on circles converge exponentially
    for analytic integrands, so a handful of doublings suffices unless an
    eigenvalue crowds the circle -- which raises `ContourError`.
    """
    a = as_cmatrix(a, square=True)
    scale = max(opnorm(a), 1.0)
    prev = None
    n = contour.nodes
    while n <= RIESZ_NODE_CAP:
        zs = contour.points(n)
        if n <= 512:
            sigma = np.linalg.svd(zs[:, None, None] * np.eye(a.shape[0]) - a,
                                  compute_uv=False)[:, -1]
            if sigma.min() <= 1e-10 * scale:
                raise ContourError(
                    f"contour touches the spectrum: sigma_min={sigma.min():.3e} "
                    f"at node {int(sigma.argmin())} of {n}"
                )
        res = _resolvents(a, zs)
        phases = (zs - contour.center) / n
        proj = np.tensordot(phases, res, axes=(0, 0))
        if prev is not None and opnorm(proj - prev) <= RIESZ_STABLE_TOL * max(
            1.0, opnorm(proj)
        ):
            return proj
        prev = proj
        n *= 2
    raise ContourError(
        f"quadrature did not stabilise below {RIESZ_STABLE_TOL:g} within "
        f"{RIESZ_NODE_CAP} nodes"
    )


def _nilpotency_order(block: CMatrix, cap: int, scale: float) -> int:
    """Smallest power at which the rank of `block`^k stagnates.

    Works on the normalised block with an absolute singular-value cutoff:
    a relative cutoff would count roundoff noise as full rank once the
    true power vanishes, and the eigenvalue scatter of defective clusters
    (radius ~ eps^(1/m)) would never let the rank settle.
    """
    nrm = opnorm(block)
    if nrm <= 1e-12 * scale:
        return 1
    n = block / nrm

    def stable_rank(x):
        return int(np.sum(np.linalg.svd(x, compute_uv=False) > 1e-10))

    prev = stable_rank(n)
    if prev == 0:
        return 1
    power = n
    m = 1
    while prev > 0 and m < cap:
        power = power @ n
        r = stable_rank(power)
        if r == prev:
            break
        prev = r
        m += 1
    return m


def weakly_associated_projection(
    a: CMatrix, lam: complex, cluster_radius: Optional[float] = None
) -> tuple[CMatrix, int]:
    """Projection onto the generalized eigenspace of `lam`, with its order.

    Selects all eigenvalues within `cluster_radius` of `lam` (default
    1e-8 * ||A||) in an ordered Schur form, decouples the two diagonal
    blocks with one Sylvester solve, and reports the smallest power at
    which the rank of (A - lam)^k stagnates -- the nilpotency order of
    (A - lam) on the range of the projection.

    Raises `ClusterAmbiguityError` when an unselected eigenvalue lies
    within twice the cluster radius: the cluster boundary would then be a
    coin flip, and silent merging is worse than an error.
    """
    a = as_cmatrix(a, square=True)
    d = a.shape[0]
    scale = max(opnorm(a), 1.0)
    if cluster_radius is None:
        cluster_radius = 1e-8 * scale
    lam = complex(lam)

    eigs = np.linalg.eigvals(a)
    dist = np.abs(eigs - lam)
    selected = dist <= cluster_radius
    if not selected.any():
        raise ValueError(
            f"{lam} is not an eigenvalue of A within radius {cluster_radius:g} "
            f"(closest eigenvalue at distance {dist.min():.3e})"
        )
    near_boundary = (~selected) & (dist <= 2.0 * cluster_radius)
    if near_boundary.any():
        raise ClusterAmbiguityError(lam, eigs[near_boundary][0], cluster_radius)

    if selected.all():
        proj = np.eye(d, dtype=complex)
        block = a - lam * np.eye(d)
    else:
        form = ordered_schur(a, lambda z: abs(z - lam) <= cluster_radius)
        k = form.selected_count
        t11 = form.t[:k, :k]
        t12 = form.t[:k, k:]
        t22 = form.t[k:, k:]
        # block-diagonalise [[T11, T12], [0, T22]]: T11 Y - Y T22 = T12
        y = scipy.linalg.solve_sylvester(t11, -t22, t12)
        core = np.zeros((d, d), dtype=complex)
        core[:k, :k] = np.eye(k)
        core[:k, k:] = y
        proj = form.q @ core @ form.q.conj().T
        block = t11 - lam * np.eye(k)

    return proj, _nilpotency_order(block, d, scale)


# ---------------------------------------------------------------------------
# stability probes
# ---------------------------------------------------------------------------


@dataclass
class StabilityReport:
    kind: str
    passed: bool
    value: float
    details: dict = field(default_factory=dict)


def check_stability(
    fam: OperatorFamily,
    kind: str = "contraction",
    grid: Optional[np.ndarray] = None,
) -> StabilityReport:
    """Probe the uniform-boundedness hypothesis of the slow evolution.

    kind="contraction": reports the largest eigenvalue of the Hermitian
    part (A(t) + A(t)*)/2 over the probe grid (the logarithmic norm of
    A(t)); nonpositive up to 1e-10 means every frozen-time semigroup is a
    contraction and products of them stay bounded by 1.

    kind="M0": for families built from a scalar curve plus a nilpotent
    part (exposed in ``metadata['block_structure']``), reports
    r0 = inf over alpha(t) > 0 of (-Re lam(t)) / alpha(t); positivity of
    r0 is exactly the boundedness criterion for such blocks.  With
    alpha identically 0 the criterion degenerates to Re lam <= 0.
    """
    if grid is None:
        grid = np.linspace(fam.t_lo, fam.t_hi, 101)
    if kind == "contraction":
        samples = fam.sample(grid)
        herm = (samples + np.conj(np.swapaxes(samples, -1, -2))) / 2.0
        abscissa = float(np.linalg.eigvalsh(herm)[:, -1].max())
        return StabilityReport(
            kind="contraction",
            passed=abscissa <= 1e-10,
            value=abscissa,
            details={"grid_points": len(grid)},
        )
    if kind == "M0":
        structure = fam.metadata.get("block_structure")
        if not structure:
            raise ValueError(
                "family does not expose metadata['block_structure'] with "
                "'eigenvalue' and 'nilpotent_amplitude' samplers"
            )
        lam = np.asarray(structure["eigenvalue"](grid), dtype=complex)
        alpha = np.asarray(structure["nilpotent_amplitude"](grid), dtype=float)
        neg_re = -lam.real
        active = alpha > 0.0
        if not active.any():
            ok = bool(np.all(neg_re >= -1e-10))
            return StabilityReport(
                kind="M0",
                passed=ok,
                value=math.inf,
                details={"max_re_lambda": float(-neg_re.min())},
            )
        r0 = float(np.min(neg_re[active] / alpha[active]))
        return StabilityReport(
            kind="M0",
            passed=r0 > 0.0,
            value=r0,
            details={"active_points": int(active.sum())},
        )
    raise ValueError(f"unknown stability check kind {kind!r}")


# ---------------------------------------------------------------------------
# resolvent-ray probes
# ---------------------------------------------------------------------------


@dataclass
class ResolventProbe:
    """Empirical constants for the ray-resolvent estimate."""

    t_grid: np.ndarray
    delta_grid: np.ndarray
    sup_table: np.ndarray  # delta * ||(ray - A)^-1 (1-P)||, shape (nt, nd)
    m0: float
    violations: list  # (t, delta, value) exceeding the assumed bound by >5%
    vector_decay: np.ndarray  # max_t delta ||(ray-A)^-1 x_t||, per delta


def _ray_reduced_resolvent_norms(a, p, z, scale):
    """delta-free norms ||(z - A)^-1 (1 - P)|| for one time slice."""
    d = a.shape[0]
    shifted = z * np.eye(d) - a
    sigma_min = np.linalg.svd(shifted, compute_uv=False)[-1]
    if sigma_min <= 1e-13 * scale:
        return None, sigma_min
    comp = np.eye(d) - p
    return np.linalg.solve(shifted, comp), sigma_min


def probe_resolvent_estimate(
    fam: OperatorFamily,
    curve: SpectralCurve,
    proj: ProjectionFamily,
    delta_grid: Sequence[float],
    t_grid: Optional[np.ndarray] = None,
    assumed_m0: Optional[float] = None,
) -> ResolventProbe:
    """Fit the constant M0 in the ray-resolvent estimate, empirically.

    For every probe pair (t, delta) computes delta * ||(lam(t) +
    delta e^{i theta(t)} - A(t))^-1 (1 - P(t))||; M0 is the maximum.  When
    `assumed_m0` is given, probe points exceeding it by more than 5% are
    collected in `violations` (the estimate is a hypothesis to be
    checked, not an axiom).  `vector_decay` tracks the same quantity applied to the
    normalised image of P'(t)P(t), whose decay as delta drops is the
    vector-level statement feeding the gapless theory.
    """
    delta_grid = np.asarray(sorted(delta_grid), dtype=float)
    if delta_grid.size == 0:
        raise ValueError("empty delta grid")
    if delta_grid.min() <= 0.0 or delta_grid.max() > curve.ray_radius + 1e-15:
        raise ValueError(
            f"delta grid must lie in (0, {curve.ray_radius:g}], got "
            f"[{delta_grid.min():g}, {delta_grid.max():g}]"
        )
    if t_grid is None:
        t_grid = np.linspace(fam.t_lo, fam.t_hi, 33)
    t_grid = np.asarray(t_grid, dtype=float)

    a_stack = fam.sample(t_grid)
    p_stack = proj.sample(t_grid)
    dp_stack = proj.d_sample(t_grid)
    scale = max(float(np.linalg.norm(a_stack, ord=2, axis=(1, 2)).max()), 1.0)
    lam = curve.lam_sample(t_grid)
    theta = np.array([curve.ray_angle(t) for t in t_grid])

    rng = np.random.default_rng(2024)
    v0 = rng.standard_normal(fam.dim) + 1j * rng.standard_normal(fam.dim)
    v0 /= np.linalg.norm(v0)

    nt, nd = len(t_grid), len(delta_grid)
    sup_table = np.zeros((nt, nd))
    vec_table = np.zeros((nt, nd))
    for i in range(nt):
        x = dp_stack[i] @ p_stack[i] @ v0
        xn = np.linalg.norm(x)
        if xn > 1e-14:
            x = x / xn
        for j, delta in enumerate(delta_grid):
            z = lam[i] + delta * np.exp(1j * theta[i])
            rbar, sigma_min = _ray_reduced_resolvent_norms(
                a_stack[i], p_stack[i], z, scale
            )
            if rbar is None:
                raise RayLeavesResolventError(t_grid[i], delta, sigma_min)
            sup_table[i, j] = delta * opnorm(rbar)
            vec_table[i, j] = delta * np.linalg.norm(rbar @ x)

    m0 = float(sup_table.max())
    bound = assumed_m0 if assumed_m0 is not None else m0
    violations = [
        (float(t_grid[i]), float(delta_grid[j]), float(sup_table[i, j]))
        for i in range(nt)
        for j in range(nd)
        if sup_table[i, j] > 1.05 * bound
    ]
    return ResolventProbe(
        t_grid=t_grid,
        delta_grid=delta_grid,
        sup_table=sup_table,
        m0=m0,
        violations=violations,
        vector_decay=vec_table.max(axis=0),
    )


def compute_eta(
    fam: OperatorFamily,
    curve: SpectralCurve,
    proj: ProjectionFamily,
    delta: float,
    rel_tol: float = 1e-6,
    max_intervals: int = 4096,
) -> tuple[float, float]:
    """Ray-resolvent integrals along the time interval.

    Returns the pair

        eta+ = integral of ||delta (ray(s) - A(s))^-1 P'(s) P(s)|| ds
        eta- = integral of ||P(s) P'(s) delta (ray(s) - A(s))^-1|| ds

    computed by composite Simpson quadrature, with the interval count
    doubled until both values are stable to `rel_tol`.  Because
    P P' P = 0, the first integrand only sees the resolvent off the range
    of P(s): these are the quantities that measure how much spectral
    weight crowds the tracked eigenvalue at distance ~delta.
    """
    if delta <= 0.0 or delta > curve.ray_radius + 1e-15:
        raise ValueError(f"delta={delta} outside (0, {curve.ray_radius:g}]")

    def integrand(ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a = fam.sample(ts)
        p = proj.sample(ts)
        dp = proj.d_sample(ts)
        lam = curve.lam_sample(ts)
        theta = np.array([curve.ray_angle(t) for t in ts])
        z = lam + delta * np.exp(1j * theta)
        d = fam.dim
        shifted = z[:, None, None] * np.eye(d) - a
        sigma = np.linalg.svd(shifted, compute_uv=False)[:, -1]
        scale = max(float(np.linalg.norm(a, ord=2, axis=(1, 2)).max()), 1.0)
        bad = sigma <= 1e-13 * scale
        if bad.any():
            k = int(np.argmax(bad))
            raise RayLeavesResolventError(float(ts[k]), delta, float(sigma[k]))
        dpp = dp @ p
        plus = delta * np.linalg.solve(shifted, dpp)
        # right-multiplication by the resolvent: solve the transposed system
        minus = delta * np.swapaxes(
            np.linalg.solve(np.swapaxes(shifted, -1, -2),
                            np.swapaxes(p @ dp, -1, -2)),
            -1, -2,
        )
        return (
            np.linalg.norm(plus, ord=2, axis=(1, 2)),
            np.linalg.norm(minus, ord=2, axis=(1, 2)),
        )

    lo, hi = fam.t_lo, fam.t_hi
    n = 16
    prev = None
    while n <= max_intervals:
        ts = np.linspace(lo, hi, n + 1)
        f_plus, f_minus = integrand(ts)
        w = np.ones(n + 1)
        w[1:-1:2], w[2:-1:2] = 4.0, 2.0
        h = (hi - lo) / n
        vals = (h / 3.0 * np.dot(w, f_plus), h / 3.0 * np.dot(w, f_minus))
        if prev is not None:
            err = max(
                abs(vals[0] - prev[0]) / max(abs(vals[0]), 1e-300),
                abs(vals[1] - prev[1]) / max(abs(vals[1]), 1e-300),
            )
            if err <= rel_tol or (vals[0] < 1e-14 and vals[1] < 1e-14):
                return float(vals[0]), float(vals[1])
        prev = vals
        n *= 2
    warnings.warn(
        f"eta quadrature stopped at {max_intervals} intervals with relative "
        f"change above {rel_tol:g}; returning the finest value",
        RuntimeWarning,
        stacklevel=2,
    )
    return float(prev[0]), float(prev[1])


# ---------------------------------------------------------------------------
# gap diagnostics
# ---------------------------------------------------------------------------


@dataclass
class SpectralAnalysis:
    """Per-time spectral statistics along the tracked eigenvalue curve."""

    t_grid: np.ndarray
    eigenvalues: np.ndarray         # (nt, d) complex, unordered
    lam: np.ndarray                 # (nt,) tracked eigenvalue
    gap: np.ndarray                 # (nt,) distance of lam to the rest
    order: np.ndarray               # (nt,) nilpotency order at lam, int
    delta_min: np.ndarray           # (nt,) closest ray approach to spectrum
    m0_local: np.ndarray            # (nt,) max over ray of delta*||reduced res||
    multiplicity: np.ndarray        # (nt,) algebraic multiplicity of lam, int
    uniform_gap: bool
    gap_threshold: float
    crossing_times: list

    def to_csv(self, path) -> None:
        """Columns: t, re_lambda, im_lambda, gap, m, delta_min, M0_local."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["t", "re_lambda", "im_lambda", "gap", "m", "delta_min", "M0_local"]
            )
            for i, t in enumerate(self.t_grid):
                writer.writerow(
                    ["%.12g" % t,
                     "%.12g" % self.lam[i].real,
                     "%.12g" % self.lam[i].imag,
                     "%.12g" % self.gap[i],
                     "%d" % self.order[i],
                     "%.12g" % self.delta_min[i],
                     "%.12g" % self.m0_local[i]]
                )


def gap_diagnostics(
    fam: OperatorFamily,
    curve: SpectralCurve,
    grid: Optional[np.ndarray] = None,
    proj: Optional[ProjectionFamily] = None,
    gap_threshold: float = 1e-6,
    ray_deltas: int = 8,
) -> SpectralAnalysis:
    """Eigenvalue statistics along the curve: gaps, crossings, ray margins.

    gap(t) is the distance from the tracked eigenvalue to the (r+1)-th
    nearest eigenvalue, where r is the tracked rank (proj.rank when given,
    otherwise the multiplicity at the first grid point).  Counting by rank
    rather than by cluster membership makes a collision register as
    gap -> 0 instead of silently enlarging the cluster.  The uniform-gap
    verdict holds when the minimum gap exceeds `gap_threshold`;
    approximate crossing times are the local minima of gap(t) at or below
    the threshold.  delta_min(t) records the closest the probe ray comes
    to the spectrum (a safety margin for contour and schedule choices),
    and m0_local(t) the ray-resolvent constant at t.
    """
    if grid is None:
        grid = np.linspace(fam.t_lo, fam.t_hi, 101)
    grid = np.asarray(grid, dtype=float)
    a_stack = fam.sample(grid)
    lam = curve.lam_sample(grid)
    scale = max(float(np.linalg.norm(a_stack, ord=2, axis=(1, 2)).max()), 1.0)
    nt, d = len(grid), fam.dim

    eigenvalues = np.linalg.eigvals(a_stack)
    cluster_radius = 1e-6 * scale
    gap = np.zeros(nt)
    mult = np.zeros(nt, dtype=int)
    order = np.zeros(nt, dtype=int)
    delta_min = np.zeros(nt)
    m0_local = np.zeros(nt)
    deltas = curve.ray_radius * np.logspace(-3, 0, ray_deltas)
    eye = np.eye(d)

    if proj is not None:
        p_stack = proj.sample(grid)
    rank = proj.rank if proj is not None else int(
        np.sum(np.abs(eigenvalues[0] - lam[0]) <= cluster_radius)
    )
    rank = max(rank, 1)
    for i in range(nt):
        dist = np.sort(np.abs(eigenvalues[i] - lam[i]))
        mult[i] = int(np.sum(dist <= cluster_radius))
        gap[i] = float(dist[rank]) if rank < d else math.inf

        order[i] = _nilpotency_order(a_stack[i] - lam[i] * eye, d, scale)

        z = lam[i] + deltas * np.exp(1j * curve.ray_angle(grid[i]))
        sig = np.linalg.svd(z[:, None, None] * eye - a_stack[i],
                            compute_uv=False)[:, -1]
        delta_min[i] = float(sig.min())
        if proj is not None:
            comp = eye - p_stack[i]
            norms = [
                delta * opnorm(np.linalg.solve(zz * eye - a_stack[i], comp))
                for delta, zz in zip(deltas, z)
            ]
            m0_local[i] = float(max(norms))

    finite = gap[np.isfinite(gap)]
    uniform = bool(finite.size == 0 or finite.min() > gap_threshold)
    crossings = []
    for i in range(nt):
        if gap[i] <= gap_threshold:
            left = gap[i - 1] if i > 0 else math.inf
            right = gap[i + 1] if i < nt - 1 else math.inf
            if gap[i] <= left and gap[i] <= right:
                crossings.append(float(grid[i]))
    return SpectralAnalysis(
        t_grid=grid,
        eigenvalues=eigenvalues,
        lam=lam,
        gap=gap,
        order=order,
        delta_min=delta_min,
        m0_local=m0_local,
        multiplicity=mult,
        uniform_gap=uniform,
        gap_threshold=gap_threshold,
        crossing_times=crossings,
    )
