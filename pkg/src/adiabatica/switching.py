"""Adiabatic switching of a perturbation and Gell-Mann--Low limits.

The full operator is switched on along A(t) = A0 + kappa(t) V on the
half-line (-infty, 0], where kappa grows from 0 at -infty to 1 at 0 and
both kappa and kappa' are integrable.  Everything of interest lives in
the interaction picture,

    U_I(t, s) = e^{-A0 t/eps} U_eps(t, s) e^{A0 s/eps},

whose generator kappa(t) e^{-A0 t/eps} V e^{A0 t/eps} / eps is
integrable, so the switch-on limit U_I(0, -infty) exists and can be
truncated at a finite horizon with a computable tail bound.

Three deliverables:

* :func:`interaction_propagator` -- U_I on a truncated half-line.  The
  propagation runs in the lab frame (a smooth generator the integrator
  already handles) and the oscillatory conjugation is applied afterwards
  through exact eigendecomposition exponentials, so the fast phase never
  passes through a quadrature rule.
* :func:`gml_ratio` -- the normalized eigenvector ratio
  U_I(0,-infty)x / <x', U_I(0,-infty)x> together with its eps-free
  target W(0,-infty)x / <x', W(0,-infty)x>, where W transports spectral
  subspaces along the coupling path.  Substituting u = kappa(t) turns W
  into the kernel transport over u in [0, 1], computed exactly by
  :func:`adiabatica.evolve.kernel_propagator` -- no truncation at all.
* :func:`energy_shift` -- the perturbed-minus-unperturbed eigenvalue
  difference recovered from transition amplitudes, either as a
  logarithmic time-derivative at t = 0 or, for the exponential switching
  function, as a logarithmic derivative in the overall coupling strength
  (computed by genuinely re-running the propagation at shifted coupling,
  so the two formulas are independent measurements).

Eigenvalue curves and spectral projections along the coupling path are
produced by continuation: a fine reference grid of eigendecompositions,
branch-matched through eigenvector overlaps, with degenerate endpoints
resolved by diagonalizing the perturbation inside each degenerate
eigenspace.  Persistently coincident branches are merged into one
higher-rank branch; isolated crossings are recorded as diagnostics.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import linear_sum_assignment

from .evolve import PropagatorTable, kernel_propagator, propagate_general
from .matrixkit import CMatrix, as_cmatrix, opnorm
from .opfamily import ProjectionFamily

__all__ = [
    "SwitchingSetup",
    "CouplingCurves",
    "GmlResult",
    "coupling_curves",
    "interaction_propagator",
    "horizon_doubling_defect",
    "gml_ratio",
    "energy_shift",
    "default_probe_vectors",
    "projective_distance",
    "switching_sweep",
    "sweep_to_csv",
    "degenerate_example",
    "commuting_example",
]

#: Default bound on both switching tails, int kappa and int kappa'.
TAIL_TOL = 1e-8

#: Absolute tolerance on skew-Hermiticity of A0 and V.
SKEW_TOL = 1e-12

#: Reference-grid resolution for eigenvalue-curve continuation.
CURVE_SAMPLES = 513

#: Two branches closer than this (relative to the spectral scale) count
#: as colliding at a grid point.
COLLISION_TOL = 1e-8

#: Central-difference step for the coupling-strength shift formula.
MU_STEP = 1e-4


def _tail_integral(fn: Callable[[float], float], upper: float) -> float:
    # compactly supported profiles make quad suspect divergence on the
    # all-zero far tail; non-integrability is caught by the budget search
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        value, err = quad(lambda t: abs(fn(t)), -np.inf, upper, limit=200)
    # the integrand is nonnegative: a negative, non-finite, or
    # error-dominated result means the quadrature broke down on a
    # divergent tail
    if not np.isfinite(value) or value < 0 or err > 10.0 * abs(value) + 1e-10:
        return float("inf")
    return float(value)


@dataclass
class SwitchingSetup:
    """Unperturbed operator, perturbation, and the switching profile.

    ``a0`` and ``v`` must be skew-Hermitian to 1e-12 and share a
    dimension; ``kappa`` and ``kappa_d`` sample the switching function
    and its derivative on (-infty, 0], with kappa(0) = 1, kappa
    non-decreasing, and integrable tails.  ``kind`` records the profile
    ("exp", "smoothstep", or "custom"); the coupling-strength shift
    formula is only available for "exp".
    """

    a0: CMatrix
    v: CMatrix
    kappa: Callable[[float], float]
    kappa_d: Callable[[float], float]
    kind: str = "custom"
    tail_tol: float = TAIL_TOL
    name: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.a0 = as_cmatrix(self.a0, square=True)
        self.v = as_cmatrix(self.v, square=True)
        if self.v.shape != self.a0.shape:
            raise ValueError("perturbation dimension must match A0")
        for label, m in (("A0", self.a0), ("V", self.v)):
            defect = opnorm(m + m.conj().T)
            if defect > SKEW_TOL:
                raise ValueError(
                    f"{label} is not skew-Hermitian: ||{label} + {label}*|| "
                    f"= {defect:.3e}"
                )
        if abs(self.kappa(0.0) - 1.0) > 1e-12:
            raise ValueError("switching function must satisfy kappa(0) = 1")
        probes = -np.geomspace(1e-3, 100.0, 25)
        for t in probes:
            k, dk = self.kappa(float(t)), self.kappa_d(float(t))
            if dk < -1e-12:
                raise ValueError(f"switching function decreases at t={t:.3g}")
            if not -1e-12 <= k <= 1.0 + 1e-12:
                raise ValueError(f"switching function leaves [0, 1] at t={t:.3g}")

    @property
    def dim(self) -> int:
        return self.a0.shape[0]

    def horizon(self, budget: Optional[float] = None) -> float:
        """Smallest truncation time T with both tails under ``budget``.

        The tails are int_{-infty}^{-T} kappa and the same for kappa',
        evaluated numerically; found by doubling then bisection.
        """
        budget = self.tail_tol if budget is None else float(budget)
        if budget <= 0:
            raise ValueError("tail budget must be positive")

        def tails_ok(t: float) -> bool:
            return (
                _tail_integral(self.kappa, -t) <= budget
                and _tail_integral(self.kappa_d, -t) <= budget
            )

        t_hi = 1.0
        while not tails_ok(t_hi):
            t_hi *= 2.0
            if t_hi > 1e6:
                raise ValueError(
                    "switching tails do not fall below the budget; "
                    "kappa or kappa' is not integrable enough"
                )
        t_lo = 0.0 if t_hi == 1.0 else t_hi / 2.0
        while t_hi - t_lo > 1e-6:
            mid = 0.5 * (t_lo + t_hi)
            if tails_ok(mid):
                t_hi = mid
            else:
                t_lo = mid
        return t_hi

    # -- constructors -----------------------------------------------------

    @classmethod
    def exp_switch(cls, a0, v, name: str = "", tail_tol: float = TAIL_TOL):
        return cls(
            a0=a0, v=v, kappa=math.exp, kappa_d=math.exp,
            kind="exp", tail_tol=tail_tol, name=name,
        )

    @classmethod
    def smoothstep_switch(
        cls, a0, v, width: float = 10.0, name: str = "", tail_tol: float = TAIL_TOL
    ):
        """Quintic ramp from 0 at t = -width to 1 at t = 0 (twice
        continuously differentiable, compact switching support)."""
        if width <= 0:
            raise ValueError("ramp width must be positive")

        def kappa(t: float) -> float:
            if t <= -width:
                return 0.0
            u = (t + width) / width
            return u ** 3 * (10.0 - 15.0 * u + 6.0 * u ** 2)

        def kappa_d(t: float) -> float:
            if t <= -width:
                return 0.0
            u = (t + width) / width
            return 30.0 * u ** 2 * (1.0 - u) ** 2 / width

        return cls(
            a0=a0, v=v, kappa=kappa, kappa_d=kappa_d,
            kind="smoothstep", tail_tol=tail_tol, name=name,
        )

    @classmethod
    def from_json(cls, source: Union[str, dict]) -> "SwitchingSetup":
        """Load from a JSON file path or dict: matrices as nested
        real/imag arrays, switching profile as a kind selector."""
        if isinstance(source, dict):
            data = source
        else:
            with open(source) as fh:
                data = json.load(fh)

        def matrix(obj):
            real = np.asarray(obj["real"], dtype=float)
            imag = np.asarray(obj.get("imag", np.zeros_like(real)), dtype=float)
            return real + 1j * imag

        profile = data.get("kappa", {"kind": "exp"})
        kind = profile.get("kind", "exp")
        common = dict(
            a0=matrix(data["a0"]),
            v=matrix(data["v"]),
            name=str(data.get("name", "")),
            tail_tol=float(data.get("tail_tol", TAIL_TOL)),
        )
        if kind == "exp":
            return cls.exp_switch(**common)
        if kind == "smoothstep":
            return cls.smoothstep_switch(
                width=float(profile.get("width", 10.0)), **common
            )
        raise ValueError(f"unknown switching profile kind {kind!r}")


# ---------------------------------------------------------------------------
# eigenvalue-curve continuation along the coupling path
# ---------------------------------------------------------------------------


def _split_degenerate(w, vecs, h1, tol):
    """Rotate eigenvectors inside each degenerate group of ``w`` so they
    diagonalize the perturbation there (the continuation limit of the
    branch vectors at an endpoint where branches meet)."""
    out = vecs.copy()
    start = 0
    for i in range(1, len(w) + 1):
        if i == len(w) or w[i] - w[i - 1] > tol:
            if i - start > 1:
                block = out[:, start:i]
                sub = block.conj().T @ h1 @ block
                _, rot = np.linalg.eigh(0.5 * (sub + sub.conj().T))
                out[:, start:i] = block @ rot
            start = i
    return out


@dataclass
class CouplingCurves:
    """Branch-matched eigenvalue curves of A0 + u V over u in [0, 1].

    ``nu`` holds the real curves (the operator pencil is skew-Hermitian,
    so eigenvalues are i times these); ``basis`` the matched eigenvector
    frames on the reference grid; ``branches`` the member columns of
    each (possibly merged higher-rank) branch.  ``crossings`` lists grid
    u-values where distinct branches come within the collision
    tolerance -- allowed on a sparse set, fatal when persistent.
    """

    setup: SwitchingSetup
    grid: np.ndarray
    nu: np.ndarray            # (samples, d) branch-ordered eigenvalue curves
    basis: np.ndarray         # (samples, d, d) matched eigenvector frames
    branches: list            # list of column-index lists
    crossings: list           # diagnostic u-values of isolated collisions
    min_separation: float     # smallest distinct-branch gap seen on the grid
    worst_match_overlap: float  # weakest consecutive-frame assignment overlap

    @property
    def r(self) -> int:
        return len(self.branches)

    def _h(self, u: float) -> np.ndarray:
        return -1j * (self.setup.a0 + u * self.setup.v)

    def _matched_frame(self, u: float):
        """Eigendecomposition at u with columns aligned to the reference
        grid ordering (overlap assignment against the nearest frame)."""
        u = float(u)
        if not -1e-12 <= u <= 1.0 + 1e-12:
            raise ValueError(f"coupling u={u} outside [0, 1]")
        i_ref = int(np.argmin(np.abs(self.grid - u)))
        if abs(self.grid[i_ref] - u) <= 1e-12:
            return self.nu[i_ref], self.basis[i_ref]
        w, vecs = np.linalg.eigh(self._h(u))
        ref = self.basis[i_ref]
        overlap = np.abs(ref.conj().T @ vecs) ** 2
        row, col = linear_sum_assignment(-overlap)
        order = np.empty(len(w), dtype=int)
        order[row] = col
        return w[order], vecs[:, order]

    def eigenvalue(self, j: int, u: float) -> complex:
        """lambda_j(u), the branch eigenvalue (mean over merged members)."""
        w, _ = self._matched_frame(u)
        return 1j * float(np.mean(w[self.branches[j]]))

    def shift_exact(self, j: int) -> complex:
        return self.eigenvalue(j, 1.0) - self.eigenvalue(j, 0.0)

    def projection_value(self, j: int, u: float) -> CMatrix:
        _, vecs = self._matched_frame(u)
        cols = vecs[:, self.branches[j]]
        return cols @ cols.conj().T

    def projection_derivative(self, j: int, u: float) -> CMatrix:
        """d/du of the branch projection from first-order perturbation
        theory in the matched frame.

        Terms with a vanishing gap are dropped when their coupling
        matrix element vanishes too (benign crossings, and endpoint
        degeneracies resolved by the endpoint rotation); otherwise the
        transport kernel is genuinely singular and this raises.  At an
        endpoint where branches split, the dropped second-order piece is
        invisible to the quadrature rules, which never sample the
        endpoint itself.
        """
        w, vecs = self._matched_frame(u)
        h1 = -1j * self.setup.v
        scale = max(1.0, opnorm(self.setup.a0) + opnorm(self.setup.v))
        members = self.branches[j]
        outside = [k for k in range(len(w)) if k not in members]
        d = self.setup.dim
        out = np.zeros((d, d), dtype=complex)
        for a in members:
            va = vecs[:, a]
            for k in outside:
                gap = w[a] - w[k]
                coef = vecs[:, k].conj() @ (h1 @ va)
                if abs(gap) < 1e-10 * scale:
                    if abs(coef) <= 1e-8 * scale:
                        continue
                    raise RuntimeError(
                        f"eigenvalue branches collide near u={u:.6g}; the "
                        f"spectral transport is singular there"
                    )
                term = (coef / gap) * np.outer(vecs[:, k], va.conj())
                out += term + term.conj().T
        return out

    def projection_family(self, j: int) -> ProjectionFamily:
        if not 0 <= j < self.r:
            raise ValueError(f"branch index {j} outside 0..{self.r - 1}")
        return ProjectionFamily(
            dim=self.setup.dim,
            value=lambda u, _j=j: self.projection_value(_j, u),
            rank=len(self.branches[j]),
            derivative=lambda u, _j=j: self.projection_derivative(_j, u),
            name=f"{self.setup.name or 'switching'}-branch{j}",
            t_lo=0.0,
            t_hi=1.0,
        )

    def projection_families(self) -> list:
        return [self.projection_family(j) for j in range(self.r)]

    def transport(self, grid=None, tol_step: float = 1e-9) -> PropagatorTable:
        """The eps-free spectral transport over the coupling interval.

        In the switched time variable this is exactly the t -> -infty
        limit flow: substituting u = kappa(t) removes the half-line."""
        return kernel_propagator(
            self.projection_families(), grid=grid, tol_step=tol_step
        )


def coupling_curves(
    setup: SwitchingSetup, samples: int = CURVE_SAMPLES
) -> CouplingCurves:
    """Continue the eigendecomposition of A0 + u V across u in [0, 1].

    Consecutive frames are aligned by maximum-overlap assignment;
    endpoint degeneracies are split by diagonalizing the perturbation
    inside each degenerate eigenspace; branch pairs that stay within the
    collision tolerance on more than half the grid are merged into one
    higher-rank branch, and isolated near-collisions are recorded as
    crossings.
    """
    if samples < 33:
        raise ValueError("need at least 33 continuation samples")
    h0 = -1j * setup.a0
    h1 = -1j * setup.v
    scale = max(1.0, opnorm(setup.a0) + opnorm(setup.v))
    grid = np.linspace(0.0, 1.0, samples)
    d = setup.dim
    nu = np.empty((samples, d))
    basis = np.empty((samples, d, d), dtype=complex)

    worst_overlap = 1.0
    for i, u in enumerate(grid):
        w, vecs = np.linalg.eigh(h0 + u * h1)
        if i == 0:
            vecs = _split_degenerate(w, vecs, h1, 1e-9 * scale)
        else:
            overlap = np.abs(basis[i - 1].conj().T @ vecs) ** 2
            row, col = linear_sum_assignment(-overlap)
            order = np.empty(d, dtype=int)
            order[row] = col
            w, vecs = w[order], vecs[:, order]
            worst_overlap = min(
                worst_overlap, float(overlap[row, col].min())
            )
        nu[i], basis[i] = w, vecs
    # merge persistently coincident branches, record isolated crossings
    parent = list(range(d))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    crossings = []
    min_sep = np.inf
    for a in range(d):
        for b in range(a + 1, d):
            close = np.abs(nu[:, a] - nu[:, b]) < COLLISION_TOL * scale
            frac = float(close.mean())
            if frac > 0.5:
                parent[find(a)] = find(b)
            elif close.any():
                crossings.extend(np.round(grid[close], 6).tolist())
            else:
                min_sep = min(min_sep, float(np.abs(nu[:, a] - nu[:, b]).min()))

    groups = {}
    for k in range(d):
        groups.setdefault(find(k), []).append(k)
    branches = sorted(groups.values(), key=lambda g: float(nu[0, g].mean()))

    return CouplingCurves(
        setup=setup,
        grid=grid,
        nu=nu,
        basis=basis,
        branches=branches,
        crossings=sorted(set(crossings)),
        min_separation=float(min_sep) if np.isfinite(min_sep) else 0.0,
        worst_match_overlap=worst_overlap,
    )


# ---------------------------------------------------------------------------
# interaction-picture propagation
# ---------------------------------------------------------------------------


def _conjugation_stack(setup: SwitchingSetup, ts: np.ndarray, eps: float):
    """e^{-A0 t/eps} for each t, via one eigendecomposition of A0."""
    w, vecs = np.linalg.eigh(-1j * setup.a0)
    phases = np.exp(-1j * np.outer(np.asarray(ts, dtype=float), w) / eps)
    return np.einsum("ak,tk,bk->tab", vecs, phases, vecs.conj())


def interaction_propagator(
    setup: SwitchingSetup,
    eps: float,
    horizon: Optional[float] = None,
    tol_step: float = 1e-9,
    grid=None,
    v_scale: float = 1.0,
) -> PropagatorTable:
    """Interaction-picture propagators U_I(t, -T) on the grid in [-T, 0].

    The lab-frame system x' = (1/eps)(A0 + kappa(t) v_scale V) x is
    integrated (smooth generator, no fast phases in the samples), then
    conjugated by exact A0-exponentials.  ``horizon`` defaults to the
    eps-aware value that keeps the truncation error of the switch-on
    limit below tail_tol: tails at most tail_tol * eps / max(1, ||V||).
    An unresolvably stiff combination of eps and horizon raises the
    integrator's stiffness error.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    v_norm = opnorm(setup.v) * abs(v_scale)
    if horizon is None:
        horizon = setup.horizon(budget=setup.tail_tol * eps / max(1.0, v_norm))
    if horizon <= 0:
        raise ValueError("truncation horizon must be positive")

    if grid is None:
        out_grid = np.linspace(-horizon, 0.0, 257)
    else:
        out_grid = np.asarray(grid, dtype=float)
        if abs(out_grid[0] + horizon) > 1e-12 or abs(out_grid[-1]) > 1e-12:
            raise ValueError("grid must run from -horizon to 0")

    a0, v = setup.a0, setup.v * v_scale

    def sampler(ts):
        kap = np.array([setup.kappa(float(t)) for t in ts])
        return (a0[None, :, :] + kap[:, None, None] * v[None, :, :]) / eps

    lab = propagate_general(
        sampler, setup.dim, out_grid, tol_step, "cf4", eps,
        name=(setup.name or "switching") + "-lab",
    )

    conj_left = _conjugation_stack(setup, lab.t_grid, eps)
    # e^{A0 s/eps} at s = -horizon equals the stack entry at +horizon
    right = _conjugation_stack(setup, np.array([horizon]), eps)[0]
    accumulated = conj_left @ lab.accumulated @ right
    steps = conj_left[1:] @ lab.steps @ conj_left[:-1].conj().transpose(0, 2, 1)
    return PropagatorTable(
        t_grid=lab.t_grid,
        steps=steps,
        accumulated=accumulated,
        epsilon=eps,
        integrator=lab.integrator,
        substeps=lab.substeps,
        tol_step=lab.tol_step,
        step_error=lab.step_error,
        generator_name=(setup.name or "switching") + "-interaction",
    )


def horizon_doubling_defect(
    setup: SwitchingSetup, eps: float, horizon: Optional[float] = None
) -> float:
    """||U_I(0,-T) - U_I(0,-2T)||: certifies existence of the switch-on
    limit at the chosen truncation."""
    if horizon is None:
        v_norm = opnorm(setup.v)
        horizon = setup.horizon(budget=setup.tail_tol * eps / max(1.0, v_norm))
    single = interaction_propagator(setup, eps, horizon=horizon).final
    double = interaction_propagator(setup, eps, horizon=2.0 * horizon).final
    return opnorm(single - double)


# ---------------------------------------------------------------------------
# the eigenvector-ratio limit
# ---------------------------------------------------------------------------


def projective_distance(y: np.ndarray, z: np.ndarray) -> float:
    """Phase-free distance between the rays of two nonzero vectors."""
    ny, nz = np.linalg.norm(y), np.linalg.norm(z)
    if ny == 0 or nz == 0:
        raise ValueError("projective distance needs nonzero vectors")
    inner = abs(np.vdot(y, z)) / (ny * nz)
    return math.sqrt(max(0.0, 2.0 - 2.0 * min(1.0, inner)))


@dataclass
class GmlResult:
    """Computed switching ratio, its eps-free target, and diagnostics."""

    ratio: np.ndarray
    target: np.ndarray
    difference: float
    projective: float
    branch: int
    lambda_end: complex
    denominator_w: complex
    denominator_eps: complex
    epsilon: float
    horizon: float


def _branch_of(curves: CouplingCurves, x: np.ndarray, tol: float = 1e-8) -> int:
    nx = np.linalg.norm(x)
    for j in range(curves.r):
        p0 = curves.projection_value(j, 0.0)
        if np.linalg.norm(p0 @ x - x) <= tol * nx:
            return j
    raise ValueError(
        "x is not in the range of any branch projection at zero coupling"
    )


def gml_ratio(
    setup: SwitchingSetup,
    eps: float,
    x: np.ndarray,
    x_prime: np.ndarray,
    curves: Optional[CouplingCurves] = None,
    transport: Optional[PropagatorTable] = None,
    u_table: Optional[PropagatorTable] = None,
    tol_step: float = 1e-9,
) -> GmlResult:
    """Normalized switched vector against its eps-free transport target.

    Computes U_I(0,-infty)x / <x', U_I(0,-infty)x> at the given eps and
    the target W(0,-infty)x / <x', W(0,-infty)x>, where W is the
    spectral transport along the coupling path.  The denominator against
    W is checked first (tolerance 1e-8); x must lie in a branch
    projection range at zero coupling; the target is verified to be an
    eigenvector of the fully switched operator for the branch
    eigenvalue.
    """
    x = np.asarray(x, dtype=complex).reshape(-1)
    x_prime = np.asarray(x_prime, dtype=complex).reshape(-1)
    if x.shape != (setup.dim,) or x_prime.shape != (setup.dim,):
        raise ValueError("probe vectors must match the setup dimension")
    if curves is None:
        curves = coupling_curves(setup)
    if transport is None:
        transport = curves.transport(tol_step=tol_step)
    w_final = transport.final

    scale = np.linalg.norm(x) * np.linalg.norm(x_prime)
    denom_w = complex(np.vdot(x_prime, w_final @ x))
    if abs(denom_w) <= 1e-8 * scale:
        raise ValueError(
            "denominator <x', W(0,-infty)x> vanishes; pick a different x'"
        )
    j = _branch_of(curves, x)

    if u_table is None:
        u_table = interaction_propagator(setup, eps, tol_step=tol_step)
    horizon = float(-u_table.t_grid[0])
    ux = u_table.final @ x
    denom_eps = complex(np.vdot(x_prime, ux))
    if abs(denom_eps) <= 1e-10 * scale:
        raise ValueError(f"transition amplitude vanishes at eps={eps:g}")

    ratio = ux / denom_eps
    target = (w_final @ x) / denom_w

    lam = curves.eigenvalue(j, 1.0)
    a_end = setup.a0 + setup.v
    residual = np.linalg.norm(a_end @ target - lam * target)
    if residual > 1e-7 * max(1.0, opnorm(a_end)) * np.linalg.norm(target):
        raise RuntimeError(
            f"transport target misses the eigenspace at full coupling "
            f"(residual {residual:.3e}); curve continuation is inconsistent"
        )

    return GmlResult(
        ratio=ratio,
        target=target,
        difference=float(np.linalg.norm(ratio - target)),
        projective=projective_distance(ratio, target),
        branch=j,
        lambda_end=lam,
        denominator_w=denom_w,
        denominator_eps=denom_eps,
        epsilon=eps,
        horizon=horizon,
    )


def interaction_horizon(setup: SwitchingSetup, eps: float) -> float:
    """The eps-aware truncation horizon used by the propagators."""
    v_norm = opnorm(setup.v)
    return setup.horizon(budget=setup.tail_tol * eps / max(1.0, v_norm))


def default_probe_vectors(
    curves: CouplingCurves, j: int
) -> tuple[np.ndarray, np.ndarray]:
    """A canonical (x, x') pair inside the branch range at zero coupling.

    Valid whenever the branch projection moves by less than 1 across the
    switching; beyond that no x' inside the initial range can work and
    the perturbation must be switched on in smaller increments, which
    this package does not automate.
    """
    p0 = curves.projection_value(j, 0.0)
    p1 = curves.projection_value(j, 1.0)
    move = opnorm(p1 - p0)
    if move >= 1.0 - 1e-6:
        raise ValueError(
            f"branch projection moves by {move:.6f}, at or past the "
            f"invertibility limit 1; split the perturbation and switch it "
            f"on in smaller increments (not automated here)"
        )
    vals, vecs = np.linalg.eigh(0.5 * (p0 + p0.conj().T))
    x = vecs[:, -1]  # a unit vector in the range
    return x, x.copy()


# ---------------------------------------------------------------------------
# energy shift
# ---------------------------------------------------------------------------


def _cut_distance(z: complex) -> float:
    """Distance from z to the branch cut (-infty, 0] of the principal log."""
    if z.real >= 0.0:
        return abs(z)
    return abs(z.imag)


def energy_shift(
    setup: SwitchingSetup,
    eps: float,
    j: int,
    x: np.ndarray,
    x_prime: np.ndarray,
    formula: str = "log_derivative",
    curves: Optional[CouplingCurves] = None,
    transport: Optional[PropagatorTable] = None,
    u_table: Optional[PropagatorTable] = None,
    tol_step: float = 1e-9,
) -> complex:
    """Eigenvalue shift of branch j recovered from transition amplitudes.

    formula="log_derivative": eps times the logarithmic t-derivative of
    t -> <x', U_I(t,-infty)x> at t = 0, evaluated in closed form as
    -<Vx', U_I(0,-infty)x> / <x', U_I(0,-infty)x>.

    formula="exp_switch" (exponential switching only): eps times the
    logarithmic derivative in the overall coupling strength mu at mu = 1,
    by a central difference with step 1e-4 across two independent
    propagations at scaled coupling.

    Both converge to lambda_j(1) - lambda_j(0) as eps decreases.  x and
    x' must lie in the branch range at zero coupling, and the transport
    denominator must stay clear of the principal-log branch cut.
    """
    x = np.asarray(x, dtype=complex).reshape(-1)
    x_prime = np.asarray(x_prime, dtype=complex).reshape(-1)
    if curves is None:
        curves = coupling_curves(setup)
    if transport is None:
        transport = curves.transport(tol_step=tol_step)
    if not 0 <= j < curves.r:
        raise ValueError(f"branch index {j} outside 0..{curves.r - 1}")

    p0 = curves.projection_value(j, 0.0)
    nx, nxp = np.linalg.norm(x), np.linalg.norm(x_prime)
    if np.linalg.norm(p0 @ x - x) > 1e-8 * nx:
        raise ValueError("x must lie in the branch range at zero coupling")
    if np.linalg.norm(p0 @ x_prime - x_prime) > 1e-8 * nxp:
        raise ValueError("x' must lie in the branch range at zero coupling")

    denom_w = complex(np.vdot(x_prime, transport.final @ x))
    if _cut_distance(denom_w) <= 1e-8 * nx * nxp:
        raise ValueError(
            "transport denominator sits on the principal-log branch cut; "
            "pick different probe vectors"
        )

    if formula == "log_derivative":
        if u_table is None:
            u_table = interaction_propagator(setup, eps, tol_step=tol_step)
        f0 = complex(np.vdot(x_prime, u_table.final @ x))
        if abs(f0) <= 1e-10 * nx * nxp:
            raise ValueError(f"transition amplitude vanishes at eps={eps:g}")
        return -complex(np.vdot(setup.v @ x_prime, u_table.final @ x)) / f0

    if formula == "exp_switch":
        probes = (0.0, -1.0, -5.0)
        if setup.kind != "exp" and any(
            abs(setup.kappa(t) - math.exp(t)) > 1e-12 for t in probes
        ):
            raise ValueError(
                "the coupling-strength formula requires the exponential "
                "switching function"
            )
        horizon = interaction_horizon(setup, eps)
        logs = []
        for mu in (1.0 - MU_STEP, 1.0 + MU_STEP):
            final = interaction_propagator(
                setup, eps, horizon=horizon, tol_step=tol_step, v_scale=mu
            ).final
            f_mu = complex(np.vdot(x_prime, final @ x))
            if _cut_distance(f_mu) <= 1e-12 * nx * nxp:
                raise ValueError(
                    f"transition amplitude at coupling scale {mu:g} sits on "
                    f"the branch cut; the mu-difference would be meaningless"
                )
            logs.append(complex(np.log(f_mu)))
        return eps * (logs[1] - logs[0]) / (2.0 * MU_STEP)

    raise ValueError(f"unknown energy-shift formula {formula!r}")


# ---------------------------------------------------------------------------
# sweeps and serialization
# ---------------------------------------------------------------------------


def switching_sweep(
    setup: SwitchingSetup,
    eps_values: Sequence[float],
    j: int = 0,
    x: Optional[np.ndarray] = None,
    x_prime: Optional[np.ndarray] = None,
    tol_step: float = 1e-9,
) -> list:
    """Ratio errors and both shift formulas across an eps ladder.

    Returns one dict per eps with keys epsilon, ratio_error,
    shift_logderiv, shift_expswitch, shift_exact.  The curves and the
    transport are built once and shared.  The coupling-strength formula
    is skipped (None) for non-exponential switching.
    """
    if len(eps_values) == 0:
        raise ValueError("eps ladder must not be empty")
    curves = coupling_curves(setup)
    transport = curves.transport(tol_step=tol_step)
    if x is None or x_prime is None:
        x_def, xp_def = default_probe_vectors(curves, j)
        x = x_def if x is None else x
        x_prime = xp_def if x_prime is None else x_prime
    exact = curves.shift_exact(j)

    rows = []
    for eps in eps_values:
        table = interaction_propagator(setup, float(eps), tol_step=tol_step)
        res = gml_ratio(
            setup, eps, x, x_prime, curves=curves, transport=transport,
            u_table=table, tol_step=tol_step,
        )
        ld = energy_shift(
            setup, eps, j, x, x_prime, "log_derivative",
            curves=curves, transport=transport, u_table=table,
            tol_step=tol_step,
        )
        if setup.kind == "exp":
            es = energy_shift(
                setup, eps, j, x, x_prime, "exp_switch",
                curves=curves, transport=transport, tol_step=tol_step,
            )
        else:
            es = None
        rows.append(
            {
                "epsilon": float(eps),
                "ratio_error": res.difference,
                "shift_logderiv": ld,
                "shift_expswitch": es,
                "shift_exact": exact,
            }
        )
    return rows


def _fmt_complex(z) -> str:
    if z is None:
        return ""
    z = complex(z)
    return "%.12g%+.12gj" % (z.real, z.imag)


def sweep_to_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["epsilon", "ratio_error", "shift_logderiv",
             "shift_expswitch", "shift_exact"]
        )
        for row in rows:
            writer.writerow(
                [
                    "%.12g" % row["epsilon"],
                    "%.12g" % row["ratio_error"],
                    _fmt_complex(row["shift_logderiv"]),
                    _fmt_complex(row["shift_expswitch"]),
                    _fmt_complex(row["shift_exact"]),
                ]
            )


# ---------------------------------------------------------------------------
# ready-made setups
# ---------------------------------------------------------------------------


def degenerate_example(strength: float = 0.2) -> SwitchingSetup:
    """4x4 rotation generator with a doubly degenerate zero mode that the
    perturbation splits at first order."""
    a0 = 1j * np.diag([0.0, 0.0, 1.0, 2.0])
    hv = np.array(
        [
            [0.30, 0.25, 0.20, 0.10],
            [0.25, -0.20, 0.15, 0.05],
            [0.20, 0.15, 0.10, 0.25],
            [0.10, 0.05, 0.25, -0.10],
        ]
    )
    return SwitchingSetup.exp_switch(
        a0, 1j * strength * hv, name="degenerate-switch"
    )


def commuting_example() -> SwitchingSetup:
    """Simultaneously diagonal A0 and V: every switching quantity has a
    closed form (pure phases, shift = the diagonal entry of V)."""
    a0 = 1j * np.diag([0.0, 1.0, 2.5])
    v = 1j * np.diag([0.4, -0.3, 0.2])
    return SwitchingSetup.exp_switch(a0, v, name="commuting-switch")
