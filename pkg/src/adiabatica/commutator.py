"""Commutator-equation solvers for spectral transport terms.

The transport term [P'(t), P(t)] that steers adiabatic comparison flows
can be written as B(t)A(t) - A(t)B(t) for a bounded B(t) whenever the
tracked spectrum is separated from the rest.  This module builds the
B(t):

* ``solve_gap_contour`` -- contour-integral form, valid whenever a
  closed contour separates the tracked spectral part;
* ``solve_gap_pole``    -- reduced-resolvent power series at an isolated
  eigenvalue of finite nilpotency order m0 (no quadrature);
* ``solve_nogap``       -- the gapless surrogate B_{n,delta}: reduced
  resolvents are pushed a distance delta_i into the resolvent set along
  a ray, the projection derivative is replaced by its mollification
  Q_n, and the defect is returned as explicit remainders C+ and C-.
  The commutator identity with the remainders included is exact.
* ``solve_multi``       -- several disjoint spectral parts at once, with
  target K(t) = (1/2) sum_j [P_j', P_j] over the parts plus their
  complement.
* ``delta_schedule``    -- the coupling of the ray distances to the
  slowness parameter, in the qualitative (existence) and quantitative
  (rate-giving) variants.

Residuals are matrix identities, not estimates: any residual above
roundoff indicates a quadrature or solve bug.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .matrixkit import CMatrix, opnorm
from .opfamily import OperatorFamily, ProjectionFamily, SpectralCurve
from .spectral import Contour, ContourError, RayLeavesResolventError

__all__ = [
    "CommutatorSolution",
    "MollifiedDerivative",
    "solve_gap_contour",
    "solve_gap_pole",
    "solve_nogap",
    "solve_multi",
    "delta_schedule",
]

CONTOUR_NODE_CAP = 4096
CONTOUR_REL_TOL = 1e-12
GAP_SAFETY_FACTOR = 1e-6


# ---------------------------------------------------------------------------
# mollified projection derivative
# ---------------------------------------------------------------------------


class MollifiedDerivative:
    """Projection derivative smoothed with a polynomial bump of width 1/n.

    Q_n(t) is the convolution of P' with the C^2 bump u -> (35/32)(1-u^2)^3
    on [-1,1], scaled to total width 2/n.  Where the window sticks out of
    the time interval it is clipped and the weights renormalized, so Q_n
    stays a convex average of P' values (the textbook construction keeps
    the kernel inside the open interval instead; clipping changes nothing
    in the interior and keeps sup-norm control at the ends).
    """

    QUAD_NODES = 48

    def __init__(self, proj: ProjectionFamily, n: int):
        if n < 1:
            raise ValueError("mollification index n must be >= 1")
        self.proj = proj
        self.n = int(n)
        self.width = 1.0 / float(n)
        # Gauss-Legendre rule on [-1, 1], remapped per evaluation window
        self._nodes, self._weights = np.polynomial.legendre.leggauss(self.QUAD_NODES)

    @staticmethod
    def bump(u: np.ndarray) -> np.ndarray:
        """The unit-mass kernel on [-1, 1]: (35/32)(1-u^2)^3."""
        u = np.asarray(u, dtype=float)
        inside = np.abs(u) <= 1.0
        return np.where(inside, (35.0 / 32.0) * (1.0 - u * u) ** 3, 0.0)

    def value(self, t: float) -> CMatrix:
        lo = max(self.proj.t_lo, t - self.width)
        hi = min(self.proj.t_hi, t + self.width)
        rs = 0.5 * (hi + lo) + 0.5 * (hi - lo) * self._nodes
        ws = 0.5 * (hi - lo) * self._weights
        kernel = self.bump((t - rs) / self.width) / self.width
        weights = ws * kernel
        mass = weights.sum()
        samples = self.proj.d_sample(rs)
        return np.tensordot(weights / mass, samples, axes=(0, 0))

    def sample(self, ts: np.ndarray) -> np.ndarray:
        return np.stack([self.value(float(t)) for t in np.asarray(ts, dtype=float)])


# ---------------------------------------------------------------------------
# solution container
# ---------------------------------------------------------------------------


@dataclass
class CommutatorSolution:
    """A solution B(t) of the (approximate) commutator equation.

    `residual(t)` evaluates the defining identity and should be roundoff
    small: B A - A B - [P',P] for the exact constructions, and
    B A - A B + (C+ - C-) - [Q_n,P] (resp. the multi-part target) for the
    approximate construction.
    """

    b: Callable[[float], CMatrix]
    residual: Callable[[float], CMatrix]
    construction: str
    dim: int
    c_plus: Optional[Callable[[float], CMatrix]] = None
    c_minus: Optional[Callable[[float], CMatrix]] = None
    params: dict = field(default_factory=dict)

    def residual_norm(self, t: float) -> float:
        return opnorm(self.residual(t))

    def profile(self, grid: np.ndarray) -> dict:
        """Norm profiles over a time grid (residual and remainders)."""
        grid = np.asarray(grid, dtype=float)
        out = {
            "t": grid,
            "residual_norm": np.array([self.residual_norm(t) for t in grid]),
            "c_plus_norm": np.zeros(len(grid)),
            "c_minus_norm": np.zeros(len(grid)),
        }
        if self.c_plus is not None:
            out["c_plus_norm"] = np.array([opnorm(self.c_plus(t)) for t in grid])
        if self.c_minus is not None:
            out["c_minus_norm"] = np.array([opnorm(self.c_minus(t)) for t in grid])
        return out

    def to_csv(self, path, grid: np.ndarray) -> None:
        prof = self.profile(grid)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "residual_norm", "C_plus_norm", "C_minus_norm"])
            for i, t in enumerate(prof["t"]):
                writer.writerow([
                    "%.12g" % t,
                    "%.12g" % prof["residual_norm"][i],
                    "%.12g" % prof["c_plus_norm"][i],
                    "%.12g" % prof["c_minus_norm"][i],
                ])


# ---------------------------------------------------------------------------
# gap constructions
# ---------------------------------------------------------------------------


def _contour_for(contour, t: float) -> Contour:
    return contour(t) if callable(contour) else contour


def _sandwich_integral(a: CMatrix, mid: CMatrix, contour: Contour) -> CMatrix:
    """(1/2 pi i) times the contour integral of R(z) mid R(z), trapezoid with
    node doubling on the circle."""
    d = a.shape[0]
    scale = max(opnorm(a), 1.0)
    eigs = np.linalg.eigvals(a)
    dist_to_circle = np.abs(np.abs(eigs - contour.center) - contour.radius)
    if dist_to_circle.min() < GAP_SAFETY_FACTOR * scale:
        raise ContourError(
            f"spectrum within {dist_to_circle.min():.3g} of the contour; "
            f"gap too small for stable quadrature"
        )
    if not np.any(np.abs(eigs - contour.center) < contour.radius):
        raise ContourError("contour encloses no spectrum")

    eye = np.eye(d, dtype=complex)
    n = contour.nodes
    prev = None
    while n <= CONTOUR_NODE_CAP:
        zs = contour.points(n)
        resolvents = np.linalg.solve(
            zs[:, None, None] * eye - a[None, :, :],
            np.broadcast_to(eye, (n, d, d)).copy(),
        )
        weights = (zs - contour.center) / n
        total = np.einsum(
            "k,kij,kjl->il", weights, resolvents, mid[None] @ resolvents
        )
        if prev is not None and opnorm(total - prev) <= CONTOUR_REL_TOL * max(
            1.0, opnorm(total)
        ):
            return total
        prev = total
        n *= 2
    raise ContourError(
        f"contour quadrature did not converge within {CONTOUR_NODE_CAP} nodes"
    )


def solve_gap_contour(
    family: OperatorFamily,
    proj: ProjectionFamily,
    contour: Union[Contour, Callable[[float], Contour]],
    diagnostics=None,
) -> CommutatorSolution:
    """Contour form: B(t) = (1/2 pi i) closed-integral R(z) P'(t) R(z) dz.

    `contour` is either a fixed circle or a map t -> circle; it must
    separate the tracked spectral part (ran P) from the rest at each
    evaluation time.  Passing the `diagnostics` record from
    `spectral.gap_diagnostics` lets the caller enforce the uniform-gap
    verdict up front.
    """
    if diagnostics is not None and not getattr(diagnostics, "uniform_gap", True):
        raise ValueError("gap diagnostics report no uniform gap; "
                         "use the gapless construction instead")

    def b_at(t: float) -> CMatrix:
        a = family.value(t)
        dp = proj.d(t)
        return _sandwich_integral(a, dp, _contour_for(contour, t))

    def residual_at(t: float) -> CMatrix:
        a = family.value(t)
        b = b_at(t)
        return b @ a - a @ b - proj.bracket(t)

    return CommutatorSolution(
        b=b_at,
        residual=residual_at,
        construction="contour",
        dim=family.dim,
    )


def _reduced_resolvent(a: CMatrix, p: CMatrix, z: complex) -> CMatrix:
    """(z - A)^{-1} (1 - P) on the complementary invariant subspace.

    Shifting by +P makes z - A + P invertible whenever z - A is invertible
    off ran P (the shift acts only inside ran P, where z - A is nilpotent
    for the tracked eigenvalue), so the solve is exact -- no limits.
    """
    d = a.shape[0]
    eye = np.eye(d, dtype=complex)
    try:
        return np.linalg.solve(z * eye - a + p, eye - p)
    except np.linalg.LinAlgError as exc:
        raise RayLeavesResolventError(
            float("nan"), 0.0, 0.0
        ) from exc


def solve_gap_pole(
    family: OperatorFamily,
    proj: ProjectionFamily,
    curve: SpectralCurve,
    m0: Optional[int] = None,
) -> CommutatorSolution:
    """Reduced-resolvent power form at an isolated eigenvalue.

    B(t) = sum_{k<m0} Rbar^{k+1} P' (lam-A)^k P + (lam-A)^k P P' Rbar^{k+1}
    with Rbar the reduced resolvent of A(t) at lam(t).  Exact whenever
    (lam-A)^{m0} P = 0, i.e. m0 at least the nilpotency order of the
    tracked part.
    """
    order = int(m0 if m0 is not None else curve.order)
    if order < 1:
        raise ValueError("nilpotency order m0 must be >= 1")

    def pieces(t: float):
        a = family.value(t)
        p = proj.value(t)
        lam = complex(curve.eigenvalue(t))
        eye = np.eye(a.shape[0], dtype=complex)
        try:
            rbar = np.linalg.solve(lam * eye - a + p, eye - p)
        except np.linalg.LinAlgError:
            raise RuntimeError(
                f"reduced resolvent singular at t={t}: the tracked eigenvalue "
                f"is not isolated from the complementary spectrum"
            ) from None
        return a, p, lam, rbar

    def b_at(t: float) -> CMatrix:
        a, p, lam, rbar = pieces(t)
        dp = proj.d(t)
        eye = np.eye(a.shape[0], dtype=complex)
        nil = lam * eye - a
        b = np.zeros_like(a)
        rbar_pow = rbar
        nil_pow_p = p.copy()
        for _ in range(order):
            b += rbar_pow @ dp @ nil_pow_p + nil_pow_p @ dp @ rbar_pow
            rbar_pow = rbar_pow @ rbar
            nil_pow_p = nil @ nil_pow_p
        return b

    def residual_at(t: float) -> CMatrix:
        a = family.value(t)
        b = b_at(t)
        return b @ a - a @ b - proj.bracket(t)

    return CommutatorSolution(
        b=b_at,
        residual=residual_at,
        construction="pole_form",
        dim=family.dim,
        params={"m0": order},
    )


# ---------------------------------------------------------------------------
# gapless construction
# ---------------------------------------------------------------------------


def _ray_resolvent(
    a: CMatrix, p: CMatrix, lam: complex, theta: float, delta: float, t: float
) -> CMatrix:
    d = a.shape[0]
    eye = np.eye(d, dtype=complex)
    z = lam + delta * np.exp(1j * theta)
    shifted = z * eye - a
    sigma_min = float(np.linalg.svd(shifted, compute_uv=False)[-1])
    scale = max(opnorm(a), 1.0)
    if sigma_min <= 1e-13 * scale:
        raise RayLeavesResolventError(t, delta, sigma_min)
    return np.linalg.solve(shifted, eye - p)


def _nogap_pieces(
    family: OperatorFamily,
    proj: ProjectionFamily,
    curve: SpectralCurve,
    qn: MollifiedDerivative,
    deltas: np.ndarray,
    t: float,
):
    """Shared per-t assembly for the gapless solver: returns (B, C+, C-)."""
    a = family.value(t)
    p = proj.value(t)
    lam = complex(curve.eigenvalue(t))
    theta = float(curve.ray_angle(t))
    q = qn.value(t)
    eye = np.eye(a.shape[0], dtype=complex)
    nil = lam * eye - a
    m0 = len(deltas)

    rbars = [_ray_resolvent(a, p, lam, theta, float(dl), t) for dl in deltas]
    prods = []
    acc = eye
    for rb in rbars:
        acc = acc @ rb
        prods.append(acc)
    nil_pows = [p.copy()]
    for _ in range(m0 - 1):
        nil_pows.append(nil @ nil_pows[-1])

    phase = np.exp(1j * theta)
    b = np.zeros_like(a)
    c_plus = np.zeros_like(a)
    c_minus = np.zeros_like(a)
    for k in range(m0):
        left = prods[k] @ q @ nil_pows[k]
        right = nil_pows[k] @ q @ prods[k]
        b += left + right
        c_plus += deltas[k] * phase * left
        c_minus += deltas[k] * phase * right
    return b, c_plus, c_minus, q, p


def solve_nogap(
    family: OperatorFamily,
    proj: ProjectionFamily,
    curve: SpectralCurve,
    n: int,
    deltas: Sequence[float],
) -> CommutatorSolution:
    """Gapless surrogate B_{n,delta} with explicit remainders C+ and C-.

    Each of the m0 reduced resolvents is evaluated a distance delta_i
    into the resolvent set along the curve's ray, and P' is replaced by
    its mollification Q_n.  The identity

        B A - A B + (C+ - C-) = [Q_n, P]

    holds exactly (to roundoff); the remainders scale like the leading
    delta and are returned separately so that scaling can be measured.
    """
    deltas = np.asarray(list(deltas), dtype=float)
    if deltas.ndim != 1 or len(deltas) < 1 or np.any(deltas <= 0):
        raise ValueError("deltas must be a nonempty vector of positive reals")
    qn = MollifiedDerivative(proj, n)

    # the construction needs the tracked block nilpotent of order <= m0
    m0 = len(deltas)
    t_probe = 0.5 * (family.t_lo + family.t_hi)
    a_p = family.value(t_probe)
    p_p = proj.value(t_probe)
    lam_p = complex(curve.eigenvalue(t_probe))
    nil_p = np.linalg.matrix_power(
        lam_p * np.eye(family.dim) - a_p, m0
    ) @ p_p
    scale = max(opnorm(a_p), 1.0)
    if opnorm(nil_p) > 1e-8 * scale ** m0:
        raise ValueError(
            f"(lam - A)^{m0} P does not vanish (norm {opnorm(nil_p):.3g}); "
            f"the delta vector needs one entry per nilpotency order"
        )

    def b_at(t: float) -> CMatrix:
        return _nogap_pieces(family, proj, curve, qn, deltas, t)[0]

    def c_plus_at(t: float) -> CMatrix:
        return _nogap_pieces(family, proj, curve, qn, deltas, t)[1]

    def c_minus_at(t: float) -> CMatrix:
        return _nogap_pieces(family, proj, curve, qn, deltas, t)[2]

    def residual_at(t: float) -> CMatrix:
        a = family.value(t)
        b, cp, cm, q, p = _nogap_pieces(family, proj, curve, qn, deltas, t)
        return b @ a - a @ b + (cp - cm) - (q @ p - p @ q)

    return CommutatorSolution(
        b=b_at,
        residual=residual_at,
        construction="approximate",
        dim=family.dim,
        c_plus=c_plus_at,
        c_minus=c_minus_at,
        params={"n": int(n), "deltas": deltas.copy()},
    )


# ---------------------------------------------------------------------------
# delta schedules
# ---------------------------------------------------------------------------


def delta_schedule(
    eps: float,
    m0: int,
    eta: Callable[[float], float],
    variant: str = "quantitative",
    delta0: float = 1.0,
) -> np.ndarray:
    """Ray distances delta_1 >= ... >= delta_m0 coupled to the slowness eps.

    quantitative: delta_m0 = eps^(1/(m0(m0+1))), then
        delta_{k-1} = eta(delta_k)^(1/2) downwards.
    qualitative:  delta_m0 = eps^(1/(m0+1)^2), then each earlier entry is
        the max over ((prod of the deltas strictly between)^-1 *
        eta(delta_k))^(1/2) and the eps power itself.

    eta must be non-decreasing near 0 with eta(delta) -> 0; values below
    delta are clamped up to delta (with a warning), values of delta above
    delta0 are clamped down to delta0 (with a warning).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if m0 < 1:
        raise ValueError("m0 must be >= 1")
    if variant not in ("quantitative", "qualitative"):
        raise ValueError(f"unknown schedule variant {variant!r}")

    def clamp_domain(value: float) -> float:
        if value > delta0:
            warnings.warn(
                f"schedule value {value:.3g} above delta0={delta0:.3g}; clamped",
                RuntimeWarning,
                stacklevel=3,
            )
            return delta0
        return value

    def eta_eff(delta: float) -> float:
        raw = float(eta(delta))
        if raw < delta:
            warnings.warn(
                f"eta({delta:.3g})={raw:.3g} below delta; clamped up "
                f"(eta must dominate delta for the recursion to contract)",
                RuntimeWarning,
                stacklevel=3,
            )
            return delta
        return raw

    out = np.empty(m0, dtype=float)
    if variant == "quantitative":
        out[m0 - 1] = clamp_domain(eps ** (1.0 / (m0 * (m0 + 1))))
        for k in range(m0 - 2, -1, -1):
            out[k] = clamp_domain(math.sqrt(eta_eff(out[k + 1])))
        return out

    base = eps ** (1.0 / (m0 + 1) ** 2)
    out[m0 - 1] = clamp_domain(base)
    for l in range(1, m0):
        i0 = m0 - l  # 1-based index of the entry being defined
        cands = [base]
        for k in range(i0 + 1, m0 + 1):
            between = np.prod(out[i0 : k - 1]) if k - 1 > i0 else 1.0
            cands.append(math.sqrt(eta_eff(out[k - 1]) / between))
        out[i0 - 1] = clamp_domain(max(cands))
    return out


# ---------------------------------------------------------------------------
# several spectral parts at once
# ---------------------------------------------------------------------------


def _check_multi_inputs(
    family: OperatorFamily,
    curves: Sequence[SpectralCurve],
    projections: Sequence[ProjectionFamily],
    probe: np.ndarray,
) -> None:
    if len(curves) != len(projections) or not curves:
        raise ValueError("need matching, nonempty curve and projection lists")
    scale_probe = max(opnorm(family.value(float(probe[0]))), 1.0)
    for i, pi in enumerate(projections):
        for j in range(i + 1, len(projections)):
            worst = max(
                opnorm(pi.value(t) @ projections[j].value(t)) for t in probe
            )
            if worst > 1e-9:
                raise ValueError(
                    f"projections {i} and {j} overlap (||P_i P_j|| = {worst:.3g})"
                )
    for i in range(len(curves)):
        for j in range(i + 1, len(curves)):
            hits = sum(
                1 for t in probe
                if abs(curves[i].eigenvalue(t) - curves[j].eigenvalue(t))
                <= 1e-9 * scale_probe
            )
            if hits > 0.1 * len(probe):
                raise ValueError(
                    f"curves {i} and {j} collide on {hits}/{len(probe)} probe "
                    f"points; persistent collisions are not supported"
                )


def solve_multi(
    family: OperatorFamily,
    curves: Sequence[SpectralCurve],
    projections: Sequence[ProjectionFamily],
    mode: str = "gap",
    contours: Optional[Sequence[Union[Contour, Callable[[float], Contour]]]] = None,
    n: Optional[int] = None,
    deltas: Optional[Sequence[float]] = None,
    probe_points: int = 21,
) -> CommutatorSolution:
    """Simultaneous transport for r disjoint spectral parts.

    The target is K(t) = (1/2) sum_{j=1}^{r+1} [P_j', P_j] including the
    complement P_{r+1} = 1 - sum_j P_j.  In gap mode each part gets its
    contour integral and the complement term reuses the union of the
    contours; in nogap mode each pair (j, j') contributes a mollified
    ray-resolvent block, and the identity against the mollified target
    K_n(t) holds exactly with the remainders included.
    """
    probe = np.linspace(family.t_lo, family.t_hi, probe_points)
    _check_multi_inputs(family, curves, projections, probe)
    r = len(curves)
    d = family.dim
    eye = np.eye(d, dtype=complex)

    def k_target(t: float) -> CMatrix:
        total = np.zeros((d, d), dtype=complex)
        p_sum = np.zeros((d, d), dtype=complex)
        dp_sum = np.zeros((d, d), dtype=complex)
        for pj in projections:
            p, dp = pj.value(t), pj.d(t)
            total += dp @ p - p @ dp
            p_sum += p
            dp_sum += dp
        pc, dpc = eye - p_sum, -dp_sum
        total += dpc @ pc - pc @ dpc
        return 0.5 * total

    if mode == "gap":
        if contours is None or len(contours) != r:
            raise ValueError("gap mode needs one contour per curve")

        def b_at(t: float) -> CMatrix:
            a = family.value(t)
            dp_sum = sum(pj.d(t) for pj in projections)
            total = np.zeros((d, d), dtype=complex)
            for j in range(r):
                cj = _contour_for(contours[j], t)
                # own part plus the complement term restricted to this
                # contour (the complement integral runs over the union)
                total += _sandwich_integral(a, projections[j].d(t), cj)
                total += _sandwich_integral(a, dp_sum, cj)
            return 0.5 * total

        def residual_at(t: float) -> CMatrix:
            a = family.value(t)
            b = b_at(t)
            return b @ a - a @ b - k_target(t)

        return CommutatorSolution(
            b=b_at, residual=residual_at, construction="contour",
            dim=d, params={"parts": r},
        )

    if mode != "nogap":
        raise ValueError(f"unknown mode {mode!r}")
    if n is None or deltas is None:
        raise ValueError("nogap mode needs the mollification index n and deltas")
    deltas = np.asarray(list(deltas), dtype=float)
    if np.any(deltas <= 0):
        raise ValueError("deltas must be positive")
    mollified = [MollifiedDerivative(pj, n) for pj in projections]

    t_mid = 0.5 * (family.t_lo + family.t_hi)
    a_mid = family.value(t_mid)
    scale = max(opnorm(a_mid), 1.0)
    for j in range(r):
        nil_j = np.linalg.matrix_power(
            complex(curves[j].eigenvalue(t_mid)) * eye - a_mid, len(deltas)
        ) @ projections[j].value(t_mid)
        if opnorm(nil_j) > 1e-8 * scale ** len(deltas):
            raise ValueError(
                f"(lam_{j} - A)^{len(deltas)} P_{j} does not vanish; the "
                f"delta vector needs one entry per nilpotency order"
            )

    def assemble(t: float):
        a = family.value(t)
        b = np.zeros((d, d), dtype=complex)
        c_plus = np.zeros((d, d), dtype=complex)
        c_minus = np.zeros((d, d), dtype=complex)
        kn = np.zeros((d, d), dtype=complex)
        qs = [m.value(t) for m in mollified]
        ps = [pj.value(t) for pj in projections]
        for j in range(r):
            lam = complex(curves[j].eigenvalue(t))
            theta = float(curves[j].ray_angle(t))
            phase = np.exp(1j * theta)
            nil = lam * eye - a
            m_j = len(deltas)
            rbars = [
                _ray_resolvent(a, ps[j], lam, theta, float(dl), t)
                for dl in deltas
            ]
            prods = []
            acc = eye
            for rb in rbars:
                acc = acc @ rb
                prods.append(acc)
            nil_pows = [ps[j].copy()]
            for _ in range(m_j - 1):
                nil_pows.append(nil @ nil_pows[-1])
            pbar_j = eye - ps[j]
            for jp in range(r):
                # own-part blocks count once; the complement part brings
                # every (j, j') pairing once more
                weight = 2.0 if jp == j else 1.0
                q = qs[jp]
                kn += 0.5 * weight * (pbar_j @ q @ ps[j] - ps[j] @ q @ pbar_j)
                for k in range(m_j):
                    left = prods[k] @ q @ nil_pows[k]
                    right = nil_pows[k] @ q @ prods[k]
                    b += 0.5 * weight * (left + right)
                    c_plus += 0.5 * weight * deltas[k] * phase * left
                    c_minus += 0.5 * weight * deltas[k] * phase * right
        return b, c_plus, c_minus, kn

    def b_at(t: float) -> CMatrix:
        return assemble(t)[0]

    def c_plus_at(t: float) -> CMatrix:
        return assemble(t)[1]

    def c_minus_at(t: float) -> CMatrix:
        return assemble(t)[2]

    def residual_at(t: float) -> CMatrix:
        a = family.value(t)
        b, cp, cm, kn = assemble(t)
        return b @ a - a @ b + (cp - cm) - kn

    return CommutatorSolution(
        b=b_at, residual=residual_at, construction="approximate",
        dim=d, c_plus=c_plus_at, c_minus=c_minus_at,
        params={"parts": r, "n": int(n), "deltas": deltas.copy()},
    )
