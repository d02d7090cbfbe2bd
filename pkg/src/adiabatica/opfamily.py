"""Time-dependent operator families and the built-in example catalogue.

Everything downstream (propagators, projections, commutator solvers, the
benchmark harness) consumes three small container types defined here:

``OperatorFamily``
    a matrix-valued map ``t -> A(t)`` on a closed interval, with an optional
    analytic derivative sampler and optional vectorised ("batch") samplers
    used by the propagator hot path.

``ProjectionFamily``
    a projection-valued map ``t -> P(t)`` with first and (optionally) second
    derivatives and a fixed rank.

``SpectralCurve``
    a tracked eigenvalue ``t -> lambda(t)`` together with a ray direction
    ``t -> theta(t)`` and a ray length ``delta0``; the half-open ray
    ``lambda(t) + delta*exp(i*theta(t))``, ``0 < delta <= delta0``, is
    required to stay in the resolvent set.

The catalogue (`example`) provides ready-made triples: uniformly gapped
blocks, an eigenvalue crossing, truncations of two dense/continuous-spectrum
models, a rotating rank-one family violating the stability hypothesis, a
commuting multiplication model with an exact propagator, and a tunable
spectral-density model with prescribed small-``delta`` resolvent statistics.
Infinite-dimensional models are truncated to a finite size ``D``; every
truncated entry documents the artificial scale this introduces and exports a
``floor_epsilon`` hint in its metadata below which the emulation is no longer
faithful.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .matrixkit import CMatrix, MAX_DIM, as_cmatrix, opnorm, expm_many

__all__ = [
    "FD_STEP",
    "SMOOTHNESS_FLAGS",
    "OperatorFamily",
    "ProjectionFamily",
    "SpectralCurve",
    "similarity_family",
    "example",
    "registry_manifest",
    "list_examples",
    "enumerate_rationals",
]

FD_STEP = 1e-5
SMOOTHNESS_FLAGS = ("W11", "W1inf", "C1", "C2")

# Target size (bytes) of one batched (K, d, d) block; callers chunk to this.
_BATCH_BYTES = 2.5e8


def batch_size(dim: int) -> int:
    """Suggested number of time nodes per vectorised evaluation chunk."""
    return int(min(65536, max(512, _BATCH_BYTES // (16 * dim * dim))))


def _fd_derivative(value, t, lo, hi, h=FD_STEP):
    """Central difference, falling back to 2nd-order one-sided at endpoints."""
    if t - h < lo:
        return (-3.0 * value(t) + 4.0 * value(t + h) - value(t + 2 * h)) / (2 * h)
    if t + h > hi:
        return (3.0 * value(t) - 4.0 * value(t - h) + value(t - 2 * h)) / (2 * h)
    return (value(t + h) - value(t - h)) / (2 * h)


@dataclass
class OperatorFamily:
    """A matrix family ``t -> A(t)`` on ``[t_lo, t_hi]``.

    Parameters
    ----------
    dim : int
        Matrix dimension.
    value : callable
        ``t -> (dim, dim) complex ndarray``.
    derivative : callable, optional
        Analytic derivative sampler; when absent, ``d`` uses a central
        difference with step ``FD_STEP``.
    value_batch, derivative_batch : callable, optional
        Vectorised samplers mapping a shape-``(K,)`` float array to a
        ``(K, dim, dim)`` array.  Used by the propagator hot path.
    smoothness : str
        One of ``SMOOTHNESS_FLAGS``; purely informational.
    metadata : dict
        Free-form provenance (truncation size, floor_epsilon, exact
        solutions for tests, ...).
    """

    dim: int
    value: Callable[[float], CMatrix]
    derivative: Optional[Callable[[float], CMatrix]] = None
    value_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    derivative_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    smoothness: str = "C2"
    name: str = ""
    t_lo: float = 0.0
    t_hi: float = 1.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (1 <= self.dim <= MAX_DIM):
            raise ValueError(f"dimension {self.dim} outside [1, {MAX_DIM}]")
        if self.smoothness not in SMOOTHNESS_FLAGS:
            raise ValueError(f"smoothness must be one of {SMOOTHNESS_FLAGS}")

    def __call__(self, t: float) -> CMatrix:
        return self.value(float(t))

    def d(self, t: float) -> CMatrix:
        """Derivative A'(t) (analytic when available, else finite difference)."""
        if self.derivative is not None:
            return self.derivative(float(t))
        return _fd_derivative(self.value, float(t), self.t_lo, self.t_hi)

    def sample(self, ts: np.ndarray) -> np.ndarray:
        """Stack A(t) over a 1-D array of times, shape (K, dim, dim)."""
        ts = np.asarray(ts, dtype=float)
        if self.value_batch is not None:
            return self.value_batch(ts)
        return np.stack([self.value(t) for t in ts])

    def d_sample(self, ts: np.ndarray) -> np.ndarray:
        """Stack A'(t) over a 1-D array of times."""
        ts = np.asarray(ts, dtype=float)
        if self.derivative_batch is not None:
            return self.derivative_batch(ts)
        return np.stack([self.d(t) for t in ts])


@dataclass
class ProjectionFamily:
    """A projection family ``t -> P(t)`` with derivatives and fixed rank."""

    dim: int
    value: Callable[[float], CMatrix]
    rank: int
    derivative: Optional[Callable[[float], CMatrix]] = None
    second_derivative: Optional[Callable[[float], CMatrix]] = None
    value_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    derivative_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""
    t_lo: float = 0.0
    t_hi: float = 1.0
    metadata: dict = field(default_factory=dict)

    def __call__(self, t: float) -> CMatrix:
        return self.value(float(t))

    def d(self, t: float) -> CMatrix:
        if self.derivative is not None:
            return self.derivative(float(t))
        return _fd_derivative(self.value, float(t), self.t_lo, self.t_hi)

    def d2(self, t: float) -> CMatrix:
        if self.second_derivative is not None:
            return self.second_derivative(float(t))
        return _fd_derivative(self.d, float(t), self.t_lo, self.t_hi)

    def bracket(self, t: float) -> CMatrix:
        """The commutator [P'(t), P(t)] driving the intertwined evolution."""
        p = self.value(float(t))
        dp = self.d(float(t))
        return dp @ p - p @ dp

    def sample(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if self.value_batch is not None:
            return self.value_batch(ts)
        return np.stack([self.value(t) for t in ts])

    def d_sample(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if self.derivative_batch is not None:
            return self.derivative_batch(ts)
        return np.stack([self.d(t) for t in ts])

    def bracket_sample(self, ts: np.ndarray) -> np.ndarray:
        p = self.sample(ts)
        dp = self.d_sample(ts)
        return dp @ p - p @ dp


@dataclass
class SpectralCurve:
    """A tracked eigenvalue curve with a resolvent ray.

    ``eigenvalue(t)`` must be an eigenvalue of the associated family for
    every ``t``; the ray ``eigenvalue(t) + delta * exp(1j*ray_angle(t))``
    stays in the resolvent set for ``0 < delta <= ray_radius``.  ``order``
    is the nilpotency order of ``(A(t) - eigenvalue(t))`` restricted to the
    range of the tracked projection (1 for semisimple eigenvalues).
    """

    eigenvalue: Callable[[float], complex]
    ray_angle: Callable[[float], float]
    ray_radius: float
    order: int = 1
    eigenvalue_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ray_radius <= 0:
            raise ValueError("ray_radius must be positive")
        if self.order < 1:
            raise ValueError("order must be >= 1")

    def lam(self, t: float) -> complex:
        return complex(self.eigenvalue(float(t)))

    def lam_sample(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if self.eigenvalue_batch is not None:
            return np.asarray(self.eigenvalue_batch(ts), dtype=complex)
        return np.array([self.eigenvalue(t) for t in ts], dtype=complex)

    def ray_point(self, t: float, delta: float) -> complex:
        """The probe point ``lambda(t) + delta * exp(1j * theta(t))``."""
        if not 0.0 < delta <= self.ray_radius:
            raise ValueError(
                f"delta={delta} outside the admissible ray (0, {self.ray_radius}]"
            )
        return self.lam(t) + delta * np.exp(1j * self.ray_angle(float(t)))


# ---------------------------------------------------------------------------
# similarity transforms R(t) = exp(C t)
# ---------------------------------------------------------------------------


class _Conjugator:
    """Batched evaluation of R(t) = exp(C t) and its inverse.

    Three routes, picked once at construction:
    - C == 0: identities;
    - C normal (in particular skew-Hermitian): eigendecomposition, so a
      (K, d, d) stack costs one broadcast multiply and one matmul;
    - C nilpotent: truncated power series (exact, since the series both
      terminates and its tail is below roundoff);
    - anything else: batched scaling-and-squaring.
    """

    def __init__(self, c: CMatrix):
        c = as_cmatrix(c, square=True)
        self.dim = c.shape[0]
        self.c = c
        self.norm = opnorm(c)
        eye = np.eye(self.dim, dtype=complex)
        if self.norm == 0.0:
            self.mode = "zero"
            return
        if opnorm(c @ c.conj().T - c.conj().T @ c) <= 1e-13 * self.norm**2:
            # normal: exp(Ct) = V diag(exp(w t)) V^H with unitary V
            w, v = np.linalg.eig(c)
            # re-orthonormalise the eigenbasis (eig returns one up to roundoff)
            v, _ = np.linalg.qr(v)
            # QR may mix degenerate eigenvectors; recompute w on the new basis
            w = np.diag(v.conj().T @ c @ v).copy()
            if opnorm((v * w) @ v.conj().T - c) <= 1e-12 * max(1.0, self.norm):
                self.mode = "normal"
                self.w, self.v = w, v
                return
        # truncated power series: valid when C is nilpotent or the tail
        # coefficients ||C^j||/j! drop below roundoff (times are in [-1, 1])
        powers = [eye]
        p = eye
        tail_ok = False
        for j in range(1, self.dim + 1):
            p = p @ c
            if opnorm(p) == 0.0 or opnorm(p) / math.factorial(j) < 1e-20:
                tail_ok = True
                break
            powers.append(p.copy())
        if tail_ok:
            self.mode = "series"
            self.powers = np.stack(powers)
            return
        self.mode = "dense"

    def at(self, ts: np.ndarray, sign: float = 1.0) -> np.ndarray:
        """R(sign*t) over a 1-D time array, shape (K, d, d)."""
        ts = sign * np.asarray(ts, dtype=float)
        k, d = ts.shape[0], self.dim
        if self.mode == "zero":
            return np.broadcast_to(np.eye(d, dtype=complex), (k, d, d)).copy()
        if self.mode == "normal":
            phases = np.exp(np.multiply.outer(ts, self.w))  # (K, d)
            return np.einsum("ij,kj,lj->kil", self.v, phases, self.v.conj())
        if self.mode == "series" and np.max(np.abs(ts), initial=0.0) <= 1.0 + 1e-9:
            j = np.arange(self.powers.shape[0])
            coef = ts[:, None] ** j / np.array([math.factorial(i) for i in j])
            return np.tensordot(coef, self.powers, axes=(1, 0))
        return expm_many(ts[:, None, None] * self.c)

    def inv_at(self, ts: np.ndarray) -> np.ndarray:
        return self.at(ts, sign=-1.0)

    def conjugate_batch(self, ts: np.ndarray, stack: np.ndarray) -> np.ndarray:
        """R(t)^-1 @ stack_t @ R(t) for each t."""
        r = self.at(ts)
        rinv = self.inv_at(ts)
        return rinv @ stack @ r


def similarity_family(a0: OperatorFamily, c: CMatrix) -> OperatorFamily:
    """Conjugate a family by the one-parameter group ``exp(C t)``.

    Returns the family ``t -> exp(-Ct) A0(t) exp(Ct)`` with the analytic
    derivative ``exp(-Ct) (A0'(t) + [A0(t), C]) exp(Ct)``.
    """
    c = as_cmatrix(c, square=True)
    if c.shape[0] != a0.dim:
        raise ValueError(f"dimension mismatch: family {a0.dim}, transform {c.shape[0]}")
    conj = _Conjugator(c)

    def value(t: float) -> CMatrix:
        return conj.conjugate_batch(np.array([t]), a0(t)[None])[0]

    def derivative(t: float) -> CMatrix:
        a = a0(t)
        core = a0.d(t) + a @ c - c @ a
        return conj.conjugate_batch(np.array([t]), core[None])[0]

    def value_batch(ts: np.ndarray) -> np.ndarray:
        return conj.conjugate_batch(ts, a0.sample(ts))

    def derivative_batch(ts: np.ndarray) -> np.ndarray:
        a = a0.sample(ts)
        core = a0.d_sample(ts) + a @ c - c @ a
        return conj.conjugate_batch(ts, core)

    meta = dict(a0.metadata)
    meta["similarity_norm"] = conj.norm
    return OperatorFamily(
        dim=a0.dim,
        value=value,
        derivative=derivative,
        value_batch=value_batch,
        derivative_batch=derivative_batch,
        smoothness=a0.smoothness,
        name=a0.name + "~conjugated" if a0.name else "conjugated",
        t_lo=a0.t_lo,
        t_hi=a0.t_hi,
        metadata=meta,
    )


def _conjugated_projection(p0: CMatrix, conj: _Conjugator, rank: int,
                           name: str = "", metadata: dict | None = None) -> ProjectionFamily:
    """Projection family exp(-Ct) P0 exp(Ct) for constant P0, with exact
    derivatives from the commutator ladder P' = R^-1 [P0, C] R and so on."""
    c = conj.c if conj.norm else np.zeros((conj.dim, conj.dim), dtype=complex)
    b1 = p0 @ c - c @ p0
    b2 = b1 @ c - c @ b1

    def value(t):
        return conj.conjugate_batch(np.array([t]), p0[None])[0]

    def derivative(t):
        return conj.conjugate_batch(np.array([t]), b1[None])[0]

    def second(t):
        return conj.conjugate_batch(np.array([t]), b2[None])[0]

    def value_batch(ts):
        return conj.conjugate_batch(ts, np.broadcast_to(p0, (len(ts),) + p0.shape))

    def derivative_batch(ts):
        return conj.conjugate_batch(ts, np.broadcast_to(b1, (len(ts),) + b1.shape))

    return ProjectionFamily(
        dim=conj.dim,
        value=value,
        rank=rank,
        derivative=derivative,
        second_derivative=second,
        value_batch=value_batch,
        derivative_batch=derivative_batch,
        name=name,
        metadata=metadata or {},
    )


# ---------------------------------------------------------------------------
# example catalogue
# ---------------------------------------------------------------------------


def enumerate_rationals(count: int) -> list[Fraction]:
    """First ``count`` rationals of a fixed enumeration of [-1, 0].

    The enumeration starts with the endpoints 0 and -1 and then maps the
    breadth-first binary-tree (Calkin-Wilf) enumeration q_1=1,
    q_{k+1} = 1/(2*floor(q_k) + 1 - q_k) of the positive rationals into the
    open interval via q -> -q/(1+q).  The map is injective, so the values
    are pairwise distinct, and every rational in [-1, 0] appears exactly
    once in the full sequence.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    out = [Fraction(0), Fraction(-1)]
    q = Fraction(1)
    while len(out) < count:
        out.append(-q / (1 + q))
        q = 1 / (2 * (q.numerator // q.denominator) + 1 - q)
    return out[:count]


def _jordan_block_family(dim_total, lam, dlam, alpha, dalpha, block_dim, diag_rest,
                         ddiag_rest):
    """Block family: (lam(t) + alpha(t) N) on the leading block_dim slots, a
    diagonal curve on the rest.  All samplers vectorised."""
    n_rest = dim_total - block_dim
    nil = np.diag(np.ones(block_dim - 1), 1).astype(complex)

    def build(ts, f_lam, f_alpha, f_rest):
        k = len(ts)
        out = np.zeros((k, dim_total, dim_total), dtype=complex)
        lam_v = np.asarray(f_lam(ts), dtype=complex)
        idx = np.arange(block_dim)
        out[:, idx, idx] = lam_v[:, None]
        out[:, :block_dim, :block_dim] += np.asarray(f_alpha(ts), dtype=complex)[
            :, None, None] * nil
        if n_rest:
            rest = np.asarray(f_rest(ts), dtype=complex)  # (K, n_rest)
            jdx = np.arange(block_dim, dim_total)
            out[:, jdx, jdx] = rest
        return out

    def value_batch(ts):
        return build(ts, lam, alpha, diag_rest)

    def derivative_batch(ts):
        return build(ts, dlam, dalpha, ddiag_rest)

    return value_batch, derivative_batch


def _family_from_batches(dim, value_batch, derivative_batch, name, metadata,
                         smoothness="C2"):
    def value(t):
        return value_batch(np.array([float(t)]))[0]

    def derivative(t):
        return derivative_batch(np.array([float(t)]))[0]

    return OperatorFamily(
        dim=dim,
        value=value,
        derivative=derivative,
        value_batch=value_batch,
        derivative_batch=derivative_batch,
        smoothness=smoothness,
        name=name,
        metadata=metadata,
    )


def _build_gap_uniform(d: int = 6, gap: float = 1.0, coupling: float = 1.0,
                       damping: float = 0.0):
    """Uniformly gapped family: a rotated block pair.

    Leading 2x2 block carries the tracked eigenvalue lam(t) = -t/3 - damping
    with a nilpotent part alpha(t) N, alpha(t) = t^2 (the contraction
    condition -Re lam >= r0 * alpha holds with r0 = 1/3 at damping 0); the
    remaining d-2 eigenvalues keep distance >= gap from lam(t) for all t.
    A skew-symmetric rotation makes P(t) genuinely time dependent while
    preserving norms.
    """
    if d < 3 or d > MAX_DIM:
        raise ValueError("gap_uniform needs 3 <= d <= MAX_DIM")
    if gap <= 0:
        raise ValueError("gap must be positive")
    offsets = -gap - 0.4 * np.arange(d - 2)
    imag = 0.3 * np.sin(1.0 + np.arange(d - 2))
    imag[0] = 0.0  # keep the nearest eigenvalue exactly `gap` away

    def lam(ts):
        return -ts / 3.0 - damping + 0j

    def dlam(ts):
        return -np.ones_like(ts) / 3.0 + 0j

    def rest(ts):
        return lam(ts)[:, None] + (offsets + 1j * imag)[None, :]

    def drest(ts):
        return np.broadcast_to(dlam(ts)[:, None], (len(ts), d - 2)).copy()

    vb, db = _jordan_block_family(d, lam, dlam, lambda ts: ts**2,
                                  lambda ts: 2 * ts, 2, rest, drest)
    c = np.zeros((d, d))
    for (i, j, w) in ((0, 2, 0.6), (1, 3, 0.4), (2, 4, 0.3)):
        if j < d:
            c[j, i], c[i, j] = w, -w
    c = coupling * c
    meta = {
        "gap": gap,
        "damping": damping,
        "coupling": coupling,
        "stability_margin": 1.0,  # (M,0)-stable; see module tests
        "contraction_ratio": 1.0 / 3.0,  # r0 in -Re lam >= r0 * alpha
        "floor_epsilon": None,
        "block_structure": {
            "eigenvalue": lam,
            "nilpotent_amplitude": lambda ts: ts**2,
            "nilpotent_dim": 2,
        },
    }
    a0 = _family_from_batches(d, vb, db, "gap_uniform", meta)
    fam = similarity_family(a0, c)
    fam.name = "gap_uniform"
    fam.metadata = meta
    conj = _Conjugator(c)
    p0 = np.zeros((d, d), dtype=complex)
    p0[0, 0] = p0[1, 1] = 1.0
    proj = _conjugated_projection(p0, conj, rank=2, name="gap_uniform")
    curve = SpectralCurve(
        eigenvalue=lambda t: -t / 3.0 - damping + 0j,
        ray_angle=lambda t: 0.0,
        ray_radius=gap / 2.0,
        order=2,
        eigenvalue_batch=lam,
        name="gap_uniform",
    )
    return fam, curve, proj


def _build_gap_crossing(d: int = 3, slope: float = 1.0, coupling: float = 1.0):
    """Two imaginary eigenvalue curves crossing once at t = 1/2, plus
    spectators, all mixed by an orthogonal rotation.  Norm-preserving, so
    the slow evolution is unitary; only the crossing limits the rate."""
    if d < 2 or d > MAX_DIM:
        raise ValueError("gap_crossing needs 2 <= d <= MAX_DIM")

    def curves(ts):
        k = len(ts)
        out = np.zeros((k, d), dtype=complex)
        out[:, 0] = 1j * slope * (ts - 0.5)
        if d > 1:
            out[:, 1] = -1j * slope * (ts - 0.5)
        for j in range(2, d):
            out[:, j] = -1j * (1.5 + 0.7 * (j - 1))
        return out

    def dcurves(ts):
        k = len(ts)
        out = np.zeros((k, d), dtype=complex)
        out[:, 0] = 1j * slope
        if d > 1:
            out[:, 1] = -1j * slope
        return out

    def vb(ts):
        k = len(ts)
        out = np.zeros((k, d, d), dtype=complex)
        idx = np.arange(d)
        out[:, idx, idx] = curves(ts)
        return out

    def db(ts):
        k = len(ts)
        out = np.zeros((k, d, d), dtype=complex)
        idx = np.arange(d)
        out[:, idx, idx] = dcurves(ts)
        return out

    c = np.zeros((d, d))
    weights = [0.8, 0.5, 0.3]
    for j in range(1, min(d, 4)):
        w = weights[j - 1]
        c[j, j - 1], c[j - 1, j] = w, -w
    c = coupling * c
    meta = {"crossing_times": [0.5], "floor_epsilon": None, "slope": slope}
    a0 = _family_from_batches(d, vb, db, "gap_crossing", meta)
    fam = similarity_family(a0, c)
    fam.name = "gap_crossing"
    fam.metadata = meta
    conj = _Conjugator(c)
    p0 = np.zeros((d, d), dtype=complex)
    p0[0, 0] = 1.0
    proj = _conjugated_projection(p0, conj, rank=1, name="gap_crossing")
    curve = SpectralCurve(
        eigenvalue=lambda t: 1j * slope * (t - 0.5),
        ray_angle=lambda t: 0.0,
        ray_radius=0.5,
        order=1,
        eigenvalue_batch=lambda ts: 1j * slope * (ts - 0.5),
        name="gap_crossing",
    )
    return fam, curve, proj


def _build_nogap_dense_rationals(d: int = 2, D: int = 32, shift_strength: float = 0.35):
    """Truncated dense-spectrum model: a nilpotent 2x2 block rides the curve
    lam(t) = -t through a diagonal of rationals filling [-1, 0].

    The first ``D`` terms of a fixed rational enumeration sit on the
    diagonal; lam(t) sweeps through them, so no uniform spectral gap
    protects the tracked eigenvalue.  A unipotent shift conjugation couples
    the blocks.  Truncation leaves a smallest rational spacing; metadata
    records it and the epsilon floor below which genuinely dense behaviour
    is no longer emulated.
    """
    if d < 2:
        raise ValueError("leading block needs d >= 2")
    dim = d + D
    if dim > MAX_DIM:
        raise ValueError(f"d + D = {dim} exceeds MAX_DIM = {MAX_DIM}")
    rats = enumerate_rationals(D)
    lam_n = np.array([float(r) for r in rats])
    spacing = np.min(np.diff(np.sort(lam_n)))

    def lam(ts):
        return -ts + 0j

    def dlam(ts):
        return -np.ones_like(ts) + 0j

    def rest(ts):
        return np.broadcast_to(lam_n, (len(ts), D)).astype(complex)

    def drest(ts):
        return np.zeros((len(ts), D), dtype=complex)

    vb, db = _jordan_block_family(dim, lam, dlam, lambda ts: ts**2 / 2.0,
                                  lambda ts: ts, d, rest, drest)
    c = shift_strength * np.diag(np.ones(dim - 1), -1).astype(complex)
    # schedule components scale like eps^(1/6) for a rank-2 nilpotent block;
    # they must stay a few spacings above the truncation scale
    floor_eps = float((3.0 * spacing) ** 6)
    meta = {
        "D": D,
        "rational_spacing": float(spacing),
        "floor_epsilon": floor_eps,
        "contraction_ratio": 2.0,  # -Re lam = t >= 2 * (t^2/2)
        "shift_strength": shift_strength,
        "truncation": "first D terms of a fixed enumeration of [-1,0] cap Q",
        "block_structure": {
            "eigenvalue": lam,
            "nilpotent_amplitude": lambda ts: ts**2 / 2.0,
            "nilpotent_dim": d,
        },
    }
    a0 = _family_from_batches(dim, vb, db, "nogap_dense_rationals", meta)
    fam = similarity_family(a0, c)
    fam.name = "nogap_dense_rationals"
    fam.metadata = meta
    conj = _Conjugator(c)
    p0 = np.zeros((dim, dim), dtype=complex)
    p0[np.arange(d), np.arange(d)] = 1.0
    proj = _conjugated_projection(p0, conj, rank=d, name="nogap_dense_rationals")
    curve = SpectralCurve(
        eigenvalue=lambda t: -t + 0j,
        ray_angle=lambda t: math.pi / 2.0,
        ray_radius=0.5,
        order=d,
        eigenvalue_batch=lam,
        name="nogap_dense_rationals",
    )
    return fam, curve, proj


def _build_nogap_shift(d: int = 2, D: int = 64, coupling: float = 0.7):
    """Truncated shift model: the tracked eigenvalue rides the circle
    |z + 1| = 1 while the bulk is a truncated right shift minus identity.

    In infinite dimension the bulk spectrum is the whole closed unit disk
    around -1 and lam(t) moves through its boundary; truncation collapses
    the bulk spectrum to {-1}, but the resolvent statistics along the
    outward ray are faithful down to delta of order 1/D (a geometric-series
    tail of length D), which is what the commutator machinery consumes.
    """
    if d < 2:
        raise ValueError("leading block needs d >= 2")
    dim = d + D
    if dim > MAX_DIM:
        raise ValueError(f"d + D = {dim} exceeds MAX_DIM = {MAX_DIM}")

    def phi(ts):
        return math.pi / 2.0 * (1.0 + ts)

    def lam(ts):
        return -1.0 + np.exp(1j * phi(ts))

    def dlam(ts):
        return 1j * (math.pi / 2.0) * np.exp(1j * phi(ts))

    def alpha(ts):
        return 0.6 * ts * (1.0 - ts)

    def dalpha(ts):
        return 0.6 * (1.0 - 2.0 * ts)

    def vb(ts):
        k = len(ts)
        out = np.zeros((k, dim, dim), dtype=complex)
        idx = np.arange(d)
        out[:, idx, idx] = lam(ts)[:, None]
        out[:, :d, :d] += alpha(ts)[:, None, None] * np.diag(np.ones(d - 1), 1)
        bulk = np.diag(np.ones(D - 1), -1) - np.eye(D)
        out[:, d:, d:] = bulk
        return out

    def db(ts):
        k = len(ts)
        out = np.zeros((k, dim, dim), dtype=complex)
        idx = np.arange(d)
        out[:, idx, idx] = dlam(ts)[:, None]
        out[:, :d, :d] += dalpha(ts)[:, None, None] * np.diag(np.ones(d - 1), 1)
        return out

    c = np.zeros((dim, dim))
    c[d, d - 1], c[d - 1, d] = coupling, -coupling
    # resolvent tail (1+delta)^-D must be < 1%: delta >= 9.2/D; schedule
    # components scale like eps^(1/6)
    floor_eps = float((9.21 / D) ** 6)
    meta = {
        "D": D,
        "floor_epsilon": floor_eps,
        "coupling": coupling,
        "truncation": "right shift minus identity, truncated to D slots",
        "block_structure": {
            "eigenvalue": lam,
            "nilpotent_amplitude": alpha,
            "nilpotent_dim": d,
        },
    }
    a0 = _family_from_batches(dim, vb, db, "nogap_shift", meta)
    fam = similarity_family(a0, c)
    fam.name = "nogap_shift"
    fam.metadata = meta
    conj = _Conjugator(c)
    p0 = np.zeros((dim, dim), dtype=complex)
    p0[np.arange(d), np.arange(d)] = 1.0
    proj = _conjugated_projection(p0, conj, rank=d, name="nogap_shift")
    curve = SpectralCurve(
        eigenvalue=lambda t: -1.0 + np.exp(1j * math.pi / 2.0 * (1.0 + t)),
        ray_angle=lambda t: math.pi / 2.0 * (1.0 + t),
        ray_radius=0.5,
        order=d,
        eigenvalue_batch=lam,
        name="nogap_shift",
    )
    return fam, curve, proj


def _build_rotation_counterexample(scale: float = 1.0):
    """Rank-one family rotating at constant speed: slow driving does NOT
    follow the spectral subspaces here.

    A(t) = lam(t) P(t) with lam(t) = scale * t and P(t) the orthogonal
    projection onto span(cos(2 pi t), sin(2 pi t)).  All entries of A(t)
    are >= 0 for t in [0, 1/4], which forces the (1,1) entry of the
    propagator to GROW like 1 + integral(lam cos^2)/eps; metadata carries
    the exact lower-bound integral for tests and the harness verdict.
    """
    c = 2.0 * math.pi * np.array([[0.0, 1.0], [-1.0, 0.0]])
    conj = _Conjugator(c)
    p0 = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)

    def lam(ts):
        return scale * ts + 0j

    def vb(ts):
        p = conj.conjugate_batch(ts, np.broadcast_to(p0, (len(ts), 2, 2)))
        return lam(ts)[:, None, None] * p

    def db(ts):
        p = conj.conjugate_batch(ts, np.broadcast_to(p0, (len(ts), 2, 2)))
        b1 = p0 @ c - c @ p0
        dp = conj.conjugate_batch(ts, np.broadcast_to(b1, (len(ts), 2, 2)))
        return scale * p + lam(ts)[:, None, None] * dp

    # integral of lam(tau) cos^2(2 pi tau) over [0, 1/4] for lam = scale*t
    lower_bound_integral = scale * (1.0 / 64.0 - 1.0 / (16.0 * math.pi**2))
    meta = {
        "stability_violated": True,
        "lower_bound_integral": lower_bound_integral,
        "floor_epsilon": None,
        "scale": scale,
    }
    fam = _family_from_batches(2, vb, db, "rotation_counterexample", meta)
    proj = _conjugated_projection(p0, conj, rank=1, name="rotation_counterexample",
                                  metadata={"weakly_associated_order": 1})
    curve = SpectralCurve(
        eigenvalue=lambda t: scale * t + 0j,
        ray_angle=lambda t: math.pi / 2.0,
        ray_radius=0.5,
        order=1,
        eigenvalue_batch=lam,
        name="rotation_counterexample",
    )
    return fam, curve, proj


def _build_multiplication_diag(D: int = 16, tracked: int = 0):
    """Commuting multiplication model: i * f0(x_k + t) on a periodic grid.

    All A(t) commute, the projection onto any grid slot is constant, and
    the propagator has the closed form exp(i * (F(x+t) - F(x+s)) / eps)
    with F the antiderivative of f0; metadata carries that exact solution.
    Eigenvalue curves cross repeatedly, yet slot populations are exactly
    conserved -- the constant-projection limit of the theory.
    """
    if not (1 <= D <= MAX_DIM):
        raise ValueError("D outside range")
    if not (0 <= tracked < D):
        raise ValueError("tracked slot out of range")
    x = np.arange(D) / D

    def f0(u):
        return np.sin(2.0 * math.pi * u)

    def f0_anti(u):
        return -np.cos(2.0 * math.pi * u) / (2.0 * math.pi)

    def vb(ts):
        k = len(ts)
        out = np.zeros((k, D, D), dtype=complex)
        idx = np.arange(D)
        out[:, idx, idx] = 1j * f0(x[None, :] + ts[:, None])
        return out

    def db(ts):
        k = len(ts)
        out = np.zeros((k, D, D), dtype=complex)
        idx = np.arange(D)
        out[:, idx, idx] = 2j * math.pi * np.cos(2.0 * math.pi * (x[None, :] + ts[:, None]))
        return out

    def exact_propagator(eps: float, t: float, s: float) -> CMatrix:
        phase = (f0_anti(x + t) - f0_anti(x + s)) / eps
        return np.diag(np.exp(1j * phase))

    meta = {
        "grid": x,
        "exact_propagator": exact_propagator,
        "floor_epsilon": None,
        "tracked_slot": tracked,
    }
    fam = _family_from_batches(D, vb, db, "multiplication_diag", meta)
    p0 = np.zeros((D, D), dtype=complex)
    p0[tracked, tracked] = 1.0
    proj = _conjugated_projection(p0, _Conjugator(np.zeros((D, D))), rank=1,
                                  name="multiplication_diag")
    curve = SpectralCurve(
        eigenvalue=lambda t: 1j * math.sin(2.0 * math.pi * (x[tracked] + t)),
        ray_angle=lambda t: 0.0,
        ray_radius=0.3,
        order=1,
        eigenvalue_batch=lambda ts: 1j * f0(x[tracked] + ts),
        name="multiplication_diag",
    )
    return fam, curve, proj


def _build_holder_density(alpha: float = 1.0, D: int = 32, coupling: float = 0.5):
    """Spectral-density model: eigenvalues i*sign(k)*(|k|/D)^(1/alpha)
    accumulate at the tracked eigenvalue 0 with counting density r^alpha.

    Coupling weights are chosen so the spectral weight of the relevant
    coupling vector inside a radius-r ball scales like r^(2*alpha/(1+alpha));
    then the ray-resolvent integrals measured by the diagnostics decay like
    delta^(alpha/(1+alpha)), the regime in which the quantitative theory
    predicts an overall eps^(alpha/(2(1+alpha))) rate.  Truncation cuts the
    density at the innermost eigenvalue (1/D)^(1/alpha); below
    floor_epsilon = (1/D)^(2/alpha) the schedule delta = sqrt(eps) dips
    under that scale and the emulation goes quiet.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    dim = 2 * D + 1
    if dim > MAX_DIM:
        raise ValueError(f"2*D+1 = {dim} exceeds MAX_DIM = {MAX_DIM}")
    k = np.arange(1, D + 1)
    y = (k / D) ** (1.0 / alpha)
    beta = alpha / (1.0 + alpha)
    mass = y ** (2.0 * beta)  # cumulative spectral weight below radius y
    shell = np.diff(np.concatenate([[0.0], mass]))
    w = np.sqrt(shell / 2.0)  # split evenly between +y and -y branches

    diag0 = np.concatenate([[0.0], y, -y])
    a0c = np.diag(1j * diag0)
    c = np.zeros((dim, dim))
    c[1:D + 1, 0] = coupling * w
    c[0, 1:D + 1] = -coupling * w
    c[D + 1:, 0] = coupling * w
    c[0, D + 1:] = -coupling * w

    def vb(ts):
        return np.broadcast_to(a0c, (len(ts), dim, dim)).copy()

    def db(ts):
        return np.zeros((len(ts), dim, dim), dtype=complex)

    floor_eps = float((1.0 / D) ** (2.0 / alpha))
    meta = {
        "alpha": alpha,
        "D": D,
        "positions": y,
        "weights": w,
        "density_exponent": beta,
        "floor_epsilon": floor_eps,
        "coupling": coupling,
    }
    a0 = _family_from_batches(dim, vb, db, "hölder_density", meta)
    fam = similarity_family(a0, c)
    fam.name = "hölder_density"
    fam.metadata = meta
    conj = _Conjugator(c)
    p0 = np.zeros((dim, dim), dtype=complex)
    p0[0, 0] = 1.0
    proj = _conjugated_projection(p0, conj, rank=1, name="hölder_density")
    curve = SpectralCurve(
        eigenvalue=lambda t: 0j,
        ray_angle=lambda t: 0.0,
        ray_radius=0.5,
        order=1,
        eigenvalue_batch=lambda ts: np.zeros(len(ts), dtype=complex),
        name="hölder_density",
    )
    return fam, curve, proj


_BUILDERS = {
    "gap_uniform": _build_gap_uniform,
    "gap_crossing": _build_gap_crossing,
    "nogap_dense_rationals": _build_nogap_dense_rationals,
    "nogap_shift": _build_nogap_shift,
    "rotation_counterexample": _build_rotation_counterexample,
    "multiplication_diag": _build_multiplication_diag,
    "hölder_density": _build_holder_density,
    # ASCII alias for shells that dislike the umlaut
    "holder_density": _build_holder_density,
}


def example(name: str, **params):
    """Instantiate a catalogue entry.

    Returns the triple ``(OperatorFamily, SpectralCurve, ProjectionFamily)``.
    Raises ``KeyError`` for unknown names (listing the available ones) and
    ``TypeError``/``ValueError`` for bad parameters.
    """
    try:
        builder = _BUILDERS[name]
    except KeyError:
        known = ", ".join(sorted(k for k in _BUILDERS if k != "holder_density"))
        raise KeyError(f"unknown example {name!r}; available: {known}") from None
    return builder(**params)


def registry_manifest() -> dict:
    """The machine-readable catalogue manifest shipped with the package."""
    from importlib import resources

    with resources.files("adiabatica").joinpath("data/registry.json").open(
        "r", encoding="utf-8"
    ) as fh:
        return json.load(fh)


def list_examples() -> list[str]:
    """Names of all catalogue entries, in manifest order."""
    return [entry["name"] for entry in registry_manifest()["examples"]]
