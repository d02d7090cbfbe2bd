"""Finite-dimensional Lindblad generators with dephasing diagnostics.

A generator in Lindblad form acts on density-like matrices as

    A(rho) = -i[H, rho] + sum_j ( B_j rho B_j* - (1/2){B_j* B_j, rho} )

with a Hermitian Hamiltonian ``H`` and bounded jump operators ``B_j``.
This module restricts to the *weakly dephasing* class, where the jump
operators satisfy the balance condition

    sum_j B_j B_j*  =  sum_j B_j* B_j,

which makes ``A`` generate a trace-preserving, completely positive,
contractive semigroup on every Schatten space.  Everything here is
vectorized to a plain matrix on the d^2-dimensional space of stacked
columns so that the propagation and benchmarking machinery of the other
modules applies unchanged.

Vectorization convention (fixed throughout): **column stacking**.
``vec(rho)`` lists the columns of ``rho`` top to bottom, so the product
``X rho Y`` vectorizes to ``(Y^T kron X) vec(rho)``.

A note on scope: on the trace class over an infinite-dimensional Hilbert
space, the kernel of such a generator need not admit any complementary
invariant splitting at 0 at all -- kernel plus closure-of-range can fail
to exhaust the space, so no projection of the kind the diagnostics below
compute needs to exist.  A finite matrix space always splits (algebraic
kernel and range have complementary dimensions and, for these generators
at Schatten exponent 2, are orthogonal), so that failure mode cannot be
reproduced here and is deliberately out of scope.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .matrixkit import CMatrix, as_cmatrix, expm, numerical_rank, opnorm
from .opfamily import OperatorFamily, ProjectionFamily
from .spectral import ClusterAmbiguityError

__all__ = [
    "LindbladSpec",
    "Superoperator",
    "KernelReport",
    "build_lindblad",
    "kernel_diagnostics",
    "rage_projection",
    "lindblad_family",
    "rotated_lindblad_family",
    "nondephasing_spec",
    "vectorize",
    "unvectorize",
    "schatten_norm",
]

#: Largest admissible number of jump operators.
MAX_JUMPS = 64

#: Absolute tolerance on ||H - H*||.
HERMITICITY_TOL = 1e-12

#: Absolute tolerance on the jump balance ||sum B B* - sum B* B||.
BALANCE_TOL = 1e-10

#: Relative singular-value cutoff for kernel dimensions, and the factor
#: within which a singular value counts as ambiguous.
KERNEL_RANK_TOL = 1e-10
RANK_AMBIGUITY_FACTOR = 10.0


# ---------------------------------------------------------------------------
# vectorization helpers
# ---------------------------------------------------------------------------


def vectorize(rho: CMatrix) -> np.ndarray:
    """Column-stack a d x d matrix into a d^2 vector."""
    rho = np.asarray(rho, dtype=complex)
    return rho.reshape(-1, order="F")


def unvectorize(vec: np.ndarray, dim: int) -> CMatrix:
    """Inverse of :func:`vectorize`."""
    vec = np.asarray(vec, dtype=complex)
    if vec.shape != (dim * dim,):
        raise ValueError(f"expected a vector of length {dim * dim}, got {vec.shape}")
    return vec.reshape((dim, dim), order="F")


def schatten_norm(rho: CMatrix, p: float) -> float:
    """p-norm of the singular values (p >= 1); the reporting norm on states."""
    if p < 1:
        raise ValueError("Schatten exponent must be >= 1")
    sv = np.linalg.svd(np.asarray(rho, dtype=complex), compute_uv=False)
    if np.isinf(p):
        return float(sv[0]) if sv.size else 0.0
    return float(np.sum(sv ** p) ** (1.0 / p))


# ---------------------------------------------------------------------------
# spec and superoperator containers
# ---------------------------------------------------------------------------


@dataclass
class LindbladSpec:
    """Hamiltonian, jump operators, and the reporting exponent.

    Validation happens on construction: ``h`` must be Hermitian to 1e-12,
    all jumps square of the same dimension (at most 64 of them), the jump
    balance sum B B* = sum B* B must hold to 1e-10, and the Schatten
    exponent ``p`` must lie in (1, inf).  ``p`` only affects reported
    norms; the generator matrix itself is p-independent.
    """

    h: CMatrix
    jumps: list = field(default_factory=list)
    p: float = 2.0
    name: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.h = as_cmatrix(self.h, square=True)
        herm_defect = opnorm(self.h - self.h.conj().T)
        if herm_defect > HERMITICITY_TOL:
            raise ValueError(
                f"Hamiltonian is not Hermitian: ||H - H*|| = {herm_defect:.3e}"
            )
        if len(self.jumps) > MAX_JUMPS:
            raise ValueError(f"at most {MAX_JUMPS} jump operators supported")
        self.jumps = [as_cmatrix(b, square=True) for b in self.jumps]
        d = self.h.shape[0]
        for b in self.jumps:
            if b.shape != (d, d):
                raise ValueError("jump operators must match the Hamiltonian dimension")
        gain = sum((b @ b.conj().T for b in self.jumps), np.zeros((d, d), complex))
        loss = sum((b.conj().T @ b for b in self.jumps), np.zeros((d, d), complex))
        balance = opnorm(gain - loss)
        if balance > BALANCE_TOL:
            raise ValueError(
                f"jump operators are not balanced: "
                f"||sum BB* - sum B*B|| = {balance:.3e} > {BALANCE_TOL:g}"
            )
        if not (1.0 < float(self.p) < np.inf):
            raise ValueError("Schatten exponent p must lie in (1, inf)")
        self.p = float(self.p)

    @property
    def dim(self) -> int:
        """Hilbert-space dimension (the superoperator acts on dim^2)."""
        return self.h.shape[0]

    @classmethod
    def from_json(cls, source: Union[str, dict]) -> "LindbladSpec":
        """Load from a JSON file path or an already-parsed dict.

        Matrices are nested {"real": [[...]], "imag": [[...]]} objects;
        "imag" may be omitted for real matrices.
        """
        if isinstance(source, dict):
            data = source
        else:
            with open(source) as fh:
                data = json.load(fh)

        def matrix(obj):
            real = np.asarray(obj["real"], dtype=float)
            imag = np.asarray(obj.get("imag", np.zeros_like(real)), dtype=float)
            return real + 1j * imag

        return cls(
            h=matrix(data["h"]),
            jumps=[matrix(b) for b in data.get("jumps", [])],
            p=float(data.get("p", 2.0)),
            name=str(data.get("name", "")),
        )


def _generator_matrix(spec: LindbladSpec) -> CMatrix:
    """The vectorized generator in the column-stacking convention."""
    d = spec.dim
    eye = np.eye(d, dtype=complex)
    h = spec.h
    a = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for b in spec.jumps:
        btb = b.conj().T @ b
        a += (
            np.kron(b.conj(), b)
            - 0.5 * np.kron(eye, btb)
            - 0.5 * np.kron(btb.T, eye)
        )
    return a


def _commutator_matrix(h: CMatrix) -> CMatrix:
    """Vectorized rho -> -i[H, rho] (the closed-system part)."""
    d = h.shape[0]
    eye = np.eye(d, dtype=complex)
    return -1j * (np.kron(eye, h) - np.kron(h.T, eye))


@dataclass
class Superoperator:
    """A vectorized generator together with its defining data."""

    matrix: CMatrix
    spec: LindbladSpec

    @property
    def dim(self) -> int:
        """Dimension of the vectorized space (hilbert_dim squared)."""
        return self.matrix.shape[0]

    @property
    def hilbert_dim(self) -> int:
        return self.spec.dim

    def apply(self, rho: CMatrix) -> CMatrix:
        """Evaluate the generator on a matrix (unvectorized in and out)."""
        return unvectorize(self.matrix @ vectorize(rho), self.hilbert_dim)

    def semigroup(self, s: float) -> CMatrix:
        """The vectorized semigroup element expm(s * matrix)."""
        if s < 0:
            raise ValueError("semigroup parameter must be nonnegative")
        return expm(self.matrix * s)

    def evolve_state(self, rho: CMatrix, s: float) -> CMatrix:
        return unvectorize(self.semigroup(s) @ vectorize(rho), self.hilbert_dim)

    def choi(self, s: float) -> CMatrix:
        """Choi matrix of the semigroup element at time s.

        Block (i, j) of the d^2 x d^2 result is the image of the matrix
        unit e_i e_j^T; complete positivity of the map is positive
        semidefiniteness of this matrix.
        """
        d = self.hilbert_dim
        phi = self.semigroup(s)
        out = np.zeros((d * d, d * d), dtype=complex)
        for i in range(d):
            for j in range(d):
                block = phi[:, i + j * d].reshape((d, d), order="F")
                out[i * d : (i + 1) * d, j * d : (j + 1) * d] = block
        return out


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def build_lindblad(spec: LindbladSpec) -> Superoperator:
    """Vectorize the generator and verify its semigroup credentials.

    Checks performed here (all raise RuntimeError on failure, which would
    indicate an assembly bug rather than bad input -- input validation
    lives in LindbladSpec):

    * the trace functional annihilates the range of the generator;
    * the Choi matrices of the semigroup at s = 0.1 and s = 1.0 are
      positive semidefinite to eigenvalue tolerance -1e-9.
    """
    a = _generator_matrix(spec)
    sup = Superoperator(matrix=a, spec=spec)

    d = spec.dim
    trace_row = vectorize(np.eye(d, dtype=complex)).conj()
    functional_norm = float(np.linalg.norm(trace_row @ a))
    if functional_norm > 1e-10 * max(1.0, opnorm(a)):
        raise RuntimeError(
            f"trace functional does not annihilate the generator range "
            f"(norm {functional_norm:.3e})"
        )
    for s in (0.1, 1.0):
        ch = sup.choi(s)
        ch = 0.5 * (ch + ch.conj().T)
        lo = float(np.linalg.eigvalsh(ch).min())
        if lo < -1e-9:
            raise RuntimeError(
                f"Choi matrix at s={s} has eigenvalue {lo:.3e} < -1e-9; "
                f"the map is not completely positive"
            )
    return sup


# ---------------------------------------------------------------------------
# kernel diagnostics
# ---------------------------------------------------------------------------


@dataclass
class KernelReport:
    """Dimensions and commutation checks for the generator kernel.

    ``dim_kernel`` counts null directions of the full generator,
    ``dim_commutant_kernel`` those of the closed-system part alone (the
    matrices commuting with H).  Every kernel element must commute with
    H and with each B_j* -- ``inclusion_verified`` records that check,
    and ``equal`` flags coincidence of the two kernels.
    """

    dim_kernel: int
    dim_commutant_kernel: int
    inclusion_verified: bool
    equal: bool
    worst_hamiltonian_commutator: float
    worst_jump_commutator: float
    kernel_range_overlap: float
    tol: float

    def to_csv(self, path) -> None:
        rows = [
            ("dim_kernel", self.dim_kernel),
            ("dim_commutant_kernel", self.dim_commutant_kernel),
            ("inclusion_verified", int(self.inclusion_verified)),
            ("equal", int(self.equal)),
            ("worst_hamiltonian_commutator", "%.12g" % self.worst_hamiltonian_commutator),
            ("worst_jump_commutator", "%.12g" % self.worst_jump_commutator),
            ("kernel_range_overlap", "%.12g" % self.kernel_range_overlap),
            ("tol", "%.12g" % self.tol),
        ]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["quantity", "value"])
            writer.writerows(rows)


def _guarded_nullity(matrix: CMatrix, tol: float) -> tuple[int, np.ndarray]:
    """Kernel dimension plus an orthonormal null basis, with an ambiguity
    guard: any singular value within a factor 10 of the cut is refused."""
    u, sv, vh = np.linalg.svd(matrix)
    cut = tol * (sv[0] if sv.size and sv[0] > 0 else 1.0)
    suspicious = (sv > cut / RANK_AMBIGUITY_FACTOR) & (
        sv < cut * RANK_AMBIGUITY_FACTOR
    )
    if np.any(suspicious):
        worst = sv[suspicious][0]
        raise ClusterAmbiguityError(0.0, worst, cut)
    null_mask = sv <= cut
    return int(null_mask.sum()), vh[len(sv) - null_mask.sum() :].conj().T


def kernel_diagnostics(sup: Superoperator, tol: float = KERNEL_RANK_TOL) -> KernelReport:
    """Compare the generator kernel with the commutant of the Hamiltonian.

    Each kernel direction, reshaped to a matrix rho, is checked to
    commute with H and with every B_j* (tolerance 1e-8 on unit-norm rho);
    structurally, the dissipative part cannot enlarge the kernel, only
    carve it out of the commutant.  The overlap of the kernel with the
    generator range is also reported -- at Schatten exponent 2 the two
    are orthogonal, which is what makes the kernel projection below the
    right one.
    """
    a = sup.matrix
    d = sup.hilbert_dim
    z0 = _commutator_matrix(sup.spec.h)

    nullity_a, null_basis = _guarded_nullity(a, tol)
    nullity_z0 = d * d - numerical_rank(z0, tol)

    worst_h = 0.0
    worst_jump = 0.0
    for k in range(nullity_a):
        rho = unvectorize(null_basis[:, k], d)
        worst_h = max(worst_h, opnorm(sup.spec.h @ rho - rho @ sup.spec.h))
        for b in sup.spec.jumps:
            bstar = b.conj().T
            worst_jump = max(worst_jump, opnorm(rho @ bstar - bstar @ rho))
    inclusion = worst_h <= 1e-8 and worst_jump <= 1e-8

    # kernel / range angle: ran A spans the left singular directions
    u, sv, _ = np.linalg.svd(a)
    cut = tol * (sv[0] if sv.size and sv[0] > 0 else 1.0)
    ran_basis = u[:, sv > cut]
    if nullity_a and ran_basis.shape[1]:
        overlap = float(
            np.abs(ran_basis.conj().T @ null_basis).max()
        )
    else:
        overlap = 0.0

    return KernelReport(
        dim_kernel=nullity_a,
        dim_commutant_kernel=nullity_z0,
        inclusion_verified=inclusion,
        equal=inclusion and (nullity_a == nullity_z0),
        worst_hamiltonian_commutator=worst_h,
        worst_jump_commutator=worst_jump,
        kernel_range_overlap=overlap,
        tol=tol,
    )


# ---------------------------------------------------------------------------
# kernel projection from the eigenprojections of H
# ---------------------------------------------------------------------------


def rage_projection(
    h: CMatrix, cluster_tol: Optional[float] = None
) -> CMatrix:
    """Time-averaging projection rho -> sum_mu Q_mu rho Q_mu, vectorized.

    Q_mu are the orthogonal eigenprojections of the Hermitian matrix
    ``h``; averaging the conjugation semigroup e^{-iHt} rho e^{iHt} over
    long times kills every cross-eigenspace block and leaves exactly this
    compression.  The result is an idempotent superoperator matrix of
    rank sum_mu (mult mu)^2.

    Eigenvalues closer than ``cluster_tol`` (default 1e-8 * max(1, ||H||))
    are merged into one eigenspace; a gap between distinct clusters that
    is itself within a factor 10 of the tolerance raises
    ClusterAmbiguityError rather than silently picking a grouping.
    """
    h = as_cmatrix(h, square=True)
    if opnorm(h - h.conj().T) > HERMITICITY_TOL:
        raise ValueError("rage_projection requires a Hermitian matrix")
    scale = max(1.0, opnorm(h))
    tol = cluster_tol if cluster_tol is not None else 1e-8 * scale

    w, v = np.linalg.eigh(h)
    groups = []
    start = 0
    for i in range(1, len(w) + 1):
        if i == len(w) or w[i] - w[i - 1] > tol:
            groups.append(slice(start, i))
            start = i
    for g, g_next in zip(groups, groups[1:]):
        gap = w[g_next.start] - w[g.stop - 1]
        if gap <= RANK_AMBIGUITY_FACTOR * tol:
            raise ClusterAmbiguityError(w[g.stop - 1], w[g_next.start], tol)

    d = h.shape[0]
    out = np.zeros((d * d, d * d), dtype=complex)
    for g in groups:
        q = v[:, g] @ v[:, g].conj().T
        out += np.kron(q.T, q)
    return out


# ---------------------------------------------------------------------------
# families and example constructions
# ---------------------------------------------------------------------------


def lindblad_family(
    specs: Callable[[float], LindbladSpec],
    t_lo: float = 0.0,
    t_hi: float = 1.0,
    name: str = "",
) -> OperatorFamily:
    """Wrap t -> LindbladSpec into an operator family on the d^2 space.

    Spec-level validation (hermiticity, jump balance) runs on every
    evaluation because it lives in the LindbladSpec constructor; the
    semigroup credentials from build_lindblad are assumed stable across t
    and are the caller's responsibility to spot-check.
    """
    first = specs(t_lo)
    d2 = first.dim * first.dim

    def value(t: float) -> CMatrix:
        spec = specs(float(t))
        if spec.dim * spec.dim != d2:
            raise ValueError("Hilbert dimension must not change along the family")
        return _generator_matrix(spec)

    return OperatorFamily(
        dim=d2,
        value=value,
        value_batch=lambda ts: np.stack([value(t) for t in ts]),
        name=name or (first.name and f"{first.name}-family") or "lindblad-family",
        t_lo=float(t_lo),
        t_hi=float(t_hi),
    )


def rotated_lindblad_family(
    spec: LindbladSpec,
    c: CMatrix,
    t_lo: float = 0.0,
    t_hi: float = 1.0,
    name: str = "",
) -> tuple[OperatorFamily, ProjectionFamily]:
    """Conjugate a fixed generator by the unitary path e^{-iCt}.

    H(t) = e^{-iCt} H e^{iCt} and likewise for every jump operator, so
    the vectorized generator is W(t) A W(t)^{-1} with
    W(t) = conj(e^{-iCt}) kron e^{-iCt}, and its derivative is the
    commutator with K = i (conj(C) kron 1) - i (1 kron C) -- all analytic,
    no finite differences.  The kernel projection travels the same way:
    P(t) = W(t) P(0) W(t)^{-1}, continuously differentiable in t.

    Returns the generator family and the transported kernel-projection
    family, ready for the propagation routines.
    """
    c = as_cmatrix(c, square=True)
    if opnorm(c - c.conj().T) > HERMITICITY_TOL:
        raise ValueError("the rotation generator C must be Hermitian")
    if c.shape != spec.h.shape:
        raise ValueError("rotation generator dimension must match the Hamiltonian")

    d = spec.dim
    a0 = _generator_matrix(spec)
    p0 = rage_projection(spec.h)
    eye = np.eye(d, dtype=complex)
    k_mat = 1j * (np.kron(c.conj(), eye) - np.kron(eye, c))
    rank = numerical_rank(p0)

    def w_mat(t: float) -> CMatrix:
        s = expm(-1j * t * c)
        return np.kron(s.conj(), s)

    def a_val(t: float) -> CMatrix:
        w = w_mat(t)
        return w @ a0 @ w.conj().T

    def a_der(t: float) -> CMatrix:
        at = a_val(t)
        return k_mat @ at - at @ k_mat

    def p_val(t: float) -> CMatrix:
        w = w_mat(t)
        return w @ p0 @ w.conj().T

    def p_der(t: float) -> CMatrix:
        pt = p_val(t)
        return k_mat @ pt - pt @ k_mat

    fam = OperatorFamily(
        dim=d * d,
        value=a_val,
        derivative=a_der,
        value_batch=lambda ts: np.stack([a_val(t) for t in ts]),
        derivative_batch=lambda ts: np.stack([a_der(t) for t in ts]),
        name=name or "rotated-lindblad",
        t_lo=float(t_lo),
        t_hi=float(t_hi),
    )
    proj = ProjectionFamily(
        dim=d * d,
        value=p_val,
        rank=rank,
        derivative=p_der,
        value_batch=lambda ts: np.stack([p_val(t) for t in ts]),
        derivative_batch=lambda ts: np.stack([p_der(t) for t in ts]),
        name=(name or "rotated-lindblad") + "-kernel-projection",
        t_lo=float(t_lo),
        t_hi=float(t_hi),
    )
    return fam, proj


def nondephasing_spec(
    h: CMatrix,
    tracked_levels: Sequence[int],
    betas: Sequence[complex],
    beta: complex,
    phi: Optional[np.ndarray] = None,
    p: float = 2.0,
) -> LindbladSpec:
    """A single normal jump that fails to commute with the Hamiltonian.

    The jump is B = sum_mu beta_mu Q_mu + beta <psi, .> psi, where the
    Q_mu are eigenprojections of ``h`` for the designated eigenvalue
    groups ``tracked_levels``, and psi is the normalized image H phi of a
    vector phi orthogonal to all designated eigenspaces.  B is normal
    (its rank-one part lives in the invariant complement of the designated
    part), so the jump balance holds, yet [H, B] != 0 whenever phi mixes
    at least two eigenvalues of the complement.

    ``tracked_levels`` indexes the distinct-eigenvalue groups of ``h`` in
    ascending order; ``phi`` defaults to the uniform mixture of the
    non-designated eigenvectors.
    """
    h = as_cmatrix(h, square=True)
    if opnorm(h - h.conj().T) > HERMITICITY_TOL:
        raise ValueError("the Hamiltonian must be Hermitian")
    w, v = np.linalg.eigh(h)
    scale = max(1.0, opnorm(h))
    groups = []
    start = 0
    for i in range(1, len(w) + 1):
        if i == len(w) or w[i] - w[i - 1] > 1e-8 * scale:
            groups.append(slice(start, i))
            start = i
    tracked = sorted(set(int(i) for i in tracked_levels))
    if not tracked or tracked[0] < 0 or tracked[-1] >= len(groups):
        raise ValueError(
            f"tracked_levels must pick from the {len(groups)} eigenvalue groups"
        )
    if len(tracked) != len(list(betas)):
        raise ValueError("need exactly one beta per tracked level")
    untracked_cols = np.concatenate(
        [np.arange(g.start, g.stop) for i, g in enumerate(groups) if i not in tracked]
    ) if len(tracked) < len(groups) else np.array([], dtype=int)
    if untracked_cols.size < 2:
        raise ValueError(
            "need at least two complementary eigenvectors so the rank-one "
            "part can straddle distinct eigenvalues"
        )

    if phi is None:
        phi = v[:, untracked_cols].sum(axis=1)
    phi = np.asarray(phi, dtype=complex)
    # phi must avoid the designated eigenspaces entirely
    for i in tracked:
        g = groups[i]
        if np.linalg.norm(v[:, g].conj().T @ phi) > 1e-10 * np.linalg.norm(phi):
            raise ValueError("phi must be orthogonal to the designated eigenspaces")
    psi = h @ phi
    nrm = np.linalg.norm(psi)
    if nrm <= 1e-12 * scale * np.linalg.norm(phi):
        raise ValueError(
            "H phi vanishes; pick phi with energy content in the complement"
        )
    psi = psi / nrm

    d = h.shape[0]
    b = np.zeros((d, d), dtype=complex)
    for coef, i in zip(betas, tracked):
        g = groups[i]
        b += complex(coef) * (v[:, g] @ v[:, g].conj().T)
    b += complex(beta) * np.outer(psi, psi.conj())
    return LindbladSpec(h=h, jumps=[b], p=p, name="nondephasing")
