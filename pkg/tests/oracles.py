"""Independent reference implementations used to freeze expected values.

Nothing in here imports from the package's numerical kernels: the matrix
exponential oracle goes through mpmath (arbitrary precision, different
algorithm), the evolution oracle is a plain classical Runge-Kutta step
loop, and the structured matrices are built directly from their defining
data.  Tests compare package output against these, never the other way
round.
"""

from __future__ import annotations

import numpy as np
from mpmath import mp, matrix as mpmatrix


def expm_mp(a: np.ndarray, dps: int = 40) -> np.ndarray:
    """Matrix exponential via mpmath at `dps` decimal digits."""
    a = np.asarray(a, dtype=complex)
    d = a.shape[0]
    with mp.workdps(dps):
        m = mpmatrix(d, d)
        for i in range(d):
            for j in range(d):
                m[i, j] = mp.mpc(a[i, j].real, a[i, j].imag)
        e = mp.expm(m)
        out = np.empty((d, d), dtype=complex)
        for i in range(d):
            for j in range(d):
                out[i, j] = complex(e[i, j])
    return out


def rk4_evolution(value, eps: float, t0: float, t1: float, steps: int) -> np.ndarray:
    """Classical fixed-step RK4 for U' = (1/eps) A(t) U, U(t0) = identity.

    `value` maps a float time to a (d, d) complex array.  Deliberately
    naive: no exponentials, no norm control; accuracy comes from `steps`.
    """
    d = value(t0).shape[0]
    u = np.eye(d, dtype=complex)
    h = (t1 - t0) / steps
    for k in range(steps):
        t = t0 + k * h
        k1 = value(t) @ u / eps
        k2 = value(t + h / 2) @ (u + h / 2 * k1) / eps
        k3 = value(t + h / 2) @ (u + h / 2 * k2) / eps
        k4 = value(t + h) @ (u + h * k3) / eps
        u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return u


def rk4_generator_evolution(gen, t0: float, t1: float, steps: int) -> np.ndarray:
    """RK4 for U' = G(t) U with an arbitrary generator sampler."""
    d = gen(t0).shape[0]
    u = np.eye(d, dtype=complex)
    h = (t1 - t0) / steps
    for k in range(steps):
        t = t0 + k * h
        k1 = gen(t) @ u
        k2 = gen(t + h / 2) @ (u + h / 2 * k1)
        k3 = gen(t + h / 2) @ (u + h / 2 * k2)
        k4 = gen(t + h) @ (u + h * k3)
        u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return u


def jordan_sample(seed: int = 7):
    """An 8x8 matrix with one known Jordan block, by explicit construction.

    Returns (a, lam, basis, jordan):  a = basis @ jordan @ basis^-1 where
    jordan = blockdiag(J_3(lam), diag of five other distinct eigenvalues).
    The similarity basis is a well-conditioned seeded perturbation of the
    identity, so numerical ranks of (a - lam)^k are unambiguous:
    rank(a - lam) = 7, rank((a - lam)^2) = 6, rank((a - lam)^3) = 5, and
    higher powers stay at 5 (the size-3 block is exhausted).
    """
    lam = 1.5 - 0.5j
    rng = np.random.default_rng(seed)
    jordan = np.zeros((8, 8), dtype=complex)
    jordan[:3, :3] = lam * np.eye(3) + np.diag([1.0, 1.0], 1)
    others = np.array([-1.0, -0.25 + 1j, 0.5j, 2.0 + 2.0j, -2.0 - 1.0j])
    jordan[np.arange(3, 8), np.arange(3, 8)] = others
    basis = np.eye(8) + 0.3 * (rng.standard_normal((8, 8))
                               + 1j * rng.standard_normal((8, 8))) / np.sqrt(8)
    a = basis @ jordan @ np.linalg.inv(basis)
    return a, lam, basis, jordan


def diagonal_commutator_solution(mu, inside_mask, dp) -> np.ndarray:
    """Closed-form commutator solution for diagonal A = diag(mu).

    For the sandwich contour integral of resolvents around the selected
    eigenvalues, the residue calculus gives entrywise
        B[i, l] = dp[i, l] / (mu_selected - mu_unselected)
    whenever exactly one of i, l is selected (the single enclosed pole
    contributes its residue), and 0 otherwise (residues cancel when both
    poles are on the same side of the contour).  Independent of any
    quadrature.
    """
    mu = np.asarray(mu, dtype=complex)
    inside_mask = np.asarray(inside_mask, dtype=bool)
    dp = np.asarray(dp, dtype=complex)
    d = len(mu)
    b = np.zeros((d, d), dtype=complex)
    for i in range(d):
        for l in range(d):
            if inside_mask[i] and not inside_mask[l]:
                b[i, l] = dp[i, l] / (mu[i] - mu[l])
            elif inside_mask[l] and not inside_mask[i]:
                b[i, l] = dp[i, l] / (mu[l] - mu[i])
    return b


def riesz_projection_eig(a: np.ndarray, inside) -> np.ndarray:
    """Spectral projection from a full eigendecomposition (semisimple only).

    `inside` is a predicate on eigenvalues.  Independent of any contour
    machinery: P = V 1_inside V^-1.
    """
    w, v = np.linalg.eig(np.asarray(a, dtype=complex))
    mask = np.array([bool(inside(z)) for z in w], dtype=float)
    return v @ np.diag(mask) @ np.linalg.inv(v)


def schur_projection(a: np.ndarray, inside) -> np.ndarray:
    """Spectral projection via an ordered Schur form and a Sylvester solve.

    Handles non-semisimple eigenvalues.  With A = Q [[T11, T12], [0, T22]] Q^H
    (selected cluster leading) and Y solving T11 Y - Y T22 = T12, the
    projection is Q [[I, Y], [0, 0]] Q^H.
    """
    import scipy.linalg

    a = np.asarray(a, dtype=complex)
    t, q = scipy.linalg.schur(a, output="complex")
    sel = np.array([bool(inside(z)) for z in np.diag(t)])
    if sel.all():
        return np.eye(a.shape[0], dtype=complex)
    if not sel.any():
        return np.zeros_like(a)
    t, q, k = scipy.linalg.schur(a, output="complex",
                                 sort=lambda z: bool(inside(z)))[0:2] + (int(sel.sum()),)
    t11, t12, t22 = t[:k, :k], t[:k, k:], t[k:, k:]
    y = scipy.linalg.solve_sylvester(t11, -t22, t12)
    p = np.zeros_like(a)
    p[:k, :k] = np.eye(k)
    p[:k, k:] = y
    return q @ p @ q.conj().T


def dephasing_two_level_map(rho0: np.ndarray, s: float) -> np.ndarray:
    """Closed-form semigroup for H = diag(0, 1), single jump B = diag(1, -1).

    Both populations are conserved; the upper off-diagonal entry picks up
    e^{(i-2)s} (unit-frequency rotation, decay rate 2 = ||B||^2 + ||B||^2),
    the lower its conjugate.  Derived by writing the generator entrywise:
    rho_01' = i*rho_01 + (B rho B)_01 - rho_01 = (i - 2) rho_01.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    fac = np.exp((1j - 2.0) * float(s))
    out = rho0.copy()
    out[0, 1] *= fac
    out[1, 0] *= np.conj(fac)
    return out


# e^{(i-2)s} at s = 0.7 and s = 1.3, frozen from a 30-digit evaluation.
DEPHASING_FACTOR_S07 = 0.18860776127881242 + 0.15886212579029802j
DEPHASING_FACTOR_S13 = 0.019868095170090987 + 0.071566914248645509j


def commuting_interaction_propagator(
    rates: np.ndarray, eps: float, horizon: float
) -> np.ndarray:
    """Closed-form interaction propagator for simultaneously diagonal
    A0 = i*diag(a) and V = i*diag(rates) under exponential switching.

    The lab-frame flow over [-T, 0] factors entrywise into
    exp(i*a_k*T/eps) * exp(i*rates_k*(1 - e^{-T})/eps), and the
    conjugation e^{-A0*0/eps} (...) e^{-A0*T/eps} cancels the first
    factor exactly, independent of a.  Only the switched part survives.
    """
    rates = np.asarray(rates, dtype=float)
    return np.diag(np.exp(1j * rates * (1.0 - np.exp(-horizon)) / eps))


# exp(i*b*(1 - e^{-20})/0.05) for b in {0.4, -0.3, 0.2}, frozen from a
# 30-digit evaluation.
COMMUTING_PHASE_B04 = -0.14550001749485883 + 0.98935824902256502j
COMMUTING_PHASE_BM03 = 0.96017028319485635 + 0.27941551007327664j
COMMUTING_PHASE_B02 = -0.65364362710315671 - 0.75680248991888856j

# Eigenvalues of diag(0, 0, 1, 2) + 0.2 * HV for the symmetric coupling
# matrix HV used by the bundled degenerate switching example, frozen
# from a 30-digit symmetric eigensolve.
DEGENERATE_NU_END = (
    -0.060855946598753238,
    0.078018162796291945,
    1.0199148202042084,
    1.9829229635982529,
)

# First-order splitting rates of the double zero eigenvalue: eigenvalues
# of the upper 2x2 block of 0.2 * HV (exactly 0.2*(0.05 -+ sqrt(0.125))),
# and the eigenvector of the lower one (exactly (-sin 22.5deg, cos 22.5deg),
# because the block's off-diagonal equals half its diagonal gap).
DEGENERATE_SPLIT_RATES = (-0.060710678118654752, 0.080710678118654752)
DEGENERATE_SPLIT_VECTOR = (-0.38268343236508977, 0.92387953251128676)
