"""Tests for the open-system generator module.

Covers vectorization, semigroup invariants (trace, Hermiticity,
positivity, spectral half-plane), kernel diagnostics against counting
arguments, the time-averaging kernel projection, generator families, and
the builder for the non-commuting jump example.
"""

import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adiabatica import evolve
from adiabatica.matrixkit import expm, numerical_rank, opnorm
from adiabatica.openq import (
    KernelReport,
    LindbladSpec,
    Superoperator,
    build_lindblad,
    kernel_diagnostics,
    lindblad_family,
    nondephasing_spec,
    rage_projection,
    rotated_lindblad_family,
    schatten_norm,
    unvectorize,
    vectorize,
)
from adiabatica.spectral import ClusterAmbiguityError, weakly_associated_projection

import oracles


# ---------------------------------------------------------------------------
# shared fixtures
# ---------------------------------------------------------------------------


def two_level_dephasing() -> LindbladSpec:
    return LindbladSpec(
        h=np.diag([0.0, 1.0]), jumps=[np.diag([1.0, -1.0])], name="dephasing2"
    )


def random_hermitian(rng, d: int) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return 0.5 * (g + g.conj().T)


def random_dephasing(seed: int, d: int = 4) -> LindbladSpec:
    """Jumps are functions of H, so they commute with it exactly."""
    rng = np.random.default_rng(seed)
    h = random_hermitian(rng, d)
    w, v = np.linalg.eigh(h)
    b1 = v @ np.diag(w ** 2 / 3.0) @ v.conj().T
    b2 = v @ np.diag(np.cos(w)) @ v.conj().T
    return LindbladSpec(h=h, jumps=[b1, b2])


def five_level_nondephasing() -> LindbladSpec:
    """Doubly degenerate ground level designated, three simple levels
    straddled by the rank-one jump part."""
    h = np.diag([0.0, 0.0, 1.0, 2.0, 3.0])
    return nondephasing_spec(h, tracked_levels=[0], betas=[0.8], beta=1.3)


def direct_action(spec: LindbladSpec, rho: np.ndarray) -> np.ndarray:
    """The generator evaluated entrywise from its defining formula."""
    h = spec.h
    out = -1j * (h @ rho - rho @ h)
    for b in spec.jumps:
        btb = b.conj().T @ b
        out += b @ rho @ b.conj().T - 0.5 * (btb @ rho + rho @ btb)
    return out


# ---------------------------------------------------------------------------
# spec validation and loading
# ---------------------------------------------------------------------------


class TestLindbladSpec:
    def test_dim(self):
        assert two_level_dephasing().dim == 2

    def test_rejects_non_hermitian_hamiltonian(self):
        with pytest.raises(ValueError, match="Hermitian"):
            LindbladSpec(h=np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_rejects_unbalanced_jumps(self):
        lower = np.array([[0.0, 1.0], [0.0, 0.0]])  # [B, B*] != 0
        with pytest.raises(ValueError, match="balanced"):
            LindbladSpec(h=np.zeros((2, 2)), jumps=[lower])

    def test_rejects_jump_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            LindbladSpec(h=np.zeros((2, 2)), jumps=[np.eye(3)])

    def test_rejects_too_many_jumps(self):
        with pytest.raises(ValueError, match="at most"):
            LindbladSpec(h=np.zeros((2, 2)), jumps=[np.eye(2)] * 65)

    @pytest.mark.parametrize("p", [1.0, 0.5, np.inf, 0.0])
    def test_rejects_schatten_exponent_outside_open_interval(self, p):
        with pytest.raises(ValueError, match="exponent"):
            LindbladSpec(h=np.zeros((2, 2)), p=p)

    def test_from_json_dict(self):
        doc = {
            "h": {"real": [[0.0, 0.0], [0.0, 1.0]]},
            "jumps": [{"real": [[1.0, 0.0], [0.0, -1.0]]}],
            "p": 2.5,
            "name": "fromjson",
        }
        spec = LindbladSpec.from_json(doc)
        ref = two_level_dephasing()
        assert opnorm(spec.h - ref.h) == 0.0
        assert opnorm(spec.jumps[0] - ref.jumps[0]) == 0.0
        assert spec.p == 2.5
        assert spec.name == "fromjson"

    def test_from_json_file_with_imag_and_defaults(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(
            '{"h": {"real": [[0.0, 0.5], [0.5, 1.0]],'
            ' "imag": [[0.0, -0.25], [0.25, 0.0]]}}'
        )
        spec = LindbladSpec.from_json(str(path))
        expected = np.array([[0.0, 0.5 - 0.25j], [0.5 + 0.25j, 1.0]])
        assert opnorm(spec.h - expected) == 0.0
        assert spec.jumps == []
        assert spec.p == 2.0
        assert spec.name == ""


# ---------------------------------------------------------------------------
# vectorization
# ---------------------------------------------------------------------------


class TestVectorization:
    def test_round_trip(self):
        rng = np.random.default_rng(3)
        rho = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        assert opnorm(unvectorize(vectorize(rho), 5) - rho) == 0.0

    def test_column_stacking_product_identity(self):
        rng = np.random.default_rng(4)
        x, rho, y = (
            rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            for _ in range(3)
        )
        lhs = vectorize(x @ rho @ y)
        rhs = np.kron(y.T, x) @ vectorize(rho)
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(lhs)

    def test_generator_matches_direct_formula(self):
        rng = np.random.default_rng(5)
        spec = random_dephasing(seed=9)
        sup = build_lindblad(spec)
        rho = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        assert opnorm(sup.apply(rho) - direct_action(spec, rho)) <= 1e-12

    def test_unvectorize_length_check(self):
        with pytest.raises(ValueError, match="length"):
            unvectorize(np.zeros(5), 2)


# ---------------------------------------------------------------------------
# semigroup invariants
# ---------------------------------------------------------------------------


class TestBuildLindblad:
    def test_two_level_matches_closed_form(self):
        sup = build_lindblad(two_level_dephasing())
        rho0 = np.array([[0.3, 0.25 + 0.1j], [0.25 - 0.1j, 0.7]])
        for s in (0.7, 1.3):
            got = sup.evolve_state(rho0, s)
            want = oracles.dephasing_two_level_map(rho0, s)
            assert opnorm(got - want) <= 1e-12

    def test_two_level_frozen_decay_factors(self):
        sup = build_lindblad(two_level_dephasing())
        rho0 = np.array([[0.5, 1.0], [1.0, 0.5]], dtype=complex)
        assert abs(
            sup.evolve_state(rho0, 0.7)[0, 1] - oracles.DEPHASING_FACTOR_S07
        ) <= 1e-12
        assert abs(
            sup.evolve_state(rho0, 1.3)[0, 1] - oracles.DEPHASING_FACTOR_S13
        ) <= 1e-12

    def test_closed_system_spectrum_is_eigenvalue_differences(self):
        rng = np.random.default_rng(42)
        h = random_hermitian(rng, 3)
        sup = build_lindblad(LindbladSpec(h=h))
        mu = np.linalg.eigvalsh(h)
        key = lambda z: (round(z.imag, 9), round(z.real, 9))
        predicted = sorted((-1j * (a - b) for a in mu for b in mu), key=key)
        got = sorted(np.linalg.eigvals(sup.matrix), key=key)
        assert max(abs(p - g) for p, g in zip(predicted, got)) <= 1e-10

    def test_trace_preserved_along_semigroup(self):
        sup = build_lindblad(random_dephasing(seed=2))
        rng = np.random.default_rng(8)
        rho = random_hermitian(rng, 4)
        for s in np.linspace(0.0, 5.0, 11):
            out = sup.evolve_state(rho, s)
            assert abs(np.trace(out) - np.trace(rho)) <= 1e-9

    def test_hermiticity_preserved_along_semigroup(self):
        sup = build_lindblad(five_level_nondephasing())
        rng = np.random.default_rng(9)
        rho = random_hermitian(rng, 5)
        for s in (0.3, 1.7, 5.0):
            out = sup.evolve_state(rho, s)
            assert opnorm(out - out.conj().T) <= 1e-9

    def test_spectrum_in_left_half_plane(self):
        for spec in (
            two_level_dephasing(),
            random_dephasing(seed=11),
            five_level_nondephasing(),
        ):
            sup = build_lindblad(spec)
            assert np.linalg.eigvals(sup.matrix).real.max() <= 1e-9

    def test_choi_positive_semidefinite(self):
        sup = build_lindblad(random_dephasing(seed=3))
        for s in (0.1, 1.0):
            ch = sup.choi(s)
            assert opnorm(ch - ch.conj().T) <= 1e-12 * max(1.0, opnorm(ch))
            ch = 0.5 * (ch + ch.conj().T)
            assert np.linalg.eigvalsh(ch).min() >= -1e-9

    def test_choi_at_zero_is_maximally_entangled_witness(self):
        # the identity map's Choi matrix is the rank-one |vec I><vec I|
        sup = build_lindblad(two_level_dephasing())
        ch = sup.choi(0.0)
        vec_eye = vectorize(np.eye(2, dtype=complex))
        assert opnorm(ch - np.outer(vec_eye, vec_eye.conj())) <= 1e-12

    def test_trace_functional_annihilated(self):
        for spec in (two_level_dephasing(), five_level_nondephasing()):
            sup = build_lindblad(spec)
            row = vectorize(np.eye(spec.dim, dtype=complex)).conj()
            assert np.linalg.norm(row @ sup.matrix) <= 1e-12 * max(
                1.0, opnorm(sup.matrix)
            )

    def test_semigroup_rejects_negative_time(self):
        sup = build_lindblad(two_level_dephasing())
        with pytest.raises(ValueError, match="nonnegative"):
            sup.semigroup(-0.1)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_random_dephasing_invariants(self, seed):
        spec = random_dephasing(seed=seed)
        sup = build_lindblad(spec)  # raises if trace/Choi checks fail
        assert np.linalg.eigvals(sup.matrix).real.max() <= 1e-9
        rep = kernel_diagnostics(sup)
        assert rep.inclusion_verified
        assert rep.equal


# ---------------------------------------------------------------------------
# kernel diagnostics
# ---------------------------------------------------------------------------


def predicted_kernel_dims(designated_multiplicities, k_simple, m_touched):
    """Counting argument for the kernel dimensions.

    Matrices commuting with H decompose blockwise over its eigenspaces:
    sum of squared multiplicities plus one scalar per simple level.  A
    rank-one jump part straddling m of the k simple levels forces the m
    corresponding scalars to agree, removing m - 1 dimensions from the
    kernel of the full generator and none from the commutant.
    """
    base = sum(int(n) ** 2 for n in designated_multiplicities)
    return base + (k_simple - m_touched + 1), base + k_simple


class TestKernelDiagnostics:
    def test_two_level_dephasing_kernels_agree(self):
        rep = kernel_diagnostics(build_lindblad(two_level_dephasing()))
        assert (rep.dim_kernel, rep.dim_commutant_kernel) == (2, 2)
        assert rep.inclusion_verified and rep.equal
        assert rep.worst_hamiltonian_commutator <= 1e-8
        assert rep.worst_jump_commutator <= 1e-8

    def test_simple_spectrum_commutant_has_hilbert_dimension(self):
        for seed, d in ((0, 3), (1, 4), (2, 5)):
            rng = np.random.default_rng(seed)
            sup = build_lindblad(LindbladSpec(h=random_hermitian(rng, d)))
            assert kernel_diagnostics(sup).dim_commutant_kernel == d

    def test_nondephasing_kernel_strictly_smaller(self):
        spec = five_level_nondephasing()
        assert opnorm(spec.h @ spec.jumps[0] - spec.jumps[0] @ spec.h) > 1e-6
        rep = kernel_diagnostics(build_lindblad(spec))
        dim_a, dim_z0 = predicted_kernel_dims([2], k_simple=3, m_touched=3)
        assert (dim_a, dim_z0) == (5, 7)
        assert rep.dim_kernel == dim_a
        assert rep.dim_commutant_kernel == dim_z0
        assert rep.inclusion_verified
        assert not rep.equal

    def test_partially_touched_levels(self):
        # phi mixes only two of the three simple levels: m = 2
        h = np.diag([0.0, 0.0, 1.0, 2.0, 3.0])
        phi = np.array([0.0, 0.0, 1.0, 1.0, 0.0])
        spec = nondephasing_spec(h, [0], betas=[0.8], beta=1.3, phi=phi)
        rep = kernel_diagnostics(build_lindblad(spec))
        dim_a, dim_z0 = predicted_kernel_dims([2], k_simple=3, m_touched=2)
        assert (rep.dim_kernel, rep.dim_commutant_kernel) == (dim_a, dim_z0)
        assert rep.inclusion_verified and not rep.equal

    def test_kernel_orthogonal_to_range(self):
        for spec in (
            two_level_dephasing(),
            random_dephasing(seed=7),
            five_level_nondephasing(),
        ):
            rep = kernel_diagnostics(build_lindblad(spec))
            assert rep.kernel_range_overlap <= 1e-8

    def test_rank_ambiguity_is_refused(self):
        doctored = Superoperator(
            matrix=np.diag([1.0, 5e-10, 0.0, 0.0]).astype(complex),
            spec=two_level_dephasing(),
        )
        with pytest.raises(ClusterAmbiguityError):
            kernel_diagnostics(doctored)

    def test_report_csv_round_trip(self, tmp_path):
        rep = kernel_diagnostics(build_lindblad(five_level_nondephasing()))
        path = tmp_path / "kernel.csv"
        rep.to_csv(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["quantity", "value"]
        table = dict(rows[1:])
        assert int(table["dim_kernel"]) == rep.dim_kernel
        assert int(table["dim_commutant_kernel"]) == rep.dim_commutant_kernel
        assert int(table["equal"]) == 0
        assert float(table["worst_hamiltonian_commutator"]) == pytest.approx(
            rep.worst_hamiltonian_commutator, abs=1e-15
        )


# ---------------------------------------------------------------------------
# time-averaging kernel projection
# ---------------------------------------------------------------------------


class TestRageProjection:
    def test_identity_hamiltonian_gives_identity(self):
        p = rage_projection(np.eye(3))
        assert opnorm(p - np.eye(9)) == 0.0

    def test_diagonal_compression(self):
        p = rage_projection(np.diag([1.0, 2.0]))
        rho = np.array([[0.4, 0.3 - 0.2j], [0.3 + 0.2j, 0.6]])
        out = unvectorize(p @ vectorize(rho), 2)
        assert opnorm(out - np.diag(np.diag(rho))) <= 1e-14

    def test_idempotent_and_rank_counts_squared_multiplicities(self):
        h = np.diag([0.0, 0.0, 1.0])
        p = rage_projection(h)
        assert opnorm(p @ p - p) <= 1e-12
        assert numerical_rank(p) == 2 ** 2 + 1

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_weakly_associated_projection(self, seed):
        spec = random_dephasing(seed=seed)
        sup = build_lindblad(spec)
        p_avg = rage_projection(spec.h)
        p_weak, order = weakly_associated_projection(sup.matrix, 0.0)
        assert order == 1
        assert opnorm(p_avg - np.asarray(p_weak)) <= 1e-8

    def test_near_degenerate_grouping_is_refused(self):
        with pytest.raises(ClusterAmbiguityError):
            rage_projection(np.diag([0.0, 5e-8, 1.0]))

    def test_wide_tolerance_merges_cluster(self):
        p = rage_projection(np.diag([0.0, 5e-8, 1.0]), cluster_tol=1e-4)
        assert numerical_rank(p) == 2 ** 2 + 1

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError, match="Hermitian"):
            rage_projection(np.array([[0.0, 1.0], [0.0, 0.0]]))


# ---------------------------------------------------------------------------
# generator families
# ---------------------------------------------------------------------------


class TestFamilies:
    def test_family_matches_fresh_build(self):
        def specs(t):
            return LindbladSpec(
                h=np.diag([0.0, 1.0 + t]),
                jumps=[(1.0 + 0.5 * t) * np.diag([1.0, -1.0])],
            )

        fam = lindblad_family(specs, name="ramp")
        assert fam.dim == 4
        assert fam.name == "ramp"
        for t in (0.0, 0.4, 1.0):
            assert opnorm(fam.value(t) - build_lindblad(specs(t)).matrix) <= 1e-14

    def test_family_rejects_dimension_change(self):
        def specs(t):
            d = 2 if t < 0.5 else 3
            return LindbladSpec(h=np.zeros((d, d)))

        fam = lindblad_family(specs)
        with pytest.raises(ValueError, match="dimension"):
            fam.value(0.7)

    def test_rotated_family_derivatives_are_analytic(self):
        spec = two_level_dephasing()
        c = np.array([[0.0, 0.4 - 0.2j], [0.4 + 0.2j, 0.3]])
        fam, proj = rotated_lindblad_family(spec, c)
        for t in (0.0, 0.3, 0.9):
            h = 1e-6
            fd_a = (fam.value(t + h) - fam.value(t - h)) / (2 * h)
            fd_p = (proj.value(t + h) - proj.value(t - h)) / (2 * h)
            assert opnorm(fam.d(t) - fd_a) <= 1e-7
            assert opnorm(proj.d(t) - fd_p) <= 1e-7

    def test_rotated_projection_is_spectral_for_rotated_generator(self):
        spec = two_level_dephasing()
        c = np.array([[0.0, 0.4 - 0.2j], [0.4 + 0.2j, 0.3]])
        fam, proj = rotated_lindblad_family(spec, c)
        assert proj.rank == 2
        for t in (0.2, 0.7):
            a, p = fam.value(t), proj.value(t)
            assert opnorm(p @ p - p) <= 1e-12
            assert opnorm(a @ p) <= 1e-12          # range of P is the kernel
            assert opnorm(p @ a) <= 1e-12          # P kills the range
        assert opnorm(proj.value(0.0) - rage_projection(spec.h)) <= 1e-12

    def test_rotated_family_rejects_bad_rotation(self):
        spec = two_level_dephasing()
        with pytest.raises(ValueError, match="Hermitian"):
            rotated_lindblad_family(spec, np.array([[0.0, 1.0], [0.0, 0.0]]))
        with pytest.raises(ValueError, match="dimension"):
            rotated_lindblad_family(spec, np.eye(3))

    def test_adiabatic_deviation_shrinks_with_epsilon(self):
        spec = two_level_dephasing()
        c = np.array([[0.0, 0.4 - 0.2j], [0.4 + 0.2j, 0.3]])
        fam, proj = rotated_lindblad_family(spec, c)
        p0 = proj.value(0.0)
        sups = {}
        for eps in (0.1, 0.02):
            u = evolve.propagate(fam, eps)
            v = evolve.propagate_intertwined(fam, proj, eps)
            sups[eps] = evolve.deviation(u, v, metric="projected", p0=p0).sup
            resid = max(
                opnorm(
                    proj.value(v.t_grid[i]) @ v.accumulated[i]
                    - v.accumulated[i] @ p0
                )
                for i in range(0, len(v.t_grid), 16)
            )
            assert resid <= 1e-9
        # measured: 4.98e-2 at eps=0.1 vs 1.02e-2 at eps=0.02
        assert sups[0.02] <= sups[0.1] / 3.0


# ---------------------------------------------------------------------------
# the non-commuting jump builder
# ---------------------------------------------------------------------------


class TestNondephasingBuilder:
    def test_balance_is_exact_and_jump_is_normal(self):
        spec = five_level_nondephasing()
        b = spec.jumps[0]
        assert opnorm(b @ b.conj().T - b.conj().T @ b) <= 1e-14

    def test_rejects_bad_tracked_levels(self):
        h = np.diag([0.0, 1.0, 2.0])
        with pytest.raises(ValueError, match="eigenvalue groups"):
            nondephasing_spec(h, [5], betas=[1.0], beta=1.0)

    def test_rejects_beta_count_mismatch(self):
        h = np.diag([0.0, 0.0, 1.0, 2.0, 3.0])
        with pytest.raises(ValueError, match="one beta per"):
            nondephasing_spec(h, [0], betas=[1.0, 2.0], beta=1.0)

    def test_rejects_phi_inside_designated_space(self):
        h = np.diag([0.0, 0.0, 1.0, 2.0, 3.0])
        phi = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
        with pytest.raises(ValueError, match="orthogonal"):
            nondephasing_spec(h, [0], betas=[1.0], beta=1.0, phi=phi)

    def test_rejects_too_small_complement(self):
        h = np.diag([0.0, 0.0, 1.0])
        with pytest.raises(ValueError, match="at least two"):
            nondephasing_spec(h, [0], betas=[1.0], beta=1.0)

    def test_rejects_energyless_phi(self):
        h = np.diag([0.0, 0.0, 1.0])
        with pytest.raises(ValueError, match="vanishes"):
            nondephasing_spec(h, [1], betas=[1.0], beta=1.0)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError, match="Hermitian"):
            nondephasing_spec(
                np.array([[0.0, 1.0], [0.0, 0.0]]), [0], betas=[1.0], beta=1.0
            )


class TestSchattenNorm:
    def test_values_on_diagonal_matrix(self):
        x = np.diag([3.0, -4.0])
        assert schatten_norm(x, 2) == pytest.approx(5.0, abs=1e-12)
        assert schatten_norm(x, 1) == pytest.approx(7.0, abs=1e-12)
        assert schatten_norm(x, np.inf) == pytest.approx(4.0, abs=1e-12)

    def test_rejects_exponent_below_one(self):
        with pytest.raises(ValueError, match=">= 1"):
            schatten_norm(np.eye(2), 0.5)
