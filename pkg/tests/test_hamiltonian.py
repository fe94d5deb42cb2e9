import numpy as np
import pytest

from kramers.hamiltonian import (
    EigenSystem,
    MU_B_GHZ_PER_T,
    MU_N_GHZ_PER_T,
    SpinSystem,
    basis_overlaps,
    build_hamiltonian,
    diagonalize,
    eigensystem,
    invert_zero_field,
    physical_constants,
    product_basis,
    transition_frequencies,
    zeeman_gradient,
    zero_field_levels,
)
from kramers.presets import SITE_I, SITE_II
from kramers.selftest import adapted_axes
from kramers.tensors import (
    EulerAngles,
    PrincipalTensor,
    SymmetricTensor3,
    assemble_tensor,
    rz,
)

D1 = np.array([1.0, 0.0, 0.0])


def random_system(rng, g_n=0.987):
    def tensor(lo, hi):
        values = tuple(rng.uniform(lo, hi, 3))
        angles = EulerAngles(rng.uniform(-180, 180), rng.uniform(0, 180), rng.uniform(-180, 180))
        return assemble_tensor(PrincipalTensor(values, angles))

    return SpinSystem(A=tensor(-8.0, 8.0), g=tensor(0.1, 7.0), g_n=g_n)


def isotropic_system(a_ghz, g=2.0, g_n=0.987):
    return SpinSystem(
        A=SymmetricTensor3(a_ghz * np.eye(3)), g=SymmetricTensor3(g * np.eye(3)), g_n=g_n
    )


def charpoly_eigenvalues(H):
    """Independent eigenvalue oracle: Faddeev-LeVerrier characteristic
    polynomial from traces, then companion-matrix roots."""
    H = np.asarray(H, dtype=complex)
    n = H.shape[0]
    coeffs = [1.0]
    M = np.zeros_like(H)
    for k in range(1, n + 1):
        M = H @ M + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(H @ M).real / k)
    return np.sort(np.roots(np.array(coeffs)).real)


class TestConstants:
    def test_values(self):
        mu_b, mu_n = physical_constants()
        assert mu_b == 13.996245
        assert mu_n == 7.6225932e-3

    def test_electron_proton_ratio(self):
        mu_b, mu_n = physical_constants()
        assert mu_b / mu_n == pytest.approx(1836.15, abs=0.1)

    def test_mu_b_rounds_to_14(self):
        assert round(physical_constants()[0]) == 14

    def test_nuclear_zeeman_at_one_tesla(self):
        # direct multiplication oracle: 7.6225932e-3 * 0.987 = 7.5234995e-3
        mu_n = physical_constants()[1]
        shift = mu_n * 0.987 * 1.0
        assert shift == pytest.approx(7.5234995e-3, abs=1e-10)
        assert float(f"{shift:.4g}") == 7.523e-3 or float(f"{shift:.4g}") == 7.524e-3


class TestBuildHamiltonian:
    def test_isotropic_singlet_triplet(self):
        a = 3.7
        H = build_hamiltonian(isotropic_system(a), (0, 0, 0))
        w = np.linalg.eigvalsh(H)
        expected = np.sort([-0.75 * a, 0.25 * a, 0.25 * a, 0.25 * a])
        assert np.abs(w - expected).max() < 1e-12

    def test_traceless_at_zero_field_exact(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            H = build_hamiltonian(random_system(rng), (0, 0, 0))
            assert np.trace(H).real == 0.0

    def test_hermitian(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            H = build_hamiltonian(random_system(rng), rng.uniform(-300, 300, 3))
            assert np.abs(H - H.conj().T).max() < 1e-14

    def test_against_charpoly_oracle_site_i_100mt(self):
        H = build_hamiltonian(SITE_I.ground, (100.0, 0.0, 0.0))
        assert np.abs(np.linalg.eigvalsh(H) - charpoly_eigenvalues(H)).max() < 1e-10

    def test_against_charpoly_oracle_random(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            H = build_hamiltonian(random_system(rng), rng.uniform(-500, 500, 3))
            scale = max(1.0, np.abs(H).max())
            assert np.abs(np.linalg.eigvalsh(H) - charpoly_eigenvalues(H)).max() < 1e-10 * scale


class TestDiagonalize:
    def test_rejects_non_hermitian(self):
        H = np.eye(4, dtype=complex)
        H[0, 1] = 1e-6
        with pytest.raises(ValueError):
            diagonalize(H)

    def test_identity_fourfold_degenerate(self):
        es = diagonalize(np.eye(4, dtype=complex))
        assert es.degenerate_groups() == [[0, 1, 2, 3]]

    def test_residuals_and_orthonormality(self):
        rng = np.random.default_rng(13)
        for _ in range(1000):
            H = build_hamiltonian(random_system(rng), rng.uniform(-500, 500, 3))
            es = diagonalize(H)
            scale = max(1.0, np.abs(H).max())
            for n in range(4):
                r = H @ es.states[:, n] - es.energies[n] * es.states[:, n]
                assert np.linalg.norm(r) < 1e-10 * scale
            gram = es.states.conj().T @ es.states
            assert np.abs(gram - np.eye(4)).max() < 1e-10

    def test_energies_ascending_and_sum_zero(self):
        rng = np.random.default_rng(14)
        for _ in range(200):
            es = eigensystem(random_system(rng), rng.uniform(-400, 400, 3))
            assert np.all(np.diff(es.energies) >= 0)
            assert abs(es.energies.sum()) < 1e-9


class TestZeroFieldLevels:
    # Eq-form oracle evaluated by hand for the canonical site-I ground values
    def test_site_i_ground_levels(self):
        lv = zero_field_levels(0.484, 1.162, 5.254)
        assert np.abs(lv.sorted() - [-1.725, -0.902, 1.144, 1.483]).max() < 1e-12

    def test_isotropic(self):
        a = 2.0
        lv = zero_field_levels(a, a, a)
        assert np.abs(lv.sorted() - [-1.5, 0.5, 0.5, 0.5]).max() < 1e-12

    def test_matches_numeric_site_i(self):
        numeric = np.linalg.eigvalsh(build_hamiltonian(SITE_I.ground, (0, 0, 0)))
        from kramers.tensors import decompose_tensor

        analytic = zero_field_levels(*decompose_tensor(SITE_I.ground.A).values).sorted()
        assert np.abs(numeric - analytic).max() < 1e-9

    def test_matches_numeric_random_1000(self):
        rng = np.random.default_rng(15)
        for _ in range(1000):
            values = rng.uniform(-8, 8, 3)
            angles = EulerAngles(rng.uniform(-180, 180), rng.uniform(0, 180), rng.uniform(-180, 180))
            sys = SpinSystem(
                A=assemble_tensor(PrincipalTensor(tuple(values), angles)),
                g=SymmetricTensor3(2.0 * np.eye(3)),
            )
            numeric = np.linalg.eigvalsh(build_hamiltonian(sys, (0, 0, 0)))
            analytic = zero_field_levels(*values).sorted()
            assert np.abs(numeric - analytic).max() < 1e-9

    def test_branch_tags_retained(self):
        lv = zero_field_levels(0.5, 1.0, 5.0)
        assert len(lv.BRANCHES) == 4
        assert lv.energies[0] == 0.25 * (-5.0 - 1.5)
        assert lv.energies[3] == 0.25 * (5.0 + (0.5 - 1.0))


class TestInvertZeroField:
    def test_roundtrip_1000(self):
        rng = np.random.default_rng(16)
        for _ in range(1000):
            a = np.sort(rng.uniform(0.0, 9.0, 3))
            rec = invert_zero_field(zero_field_levels(*a).sorted())
            assert np.abs(np.array(rec) - a).max() < 1e-12

    def test_isotropic(self):
        rec = invert_zero_field(zero_field_levels(2.0, 2.0, 2.0).sorted())
        assert rec == pytest.approx((2.0, 2.0, 2.0), abs=1e-14)

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            invert_zero_field([1.0, -1.0, 0.5, -0.5])

    def test_rejects_nonzero_sum(self):
        with pytest.raises(ValueError):
            invert_zero_field([0.0, 1.0, 2.0, 3.0])


class TestTransitionFrequencies:
    def test_site_i_ground_zero_field(self):
        table = transition_frequencies(eigensystem(SITE_I.ground, (0, 0, 0)))
        mhz = np.sort(table.frequencies()) * 1e3
        expected = [339.0, 823.0, 2046.0, 2385.0, 2869.0, 3208.0]
        assert np.abs(mhz - expected).max() < 1.0

    def test_site_ii_ground_zero_field(self):
        table = transition_frequencies(eigensystem(SITE_II.ground, (0, 0, 0)))
        mhz = table.frequencies() * 1e3
        for target in (528.0, 655.0, 2370.0, 2496.0, 3025.0):
            assert np.abs(mhz - target).min() < 2.0

    def test_six_entries_nonnegative_labeled(self):
        table = transition_frequencies(eigensystem(SITE_I.excited, (37.0, -12.0, 5.0)))
        assert len(table.entries) == 6
        assert all(t.frequency_ghz >= 0 for t in table.entries)
        assert [(t.lower, t.upper) for t in table.entries] == [
            (0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)
        ]

    def test_degenerate_pair_zero_entry_retained(self):
        es = diagonalize(np.zeros((4, 4), dtype=complex))
        table = transition_frequencies(es)
        assert len(table.entries) == 6
        assert all(t.frequency_ghz == 0.0 for t in table.entries)


class TestBasisOverlaps:
    def test_columns_sum_to_one(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            es = eigensystem(random_system(rng), rng.uniform(-200, 200, 3))
            o = basis_overlaps(es)
            assert np.abs(o.sum(axis=0) - 1.0).max() < 1e-10

    def test_bell_structure_in_principal_frame(self):
        # A diagonal in the crystal frame = its own principal frame
        sys = SpinSystem(
            A=SymmetricTensor3(np.diag([0.484, 1.162, 5.254])),
            g=SymmetricTensor3(2.0 * np.eye(3)),
        )
        o = np.sort(basis_overlaps(eigensystem(sys, (0, 0, 0))), axis=0)
        assert np.abs(o[2:, :] - 0.5).max() < 1e-10
        assert np.abs(o[:2, :]).max() < 1e-10

    def test_high_field_product_dominance_adapted_frame(self):
        # high-field limit oracle: perturbation-theory product states along
        # the field-adapted axes dominate each eigenstate at 150 mT
        e_ax, n_ax = adapted_axes(SITE_I.ground, D1)
        es = eigensystem(SITE_I.ground, 150.0 * D1)
        o = basis_overlaps(es, electron_axis=e_ax, nuclear_axis=n_ax)
        assert np.all(o.max(axis=0) > 0.9)

    def test_product_basis_unitary(self):
        b = product_basis((0.3, -0.4, 0.86), (1.0, 2.0, -0.5))
        assert np.abs(b.conj().T @ b - np.eye(4)).max() < 1e-12


class TestZeemanGradient:
    def finite_difference(self, sys, B, i, j, h=0.01):
        B = np.asarray(B, dtype=float)
        grad = np.zeros(3)
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            ep = eigensystem(sys, B + e).energies
            em = eigensystem(sys, B - e).energies
            grad[k] = ((ep[j] - ep[i]) - (em[j] - em[i])) / (2 * h)
        return grad

    def test_matches_finite_differences_site_i(self):
        B = (50.0, 0.0, 0.0)
        for (i, j) in [(0, 1), (0, 3), (1, 2), (2, 3)]:
            g = zeeman_gradient(SITE_I.ground, B, i, j)
            fd = self.finite_difference(SITE_I.ground, B, i, j)
            assert np.abs(g - fd).max() < 1e-6 * max(1.0, np.linalg.norm(g))

    def test_zero_field_gradient_vanishes(self):
        # Kramers symmetry: nu(B) = nu(-B), so every gradient vanishes at 0;
        # the finite-difference oracle agrees
        g = zeeman_gradient(SITE_I.ground, (0.0, 0.0, 0.0), 0, 3)
        fd = self.finite_difference(SITE_I.ground, (0.0, 0.0, 0.0), 0, 3)
        assert np.linalg.norm(g) < 1e-12
        assert np.linalg.norm(fd) < 1e-9

    def test_high_field_isotropic_along_field_only(self):
        sys = isotropic_system(0.1, g=2.0)
        B = (400.0, 0.0, 0.0)
        g = zeeman_gradient(sys, B, 0, 3)  # electron-flip within the manifold
        assert abs(g[1]) < 1e-9 and abs(g[2]) < 1e-9

    def test_degenerate_levels_rejected(self):
        sys = isotropic_system(2.0)
        with pytest.raises(ValueError, match="finite differences"):
            zeeman_gradient(sys, (0.0, 0.0, 0.0), 1, 2)  # triplet degenerate at B=0


class TestSymmetryProperties:
    def test_kramers_field_reversal_1000(self):
        rng = np.random.default_rng(18)
        for _ in range(1000):
            sys = random_system(rng)
            B = rng.uniform(-500, 500, 3)
            wp = np.linalg.eigvalsh(build_hamiltonian(sys, B))
            wm = np.linalg.eigvalsh(build_hamiltonian(sys, -B))
            assert np.abs(wp - wm).max() < 1e-10 * max(1.0, np.abs(wp).max())

    def test_subsite_spectral_relation_1000(self):
        rng = np.random.default_rng(19)
        c2 = rz(180)
        for _ in range(1000):
            sys = random_system(rng)
            B = rng.uniform(-400, 400, 3)
            w2 = np.linalg.eigvalsh(build_hamiltonian(sys.with_subsite(2), B))
            w1 = np.linalg.eigvalsh(build_hamiltonian(sys, c2 @ B))
            assert np.abs(w2 - w1).max() < 1e-10 * max(1.0, np.abs(w1).max())

    def test_subsites_degenerate_in_mirror_plane_and_along_b(self):
        rng = np.random.default_rng(20)
        sys = random_system(rng)
        for B in [(120.0, -35.0, 0.0), (0.0, 0.0, 87.0)]:
            w1 = np.linalg.eigvalsh(build_hamiltonian(sys, B))
            w2 = np.linalg.eigvalsh(build_hamiltonian(sys.with_subsite(2), B))
            assert np.abs(w1 - w2).max() < 1e-10

    def test_subsite_representation_is_subsite_transform(self):
        from kramers.tensors import subsite_transform

        sys2 = SITE_I.ground.with_subsite(2)
        assert np.array_equal(sys2.A.matrix, subsite_transform(SITE_I.ground.A).matrix)
        assert np.array_equal(sys2.g.matrix, subsite_transform(SITE_I.ground.g).matrix)
