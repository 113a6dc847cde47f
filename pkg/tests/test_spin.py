"""Hamiltonian construction and eigensystem tests.

The frozen eigenvalue lists below come from an independent Jacobi
diagonalisation (tests/oracles.py) of the same Hamiltonians, run once
and pasted in, so regressions in either the matrix elements or the
solver show up as mismatches against fixed numbers.
"""

import numpy as np
import pytest

from oracles import jacobi_eigenvalues_batch
from vsic.constants import DEFAULT_CONSTANTS, KdParams, SpinConstants, default_kd_params
from vsic.spin import (
    SPIN_DOWN,
    SPIN_UP,
    build_kd_hamiltonian,
    eigensystem,
    kd_levels,
    nuclear_spin_matrices,
    pauli_matrices,
    time_reversal_matrix,
)

GROUND, EXCITED = default_kd_params()

# Frozen Jacobi-oracle eigenvalues (MHz), ascending.
ORACLE_EIGENVALUES = {
    ("g", 0.0): [
        -468.78917950695836, -468.78917950695836, -426.10188806905074,
        -426.10188806905074, -397.92609490887867, -397.92609490887867,
        -387.99999999999994, 271.99999999999994, 281.9260949088787,
        281.9260949088787, 310.10188806905074, 310.10188806905074,
        352.7891795069583, 352.7891795069583, 406.0, 406.0,
    ],
    ("g", 1000.0): [
        -1640.441027937253, -1538.2753987476917, -1433.1931451250894,
        -1324.4607276605668, -1211.034310799928, -1091.3506836100762,
        -962.8979593000896, -821.1965560794773, 840.1699841284145,
        970.8653668289593, 1092.7916524093696, 1208.4607276605666,
        1319.4358035156476, 1426.7607155288083, 1531.1690031089286,
        1633.1965560794774,
    ],
    ("e", 0.0): [
        -414.6755888628143, -414.67558844356887, -297.1914419402124,
        -297.19059380068876, -180.90079150244065, -180.46439616839837,
        -84.9485426717545, -37.86899248019136, 37.86899248019132,
        84.94854267175455, 180.46439616839837, 180.90079150244054,
        297.1905938006885, 297.1914419402115, 414.6755884435686,
        414.67558886281404,
    ],
    ("e", 1000.0): [
        -1963.0329297808696, -1849.5200359758016, -1736.4696145800408,
        -1623.9771573720075, -1512.1654025723985, -1401.1942984274717,
        -1291.2753409974073, -1182.6923871204135, 1175.3145834614088,
        1285.9878508118802, 1398.0098446529912, 1511.0925692849742,
        1625.021938636443, 1739.636319200973, 1854.8118390798752,
        1970.4522216978646,
    ],
}


def solve(h):
    """Energies (ascending) and eigenvector columns from the level list."""
    levels = eigensystem(h)
    energies = np.array([lv.energy for lv in levels])
    vectors = np.column_stack([lv.state for lv in levels])
    return energies, vectors


def random_kd_params(rng: np.random.Generator, label: str = "g") -> KdParams:
    return KdParams(
        label=label,
        E_k=float(rng.uniform(-5000.0, 5000.0)),
        g_z=float(rng.uniform(0.5, 3.0)),
        a_zz=float(rng.uniform(-400.0, 400.0)),
        a_xx_yy=float(rng.uniform(-400.0, 400.0)),
        a_xz=float(rng.uniform(-200.0, 200.0)),
    )


class TestHamiltonianStructure:
    def test_shape_and_hermiticity(self):
        h = build_kd_hamiltonian(GROUND, 123.0)
        assert h.shape == (16, 16)
        assert np.allclose(h, h.conj().T, atol=1e-12)

    def test_field_free_diagonal_from_axial_coupling(self):
        # with only a_zz, energies are E_k +/- a_zz/2 * m exactly
        params = KdParams(label="g", E_k=10.0, g_z=2.0, a_zz=100.0, a_xx_yy=0.0, a_xz=0.0)
        h = build_kd_hamiltonian(params, 0.0)
        m = np.arange(-3.5, 4.0, 1.0)  # basis is ascending in m
        expected = np.concatenate([10.0 + 50.0 * m, 10.0 - 50.0 * m])
        assert np.allclose(np.diag(h), expected, atol=1e-12)
        assert np.allclose(h, np.diag(np.diag(h)), atol=1e-12)

    def test_electron_zeeman_block_signs(self):
        b = 800.0
        h = build_kd_hamiltonian(
            KdParams(label="g", E_k=0.0, g_z=2.0, a_zz=0.0, a_xx_yy=0.0, a_xz=0.0), b
        )
        zeeman = 0.5 * DEFAULT_CONSTANTS.mu_B * b * 2.0
        nuclear = DEFAULT_CONSTANTS.mu_N * DEFAULT_CONSTANTS.g_N * b
        m = np.arange(-3.5, 4.0, 1.0)
        assert np.allclose(np.diag(h)[:8], zeeman + nuclear * m, atol=1e-10)
        assert np.allclose(np.diag(h)[8:], -zeeman + nuclear * m, atol=1e-10)

    def test_transverse_hyperfine_couples_adjacent_m(self):
        params = KdParams(label="g", E_k=0.0, g_z=1.0, a_zz=0.0, a_xx_yy=200.0, a_xz=0.0)
        h = build_kd_hamiltonian(params, 0.0)
        # sigma_x Ix + sigma_y Iy = sigma_+ I_- + sigma_- I_+ : only
        # (up, m) <-> (down, m+1) elements survive
        ix, iy, iz = nuclear_spin_matrices(7 / 2)
        ladder = np.abs(h[8:, :8])
        expected = 0.5 * 200.0 * np.abs(ix + 1j * iy)
        assert np.allclose(ladder, expected, atol=1e-12)
        assert np.allclose(h[:8, :8], 0.0, atol=1e-12)
        assert np.allclose(h[8:, 8:], 0.0, atol=1e-12)

    def test_spin_matrix_algebra(self):
        sx, sy, sz = pauli_matrices()
        assert np.allclose(sx @ sy - sy @ sx, 2j * sz)
        ix, iy, iz = nuclear_spin_matrices(7 / 2)
        assert np.allclose(ix @ iy - iy @ ix, 1j * iz, atol=1e-12)
        casimir = ix @ ix + iy @ iy + iz @ iz
        assert np.allclose(casimir, (7 / 2) * (9 / 2) * np.eye(8), atol=1e-12)

    def test_bad_spin_rejected(self):
        with pytest.raises(ValueError):
            nuclear_spin_matrices(0.4)


class TestEigensystemAgainstOracle:
    @pytest.mark.parametrize("label,b", list(ORACLE_EIGENVALUES))
    def test_frozen_eigenvalues(self, label, b):
        params = GROUND if label == "g" else EXCITED
        energies, _ = solve(build_kd_hamiltonian(params, b))
        assert np.allclose(energies, ORACLE_EIGENVALUES[(label, b)], atol=1e-6)

    def test_random_hamiltonians_match_jacobi(self):
        rng = np.random.default_rng(2024)
        mats = []
        for _ in range(40):
            params = random_kd_params(rng)
            b = float(rng.uniform(0.0, 2000.0))
            mats.append(build_kd_hamiltonian(params, b))
        mats = np.array(mats)
        oracle = jacobi_eigenvalues_batch(mats)
        for h, reference in zip(mats, oracle):
            energies, vectors = solve(h)
            assert np.allclose(energies, reference, atol=1e-6)
            # residual check ties the vectors to the energies
            residual = h @ vectors - vectors * energies[None, :]
            assert np.max(np.abs(residual)) < 1e-8

    def test_eigenvectors_orthonormal(self):
        h = build_kd_hamiltonian(EXCITED, 350.0)
        _, vectors = solve(h)
        gram = vectors.conj().T @ vectors
        assert np.allclose(gram, np.eye(16), atol=1e-10)


class TestTimeReversal:
    """Zero-field symmetry checks.

    The combined electron-nuclear spin is integer, so time inversion
    squares to +1 and does not force global twofold degeneracy; what it
    does guarantee is that every eigenstate's time-reversed partner has
    the same energy, and that states whose partner is orthogonal come
    in degenerate pairs.  With a purely axial hyperfine tensor the
    partner is always orthogonal, so there the spectrum is fully paired.
    """

    def test_commutes_with_zero_field_hamiltonian(self):
        rng = np.random.default_rng(5)
        theta = time_reversal_matrix()
        for _ in range(20):
            h = build_kd_hamiltonian(random_kd_params(rng), 0.0)
            transformed = theta @ h.conj() @ theta.conj().T
            assert np.max(np.abs(transformed - h)) < 1e-9

    def test_breaks_at_finite_field(self):
        theta = time_reversal_matrix()
        h = build_kd_hamiltonian(GROUND, 500.0)
        transformed = theta @ h.conj() @ theta.conj().T
        assert np.max(np.abs(transformed - h)) > 1.0

    def test_partner_energies_equal(self):
        rng = np.random.default_rng(6)
        theta = time_reversal_matrix()
        for _ in range(20):
            h = build_kd_hamiltonian(random_kd_params(rng), 0.0)
            energies, vectors = solve(h)
            partners = theta @ vectors.conj()
            partner_energy = np.real(
                np.sum(partners.conj() * (h @ partners), axis=0)
            )
            assert np.max(np.abs(partner_energy - energies)) < 1e-6

    def test_orthogonal_partner_implies_degenerate_pair(self):
        rng = np.random.default_rng(7)
        theta = time_reversal_matrix()
        for _ in range(20):
            h = build_kd_hamiltonian(random_kd_params(rng), 0.0)
            energies, vectors = solve(h)
            partners = theta @ vectors.conj()
            overlap = np.abs(np.sum(vectors.conj() * partners, axis=0))
            for i in range(energies.size):
                if overlap[i] < 0.99:
                    matches = np.sum(np.abs(energies - energies[i]) < 1e-6)
                    assert matches >= 2

    def test_axial_hyperfine_fully_paired(self):
        # (sigma, m) <-> (-sigma, -m) is exact when a_xx_yy = a_xz = 0
        rng = np.random.default_rng(8)
        for _ in range(20):
            params = KdParams(
                label="g",
                E_k=float(rng.uniform(-1000.0, 1000.0)),
                g_z=float(rng.uniform(0.5, 3.0)),
                a_zz=float(rng.uniform(-400.0, 400.0)),
                a_xx_yy=0.0,
                a_xz=0.0,
            )
            energies, _ = solve(build_kd_hamiltonian(params, 0.0))
            pairs = energies.reshape(8, 2)
            assert np.max(pairs[:, 1] - pairs[:, 0]) < 1e-6

    def test_generic_hyperfine_has_unpaired_levels(self):
        # the default ground doublet has two singlets at -388 and +272
        energies, _ = solve(build_kd_hamiltonian(GROUND, 0.0))
        assert np.min(np.abs(energies - (-388.0))) < 1e-9
        assert np.min(np.abs(energies - 272.0)) < 1e-9
        assert np.sum(np.abs(energies - (-388.0)) < 1e-3) == 1
        assert np.sum(np.abs(energies - 272.0) < 1e-3) == 1


class TestLevelLabels:
    def test_level_count_and_order(self):
        levels = kd_levels(GROUND, 0.0)
        assert len(levels) == 16
        energies = [lv.energy for lv in levels]
        assert energies == sorted(energies)

    def test_labels_partition_at_high_field(self):
        # at 50 kG the Zeeman term dominates and labels are clean
        levels = kd_levels(GROUND, 50000.0)
        ups = [lv for lv in levels if lv.sigma_label == SPIN_UP]
        downs = [lv for lv in levels if lv.sigma_label == SPIN_DOWN]
        assert len(ups) == 8 and len(downs) == 8
        assert sorted(lv.m_label for lv in ups) == [x / 2 for x in range(-7, 8, 2)]
        assert sorted(lv.m_label for lv in downs) == [x / 2 for x in range(-7, 8, 2)]
        # spin-down sector lies below spin-up for positive g_z
        assert max(lv.energy for lv in downs) < min(lv.energy for lv in ups)

    def test_degenerate_pairs_have_complementary_sectors(self):
        levels = kd_levels(GROUND, 0.0)
        for a, b in zip(levels[:-1], levels[1:]):
            if abs(a.energy - b.energy) < 1e-9:
                weight_a = float(np.sum(np.abs(a.state[:8]) ** 2))
                weight_b = float(np.sum(np.abs(b.state[:8]) ** 2))
                assert abs(weight_a + weight_b - 1.0) < 1e-9

    def test_nuclear_ratio_guard(self):
        with pytest.raises(ValueError):
            SpinConstants(mu_B=1.399624604, mu_N=1.399624604 / 1000.0)

    def test_invalid_doublet_label(self):
        with pytest.raises(ValueError):
            KdParams(label="x", E_k=0.0, g_z=1.0, a_zz=0.0, a_xx_yy=0.0, a_xz=0.0)
