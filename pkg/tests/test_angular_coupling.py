import math
import unittest

import numpy as np

import angular_coupling as ac


def _quadrature_inner(f: np.ndarray, g: np.ndarray, weights: np.ndarray) -> complex:
    return complex(np.sum(np.sum(f.conj() * g, axis=-1) * weights))


class TestWignerSymbols(unittest.TestCase):
    def test_wigner3j_examples(self) -> None:
        self.assertAlmostEqual(ac.wigner3j(0, 0, 0, 0, 0, 0), 1.0, places=15)
        self.assertAlmostEqual(ac.wigner3j(1, 1, 0, 1, -1, 0), 1.0 / math.sqrt(3.0), places=15)
        self.assertAlmostEqual(ac.wigner3j(1, 1, 2, 0, 0, 0), math.sqrt(2.0 / 15.0), places=15)

    def test_wigner3j_selection_rules_are_exact_zeros(self) -> None:
        self.assertEqual(ac.wigner3j(1, 1, 1, 1, 0, 0), 0.0)
        self.assertEqual(ac.wigner3j(1, 1, 3, 0, 0, 0), 0.0)
        self.assertEqual(ac.wigner3j(1, 1, 1, 0, 0, 0), 0.0)
        self.assertEqual(ac.wigner3j(2, 1, 1, 3, -2, -1), 0.0)

    def test_wigner3j_rejects_negative_j(self) -> None:
        with self.assertRaises(ValueError):
            ac.wigner3j(-1, 1, 0, 0, 0, 0)
        with self.assertRaises(ValueError):
            ac.wigner3j(1.5, 1, 1, 0, 0, 0)

    def test_wigner3j_orthogonality(self) -> None:
        worst = 0.0
        for j1 in range(5):
            for j2 in range(5):
                for j3 in range(abs(j1 - j2), j1 + j2 + 1):
                    for j3p in range(abs(j1 - j2), j1 + j2 + 1):
                        for m3 in range(-min(j3, j3p), min(j3, j3p) + 1):
                            total = 0.0
                            for m1 in range(-j1, j1 + 1):
                                m2 = -m3 - m1
                                if abs(m2) > j2:
                                    continue
                                total += (
                                    (2 * j3 + 1)
                                    * ac.wigner3j(j1, j2, j3, m1, m2, m3)
                                    * ac.wigner3j(j1, j2, j3p, m1, m2, m3)
                                )
                            expected = 1.0 if j3 == j3p else 0.0
                            worst = max(worst, abs(total - expected))
        self.assertLess(worst, 1e-12)

    def test_wigner3j_symmetries(self) -> None:
        value = ac.wigner3j(3, 2, 4, 1, -2, 1)
        self.assertAlmostEqual(ac.wigner3j(2, 4, 3, -2, 1, 1), value, places=14)
        # odd permutation picks up (-1)^(j1+j2+j3)
        self.assertAlmostEqual(ac.wigner3j(2, 3, 4, -2, 1, 1), (-1) ** 9 * value, places=14)
        self.assertAlmostEqual(ac.wigner3j(3, 2, 4, -1, 2, -1), (-1) ** 9 * value, places=14)

    def test_wigner6j_examples(self) -> None:
        self.assertAlmostEqual(ac.wigner6j(0, 0, 0, 0, 0, 0), 1.0, places=15)
        self.assertAlmostEqual(ac.wigner6j(1, 1, 1, 1, 1, 1), 1.0 / 6.0, places=15)
        self.assertAlmostEqual(ac.wigner6j(1, 1, 0, 1, 1, 1), -1.0 / 3.0, places=15)

    def test_wigner6j_triangle_violation(self) -> None:
        self.assertEqual(ac.wigner6j(1, 1, 3, 1, 1, 1), 0.0)
        with self.assertRaises(ValueError):
            ac.wigner6j(1, 1, 1, 1, 1, -1)

    def test_wigner6j_orthogonality(self) -> None:
        j1, j2, j4, j5 = 2, 1, 2, 2
        for j6 in range(0, 5):
            for j6p in range(0, 5):
                total = sum(
                    (2 * j3 + 1) * (2 * j6 + 1)
                    * ac.wigner6j(j1, j2, j3, j4, j5, j6)
                    * ac.wigner6j(j1, j2, j3, j4, j5, j6p)
                    for j3 in range(0, 6)
                )
                allowed = ac._triangle(j1, j5, j6) and ac._triangle(j4, j2, j6)
                expected = 1.0 if (j6 == j6p and allowed) else 0.0
                self.assertAlmostEqual(total, expected, places=12)

    def test_clebsch_gordan_examples(self) -> None:
        self.assertAlmostEqual(ac.clebsch_gordan(0, 0, 0, 0, 0, 0), 1.0, places=15)
        self.assertAlmostEqual(ac.clebsch_gordan(1, 0, 1, 0, 2, 0), math.sqrt(2.0 / 3.0), places=15)
        self.assertAlmostEqual(ac.clebsch_gordan(1, 1, 1, -1, 0, 0), 1.0 / math.sqrt(3.0), places=15)
        self.assertEqual(ac.clebsch_gordan(1, 1, 1, 0, 2, 0), 0.0)

    def test_clebsch_gordan_completeness(self) -> None:
        for j1, j2 in ((1, 1), (2, 1), (3, 2)):
            for m1 in range(-j1, j1 + 1):
                for m2 in range(-j2, j2 + 1):
                    total = sum(
                        ac.clebsch_gordan(j1, m1, j2, m2, j, m1 + m2) ** 2
                        for j in range(abs(j1 - j2), j1 + j2 + 1)
                    )
                    self.assertAlmostEqual(total, 1.0, places=13)


class TestChannelBasis(unittest.TestCase):
    def test_dimensions(self) -> None:
        for lmax in range(5):
            self.assertEqual(ac.ChannelBasis.scalar(lmax).dimension, (lmax + 1) ** 2)
            self.assertEqual(ac.ChannelBasis.vector(lmax).dimension, 3 * (lmax + 1) ** 2 - 2)

    def test_vector_ordering(self) -> None:
        basis = ac.ChannelBasis.vector(1)
        self.assertEqual(
            basis.channels,
            (
                (0, 1, 0),
                (1, 0, -1), (1, 0, 0), (1, 0, 1),
                (1, 1, -1), (1, 1, 0), (1, 1, 1),
                (1, 2, -1), (1, 2, 0), (1, 2, 1),
            ),
        )
        self.assertEqual(basis.block(1, 0), [2, 5, 8])
        self.assertEqual(list(basis.ells), [1, 0, 0, 0, 1, 1, 1, 2, 2, 2])

    def test_ordering_is_stable(self) -> None:
        self.assertEqual(ac.ChannelBasis.scalar(3).channels, ac.ChannelBasis.scalar(3).channels)
        self.assertEqual(ac.ChannelBasis.scalar(2), ac.ChannelBasis("scalar", 2, 0))
        self.assertEqual(ac.ChannelBasis.scalar(2).index((2, -1)), 5)

    def test_invalid_basis(self) -> None:
        with self.assertRaises(ValueError):
            ac.ChannelBasis("spinor", 2)
        with self.assertRaises(ValueError):
            ac.ChannelBasis.scalar(-1)
        with self.assertRaises(ValueError):
            ac.ChannelBasis.scalar(1).index((2, 0))

    def test_metadata(self) -> None:
        meta = ac.ChannelBasis.vector(1, source_lmax=1).metadata()
        self.assertEqual(meta["kind"], "vector")
        self.assertEqual(meta["dimension"], 10)
        self.assertEqual(meta["channels"][0], [0, 1, 0])


class TestScalarCoupling(unittest.TestCase):
    def test_examples(self) -> None:
        inv = 1.0 / math.sqrt(4.0 * math.pi)
        for l in range(4):
            for m in range(-l, l + 1):
                self.assertAlmostEqual(ac.scalar_coupling(l, m, 0, 0, l, m), inv, places=14)
        self.assertEqual(ac.scalar_coupling(1, 0, 1, 0, 1, 0), 0.0)
        self.assertAlmostEqual(ac.scalar_coupling(0, 0, 1, 0, 1, 0), inv, places=14)

    def test_matches_quadrature(self) -> None:
        theta, phi, weights = ac.angular_quadrature()
        keys = [(l, m) for l in range(4) for m in range(-l, l + 1)]
        table = np.stack([ac.spherical_harmonic(l, m, theta, phi) for l, m in keys])
        integrals = np.einsum("ant,bnt,cnt,nt->abc", table, table, table.conj(), weights)
        worst = 0.0
        for a, (l, m) in enumerate(keys):
            for b, (lp, mp) in enumerate(keys):
                for c, (lpp, mpp) in enumerate(keys):
                    worst = max(worst, abs(ac.scalar_coupling(l, m, lp, mp, lpp, mpp) - integrals[a, b, c]))
        self.assertLess(worst, 1e-10)

    def test_rejects_bad_projection(self) -> None:
        with self.assertRaises(ValueError):
            ac.scalar_coupling(1, 2, 0, 0, 1, 2)


class TestVectorCoupling(unittest.TestCase):
    def test_monopole_source_is_identity(self) -> None:
        inv = 1.0 / math.sqrt(4.0 * math.pi)
        channels = ac.ChannelBasis.vector(2).channels
        for j, l, m in channels:
            for jpp, lpp, mpp in channels:
                expected = inv if (j, l, m) == (jpp, lpp, mpp) else 0.0
                self.assertAlmostEqual(ac.vector_coupling(j, l, m, 0, 0, jpp, lpp, mpp), expected, places=14)

    def test_parity_zero(self) -> None:
        self.assertEqual(ac.vector_coupling(1, 1, 0, 1, 0, 1, 1, 0), 0.0)

    def test_matches_clebsch_gordan_expansion(self) -> None:
        # conj(Y^lpp_{jpp mpp}) . Y^l_{jm} expanded over spherical components
        def expansion(j, l, m, lp, mp, jpp, lpp, mpp):
            total = 0.0
            for sigma in (-1, 0, 1):
                if abs(m - sigma) > l or abs(mpp - sigma) > lpp:
                    continue
                total += (
                    ac.clebsch_gordan(lpp, mpp - sigma, 1, sigma, jpp, mpp)
                    * ac.clebsch_gordan(l, m - sigma, 1, sigma, j, m)
                    * ac.scalar_coupling(l, m - sigma, lp, mp, lpp, mpp - sigma)
                )
            return total

        channels = ac.ChannelBasis.vector(3).channels
        for j, l, m in channels:
            for jpp, lpp, mpp in channels:
                for lp in range(3):
                    for mp in range(-lp, lp + 1):
                        self.assertAlmostEqual(
                            ac.vector_coupling(j, l, m, lp, mp, jpp, lpp, mpp),
                            expansion(j, l, m, lp, mp, jpp, lpp, mpp),
                            places=12,
                        )

    def test_matches_quadrature(self) -> None:
        theta, phi, weights = ac.angular_quadrature()
        basis = ac.ChannelBasis.vector(2)
        keys = ac.source_keys(2)
        vectors = ac.basis_functions(basis, theta, phi)
        scalars = np.stack([ac.spherical_harmonic(l, m, theta, phi) for l, m in keys])
        integrals = np.einsum("rntc,antc,snt,nt->sra", vectors.conj(), vectors, scalars, weights)
        worst = 0.0
        for s, (lp, mp) in enumerate(keys):
            for r, (jpp, lpp, mpp) in enumerate(basis.channels):
                for a, (j, l, m) in enumerate(basis.channels):
                    value = ac.vector_coupling(j, l, m, lp, mp, jpp, lpp, mpp)
                    worst = max(worst, abs(value - integrals[s, r, a]))
        self.assertLess(worst, 1e-9)
        # one named entry for reference
        self.assertAlmostEqual(
            ac.vector_coupling(1, 0, 0, 1, 0, 1, 1, 0),
            integrals[keys.index((1, 0)), basis.index((1, 1, 0)), basis.index((1, 0, 0))].real,
            places=10,
        )

    def test_invalid_channel(self) -> None:
        with self.assertRaises(ValueError):
            ac.vector_coupling(0, 0, 0, 0, 0, 0, 1, 0)
        with self.assertRaises(ValueError):
            ac.vector_coupling(1, 3, 0, 0, 0, 1, 1, 0)


class TestCouplingTensor(unittest.TestCase):
    def test_monopole_contracts_to_identity(self) -> None:
        basis = ac.ChannelBasis.scalar(3, source_lmax=2)
        tensor = ac.build_coupling_tensor(basis)
        matrix = tensor.contract({(0, 0): math.sqrt(4.0 * math.pi) * 2.5})
        np.testing.assert_allclose(matrix, 2.5 * np.eye(basis.dimension), atol=1e-14)

    def test_dipole_checkerboard(self) -> None:
        basis = ac.ChannelBasis.scalar(3, source_lmax=1)
        matrix = ac.build_coupling_tensor(basis).contract({(1, 0): 1.0})
        ells = basis.ells
        for row in range(basis.dimension):
            for col in range(basis.dimension):
                if abs(ells[row] - ells[col]) != 1:
                    self.assertEqual(matrix[row, col], 0.0)
        self.assertGreater(np.abs(matrix).max(), 0.1)

    def test_real_source_gives_hermitian_matrix(self) -> None:
        rng = np.random.default_rng(7)
        for basis in (ac.ChannelBasis.scalar(3, 2), ac.ChannelBasis.vector(2, 2)):
            moments = {}
            for l in range(3):
                moments[(l, 0)] = rng.normal()
                for m in range(1, l + 1):
                    value = rng.normal() + 1j * rng.normal()
                    moments[(l, m)] = value
                    moments[(l, -m)] = (-1) ** m * np.conj(value)
            matrix = ac.build_coupling_tensor(basis).contract(moments)
            np.testing.assert_allclose(matrix, matrix.conj().T, atol=1e-13)

    def test_entries_are_immutable_and_cached(self) -> None:
        basis = ac.ChannelBasis.vector(1, source_lmax=1)
        tensor = ac.build_coupling_tensor(basis)
        self.assertIs(tensor, ac.build_coupling_tensor(basis))
        with self.assertRaises(ValueError):
            tensor.entries[(0, 0)][0, 0] = 1.0
        with self.assertRaises(TypeError):
            tensor.entries[(5, 0)] = np.zeros(1)

    def test_rectangular_tensor_keeps_product(self) -> None:
        basis = ac.ChannelBasis.scalar(1, source_lmax=1)
        wide = ac.ChannelBasis.scalar(2, source_lmax=1)
        tensor = ac.build_coupling_tensor(basis, [(1, 0)], out_basis=wide)
        self.assertEqual(tensor.shape, (9, 4))
        value = tensor.entries[(1, 0)][wide.index((2, 0)), basis.index((1, 0))]
        self.assertAlmostEqual(value, ac.scalar_coupling(1, 0, 1, 0, 2, 0), places=15)
        self.assertNotEqual(value, 0.0)

    def test_unknown_moment_rejected(self) -> None:
        tensor = ac.build_coupling_tensor(ac.ChannelBasis.scalar(1), [(0, 0)])
        with self.assertRaises(ValueError):
            tensor.contract({(1, 0): 1.0})
        with self.assertRaises(ValueError):
            ac.build_coupling_tensor(ac.ChannelBasis.scalar(1), [(1, 0)], out_basis=ac.ChannelBasis.vector(1))


class TestVectorSphericalHarmonics(unittest.TestCase):
    def test_orthonormality(self) -> None:
        theta, phi, weights = ac.angular_quadrature(32, 64)
        basis = ac.ChannelBasis.vector(2)
        funcs = ac.basis_functions(basis, theta, phi)
        gram = np.einsum("antc,bntc,nt->ab", funcs.conj(), funcs, weights)
        np.testing.assert_allclose(gram, np.eye(basis.dimension), atol=1e-12)

    def test_conjugation_rule(self) -> None:
        theta = np.array([0.3, 1.1, 2.5])
        phi = np.array([0.2, 4.0, 5.9])
        for j, l, m in ac.ChannelBasis.vector(3).channels:
            lhs = ac.vector_spherical_harmonic(j, l, m, theta, phi).conj()
            rhs = (-1) ** (j + l + m + 1) * ac.vector_spherical_harmonic(j, l, -m, theta, phi)
            np.testing.assert_allclose(lhs, rhs, atol=1e-13)

    def test_j0_at_pole(self) -> None:
        value = ac.vector_spherical_harmonic(0, 1, 0, 0.0, 0.0)
        np.testing.assert_allclose(value, [0.0, 0.0, -1.0 / math.sqrt(4.0 * math.pi)], atol=1e-14)

    def test_invalid_triple(self) -> None:
        with self.assertRaises(ValueError):
            ac.vector_spherical_harmonic(0, 0, 0, 0.1, 0.2)
        with self.assertRaises(ValueError):
            ac.vector_spherical_harmonic(2, 0, 0, 0.1, 0.2)

    def test_transverse_combinations(self) -> None:
        theta, phi, weights = ac.angular_quadrature(32, 64)
        for j in (1, 2, 3):
            for m in (-1, 0, 1):
                fm = ac.transverse_combination("M", j, m, theta, phi)
                fn = ac.transverse_combination("N", j, m, theta, phi)
                fl = ac.transverse_combination("L", j, m, theta, phi)
                self.assertAlmostEqual(abs(_quadrature_inner(fn, fl, weights)), 0.0, places=12)
                self.assertAlmostEqual(abs(_quadrature_inner(fm, fn, weights)), 0.0, places=12)
                self.assertAlmostEqual(_quadrature_inner(fm, fm, weights).real, 1.0, places=12)
                self.assertAlmostEqual(_quadrature_inner(fn, fn, weights).real, 1.0, places=12)

    def test_longitudinal_is_radial(self) -> None:
        theta = np.array([0.4, 1.3, 2.2])
        phi = np.array([0.7, 2.9, 5.1])
        rhat = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1)
        for j in (0, 1, 2):
            for m in range(-j, j + 1):
                fl = ac.transverse_combination("L", j, m, theta, phi)
                expected = rhat * ac.spherical_harmonic(j, m, theta, phi)[:, None]
                np.testing.assert_allclose(fl, expected, atol=1e-13)

    def test_j0_longitudinal_and_errors(self) -> None:
        fl = ac.transverse_combination("L", 0, 0, 0.7, 1.2)
        np.testing.assert_allclose(fl, -ac.vector_spherical_harmonic(0, 1, 0, 0.7, 1.2), atol=1e-15)
        with self.assertRaises(ValueError):
            ac.transverse_combination("M", 0, 0, 0.7, 1.2)
        with self.assertRaises(ValueError):
            ac.transverse_combination("Q", 1, 0, 0.7, 1.2)

    def test_quadrature_weights(self) -> None:
        _theta, _phi, weights = ac.angular_quadrature()
        self.assertAlmostEqual(float(weights.sum()), 4.0 * math.pi, places=12)
        with self.assertRaises(ValueError):
            ac.angular_quadrature(0, 4)


if __name__ == "__main__":
    unittest.main()
