import cmath
import math
import unittest

import numpy as np

import analytic_oracles as ao


class TestSquareWell(unittest.TestCase):
    def test_free_limit_is_one(self) -> None:
        for l in range(4):
            for k in (0.5, 2.0, 0.7j, 1.0 + 0.2j):
                self.assertAlmostEqual(ao.s_exact_square_well(l, k, 0.0, 1.0), 1.0, places=11)

    def test_hard_sphere_limit(self) -> None:
        k, a = 1.0, 1.0
        value = ao.s_exact_square_well(0, k, 1e5, a)
        self.assertLess(abs(value - cmath.exp(-2j * k * a)), 1e-2)

    def test_unitary_on_real_axis(self) -> None:
        for V0 in (-1.0, 2.0):
            for l in range(4):
                for k in np.linspace(0.5, 3.0, 6):
                    self.assertAlmostEqual(abs(ao.s_exact_square_well(l, k, V0, 1.0)), 1.0, places=11)

    def test_reflection_symmetry(self) -> None:
        for l in range(4):
            for k in (0.6, 1.7, 2.9):
                forward = ao.s_exact_square_well(l, k, 2.0, 1.0)
                backward = ao.s_exact_square_well(l, -k, 2.0, 1.0)
                self.assertAlmostEqual(np.conj(backward), forward, places=10)

    def test_real_on_imaginary_axis(self) -> None:
        for V0 in (-1.0, 2.0):
            value = ao.s_exact_square_well(1, 0.5j, V0, 1.0)
            self.assertAlmostEqual(value.imag, 0.0, places=10)

    def test_repulsive_s_wave_phase_is_negative(self) -> None:
        phase = 0.5 * cmath.phase(ao.s_exact_square_well(0, 0.3, 2.0, 1.0))
        self.assertLess(phase, 0.0)

    def test_bound_state_pole(self) -> None:
        q = 2.0
        kappa = -q / math.tan(q)
        with self.assertRaises(ao.OracleError):
            ao.s_exact_square_well(0, 1j * kappa, -(q * q + kappa * kappa), 1.0)

    def test_zero_interior_wave_number(self) -> None:
        value = ao.s_exact_square_well(1, 1.5, 2.25, 1.0)
        nearby = ao.s_exact_square_well(1, 1.5, 2.25 + 1e-7, 1.0)
        self.assertAlmostEqual(value, nearby, places=5)

    def test_invalid_arguments(self) -> None:
        with self.assertRaises(ValueError):
            ao.s_exact_square_well(0, 0.0, 1.0, 1.0)
        with self.assertRaises(ValueError):
            ao.s_exact_square_well(0, 1.0, 1.0, -1.0)


class TestDielectricSphere(unittest.TestCase):
    def test_vacuum_is_one(self) -> None:
        for pol in ("M", "N"):
            for j in (1, 2, 3):
                self.assertAlmostEqual(ao.s_exact_dielectric_sphere(j, pol, 1.3, 1.0, 1.0), 1.0, places=11)

    def test_unitary_on_real_axis(self) -> None:
        for pol in ("M", "N"):
            for j in (1, 2, 3):
                for k in (0.5, 1.5, 3.0):
                    self.assertAlmostEqual(abs(ao.s_exact_dielectric_sphere(j, pol, k, 1.5, 1.0)), 1.0, places=11)

    def test_polarizations_differ(self) -> None:
        m_value = ao.s_exact_dielectric_sphere(1, "M", 1.0, 1.5, 1.0)
        n_value = ao.s_exact_dielectric_sphere(1, "N", 1.0, 1.5, 1.0)
        self.assertGreater(abs(m_value - n_value), 1e-3)

    def test_low_k_limit(self) -> None:
        for pol in ("M", "N"):
            self.assertLess(abs(ao.s_exact_dielectric_sphere(1, pol, 1e-3, 1.5, 1.0) - 1.0), 1e-5)

    def test_matches_square_well_for_transverse_electric(self) -> None:
        k, n = 1.2, 1.5
        # M waves see the interior wave number n k, like a well with V0 = k^2 (1 - n^2)
        well = ao.s_exact_square_well(2, k, k * k * (1 - n * n), 1.0)
        self.assertAlmostEqual(ao.s_exact_dielectric_sphere(2, "M", k, n, 1.0), well, places=10)

    def test_invalid_arguments(self) -> None:
        with self.assertRaises(ValueError):
            ao.s_exact_dielectric_sphere(0, "M", 1.0, 1.5, 1.0)
        with self.assertRaises(ValueError):
            ao.s_exact_dielectric_sphere(1, "L", 1.0, 1.5, 1.0)  # type: ignore[arg-type]


class TestOracleEigenphases(unittest.TestCase):
    def test_square_well_table(self) -> None:
        spec = ao.OracleSpec("square_well", 2.0, 1.0)
        frame = ao.oracle_eigenphases(spec, np.linspace(0.5, 3.0, 10), 3)
        self.assertEqual(len(frame), 40)
        self.assertEqual(sorted(frame["degeneracy"].unique()), [1, 3, 5, 7])
        np.testing.assert_allclose(frame["modulus"], 1.0, atol=1e-11)
        first = frame[(frame["order"] == 0)].iloc[0]
        self.assertAlmostEqual(first["eigenphase"], 0.5 * cmath.phase(ao.s_exact_square_well(0, 0.5, 2.0, 1.0)))

    def test_sphere_table_has_both_polarizations(self) -> None:
        spec = ao.OracleSpec("dielectric_sphere", 1.5, 1.0)
        frame = ao.oracle_eigenphases(spec, [1.0, 2.0], 2)
        self.assertEqual(set(frame["channel"]), {"j=1,M", "j=1,N", "j=2,M", "j=2,N"})
        self.assertEqual(len(frame), 8)

    def test_unwrapping_is_continuous(self) -> None:
        spec = ao.OracleSpec("square_well", -20.0, 1.0)
        frame = ao.oracle_eigenphases(spec, np.linspace(0.05, 4.0, 200), 0)
        self.assertLess(float(np.max(np.abs(np.diff(frame["eigenphase"])))), 0.5)

    def test_invalid_spec(self) -> None:
        with self.assertRaises(ValueError):
            ao.OracleSpec("cube", 1.0, 1.0)  # type: ignore[arg-type]
        with self.assertRaises(ValueError):
            ao.OracleSpec("dielectric_sphere", -1.5, 1.0)
        with self.assertRaises(ValueError):
            ao.OracleSpec("square_well", 1.0, 0.0)


class TestPlaneWaves(unittest.TestCase):
    def test_axial_coefficients(self) -> None:
        for l in range(5):
            expected = 4 * math.pi * 1j**l * math.sqrt((2 * l + 1) / (4 * math.pi))
            self.assertAlmostEqual(ao.scalar_plane_wave_coeffs([0, 0, 1], l, 0), expected, places=12)
            for m in range(1, l + 1):
                self.assertAlmostEqual(abs(ao.scalar_plane_wave_coeffs([0, 0, 1], l, m)), 0.0, places=12)

    def test_scalar_resummation(self) -> None:
        direction = np.array([0.3, -0.4, 0.866])
        point = np.array([1.0, 2.0, 2.0]) * 5.0 / 3.0
        k = 1.0
        expected = cmath.exp(1j * k * np.dot(direction / np.linalg.norm(direction), point))
        self.assertLess(abs(ao.plane_wave_sum(k, direction, point, 40) - expected), 1e-6)

    def test_vector_resummation_and_mode_form(self) -> None:
        direction = np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0)
        polarization = np.array([1.0, -1.0, 0.0]) / math.sqrt(2.0)
        point = np.array([3.0, 0.0, 4.0])
        expected = polarization * cmath.exp(1j * np.dot(direction, point))
        by_channel = ao.vector_plane_wave_sum(1.0, direction, polarization, point, 30)
        by_mode = ao.vector_plane_wave_mode_sum(1.0, direction, polarization, point, 30)
        np.testing.assert_allclose(by_channel, expected, atol=1e-6)
        np.testing.assert_allclose(by_mode, by_channel, atol=1e-10)

    def test_transverse_polarization_has_no_longitudinal_part(self) -> None:
        direction = np.array([0.0, 0.6, 0.8])
        polarization = np.array([1.0, 0.0, 0.0])
        coeffs = ao.vector_plane_wave_modes(direction, polarization, 4)
        for (kind, _j, _m), value in coeffs.items():
            if kind == "L":
                self.assertAlmostEqual(abs(value), 0.0, places=12)
        self.assertGreater(max(abs(v) for (kind, _j, _m), v in coeffs.items() if kind == "M"), 0.1)


def _divergence(func, point: np.ndarray, step: float = 1e-4) -> complex:
    total = 0j
    for axis in range(3):
        shift = np.zeros(3)
        shift[axis] = step
        total += (func(point + shift)[axis] - func(point - shift)[axis]) / (2 * step)
    return total


class TestRegularModes(unittest.TestCase):
    def test_transverse_modes_are_divergence_free(self) -> None:
        point = np.array([0.7, -0.4, 1.1])
        k = 1.3
        for kind in ("M", "N"):
            for j, m in ((1, 0), (2, 1), (3, -2)):
                div = _divergence(lambda x: ao.regular_vector_mode(kind, j, m, k, x), point)
                self.assertLess(abs(div), 1e-6)

    def test_longitudinal_mode_has_divergence(self) -> None:
        point = np.array([0.7, -0.4, 1.1])
        div = _divergence(lambda x: ao.regular_vector_mode("L", 1, 0, 1.3, x), point)
        self.assertGreater(abs(div), 1e-2)


class TestGreensFunctions(unittest.TestCase):
    point = np.array([0.3, 0.2, 0.5])
    source = np.array([1.5, -1.0, 2.0])

    def test_scalar_matches_closed_kernel(self) -> None:
        for k in (1.0, 2.0 + 0.3j):
            series = ao.greens_function_partial_wave(self.point, self.source, k)
            closed = ao.greens_function_closed(self.point, self.source, k)
            self.assertLess(abs(series - closed), 1e-4 * abs(closed))

    def test_symmetric_in_arguments(self) -> None:
        forward = ao.greens_function_partial_wave(self.point, self.source, 1.0, lmax=20)
        backward = ao.greens_function_partial_wave(self.source, self.point, 1.0, lmax=20)
        self.assertAlmostEqual(forward, backward, places=12)

    def test_dyadic_forms_agree(self) -> None:
        ljm = ao.greens_function_partial_wave(self.point, self.source, 1.0, lmax=8, dyadic=True)
        mnl = ao.greens_function_partial_wave(self.point, self.source, 1.0, lmax=8, dyadic=True, form="mnl")
        np.testing.assert_allclose(mnl, ljm, atol=1e-8)

    def test_dyadic_is_scalar_times_identity(self) -> None:
        dyadic = ao.greens_function_partial_wave(self.point, self.source, 1.0, lmax=20, dyadic=True)
        closed = ao.greens_function_closed(self.point, self.source, 1.0)
        np.testing.assert_allclose(dyadic, closed * np.eye(3), atol=1e-4 * abs(closed))

    def test_coincident_radii_rejected(self) -> None:
        with self.assertRaises(ValueError):
            ao.greens_function_partial_wave([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 1.0)
        with self.assertRaises(ValueError):
            ao.greens_function_partial_wave(self.point, self.source, 1.0, form="xyz")  # type: ignore[arg-type]

    def test_default_order(self) -> None:
        self.assertEqual(ao.default_expansion_order(2.0, 3.1), 7 + 25)


if __name__ == "__main__":
    unittest.main()
