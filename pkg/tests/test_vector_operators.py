import unittest

import numpy as np

import vector_operators as vo
from angular_coupling import (
    ChannelBasis,
    angular_quadrature,
    basis_functions,
    spherical_harmonic,
    vector_spherical_harmonic,
)
from radial_waves import FreeWaveMatrix
from source_models import SQRT_FOUR_PI, MultipoleField, TanhStep, smooth_ball, square_well, vacuum


def _psi(r):
    return r**2 * np.exp(-r)


def _psi_prime(r):
    return (2 * r - r**2) * np.exp(-r)


def _psi_second(r):
    return (2 - 4 * r + r**2) * np.exp(-r)


def _spherical(points):
    r = np.linalg.norm(points, axis=-1)
    theta = np.arccos(np.clip(points[..., 2] / r, -1.0, 1.0))
    phi = np.arctan2(points[..., 1], points[..., 0])
    return r, theta, phi


def _vector_field(j, l, m):
    def field(points):
        r, theta, phi = _spherical(points)
        return (_psi(r) / r)[..., None] * vector_spherical_harmonic(j, l, m, theta, phi)

    return field


def _scalar_field(l, m):
    def field(points):
        r, theta, phi = _spherical(points)
        return _psi(r) / r * spherical_harmonic(l, m, theta, phi)

    return field


def _epsilon(field_):
    def value(points):
        r, theta, phi = _spherical(points)
        total = np.zeros(r.shape, dtype=complex)
        for (l, m), profile in field_.moments.items():
            total = total + profile(r)[0] * spherical_harmonic(l, m, theta, phi)
        return total

    return value


def _partial(func, points, axis, step):
    shift = np.zeros(3)
    shift[axis] = step
    return (func(points + shift) - func(points - shift)) / (2 * step)


def _grad(func, step):
    return lambda p: np.stack([_partial(func, p, axis, step) for axis in range(3)], axis=-1)


def _div(func, step):
    return lambda p: sum(_partial(func, p, axis, step)[..., axis] for axis in range(3))


def _curl(func, step):
    def curl(p):
        d = [_partial(func, p, axis, step) for axis in range(3)]
        return np.stack(
            [d[1][..., 2] - d[2][..., 1], d[2][..., 0] - d[0][..., 2], d[0][..., 1] - d[1][..., 0]], axis=-1
        )

    return curl


class _Sphere:
    def __init__(self, r, n_theta=16, n_phi=32):
        self.r = r
        self.theta, self.phi, self.weights = angular_quadrature(n_theta, n_phi)
        self.points = r * np.stack(
            [
                np.sin(self.theta) * np.cos(self.phi),
                np.sin(self.theta) * np.sin(self.phi),
                np.cos(self.theta),
            ],
            axis=-1,
        )

    def project(self, values, basis):
        """Radial coefficients (r times the channel components) of values sampled on the sphere."""
        funcs = basis_functions(basis, self.theta, self.phi)
        if basis.kind == "vector":
            return self.r * np.einsum("a...c,...c,...->a", funcs.conj(), values, self.weights)
        return self.r * np.einsum("a...,...,...->a", funcs.conj(), values, self.weights)


def _unit(basis, channel):
    vector = np.zeros(basis.dimension, dtype=complex)
    vector[basis.index(channel)] = 1.0
    return vector


class TestCoefficientJet(unittest.TestCase):
    def test_product_rule(self) -> None:
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=(2, 3)), rng.normal(size=(3, 2))
        r = 1.3
        x = vo.CoefficientJet(r**2 * a, 2 * r * a, 2 * a)
        y = vo.CoefficientJet(r**3 * b, 3 * r**2 * b, 6 * r * b)
        product = x @ y
        np.testing.assert_allclose(product.value, r**5 * a @ b)
        np.testing.assert_allclose(product.first, 5 * r**4 * a @ b)
        np.testing.assert_allclose(product.second, 20 * r**3 * a @ b)

    def test_over_r(self) -> None:
        jet = vo.CoefficientJet.over_r(np.eye(2) * 3.0, 2.0)
        np.testing.assert_allclose(jet.value, 1.5 * np.eye(2))
        np.testing.assert_allclose(jet.first, -0.75 * np.eye(2))
        np.testing.assert_allclose(jet.second, 0.75 * np.eye(2))

    def test_unknown_derivatives_propagate(self) -> None:
        jet = vo.CoefficientJet.over_r(np.eye(2), 1.0).derivative()
        self.assertIsNone(jet.second)
        self.assertIsNone((jet @ jet).second)
        self.assertIsNone((jet + jet).second)
        with self.assertRaises(ValueError):
            jet.derivative().derivative()


class TestLadders(unittest.TestCase):
    def setUp(self) -> None:
        self.scalar = ChannelBasis.scalar(3)
        self.vector = ChannelBasis.vector(3)
        self.grad = vo.gradient_ladder(self.scalar, self.vector)
        self.div = vo.divergence_ladder(self.vector, self.scalar)
        self.curl = vo.curl_ladder(self.vector)

    def test_divergence_of_l_equal_j_vanishes(self) -> None:
        for col, (j, l, _m) in enumerate(self.vector.channels):
            if l == j:
                self.assertTrue(np.all(self.div.slope[:, col] == 0))
                self.assertTrue(np.all(self.div.inverse_r[:, col] == 0))

    def test_curl_of_gradient_vanishes(self) -> None:
        for r in (0.3, 1.7):
            composed = self.curl.at(r).compose(self.grad.at(r))
            for jet in (composed.second, composed.first, composed.zeroth):
                self.assertLess(np.max(np.abs(jet.value)), 1e-12)

    def test_divergence_of_curl_vanishes(self) -> None:
        for r in (0.3, 1.7):
            composed = self.div.at(r).compose(self.curl.at(r))
            for jet in (composed.second, composed.first, composed.zeroth):
                self.assertLess(np.max(np.abs(jet.value)), 1e-12)

    def test_divergence_of_gradient_is_laplacian(self) -> None:
        r = 0.8
        laplacian = self.div.at(r).compose(self.grad.at(r))
        ells = self.scalar.ells
        np.testing.assert_allclose(laplacian.second.value, np.eye(self.scalar.dimension), atol=1e-12)
        np.testing.assert_allclose(laplacian.first.value, 0.0, atol=1e-12)
        np.testing.assert_allclose(laplacian.zeroth.value, np.diag(-ells * (ells + 1) / r**2), atol=1e-10)

    def test_curl_conserves_j_and_m(self) -> None:
        channels = self.vector.channels
        rows, cols = np.nonzero(self.curl.slope)
        for row, col in zip(rows, cols):
            self.assertEqual(channels[row][0], channels[col][0])
            self.assertEqual(channels[row][2], channels[col][2])

    def test_gradient_matches_finite_differences(self) -> None:
        sphere = _Sphere(1.2)
        for l, m in ((0, 0), (1, -1), (2, 1)):
            numeric = sphere.project(_grad(_scalar_field(l, m), 1e-5)(sphere.points), self.vector)
            unit = _unit(self.scalar, (l, m))
            blocks = self.grad.at(sphere.r).apply(unit * _psi(sphere.r), unit * _psi_prime(sphere.r))
            np.testing.assert_allclose(blocks, numeric, atol=1e-7)

    def test_divergence_and_curl_match_finite_differences(self) -> None:
        sphere = _Sphere(0.9)
        for channel in ((0, 1, 0), (1, 0, 1), (1, 2, 0), (2, 2, -1), (2, 3, 2)):
            field = _vector_field(*channel)
            unit = _unit(self.vector, channel)
            psi, dpsi = unit * _psi(sphere.r), unit * _psi_prime(sphere.r)
            numeric_div = sphere.project(_div(field, 1e-5)(sphere.points), self.scalar)
            np.testing.assert_allclose(self.div.at(sphere.r).apply(psi, dpsi), numeric_div, atol=1e-7)
            numeric_curl = sphere.project(_curl(field, 1e-5)(sphere.points), self.vector)
            np.testing.assert_allclose(self.curl.at(sphere.r).apply(psi, dpsi), numeric_curl, atol=1e-7)

    def test_invalid_bases(self) -> None:
        with self.assertRaises(ValueError):
            vo.gradient_ladder(self.vector, self.vector)
        with self.assertRaises(ValueError):
            vo.divergence_ladder(ChannelBasis.vector(4), self.scalar)
        with self.assertRaises(ValueError):
            vo.curl_ladder(self.scalar)
        with self.assertRaises(ValueError):
            self.curl.at(0.0)


class TestOperatorBlocks(unittest.TestCase):
    def test_default_internal_truncation(self) -> None:
        blocks = vo.build_operator_blocks(ChannelBasis.vector(2, 1))
        self.assertEqual(blocks.scalar.lmax, 4)
        self.assertEqual(blocks.extended.jmax, 4)
        self.assertEqual(blocks.grad.slope.shape, (blocks.extended.dimension, blocks.scalar.dimension))

    def test_truncation_errors(self) -> None:
        with self.assertRaises(ValueError):
            vo.build_operator_blocks(ChannelBasis.vector(2, 1), scalar_lmax=3)
        with self.assertRaises(ValueError):
            vo.build_operator_blocks(ChannelBasis.scalar(2))
        blocks = vo.build_operator_blocks(ChannelBasis.vector(1))
        quadrupole = MultipoleField("permittivity", {(2, 0): TanhStep(0.1, 1.0, 4.0)}, 11.0)
        with self.assertRaises(ValueError):
            vo.assemble_generalized_operator(quadrupole, blocks, 1.0, 0.5)

    def test_epsilon_multiplication_of_monopole(self) -> None:
        blocks = vo.build_operator_blocks(ChannelBasis.vector(2))
        ball = smooth_ball(3.0, 1.0, 50.0)
        vector_mul = blocks.epsilon_mul(ball, 0.5)
        scalar_mul = blocks.scalar_epsilon_mul(ball, 0.5)
        np.testing.assert_allclose(vector_mul.offset.value, 4.0 * np.eye(blocks.basis.dimension), atol=1e-12)
        np.testing.assert_allclose(scalar_mul.offset.value, 4.0 * np.eye(blocks.scalar.dimension), atol=1e-12)
        np.testing.assert_array_equal(vector_mul.slope.value, 0.0)


class TestGeneralizedOperator(unittest.TestCase):
    def test_vacuum_reduces_to_helmholtz(self) -> None:
        basis = ChannelBasis.vector(3)
        blocks = vo.build_operator_blocks(basis)
        r, k = 0.7, 1.1
        triple = vo.assemble_generalized_operator(vacuum("permittivity"), blocks, k, r)
        ells = basis.ells
        np.testing.assert_allclose(triple.d2, np.eye(basis.dimension), atol=1e-12)
        np.testing.assert_allclose(triple.D1, 0.0, atol=1e-10)
        np.testing.assert_allclose(triple.D1_prime, 0.0, atol=1e-10)
        np.testing.assert_allclose(triple.D0, np.diag(ells * (ells + 1) / r**2 - k**2), atol=1e-10)

    def test_free_waves_solve_vacuum_operator(self) -> None:
        basis = ChannelBasis.vector(2)
        blocks = vo.build_operator_blocks(basis)
        k, r = 1.4, 0.9
        triple = vo.assemble_generalized_operator(vacuum("permittivity"), blocks, k, r)
        value, slope = FreeWaveMatrix(basis, k).regular_values(r)
        ells = basis.ells
        second = (ells * (ells + 1) / r**2 - k**2) * value
        self.assertLess(vo.operator_residual(triple, (np.diag(value), np.diag(slope), np.diag(second))), 1e-8)

    def test_symmetric_permittivity_is_block_diagonal(self) -> None:
        basis = ChannelBasis.vector(2)
        blocks = vo.build_operator_blocks(basis)
        triple = vo.assemble_generalized_operator(smooth_ball(4.0, 1.0, 8.0), blocks, 1.0, 0.95)
        keys = [(j, m) for j, _l, m in basis.channels]
        mask = np.array([[a != b for b in keys] for a in keys])
        for matrix in (triple.d2, triple.d1, triple.d0):
            self.assertLess(np.max(np.abs(matrix[mask])), 1e-12)
        self.assertGreater(np.max(np.abs(triple.D1)), 1e-3)

    def test_matches_finite_difference_operator(self) -> None:
        eps = MultipoleField(
            "permittivity",
            {
                (0, 0): TanhStep(SQRT_FOUR_PI * 1.5, 1.0, 3.0, SQRT_FOUR_PI),
                (1, 0): TanhStep(0.6, 1.0, 3.0),
            },
            1.0 + 40.0 / 3.0,
        )
        basis = ChannelBasis.vector(2, 1)
        blocks = vo.build_operator_blocks(basis)
        k, step = 1.3, 1e-4
        sphere = _Sphere(1.1)
        epsilon = _epsilon(eps)
        operator = vo.generalized_operator(eps, blocks, k, sphere.r)
        for channel in ((1, 2, 0), (2, 2, 1)):
            field = _vector_field(*channel)

            def weighted(p, field=field):
                return epsilon(p)[..., None] * field(p)

            def applied(p, field=field, weighted=weighted):
                gauge = epsilon(p)[..., None] * _grad(_div(weighted, step), step)(p)
                return _curl(_curl(field, step), step)(p) - gauge - k**2 * weighted(p)

            numeric = sphere.project(applied(sphere.points), basis)
            unit = _unit(basis, channel)
            blocks_value = operator.apply(
                unit * _psi(sphere.r), unit * _psi_prime(sphere.r), unit * _psi_second(sphere.r)
            )
            scale = np.max(np.abs(numeric))
            np.testing.assert_allclose(blocks_value, numeric, atol=1e-5 * scale)

    def test_rejects_potential(self) -> None:
        blocks = vo.build_operator_blocks(ChannelBasis.vector(1))
        with self.assertRaises(ValueError):
            vo.assemble_generalized_operator(square_well(1.0, 1.0, 8.0), blocks, 1.0, 0.5)


if __name__ == "__main__":
    unittest.main()
