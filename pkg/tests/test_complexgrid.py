import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calabi_lab.cantor import quad_split, rectangle
from calabi_lab.complexgrid import (
    ComplexPolynomial,
    DomainError,
    PathError,
    PathInDomain,
    annulus,
    build_domain,
    circle_polyline,
    complex_derivative,
    disc,
    least_squares_polynomial_fit,
    path_integral,
)


def centroids(dom):
    return dom.vertices[dom.triangles].mean(axis=1)


class TestBuildDomain:
    def test_unit_disc(self, unit_disc_coarse):
        dom = unit_disc_coarse
        assert np.all(np.abs(dom.vertices) <= 1 + 1e-12)
        assert dom.n_boundary_components == 1
        b = dom.boundary_vertices(1)
        assert np.all(np.abs(np.abs(dom.vertices[b]) - 1.0) < 0.1**2 / 8)
        assert dom.max_edge_length() <= 0.1

    def test_annulus_two_components(self):
        dom = annulus(0.5, 1.0, 0.05)
        assert dom.n_boundary_components == 2
        assert np.all(np.abs(np.abs(dom.vertices[dom.boundary_vertices(2)]) - 0.5) < 0.05**2)
        assert dom.max_edge_length() <= 0.05

    def test_cantor_holes(self):
        children, _ = quad_split(rectangle(-0.5, 0.5, -0.5, 0.5), 0.2, inset=0.05)
        dom = build_domain(circle_polyline(1.0, 0.08), [c.polygon for c in children], h=0.1)
        assert dom.n_boundary_components == 5
        for k, c in enumerate(children, start=2):
            assert np.all(c.contains(dom.vertices[dom.boundary_vertices(k)]))

    def test_positive_orientation(self, unit_disc_coarse):
        assert np.all(unit_disc_coarse.triangle_areas() > 0)

    def test_overlapping_holes_rejected(self):
        sq = np.array([0, 0.3, 0.3 + 0.3j, 0.3j])
        with pytest.raises(DomainError):
            build_domain(circle_polyline(1.0, 0.1), [sq, sq + 0.1], h=0.1)

    def test_hole_outside_rejected(self):
        sq = np.array([0, 0.3, 0.3 + 0.3j, 0.3j]) + 0.9
        with pytest.raises(DomainError):
            build_domain(circle_polyline(1.0, 0.1), [sq], h=0.1)

    def test_bad_h(self):
        with pytest.raises(DomainError):
            disc(1.0, 0.0)


class TestComplexDerivative:
    def test_affine_holomorphic(self, unit_disc_coarse):
        z = unit_disc_coarse.vertices
        d = complex_derivative(3 * z + 2j, unit_disc_coarse)
        assert np.max(np.abs(d - 3)) < 1e-12

    def test_conjugate_annihilated(self, unit_disc_coarse):
        z = unit_disc_coarse.vertices
        assert np.max(np.abs(complex_derivative(np.conj(z), unit_disc_coarse))) < 1e-12
        assert np.max(np.abs(complex_derivative(np.conj(z), unit_disc_coarse, conjugate=True) - 1)) < 1e-12

    def test_square_first_order(self):
        errs = []
        for h in (0.1, 0.05, 0.025):
            dom = disc(1.0, h)
            d = complex_derivative(dom.vertices**2, dom)
            errs.append(np.max(np.abs(d - 2 * centroids(dom))))
        # max error <= C h with C measured ~0.26; each halving of h cuts it to ~0.51-0.54
        assert all(e < 0.3 * h for e, h in zip(errs, (0.1, 0.05, 0.025)))
        assert errs[1] <= 0.55 * errs[0] and errs[2] <= 0.55 * errs[1]

    def test_shape_mismatch(self, unit_disc_coarse):
        with pytest.raises(ValueError):
            complex_derivative(np.zeros(3), unit_disc_coarse)


class TestPathIntegral:
    def test_segment(self):
        assert abs(path_integral(1.0, PathInDomain.segment(0, 1)) - 1) < 1e-15

    def test_residue(self):
        val = path_integral(lambda z: 1 / z, PathInDomain.circle(0, 1, 512))
        assert abs(val - 2j * np.pi) < 1e-6

    def test_exact_form_vanishes(self):
        assert abs(path_integral(lambda z: z, PathInDomain.circle(0, 1, 512))) < 1e-9

    def test_vertex_data_requires_ids(self, unit_disc_coarse):
        with pytest.raises(PathError):
            path_integral(unit_disc_coarse.vertices, PathInDomain.segment(0, 0.5))

    def test_path_leaving_domain(self, unit_disc_coarse):
        with pytest.raises(PathError):
            path_integral(1.0, PathInDomain.segment(0, 2, 5), unit_disc_coarse)

    def test_boundary_loop_vertex_data(self, unit_disc_fine):
        dom = unit_disc_fine
        loop = PathInDomain.from_vertices(dom, dom.boundary_loop(1), closed=True)
        assert abs(path_integral(dom.vertices**2, loop)) < 1e-3
        assert abs(path_integral(np.conj(dom.vertices), loop) - 2j * np.pi) < 0.05

    def test_orientation_antisymmetry(self):
        p = PathInDomain.circle(0.3, 0.5, 256)
        f = lambda z: np.exp(z) / (z - 0.2)  # noqa: E731
        assert abs(path_integral(f, p) + path_integral(f, p.reversed())) < 1e-12


class TestPolynomialFit:
    def test_constant(self):
        z = np.exp(2j * np.pi * np.arange(10) / 10)
        p, rep = least_squares_polynomial_fit(z, np.full(10, 3.0), 0)
        assert np.allclose(p.coefficients, [3]) and rep.sup_residual < 1e-14

    def test_exact_quadratic(self):
        z = np.exp(2j * np.pi * np.arange(50) / 50)
        p, rep = least_squares_polynomial_fit(z, z**2 - 1, 2)
        assert np.max(np.abs(p.coefficients - [-1, 0, 1])) < 1e-10

    def test_two_discs_baseline(self):
        n = 100
        k = np.arange(n) + 0.5
        pts = 0.2 * np.sqrt(k / n) * np.exp(2j * np.pi * k * 0.6180339887498949)
        z = np.r_[pts - 0.5, pts + 0.5]
        t = np.r_[-np.ones(n), np.ones(n)]
        _, rep = least_squares_polynomial_fit(z, t, 11)
        assert rep.sup_residual < 0.05
        assert rep.sup_residual == pytest.approx(0.04162, abs=5e-4)  # regression baseline

    def test_errors(self):
        with pytest.raises(ValueError):
            least_squares_polynomial_fit([0, 1], [0, 1], -1)
        with pytest.raises(ValueError):
            least_squares_polynomial_fit([0, 1], [0, 1], 3)
        with pytest.raises(ValueError):
            least_squares_polynomial_fit([1, 1, 1], [0, 1, 2], 1)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False), min_size=1, max_size=4))
    def test_recovers_random_polynomials(self, coefs):
        z = 0.9 * np.exp(2j * np.pi * np.arange(40) / 40)
        p = ComplexPolynomial(coefs)
        q, _ = least_squares_polynomial_fit(z, p(z), len(coefs) - 1)
        assert np.max(np.abs(q(z) - p(z))) < 1e-9


class TestComplexPolynomial:
    def test_algebra(self):
        p = ComplexPolynomial([1, 2])
        q = ComplexPolynomial([0, 0, 1j])
        z = np.array([0.3 + 0.1j, -1.0])
        assert np.allclose((p + q)(z), p(z) + q(z))
        assert np.allclose((p * q)(z), p(z) * q(z))
        assert np.allclose(q.derivative()(z), 2j * z)
        assert ComplexPolynomial.from_json(q.to_json()).coefficients.tolist() == q.coefficients.tolist()
