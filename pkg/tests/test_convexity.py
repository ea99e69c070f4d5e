import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calabi_lab.convexity import (
    ScalarField3,
    check_minimal_psh,
    exhaustion_chain,
    hessian_eigs,
    icosphere,
    mean_convexity,
    mean_curvature,
    sublevel_components,
    torus_mesh,
    write_nrrd,
)


def quadratic(analytic=True):
    return ScalarField3(lambda x: np.sum(x**2, axis=-1),
                        (lambda x: 2 * np.eye(3)) if analytic else None)


def saddle(analytic=True):
    D = np.diag([2.0, 2.0, -2.0])
    return ScalarField3(lambda x: x[..., 0] ** 2 + x[..., 1] ** 2 - x[..., 2] ** 2,
                        (lambda x: D) if analytic else None)


def double_well():
    # wells at x1 = +-1 with value 0; saddle value 1 at the origin
    return ScalarField3(lambda x: (x[..., 0] ** 2 - 1) ** 2 + x[..., 1] ** 2 + x[..., 2] ** 2)


def grid_points(n=5, lo=-1.5, hi=1.5):
    a = np.linspace(lo, hi, n)
    return np.stack(np.meshgrid(a, a, a, indexing="ij"), axis=-1).reshape(-1, 3)


class TestHessian:
    @pytest.mark.parametrize("analytic", [True, False])
    def test_quadratic(self, analytic):
        assert np.allclose(hessian_eigs(quadratic(analytic), [0.3, -0.2, 0.9]), 2, atol=1e-6)

    def test_saddle(self):
        assert np.allclose(hessian_eigs(saddle(False), [0.1, 0.2, 0.3]), [-2, 2, 2], atol=1e-6)

    def test_product(self):
        phi = ScalarField3(lambda x: x[..., 0] * x[..., 1])
        assert np.allclose(hessian_eigs(phi, [0.5, -0.5, 1.0]), [-1, 0, 1], atol=1e-6)

    def test_outside_box(self):
        with pytest.raises(ValueError):
            hessian_eigs(quadratic(), [3.0, 0, 0])
        with pytest.raises(ValueError):
            hessian_eigs(quadratic(False), [2.0, 0, 0])

    def test_fd_convergence(self):
        # quadratic plus quartic: FD error is O(step^2)
        a = np.array([0.4, -0.3, 0.7])
        phi = ScalarField3(lambda x: np.sum(x**2, -1) + np.sum(x**4, -1))
        exact = np.sort(2 + 12 * a**2)
        errs = [np.abs(hessian_eigs(phi, a, s) - exact).max() for s in (1e-2, 5e-3)]
        assert errs[1] / errs[0] == pytest.approx(0.25, abs=0.02)


class TestVerdict:
    def test_quadratic_strongly(self):
        pts = grid_points()
        rep = check_minimal_psh(quadratic(), pts)
        assert abs(rep.min_value - 4) <= 1e-6 and rep.verdict == "strongly_minimal_psh"
        rep = check_minimal_psh(quadratic(False), pts, tol=1e-3)
        assert abs(rep.min_value - 4) <= 1e-3 and rep.verdict == "strongly_minimal_psh"

    def test_saddle_boundary(self):
        rep = check_minimal_psh(saddle(False), grid_points(), tol=1e-3)
        assert abs(rep.min_value) <= 1e-3 and rep.verdict == "minimal_psh_boundary_case"
        assert check_minimal_psh(saddle(), grid_points()).min_value == 0.0

    def test_negative(self):
        phi = ScalarField3(lambda x: -np.sum(x**2, -1), lambda x: -2 * np.eye(3))
        rep = check_minimal_psh(phi, grid_points())
        assert rep.min_value == -4 and rep.verdict == "not_minimal_psh"
        assert rep.to_json()["verdict"] == "not_minimal_psh"

    def test_empty(self):
        with pytest.raises(ValueError):
            check_minimal_psh(quadratic(), np.empty((0, 3)))

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
    def test_affine_invariance(self, c):
        b = np.array(c[:3])
        phi = ScalarField3(lambda x: np.sum(x**2, -1) + x[..., 0] ** 4 + x @ b + c[3])
        base = ScalarField3(lambda x: np.sum(x**2, -1) + x[..., 0] ** 4)
        pts = grid_points(3, -1, 1)
        r1, r0 = check_minimal_psh(phi, pts, 1e-3), check_minimal_psh(base, pts, 1e-3)
        assert r1.verdict == r0.verdict
        assert r1.min_value == pytest.approx(r0.min_value, abs=1e-3)

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=9, max_size=9))
    def test_convex_never_not(self, m):
        A = np.reshape(m, (3, 3))
        H = A @ A.T
        phi = ScalarField3(lambda x: 0.5 * np.einsum("...i,ij,...j", x, H, x), lambda x: H)
        assert check_minimal_psh(phi, grid_points(3)).verdict != "not_minimal_psh"


class TestMeanCurvature:
    def test_sphere(self):
        for R in (1.0, 2.5):
            v, f = icosphere(5, R)
            assert len(v) == 10242
            H = mean_curvature(v, f)
            assert np.max(np.abs(H * R / 2 - 1)) < 0.05

    def test_torus_inner_equator(self):
        v, f = torus_mesh(2.0, 0.5)
        m, k = mean_convexity(v, f)
        assert abs(m - 4 / 3) < 0.1 * 4 / 3
        assert math.hypot(v[k, 0], v[k, 1]) == pytest.approx(1.5, abs=1e-9)
        assert abs(v[k, 2]) < 1e-9

    def test_flat_face(self):
        # a large sphere approximates planar faces locally
        v, f = icosphere(4, 1e6)
        assert np.abs(mean_curvature(v, f)).max() < 1e-5

    def test_open_mesh_rejected(self):
        v, f = icosphere(1)
        with pytest.raises(ValueError):
            mean_curvature(v, f[1:])


class TestSublevel:
    def test_unit_ball_volume(self):
        comps = sublevel_components(quadratic(), 1.0, 0.05)
        assert len(comps) == 1
        assert comps[0].volume == pytest.approx(4 * math.pi / 3, rel=0.02)

    def test_double_well(self):
        comps = sublevel_components(double_well(), 0.5, 0.05)
        assert len(comps) == 2
        assert comps[0].volume == pytest.approx(comps[1].volume, rel=1e-12)

    def test_below_min(self):
        assert sublevel_components(quadratic(), -0.1, 0.1) == []

    def test_marker(self):
        comp = sublevel_components(double_well(), 0.5, 0.05, marker=[1, 0, 0])
        assert comp.contains_point([1, 0, 0]) and not comp.contains_point([-1, 0, 0])
        with pytest.raises(ValueError):
            sublevel_components(double_well(), 0.5, 0.05, marker=[0, 0, 0])
        with pytest.raises(ValueError):
            sublevel_components(quadratic(), math.inf)

    def test_monotone_in_c(self):
        phi = double_well()
        lo = sublevel_components(phi, 0.3, 0.1)
        hi = sublevel_components(phi, 1.5, 0.1)
        for c in lo:
            assert any(np.all(h.mask[c.mask]) for h in hi)


class TestChain:
    def test_nested_balls(self):
        chain = exhaustion_chain(quadratic(), [1, 2, 3], [0, 0, 0], spacing=0.05)
        assert chain.strict_containment == [True, True]
        vols = [c.volume for c in chain.components]
        for v, r in zip(vols, (1, math.sqrt(2), math.sqrt(3))):
            assert v == pytest.approx(4 * math.pi / 3 * r**3, rel=0.03)
        assert chain.to_json()["voxels"][0] < chain.to_json()["voxels"][1]

    def test_repeated_value(self):
        with pytest.raises(ValueError):
            exhaustion_chain(quadratic(), [1, 1, 2], [0, 0, 0])

    def test_saddle_merge(self):
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always")
            chain = exhaustion_chain(double_well(), [0.5, 1.0, 1.5], [1, 0, 0], spacing=0.05, perturbation=0.05)
        assert any("critical" in str(x.message) for x in w)
        first, last = chain.components[0], chain.components[-1]
        assert first.contains_point([1, 0, 0]) and not first.contains_point([-1, 0, 0])
        assert last.contains_point([-1, 0, 0])

    def test_nrrd(self, tmp_path):
        comp = sublevel_components(quadratic(), 1.0, 0.2)[0]
        p = tmp_path / "ball.nrrd"
        write_nrrd(p, comp.mask, comp.spacing, comp.origin)
        raw = p.read_bytes()
        head, body = raw.split(b"\n\n", 1)
        assert head.startswith(b"NRRD0004")
        assert len(body) == comp.mask.size and sum(body) == comp.n_voxels
