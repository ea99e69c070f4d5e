import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from calabi_lab.complexgrid import disc
from calabi_lab.metric import build_metric_graph, intrinsic_distance
from calabi_lab.nadirashvili import make_schedule, pythagoras_check, verify_step
from calabi_lab.weierstrass import ImmersionField


def flat(dom, scale=1.0, shift=(0.0, 0.0, 0.0)):
    z = dom.vertices
    u = scale * np.stack([z.real, z.imag, np.zeros_like(z.real)]) + np.asarray(shift)[:, None]
    return ImmersionField(dom, u, np.full(dom.n_vertices, scale**2), dom.nearest_vertex(0))


class TestSchedule:
    def test_second_radius(self):
        s = make_schedule(1.0, 1.0, 0.1, 2)
        assert s.r[1] == pytest.approx(math.sqrt(1.25), abs=1e-15)
        assert s.r[1] == pytest.approx(1.118033988, abs=1e-9)

    def test_recurrences_exact(self):
        s = make_schedule(0.7, 2.0, 0.3, 200)
        for j in range(2, 201):
            assert s.r[j - 1] == math.sqrt(s.r[j - 2] ** 2 + 1.0 / j**2)
            assert s.eps[j - 1] == s.eps[j - 2] / 2
        assert np.allclose(np.diff(s.rho), 1.0 / np.arange(2, 201), rtol=1e-13)

    def test_limits(self):
        s = make_schedule(1.0, 1.0, 0.1, 10**6)
        assert s.r_inf == pytest.approx(math.pi / math.sqrt(6), rel=1e-15)
        assert abs(s.r[-1] - math.pi / math.sqrt(6)) < 1e-3
        harmonic = math.fsum(1.0 / k for k in range(1, 10**6 + 1))
        assert abs(s.rho[-1] - harmonic) < 1e-6

    def test_invariants(self):
        s = make_schedule(1.0, 1.0, 1.0, 5000)
        assert np.all(np.diff(s.r) > 0) and np.all(s.r <= s.r_inf)
        assert np.all(np.diff(s.rho) > 0)
        # halving is exact by design
        assert np.array_equal(s.eps[1:], s.eps[:-1] / 2)
        assert s.eps[:50].sum() < 2.0

    def test_eps_underflow_kept_exact(self):
        s = make_schedule(1.0, 1.0, 1.0, 1200)
        assert s.eps[-1] == 0.0
        assert s.eps_exponent[-1] == 1199

    @pytest.mark.parametrize("args", [(0, 1, 1, 3), (1, -1, 1, 3), (1, 1, 0, 3), (1, 1, 1, 0), (1, 1, 1, 2.5)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            make_schedule(*args)

    def test_at_and_json(self):
        s = make_schedule(1.0, 1.0, 0.1, 3)
        assert s.at(1) == (1.0, 1.0, 0.1)
        with pytest.raises(IndexError):
            s.at(4)
        assert make_schedule(1.0, 1.0, 0.1, 2000).to_json()["truncated"]


class TestVerifyStep:
    @pytest.fixture(scope="class")
    @staticmethod
    def dom():
        return disc(1.0, 0.05)

    def test_flat_radius_too_small(self, dom):
        s = make_schedule(1.0, 1.0, 0.1, 3)
        # boundary vertices sit at |z| = 1 up to rounding
        r2 = s.r[1] * (1 - 1e-12)
        u = flat(dom, r2)
        cert = verify_step(u, u, 2, s)
        assert cert.base_point_zero and cert.closeness_on_shrunk_disc and cert.range_in_ball
        assert cert.max_closeness_violation == 0.0
        # flat intrinsic radius equals r2 < rho2 = 1.5
        assert not cert.intrinsic_radius_exceeds
        assert cert.measured_intrinsic_radius == pytest.approx(r2, rel=0.02)
        assert not cert.passed

    def test_translation_breaks_closeness(self, dom):
        s = make_schedule(1.0, 1.0, 0.1, 3)
        eps2 = s.eps[1]
        cert = verify_step(flat(dom), flat(dom, shift=(2 * eps2, 0, 0)), 2, s)
        assert not cert.closeness_on_shrunk_disc
        assert cert.max_closeness_violation == pytest.approx(2 * eps2)

    def test_all_pass(self, dom):
        s = make_schedule(1.0, 0.1, 0.1, 2)
        u = flat(dom, 0.9)
        cert = verify_step(u, u, 1, s)
        assert cert.passed
        assert set(cert.to_json()) >= {"base_point_zero", "closeness_on_shrunk_disc", "range_in_ball",
                                        "intrinsic_radius_exceeds", "tolerances"}

    def test_mesh_mismatch(self, dom):
        s = make_schedule(1.0, 1.0, 0.1, 2)
        with pytest.raises(ValueError):
            verify_step(flat(disc(1.0, 0.1)), flat(dom), 1, s)


def _orthonormal_pair(rng):
    a = rng.normal(size=3)
    a /= np.linalg.norm(a)
    b = rng.normal(size=3)
    b -= (b @ a) * a
    return a, b / np.linalg.norm(b)


class TestPythagoras:
    def test_orthogonal_push_random(self):
        rng = np.random.default_rng(0)
        for _ in range(10**4):
            r, s = rng.uniform(0.01, 10, 2)
            a, b = _orthonormal_pair(rng)
            ok, norm = pythagoras_check([r * a + s * b], r, s, 0.0)
            assert abs(norm - math.hypot(r, s)) <= 1e-12 * max(1.0, math.hypot(r, s))
            # radial push overshoots by r + s - hypot(r, s) > 0
            gap = r + s - math.hypot(r, s)
            bad, _ = pythagoras_check([(r + s) * a], r, s, 0.5 * gap)
            assert not bad

    def test_orthogonal_tol_zero(self):
        ok, norm = pythagoras_check([[3.0, 4.0, 0.0]], 3.0, 4.0)
        assert norm == 5.0 and ok

    @given(st.floats(0.01, 100), st.floats(0.01, 100), st.floats(0, 10), st.floats(0, 10))
    def test_monotone_in_tol(self, r, s, t1, t2):
        pts = [[r + s, 0.0, 0.0]]
        lo, hi = sorted((t1, t2))
        assert pythagoras_check(pts, r, s, lo)[0] <= pythagoras_check(pts, r, s, hi)[0]

    def test_negative(self):
        with pytest.raises(ValueError):
            pythagoras_check([[0, 0, 0]], -1, 1)
