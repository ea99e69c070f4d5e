import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calabi_lab.complexgrid import disc
from calabi_lab.metric import (
    build_metric_graph,
    distance_field,
    divergent_path_lengths,
    intrinsic_distance,
    shortest_path,
)
from calabi_lab.weierstrass import ImmersionField, WeierstrassData, integrate_triple, triple_from_fg


def flat(dom, scale=1.0):
    z = dom.vertices
    u = scale * np.stack([z.real, z.imag, np.zeros_like(z.real)])
    return ImmersionField(dom, u, np.full(dom.n_vertices, scale**2), dom.nearest_vertex(0))


def enneper(dom):
    data = WeierstrassData(lambda z: np.ones_like(z), lambda z: z)
    return integrate_triple(triple_from_fg(data, None, dom), dom.nearest_vertex(0))


@pytest.fixture(scope="module")
def flat_graph(unit_disc_fine):
    return build_metric_graph(flat(unit_disc_fine))


class TestGraph:
    @pytest.mark.parametrize("mode", ["embedded_edges", "conformal_factor"])
    def test_flat_lengths(self, unit_disc_coarse, mode):
        g = build_metric_graph(flat(unit_disc_coarse), mode)
        z = unit_disc_coarse.vertices
        planar = np.abs(z[g.edges[:, 0]] - z[g.edges[:, 1]])
        assert np.allclose(g.lengths, planar, rtol=1e-15, atol=0)

    def test_scaling(self, unit_disc_coarse):
        g1 = build_metric_graph(flat(unit_disc_coarse))
        g2 = build_metric_graph(flat(unit_disc_coarse).scaled(2.0))
        assert np.array_equal(g2.lengths, 2 * g1.lengths)

    def test_modes_agree_on_enneper(self, unit_disc_02):
        imm = enneper(unit_disc_02)
        a = build_metric_graph(imm, "embedded_edges").lengths
        b = build_metric_graph(imm, "conformal_factor").lengths
        assert np.max(np.abs(a / b - 1)) < 0.02

    def test_bad_mode(self, unit_disc_coarse):
        with pytest.raises(ValueError):
            build_metric_graph(flat(unit_disc_coarse), "geodesic")

    def test_degenerate_edge(self, unit_disc_coarse):
        imm = flat(unit_disc_coarse).scaled(0.0)
        with pytest.raises(ValueError):
            build_metric_graph(imm)


class TestDistance:
    def test_unit_radius(self, flat_graph, unit_disc_fine):
        d = intrinsic_distance(flat_graph, unit_disc_fine.nearest_vertex(0), 1)
        assert 1.0 - 1e-3 <= d <= 1.02

    def test_radius_two(self):
        dom = disc(2.0, 0.1)
        d = intrinsic_distance(build_metric_graph(flat(dom)), dom.nearest_vertex(0))
        assert d == pytest.approx(2.0, rel=0.02)

    def test_path_consistency(self, flat_graph, unit_disc_fine):
        p0 = unit_disc_fine.nearest_vertex(0)
        length, path = shortest_path(flat_graph, p0, 1)
        assert path[0] == p0 and unit_disc_fine.boundary_markers[path[-1]] == 1
        assert length == pytest.approx(intrinsic_distance(flat_graph, p0, 1), rel=1e-14)

    def test_empty_target(self, flat_graph):
        with pytest.raises(ValueError):
            intrinsic_distance(flat_graph, 0, np.array([], dtype=int))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10**6))
    def test_metric_axioms(self, flat_graph, seed):
        rng = np.random.default_rng(seed)
        a, b, c = rng.integers(0, flat_graph.n_vertices, 3)
        da, db = distance_field(flat_graph, a), distance_field(flat_graph, b)
        assert da[b] == pytest.approx(db[a], rel=1e-12, abs=1e-15)
        assert da[c] <= da[b] + db[c] + 1e-12
        assert da[a] == 0

    def test_scaling_equivariance(self, unit_disc_coarse):
        p0 = unit_disc_coarse.nearest_vertex(0)
        d1 = distance_field(build_metric_graph(flat(unit_disc_coarse)), p0)
        d3 = distance_field(build_metric_graph(flat(unit_disc_coarse).scaled(3.0)), p0)
        assert np.allclose(d3, 3 * d1, rtol=1e-14)

    def test_refinement_monotone(self):
        ds = []
        for h in (0.1, 0.05, 0.025):
            dom = disc(1.0, h)
            ds.append(intrinsic_distance(build_metric_graph(enneper(dom)), dom.nearest_vertex(0)))
        tol = 0.02 * ds[0]
        assert ds[1] <= ds[0] + tol and ds[2] <= ds[1] + tol
        assert abs(ds[2] - ds[1]) <= 2 * abs(ds[1] - ds[0]) + 1e-12


class TestDivergentPaths:
    def test_flat(self, flat_graph, unit_disc_fine):
        p0 = unit_disc_fine.nearest_vertex(0)
        lengths = divergent_path_lengths(flat_graph, p0, 1, k=6)
        assert len(lengths) == 6
        assert min(lengths) >= 1.0 - 1e-3
        assert lengths[0] == pytest.approx(intrinsic_distance(flat_graph, p0, 1), rel=1e-14)

    def test_k_validation(self, flat_graph):
        with pytest.raises(ValueError):
            divergent_path_lengths(flat_graph, 0, k=0)
