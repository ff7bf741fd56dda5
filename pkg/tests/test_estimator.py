import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from platevem.adapt import solve_and_estimate
from platevem.assembly import assemble, build_dof_map, solve_eigen
from platevem.backend import element_batch
from platevem.element import polynomial_dofs
from platevem.estimator import (UNDEFINED, convergence_rate, dorfler_mark, edge_jumps,
                                effectivity, element_estimator, estimate, global_estimator)
from platevem.mesh import Mesh, generate_structured, generate_voronoi, refine


def meshes():
    yield generate_structured("square", 8)
    yield generate_structured("crossed", 4)
    m = generate_voronoi(30, 2, rng_seed=6)
    yield refine(m, range(0, m.num_polygons, 2))


class TestElementEstimator:
    def test_affine_interpolant(self):
        mesh = generate_voronoi(20, 1, rng_seed=1)
        u = polynomial_dofs([1.0, -2.0, 0.5, 0, 0, 0], mesh.vertices)
        br = estimate(mesh, element_batch(mesh), 123.0, u)
        assert np.abs(br.j2).max() <= 1e-20 and np.abs(br.s2).max() <= 1e-20

    @pytest.mark.parametrize("mesh", list(meshes()), ids=["square", "crossed", "voronoi-hanging"])
    def test_global_quadratic_interpolant(self, mesh):
        rng = np.random.default_rng(3)
        u = polynomial_dofs(rng.uniform(-1, 1, 6), mesh.vertices)
        br = estimate(mesh, element_batch(mesh), 50.0, u)
        assert np.abs(br.j2).max() <= 1e-20
        assert np.abs(br.s2).max() <= 1e-20
        assert np.all(br.xi2 > 0)

    def test_jump_hand_example(self):
        # two stacked rectangles share the edge y = 1/2 with normal (0, 1)
        mesh = Mesh([[0, 0], [1, 0], [1, 0.5], [0, 0.5], [1, 1], [0, 1]], [[0, 1, 2, 3], [3, 2, 4, 5]])
        H = np.array([np.diag([2.0, 0.0]), np.diag([4.0, 0.0])])
        jumps = edge_jumps(mesh, H)
        assert np.abs(jumps).max() == 0.0
        # the same Hessians across a vertical edge (normal (1, 0)) jump by |(-2, 0)|^2 h_l^2
        side = Mesh([[0, 0], [0.5, 0], [0.5, 1], [0, 1], [1, 0], [1, 1]], [[0, 1, 2, 3], [1, 4, 5, 2]])
        jumps = edge_jumps(side, H)
        e = side.edge_index(1, 2)
        assert jumps[e] == pytest.approx(4.0 * 1.0**2)
        assert np.count_nonzero(jumps) == 1

    def test_components_and_sum(self):
        mesh = generate_structured("crossed", 4)
        dm = build_dof_map(mesh, "SSP")
        batch = element_batch(mesh, 2.0, 0.5)
        A, B = assemble(mesh, dm, batch=batch)
        sol = solve_eigen(A, B, 1)
        u = dm.expand(sol.vectors[:, 0])
        br = estimate(mesh, batch, sol.values[0], u)
        assert np.all(br.xi2 >= 0) and np.all(br.j2 >= 0) and np.all(br.s2 >= 0)
        assert np.array_equal(br.eta2, br.xi2 + br.j2 + br.s2)
        eta2, xi2, j2, s2 = br.totals()
        assert eta2 == pytest.approx(br.eta2.sum(), rel=1e-12)
        assert eta2 == pytest.approx(xi2 + j2 + s2, rel=1e-12)
        k = 5
        assert element_estimator(mesh, k, sol.values[0], u, batch=batch) == pytest.approx(
            (br.xi2[k], br.j2[k], br.s2[k], br.eta2[k]))

    def test_permutation_equivariance(self):
        mesh = generate_voronoi(25, 1, rng_seed=9)
        perm = np.random.default_rng(0).permutation(mesh.num_polygons)
        shuffled = Mesh(mesh.vertices, [mesh.polygons[p] for p in perm])
        dm = build_dof_map(mesh, "CP")
        A, B = assemble(mesh, dm)
        sol = solve_eigen(A, B, 1)
        u = dm.expand(sol.vectors[:, 0])
        a = estimate(mesh, element_batch(mesh), sol.values[0], u)
        b = estimate(shuffled, element_batch(shuffled), sol.values[0], u)
        for x, y in ((a.xi2, b.xi2), (a.j2, b.j2), (a.s2, b.s2)):
            assert np.allclose(x[perm], y, rtol=1e-12, atol=1e-12 * x.max())

    def test_vertex_relabeling(self):
        # the estimator is also unchanged when vertices (and hence DoFs) are renumbered
        mesh = generate_voronoi(30, 2, rng_seed=4)  # simple first eigenvalue
        perm = np.random.default_rng(2).permutation(mesh.num_vertices)
        inv = np.argsort(perm)
        relabeled = Mesh(mesh.vertices[perm], [[inv[v] for v in p] for p in mesh.polygons])
        res = [solve_and_estimate(m, "SSP", 1, 1.0, 1.0, 0, None) for m in (mesh, relabeled)]
        assert res[0].lam == pytest.approx(res[1].lam, rel=1e-12)
        assert np.allclose(res[0].breakdown.eta2, res[1].breakdown.eta2, rtol=1e-9)


class TestGlobal:
    def test_single(self):
        assert global_estimator([(1, 2, 3, 6)]) == (6, 1, 2, 3)

    def test_zeros(self):
        assert global_estimator(np.zeros((5, 4))) == (0, 0, 0, 0)

    def test_two_elements(self):
        # rows (Xi2, J2, S2, eta2): etas 1 and 3
        assert global_estimator([(1, 0, 0, 1), (0, 1, 2, 3)])[0] == 4


class TestDorfler:
    def test_zero(self):
        assert dorfler_mark([4, 3, 2, 1], 0.0) == set()

    def test_one(self):
        assert dorfler_mark([4, 0, 2, 1], 1.0) == {0, 2, 3}

    def test_half(self):
        assert dorfler_mark([4, 3, 2, 1], 0.5) == {0, 1}

    def test_ties_lower_index(self):
        assert dorfler_mark([1, 1, 1, 1], 0.5) == {0, 1}
        assert dorfler_mark([1, 2, 2, 1], 0.3) == {1}

    def test_invalid(self):
        with pytest.raises(ValueError):
            dorfler_mark([1, 2], 1.5)
        with pytest.raises(ValueError):
            dorfler_mark([1, -2], 0.5)

    def test_minimal_prefix_random(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(1, 60))
            eta = rng.exponential(size=n) * (rng.random(n) < 0.9)
            if rng.random() < 0.2:
                eta = np.round(eta, 1)  # provoke ties
            delta = float(rng.random())
            marked = dorfler_mark(eta, delta)
            total = eta.sum()
            assert eta[list(marked)].sum() >= delta * total
            order = sorted(range(n), key=lambda k: (-eta[k], k))
            assert set(order[:len(marked)]) == marked
            if marked:
                assert eta[order[:len(marked) - 1]].sum() < delta * total

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=50),
           st.floats(0, 1))
    def test_defining_inequality(self, eta, delta):
        eta = np.array(eta)
        marked = dorfler_mark(eta, delta)
        assert eta[list(marked)].sum() >= delta * eta.sum() * (1 - 1e-12)


class TestReporting:
    def test_effectivity_examples(self):
        assert effectivity(2.0, 11.0, 10.0) == 2.0
        assert effectivity(0.0, 11.0, 10.0) == 0.0
        assert effectivity(1.0, 10.0, 10.0) is UNDEFINED

    def test_rate_examples(self):
        assert convergence_rate([1, 0.25], [100, 400]) == pytest.approx([2.0])
        assert convergence_rate([1, 1], [100, 200]) == pytest.approx([0.0])
        assert convergence_rate([1, 0.5], [100, 200]) == pytest.approx([2.0])
        assert len(convergence_rate([1, 0.5, 0.2], [1, 2, 4])) == 2

    @pytest.mark.parametrize("v,n", [([1, 0], [1, 2]), ([1, 1], [2, 2]), ([1, 1], [0, 2]), ([1], [1, 2])])
    def test_rate_rejects(self, v, n):
        with pytest.raises(ValueError):
            convergence_rate(v, n)
