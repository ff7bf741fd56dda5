import numpy as np
import pytest

from platevem import adapt
from platevem.adapt import StudyError, adaptive_loop, mesh_sequence_study, solve_and_estimate
from platevem.assembly import SolverError
from platevem.mesh import generate_structured, generate_voronoi, refine


def test_max_steps_zero_is_single_solve():
    h = adaptive_loop(generate_structured("square", 4), "CP", max_steps=0)
    assert len(h) == 1
    assert h[0].step == 0 and h[0].marked is None


def test_delta_one_matches_uniform_study():
    mesh0 = generate_structured("square", 2)
    adaptive = adaptive_loop(mesh0, "CP", delta=1.0, max_steps=2)
    meshes = [mesh0]
    for _ in range(2):
        meshes.append(refine(meshes[-1], range(meshes[-1].num_polygons)))
    uniform = mesh_sequence_study(meshes, "CP")
    assert np.array_equal(adaptive.ndofs, uniform.ndofs)
    assert np.array_equal(adaptive.lam, uniform.lam)
    assert np.array_equal(adaptive.eta2, uniform.eta2)


def test_error_carries_step_index(monkeypatch):
    real = adapt.solve_eigen
    calls = []

    def flaky(A, B, k, **kw):
        calls.append(1)
        if len(calls) == 2:
            raise SolverError("factorization failed")
        return real(A, B, k, **kw)

    monkeypatch.setattr(adapt, "solve_eigen", flaky)
    with pytest.raises(StudyError, match="step 1: factorization failed"):
        adaptive_loop(generate_structured("square", 4), "CP", max_steps=3)


def test_tracking_by_nearest_value():
    mesh = generate_voronoi(40, 2, rng_seed=1)  # breaks the square's double eigenvalues
    first = solve_and_estimate(mesh, "SSP", 3, 1.0, 1.0, 0, None)
    # a value near the third eigenvalue selects it, whatever its index
    rec = solve_and_estimate(mesh, "SSP", 3, 1.0, 1.0, 1, first.eigenvalues[2] * 1.01)
    assert np.diff(first.eigenvalues).min() > 1e-3 * first.eigenvalues[1]
    assert rec.tracked == 2
    assert rec.eta2 == pytest.approx(rec.eta2_modes[2])


def test_max_dofs_stops_loop():
    h = adaptive_loop(generate_structured("square", 4), "CP", delta=1.0, max_steps=10, max_dofs=200)
    assert len(h) >= 1 and h.ndofs.max() <= 200


def test_adaptive_marks_and_grows():
    h = adaptive_loop(generate_voronoi(20, 2, rng_seed=3), "SSP", delta=0.5, max_steps=3,
                      exact=[4 * np.pi**4])
    assert len(h) == 4
    assert np.all(np.diff(h.ndofs) > 0)
    for rec in h.steps[:-1]:
        assert 0 < len(rec.marked) <= rec.num_elements
    assert np.all(np.isfinite(h.errors))


def test_rejects_bad_delta():
    with pytest.raises(ValueError):
        adaptive_loop(generate_structured("square", 2), delta=1.5)
