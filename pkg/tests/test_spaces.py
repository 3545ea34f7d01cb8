"""Quadrature, DOF counting, interpolation, and point evaluation."""

import math

import numpy as np
import pytest

from ndfem.mesh import build_rectangle_mesh, uniform_refine
from ndfem.spaces import (
    build_system,
    evaluate,
    interpolate,
    make_quadrature,
    physical_points,
    scalar_basis,
)


def reference_monomial_integral(p, q):
    """Exact integral of x^p y^q over the reference triangle."""
    return math.factorial(p) * math.factorial(q) / math.factorial(p + q + 2)


@pytest.mark.parametrize("order", range(1, 11))
def test_quadrature_exactness(order):
    rule = make_quadrature(order)
    assert abs(rule.weights.sum() - 1.0) <= 1e-13
    xy = rule.xy
    for p in range(order + 1):
        for q in range(order + 1 - p):
            approx = 0.5 * np.sum(rule.weights * xy[:, 0] ** p * xy[:, 1] ** q)
            assert approx == pytest.approx(reference_monomial_integral(p, q), rel=1e-12, abs=1e-15)


def test_quadrature_points_strictly_interior():
    for order in range(1, 11):
        bary = make_quadrature(order).points
        assert np.all(bary > 0.0)
        assert np.all(bary < 1.0)


def test_quadrature_order1_is_centroid():
    rule = make_quadrature(1)
    assert len(rule) == 1
    assert np.allclose(rule.xy, [[1 / 3, 1 / 3]])


def test_quadrature_order2_three_points():
    rule = make_quadrature(2)
    assert len(rule) == 3
    xy = rule.xy
    assert 0.5 * np.sum(rule.weights * xy[:, 0] ** 2) == pytest.approx(1 / 12, rel=1e-14)
    assert 0.5 * np.sum(rule.weights * xy[:, 0] * xy[:, 1]) == pytest.approx(1 / 24, rel=1e-14)


def test_quadrature_rejects_unsupported_order():
    with pytest.raises(ValueError):
        make_quadrature(11)
    with pytest.raises(ValueError):
        make_quadrature(0)


def test_dof_counts_k1_strong():
    mesh = build_rectangle_mesh((0, 0), (1, 1), 2)
    system = build_system(mesh, 1, bc_mode="strong-zero-u", tangential_mode="relaxed")
    assert system.free_u == 1            # single interior vertex
    assert system.n_g == 18
    assert system.free_g == 18
    assert system.n_H == 24
    assert system.total_ndof == 43


def test_dof_counts_k2_strong():
    mesh = build_rectangle_mesh((0, 0), (1, 1), 2)
    system = build_system(mesh, 2, bc_mode="strong-zero-u", tangential_mode="relaxed")
    assert system.n_scalar == 25         # 9 vertices + 16 edges
    assert system.free_u == 9            # 25 - 16 boundary nodes
    assert system.n_H == 8 * 9


def test_dof_counts_penalty_mode():
    mesh = build_rectangle_mesh((0, 0), (1, 1), 2)
    system = build_system(mesh, 1, bc_mode="penalty-u", tangential_mode="relaxed")
    assert system.free_u == system.n_scalar


def test_tangential_mask_counts():
    mesh = build_rectangle_mesh((0, 0), (1, 1), 2)
    system = build_system(mesh, 1, tangential_mode="strong-axis-aligned")
    # 8 boundary vertices: 4 corners lose both components, 4 edge-interior
    # vertices lose one.
    assert system.constrained_g.sum() == 4 * 2 + 4 * 1
    corner = np.where((mesh.vertices == [0.0, 0.0]).all(axis=1))[0][0]
    assert system.constrained_g[corner].all()


def test_tangential_strong_rejects_skewed_polygon():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.6, 1.0]])
    from ndfem.mesh import TriMesh

    with pytest.raises(ValueError):
        build_system(TriMesh(verts, np.array([[0, 1, 2]])), 1, tangential_mode="strong-axis-aligned")


@pytest.mark.parametrize("k", [1, 2])
def test_polynomial_reproduction(k):
    rng = np.random.default_rng(42)
    mesh = build_rectangle_mesh((0, 0), (1, 1), 3)
    system = build_system(mesh, k)
    if k == 1:
        exact = lambda x, y: 3 * x + 2 * y - 1
    else:
        exact = lambda x, y: x**2 - x * y + 0.5 * y**2 + 3 * x + 2
    coeffs = interpolate(system, "u", exact)
    for _ in range(50):
        tri = rng.integers(mesh.num_triangles)
        ref = rng.dirichlet([1, 1, 1])[1:]
        sample = evaluate(system, coeffs, "u", tri, ref[None, :])
        pt = physical_points(mesh, ref[None, :])[tri, 0]
        assert sample.value[0] == pytest.approx(exact(pt[0], pt[1]), abs=1e-12)


def test_partition_of_unity():
    rule = make_quadrature(6)
    for k in (1, 2):
        N = scalar_basis(k, rule.xy)
        assert np.max(np.abs(N.sum(axis=1) - 1.0)) <= 1e-13


def test_interpolation_h1_rate():
    exact = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)
    grad = lambda x, y: np.pi * np.stack(
        [np.cos(np.pi * x) * np.sin(np.pi * y), np.sin(np.pi * x) * np.cos(np.pi * y)], axis=-1
    )
    errors = []
    mesh = build_rectangle_mesh((0, 0), (1, 1), 4)
    rule = make_quadrature(6)
    for _ in range(3):
        system = build_system(mesh, 1)
        coeffs = interpolate(system, "u", exact)
        pts = physical_points(mesh, rule.xy)
        areas = mesh.signed_areas()
        err2 = 0.0
        for t in range(mesh.num_triangles):
            sample = evaluate(system, coeffs, "u", t, rule.xy)
            diff = sample.gradient - grad(pts[t, :, 0], pts[t, :, 1])
            err2 += areas[t] * np.sum(rule.weights * (diff**2).sum(axis=1))
        errors.append(np.sqrt(err2))
        mesh = uniform_refine(mesh)
    rates = np.log2(np.array(errors[:-1]) / errors[1:])
    assert np.all(np.abs(rates - 1.0) <= 0.1)


def test_evaluate_constant_scalar():
    mesh = build_rectangle_mesh((0, 0), (1, 1), 2)
    system = build_system(mesh, 2)
    coeffs = np.ones(system.n_scalar)
    sample = evaluate(system, coeffs, "u", 3, np.array([[0.25, 0.5]]))
    assert sample.value[0] == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(sample.gradient, 0.0, atol=1e-13)


@pytest.mark.parametrize("k", [1, 2])
def test_evaluate_rotational_field_jacobian(k):
    mesh = build_rectangle_mesh((0, 0), (1, 1), 2)
    system = build_system(mesh, k)
    coeffs = interpolate(system, "g", lambda x, y: np.stack([y, -x], axis=-1))
    sample = evaluate(system, coeffs, "g", 1, np.array([[0.3, 0.3]]))
    assert np.allclose(sample.gradient[0], [[0.0, 1.0], [-1.0, 0.0]], atol=1e-13)


@pytest.mark.parametrize("k", [1, 2])
def test_evaluate_identity_matrix_field(k):
    mesh = build_rectangle_mesh((0, 0), (1, 1), 2)
    system = build_system(mesh, k)
    eye = lambda x, y: np.broadcast_to(np.eye(2), (len(np.atleast_1d(x)), 2, 2)).copy()
    coeffs = interpolate(system, "H", eye)
    rule = make_quadrature(4)
    sample = evaluate(system, coeffs, "H", 2, rule.xy)
    assert np.allclose(sample.value, np.eye(2), atol=1e-14)


def test_dg_space_is_element_local(k=2):
    mesh = build_rectangle_mesh((0, 0), (1, 1), 2)
    system = build_system(mesh, k)
    field = lambda x, y: np.stack(
        [np.stack([x, x * y], axis=-1), np.stack([x * y, y], axis=-1)], axis=-2
    )
    coeffs = interpolate(system, "H", field)
    altered = coeffs.copy()
    altered[: 3 * system.nhloc] = 0.0      # wipe triangle 0's DOFs
    rule = make_quadrature(3)
    for t in range(1, mesh.num_triangles):
        a = evaluate(system, coeffs, "H", t, rule.xy)
        b = evaluate(system, altered, "H", t, rule.xy)
        assert np.array_equal(a.value, b.value)


def test_interpolate_rejects_nonfinite():
    mesh = build_rectangle_mesh((0, 0), (1, 1), 1)
    system = build_system(mesh, 1)
    with pytest.raises(ValueError):
        interpolate(system, "u", lambda x, y: np.where(x > 0.5, np.nan, 1.0))


def test_build_system_rejects_bad_degree():
    mesh = build_rectangle_mesh((0, 0), (1, 1), 1)
    with pytest.raises(ValueError):
        build_system(mesh, 3)
