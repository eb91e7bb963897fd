import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from itocomplete.fem import (
    ConductivityField,
    GridSpec,
    StiffnessSystem,
    assemble_dtn,
    boundary_project,
    jacobian_dtn,
)
from itocomplete.phantoms import shepp_logan, smooth_bump, two_blob


def random_field(seed, param_grid, lo=0.5, hi=3.0):
    return ConductivityField(np.random.default_rng(seed).uniform(lo, hi, (param_grid, param_grid)))


@pytest.mark.parametrize("level", [1, 2, 3, 5])
def test_grid_counts(level):
    g = GridSpec(level)
    assert g.nodes_per_dim == 2**level + 1
    assert g.boundary_count == 2 ** (level + 2)
    assert len(g.boundary_nodes) + len(g.interior_nodes) == g.node_count


def test_boundary_nodes_cyclic_counterclockwise():
    g = GridSpec(3)
    xy = g.boundary_coords
    assert np.allclose(xy[0], [0.0, 0.0])
    step = np.linalg.norm(np.roll(xy, -1, axis=0) - xy, axis=1)
    assert np.allclose(step, g.mesh_size)
    on_edge = np.isclose(xy, 0.0) | np.isclose(xy, 1.0)
    assert on_edge.any(axis=1).all()
    # counterclockwise: positive signed area of the boundary polygon
    x, y = xy[:, 0], xy[:, 1]
    assert 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) == pytest.approx(1.0)
    assert len({tuple(p) for p in np.round(xy, 12)}) == g.boundary_count


def test_field_validation():
    with pytest.raises(ValueError):
        ConductivityField(np.array([[1.0, 0.0], [1.0, 1.0]]))
    with pytest.raises(ValueError):
        ConductivityField(np.array([[1.0, np.nan], [1.0, 1.0]]))
    with pytest.raises(ValueError):
        ConductivityField.constant(3).element_pixels(GridSpec(3))


def test_small_constant_dtn():
    lam = assemble_dtn(GridSpec(2), ConductivityField.constant(4)).entries
    assert lam.shape == (16, 16)
    assert np.allclose(lam, lam.T, atol=1e-14)
    assert np.abs(lam @ np.ones(16)).max() <= 1e-10


def test_linear_data_energy():
    # x and y are discrete harmonic for Q1 elements, so the Dirichlet energy is exact
    g = GridSpec(3)
    lam = assemble_dtn(g, ConductivityField.constant(8)).entries
    x = boundary_project(g, lambda x, y: x)
    y = boundary_project(g, lambda x, y: y)
    assert x @ lam @ x == pytest.approx(1.0, abs=1e-12)
    assert y @ lam @ y == pytest.approx(1.0, abs=1e-12)
    assert x @ lam @ y == pytest.approx(0.0, abs=1e-12)


def test_homogeneity_example():
    g = GridSpec(4)
    l1 = assemble_dtn(g, ConductivityField.constant(16, 1.0)).entries
    l2 = assemble_dtn(g, ConductivityField.constant(16, 2.0)).entries
    assert np.abs(l2 - 2 * l1).max() <= 1e-10 * np.abs(l1).max()


@given(st.integers(0, 10**6), st.floats(0.1, 10.0), st.sampled_from([2, 3]))
def test_scaling_covariance(seed, c, level):
    g = GridSpec(level)
    a = random_field(seed, 2**level)
    l1 = assemble_dtn(g, a).entries
    l2 = assemble_dtn(g, ConductivityField(c * a.values)).entries
    assert np.abs(l2 - c * l1).max() <= 1e-10 * np.abs(c * l1).max()


@given(st.integers(0, 10**6), st.sampled_from([(2, 2), (3, 4), (4, 4), (4, 16)]))
def test_dtn_invariants(seed, case):
    level, pg = case
    g = GridSpec(level)
    lam = assemble_dtn(g, random_field(seed, pg)).entries
    scale = np.abs(lam).max()
    assert np.abs(lam - lam.T).max() <= 1e-10 * scale
    assert np.abs(lam @ np.ones(g.boundary_count)).max() <= 1e-10 * scale
    assert np.linalg.eigvalsh(lam).min() >= -1e-10 * scale


def test_boundary_project_examples():
    g = GridSpec(3)
    assert np.array_equal(boundary_project(g, lambda x, y: np.ones_like(x)), np.ones(32))
    assert np.allclose(boundary_project(g, lambda x, y: x), g.boundary_coords[:, 0], atol=0, rtol=0)
    # oracle: node k sits at arclength k h counterclockwise from the corner (0, 0)
    s = np.arange(32) / 8.0
    got = boundary_project(g, lambda t: np.cos(2 * np.pi * t), arclength=True)
    assert np.abs(got - np.cos(2 * np.pi * s)).max() <= 1e-12


def test_jacobian_symmetry():
    g = GridSpec(3)
    J = jacobian_dtn(g, random_field(4, 4))
    assert np.abs(J - J.transpose(1, 0, 2)).max() <= 1e-12


def test_jacobian_euler_identity():
    g = GridSpec(3)
    a = ConductivityField.constant(8)
    J = jacobian_dtn(g, a)
    lam = assemble_dtn(g, a).entries
    assert np.abs(J @ a.vector - lam).max() <= 1e-10


@pytest.mark.parametrize("field", ["constant", "random"])
def test_jacobian_finite_difference(field):
    g = GridSpec(3)
    a = ConductivityField.constant(8) if field == "constant" else random_field(7, 8)
    d = np.random.default_rng(1).standard_normal(64)
    t = 1e-6
    plus = assemble_dtn(g, ConductivityField(a.vector.reshape(8, 8) + t * d.reshape(8, 8))).entries
    minus = assemble_dtn(g, ConductivityField(a.vector.reshape(8, 8) - t * d.reshape(8, 8))).entries
    fd = (plus - minus) / (2 * t)
    an = jacobian_dtn(g, a) @ d
    assert np.linalg.norm(an - fd) / np.linalg.norm(fd) <= 1e-5


def test_harmonic_extension_boundary_identity():
    g = GridSpec(3)
    s = StiffnessSystem(g, random_field(2, 4))
    U = s.harmonic_extension()
    assert np.allclose(U[g.boundary_nodes], np.eye(g.boundary_count))
    assert np.allclose(U.sum(axis=1), 1.0)


def test_phantoms_positive_and_nested():
    for a in (shepp_logan(16), two_blob(8), smooth_bump(16)):
        assert a.values.min() > 0
    sl = shepp_logan(64)
    assert sl.values.min() >= 1.0 - 1e-12 and sl.values.max() <= 2.0 + 1e-12
    g = GridSpec(6)
    assert np.bincount(two_blob(8).element_pixels(g)).tolist() == [64] * 64
