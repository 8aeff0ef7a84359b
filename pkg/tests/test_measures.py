import numpy as np
import pytest

from dynamics.measures import (
    FunctionSpec,
    Harmonic,
    ParticleCloud,
    SpaceTag,
    circular_difference,
    cloud_on_curve,
    cloud_on_graph,
    derive_rng,
    fourier_coefficient,
    iterate_points,
    project,
    pushforward,
    sample_haar,
    stratified_grid,
    wrap,
)
from dynamics.torus_skew import RotationSystem, motivating_system
from utils.errors import SpaceMismatchError

from conftest import GOLDEN, SILVER


def test_wrap_handles_negative_and_tiny_values():
    assert np.allclose(wrap([-0.25, 1.5, 2.0]), [0.75, 0.5, 0.0])
    assert wrap(-1e-18) == 0.0


def test_circular_difference_takes_short_way_round():
    assert circular_difference(0.9, 0.1) == pytest.approx(-0.2)
    assert circular_difference(0.1, 0.9) == pytest.approx(0.2)


def test_derive_rng_streams_are_independent_per_label():
    a = derive_rng(5, "cloud").random(4)
    b = derive_rng(5, "cloud").random(4)
    c = derive_rng(5, "family").random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_space_tag_parse():
    assert SpaceTag.parse("torus:3") == SpaceTag.torus(3)
    assert SpaceTag.parse("Heisenberg").dim == 3
    assert str(SpaceTag.torus(2)) == "torus:2"
    with pytest.raises(ValueError):
        SpaceTag.parse("sphere:2")
    with pytest.raises(ValueError):
        SpaceTag("heisenberg", 2)


def test_cloud_validation():
    space = SpaceTag.torus(1)
    with pytest.raises(ValueError):
        ParticleCloud(np.array([[0.1], [0.2]]), np.array([0.5, 0.6]), space)
    with pytest.raises(ValueError):
        ParticleCloud(np.array([[1.0]]), np.array([1.0]), space)
    with pytest.raises(ValueError):
        ParticleCloud(np.array([[0.1], [0.2]]), np.array([1.5, -0.5]), space)


def test_cloud_arrays_are_read_only():
    cloud = ParticleCloud.from_points([[0.1, 0.2], [0.3, 0.4]])
    assert not cloud.points.flags.writeable
    assert not cloud.weights.flags.writeable


def test_from_points_wraps_and_normalises():
    cloud = ParticleCloud.from_points([[1.25], [-0.5]], weights=[2.0, 6.0])
    assert np.allclose(cloud.points[:, 0], [0.25, 0.5])
    assert np.allclose(cloud.weights, [0.25, 0.75])


def test_fourier_coefficient_of_point_mass():
    cloud = ParticleCloud.point_mass([0.25])
    assert fourier_coefficient(cloud, [0]) == 1.0
    assert fourier_coefficient(cloud, [1]) == pytest.approx(complex(0.0, -1.0))
    with pytest.raises(ValueError):
        fourier_coefficient(cloud, [100])


def test_stratified_haar_cancels_low_frequencies():
    cloud = sample_haar(SpaceTag.torus(2), 400, mode="stratified")
    assert cloud.size == 400
    assert abs(fourier_coefficient(cloud, [1, 0])) < 1e-12
    assert abs(fourier_coefficient(cloud, [3, -2])) < 1e-12


def test_stratified_grid_rounds_down_to_a_power():
    grid = stratified_grid(2, 10)
    assert grid.shape == (9, 2)
    assert np.allclose(np.unique(grid[:, 0]), [1 / 6, 0.5, 5 / 6])


def test_iid_haar_is_reproducible():
    a = sample_haar(SpaceTag.torus(3), 50, seed=11)
    b = sample_haar(SpaceTag.torus(3), 50, seed=11)
    assert np.array_equal(a.points, b.points)


def test_pushforward_keeps_weight_vector():
    cloud = sample_haar(SpaceTag.torus(2), 100, seed=1)
    rotation = RotationSystem((GOLDEN, SILVER))
    pushed = pushforward(cloud, rotation, 3)
    assert pushed.weights is cloud.weights
    expected = wrap(cloud.points + 3 * np.array([GOLDEN, SILVER]))
    assert np.allclose(pushed.points, expected, atol=1e-12)
    assert pushforward(cloud, rotation, 0) is cloud


def test_pushforward_rejects_other_space():
    cloud = sample_haar(SpaceTag.torus(2), 10, seed=1)
    with pytest.raises(SpaceMismatchError):
        pushforward(cloud, RotationSystem((GOLDEN,)), 1)
    with pytest.raises(ValueError):
        pushforward(cloud, RotationSystem((GOLDEN, SILVER)), -1)


def test_threaded_iteration_matches_serial():
    points = derive_rng(2).random((30_000, 2))
    system = motivating_system()
    serial = iterate_points(system, points, 5, threads=1)
    threaded = iterate_points(system, points, 5, threads=4)
    assert np.array_equal(serial, threaded)


def test_project():
    cloud = sample_haar(SpaceTag.torus(3), 20, seed=4)
    marginal = project(cloud, [2])
    assert marginal.space == SpaceTag.torus(1)
    assert np.array_equal(marginal.points[:, 0], cloud.points[:, 2])
    assert project(cloud, [0, 1, 2]) is cloud
    with pytest.raises(ValueError):
        project(cloud, [3])


def test_function_spec_evaluation():
    f = FunctionSpec(2, (Harmonic((1,), 0.0, 0.1),), 1)
    assert f.lift(0.75) == pytest.approx(1.5 - 0.1)
    assert f.evaluate(0.75) == pytest.approx(0.4)
    assert f.partial(0.0) == pytest.approx(2 + 0.2 * np.pi)
    assert f.sup_partial() == pytest.approx(2 + 0.2 * np.pi)
    assert f.haar_mean() == pytest.approx(1.0)


def test_function_spec_rejects_bad_input():
    with pytest.raises(ValueError):
        FunctionSpec(1.5)
    with pytest.raises(ValueError):
        FunctionSpec(1, (Harmonic((1, 1), 0.1, 0.0),), 1)


def test_shift_matches_translated_lift():
    f = FunctionSpec(1, (Harmonic((1,), 0.2, 0.1), Harmonic((3,), -0.05, 0.0)), 1)
    x = np.linspace(0.0, 1.0, 17, endpoint=False)
    assert np.allclose(f.shift(GOLDEN).lift(x), f.lift(x + GOLDEN), atol=1e-12)


def test_coboundary_constructor():
    gamma = FunctionSpec(0, (Harmonic((1,), 0.0, 0.1),), 1)
    f = FunctionSpec.coboundary(gamma, GOLDEN, 2, constant=0.3)
    x = np.linspace(0.0, 1.0, 11, endpoint=False)
    expected = gamma.lift(x + GOLDEN) - 2 * gamma.lift(x) + 0.3
    assert np.allclose(f.lift(x), expected, atol=1e-12)


def test_function_spec_dict_round_trip():
    f = FunctionSpec(1, (Harmonic((1, 2), 0.1, -0.2),), 2)
    assert FunctionSpec.from_dict(f.to_dict()) == f


def test_curve_cloud_has_lebesgue_base():
    gamma = FunctionSpec(0, (Harmonic((1,), 0.3, 0.0),), 1)
    cloud = cloud_on_curve(gamma, 8)
    assert np.allclose(cloud.points[:, 0], (np.arange(8) + 0.5) / 8)
    assert np.allclose(cloud.points[:, 1], gamma.evaluate(cloud.points[:, 0]))
    graph = cloud_on_graph([gamma, FunctionSpec.constant(0.5)], 8)
    assert graph.dim == 3
    assert np.allclose(graph.points[:, 2], 0.5)
