import numpy as np
import pytest

from dynamics.measures import FunctionSpec, Harmonic, SpaceTag, TorusPoint, circular_difference, project, pushforward, sample_haar
from dynamics.metrics import fourier_distance
from dynamics.torus_skew import (
    DEFAULT_ALPHA,
    RotationSystem,
    SkewSystem,
    check_irrational,
    furstenberg_system,
    horizontal_cloud,
    motivating_system,
    rotation_defect,
    small_integer_relation,
    vertical_rotate,
    vertical_rotation_defect,
)

from conftest import GOLDEN, SILVER


def test_check_irrational():
    assert check_irrational(GOLDEN) == GOLDEN
    for bad in (0.5, 1 / 3, 355 / 113 - 3, 0.0, 1.2):
        with pytest.raises(ValueError):
            check_irrational(bad)


def test_small_integer_relation():
    assert small_integer_relation([GOLDEN]) is None
    assert small_integer_relation([GOLDEN, SILVER]) is None
    relation = small_integer_relation([GOLDEN, 1.0 - GOLDEN])
    assert relation is not None


def test_rotation_minimality():
    assert RotationSystem((GOLDEN, SILVER)).is_minimal()
    assert not RotationSystem((GOLDEN, 1.0 - GOLDEN)).is_minimal()


def test_motivating_step():
    system = motivating_system()
    first = system.step(TorusPoint((0.0, 0.0)))
    assert first.coords == pytest.approx((DEFAULT_ALPHA, 0.0))
    second = system.step(first)
    assert second.coords == pytest.approx(((2 * DEFAULT_ALPHA) % 1.0, DEFAULT_ALPHA))
    with pytest.raises(ValueError):
        system.step(TorusPoint((0.1, 0.2, 0.3)))


def test_base_coordinate_is_a_rotation():
    system = furstenberg_system((1, 2), amplitudes=(0.3, 0.4))
    orbit = system.orbit([0.1, 0.2, 0.3], 50)
    expected = (0.1 + np.arange(50) * DEFAULT_ALPHA) % 1.0
    assert np.max(np.abs(circular_difference(orbit[:, 0], expected))) < 1e-9


def test_orbit_matches_repeated_steps():
    system = furstenberg_system((1, 1), amplitudes=(0.3, 0.2))
    orbit = system.orbit([0.3, 0.6, 0.9], 30)
    point = np.array([[0.3, 0.6, 0.9]])
    for n in range(30):
        assert np.max(np.abs(circular_difference(orbit[n], point[0]))) < 1e-9
        point = system.step_array(point)


def test_validation():
    with pytest.raises(ValueError):
        SkewSystem(DEFAULT_ALPHA, (FunctionSpec.linear(1, 2),))
    with pytest.raises(ValueError):
        SkewSystem(DEFAULT_ALPHA, (FunctionSpec.constant(0.3),), furstenberg=True)
    with pytest.raises(ValueError):
        SkewSystem(0.25, (FunctionSpec.linear(1),))
    flat = SkewSystem(DEFAULT_ALPHA, (FunctionSpec.constant(0.3),))
    assert not flat.is_minimal()
    assert motivating_system().is_minimal()


def test_projection_commutes_with_the_factor():
    system = furstenberg_system((1, 1), amplitudes=(0.3, 0.2))
    cloud = sample_haar(system.space, 200, seed=3)
    factor = system.truncate(2)
    left = project(pushforward(cloud, system, 7), [0, 1])
    right = pushforward(project(cloud, [0, 1]), factor, 7)
    assert np.array_equal(left.points, right.points)
    assert isinstance(system.truncate(1), RotationSystem)
    with pytest.raises(ValueError):
        system.truncate(4)


def test_derivative_of_linear_skew_is_constant():
    system = motivating_system()
    for p in ([0.0, 0.0], [0.3, 0.8]):
        jac = system.derivative_step(p)
        assert jac.to_list() == [[1.0, 1.0], [0.0, 1.0]]


def test_derivative_entry_of_trig_skew():
    system = furstenberg_system((1,), amplitudes=(1.0,))
    x = 0.2
    jac = system.derivative_step([x, 0.7])
    assert jac[0, 1] == pytest.approx(1.0 + np.cos(2 * np.pi * x))


def test_orbit_derivative_matches_finite_differences():
    system = furstenberg_system((1, 2), amplitudes=(0.3, 0.2))
    d, n, h = system.d, 5, 1e-6
    x = np.array([0.17, 0.42, 0.71])

    def iterate(point):
        out = point.reshape(1, -1)
        for _ in range(n):
            out = system.step_array(out)
        return out[0]

    jac = system.orbit_derivative(x, n).as_array()
    fd = np.zeros((d, d))
    for j in range(d):
        var = d - 1 - j
        up, down = x.copy(), x.copy()
        up[var] += h
        down[var] -= h
        diff = circular_difference(iterate(up), iterate(down)) / (2 * h)
        for i in range(d):
            fd[i, j] = diff[d - 1 - i]
    assert np.allclose(fd, jac, rtol=1e-4, atol=1e-4)
    assert system.orbit_derivative(x, 0).to_list() == np.eye(d).tolist()


def test_winding_integral_recovers_winding():
    system = furstenberg_system((2, -1), amplitudes=(0.3, 0.2))
    assert system.winding_integral(0) == pytest.approx(2.0, abs=1e-12)
    assert system.winding_integral(1, base_point=[0.4]) == pytest.approx(-1.0, abs=1e-12)


def test_system_dict_round_trip():
    skew = FunctionSpec(1, (Harmonic((1, 0), 0.05, 0.0), Harmonic((0, 1), 0.0, 0.1)), 2)
    system = SkewSystem(DEFAULT_ALPHA, (FunctionSpec.linear(1), skew), furstenberg=True)
    data = system.to_dict()
    assert data["format"] == 1
    assert SkewSystem.from_dict(data) == system
    data["d"] = 4
    with pytest.raises(ValueError):
        SkewSystem.from_dict(data)


def test_horizontal_cloud():
    cloud = horizontal_cloud(3, 16, heights=[0.25, 0.5])
    assert cloud.space == SpaceTag.torus(3)
    assert np.allclose(cloud.points[:, 1], 0.25)
    assert np.allclose(cloud.points[:, 2], 0.5)
    with pytest.raises(ValueError):
        horizontal_cloud(3, 16, heights=[0.1])


def test_vertical_rotate():
    cloud = horizontal_cloud(2, 8, heights=[0.9])
    rotated = vertical_rotate(cloud, 0.3)
    assert np.allclose(rotated.points[:, 1], 0.2)
    assert np.array_equal(rotated.points[:, 0], cloud.points[:, 0])
    assert rotated.weights is cloud.weights


def test_rotation_defect():
    product = sample_haar(SpaceTag.torus(2), 400, mode="stratified")
    assert rotation_defect(product, 0.37, K=4) < 1e-6
    line = horizontal_cloud(2, 400)
    assert rotation_defect(line, 0.0) == 0.0
    defect = rotation_defect(line, 0.37, K=4)
    assert defect > 0.1
    assert defect == pytest.approx(fourier_distance(vertical_rotate(line, 0.37), line, K=4), rel=1e-9)


def test_vertical_rotation_defect_of_invariant_cloud():
    system = motivating_system()
    product = sample_haar(SpaceTag.torus(2), 400, mode="stratified")
    assert vertical_rotation_defect(system, product, 0.37, 10, K=4) < 1e-6
    assert vertical_rotation_defect(system, product, 0.0, 10) == 0.0
