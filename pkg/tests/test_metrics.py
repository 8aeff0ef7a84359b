import numpy as np
import pytest

from dynamics.measures import FunctionSpec, ParticleCloud, SpaceTag, cloud_on_curve, sample_haar
from dynamics.metrics import (
    cesaro_average,
    density_statistics,
    distance_profile,
    estimate_distance,
    fourier_distance,
    frequency_box,
    haar_distance,
    haar_lipschitz_lower_bound,
    lipschitz_family,
    lipschitz_lower_bound,
    loglog_slope,
    profile_schedule,
    twisting_report,
    uniform_window_average,
    window_ladder,
)
from dynamics.torus_skew import RotationSystem
from utils.errors import SpaceMismatchError

from conftest import GOLDEN, SILVER


def test_frequency_box_sizes():
    assert frequency_box(2, 2).shape == (24, 2)
    assert frequency_box(3, 1).shape == (26, 3)
    base_only = frequency_box(2, 3, support=[0])
    assert base_only.shape == (6, 2)
    assert np.all(base_only[:, 1] == 0)
    with pytest.raises(ValueError):
        frequency_box(2, 0)


def test_point_masses_half_a_turn_apart():
    a = ParticleCloud.point_mass([0.0])
    b = ParticleCloud.point_mass([0.5])
    assert fourier_distance(a, b, K=1, s=0) == pytest.approx(4.0)
    assert haar_distance(a, K=1, s=0) == pytest.approx(2.0)


def test_fourier_distance_is_symmetric_and_zero_on_identity():
    mu = sample_haar(SpaceTag.torus(2), 200, seed=1)
    nu = sample_haar(SpaceTag.torus(2), 200, seed=2)
    rho = sample_haar(SpaceTag.torus(2), 200, seed=3)
    assert fourier_distance(mu, mu) == 0.0
    assert fourier_distance(mu, nu, K=4) == pytest.approx(fourier_distance(nu, mu, K=4), abs=1e-12)
    assert fourier_distance(mu, rho, K=4) <= fourier_distance(mu, nu, K=4) + fourier_distance(nu, rho, K=4) + 1e-12


def test_fourier_distance_rejects_mixed_spaces_and_bad_args():
    mu = sample_haar(SpaceTag.torus(2), 10, seed=1)
    nu = sample_haar(SpaceTag.torus(3), 10, seed=1)
    with pytest.raises(SpaceMismatchError):
        fourier_distance(mu, nu)
    with pytest.raises(ValueError):
        haar_distance(mu, K=0)
    with pytest.raises(ValueError):
        haar_distance(mu, s=-1.0)


def test_stratified_cloud_is_close_to_haar():
    line = sample_haar(SpaceTag.torus(1), 10_000, mode="stratified")
    assert haar_distance(line, K=8, s=1) < 1e-8
    square = sample_haar(SpaceTag.torus(2), 400, mode="stratified")
    assert haar_distance(square, K=4, s=1) < 1e-8


def test_horizontal_curve_is_far_from_haar():
    cloud = cloud_on_curve(FunctionSpec.constant(0.3), 100)
    assert haar_distance(cloud, K=1, s=0) >= 1.0


def test_lipschitz_family_is_prefix_stable():
    small = lipschitz_family(2, 6, family_seed=4)
    large = lipschitz_family(2, 12, family_seed=4)
    points = np.random.default_rng(0).random((50, 2))
    for a, b in zip(small, large):
        assert a.name == b.name
        assert np.array_equal(a.evaluate(points), b.evaluate(points))
    with pytest.raises(ValueError):
        lipschitz_family(2, 0)


def test_lipschitz_lower_bound_on_point_masses():
    a = ParticleCloud.point_mass([0.0])
    b = ParticleCloud.point_mass([0.5])
    value = lipschitz_lower_bound(a, b, family_size=8)
    assert value == pytest.approx(0.5)
    assert value <= 2.0
    assert lipschitz_lower_bound(a, a) == 0.0
    assert lipschitz_lower_bound(a, b, family_size=16) >= value


def test_haar_lipschitz_bound_small_for_stratified_cloud():
    cloud = sample_haar(SpaceTag.torus(1), 2000, mode="stratified")
    assert haar_lipschitz_lower_bound(cloud, family_size=16) < 1e-3


def test_estimate_distance_pairs_both_numbers():
    cloud = ParticleCloud.point_mass([0.0])
    estimate = estimate_distance(cloud, K=1, s=0, family_size=4)
    assert estimate.fourier_value == pytest.approx(2.0)
    assert 0.0 < estimate.lipschitz_lower <= 1.0
    assert estimate.to_dict()["family_size"] == 4


def test_profile_schedule():
    assert profile_schedule(20, 5) == [0, 5, 10, 15, 20]
    assert profile_schedule(7, 3) == [0, 3, 6, 7]
    with pytest.raises(ValueError):
        profile_schedule(0, 1)


def test_rotation_profile_is_constant():
    rotation = RotationSystem((GOLDEN, SILVER))
    cloud = sample_haar(rotation.space, 300, seed=9)
    profile = distance_profile(rotation, cloud, n_max=40, K=3, s=1.0, stride=10, family_size=4)
    values = np.array([p.fourier_value for p in profile])
    assert [p.n for p in profile] == [0, 10, 20, 30, 40]
    assert values.max() - values.min() < 1e-10
    assert profile[0].fourier_value == pytest.approx(haar_distance(cloud, 3, 1.0))
    assert all(p.lipschitz_lower is not None for p in profile)


def test_profile_rejects_unordered_times():
    rotation = RotationSystem((GOLDEN,))
    cloud = ParticleCloud.point_mass([0.0])
    with pytest.raises(ValueError):
        distance_profile(rotation, cloud, n_max=5, times=[3, 1])


def test_cesaro_average():
    assert cesaro_average([2.0] * 7) == pytest.approx(2.0)
    assert cesaro_average([1, 0, 1, 0], N=2) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        cesaro_average([])
    with pytest.raises(ValueError):
        cesaro_average([1.0], N=3)


def test_cesaro_average_of_sparse_spikes_vanishes():
    n = 10_000
    values = np.zeros(n)
    values[np.arange(1, 101) ** 2 - 1] = 1.0
    assert cesaro_average(values) == pytest.approx(0.01)
    assert cesaro_average(values, 100) > cesaro_average(values)


def test_uniform_window_average():
    assert uniform_window_average([0.4] * 20, 5) == pytest.approx(0.4)
    spike = np.zeros(50)
    spike[17] = 1.0
    assert uniform_window_average(spike, 10) == pytest.approx(0.1)
    assert uniform_window_average([1, 0] * 10, 4) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        uniform_window_average([1.0, 2.0], 0)
    with pytest.raises(ValueError):
        uniform_window_average([1.0, 2.0], 3)


def test_window_ladder():
    assert window_ladder(100) == [10, 30, 100]
    assert window_ladder(5) == []
    assert window_ladder(3000) == [10, 30, 100, 300, 1000, 3000]


def test_density_of_even_numbers():
    # position i holds x_{i+1}, so even n sit at odd positions
    values = np.tile([0.0, 1.0], 500)
    report = density_statistics(values, epsilon=0.5)
    assert report.density == pytest.approx(0.5)
    assert report.exceptional_fraction == report.density
    assert report.N == 1000


def test_density_of_perfect_squares():
    n = 10_000
    values = np.zeros(n)
    values[np.arange(1, 101) ** 2 - 1] = 1.0
    report = density_statistics(values, epsilon=0.5, windows=[100], start=9000)
    assert report.density == pytest.approx(0.01)
    (L, value), = report.uniform_density_by_window
    assert L == 100
    assert value <= 0.1
    M, N, average = report.window_averages[0]
    assert N - M + 1 == 100
    assert M >= 9000
    assert average == value


def test_density_of_empty_set():
    report = density_statistics(np.zeros(300), epsilon=0.1)
    assert report.density == 0.0
    assert all(v == 0.0 for _, v in report.uniform_density_by_window)
    payload = report.to_dict()
    assert payload["epsilon"] == 0.1
    assert [w["L"] for w in payload["uniform_density_by_window"]] == [10, 30, 100, 300]
    with pytest.raises(ValueError):
        density_statistics([1.0], epsilon=0.0)


def test_twisting_report():
    values = 1.0 / np.arange(1, 201)
    report = twisting_report(values)
    assert report.final_value == pytest.approx(1 / 200)
    assert report.cesaro == pytest.approx(values.mean())
    assert [L for L, _ in report.uniform_by_window] == [10, 30, 100]
    assert report.uniform_by_window[0][1] == pytest.approx(values[:10].mean())


def test_loglog_slope():
    xs = np.array([10.0, 100.0, 1000.0, 10000.0])
    assert loglog_slope(xs, xs ** -0.5) == pytest.approx(-0.5)
