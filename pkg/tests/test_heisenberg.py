import itertools

import numpy as np
import pytest

from dynamics.heisenberg import (
    DEFAULT_NILROTATION,
    HeisenbergPoint,
    NilRotation,
    commutator,
    fiber_section_cloud,
    heis_inverse,
    heis_mul,
    heis_mul_array,
    heis_power,
    is_minimal_rotation,
    nil_step,
    reduce,
    reduce_array,
    torus_factor,
    torus_factor_cloud,
)
from dynamics.measures import SpaceTag, TorusPoint, circular_difference, pushforward, sample_haar
from dynamics.metrics import haar_distance


def brute_force_reduce(g):
    """Search lattice elements with entries in [-3, 3] for the representative in the unit cube."""
    for a, b, c in itertools.product(range(-3, 4), repeat=3):
        x, y, z = heis_mul(g, (a, b, c))
        if all(0.0 <= v < 1.0 for v in (x, y, z)):
            return x, y, z
    raise AssertionError(f"no representative found for {g}")


def test_identity_and_commutator():
    g = (0.3, -1.2, 2.5)
    assert heis_mul(g, (0.0, 0.0, 0.0)) == pytest.approx(g)
    assert heis_mul((1, 0, 0), (0, 1, 0)) == (1.0, 1.0, 1.0)
    assert heis_mul((0, 1, 0), (1, 0, 0)) == (1.0, 1.0, 0.0)
    assert commutator((1, 0, 0), (0, 1, 0)) == pytest.approx((0.0, 0.0, 1.0))
    assert heis_mul(g, heis_inverse(g)) == pytest.approx((0.0, 0.0, 0.0))


def test_group_law_on_random_triples():
    rng = np.random.default_rng(0)
    for _ in range(100):
        g, h, k = (tuple(rng.uniform(-2, 2, 3)) for _ in range(3))
        assert np.allclose(heis_mul(heis_mul(g, h), k), heis_mul(g, heis_mul(h, k)), atol=1e-12)
        c = commutator(g, h)
        assert abs(c[0]) < 1e-12 and abs(c[1]) < 1e-12
        assert np.allclose(commutator(c, k), (0.0, 0.0, 0.0), atol=1e-12)


def test_power_closed_form():
    u = (0.3, 0.7, 0.1)
    direct = (0.0, 0.0, 0.0)
    for n in range(8):
        assert np.allclose(heis_power(u, n), direct, atol=1e-12)
        direct = heis_mul(u, direct)


def test_reduce_examples():
    p = reduce((0.2, 0.4, 0.6))
    assert p.as_tuple() == pytest.approx((0.2, 0.4, 0.6))
    for g in [(1.5, 0.25, 0.0), (1.5, 2.7, 0.3), (-0.4, -1.3, 0.95), (0.7, -2.3, -1.3)]:
        assert reduce(g).as_tuple() == pytest.approx(brute_force_reduce(g), abs=1e-12)


def test_reduce_is_lattice_invariant_and_idempotent():
    rng = np.random.default_rng(1)
    g = rng.uniform(-3, 3, (100, 3))
    gamma = rng.integers(-3, 4, (100, 3)).astype(float)
    base = reduce_array(g)
    moved = reduce_array(heis_mul_array(g, gamma))
    assert np.max(np.abs(circular_difference(base, moved))) < 1e-9
    assert np.array_equal(reduce_array(base), base)


def test_point_validation():
    with pytest.raises(ValueError):
        HeisenbergPoint(0.5, 1.0, 0.2)


def test_nil_step_projects_to_rotation():
    rot = NilRotation()
    p = HeisenbergPoint(0.3, 0.7, 0.9)
    stepped = nil_step(rot, p)
    expected = torus_factor(p) + (rot.xu, rot.yu)
    assert torus_factor(stepped).coords == pytest.approx(expected.coords)
    assert torus_factor(p) == TorusPoint((0.3, 0.7))
    assert nil_step(NilRotation(0.0, 0.0, 0.0), p) == p


def test_iterate_array_matches_repeated_steps():
    rot = NilRotation()
    points = np.random.default_rng(2).random((20, 3))
    stepped = points
    for _ in range(300):
        stepped = rot.step_array(stepped)
    assert np.max(np.abs(circular_difference(rot.iterate_array(points, 300), stepped))) < 1e-9


def test_minimality():
    assert is_minimal_rotation(NilRotation())
    assert not NilRotation(0.5, DEFAULT_NILROTATION[1], 0.0).is_minimal()
    assert NilRotation().to_dict()["type"] == "nilrotation"


def test_fiber_section_cloud():
    cloud = fiber_section_cloud(0.37, 400)
    assert cloud.space == SpaceTag.heisenberg()
    assert np.allclose(cloud.points[:, 2], 0.37)
    assert haar_distance(cloud, K=1, s=0) >= 1.0
    base = torus_factor_cloud(cloud)
    assert base.space == SpaceTag.torus(2)
    assert haar_distance(base, K=4) < 1e-8


def test_torus_factor_of_pushed_haar_cloud():
    rot = NilRotation()
    cloud = sample_haar(SpaceTag.heisenberg(), 1000, mode="stratified")
    pushed = pushforward(cloud, rot, 50)
    assert haar_distance(torus_factor_cloud(pushed), K=4) < 1e-8
    with pytest.raises(ValueError):
        torus_factor_cloud(sample_haar(SpaceTag.torus(3), 10))
