import math

import numpy as np
import pytest

from dynamics.expansive import (
    UNIFORM_CIRCLE_SPREAD,
    CurveSpec,
    ExpansiveSystem,
    beta_bound,
    classify_s,
    coboundary_residual,
    coboundary_system,
    complement_slope,
    delta_n,
    example_5_4_system,
    graph_derivative_check,
    kappa,
    limit_curve_extract,
    make_example_5_5,
    s_set,
    tail_bound,
    tau,
)
from dynamics.measures import FunctionSpec, Harmonic, ParticleCloud, SpaceTag, sample_haar, wrap
from utils.errors import NumericGuardError

from conftest import GOLDEN

WAVY = FunctionSpec(1, (Harmonic((1,), 0.1, 0.05), Harmonic((2,), 0.0, -0.03)), 1)


def test_system_validation():
    with pytest.raises(ValueError):
        ExpansiveSystem(GOLDEN, 1, FunctionSpec.linear(1))
    with pytest.raises(ValueError):
        ExpansiveSystem(GOLDEN, 2, FunctionSpec.linear(1, 2))
    with pytest.raises(ValueError):
        ExpansiveSystem(0.5, 2, FunctionSpec.linear(1))
    assert ExpansiveSystem(GOLDEN, -3, FunctionSpec.linear(1)).p == -3


def test_step_array():
    system = ExpansiveSystem(GOLDEN, 2, FunctionSpec.linear(1))
    out = system.step_array(np.array([[0.1, 0.3]]))
    assert out[0] == pytest.approx([0.1 + GOLDEN, 0.7])


def test_tau_of_linear_skew_is_geometric_series():
    system, curve = example_5_4_system()
    value = tau(system, curve, np.linspace(0, 1, 7, endpoint=False), n_trunc=60)
    assert np.allclose(value.value, 2.0, atol=1e-15)
    assert value.tail_bound < 1e-17
    with pytest.raises(ValueError):
        tau(system, curve, 0.1, n_trunc=0)


def test_tail_bound_shrinks_by_p():
    system = ExpansiveSystem(GOLDEN, 3, WAVY)
    assert tail_bound(system, 11) == pytest.approx(tail_bound(system, 10) / 3)


def test_tau_cancels_on_coboundary_curve():
    system, curve = coboundary_system(WAVY, p=2)
    value = tau(system, curve, np.linspace(0, 1, 50, endpoint=False))
    assert np.max(np.abs(value.value)) < 1e-9
    assert s_set(system, curve, 1e-6, grid_n=1000) == []


def test_delta_n_small_cases():
    system = ExpansiveSystem(GOLDEN, 2, WAVY)
    curve = CurveSpec(FunctionSpec(0, (Harmonic((1,), 0.2, 0.0),), 1))
    xs = np.linspace(0, 1, 9, endpoint=False)
    assert np.allclose(delta_n(system, curve, xs, 0), curve.derivative(xs))
    flat = CurveSpec(FunctionSpec.constant(0.4))
    assert np.allclose(delta_n(system, flat, xs, 1), system.fprime(xs))


def test_delta_n_recursion_matches_direct_formula():
    system = ExpansiveSystem(GOLDEN, -2, WAVY)
    curve = CurveSpec(FunctionSpec(0, (Harmonic((1,), 0.2, 0.1),), 1))
    xs = np.random.default_rng(0).random(25)
    for n in (1, 5, 20, 40):
        direct = delta_n(system, curve, xs, n)
        recursive = delta_n(system, curve, xs, n, method="recursive")
        assert np.allclose(direct, recursive, rtol=1e-10, atol=1e-12 * 2.0 ** n)


def test_delta_n_guard():
    system, curve = example_5_4_system()
    delta_n(system, curve, 0.1, 60)
    with pytest.raises(NumericGuardError):
        delta_n(system, curve, 0.1, 61)
    with pytest.raises(ValueError):
        delta_n(system, curve, 0.1, -1)


def test_kappa():
    assert kappa(ExpansiveSystem(GOLDEN, 2, FunctionSpec.linear(1))) == pytest.approx(2.0)
    assert kappa(ExpansiveSystem(GOLDEN, 3, FunctionSpec.linear(1))) == pytest.approx(1.5)
    assert kappa(ExpansiveSystem(GOLDEN, 2, FunctionSpec.constant(0.3))) == 0.0


def test_graph_derivative_stays_within_kappa():
    system, curve = example_5_4_system()
    xs = np.linspace(0, 1, 11, endpoint=False)
    assert graph_derivative_check(system, curve, xs, 20) <= kappa(system) + 1e-6


def test_complement_slope_for_linear_skew():
    for p in (2, 3, -2):
        system = ExpansiveSystem(GOLDEN, p, FunctionSpec.linear(1))
        slope = complement_slope(system, np.array([0.1, 0.6]), n=5)
        assert np.allclose(slope, -1.0 / (p - 1), atol=1e-9)


def test_example_5_4_is_all_of_s():
    system, curve = example_5_4_system()
    report = classify_s(system, curve, 0.01, grid_n=2000)
    assert report.measure("certified_in") >= 0.999
    assert report.undetermined == []
    assert report.beta == 0.0
    assert report.to_dict()["N_trunc"] == 40


def test_classify_s_rejects_uncertified_epsilon():
    system, curve = example_5_4_system()
    with pytest.raises(ValueError):
        classify_s(system, curve, 1e-20)


def test_beta_bound_extremes():
    system, curve = example_5_4_system()
    assert beta_bound(system, curve) == 0.0
    steep = ExpansiveSystem(GOLDEN, 2, FunctionSpec.linear(2))
    assert beta_bound(steep, CurveSpec(FunctionSpec.linear(-1))) == 1.0
    with pytest.raises(ValueError):
        beta_bound(system, curve, grid_n=100)


def test_coboundary_residual():
    system, curve = coboundary_system(WAVY, p=2, constant=0.25)
    assert coboundary_residual(system, curve) < 1e-9
    mismatch = ExpansiveSystem(GOLDEN, 2, FunctionSpec.linear(1))
    assert coboundary_residual(mismatch, FunctionSpec.constant(0.0)) == float("inf")
    bumped = ExpansiveSystem(GOLDEN, 2, system.f + FunctionSpec(0, (Harmonic((1,), 0.0, 0.01),), 1))
    assert 0.005 <= coboundary_residual(bumped, curve) <= 0.02


def test_example_5_5_certificates():
    system, _ = example_5_4_system()
    example = make_example_5_5(system)
    assert example.certificates["sup_tau_complement"] <= 0.01
    assert example.certificates["inf_tau_s"] >= 0.05
    assert example.winding == example.curve.gamma.winding
    intervals = s_set(system, example.curve, 0.05, grid_n=2000)
    assert intervals
    assert all(0.5 <= a < b <= 1.0 for a, b in intervals)
    assert beta_bound(system, example.curve) <= 0.75


def test_limit_curve_extract_on_exact_graph():
    n = 20_000
    x = (np.arange(n) + 0.5) * (0.4 / n)
    cloud = ParticleCloud.from_points(np.column_stack([x, x / 2]))
    extract = limit_curve_extract(cloud, (0.0, 0.4))
    assert extract.lipschitz_estimate == pytest.approx(0.5, abs=0.05)
    # slope 0.5 across a bin of width 0.002
    assert extract.max_vertical_spread == pytest.approx(0.5 * 0.002 / math.sqrt(12.0), rel=0.02)
    assert extract.max_detrended_spread < 1e-6
    assert extract.gaps == []


def test_limit_curve_extract_spread_is_circular_standard_deviation():
    rng = np.random.default_rng(3)
    x = rng.random(40_000) * 0.4
    y = wrap(0.98 + rng.normal(0.0, 0.01, x.size))
    extract = limit_curve_extract(ParticleCloud.from_points(np.column_stack([x, y])), (0.0, 0.4), bins=20)
    # fibers straddle 0, so a linear standard deviation would be near 0.5
    assert 0.008 < extract.min_vertical_spread <= extract.max_vertical_spread < 0.012
    assert extract.max_detrended_spread == pytest.approx(extract.max_vertical_spread, rel=0.05)


def test_limit_curve_extract_on_haar_cloud():
    cloud = sample_haar(SpaceTag.torus(2), 200_000, seed=5)
    extract = limit_curve_extract(cloud, (0.0, 0.5))
    assert abs(extract.max_vertical_spread - UNIFORM_CIRCLE_SPREAD) < 0.06
    assert extract.min_vertical_spread > 0.2


def test_limit_curve_extract_reports_gaps():
    x = np.linspace(0.0, 0.1, 100, endpoint=False)
    cloud = ParticleCloud.from_points(np.column_stack([x, np.zeros_like(x)]))
    extract = limit_curve_extract(cloud, (0.0, 0.4), bins=40)
    assert extract.gaps == list(range(10, 40))
    assert extract.lipschitz_estimate == pytest.approx(0.0, abs=1e-9)
