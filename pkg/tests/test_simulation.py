import math

import numpy as np
import numpy.testing as npt
import pytest

from ksgraph.errors import InputError
from ksgraph.simulation import (
    PowerReport,
    ScenarioSpec,
    ar1_cholesky,
    ar1_covariance,
    canonical_test,
    default_separation,
    estimate_power,
    generate_scenario,
    qq_correlation,
    qq_pairs,
)


def test_published_defaults():
    assert default_separation("S1", 3) == 0.14
    assert default_separation("S1", 4) == 0.1
    assert default_separation("S1", 5) == 0.07
    assert default_separation("S2", 3) == 0.08
    assert default_separation("S2", 4) == 0.05
    assert default_separation("S2", 5) == 0.07
    assert default_separation("S6", variant="scale") == 0.05
    assert default_separation("S7", variant="scale") == 0.1
    assert ScenarioSpec("S3", K=3, d=100).separation == 0.15


def test_spec_normalisation():
    spec = ScenarioSpec("S1", K=3, d=5, n=4)
    assert spec.family == "S1_location"
    assert spec.group_sizes == (4, 4, 4)
    assert ScenarioSpec("S1", K=2, d=5, n=(3, 6)).group_sizes == (3, 6)


@pytest.mark.parametrize("kwargs", [
    dict(family="S9"),
    dict(family="S1", n=(3, 3)),
    dict(family="S3", separation=0.5),
    dict(family="S4", separation=-0.6),
    dict(family="S5", separation=-1.0),
    dict(family="S2", separation=-0.6),
    dict(family="S6", variant="shape"),
])
def test_invalid_specs(kwargs):
    base = dict(family="S1", K=3, d=5, n=5)
    base.update(kwargs)
    with pytest.raises(InputError):
        ScenarioSpec(**base)


def test_dataset_shape_and_labels():
    data = generate_scenario(ScenarioSpec("S2", K=4, d=7, n=(3, 4, 5, 6)), 1)
    assert data.points.shape == (18, 7)
    assert data.group_sizes.tolist() == [3, 4, 5, 6]


@pytest.mark.parametrize("family", ["S1", "S2", "S3", "S4", "S5", "S6", "S7"])
def test_bit_identical_replicates(family):
    spec = ScenarioSpec(family, K=3, d=20, n=10)
    a = generate_scenario(spec, 77)
    b = generate_scenario(spec, 77)
    npt.assert_array_equal(a.points, b.points)
    assert not np.array_equal(a.points, generate_scenario(spec, 78).points)


def test_null_location_groups_identical_law():
    spec = ScenarioSpec("S1", K=3, d=50, n=50, separation=0.0)
    data = generate_scenario(spec, 5)
    means = [data.points[data.labels == g].mean() for g in range(3)]
    npt.assert_allclose(means, 0.0, atol=3 / math.sqrt(50 * 50))


def test_location_group_means():
    spec = ScenarioSpec("S1", K=3, d=50, n=50, separation=0.14)
    data = generate_scenario(spec, 6)
    for g, target in enumerate([0.0, 0.14, 0.28]):
        assert data.points[data.labels == g].mean() == pytest.approx(target, abs=3 / math.sqrt(2500))


def test_scale_group_variances():
    spec = ScenarioSpec("S2", K=3, d=100, n=200, separation=0.08)
    data = generate_scenario(spec, 7)
    for g in range(3):
        v = data.points[data.labels == g].var()
        assert v == pytest.approx(1 + 0.08 * g, abs=0.03)


@pytest.mark.parametrize("d,rho", [(1, 0.3), (10, 0.0), (50, 0.4), (300, 0.85), (120, -0.5)])
def test_ar1_cholesky(d, rho):
    L = ar1_cholesky(d, rho)
    assert np.allclose(np.triu(L, 1), 0)
    S = ar1_covariance(d, rho)
    assert np.max(np.abs(L @ L.T - S)) <= 1e-10
    npt.assert_allclose(L, np.linalg.cholesky(S), atol=1e-10)


def test_covariance_lag_one_autocorrelation():
    spec = ScenarioSpec("S3", K=3, d=40, n=50, separation=0.15)
    sums = np.zeros(3)
    reps = 20
    for r in range(reps):
        data = generate_scenario(spec, 100 + r)
        for g in range(3):
            x = data.points[data.labels == g]
            # unit marginal variance and zero mean are known, so no centering
            sums[g] += np.mean(x[:, :-1] * x[:, 1:])
    est = sums / reps
    n_terms = reps * 50 * 39
    for g in range(3):
        rho = 0.1 + 0.15 * g
        assert est[g] == pytest.approx(rho, abs=4 * math.sqrt((1 + rho**2) / n_terms) * 3)


def test_kurtosis_standardized():
    # separation 4 -> df = 2, 6, 10; the df = 2 group has no finite variance
    spec = ScenarioSpec("S4", K=3, d=100, n=50, separation=4.0)
    reps = 40
    xs = [np.concatenate([generate_scenario(spec, r).points[np.repeat(np.arange(3), 50) == g].ravel()
                          for r in range(reps)]) for g in (1, 2)]
    for x in xs:
        assert abs(x.mean()) <= 4 / math.sqrt(50 * reps)
        assert x.var() == pytest.approx(1.0, abs=0.05)


def test_skew_kurtosis_standardized():
    spec = ScenarioSpec("S5", K=3, d=100, n=50, separation=1.0)
    reps = 20
    for g in range(3):
        x = np.concatenate([generate_scenario(spec, r).points[np.repeat(np.arange(3), 50) == g].ravel()
                            for r in range(reps)])
        assert abs(x.mean()) <= 4 / math.sqrt(50 * reps)
        assert x.var() == pytest.approx(1.0, abs=0.05)


def test_lognormal_location_uses_ones_vector():
    spec = ScenarioSpec("S6", K=4, d=200, n=50, variant="location")
    data = generate_scenario(spec, 3)
    for g in range(4):
        logs = np.log(data.points[data.labels == g])
        assert logs.mean() == pytest.approx(0.04 * g, abs=0.03)


def test_t_location_and_scale():
    loc = generate_scenario(ScenarioSpec("S7", K=4, d=200, n=50, variant="location"), 4)
    for g in range(4):
        assert loc.points[loc.labels == g].mean() == pytest.approx(0.04 * g, abs=0.03)
    sc = generate_scenario(ScenarioSpec("S7", K=4, d=200, n=100, variant="scale"), 4)
    base = 20 / 18
    for g in range(4):
        assert sc.points[sc.labels == g].var() == pytest.approx(base * (1 + 0.1 * g), rel=0.1)


def test_canonical_names():
    assert canonical_test("S") == "perm_S"
    assert canonical_test("SS") == "SS_fast"
    assert canonical_test("SA") == "SA_asym"
    with pytest.raises(InputError):
        canonical_test("FR")


def test_power_report_fields():
    spec = ScenarioSpec("S1", K=3, d=10, n=10, separation=0.0)
    rep = estimate_power(spec, ["SA", "S"], replications=20, seed=3, n_perm=50)
    assert isinstance(rep, PowerReport)
    assert rep.tests == ("SA_asym", "perm_S")
    for t in rep.tests:
        p = rep.rejection_rate[t]
        assert p == rep.rejections[t] / 20
        assert rep.mc_se[t] == pytest.approx(math.sqrt(p * (1 - p) / 20))
    assert len(rep.rows()) == 2


def test_power_deterministic_across_jobs():
    spec = ScenarioSpec("S2", K=3, d=20, n=15, separation=0.2)
    a = estimate_power(spec, ["SS", "S"], replications=12, seed=9, n_perm=99, n_jobs=1)
    b = estimate_power(spec, ["SS", "S"], replications=12, seed=9, n_perm=99, n_jobs=3)
    assert a.rejections == b.rejections


def test_power_invalid():
    spec = ScenarioSpec("S1", K=3, d=5, n=5)
    with pytest.raises(InputError):
        estimate_power(spec, ["SA"], replications=0)
    with pytest.raises(InputError):
        estimate_power(spec, ["SA"], alpha=1.5, replications=2)


def test_null_size():
    spec = ScenarioSpec("S1", K=3, d=50, n=50, separation=0.0)
    rep = estimate_power(spec, ["SS", "SA"], alpha=0.05, replications=200, seed=31)
    for t in rep.tests:
        se = math.sqrt(0.05 * 0.95 / 200)
        assert abs(rep.rejection_rate[t] - 0.05) <= 3 * se


def test_power_monotone_in_location():
    rates = []
    for mu in (0.0, 0.07, 0.14):
        spec = ScenarioSpec("S1", K=3, d=50, n=50, separation=mu)
        rates.append(estimate_power(spec, ["SA"], replications=100, seed=41))
    for a, b in zip(rates, rates[1:]):
        ra, rb = a.rejection_rate["SA_asym"], b.rejection_rate["SA_asym"]
        assert rb + 2 * math.hypot(a.mc_se["SA_asym"], b.mc_se["SA_asym"]) >= ra


def test_qq_helpers():
    rng = np.random.default_rng(0)
    values = rng.chisquare(4, 2000)
    probs, emp, theo = qq_pairs(values, 4)
    assert np.all(np.diff(emp) >= 0) and np.all(np.diff(theo) >= 0)
    assert probs[0] == pytest.approx(0.5 / 2000)
    assert qq_correlation(values, 4) > 0.99
