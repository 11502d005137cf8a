import json
import math

import numpy as np
import pytest

from fractalaw.diagnostics import (
    ConfigError,
    ExperimentConfig,
    HypothesisViolation,
    analytic_tail,
    error_bound,
    moment_log_terms,
    parse_grid,
    run,
    tail_samples,
)
from fractalaw.measures import dirac
from fractalaw.scaling import HeavyTailExample


def cfg(**raw):
    return ExperimentConfig.from_dict(raw)


# -- error bound --------------------------------------------------------------------------


def test_error_bound_examples():
    assert error_bound(0.5, 1, 3) == pytest.approx(0.25)
    b, lam, q = 0.7, 0.3, 2.0
    assert error_bound(lam, q, 0, b) == pytest.approx(b / (1 - lam ** (1 / q)))
    assert error_bound(0.5, 0.5, 2, 1.0) == pytest.approx(0.25 / 0.5)


def test_error_bound_monotonicity():
    lams = np.linspace(0.05, 0.95, 19)
    for q in (0.5, 1.0, 2.0):
        for lam in lams:
            vals = [error_bound(lam, q, k) for k in range(20)]
            assert np.all(np.diff(vals) < 0)
        for k in (0, 3, 10):
            vals = [error_bound(lam, q, k) for lam in lams]
            assert np.all(np.diff(vals) > 0)


@pytest.mark.parametrize("lam", [0.0, 1.0, 1.5])
def test_error_bound_domain(lam):
    with pytest.raises(ValueError):
        error_bound(lam, 1, 1)


# -- config parsing ------------------------------------------------------------------------


def test_grid_forms():
    np.testing.assert_allclose(parse_grid([0.1, 0.2]), [0.1, 0.2])
    assert parse_grid({"logspace": [-1, 1, 3]}).tolist() == pytest.approx([0.1, 1.0, 10.0])
    assert parse_grid({"linspace": [1, 2, 3]}).tolist() == [1.0, 1.5, 2.0]


@pytest.mark.parametrize("grid", [[0.2, 0.1], [0.0, 1.0], [], {"other": 1}])
def test_bad_grids(grid):
    with pytest.raises(ConfigError):
        parse_grid(grid)


@pytest.mark.parametrize(
    "raw",
    [
        {"experiment": "converge", "spec": "uniform", "q": 0},
        {"experiment": "converge", "spec": "uniform", "m": 0},
        {"experiment": "converge", "spec": "uniform", "depth": -1},
        {"experiment": "converge", "spec": "nope"},
        {"experiment": "converge", "spec": "uniform", "seed": -1},
        {"spec": "uniform"},
    ],
)
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        run(ExperimentConfig.from_dict(raw))


def test_unknown_experiment():
    with pytest.raises(ConfigError):
        run(cfg(experiment="nope", spec="uniform"))


def test_selfsim_needs_32_members():
    with pytest.raises(ConfigError):
        run(cfg(experiment="selfsim", spec="uniform", m=8, depth=2))


def test_hypothesis_violation():
    law = {"type": "law", "branches": [{"p": 0.5, "A": 1.0, "b": 0.0}, {"p": 0.5, "A": 1.0, "b": 1.0}]}
    with pytest.raises(HypothesisViolation):
        run(cfg(experiment="converge", spec=law, depth=3))


# -- experiments ---------------------------------------------------------------------------


def test_uniform_convergence_report():
    rep = run(cfg(experiment="converge", spec="uniform", depth=12, mu0={"dirac": [0.0]}))
    assert rep.passed
    assert abs(rep.get("median_fitted_ratio") - 0.5) <= 1e-6
    assert rep.get("contraction_ratio") == 0.5
    # observed distance to the deepest iterate sits under the a-priori curve
    for k, val, se, bnd in rep.curves:
        assert val <= bnd * (1 + 1e-9)


def test_tail_samples_heavy_tail_closed_form():
    c = cfg(experiment="tail-check", spec="reciprocal", m=50, seed=4)
    spec = c.spec
    from fractalaw import streams

    u = streams.uniforms(streams.root_keys(4, np.arange(50)), 1)[:, 0]
    np.testing.assert_allclose(tail_samples(c, dirac(0.0)), spec.offset(spec.omega(u)), rtol=1e-15)


def test_analytic_tail_only_for_origin_start():
    spec = HeavyTailExample("reciprocal")
    assert analytic_tail(spec, dirac(0.0), 1.0) is not None
    assert analytic_tail(spec, dirac(1.0), 1.0) is None
    # q < 1 rescales the level: P(offset^q >= t) = P(offset >= t^(1/q))
    F = analytic_tail(spec, dirac(0.0), 0.5)
    assert F(3.0) == pytest.approx(1 / 9)


def test_reciprocal_tail_small():
    rep = run(cfg(experiment="tail-check", spec="reciprocal", m=20_000, seed=1, grid={"logspace": [-1, 1.5, 20]}))
    assert rep.find("analytic_tail_match").passed
    assert rep.find("tail_product_bounded").passed
    assert 0.85 <= rep.get("gamma_hat") <= 1.15


def test_deterministic_tail_near_fixed_point():
    # alpha = depth-20 approximation of the uniform fixed point: l_1(alpha, S alpha) <= 2^-20
    rep = run(
        cfg(
            experiment="tail-check",
            spec="uniform",
            m=4,
            alpha={"iterate": 20, "start": {"dirac": [0.0]}},
            grid={"logspace": [-7, 0, 15]},
            gamma_max=2.0**-20,
        )
    )
    assert rep.get("gamma_hat") <= 2.0**-20
    assert rep.passed


def test_moment_log_terms_match_direct_evaluation():
    spec = HeavyTailExample("reciprocal")
    logs = moment_log_terms(spec, 2, 1000, 0.5)
    from fractalaw import streams

    u = streams.uniforms(streams.root_keys(2, np.arange(1000)), 1)[:, 0]
    np.testing.assert_allclose(np.exp(logs), spec.offset(spec.omega(u)) ** 0.5, rtol=1e-12)


def test_moment_probe_bounded_law_is_exact():
    law = {"type": "law", "branches": [{"p": 1.0, "A": 0.5, "b": 3.0}]}
    rep = run(cfg(experiment="moment-probe", spec=law, q=2, schedule=[10, 100, 1000], expect="stable", exact_mean=9.0))
    assert rep.passed
    assert rep.get("relative_error_to_exact") <= 1e-12


def test_moment_probe_schedule_validation():
    with pytest.raises(ConfigError):
        run(cfg(experiment="moment-probe", spec="expinv", schedule=[100, 10]))


def test_contraction_check_equal_start_is_trivial():
    rep = run(
        cfg(experiment="contract-check", spec="random_ratio", q=1, m=200, mu0={"dirac": [0.5]}, nu0={"dirac": [0.5]})
    )
    assert rep.passed
    assert rep.get("mean_distance_before") == 0.0 and rep.get("mean_distance_after") == 0.0


def test_contraction_check_uniform_exact():
    # one deterministic law: the check is exact with no Monte Carlo term
    rep = run(cfg(experiment="contract-check", spec="uniform", q=1, nu0={"dirac": [1.0]}, grid=[0.3, 0.6, 0.9]))
    assert rep.passed and rep.find("contraction_inequality").mc_term == 0.0
    rows = rep.curves
    assert all(lhs >= rhs for _, lhs, _, rhs in rows)


def test_selfsim_negative_control():
    raw = json.loads(
        json.dumps(
            {
                "experiment": "selfsim",
                "spec": "random_ratio",
                "q": 1,
                "depth": 2,
                "m": 32,
                "mu0": {"dirac": [0.0]},
                "mu0_prime": {"dirac": [1.0]},
                "seed": 17,
            }
        )
    )
    rep = run(ExperimentConfig.from_dict(raw))
    assert rep.get("lq_star_star_cross_start") > rep.get("lq_star_star_baseline")
    assert not rep.find("cross_start_vs_baseline").passed


def test_selfsim_deterministic_law():
    rep = run(cfg(experiment="selfsim", spec="cantor", depth=8, m=32, mu0={"dirac": [0.0]}))
    assert rep.passed
    assert rep.get("lq_star_star_baseline") == 0.0


def test_fixed_point_and_invariant_set_experiments():
    rep = run(
        cfg(
            experiment="fixed-point",
            omega_probs=[0.5, 0.5],
            maps=[{"A": 0.5, "b": 1.0}, {"A": 0.25, "b": 0.0}],
            z=[3.0, 5.0],
            steps=45,
        )
    )
    assert rep.passed
    np.testing.assert_allclose(rep.get("fixed_point"), [[2.0], [0.0]], atol=1e-10)
    rep = run(
        cfg(
            experiment="invariant-set",
            omega_probs=[1.0],
            maps=[[{"A": 0.5, "b": 0.0}], [{"A": 0.5, "b": 0.5}]],
            z=[0.0],
            steps=8,
            grid=[0.1],
            target_t=0.1,
        )
    )
    assert rep.passed
    assert rep.get("set_sizes") == [2**j for j in range(9)]


def test_fixed_point_rejects_expanding_map():
    with pytest.raises(HypothesisViolation):
        run(cfg(experiment="fixed-point", omega_probs=[1.0], maps=[{"A": 2.0, "b": 0.0}], z=[1.0]))


def test_report_is_json_and_names_tolerances():
    rep = run(cfg(experiment="converge", spec="cantor", depth=8, mu0={"dirac": [0.0]}))
    obj = json.loads(json.dumps(rep.to_json(), sort_keys=True))
    for v in obj["verdicts"]:
        assert v["tolerance"]["name"] and "value" in v["tolerance"] and "mc_term" in v
    for m in obj["metrics"].values():
        assert set(m) == {"value", "stderr"}
    header = rep.curves_csv().splitlines()[0]
    assert header == "k,value,stderr,bound"
