import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import DISK, SQUARE
from maxreg.generators import Constant, Gaussian
from maxreg.lattice import ScalarField, build_domain, rasterize
from maxreg.verify import (
    CHECK_IDS,
    Problem,
    VerificationError,
    VerificationReport,
    argmax_stability_experiment,
    calculus_identity_checks,
    check_gradient_bound_alpha0,
    check_gradient_bound_fractional,
    check_gradient_bound_spherical,
    check_norm_bounds,
    check_zero_boundary,
    continuity_experiment,
    derivative_formula_check,
    quadratic_identity,
    run_check,
)
from maxreg.sobolev import exponent_table

G1 = {"kind": "gaussian", "center": [0.4, 0.55], "width": 0.15, "amplitude": 1.0}
G2 = {"kind": "gaussian", "center": [0.65, 0.35], "width": 0.3, "amplitude": 2.0}
TRIG = {"kind": "trig", "frequencies": [1, 2], "offset": 1.5, "amplitude": 1.0}
BUMP = {"kind": "bump", "center": [0.5, 0.5], "radius": 0.3}
ONE = {"kind": "constant", "c": 1.0}


def prob(specs, h=1 / 32, p=None, dom=SQUARE):
    return Problem.from_specs(build_domain(dom), h, specs, p or [3.0] * len(specs))


def assert_accounting(rep: VerificationReport):
    assert rep.points_checked + rep.points_excluded == rep.points_total
    parts = [v for k, v in rep.metrics.items() if k.startswith("excluded_")]
    if parts and rep.check_id.startswith("gradient"):
        assert sum(parts) == rep.points_excluded


# report type

def test_report_invariants():
    e = exponent_table(1, 2, [2], 0.0)
    with pytest.raises(ValueError):
        VerificationReport("x", e, 0.1, 10, 5, 4, 1.0, 0.99, 0.0, "", True)
    with pytest.raises(ValueError):
        VerificationReport("x", e, 0.1, 10, 5, 5, 0.5, 0.99, 0.0, "", True)
    r = VerificationReport("x", e, 0.1, 10, 5, 5, 1.0, 0.99, math.inf, "", True)
    d = r.to_dict()
    assert list(d)[:3] == ["check_id", "exponents", "grid_h"] and d["pass"] is True
    assert d["empirical_constant"] == "inf"
    json.dumps(d, allow_nan=False)


def test_check_ids_sorted():
    assert list(CHECK_IDS) == sorted(CHECK_IDS)


# pointwise gradient bounds

def test_alpha0_constants_trivially_pass():
    rep = check_gradient_bound_alpha0(prob([ONE, ONE]))
    assert rep.passed and rep.pass_fraction == 1.0 and rep.empirical_constant == 0.0
    assert_accounting(rep)


def test_alpha0_gaussian_fine_grid():
    rep = check_gradient_bound_alpha0(prob([G1], h=1 / 128, p=[2.0]))
    assert rep.pass_fraction >= 0.99 and rep.passed
    assert_accounting(rep)


def test_alpha0_trig_pair():
    trig2 = {"kind": "trig", "frequencies": [2, 1], "offset": 1.5}
    rep = check_gradient_bound_alpha0(prob([TRIG, trig2], h=1 / 64, p=[4.0, 4.0]))
    assert rep.passed and rep.empirical_constant <= 2.0


def test_alpha0_needs_flag():
    with pytest.raises(VerificationError, match="hypotheses unmet"):
        check_gradient_bound_alpha0(prob([G1, G2], p=[1.5, 1.5]))


def test_fractional_ones():
    rep = check_gradient_bound_fractional(prob([ONE]), 1.0)
    assert rep.passed


def test_fractional_gaussian():
    rep = check_gradient_bound_fractional(prob([G1], h=1 / 64, p=[4.0]), 1.0)
    assert rep.pass_fraction >= 0.99
    assert_accounting(rep)


def test_fractional_two_term_fit():
    rep = check_gradient_bound_fractional(prob([G1, G2], h=1 / 64, p=[4.0, 4.0]), 1.5)
    assert rep.passed
    assert rep.metrics["fit_c1"] <= 1.5 + 1e-9 and rep.metrics["fit_c2"] <= 2.0


def test_fractional_rejects_small_alpha():
    with pytest.raises(VerificationError):
        check_gradient_bound_fractional(prob([G1]), 0.5)


def test_spherical_ones_constant_is_reported():
    rep = check_gradient_bound_spherical(prob([ONE]), 1.0)
    assert rep.passed
    assert 0 < rep.metrics["constant_h"] <= 1.0


def test_spherical_gaussian_stable():
    rep = check_gradient_bound_spherical(prob([G1], h=1 / 32, p=[3.0]), 1.0)
    assert rep.passed and math.isfinite(rep.empirical_constant)
    assert rep.metrics["grid_h_half"] == 1 / 64


def test_spherical_hypotheses():
    with pytest.raises(VerificationError, match="hypotheses unmet"):
        check_gradient_bound_spherical(prob([G1], p=[1.2]), 1.0)


# norm bounds

def test_norm_constants():
    rep = check_norm_bounds(prob([ONE]), 0.0)
    assert rep.passed and rep.empirical_constant == pytest.approx(1.0, abs=0.15)
    assert rep.empirical_constant <= 2 and not rep.advisory


def test_norm_gaussian_widths():
    ratios = []
    for w in (0.1, 0.15, 0.2, 0.3, 0.4):
        g = dict(G1, width=w)
        rep = check_norm_bounds(prob([g, G2], p=[4.0, 4.0]), 0.0)
        ratios.append(rep.empirical_constant)
        assert rep.passed
        assert bool(rep.advisory) == (rep.empirical_constant > 4)
    assert all(math.isfinite(r) for r in ratios)


def test_norm_fractional_stable():
    rep = check_norm_bounds(prob([G1]), 1.0)
    assert rep.passed
    assert "ratio_sobolev_h" in rep.metrics and "ratio_lebesgue_h" in rep.metrics


# zero boundary

def test_zero_boundary_compact_support():
    bump = {"kind": "bump", "center": [0.5, 0.5], "radius": 0.25}
    rep = check_zero_boundary(prob([bump]), 0.0)
    assert rep.metrics["vanishing_exact"] and rep.metrics["collar_points"] > 0


@given(seed=st.integers(0, 1000))
def test_zero_boundary_ladder_exact(seed):
    rng = np.random.default_rng(seed)
    g = {"kind": "gaussian", "center": rng.uniform(0.2, 0.8, 2).tolist(), "width": float(rng.uniform(0.1, 0.4))}
    rep = check_zero_boundary(prob([g], h=1 / 16), 1.0)
    assert rep.metrics["ladder_pointwise_exact"]
    assert rep.metrics["weighted_norm"] <= rep.metrics["lower_order_norm"]


def test_zero_boundary_average_gap_constant():
    rep = check_zero_boundary(prob([G1]), 0.0, t=0.5)
    assert rep.passed and rep.empirical_constant <= 5


# continuity and stability

def test_continuity_zero_perturbation():
    P = prob([G1])
    zero = (Constant(0.0),)
    rep = continuity_experiment(P, 0.0, perturbation=zero, levels=4)
    assert rep.metrics["distances"] == [0.0] * 4


def test_continuity_lq_part_halves():
    rep = continuity_experiment(prob([G1]), 0.0, levels=6)
    d = np.array(rep.metrics["distances_lq"])
    ratios = d[1:] / d[:-1]
    assert np.all(np.abs(ratios - 0.5) <= 0.05)
    assert rep.metrics["monotone"]


def test_continuity_pair_monotone():
    rep = continuity_experiment(prob([G1, G2], p=[4.0, 4.0]), 1.0, levels=6)
    assert rep.metrics["monotone"]


def test_continuity_needs_levels():
    with pytest.raises(VerificationError):
        continuity_experiment(prob([G1]), 0.0, levels=3)


def test_argmax_zero_perturbation():
    rep = argmax_stability_experiment(prob([G1]), 0.0, perturbation=(Constant(0.0),), levels=3)
    assert rep.metrics["bad_measure"] == [0.0] * 3 and rep.passed


def test_argmax_ones_alpha1():
    rep = argmax_stability_experiment(prob([ONE]), 1.0, lam=2 / 32)
    assert all(b == 0 for b in rep.metrics["bad_measure"])


def test_argmax_gaussian_decreasing():
    rep = argmax_stability_experiment(prob([G1], h=1 / 64), 0.0, levels=5)
    bad = rep.metrics["bad_measure"]
    assert all(b <= a for a, b in zip(bad, bad[1:])) and rep.passed


def test_argmax_lambda_floor():
    with pytest.raises(VerificationError, match="below 2h"):
        argmax_stability_experiment(prob([G1]), 0.0, lam=1 / 32)


# derivative formula

def test_derivative_total_tie_excluded():
    rep = derivative_formula_check(prob([ONE]), 0.0)
    assert rep.points_checked == 0 and rep.notes == ["no eligible points"]
    assert rep.points_excluded == rep.points_total


def test_derivative_bump_zero_radius_branch():
    bump = {"kind": "bump", "center": [0.5, 0.5], "radius": 0.4}
    P = prob([bump], h=1 / 64)
    rep = derivative_formula_check(P, 0.0)
    assert rep.metrics["eligible_zero_radius"] > 0
    # near the peak the argmax is r = 0 and the formula is grad |f| itself
    res = P.maximal(0.0)
    assert res.best[32, 33] == 0 and res.value.values[32, 33] == P.fields.slots[0].values[32, 33]


def test_derivative_gaussian_pair():
    rep = derivative_formula_check(prob([G1, G2], h=1 / 64), 1.0)
    assert rep.metrics["median_relative_error"] <= 0.10 and rep.passed


def test_derivative_needs_smooth_fields():
    ind = {"kind": "indicator", "region": {"kind": "disk", "params": {"center": [0.5, 0.5], "radius": 0.2}}}
    with pytest.raises(VerificationError):
        derivative_formula_check(prob([ind]), 0.0)


# calculus identities

def test_identities_constant():
    ras = rasterize(build_domain(SQUARE), 1 / 64)
    rep = calculus_identity_checks(ScalarField(ras, np.full(ras.grid.shape, 3.0)))
    assert rep.metrics["fraction_green"] == 1.0 and rep.passed
    assert all(s["green_error"] <= 0.05 and s["radial_error"] <= 0.05 for s in rep.metrics["samples"])


@pytest.mark.parametrize("k", [8, 12, 16])
def test_quadratic_identity_closed_form(k):
    ras = rasterize(build_domain(SQUARE), 1 / 64)
    out = quadratic_identity(ras, (32, 32), k / 64)
    assert out["lhs"] == pytest.approx(out["exact"], rel=0.01)
    assert out["rhs"] == pytest.approx(out["exact"], rel=0.01)


def test_identities_trig_field():
    P = prob([TRIG], h=1 / 128)
    rep = calculus_identity_checks(P.fields.slots[0], P.fields.gradients[0], samples=20, seed=1)
    assert rep.points_checked == 20 and rep.passed


def test_identities_on_disk():
    P = prob([{"kind": "gaussian", "center": [-0.2, 0.1], "width": 0.3}], h=1 / 64, dom=DISK)
    rep = run_check("calculus_identities", P, 0.0, samples=20)
    assert rep.passed


# dispatch and refinement

def test_run_check_dispatch():
    P = prob([G1])
    assert run_check("gradient_alpha0", P, 0.0).check_id == "gradient_alpha0"
    with pytest.raises(KeyError):
        run_check("nope", P, 0.0)


def test_refine_is_memoized():
    P = prob([G1])
    assert P.refine() is P.refine() and P.refine().h == P.h / 2


def test_reports_are_deterministic():
    a = [run_check(c, prob([G1, G2]), 1.0).to_dict() for c in ("gradient_fractional", "norm_bounds")]
    b = [run_check(c, prob([G1, G2]), 1.0).to_dict() for c in ("gradient_fractional", "norm_bounds")]
    assert json.dumps(a) == json.dumps(b)
