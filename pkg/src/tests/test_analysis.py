import math

import numpy as np
import pytest

from adhoc_capacity.analysis import (
    INDETERMINATE,
    INTERFERENCE_LIMITED,
    RDP_LIMITED,
    check_theta,
    classify_regime,
    dormancy_bound,
    fit_exponent,
    fit_global_constant,
    interference_bound,
    log_probes,
    predicted_throughput,
    reference_curves,
    regime_of_point,
)
from adhoc_capacity.config import ConstantTau
from adhoc_capacity.errors import DomainError, FitError
from adhoc_capacity.harness.presets import scenario_presets
from adhoc_capacity.rdp.analysis import IdentityG, xi_reference

PROBES = log_probes(100, 100000)


def test_dormancy_bound():
    assert dormancy_bound(1, 50, 100) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        dormancy_bound(1, 50, 0)


def test_dormancy_bound_with_reference_xi():
    n = 1000
    bound = dormancy_bound(2.0, 50, xi_reference(IdentityG(), n))
    assert bound == pytest.approx(2.0 * 50 / n)


def test_interference_bound():
    assert interference_bound(1, 100) == pytest.approx(0.04661, rel=1e-3)
    ratio = interference_bound(1, 400) / interference_bound(1, 100)
    assert ratio == pytest.approx(0.5 * math.sqrt(math.log(100) / math.log(400)))
    with pytest.raises(DomainError):
        interference_bound(1, 1)


def test_regime_of_point():
    assert regime_of_point(tau=1, xi=1000, n=100) == RDP_LIMITED
    assert regime_of_point(tau=50, xi=2, n=100) == INTERFERENCE_LIMITED


def test_log_probes():
    assert PROBES[0] == 100
    assert PROBES[-1] == 100000
    assert len(PROBES) == 7
    with pytest.raises(DomainError):
        log_probes(100, 50)


@pytest.mark.parametrize(
    "scenario, regime",
    [("example1", RDP_LIMITED), ("example2", RDP_LIMITED), ("example3", INTERFERENCE_LIMITED)],
)
def test_reference_scenarios(scenario, regime):
    tau_model, gmodel = scenario_presets(scenario)
    verdict = classify_regime(tau_model, gmodel, PROBES)
    assert verdict.regime == regime
    assert verdict.slope_interval[0] <= verdict.slope <= verdict.slope_interval[1]
    assert len(verdict.predicted) == len(PROBES)


def test_rdp_limited_prediction_follows_tau_g():
    tau_model, gmodel = scenario_presets("example1")
    verdict = classify_regime(tau_model, gmodel, PROBES)
    curve = verdict.predicted_curve()
    assert curve[1000] == pytest.approx(50 / 1000)


def test_threshold_inside_the_interval_is_indeterminate():
    tau_model, gmodel = scenario_presets("example1")
    slope = classify_regime(tau_model, gmodel, PROBES).slope
    # a threshold right at the fitted slope cannot be decided
    verdict = classify_regime(tau_model, gmodel, PROBES, threshold=slope + 1e-9)
    if verdict.slope_interval[0] != verdict.slope_interval[1]:
        assert verdict.regime == INDETERMINATE


@pytest.mark.parametrize("probes", [[100, 1000, 10000], [100, 200, 400, 800]])
def test_classification_needs_enough_probes(probes):
    tau_model, gmodel = scenario_presets("example1")
    with pytest.raises(FitError):
        classify_regime(tau_model, gmodel, probes)


def test_predicted_throughput_picks_the_smaller_when_undecided():
    tau_model, gmodel = ConstantTau(50), IdentityG()
    value = predicted_throughput(INDETERMINATE, 1, tau_model, gmodel, 1000)
    assert value == min(50 / 1000, interference_bound(1, 1000))


class TestFitExponent:
    ns = [10 ** k for k in range(2, 6)]

    def test_inverse(self):
        fit = fit_exponent([(n, 5 / n) for n in self.ns])
        assert fit.slope == pytest.approx(-1.0)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.predict(1000) == pytest.approx(5 / 1000)

    def test_inverse_sqrt(self):
        fit = fit_exponent({n: 3 / math.sqrt(n) for n in self.ns})
        assert fit.slope == pytest.approx(-0.5)

    def test_interference_curve(self):
        fit = fit_exponent([(n, interference_bound(1, n)) for n in self.ns])
        assert -0.62 < fit.slope < -0.52

    def test_constant_values(self):
        fit = fit_exponent([(n, 2.0) for n in self.ns])
        assert fit.slope == pytest.approx(0.0)
        assert fit.r_squared == 1.0

    @pytest.mark.parametrize(
        "points",
        [[(100, 1.0), (1000, 0.1)], [(100, 1.0), (1000, 0.0), (10000, 0.1)],
         [(100, 1.0), (100, 0.5), (100, 0.2)]],
    )
    def test_unfittable(self, points):
        with pytest.raises(FitError):
            fit_exponent(points)


class TestCheckTheta:
    reference = [(n, 1 / math.sqrt(n)) for n in (100, 1000, 10000)]

    def test_exact_and_scaled_curves(self):
        assert check_theta(self.reference, self.reference).spread == pytest.approx(1.0)
        doubled = [(n, 2 * v) for n, v in self.reference]
        assert check_theta(doubled, self.reference).spread == pytest.approx(1.0)

    def test_scale_invariance(self):
        values = [(n, v * (1 + 0.1 * k)) for k, (n, v) in enumerate(self.reference)]
        scaled = [(n, 7 * v) for n, v in values]
        assert check_theta(values, self.reference).spread == pytest.approx(
            check_theta(scaled, self.reference).spread
        )

    def test_wrong_shape_is_inconsistent(self):
        flat = [(n, 1.0) for n, _ in self.reference]
        check = check_theta(flat, self.reference)
        assert check.spread == pytest.approx(10.0)
        assert not check.consistent

    def test_grid_mismatch(self):
        with pytest.raises(FitError):
            check_theta([(100, 1.0), (1000, 1.0)], self.reference)


def test_reference_curves():
    frame = reference_curves([100, 1000], 1.0, ConstantTau(50), IdentityG())
    assert list(frame.columns) == ["n", "tau", "g_one_over_n", "xi_reference",
                                   "dormancy", "interference", "predicted"]
    np.testing.assert_allclose(frame["xi_reference"], [100, 1000])
    assert (frame["predicted"] <= frame["interference"]).all()


def test_global_constant_covers_every_point():
    points = [(n, 0.3 * interference_bound(1, n) * (1 + 0.05 * (k % 2)))
              for k, n in enumerate([100, 400, 1600, 6400])]
    const = fit_global_constant(points)
    assert const.violations == 0
    assert const.checked == 2
    assert const.c == pytest.approx(0.315)
    assert abs(const.slope) < 0.05
    assert const.ok


def test_global_constant_fails_when_the_ratio_grows():
    points = [(n, 0.1 * (n / 100) ** 0.3 * interference_bound(1, n))
              for n in [100, 400, 1600, 6400]]
    const = fit_global_constant(points)
    assert const.c == pytest.approx(0.1 * 4 ** 0.3)
    assert const.violations == 2
    assert const.slope == pytest.approx(0.3)
    assert not const.ok


def test_global_constant_gates_on_the_slope():
    # held-out points stay within the slack but the ratio still drifts up
    points = [(n, (n / 100) ** 0.2 * interference_bound(1, n)) for n in [100, 400, 1600]]
    const = fit_global_constant(points, slack=10.0)
    assert const.violations == 0
    assert const.slope == pytest.approx(0.2)
    assert not const.ok
