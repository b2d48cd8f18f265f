import numpy as np
import pytest

from adhoc_capacity import rng
from adhoc_capacity.errors import DivergenceError, DomainError, NonMonotoneError
from adhoc_capacity.rdp.analysis import (
    GModel,
    IdentityG,
    KTargetG,
    StepRepairG,
    TableG,
    constant_q_function,
    empirical_gmodel,
    expected_attempts,
    g_eval,
    load_q_function,
    parse_gmodel,
    q_lower_bound,
    q_upper_bound,
    rdp_rates,
    scheme_a_qprime,
    solve_lambda,
    table_q_function,
    validate_gmodel,
    xi_bounds,
    xi_from_rates,
    xi_reference,
)


@pytest.mark.parametrize("cls", GModel.__subclasses__())
def test_default_models_are_valid(cls):
    model = cls()
    assert g_eval(model, 0.0) == 0.0
    assert g_eval(model, 1.0) == 1.0
    assert validate_gmodel(model) == []
    assert parse_gmodel(model.to_string()) == model


@pytest.mark.parametrize(
    "model, f, expected",
    [
        (IdentityG(), 0.3, 0.3),
        (KTargetG(coeff=2), 0.5, 0.75),
        (StepRepairG(), 1e-9, 1.0),
        (StepRepairG(), 0.0, 0.0),
        (TableG(((0, 0), (0.5, 0.8), (1, 1))), 0.25, 0.4),
    ],
)
def test_g_eval(model, f, expected):
    assert g_eval(model, f) == pytest.approx(expected)


def test_g_eval_on_arrays():
    np.testing.assert_allclose(g_eval(IdentityG(), np.array([0.1, 0.7])), [0.1, 0.7])


@pytest.mark.parametrize("f", [-0.1, 1.5, float("nan")])
def test_g_eval_outside_the_unit_interval(f):
    with pytest.raises(DomainError):
        g_eval(IdentityG(), f)


def test_sqrt_n_targets():
    model = KTargetG(coeff=1.0, power=0.5)
    assert model.k(10000) == 100.0
    assert g_eval(model, 1 / 10000, 10000) == pytest.approx(1 - (1 - 1e-4) ** 100)
    with pytest.raises(DomainError):
        g_eval(model, 0.5)


def test_fewer_than_one_target_is_not_valid():
    assert validate_gmodel(KTargetG(coeff=0.5))


def test_table_below_the_diagonal_is_not_valid():
    violations = validate_gmodel(TableG(((0, 0), (0.5, 0.4), (1, 1))))
    assert any("G(f) < f" in v for v in violations)


def test_decreasing_table_is_not_valid():
    violations = validate_gmodel(TableG(((0, 0), (0.5, 1.0), (0.8, 0.9), (1, 1))))
    assert any("decreases" in v for v in violations)


@pytest.mark.parametrize("text", ["linear", "k_target:", "table:0=0", "k_target:-1"])
def test_unparseable_models(text):
    with pytest.raises(DomainError):
        parse_gmodel(text)


def test_q_upper_bound():
    assert q_upper_bound(IdentityG(), 50, 1, 101) == pytest.approx(0.5)
    assert q_upper_bound(IdentityG(), 500, 1, 101) == 1.0


def test_q_lower_bound():
    assert q_lower_bound(IdentityG(), 50, 1, 100) == pytest.approx(0.25)
    assert q_lower_bound(IdentityG(gamma=0.5), 50, 1, 100) == pytest.approx(0.125)


@pytest.mark.parametrize("bound", [q_upper_bound, q_lower_bound])
def test_bounds_need_positive_load(bound):
    with pytest.raises(DomainError):
        bound(IdentityG(), 50, 0, 100)


def test_lower_bound_stays_below_upper_bound():
    gen = rng.stream(0, 101)
    models = [IdentityG(gamma=0.7), KTargetG(coeff=3, gamma=0.4), StepRepairG(gamma=0.9)]
    for _ in range(1000):
        model = models[gen.integers(len(models))]
        n = int(gen.integers(2, 10 ** 5))
        nbar_r = float(gen.uniform(0, 100))
        lam = float(gen.uniform(0.01, 50))
        assert q_lower_bound(model, nbar_r, lam, n) <= q_upper_bound(model, nbar_r, lam, n)


def test_scheme_a_qprime():
    assert scheme_a_qprime(constant_q_function(0.8), 1.0, 0.5) == 0.8
    assert scheme_a_qprime(lambda lam: min(1.0, 1.0 / lam), 1.0, 0.5) == 0.5
    with pytest.raises(DomainError):
        scheme_a_qprime(constant_q_function(0.8), 1.0, 1.0)


class TestExpectedAttempts:
    def test_values(self):
        assert expected_attempts(1.0) == 1.0
        assert expected_attempts(0.25) == 4.0

    def test_zero_success_diverges(self):
        with pytest.raises(DivergenceError):
            expected_attempts(0.0)

    def test_matches_geometric_draws(self):
        draws = rng.stream(0, 102).geometric(0.25, size=10 ** 6)
        assert draws.mean() == pytest.approx(expected_attempts(0.25), rel=0.01)


class TestSolveLambda:
    def test_no_success_at_all(self):
        assert solve_lambda(100, 0.1, 50, constant_q_function(0.0)) == pytest.approx(10.0)

    def test_constant_success(self):
        lam = solve_lambda(100, 1, 10, constant_q_function(0.5))
        assert lam == pytest.approx(100 / 6, rel=1e-9)

    def test_fixed_point_at_the_lower_end(self):
        lam = solve_lambda(100, 1, 10, lambda lam: min(1.0, 10 / lam))
        assert lam == pytest.approx(100 / 11, rel=1e-9)

    def test_interior_fixed_point_matches_a_grid_search(self):
        def q_prime(lam):
            return min(1.0, 20 / lam)

        lam = solve_lambda(100, 1, 1, q_prime)
        grid = np.arange(50, 100, 1e-4)
        residual = np.abs(grid - 100 / (1 + np.minimum(1.0, 20 / grid)))
        assert lam == pytest.approx(grid[residual.argmin()], abs=1e-3)
        assert lam == pytest.approx(80.0, rel=1e-9)

    def test_increasing_success_is_rejected(self):
        with pytest.raises(NonMonotoneError):
            solve_lambda(100, 1, 10, lambda lam: lam / 100)

    def test_out_of_range_q_prime_is_rejected(self):
        with pytest.raises(DomainError):
            solve_lambda(100, 1, 10, constant_q_function(1.5))

    def test_nothing_initiated(self):
        assert solve_lambda(100, 0.0, 10, constant_q_function(0.5)) == 0.0

    @pytest.mark.parametrize("change", [{"nu": 0.2}, {"tau": 5.0}])
    def test_monotone_in_nu_and_tau(self, change):
        q_fn = load_q_function(IdentityG(), nbar_r=20, n=256)
        base = {"n": 256, "nu": 0.1, "tau": 50.0}
        lam = solve_lambda(q_prime_fn=q_fn, **base)
        moved = solve_lambda(q_prime_fn=q_fn, **{**base, **change})
        assert moved > lam


class TestXi:
    def test_from_rates(self):
        assert xi_from_rates(1, 1) == 1.0
        assert xi_from_rates(0.1, 0.5) == pytest.approx(20.0)
        with pytest.raises(DivergenceError):
            xi_from_rates(0.1, 0.0)

    def test_matches_simulated_attempts(self):
        gen = rng.stream(0, 103)
        attempts = gen.geometric(0.5, size=10 ** 5)
        # each attempt waits a geometric number of slots with mean 1 / nu
        waits = attempts + gen.negative_binomial(attempts, 0.1)
        assert waits.mean() == pytest.approx(xi_from_rates(0.1, 0.5), rel=0.02)

    def test_reference(self):
        assert xi_reference(IdentityG(), 100) == pytest.approx(100.0)
        assert xi_reference(StepRepairG(), 100) == 1.0
        sqrt_targets = KTargetG(coeff=1.0, power=0.5)
        assert xi_reference(sqrt_targets, 10 ** 4) == pytest.approx(100.5, rel=1e-3)

    def test_reference_of_a_flat_model_diverges(self):
        flat = TableG(((0, 0), (0.5, 0), (1, 1)))
        with pytest.raises(DivergenceError):
            xi_reference(flat, 100)

    def test_rates_close_the_loop(self):
        q_fn = load_q_function(IdentityG(), nbar_r=20, n=256)
        rates = rdp_rates(256, 0.1, 50, 0.5, q_fn)
        q_prime = scheme_a_qprime(q_fn, rates.lam, 0.5)
        assert rates.q_prime == pytest.approx(q_prime)
        assert rates.xi == pytest.approx(xi_from_rates(0.1, q_prime), rel=1e-6)
        assert rates.lam == pytest.approx(25.6 / (1 + q_prime * 5), rel=1e-6)
        assert rates.n_avg == pytest.approx(1 / q_prime)

    def test_bounds_bracket_faster_and_slower(self):
        lower, _, upper = xi_bounds(IdentityG(), 256, 0.1, 50, 0.5, nbar_r=20)
        assert lower <= upper


def test_empirical_gmodel_is_monotone_and_above_the_diagonal():
    gen = rng.stream(0, 104)
    reach = gen.random(2000)
    success = gen.random(2000) < np.sqrt(reach)
    model = empirical_gmodel(zip(reach, success))
    lattice = np.linspace(0, 1, 101)
    values = g_eval(model, lattice)
    assert values[0] == 0.0
    assert values[-1] == 1.0
    assert np.all(np.diff(values) >= 0)
    assert np.all(values >= lattice - 1e-12)


def test_empirical_gmodel_needs_samples():
    with pytest.raises(DomainError):
        empirical_gmodel([])


def test_table_q_function_clamps():
    q_fn = table_q_function([(1.0, 0.9), (3.0, 0.5)])
    assert q_fn(2.0) == pytest.approx(0.7)
    assert q_fn(0.0) == 0.9
    assert q_fn(10.0) == 0.5
