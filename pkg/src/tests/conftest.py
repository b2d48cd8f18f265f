import pytest

from adhoc_capacity.simulate import Metrics


def stub_metrics(config, horizon_slots):
    """Metrics shaped like a sweep point whose throughput falls as 1 / n."""
    return Metrics(
        n=config.n,
        seed=config.seed,
        throughput_per_node=1.0 / config.n,
        xi_measured=10.0,
        tau_measured=50.0,
        active_fraction=50.0 / 60.0,
        lambda_measured=1.0,
        q_measured=0.5,
        delivered_bits=100.0,
        offered_rate=0.1,
        delivery_ratio=1.0,
        nbar_r=5.0,
        mean_reach=0.5,
        gamma_hat=1.0,
        schedule_period=4,
        data_collisions=0,
    )


@pytest.fixture
def fast_simulation(mocker):
    """Replace the simulator of the sweep harness by ``stub_metrics``."""
    return mocker.patch(
        "adhoc_capacity.harness.experiment.run_simulation", side_effect=stub_metrics
    )


@pytest.fixture
def failing_simulation(mocker):
    return mocker.patch(
        "adhoc_capacity.harness.experiment.run_simulation",
        side_effect=RuntimeError("simulator crashed"),
    )
