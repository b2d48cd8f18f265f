import json

import pandas as pd
import pytest

from adhoc_capacity.config import ConstantTau, InverseSqrtTau, NetworkConfig
from adhoc_capacity.errors import InvalidConfigError, SweepFailedError
from adhoc_capacity.harness.experiment import (
    ExperimentSpec,
    MetricsAppender,
    aggregate,
    derive_seed,
    load_spec,
    run_sweep,
)
from adhoc_capacity.rdp.analysis import KTargetG, StepRepairG
from adhoc_capacity.simulate import METRIC_COLUMNS

from .conftest import stub_metrics


@pytest.fixture
def spec(tmp_path):
    return ExperimentSpec(
        base=NetworkConfig(seed=7),
        n_values=(64, 128, 256),
        replications=2,
        horizon_slots=1000,
        output_dir=str(tmp_path / "sweeps"),
    )


class TestSpec:
    @pytest.mark.parametrize(
        "changes",
        [{"n_values": (64, 128)}, {"n_values": (64, 64, 128)}, {"n_values": (1, 64, 128)},
         {"replications": 0}, {"scenario": "example9"}, {"horizon_slots": 500}],
    )
    def test_invalid(self, changes):
        kw = {"n_values": (64, 128, 256), **changes}
        with pytest.raises(InvalidConfigError):
            ExperimentSpec(**kw)

    def test_presets_set_the_models(self):
        tau_model, gmodel = ExperimentSpec(scenario="example2").models
        assert tau_model == InverseSqrtTau(2000.0)
        assert gmodel == KTargetG(coeff=1.0, power=0.5)
        assert ExperimentSpec(scenario="example3").models[1] == StepRepairG()

    def test_custom_keeps_the_base_models(self):
        base = NetworkConfig(tau_model=ConstantTau(7.0))
        assert ExperimentSpec(base=base, scenario="custom").models[0] == ConstantTau(7.0)

    def test_points_get_their_own_seeds(self, spec):
        config = spec.network(128, 1)
        assert config.n == 128
        assert config.seed == derive_seed(7, 128, 1)
        assert config.seed != spec.network(128, 0).seed

    def test_hash_ignores_the_output_directory(self, spec):
        moved = ExperimentSpec(**{**spec.__dict__, "output_dir": "elsewhere"})
        assert moved.spec_hash == spec.spec_hash
        more = ExperimentSpec(**{**spec.__dict__, "replications": 3})
        assert more.spec_hash != spec.spec_hash

    def test_from_flat_mapping(self):
        spec = ExperimentSpec.from_mapping(
            {"n_values": "100, 200,400", "replications": "3", "nu": "0.05",
             "scenario": "example3"}
        )
        assert spec.n_values == (100, 200, 400)
        assert spec.replications == 3
        assert spec.base.nu == 0.05

    def test_unknown_key(self):
        with pytest.raises(InvalidConfigError, match="replicas"):
            ExperimentSpec.from_mapping({"n_values": "100,200,400", "replicas": 3})

    def test_load_spec(self, tmp_path):
        path = tmp_path / "sweep.properties"
        path.write_text(
            "# example sweep\n"
            "n_values=256,1024,4096\n"
            "scenario=custom\n"
            "tau_model=constant:20\n"
            "gmodel=k_target:2\n"
        )
        spec = load_spec(path)
        assert spec.n_values == (256, 1024, 4096)
        assert spec.models == (ConstantTau(20.0), KTargetG(coeff=2.0))


def test_derive_seed_is_stable():
    assert derive_seed(0, 256, 0) == derive_seed(0, 256, 0)
    seeds = {derive_seed(0, n, rep) for n in (256, 512) for rep in range(4)}
    assert len(seeds) == 8
    assert all(0 <= s < 2 ** 64 for s in seeds)


def test_sweep_persists_its_record(spec, fast_simulation, tmp_path):
    record = run_sweep(spec, workers=1)
    assert fast_simulation.call_count == 6
    assert len(record.metrics) == 6
    assert record.failures == []
    assert record.fits["throughput"].slope == pytest.approx(-1.0)

    out = tmp_path / "sweeps" / record.spec_hash[:12]
    metrics = pd.read_csv(out / "metrics.csv")
    assert list(metrics.columns) == METRIC_COLUMNS
    assert list(metrics["n"]) == [64, 64, 128, 128, 256, 256]
    with open(out / "record.json") as f:
        saved = json.load(f)
    assert saved["spec_hash"] == record.spec_hash
    assert saved["generator"] == "numpy.PCG64"
    assert len(saved["seeds"]) == 6
    assert saved["acceptance"]["dormancy_violations"] == 0
    assert saved["acceptance"]["interference_ok"] is True


def test_a_crashing_point_is_isolated(spec, mocker):
    def flaky(config, horizon_slots):
        if config.n == 128:
            raise RuntimeError("boom")
        return stub_metrics(config, horizon_slots)

    mocker.patch("adhoc_capacity.harness.experiment.run_simulation", side_effect=flaky)
    record = run_sweep(spec, workers=1, persist=False)
    assert sorted(record.metrics["n"].unique()) == [64, 256]
    assert [(f["n"], f["replication"]) for f in record.failures] == [(128, 0), (128, 1)]
    assert "boom" in record.failures[0]["error"]
    # two sizes left, too few for a fit
    assert record.fits["throughput"] is None


def test_finished_points_are_on_disk_before_the_sweep_ends(spec, mocker, tmp_path):
    def flaky(config, horizon_slots):
        if config.n == 256:
            raise RuntimeError("boom")
        return stub_metrics(config, horizon_slots)

    mocker.patch("adhoc_capacity.harness.experiment.run_simulation", side_effect=flaky)
    mocker.patch(
        "adhoc_capacity.harness.experiment.classify_regime",
        side_effect=RuntimeError("interrupted"),
    )
    with pytest.raises(RuntimeError, match="interrupted"):
        run_sweep(spec, workers=1)

    out = tmp_path / "sweeps" / spec.spec_hash[:12]
    metrics = pd.read_csv(out / "metrics.csv")
    assert list(metrics.columns) == METRIC_COLUMNS
    assert sorted(metrics["n"]) == [64, 64, 128, 128]
    assert not (out / "record.json").exists()


def test_metrics_appender_writes_one_header(tmp_path):
    path = tmp_path / "run" / "metrics.csv"
    path.parent.mkdir()
    path.write_text("stale\n")
    append = MetricsAppender(path)
    for n in (64, 32):
        append(stub_metrics(NetworkConfig(n=n), 1000).to_row())
    metrics = pd.read_csv(path)
    assert list(metrics["n"]) == [64, 32]
    assert append.rows == 2


def test_nothing_succeeds(spec, failing_simulation):
    with pytest.raises(SweepFailedError):
        run_sweep(spec, workers=1, persist=False)


def test_aggregate_takes_medians():
    metrics = pd.DataFrame(
        [{**{c: 1.0 for c in METRIC_COLUMNS}, "n": n, "throughput_per_node": t}
         for n, t in [(10, 1.0), (10, 3.0), (10, 2.0), (20, 5.0)]]
    )
    summary = aggregate(metrics).set_index("n")
    assert summary.loc[10, "throughput_per_node_median"] == 2.0
    assert summary.loc[10, "throughput_per_node_min"] == 1.0
    assert summary.loc[10, "throughput_per_node_max"] == 3.0
    assert summary.loc[10, "replications"] == 3
    assert summary.loc[20, "replications"] == 1


def test_real_sweeps_are_reproducible(tmp_path):
    spec = ExperimentSpec(
        base=NetworkConfig(seed=3, calibration_floods=3, rate_bisection_steps=2),
        n_values=(32, 48, 64),
        replications=1,
        horizon_slots=1000,
        output_dir=str(tmp_path),
    )
    first = run_sweep(spec, workers=1, persist=False).metrics
    second = run_sweep(spec, workers=1, persist=False).metrics
    pd.testing.assert_frame_equal(first, second)
