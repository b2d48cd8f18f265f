"""Nodes of the sweep pipeline."""
import json
import logging
from typing import Any, Dict, Optional

import pandas as pd

from ...analysis import reference_curves
from ...harness.experiment import ExperimentSpec, RunRecord, run_sweep
from ...simulate import METRIC_COLUMNS

logger = logging.getLogger(__name__)


def build_spec(sweep: Dict[str, Any]) -> ExperimentSpec:
    """Turn the ``sweep`` parameter block into an ExperimentSpec."""
    spec = ExperimentSpec.from_mapping(sweep)
    logger.info("sweep spec %s (%s)", spec.spec_hash[:12], spec.scenario)
    return spec


def run_experiment(spec: ExperimentSpec, workers: Optional[int]) -> RunRecord:
    # the catalog persists the outputs
    return run_sweep(spec, workers=workers, persist=False)


def metrics_table(record: RunRecord) -> pd.DataFrame:
    return record.metrics[METRIC_COLUMNS]


def summary_table(record: RunRecord) -> pd.DataFrame:
    return record.summary


def record_summary(record: RunRecord) -> Dict[str, Any]:
    """Fits, verdict, acceptance checks and provenance, as plain JSON."""
    return json.loads(json.dumps(record.to_json_dict(), default=str))


def reference_table(spec: ExperimentSpec) -> pd.DataFrame:
    tau_model, gmodel = spec.models
    return reference_curves(spec.n_values, spec.base.w, tau_model, gmodel)
