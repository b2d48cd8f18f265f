from kedro.pipeline import Pipeline, node

from .nodes import (
    build_spec,
    metrics_table,
    record_summary,
    reference_table,
    run_experiment,
    summary_table,
)


def create_pipeline(**kwargs) -> Pipeline:
    return Pipeline(
        [
            node(build_spec, "params:sweep", "sweep_spec", name="build_spec"),
            node(
                run_experiment,
                ["sweep_spec", "params:workers"],
                "sweep_record",
                name="run_experiment",
            ),
            node(metrics_table, "sweep_record", "sweep_metrics", name="metrics_table"),
            node(summary_table, "sweep_record", "sweep_summary", name="summary_table"),
            node(record_summary, "sweep_record", "sweep_record_json", name="record_summary"),
            node(reference_table, "sweep_spec", "reference_curves", name="reference_table"),
        ]
    )
