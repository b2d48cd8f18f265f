"""Construction of the master pipeline."""
from typing import Dict

from kedro.pipeline import Pipeline

from .pipelines import sweep


def register_pipelines() -> Dict[str, Pipeline]:
    """Register the project's pipelines.

    Returns
    -------
    dict
        A mapping from a pipeline name to a ``Pipeline`` object.
    """
    sweep_pipeline = sweep.create_pipeline()
    return {"__default__": sweep_pipeline, "sweep": sweep_pipeline}
