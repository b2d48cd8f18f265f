from .experiment import ExperimentSpec, RunRecord, derive_seed, load_spec, run_sweep
from .presets import scenario_presets

__all__ = ["ExperimentSpec", "RunRecord", "derive_seed", "load_spec", "run_sweep",
           "scenario_presets"]
