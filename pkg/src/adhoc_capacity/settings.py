"""Project settings. Only the config loader is set; Kedro defaults cover
the rest (conf/base plus conf/local)."""
from kedro.config import OmegaConfigLoader

CONFIG_LOADER_CLASS = OmegaConfigLoader
