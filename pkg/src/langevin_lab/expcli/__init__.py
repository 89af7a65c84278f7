"""Config-driven experiment runner: TOML configs in, CSV/JSONL/binary outputs and manifests out."""

from .catalog import catalog_config, catalog_names
from .compare import compare_runs
from .config import ExperimentConfig, config_hash, load_config, parse_config
from .plots import emit_plots
from .runner import OUTPUT_ROOT_ENV, RunManifest, run_experiment
