"""Configuration, convergence studies, verification and the command line."""

from .config import ExperimentConfig, load_config, load_preset, parse_config, preset_names
from .experiment import ConvergenceRecord, emit_outputs, fit_rate, run_experiment
from .verify import verify_suite
