"""Configuration, data ingestion, scenario runners and the command line."""

from .config import ScenarioConfig, load_config
from .data import IdxFormatError, generate_synthetic, load_idx_and_pca, read_idx
from .scenarios import PRESETS, bound_sweep, build_instance, empirical_sweep, regime_map, run_scenario
