"""Process data: the built-in CSTR + separator simulator, windowed datasets, TEP CSV ingestion."""

from .dataset import (NORMAL, Dataset, Run, WindowIndex, extract_windows, generate_dataset, load_dataset,
                      save_dataset, standardization_stats)
from .process import (ARCHETYPES, BOUNDARY_NOMINAL, CHANNEL_UNITS, CHANNELS, MANIPULATED, MEASURED,
                      SIM_SCENARIOS, STATE_NAMES, STEP_SCENARIOS, FaultScenario, PIController, ProcessParams,
                      ProcessSpec, SimulationResult, default_process_spec, simulate, steady_state)
from .tep import TEP_SCHEMAS, idv_label, ingest_tep_csv, ingest_tep_files, read_tep_csv, tep_channels

__all__ = [
    "NORMAL", "Dataset", "Run", "WindowIndex", "extract_windows", "generate_dataset", "load_dataset",
    "save_dataset", "standardization_stats",
    "ARCHETYPES", "BOUNDARY_NOMINAL", "CHANNEL_UNITS", "CHANNELS", "MANIPULATED", "MEASURED", "SIM_SCENARIOS",
    "STATE_NAMES", "STEP_SCENARIOS", "FaultScenario", "PIController", "ProcessParams", "ProcessSpec",
    "SimulationResult", "default_process_spec", "simulate", "steady_state",
    "TEP_SCHEMAS", "idv_label", "ingest_tep_csv", "ingest_tep_files", "read_tep_csv", "tep_channels",
]
