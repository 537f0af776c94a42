"""Multi-UAV LoRa gateway placement and link configuration with MAPPO."""
from .config import ScenarioConfig, TrainConfig, desk_scenario, load_config
from .env import ActionCommand, LoraUavEnv
from .harness import export_trajectories, run_experiment
from .mappo import Mappo, train
from .scenario import Scenario, generate_scenario, load_scenario, save_scenario

__version__ = "0.1.0"

__all__ = [
    "ActionCommand", "LoraUavEnv", "Mappo", "Scenario", "ScenarioConfig", "TrainConfig", "desk_scenario",
    "export_trajectories", "generate_scenario", "load_config", "load_scenario", "run_experiment", "save_scenario",
    "train",
]
