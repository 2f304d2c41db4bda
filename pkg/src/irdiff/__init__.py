"""irdiff: conditional diffusion for on-chip supply-drop map generation.

Synthesizes power-grid benchmark designs, solves their ground-truth voltage
drop, and trains a conditional denoising diffusion model on feature-map and
netlist-graph conditioning.
"""

from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .design import GenConfig, SyntheticDesign, generate_design
from .diffusion import NoiseSchedule, TrainConfig, make_schedule
from .features import CHANNEL_NAMES, FeatureStack, build_feature_stack
from .graph import DesignGraph, build_graph, netlist_from_design
from .metrics import EvalReport, evaluate_all, evaluate_pair
from .model import ConditionalDenoiser, ModelConfig
from .pdn import ground_truth, solve_ir
from .rng import Rng
from .tensorio import read_gift, write_gift

__version__ = "0.1.0"

__all__ = [
    "CHANNEL_NAMES",
    "ConditionalDenoiser",
    "ConfigError",
    "DesignGraph",
    "EvalReport",
    "ExperimentConfig",
    "FeatureStack",
    "GenConfig",
    "ModelConfig",
    "NoiseSchedule",
    "Rng",
    "SyntheticDesign",
    "TrainConfig",
    "build_feature_stack",
    "build_graph",
    "config_from_dict",
    "evaluate_all",
    "evaluate_pair",
    "generate_design",
    "ground_truth",
    "load_config",
    "make_schedule",
    "netlist_from_design",
    "read_gift",
    "solve_ir",
    "write_gift",
    "__version__",
]
