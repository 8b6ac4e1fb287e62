from .agent import CheckpointError, RainbowAgent, project_distribution
from .network import NoisyLinear, RainbowQNetwork
from .replay import NStepAssembler, PrioritizedReplay, SumMinTree, Transition

__all__ = [
    "CheckpointError", "NStepAssembler", "NoisyLinear", "PrioritizedReplay",
    "RainbowAgent", "RainbowQNetwork", "SumMinTree", "Transition",
    "project_distribution",
]
