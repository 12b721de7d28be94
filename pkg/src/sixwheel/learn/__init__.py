from .gae import gae, gae_simple
from .nn import Adam, Chain, Linear, Tanh, orthogonal
from .policy import PolicyNet, log_prob, sample_action
from .ppo import UpdateStats, ppo_update
from .train import TrainResult, evaluate, evaluate_scenario, train

__all__ = ["Adam", "Chain", "Linear", "Tanh", "orthogonal", "gae", "gae_simple",
           "PolicyNet", "log_prob", "sample_action", "UpdateStats", "ppo_update",
           "TrainResult", "evaluate", "evaluate_scenario", "train"]
