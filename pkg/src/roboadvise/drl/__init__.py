"""Deep deterministic policy gradient agent for the multi-period mean-variance problem."""

from .agent import (
    Policy,
    TrainConfig,
    hyperparameter_search,
    init_policy,
    load_policy,
    policy_from_dict,
    policy_to_dict,
    save_policy,
    train,
    universal_episode_sampler,
    validation_sharpe,
    write_training_log,
)
from .networks import (
    NetworkParams,
    actor_forward,
    actor_gradients,
    critic_forward,
    critic_gradients,
    init_network,
    polyak,
    softmax,
)
from .replay import Batch, ReplayBuffer

__all__ = [
    "NetworkParams",
    "Policy",
    "TrainConfig",
    "Batch",
    "ReplayBuffer",
    "actor_forward",
    "actor_gradients",
    "critic_forward",
    "critic_gradients",
    "hyperparameter_search",
    "init_network",
    "init_policy",
    "load_policy",
    "policy_from_dict",
    "policy_to_dict",
    "polyak",
    "save_policy",
    "softmax",
    "train",
    "universal_episode_sampler",
    "validation_sharpe",
    "write_training_log",
]
