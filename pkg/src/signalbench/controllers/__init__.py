"""Signal-control policies. Each exposes ``reset()`` and ``next_directive(sim)``."""

from .a2c import (
    A2cAgent, A2cConfig, ActorCritic, a2c_advantage, a2c_gradients, a2c_sync, a2c_train, a2c_update,
)
from .dqn import DqnAgent, DqnConfig, dqn_reward, dqn_select_action, dqn_train, q_target
from .monopoly import Monopoly, MonopolyConfig, MonopolyObservation, monopoly_best_action
from .rr import RoundRobin, RrConfig

CONTROLLERS = ("rr", "monopoly", "dqn", "a2c")
LEARNED = ("dqn", "a2c")

__all__ = [
    "A2cAgent", "A2cConfig", "ActorCritic", "a2c_advantage", "a2c_gradients", "a2c_sync", "a2c_train",
    "a2c_update", "DqnAgent", "DqnConfig", "dqn_reward", "dqn_select_action", "dqn_train", "q_target",
    "Monopoly", "MonopolyConfig", "MonopolyObservation", "monopoly_best_action", "RoundRobin", "RrConfig",
    "CONTROLLERS", "LEARNED",
]
