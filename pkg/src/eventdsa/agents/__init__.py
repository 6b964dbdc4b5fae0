from .baselines import aloha_actions, tdma_actions
from .controllers import (
    AlohaController,
    Controller,
    IdqnController,
    MadspgController,
    TdmaController,
    make_controller,
)
from .encoding import ActionIndexing, HistoryWindow
from .idqn import IdqnAgent, epsilon_decay, idqn_select_action, idqn_update
from .madspg import MadspgAgent, madspg_actor_update, madspg_critic_update, madspg_sample_action
from .replay import Minibatch, ReplayBuffer

__all__ = [
    "ActionIndexing",
    "AlohaController",
    "Controller",
    "HistoryWindow",
    "IdqnAgent",
    "IdqnController",
    "MadspgAgent",
    "MadspgController",
    "Minibatch",
    "ReplayBuffer",
    "TdmaController",
    "aloha_actions",
    "epsilon_decay",
    "idqn_select_action",
    "idqn_update",
    "madspg_actor_update",
    "madspg_critic_update",
    "madspg_sample_action",
    "make_controller",
    "tdma_actions",
]
