"""Virtual-audience learning stack: corridor env, rewards, policy, training."""

from .env import AgentAction, AudienceEnv, EnvError, InvalidScene, StepBeforeReset
from .layout import CorridorLayout, corridor_layout
from .policy import PolicyNetwork, load_policy, save_policy
from .rewards import RewardConfig, episode_reward_oracle
from .training import (
    Adam,
    DemonstrationSet,
    DivergenceDetected,
    EmptyCandidates,
    EmptyDemos,
    RolloutResult,
    TrainingRun,
    bc_train,
    compute_gae,
    demos_from_traces,
    expert_demonstrations,
    ppo_surrogate,
    ppo_train,
    rollout,
    rollout_group,
    scripted_expert_episode,
    select_models,
    training_stats_csv,
)

__all__ = [
    "AgentAction",
    "AudienceEnv",
    "EnvError",
    "InvalidScene",
    "StepBeforeReset",
    "CorridorLayout",
    "corridor_layout",
    "PolicyNetwork",
    "load_policy",
    "save_policy",
    "RewardConfig",
    "episode_reward_oracle",
    "Adam",
    "DemonstrationSet",
    "DivergenceDetected",
    "EmptyCandidates",
    "EmptyDemos",
    "RolloutResult",
    "TrainingRun",
    "bc_train",
    "compute_gae",
    "demos_from_traces",
    "expert_demonstrations",
    "ppo_surrogate",
    "ppo_train",
    "rollout",
    "rollout_group",
    "scripted_expert_episode",
    "select_models",
    "training_stats_csv",
]
