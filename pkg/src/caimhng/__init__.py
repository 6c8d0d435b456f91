"""Two-agent grid-world planning with control as inference and naming-game messages."""

from .cai import DegenerateForward, DegeneratePlan, MessagePotential, PlanTables
from .coordinator import JointPlan, Metrics, evaluate, plan_with_communication
from .env import Action, AgentSpec, Grid, JointEpisode
from .experiment import ExperimentConfig, run_pipeline
from .mhng import MessageModel

__all__ = [
    "Action", "AgentSpec", "DegenerateForward", "DegeneratePlan", "ExperimentConfig", "Grid",
    "JointEpisode", "JointPlan", "MessageModel", "MessagePotential", "Metrics", "PlanTables",
    "evaluate", "plan_with_communication", "run_pipeline",
]
