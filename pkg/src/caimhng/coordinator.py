"""Alternate per-agent planning with naming-game communication."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cai
from .cai import DegeneratePlan, MessagePotential
from .dist import AllZeroError, substream
from .env import AgentSpec, Grid, optimality_table, transition_table
from .mhng import MessageModel, communicate

# substream keys: (PLAN_PHASE, round, role)
PLAN_PHASE = 2
AGENT_A, AGENT_B, COMM = 0, 1, 2


@dataclass(frozen=True)
class RoundRecord:
    messages: np.ndarray | None  # m* used for this round's potentials; None in round 0
    states_a: np.ndarray
    actions_a: np.ndarray
    states_b: np.ndarray
    actions_b: np.ndarray


@dataclass
class JointPlan:
    history: list[RoundRecord] = field(default_factory=list)

    @property
    def final(self) -> RoundRecord:
        return self.history[-1]

    @property
    def C(self) -> int:
        return len(self.history) - 1

    def upto(self, c: int) -> "JointPlan":
        """The plan that stopping after ``c`` rounds would have produced."""
        return JointPlan(self.history[: c + 1])


@dataclass(frozen=True)
class Metrics:
    collisions: int
    goal_a: int
    goal_b: int


def plan_agent(grid: Grid, model: MessageModel | None, spec: AgentSpec, messages, T: int,
               rng: np.random.Generator, decode_mode: str = "sample",
               state_sample_mode: str = "path"):
    """Plan one agent from its own model, its own spec and the shared messages.

    Returns (states, actions, s_star).
    """
    dyn = transition_table(grid)
    opt = optimality_table(grid, spec.goal)
    if messages is None:
        pot = MessagePotential.uniform(T, grid.n_states)
    else:
        pot = MessagePotential.from_messages(model.likelihood, messages)
    tables = cai.plan(dyn, opt, pot, spec.start, T)
    states, actions = cai.decode_plan(tables.log_q, dyn, spec.start, T, rng,
                                      greedy=decode_mode == "greedy")
    s_star = cai.sample_states(tables, states, state_sample_mode, rng)
    return states, actions, s_star


def plan_with_communication(models: tuple[MessageModel, MessageModel], grid: Grid,
                            specs: tuple[AgentSpec, AgentSpec], T: int, C: int, sweeps: int,
                            seed: int, decode_mode: str = "sample",
                            state_sample_mode: str = "path",
                            messages: np.ndarray | None = None) -> JointPlan:
    """Round 0 plans without messages; rounds 1..C communicate, then replan.

    Every round draws from fresh substreams keyed by (round, agent), so a
    run with C rounds is a prefix of any longer run with the same seed.
    Passing ``messages`` freezes m* instead of running the naming game.
    """
    if T < 1 or C < 0:
        raise ValueError("need T >= 1 and C >= 0")
    model_a, model_b = models
    plan = JointPlan()
    m_star = None
    for c in range(C + 1):
        if c > 0:
            if messages is not None:
                m_star = np.asarray(messages, dtype=int)
            else:
                comm_rng = substream(seed, PLAN_PHASE, c, COMM)
                if m_star is None:
                    m_star = comm_rng.integers(model_a.K, size=T)
                try:
                    m_star = communicate(model_a, model_b, s_star_a, s_star_b, m_star, sweeps,
                                         comm_rng)
                except AllZeroError as exc:
                    raise DegeneratePlan(f"no message supports a planned state: {exc}",
                                         round=c) from exc
        try:
            sa, aa, s_star_a = plan_agent(grid, model_a, specs[0], m_star, T,
                                          substream(seed, PLAN_PHASE, c, AGENT_A), decode_mode,
                                          state_sample_mode)
            sb, ab, s_star_b = plan_agent(grid, model_b, specs[1], m_star, T,
                                          substream(seed, PLAN_PHASE, c, AGENT_B), decode_mode,
                                          state_sample_mode)
        except DegeneratePlan as exc:
            raise DegeneratePlan(str(exc), round=c) from exc
        plan.history.append(RoundRecord(None if m_star is None else m_star.copy(), sa, aa, sb, ab))
    return plan


def evaluate(plan: JointPlan | RoundRecord, specs: tuple[AgentSpec, AgentSpec]) -> Metrics:
    rec = plan.final if isinstance(plan, JointPlan) else plan
    return Metrics(
        collisions=int(np.sum(rec.states_a == rec.states_b)),
        goal_a=int(np.sum(rec.states_a == specs[0].goal)),
        goal_b=int(np.sum(rec.states_b == specs[1].goal)),
    )
