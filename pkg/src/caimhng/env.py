"""Deterministic two-agent grid world.

Cells are addressed either by a flat state index or by ``(row, col)`` with
the origin at the lower-left cell, so index = row * width + col. Moves that
would leave the grid are masked; there is no stay action.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .dist import ConditionalTable

INDIVIDUAL_GOAL = 1.0
INDIVIDUAL_MISS = 1e-7


class MaskedActionError(ValueError):
    """An action was evaluated at a cell where it would leave the grid."""


class Action(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3

    @property
    def code(self) -> str:
        return "UDLR"[self]

    @classmethod
    def from_code(cls, code: str) -> "Action":
        return cls("UDLR".index(code))


N_ACTIONS = len(Action)
_DELTAS = {Action.UP: (1, 0), Action.DOWN: (-1, 0), Action.LEFT: (0, -1), Action.RIGHT: (0, 1)}


@dataclass(frozen=True)
class Grid:
    width: int = 4
    height: int = 2

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        if self.width * self.height < 2:
            raise ValueError("a single-cell grid admits no moves")

    @property
    def n_states(self) -> int:
        return self.width * self.height

    def index(self, row: int, col: int) -> int:
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise ValueError(f"cell ({row}, {col}) outside {self.height}x{self.width} grid")
        return row * self.width + col

    def coords(self, s: int) -> tuple[int, int]:
        self.check(s)
        return divmod(s, self.width)

    def check(self, s: int) -> int:
        if not 0 <= s < self.n_states:
            raise ValueError(f"state {s} outside grid")
        return s


@dataclass(frozen=True)
class AgentSpec:
    name: str
    start: int
    goal: int

    def validate(self, grid: Grid) -> "AgentSpec":
        grid.check(self.start)
        grid.check(self.goal)
        return self


@dataclass(frozen=True)
class JointEpisode:
    """States, actions and the joint optimality outcome at each step.

    Entry t holds the agents' states at step t and the actions they take
    from there; ``o_m[t]`` is 0 exactly when the agents share a cell.
    """
    s_a: np.ndarray
    a_a: np.ndarray
    s_b: np.ndarray
    a_b: np.ndarray
    o_m: np.ndarray

    def __len__(self) -> int:
        return len(self.s_a)


def transition(g: Grid, s: int, a: Action) -> int | None:
    """Cell reached by taking ``a`` in ``s``, or None if the move is off-grid."""
    row, col = g.coords(s)
    dr, dc = _DELTAS[Action(a)]
    row, col = row + dr, col + dc
    if 0 <= row < g.height and 0 <= col < g.width:
        return row * g.width + col
    return None


@dataclass(frozen=True)
class Dynamics:
    """Successor lookup plus the dense p(s'|s,a) table (rows indexed s*4+a)."""
    next_state: np.ndarray  # (S, A), -1 where masked
    valid: np.ndarray       # (S, A) bool

    @property
    def n_states(self) -> int:
        return self.next_state.shape[0]

    @property
    def table(self) -> ConditionalTable:
        S, A = self.next_state.shape
        rows = np.zeros((S * A, S))
        flat = self.next_state.ravel()
        ok = flat >= 0
        rows[np.flatnonzero(ok), flat[ok]] = 1.0
        return ConditionalTable(rows, mask=ok)

    @property
    def dense(self) -> np.ndarray:
        """p(s'|s,a) as an (S, A, S) array; masked pairs are all zero."""
        S = self.n_states
        return self.table.rows.reshape(S, N_ACTIONS, S)

    def action_prior(self) -> np.ndarray:
        """Uniform p(a|s) over the valid actions of each state."""
        return self.valid / self.valid.sum(axis=1, keepdims=True)


def transition_table(g: Grid) -> Dynamics:
    nxt = np.full((g.n_states, N_ACTIONS), -1, dtype=int)
    for s in range(g.n_states):
        for a in Action:
            s2 = transition(g, s, a)
            if s2 is not None:
                nxt[s, a] = s2
    return Dynamics(next_state=nxt, valid=nxt >= 0)


def individual_optimality(g: Grid, goal: int, s: int, a: Action) -> float:
    s2 = transition(g, s, a)
    if s2 is None:
        raise MaskedActionError(f"action {Action(a).name} leaves the grid from state {s}")
    return INDIVIDUAL_GOAL if s2 == goal else INDIVIDUAL_MISS


def optimality_table(g: Grid, goal: int) -> np.ndarray:
    """p(o=1|s,a) for every pair; masked pairs hold 0."""
    g.check(goal)
    dyn = transition_table(g)
    opt = np.where(dyn.next_state == goal, INDIVIDUAL_GOAL, INDIVIDUAL_MISS)
    return np.where(dyn.valid, opt, 0.0)


def joint_optimality(s: int, s_other: int) -> int:
    return 0 if s == s_other else 1


def random_walk(g: Grid, starts: tuple[int, int], steps: int,
                rng: np.random.Generator) -> JointEpisode:
    """Both agents take uniformly random valid actions for ``steps`` steps."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    dyn = transition_table(g)
    out = {k: np.empty(steps, dtype=int) for k in ("s_a", "a_a", "s_b", "a_b", "o_m")}
    cur = [g.check(starts[0]), g.check(starts[1])]
    for t in range(steps):
        out["s_a"][t], out["s_b"][t] = cur
        out["o_m"][t] = joint_optimality(cur[0], cur[1])
        for i, key in enumerate(("a_a", "a_b")):
            choices = np.flatnonzero(dyn.valid[cur[i]])
            a = int(choices[rng.integers(len(choices))])
            out[key][t] = a
            cur[i] = int(dyn.next_state[cur[i], a])
    return JointEpisode(**out)
