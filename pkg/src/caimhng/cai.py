"""Control-as-inference planning for a single agent with a message potential.

Every successor state is reweighted by the message's state likelihood
p(s|m*_t), a product of experts with the dynamics. The backward pass gives
q_t(s,a) and v_t(s) in log space. The forward pass filters alpha_t(s). The
marginals are gamma_t(s) proportional to v_t(s) * alpha_t(s).

Time index t = 1..T maps to array index t-1. ``log_v`` carries one extra
row for the terminal condition v_{T+1} = 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .dist import LOG_FLOOR, AllZeroError, argmax, log_normalize, normalize, safe_log, sample
from .env import Dynamics


class DegeneratePlan(RuntimeError):
    """No trajectory from the start state carries optimality mass."""

    def __init__(self, msg: str, round: int | None = None):
        super().__init__(msg if round is None else f"round {round}: {msg}")
        self.round = round


class DegenerateForward(DegeneratePlan):
    """The message potential excludes every reachable state at some step."""


@dataclass(frozen=True)
class MessagePotential:
    """p(s_t | m*_t) for t = 1..T; ``rows is None`` means uniform."""
    T: int
    n_states: int
    rows: np.ndarray | None = None

    def __post_init__(self):
        if self.rows is not None:
            if self.rows.shape != (self.T, self.n_states):
                raise ValueError(f"potential must be ({self.T}, {self.n_states})")
            sums = self.rows.sum(axis=1)
            if np.any(self.rows < 0) or not np.allclose(sums, 1.0, rtol=0, atol=1e-9):
                raise ValueError("every potential row must be a categorical")

    @classmethod
    def uniform(cls, T: int, n_states: int) -> "MessagePotential":
        return cls(T, n_states)

    @classmethod
    def from_messages(cls, likelihood, messages) -> "MessagePotential":
        rows = np.asarray(likelihood)[np.asarray(messages)]
        return cls(len(rows), rows.shape[1], rows.copy())

    @property
    def is_uniform(self) -> bool:
        return self.rows is None

    def log_rows(self) -> np.ndarray:
        # the uniform potential contributes a factor of exactly one
        if self.rows is None:
            return np.zeros((self.T, self.n_states))
        return safe_log(self.rows)


@dataclass(frozen=True)
class PlanTables:
    log_q: np.ndarray   # (T, S, A); -inf on masked pairs
    log_v: np.ndarray   # (T + 1, S)
    alpha: np.ndarray   # (T, S)
    gamma: np.ndarray   # (T, S)

    @property
    def T(self) -> int:
        return self.log_q.shape[0]

    def policy(self, t: int) -> np.ndarray:
        """pi_t(a|s) proportional to q_t(s,a), rows over valid actions (t is 0-based)."""
        lq = self.log_q[t]
        with np.errstate(invalid="ignore"):
            return np.exp(lq - logsumexp(lq, axis=1, keepdims=True))


def _log_dense(dyn: Dynamics) -> np.ndarray:
    return safe_log(dyn.dense)


def backward_pass(dyn: Dynamics, opt: np.ndarray, pot: MessagePotential, T: int):
    """Return (log_q, log_v) for t = 1..T (plus the terminal row of log_v)."""
    if pot.T != T:
        raise ValueError("potential length must equal the horizon")
    S, A = dyn.valid.shape
    log_p = _log_dense(dyn)
    log_opt = np.where(dyn.valid, safe_log(np.where(dyn.valid, opt, 1.0)), -np.inf)
    log_prior = safe_log(dyn.action_prior())
    log_pot = pot.log_rows()
    # no message factor exists beyond the horizon
    log_pot = np.vstack([log_pot, np.zeros((1, S))])

    log_q = np.full((T, S, A), -np.inf)
    log_v = np.zeros((T + 1, S))
    with np.errstate(invalid="ignore", divide="ignore"):
        for t in range(T - 1, -1, -1):
            succ = log_v[t + 1] + log_pot[t + 1]
            cont = logsumexp(log_p + succ[None, None, :], axis=2)
            q = np.maximum(log_opt + cont, LOG_FLOOR)
            log_q[t] = np.where(dyn.valid, q, -np.inf)
            log_v[t] = np.maximum(logsumexp(log_q[t] + log_prior, axis=1), LOG_FLOOR)
    return log_q, log_v


def forward_pass(dyn: Dynamics, opt: np.ndarray, pot: MessagePotential,
                 alpha_1, T: int) -> np.ndarray:
    if pot.T != T:
        raise ValueError("potential length must equal the horizon")
    log_p = _log_dense(dyn)
    log_w = safe_log(dyn.action_prior() * np.where(dyn.valid, opt, 0.0))
    log_pot = pot.log_rows()
    alpha = np.zeros((T, dyn.n_states))
    alpha[0] = normalize(alpha_1)
    with np.errstate(invalid="ignore", divide="ignore"):
        for t in range(1, T):
            src = safe_log(alpha[t - 1])[:, None, None] + log_w[:, :, None] + log_p
            la = logsumexp(src.reshape(-1, dyn.n_states), axis=0) + log_pot[t]
            try:
                alpha[t] = log_normalize(la)
            except AllZeroError:
                raise DegenerateForward(f"forward filter vanished at t={t + 1}") from None
    return alpha


def state_marginals(log_v: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    T = alpha.shape[0]
    gamma = np.zeros_like(alpha)
    for t in range(T):
        try:
            gamma[t] = log_normalize(log_v[t] + safe_log(alpha[t]))
        except AllZeroError:
            raise DegeneratePlan(f"state marginal vanished at t={t + 1}") from None
    return gamma


def plan(dyn: Dynamics, opt: np.ndarray, pot: MessagePotential, start: int, T: int) -> PlanTables:
    """Run both passes from a known start state and combine them."""
    log_q, log_v = backward_pass(dyn, opt, pot, T)
    if log_v[0, start] <= LOG_FLOOR:
        raise DegeneratePlan(f"no optimal path mass from state {start}")
    alpha_1 = np.zeros(dyn.n_states)
    alpha_1[start] = 1.0
    alpha = forward_pass(dyn, opt, pot, alpha_1, T)
    return PlanTables(log_q, log_v, alpha, state_marginals(log_v, alpha))


def plan_free(dyn: Dynamics, opt: np.ndarray, start: int, T: int) -> PlanTables:
    """Plain CaI without any message factor, in linear space.

    Kept deliberately separate from ``plan`` so the two can be compared.
    """
    S = dyn.n_states
    P = dyn.dense
    prior = dyn.action_prior()
    opt = np.where(dyn.valid, opt, 0.0)
    q = np.zeros((T, S, dyn.valid.shape[1]))
    v = np.ones((T + 1, S))
    for t in range(T - 1, -1, -1):
        q[t] = opt * (P @ v[t + 1])
        v[t] = (prior * q[t]).sum(axis=1)
    alpha = np.zeros((T, S))
    alpha[0, start] = 1.0
    for t in range(1, T):
        alpha[t] = normalize(np.einsum("s,sa,san->n", alpha[t - 1], prior * opt, P))
    gamma = np.array([normalize(v[t] * alpha[t]) for t in range(T)])
    with np.errstate(divide="ignore"):
        log_q = np.where(dyn.valid, np.log(np.where(dyn.valid, q, 1.0)), -np.inf)
        return PlanTables(log_q, np.log(v), alpha, gamma)


def decode_plan(log_q: np.ndarray, dyn: Dynamics, start: int, T: int,
                rng: np.random.Generator | None = None, greedy: bool = False):
    """Roll out an executable path: a_t ~ q_t(s_t, .) (or argmax), s_{t+1} = T(s_t, a_t).

    Returns (states, actions), each of length T, with states[0] == start.
    """
    if not greedy and rng is None:
        raise ValueError("sampling decode needs an rng")
    states = np.empty(T, dtype=int)
    actions = np.empty(T, dtype=int)
    s = start
    for t in range(T):
        lq = log_q[t, s]
        if np.all(lq[dyn.valid[s]] <= LOG_FLOOR):
            raise DegeneratePlan(f"every action at t={t + 1} is at the floor")
        if greedy:
            a = argmax(lq)
        else:
            a = sample(log_normalize(lq), rng)
        states[t], actions[t] = s, a
        s = int(dyn.next_state[s, a])
    return states, actions


def sample_states(tables: PlanTables, path_states, mode: str = "path",
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """States handed to the naming game.

    ``path`` reuses the decoded executable path; ``marginal`` draws each
    s*_t independently from gamma_t.
    """
    if mode == "path":
        return np.asarray(path_states, dtype=int).copy()
    if mode == "marginal":
        if rng is None:
            raise ValueError("marginal sampling needs an rng")
        return np.array([sample(g, rng) for g in tables.gamma], dtype=int)
    raise ValueError(f"unknown state sample mode {mode!r}")
