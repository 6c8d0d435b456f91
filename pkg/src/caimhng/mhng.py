"""Message models and the Metropolis-Hastings naming game.

The speaker proposes a message from its own posterior over messages given
its state and the joint-optimality outcome. The listener then accepts with
probability min(1, p(s|m_hat) p(m_hat) / (p(s|m) p(m))), which uses only
the listener's own parameters. Roles alternate every round, and B speaks
first.

The chain is run for many timesteps at once: every function below works on
arrays indexed by t, and the scalar helpers just wrap them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dist import (DEFAULT_ALPHA, LOG_FLOOR, AllZeroError, CountTable, ConditionalTable, normalize,
                   safe_log, sample_rows)
from .env import JointEpisode

DEFAULT_K = 32


class EmptyEpisodeError(ValueError):
    pass


@dataclass(frozen=True)
class MessageModel:
    """One agent's private message parameters."""
    likelihood: np.ndarray  # (K, S) p(s|m)
    optimality: np.ndarray  # (K,) p(o^(m)=1|m)
    prior: np.ndarray       # (K,) p(m)

    def __post_init__(self):
        ConditionalTable(self.likelihood)  # validates row-stochasticity
        K = self.likelihood.shape[0]
        if self.optimality.shape != (K,) or self.prior.shape != (K,):
            raise ValueError("optimality and prior must have one entry per message")
        if np.any(self.optimality <= 0) or np.any(self.optimality >= 1):
            raise ValueError("p(o|m) must lie strictly inside (0, 1)")
        if not np.isclose(self.prior.sum(), 1.0, rtol=0, atol=1e-9):
            raise ValueError("prior must sum to one")

    @property
    def K(self) -> int:
        return self.likelihood.shape[0]

    @property
    def n_states(self) -> int:
        return self.likelihood.shape[1]

    def p_outcome(self, observed) -> np.ndarray:
        """p(o^(m)=observed | m); shape (K,) or (n, K) for an array of outcomes."""
        observed = np.asarray(observed)
        if observed.ndim == 0:
            return self.optimality if observed else 1.0 - self.optimality
        return np.where(observed[:, None] == 1, self.optimality, 1.0 - self.optimality)


def uniform_model(K: int, n_states: int) -> MessageModel:
    return MessageModel(np.full((K, n_states), 1.0 / n_states),
                        np.full(K, 0.5), np.full(K, 1.0 / K))


def proposal_distribution(model: MessageModel, s_own: int, observed: int = 1) -> np.ndarray:
    """Q(m_hat) proportional to p(s_own|m_hat) p(o^(m)=observed|m_hat) p(m_hat)."""
    return normalize(model.likelihood[:, s_own] * model.p_outcome(observed) * model.prior)


def speaker_propose(model: MessageModel, s_own: int, rng: np.random.Generator,
                    observed: int = 1) -> int:
    return int(_propose(model, np.array([s_own]), np.array([observed]), rng)[0])


def acceptance_ratio(listener: MessageModel, m_hat: int, m_cur: int, s_own: int) -> float:
    return float(_acceptance(listener, np.array([m_hat]), np.array([m_cur]), np.array([s_own]))[0])


def mh_round(speaker: MessageModel, listener: MessageModel, s_speaker: int, s_listener: int,
             m_cur: int, rng: np.random.Generator, observed: int = 1) -> int:
    out = _mh_step(speaker, listener, np.array([s_speaker]), np.array([s_listener]),
                   np.array([m_cur]), np.array([observed]), rng)
    return int(out[0])


def _propose(model, s_own, observed, rng):
    w = model.likelihood[:, s_own].T * model.p_outcome(observed) * model.prior
    total = w.sum(axis=1, keepdims=True)
    if np.any(total <= 0):
        raise AllZeroError("no message gives the speaker's state any mass")
    return sample_rows(w / total, rng)


def _acceptance(listener, m_hat, m_cur, s_own):
    lik, prior = listener.likelihood, listener.prior
    num = np.maximum(safe_log(lik[m_hat, s_own]), LOG_FLOOR) + safe_log(prior[m_hat])
    den = np.maximum(safe_log(lik[m_cur, s_own]), LOG_FLOOR) + safe_log(prior[m_cur])
    with np.errstate(over="ignore"):
        r = np.minimum(1.0, np.exp(num - den))
    # both sides at the floor: nothing to distinguish them, keep the chain moving
    r = np.where((num <= LOG_FLOOR) & (den <= LOG_FLOOR), 1.0, r)
    return np.where(m_hat == m_cur, 1.0, r)


def _mh_step(speaker, listener, s_speaker, s_listener, m_cur, observed, rng):
    m_hat = _propose(speaker, s_speaker, observed, rng)
    r = _acceptance(listener, m_hat, m_cur, s_listener)
    accept = rng.random(len(m_cur)) < r
    return np.where(accept, m_hat, m_cur)


def communicate(model_a: MessageModel, model_b: MessageModel, states_a, states_b,
                messages, sweeps: int, rng: np.random.Generator, observed=None) -> np.ndarray:
    """Run ``sweeps`` alternating-role rounds independently for every timestep.

    ``observed`` is the joint-optimality value conditioned on; planning uses
    the default of 1 at every step.
    """
    states_a = np.asarray(states_a, dtype=int)
    states_b = np.asarray(states_b, dtype=int)
    m = np.array(messages, dtype=int)
    if not len(states_a) == len(states_b) == len(m):
        raise ValueError("state and message sequences must have equal length")
    observed = np.ones(len(m), dtype=int) if observed is None else np.asarray(observed, dtype=int)
    for i in range(sweeps):
        if i % 2 == 0:
            m = _mh_step(model_b, model_a, states_b, states_a, m, observed, rng)
        else:
            m = _mh_step(model_a, model_b, states_a, states_b, m, observed, rng)
    return m


def fit_models(episode: JointEpisode, assignments, K: int, n_states: int,
               alpha: float = DEFAULT_ALPHA) -> tuple[MessageModel, MessageModel]:
    """Rebuild both agents' models from the current message assignments.

    Each agent counts its own states; both count the shared o^(m) outcome.
    """
    prior = np.full(K, 1.0 / K)
    models = []
    for states in (episode.s_a, episode.s_b):
        lik = CountTable(K, n_states, alpha).add_many(assignments, states).to_table()
        opt = CountTable(K, 2, alpha).add_many(assignments, episode.o_m).to_table()
        models.append(MessageModel(np.array(lik.rows), np.array(opt.rows[:, 1]), prior))
    return models[0], models[1]


def learn_assignments(episode: JointEpisode, K: int = DEFAULT_K, n_states: int | None = None,
                      iterations: int = 50, alpha: float = DEFAULT_ALPHA,
                      rng: np.random.Generator | None = None, rounds: int = 2):
    """Alternate model re-estimation and naming-game resampling of every m_t.

    Returns (model_a, model_b, assignments).
    """
    if len(episode) == 0:
        raise EmptyEpisodeError("cannot learn from an empty episode")
    if rng is None:
        rng = np.random.default_rng()
    if n_states is None:
        n_states = int(max(episode.s_a.max(), episode.s_b.max())) + 1
    m = rng.integers(K, size=len(episode))
    for _ in range(iterations):
        model_a, model_b = fit_models(episode, m, K, n_states, alpha)
        m = communicate(model_a, model_b, episode.s_a, episode.s_b, m, rounds, rng,
                        observed=episode.o_m)
    model_a, model_b = fit_models(episode, m, K, n_states, alpha)
    return model_a, model_b, m


def learn(episode: JointEpisode, K: int = DEFAULT_K, iterations: int = 50,
          alpha: float = DEFAULT_ALPHA, rng: np.random.Generator | None = None,
          n_states: int | None = None, rounds: int = 2) -> tuple[MessageModel, MessageModel]:
    model_a, model_b, _ = learn_assignments(episode, K, n_states, iterations, alpha, rng, rounds)
    return model_a, model_b
