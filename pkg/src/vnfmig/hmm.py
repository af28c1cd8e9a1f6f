"""Hidden Markov model container and Viterbi decoding in log space."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InfeasibleDecodeError, InvalidParameterError

NORM_TOL = 1e-9
# log-scores this close count as tied, so rounding cannot override the index tie-break
TIE_TOL = 1e-12

TransitionRow = Callable[[int, int], np.ndarray]


@dataclass
class HmmModel:
    """States are nodes, observations are failed agents in tour order.

    ``emissions[:, k]`` is the distribution over states for observation k and
    ``transitions[k][m]`` the row used when moving from state m at step k to
    step k + 1. An all-zero transition row marks a dead end.
    """

    states: tuple[str, ...]
    observations: tuple[str, ...]
    initial: np.ndarray
    emissions: np.ndarray
    transitions: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        n, k = len(self.states), len(self.observations)
        self.initial = np.asarray(self.initial, dtype=float)
        self.emissions = np.asarray(self.emissions, dtype=float)
        if self.initial.shape != (n,) or self.emissions.shape != (n, k):
            raise InvalidParameterError("initial / emission shapes do not match the state space")
        if len(self.transitions) != max(k - 1, 0):
            raise InvalidParameterError("need one transition matrix per step")
        for t in self.transitions:
            if np.shape(t) != (n, n):
                raise InvalidParameterError("transition matrices must be |states| x |states|")

    def check_normalized(self) -> None:
        if abs(self.initial.sum() - 1.0) > NORM_TOL:
            raise InvalidParameterError("initial probabilities do not sum to 1")
        if np.any(np.abs(self.emissions.sum(axis=0) - 1.0) > NORM_TOL):
            raise InvalidParameterError("an emission column does not sum to 1")
        for t in self.transitions:
            sums = t.sum(axis=1)
            live = sums > 0
            if np.any(np.abs(sums[live] - 1.0) > NORM_TOL):
                raise InvalidParameterError("a transition row does not sum to 1")


def _log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def decode(
    initial: np.ndarray,
    emissions: np.ndarray,
    transition_row: TransitionRow,
    on_step: Callable[[int, np.ndarray, np.ndarray], None] | None = None,
) -> tuple[list[int], float]:
    """Most probable state sequence.

    ``transition_row(k, m)`` supplies the outgoing row of state m at step k,
    which lets callers build rows lazily from the survivor that reached m.
    ``on_step(k, backpointers, scores)`` runs after step k is filled in.
    Ties go to the lower state index.
    """
    n_states, n_obs = emissions.shape
    if n_obs == 0:
        return [], 0.0
    score = _log(initial) + _log(emissions[:, 0])
    if on_step is not None:
        on_step(0, np.full(n_states, -1), score)
    back: list[np.ndarray] = []
    for k in range(1, n_obs):
        best = np.full(n_states, -np.inf)
        arg = np.zeros(n_states, dtype=int)
        for m in np.flatnonzero(np.isfinite(score)):
            cand = score[m] + _log(transition_row(k - 1, int(m)))
            better = cand > best + TIE_TOL
            best[better] = cand[better]
            arg[better] = m
        score = best + _log(emissions[:, k])
        back.append(arg)
        if on_step is not None:
            on_step(k, arg, score)
        if not np.any(np.isfinite(score)):
            break
    if not np.any(np.isfinite(score)):
        raise InfeasibleDecodeError("every state sequence dead-ends")
    last = int(np.flatnonzero(score >= np.max(score) - TIE_TOL)[0])
    path = [last]
    for arg in reversed(back):
        path.append(int(arg[path[-1]]))
    path.reverse()
    return path, float(score[last])


def viterbi_decode(model: HmmModel) -> tuple[list[int], float]:
    """Standard Viterbi over a fully tabulated model; returns (states, log-prob)."""
    return decode(model.initial, model.emissions, lambda k, m: model.transitions[k][m])


def sequence_log_prob(model: HmmModel, states: Sequence[int]) -> float:
    lp = _log(model.initial[states[0]]) + _log(model.emissions[states[0], 0])
    for k in range(1, len(states)):
        lp += _log(model.transitions[k - 1][states[k - 1], states[k]])
        lp += _log(model.emissions[states[k], k])
    return float(lp)
