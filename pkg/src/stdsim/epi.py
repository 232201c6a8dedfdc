"""Per-agent, per-pathogen epidemiological state machine.

Each agent carries one status per pathogen: susceptible, exposed (carrying
but not contagious, with a countdown timer) or infectious (contagious, with
a countdown timer).  The statuses partition the pathogen set; a dead agent
is absorbing.  Timers count simulation steps and are sampled per episode
from the pathogen's configured day interval.

The functions here operate on single-agent values and are the reference
semantics; the engine applies the same transitions over whole-population
arrays (see :mod:`stdsim.engine` and :mod:`stdsim.kernels`).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .config import PathogenParams
from .sampling import DUR_GEOMETRIC, DUR_INTERVAL, sample_episode_steps

SUSCEPTIBLE = 0
EXPOSED = 1
INFECTIOUS = 2


class ContractError(ValueError):
    """An operation was called outside its precondition."""


class EventKind(IntEnum):
    EXPOSURE = 0
    BECAME_INFECTIOUS = 1
    RECOVERED_TO_SUSCEPTIBLE = 2
    DISEASE_DEATH = 3


@dataclass(frozen=True)
class EpiEvent:
    kind: EventKind
    pathogen: int
    step: int


def duration_model_code(params: PathogenParams) -> int:
    return DUR_GEOMETRIC if params.duration_model == "geometric" else DUR_INTERVAL


def sample_exposure_steps(params: PathogenParams, steps_per_day: float, u: float) -> int:
    lo, hi = params.exposure_days
    return sample_episode_steps(lo, hi, duration_model_code(params), steps_per_day, u)


def sample_infectious_steps(params: PathogenParams, steps_per_day: float, u: float) -> int:
    lo, hi = params.infectious_days
    return sample_episode_steps(lo, hi, duration_model_code(params), steps_per_day, u)


class EpiState:
    """Joint status of one agent across ``k`` pathogens.

    ``status[p]`` is SUSCEPTIBLE/EXPOSED/INFECTIOUS and ``timer[p]`` the
    remaining steps of the current episode (0 while susceptible).
    """

    __slots__ = ("status", "timer", "alive")

    def __init__(self, status, timer, alive=True):
        self.status = np.asarray(status, dtype=np.int8)
        self.timer = np.asarray(timer, dtype=np.int32)
        self.alive = bool(alive)

    @classmethod
    def susceptible(cls, k: int) -> "EpiState":
        return cls(np.zeros(k, np.int8), np.zeros(k, np.int32))

    def copy(self) -> "EpiState":
        return EpiState(self.status.copy(), self.timer.copy(), self.alive)

    @property
    def k(self) -> int:
        return self.status.shape[0]

    def partition(self):
        """The (s, e, i) partition of pathogen indices."""
        s = frozenset(np.flatnonzero(self.status == SUSCEPTIBLE).tolist())
        e = frozenset(np.flatnonzero(self.status == EXPOSED).tolist())
        i = frozenset(np.flatnonzero(self.status == INFECTIOUS).tolist())
        return s, e, i

    def infected_any(self) -> bool:
        return bool(np.any(self.status != SUSCEPTIBLE))

    def check(self) -> None:
        assert self.status.shape == self.timer.shape
        assert np.all((self.status >= SUSCEPTIBLE) & (self.status <= INFECTIOUS))
        assert np.all((self.timer > 0) == (self.status != SUSCEPTIBLE))

    def __eq__(self, other):
        return (
            isinstance(other, EpiState)
            and self.alive == other.alive
            and np.array_equal(self.status, other.status)
            and np.array_equal(self.timer, other.timer)
        )

    def __repr__(self):
        return f"EpiState(status={self.status.tolist()}, timer={self.timer.tolist()}, alive={self.alive})"


def expose(state: EpiState, p: int, params: PathogenParams, steps_per_day: float,
           rng: np.random.Generator, step: int = 0):
    """Expose a susceptible agent to pathogen ``p``.

    Returns ``(new_state, event)``.  Calling on a non-susceptible slot or a
    dead agent is a contract violation.
    """
    if not state.alive:
        raise ContractError("expose called on a dead agent")
    if state.status[p] != SUSCEPTIBLE:
        raise ContractError(f"expose called on non-susceptible pathogen {p}")
    out = state.copy()
    out.status[p] = EXPOSED
    out.timer[p] = sample_exposure_steps(params, steps_per_day, rng.random())
    return out, EpiEvent(EventKind.EXPOSURE, p, step)


def step_epi(state: EpiState, params_all, steps_per_day: float,
             rng: np.random.Generator, step: int = 0):
    """Advance every episode timer by one step.

    Exposed slots reaching zero become infectious with a freshly sampled
    duration.  Infectious slots reaching zero either kill the agent (with
    the pathogen's mortality, stopping all further processing) or return to
    susceptible.  Returns ``(new_state, events)``.
    """
    if not state.alive:
        raise ContractError("step_epi called on a dead agent")
    out = state.copy()
    events = []
    for p in range(out.k):
        st = out.status[p]
        if st == SUSCEPTIBLE:
            continue
        out.timer[p] -= 1
        if out.timer[p] > 0:
            continue
        if st == EXPOSED:
            out.status[p] = INFECTIOUS
            out.timer[p] = sample_infectious_steps(params_all[p], steps_per_day, rng.random())
            events.append(EpiEvent(EventKind.BECAME_INFECTIOUS, p, step))
        else:
            if rng.random() < params_all[p].mortality:
                out.alive = False
                events.append(EpiEvent(EventKind.DISEASE_DEATH, p, step))
                return out, events
            out.status[p] = SUSCEPTIBLE
            out.timer[p] = 0
            events.append(EpiEvent(EventKind.RECOVERED_TO_SUSCEPTIBLE, p, step))
    return out, events


def transmit(a: EpiState, b: EpiState, protected: bool, params_all,
             steps_per_day: float, rng: np.random.Generator, step: int = 0):
    """One sexual act between two living agents.

    For each pathogen where exactly one side is infectious and the other
    susceptible, the susceptible side is exposed with the act's beta
    (protected or unprotected).  Both directions are evaluated per pathogen.
    Returns ``(new_a, new_b, events_a, events_b)``.
    """
    if not (a.alive and b.alive):
        raise ContractError("transmit requires both agents alive")
    na, nb = a.copy(), b.copy()
    ev_a, ev_b = [], []
    for p in range(na.k):
        params = params_all[p]
        beta = params.beta_protected if protected else params.beta_unprotected
        sa, sb = na.status[p], nb.status[p]
        if sa == INFECTIOUS and sb == SUSCEPTIBLE:
            if rng.random() < beta:
                nb.status[p] = EXPOSED
                nb.timer[p] = sample_exposure_steps(params, steps_per_day, rng.random())
                ev_b.append(EpiEvent(EventKind.EXPOSURE, p, step))
        elif sb == INFECTIOUS and sa == SUSCEPTIBLE:
            if rng.random() < beta:
                na.status[p] = EXPOSED
                na.timer[p] = sample_exposure_steps(params, steps_per_day, rng.random())
                ev_a.append(EpiEvent(EventKind.EXPOSURE, p, step))
    return na, nb, ev_a, ev_b
