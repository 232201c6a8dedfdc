"""Dating-app dynamics: attractiveness, usage reinforcement, policies.

Matching is attractiveness-gated: a candidate pair matches with probability
``attract(x, y) * attract(y, x)``, where each direction is a gender gate
times a Gaussian age-similarity kernel scaled by the population's base
acceptance level.  Usage probability ``d`` is reinforced up after a seeking
episode with at least one app-mediated physical encounter and down after a
fruitless one.

Two intervention policies are modelled: a weekly cap on app-mediated
interactions (trailing-window count) and periodic STD-free certification
(infected users are blocked from matching until fully susceptible again).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

from .epi import EpiState


@dataclass(frozen=True)
class AttractivenessModel:
    """Factorised stand-in for a full pairwise attractiveness matrix.

    ``base_acceptance`` is the population-mean acceptance level; the age
    kernel prefers similar-aged partners.  Gender preferences live on the
    agents themselves (see :func:`attractiveness`).
    """

    base_acceptance: float = 0.71
    age_kernel_years: float = 5.0


def pref_mask(genders) -> int:
    """Bit mask of acceptable partner genders (bit g set = gender g ok)."""
    mask = 0
    for g in genders:
        mask |= 1 << int(g)
    return mask


def attractiveness(gender_x: int, pref_x: int, age_x: float,
                   gender_y: int, age_y: float,
                   model: AttractivenessModel) -> float:
    """How attractive ``y`` is to ``x``: gender gate times age kernel.

    Deterministic in its inputs and constant over a run (age gaps do not
    change as both agents age together).
    """
    if not (pref_x >> int(gender_y)) & 1:
        return 0.0
    gap = age_x - age_y
    w = model.age_kernel_years
    return model.base_acceptance * math.exp(-(gap * gap) / (2.0 * w * w))


def match_probability(gender_x, pref_x, age_x, gender_y, pref_y, age_y,
                      model: AttractivenessModel) -> float:
    """Probability an app match forms: both directions must accept."""
    return attractiveness(gender_x, pref_x, age_x, gender_y, age_y, model) * \
        attractiveness(gender_y, pref_y, age_y, gender_x, age_x, model)


@dataclass
class AppProfile:
    """Per-agent dating-app state.

    ``usage_probability`` is the chance of opening the app in a seeking
    step; the weekly log records the steps of app-mediated physical
    interactions inside the trailing window.
    """

    usage_probability: float = 0.38
    success_increment: float = 0.05
    failure_decrement: float = 0.02
    last_certification_step: Optional[int] = None
    blocked_until_recovered: bool = False
    weekly_log: list = field(default_factory=list)


def reinforce(profile: AppProfile, success: bool) -> AppProfile:
    """Adjust usage probability after a seeking episode with app use."""
    d = profile.usage_probability
    if success:
        d = min(1.0, d + profile.success_increment)
    else:
        d = max(0.0, d - profile.failure_decrement)
    return replace(profile, usage_probability=d)


def certify(profile: AppProfile, state: EpiState, now: int,
            tau_steps: Optional[int]) -> AppProfile:
    """Run a certification check at an app-use attempt.

    With the policy enabled, an agent whose certificate lapsed must present
    a new one: a carrier (any exposed/infectious status) is blocked from
    matching until fully susceptible; a clean agent is (re)certified and any
    block lifted.  Never-certified agents are due immediately.
    """
    if tau_steps is None:
        return profile
    last = profile.last_certification_step
    due = profile.blocked_until_recovered or last is None or (now - last) >= tau_steps
    if not due:
        return profile
    if not state.infected_any():
        return replace(profile, last_certification_step=now,
                       blocked_until_recovered=False)
    return replace(profile, blocked_until_recovered=True)


def enforce_cap(profile: AppProfile, now: int, psi_cap: Optional[int],
                window_steps: int = 168) -> bool:
    """Prune the weekly log to the trailing window; report cap eligibility.

    Returns True when the agent may take another app-mediated interaction:
    always with the policy off, otherwise while the windowed count is below
    the cap.  The log is pruned in place.
    """
    profile.weekly_log[:] = [t for t in profile.weekly_log if now - t < window_steps]
    if psi_cap is None:
        return True
    return len(profile.weekly_log) < psi_cap
