"""Shared duration/step sampling helpers.

Every duration in the model is ultimately an integer number of simulation
steps.  All conversions go through the helpers here so that the engine's
vectorised code and the compiled kernels agree bit-for-bit.

Conventions:
  * real durations round to the nearest step, ties upward (floor(x + 0.5));
  * every duration is floored at 1 step (sub-step phases are unobservable
    inside the discrete loop).
"""

import math

import numpy as np
from scipy.special import ndtr, ndtri

from .accel import njit

# Per-episode duration models.
DUR_INTERVAL = 0   # uniform over a closed [lo, hi] day interval
DUR_GEOMETRIC = 1  # memoryless, mean = interval midpoint


@njit(cache=True)
def days_to_steps(days, steps_per_day):
    """Nearest-step conversion of a duration in days, minimum one step."""
    s = int(math.floor(days * steps_per_day + 0.5))
    return s if s > 1 else 1


@njit(cache=True)
def hours_to_steps(hours, dt_hours):
    s = int(math.floor(hours / dt_hours + 0.5))
    return s if s > 1 else 1


@njit(cache=True)
def sample_episode_steps(lo_days, hi_days, model, steps_per_day, u):
    """Draw one episode duration in steps from a single uniform ``u``.

    ``model`` selects uniform-over-interval or geometric with the interval
    midpoint as mean.  Exactly one uniform is consumed either way, which
    keeps random-stream consumption identical across backends.
    """
    if model == DUR_GEOMETRIC:
        mean_steps = 0.5 * (lo_days + hi_days) * steps_per_day
        if mean_steps <= 1.0:
            return 1
        p = 1.0 / mean_steps
        k = int(math.log(1.0 - u) / math.log(1.0 - p)) + 1
        return k if k > 1 else 1
    return days_to_steps(lo_days + u * (hi_days - lo_days), steps_per_day)


def truncnorm_positive(mean, sd, u):
    """Inverse-CDF samples from a normal truncated to (0, inf).

    ``u`` is an array of uniforms in [0, 1); one uniform yields one sample,
    so the draw count is fixed (unlike rejection sampling).  The sampled
    distribution is exactly the positive-truncated normal.
    """
    lo = ndtr(-mean / sd)
    return mean + sd * ndtri(lo + np.asarray(u) * (1.0 - lo))


def truncnorm_positive_mean(mean, sd):
    """Closed-form mean of the positive-truncated normal (for quick checks)."""
    z = -mean / sd
    phi = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return mean + sd * phi / (1.0 - ndtr(z))
