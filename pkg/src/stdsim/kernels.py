"""Hot per-step kernels.

These are the inner loops that dominate runtime (executed once per step
over every interacting agent).  They are compiled with numba when the
``numba`` backend is active and run as plain Python otherwise (see
:mod:`stdsim.accel`).  Neither kernel draws randomness: all uniforms are
pre-drawn by the engine and consumed positionally, so both backends --
and any worker layout -- produce bit-identical results.
"""

import math

import numpy as np

from .accel import njit
from .sampling import sample_episode_steps

SUSCEPTIBLE = 0
EXPOSED = 1
INFECTIOUS = 2


@njit(cache=True)
def cap_used(ring, ring_n, a, cap_k, now, window):
    """Count of agent ``a``'s app interactions inside the trailing window.

    ``ring`` keeps each agent's last ``cap_k`` interaction steps; anything
    older than those cannot fall inside the window once ``cap_k`` newer
    entries exist, so the ring suffices for an exact windowed count up to
    the cap.
    """
    c = 0
    for i in range(cap_k):
        if now - ring[a, i] < window:
            c += 1
    return c


@njit(cache=True)
def interaction_pass(
    initiators,
    ptr, nbr, nbr_app,
    well_mixed, wm_ids, wm_pos,
    status, timer, fresh,
    zeta,
    beta_p, beta_u,
    exp_lo, exp_hi, exp_model, steps_per_day,
    cap_on, cap_k, window, now,
    ring, ring_n,
    app_hit,
    pick_partner, pick_step,
    u_pick, u_tr, u_dur,
    exposures_out,
    app_ev_a, app_ev_b,
):
    """One interaction round: every initiator meets one partner.

    Graph mode picks uniformly among the initiator's available edges
    (steady plus active casual); well-mixed mode picks uniformly among all
    other living agents.  A pair interacts at most once per step.  For each
    pathogen with exactly one infectious and one susceptible side, the
    susceptible side is exposed with the act's beta (protected when either
    side prefers protection).

    App-mediated encounters respect the weekly cap for both sides at
    interaction time (a capped side means the encounter simply does not
    happen) and are logged to the rings and the event buffers.

    Returns ``(n_interactions, n_app_interactions, n_app_events)``;
    ``exposures_out`` accumulates per-pathogen exposure counts and
    ``fresh`` marks slots exposed this step (their timers must not tick
    until the next step).
    """
    k = status.shape[1]
    n_inter = 0
    n_app = 0
    n_ev = 0
    ni = initiators.shape[0]
    for i in range(ni):
        x = initiators[i]
        if well_mixed:
            na = wm_ids.shape[0]
            if na < 2:
                continue
            idx = int(u_pick[i] * (na - 1))
            if idx > na - 2:
                idx = na - 2
            if idx >= wm_pos[x]:
                idx += 1
            y = wm_ids[idx]
            is_app = False
        else:
            base = ptr[x]
            deg = ptr[x + 1] - base
            if deg <= 0:
                continue
            j = base + int(u_pick[i] * deg)
            if j >= base + deg:
                j = base + deg - 1
            y = nbr[j]
            is_app = bool(nbr_app[j])

        if pick_step[y] == now and pick_partner[y] == x:
            continue  # this pair already interacted this step

        if is_app and cap_on:
            if cap_used(ring, ring_n, x, cap_k, now, window) >= cap_k:
                continue
            if cap_used(ring, ring_n, y, cap_k, now, window) >= cap_k:
                continue

        protected = zeta[x] or zeta[y]
        for p in range(k):
            sx = status[x, p]
            sy = status[y, p]
            if sx == INFECTIOUS and sy == SUSCEPTIBLE:
                dst = y
            elif sy == INFECTIOUS and sx == SUSCEPTIBLE:
                dst = x
            else:
                continue
            beta = beta_p[p] if protected else beta_u[p]
            if u_tr[i, p] < beta:
                status[dst, p] = EXPOSED
                timer[dst, p] = sample_episode_steps(
                    exp_lo[p], exp_hi[p], exp_model[p], steps_per_day, u_dur[i, p]
                )
                fresh[dst, p] = True
                exposures_out[p] += 1

        n_inter += 1
        pick_partner[x] = y
        pick_step[x] = now

        if is_app:
            n_app += 1
            app_hit[x] = True
            app_hit[y] = True
            if cap_on:
                ring[x, ring_n[x] % cap_k] = now
                ring_n[x] += 1
                ring[y, ring_n[y] % cap_k] = now
                ring_n[y] += 1
            app_ev_a[n_ev] = x
            app_ev_b[n_ev] = y
            n_ev += 1
    return n_inter, n_app, n_ev


@njit(cache=True)
def match_pass(
    seekers,
    gender, pref, birth_step,
    base_acceptance, inv_w2_years, steps_per_year,
    max_candidates,
    u_pick, u_match,
    out_a, out_b,
):
    """App matching against an immutable snapshot of eligible seekers.

    Each seeker samples up to ``max_candidates`` others from the snapshot
    (with replacement; self is skipped by construction) and matches with
    probability ``attract(x,y) * attract(y,x)``.  Proposed pairs land in
    ``out_a``/``out_b`` in deterministic (initiator, slot) order; the
    engine applies them against the live graph.  Returns the pair count.
    """
    ns = seekers.shape[0]
    nm = 0
    if ns < 2:
        return 0
    b2 = base_acceptance * base_acceptance
    for i in range(ns):
        x = seekers[i]
        for c in range(max_candidates):
            idx = int(u_pick[i, c] * (ns - 1))
            if idx > ns - 2:
                idx = ns - 2
            if idx >= i:
                idx += 1
            y = seekers[idx]
            if not (pref[x] >> gender[y]) & 1:
                continue
            if not (pref[y] >> gender[x]) & 1:
                continue
            gap = (birth_step[y] - birth_step[x]) / steps_per_year
            p_match = b2 * math.exp(-(gap * gap) * inv_w2_years)
            if u_match[i, c] < p_match:
                out_a[nm] = x
                out_b[nm] = y
                nm += 1
    return nm


def warmup():
    """Force kernel compilation (no-op on the pure-Python backend)."""
    k = 1
    status = np.zeros((2, k), dtype=np.int8)
    status[0, 0] = INFECTIOUS
    timer = np.zeros((2, k), dtype=np.int32)
    fresh = np.zeros((2, k), dtype=bool)
    interaction_pass(
        np.array([0], dtype=np.int64),
        np.array([0, 1, 1], dtype=np.int64),
        np.array([1], dtype=np.int64),
        np.zeros(1, dtype=bool),
        False, np.zeros(0, dtype=np.int64), np.zeros(2, dtype=np.int64),
        status, timer, fresh,
        np.zeros(2, dtype=bool),
        np.full(k, 0.5), np.full(k, 0.5),
        np.zeros(k), np.ones(k), np.zeros(k, dtype=np.int8), 24.0,
        False, 1, 168, 0,
        np.zeros((1, 1), dtype=np.int64), np.zeros(1, dtype=np.int64),
        np.zeros(2, dtype=bool),
        np.full(2, -1, dtype=np.int64), np.full(2, -1, dtype=np.int64),
        np.full(1, 0.1), np.full((1, k), 0.99), np.full((1, k), 0.5),
        np.zeros(k, dtype=np.int64),
        np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64),
    )
    match_pass(
        np.array([0, 1], dtype=np.int64),
        np.zeros(2, dtype=np.int8), np.full(2, 3, dtype=np.int8),
        np.zeros(2, dtype=np.int64),
        0.7, 0.04, 8760.0, 1,
        np.full((2, 1), 0.3), np.full((2, 1), 0.99),
        np.zeros(2, dtype=np.int64), np.zeros(2, dtype=np.int64),
    )
