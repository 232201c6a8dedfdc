"""Per-step invariant audits.

When ``SimConfig.audit`` is on, the engine calls :meth:`AuditState.check_step`
after every round.  The audits recompute invariants from primary state
(independently of the kernels' own bookkeeping, e.g. the weekly-cap windows
are re-checked from a full event log rather than the kernels' rings) and
raise :class:`AuditError` on the first violation.
"""

from __future__ import annotations

from collections import defaultdict, deque

import numpy as np

from .epi import INFECTIOUS, SUSCEPTIBLE


class AuditError(AssertionError):
    pass


class AuditState:
    def __init__(self, world):
        self.prev = world.counts()
        self.cap_log = defaultdict(deque)

    def check_step(self, world, row, inf_loss, new_infectious, recoveries,
                   exposures, app_events, matched) -> None:
        cfg = world.cfg
        now = world.now
        top = world.n_top
        alive = world.alive[:top]
        status = world.status[:top]
        timer = world.timer[:top]

        # Partition/status validity and timer consistency.
        if np.any((status < 0) | (status > INFECTIOUS)):
            raise AuditError(f"step {now}: invalid status value")
        live = status[alive]
        if np.any((timer[alive] > 0) != (live != SUSCEPTIBLE)):
            raise AuditError(f"step {now}: timer/status mismatch")
        if np.any(timer[alive] < 0):
            raise AuditError(f"step {now}: negative timer")

        # Dead agents are absorbing: nothing may touch them this step.
        if np.any(world.fresh[:top][~alive]):
            raise AuditError(f"step {now}: exposure recorded for a dead agent")

        if not cfg.well_mixed:
            world.graph.check(alive_agents=world.alive, seeking=world.seeking)

        # Population bookkeeping identity.
        expected = (
            self.prev["population"] + row["births"]
            - row["disease_deaths"] - row["natural_deaths"]
        )
        if row["population"] != expected:
            raise AuditError(
                f"step {now}: population {row['population']} != "
                f"{self.prev['population']} + {row['births']} births - "
                f"{row['disease_deaths']} disease - {row['natural_deaths']} natural"
            )

        # Per-pathogen infectious flow identity.
        for p in range(world.k):
            expect_i = (
                self.prev[f"i_p{p}"] + int(new_infectious[p])
                - int(recoveries[p]) - int(inf_loss[p])
            )
            if row[f"i_p{p}"] != expect_i:
                raise AuditError(
                    f"step {now}: pathogen {p} infectious flow identity broken "
                    f"({row[f'i_p{p}']} != {expect_i})"
                )

        # Weekly-cap window, recomputed from a full independent event log.
        if cfg.weekly_cap is not None:
            ev_a, ev_b = app_events
            for x in np.concatenate((ev_a, ev_b)):
                self.cap_log[int(x)].append(now)
            window = cfg.cap_window_steps
            for x, log in self.cap_log.items():
                while log and now - log[0] >= window:
                    log.popleft()
                if len(log) > cfg.weekly_cap:
                    raise AuditError(
                        f"step {now}: agent {x} has {len(log)} app interactions "
                        f"in the trailing window (cap {cfg.weekly_cap})"
                    )

        # Certification: no lapsed carrier may take part in matching.
        tau = cfg.certification_steps
        if tau is not None and len(matched):
            infected = (world.status[matched] != SUSCEPTIBLE).any(axis=1)
            lapsed = (now - world.last_cert[matched]) >= tau
            bad = matched[infected & (lapsed | world.blocked[matched])]
            if len(bad):
                raise AuditError(
                    f"step {now}: lapsed infected agent {int(bad[0])} entered matching"
                )

        self.prev = {key: row[key] for key in self.prev}
