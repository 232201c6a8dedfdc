"""Simulation engine: population state, the per-step phase loop, replications.

Agent state lives in struct-of-arrays form (one row per agent slot; slots
are never reused).  Each step runs a fixed phase order:

  1. demography — Poisson births at the configured per-capita rate,
     per-agent Bernoulli natural deaths;
  2. seeking updates — phase countdowns, toggles with resampled durations,
     closing of casual edges that lost a seeking endpoint, activation of
     latent candidates whose endpoints both seek;
  3. certification checks and app matching for seeking agents that open
     the app this step and pass the policy gates;
  4. casual/steady layer conversion;
  5. interaction — every agent holding an available edge meets one partner
     (uniform over its edges; uniform over everyone in well-mixed mode),
     with per-pathogen transmission;
  6. epidemiological timers — exposed becoming infectious, infectious
     recovering or dying; app-usage reinforcement for episodes that ended;
  7. metrics row emission (and optional invariant audits).

All randomness flows through one generator per run in a fixed order, and
the hot kernels consume pre-drawn uniforms, so a (config, seed) pair fully
determines every output byte regardless of backend or worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import audits as audits_mod
from .app import AppProfile, AttractivenessModel
from .config import SimConfig
from .epi import EXPOSED, INFECTIOUS, SUSCEPTIBLE, EpiState
from .graph import SeekingState, TwoLayerGraph, init_graph
from .kernels import interaction_pass, match_pass
from .metrics import MetricsSeries, ReplicationSummary, series_columns
from .sampling import DUR_GEOMETRIC, sample_episode_steps, truncnorm_positive

_NEVER = -(1 << 60)


@dataclass
class Agent:
    """Read-only snapshot of one agent (one row across the world arrays)."""

    id: int
    epi: EpiState
    age_years: float
    gender: int
    seeking: SeekingState
    app: AppProfile
    prefers_protected: bool
    gender_preference: frozenset


class World:
    """Mutable simulation state for one run."""

    def __init__(self, cfg: SimConfig, rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        self.rng = rng
        self.now = 0
        self.k = cfg.n_pathogens
        n = cfg.population

        # Headroom for births (plus slack so regrowth is rare).
        horizon_days = cfg.steps / cfg.steps_per_day
        expected_births = cfg.birth_rate_per_day * n * horizon_days
        cap = n + int(expected_births * 1.5) + 64
        self._alloc(cap)
        self.n_top = n

        k = self.k
        u = rng.random(n)
        self.gender[:n] = (u < 0.5).astype(np.int8)
        hetero = rng.random(n) < cfg.heterosexual_fraction
        self.pref[:n] = np.where(hetero, 1 << (1 - self.gender[:n]), 1 << self.gender[:n])
        self.zeta[:n] = rng.random(n) < cfg.protected_fraction
        age = cfg.age_min_years + rng.random(n) * (cfg.age_max_years - cfg.age_min_years)
        self.birth_step[:n] = -np.floor(age * cfg.steps_per_year + 0.5).astype(np.int64)
        self.alive[:n] = True
        self.d[:n] = cfg.app_adoption

        # Everyone starts resting with a freshly sampled phase length.
        self.seeking[:n] = False
        hours = truncnorm_positive(cfg.rest_mean_hours, cfg.rest_sd_hours, rng.random(n))
        self.seek_timer[:n] = self._hours_to_steps(hours)

        # Certification cycles are staggered: each agent behaves as if last
        # certified at a uniformly random point inside the past window.
        tau = cfg.certification_steps
        if tau is not None:
            self.last_cert[:n] = -np.floor(rng.random(n) * tau).astype(np.int64)

        # Seed initial infectious agents, independently per pathogen.
        spd = cfg.steps_per_day
        for p, path in enumerate(cfg.pathogens):
            count = int(round(cfg.initial_prevalence * n))
            if count == 0:
                continue
            ids = rng.choice(n, size=count, replace=False)
            us = rng.random(count)
            lo, hi = path.infectious_days
            model = DUR_GEOMETRIC if path.duration_model == "geometric" else 0
            for j, x in enumerate(ids):
                self.status[x, p] = INFECTIOUS
                self.timer[x, p] = sample_episode_steps(lo, hi, model, spd, us[j])

        if cfg.well_mixed:
            self.graph = TwoLayerGraph(capacity=16)
        else:
            self.graph = init_graph(n, cfg.steady_fraction, cfg.casual_mean_degree, rng)

        # Pathogen parameter arrays for the kernels.
        self.beta_p = np.array([p.beta_protected for p in cfg.pathogens])
        self.beta_u = np.array([p.beta_unprotected for p in cfg.pathogens])
        self.exp_lo = np.array([p.exposure_days[0] for p in cfg.pathogens])
        self.exp_hi = np.array([p.exposure_days[1] for p in cfg.pathogens])
        self.inf_lo = np.array([p.infectious_days[0] for p in cfg.pathogens])
        self.inf_hi = np.array([p.infectious_days[1] for p in cfg.pathogens])
        self.dur_model = np.array(
            [DUR_GEOMETRIC if p.duration_model == "geometric" else 0 for p in cfg.pathogens],
            dtype=np.int8,
        )
        self.mortality = np.array([p.mortality for p in cfg.pathogens])

        self._stopped = np.zeros(0, dtype=np.int64)
        self._app_possible = cfg.app_adoption > 0.0 and not cfg.well_mixed
        self.audit_state = audits_mod.AuditState(self) if cfg.audit else None

    # -- storage ------------------------------------------------------------

    def _alloc(self, cap: int) -> None:
        k = self.k
        self.alive = np.zeros(cap, dtype=bool)
        self.gender = np.zeros(cap, dtype=np.int8)
        self.pref = np.zeros(cap, dtype=np.int8)
        self.birth_step = np.zeros(cap, dtype=np.int64)
        self.zeta = np.zeros(cap, dtype=bool)
        self.status = np.zeros((cap, k), dtype=np.int8)
        self.timer = np.zeros((cap, k), dtype=np.int32)
        self.ever_rec = np.zeros((cap, k), dtype=bool)
        self._rec_row = np.zeros(cap, dtype=bool)  # any ever_rec, row cache
        self.fresh = np.zeros((cap, k), dtype=bool)
        self.seeking = np.zeros(cap, dtype=bool)
        self.seek_timer = np.zeros(cap, dtype=np.int32)
        self.d = np.zeros(cap, dtype=np.float64)
        self.app_used = np.zeros(cap, dtype=bool)
        self.app_hit = np.zeros(cap, dtype=bool)
        self.blocked = np.zeros(cap, dtype=bool)
        self.last_cert = np.full(cap, _NEVER, dtype=np.int64)
        self.pick_partner = np.full(cap, -1, dtype=np.int64)
        self.pick_step = np.full(cap, -1, dtype=np.int64)
        cap_k = self.cfg.weekly_cap
        if cap_k is not None:
            self.ring = np.full((cap, cap_k), _NEVER, dtype=np.int64)
            self.ring_n = np.zeros(cap, dtype=np.int64)
        else:
            self.ring = np.zeros((1, 1), dtype=np.int64)
            self.ring_n = np.zeros(1, dtype=np.int64)

    def _grow(self, extra: int) -> None:
        old = {name: getattr(self, name) for name in (
            "alive", "gender", "pref", "birth_step", "zeta", "status", "timer",
            "ever_rec", "_rec_row", "fresh", "seeking", "seek_timer", "d",
            "app_used", "app_hit", "blocked", "last_cert", "pick_partner",
            "pick_step", "ring", "ring_n",
        )}
        new_cap = old["alive"].shape[0] + max(extra, 256)
        self._alloc(new_cap)
        for name, arr in old.items():
            getattr(self, name)[: arr.shape[0]] = arr

    def _hours_to_steps(self, hours):
        steps = np.floor(np.asarray(hours) / self.cfg.dt_hours + 0.5).astype(np.int32)
        return np.maximum(steps, 1)

    # -- views ---------------------------------------------------------------

    def age_years(self, x: int) -> float:
        return (self.now - self.birth_step[x]) / self.cfg.steps_per_year

    def agent(self, x: int) -> Agent:
        prefs = frozenset(g for g in (0, 1) if (self.pref[x] >> g) & 1)
        last = int(self.last_cert[x])
        return Agent(
            id=int(x),
            epi=EpiState(self.status[x].copy(), self.timer[x].copy(), bool(self.alive[x])),
            age_years=float(self.age_years(x)),
            gender=int(self.gender[x]),
            seeking=SeekingState(bool(self.seeking[x]), max(1, int(self.seek_timer[x]))),
            app=AppProfile(
                usage_probability=float(self.d[x]),
                success_increment=self.cfg.app_success_boost,
                failure_decrement=self.cfg.app_failure_drop,
                last_certification_step=None if last == _NEVER else last,
                blocked_until_recovered=bool(self.blocked[x]),
            ),
            prefers_protected=bool(self.zeta[x]),
            gender_preference=prefs,
        )

    def alive_ids(self) -> np.ndarray:
        return np.flatnonzero(self.alive[: self.n_top])

    def counts(self) -> dict:
        """Current stocks used by metrics and the R_t estimate.

        Touched rows (carriers or ever-recovered agents) are typically a
        small minority, so the per-pathogen tallies run on that subset.
        """
        n = self.n_top
        al = self.alive[:n]
        n_alive = int(np.count_nonzero(al))
        touched = np.flatnonzero(
            al & ((self.status[:n] != SUSCEPTIBLE).any(axis=1) | self._rec_row[:n])
        )
        st = self.status[touched]
        is_inf = st == INFECTIOUS
        is_exp = st == EXPOSED
        carriers = int(np.count_nonzero(is_inf.any(axis=1) | is_exp.any(axis=1)))
        rec_sus = ((st == SUSCEPTIBLE) & self.ever_rec[touched]).any(axis=1)
        out = {
            "population": n_alive,
            "s_all": n_alive - carriers,
            "e_any": int(np.count_nonzero(is_exp.any(axis=1))),
            "i_any": int(np.count_nonzero(is_inf.any(axis=1))),
            "infected_any": carriers,
            "s_recovered": int(np.count_nonzero(rec_sus)),
        }
        for p in range(self.k):
            out[f"i_p{p}"] = int(np.count_nonzero(is_inf[:, p]))
            out[f"e_p{p}"] = int(np.count_nonzero(is_exp[:, p]))
        return out

    def _kill(self, x: int, per_pathogen_inf_loss) -> None:
        self.alive[x] = False
        for p in range(self.k):
            if self.status[x, p] == INFECTIOUS:
                per_pathogen_inf_loss[p] += 1
        if not self.cfg.well_mixed:
            self.graph.remove_agent(int(x))


def init_world(cfg: SimConfig, rng: Optional[np.random.Generator] = None) -> World:
    """Build the initial population, partnership graph and seeded infections."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    return World(cfg, rng)


# -- the step loop -----------------------------------------------------------


def step(world: World) -> dict:
    """Advance one round; returns the metrics row as a plain dict."""
    cfg = world.cfg
    rng = world.rng
    world.now += 1
    now = world.now
    k = world.k
    row = {"step": now}

    inf_loss = np.zeros(k, dtype=np.int64)

    # (1) demography
    n_alive = int(np.count_nonzero(world.alive[: world.n_top]))
    dt_days = cfg.dt_hours / 24.0
    lam = cfg.birth_rate_per_day * n_alive * dt_days
    n_births = int(rng.poisson(lam)) if lam > 0 else 0
    if n_births:
        _spawn(world, n_births)
    row["births"] = n_births

    ids = world.alive_ids()
    p_die = cfg.death_rate_per_day * dt_days
    n_nat = 0
    if p_die > 0 and len(ids):
        dead = ids[rng.random(len(ids)) < p_die]
        for x in dead:
            world._kill(int(x), inf_loss)
        n_nat = len(dead)
    row["natural_deaths"] = n_nat

    # (2) seeking updates
    if not cfg.well_mixed:
        ids = world.alive_ids()
        world.seek_timer[ids] -= 1
        expired = ids[world.seek_timer[ids] <= 0]
        was_seeking = world.seeking[expired]
        world.seeking[expired] = ~was_seeking
        if len(expired):
            u = rng.random(len(expired))
            hours = np.empty(len(expired))
            now_seek = ~was_seeking
            hours[now_seek] = truncnorm_positive(
                cfg.look_mean_hours, cfg.look_sd_hours, u[now_seek])
            hours[was_seeking] = truncnorm_positive(
                cfg.rest_mean_hours, cfg.rest_sd_hours, u[was_seeking])
            world.seek_timer[expired] = world._hours_to_steps(hours)
        world._stopped = expired[was_seeking]
        world.graph.deactivate_nonseeking(world.seeking)
        world.graph.activation_pass(world.seeking, cfg.casual_activation, rng)
    else:
        world._stopped = np.zeros(0, dtype=np.int64)

    # (3) certification and app matching
    row["app_users"] = 0
    row["app_matches"] = 0
    eligible = np.zeros(0, dtype=np.int64)
    if world._app_possible:
        seek_ids = np.flatnonzero(world.alive[: world.n_top] & world.seeking[: world.n_top])
        if len(seek_ids):
            attempt = seek_ids[rng.random(len(seek_ids)) < world.d[seek_ids]]
        else:
            attempt = seek_ids
        tau = cfg.certification_steps
        if tau is not None and len(attempt):
            due = world.blocked[attempt] | (now - world.last_cert[attempt] >= tau)
            att_due = attempt[due]
            clean = (world.status[att_due] == SUSCEPTIBLE).all(axis=1)
            world.last_cert[att_due[clean]] = now
            world.blocked[att_due[clean]] = False
            world.blocked[att_due[~clean]] = True
        eligible = attempt[~world.blocked[attempt]]
        if cfg.weekly_cap is not None and len(eligible):
            used = (now - world.ring[eligible] < cfg.cap_window_steps).sum(axis=1)
            eligible = eligible[used < cfg.weekly_cap]
        world.app_used[eligible] = True
        row["app_users"] = len(eligible)
        if len(eligible) >= 2:
            c = cfg.app_max_candidates
            u_pick = rng.random((len(eligible), c))
            u_match = rng.random((len(eligible), c))
            out_a = np.empty(len(eligible) * c, dtype=np.int64)
            out_b = np.empty(len(eligible) * c, dtype=np.int64)
            w = cfg.age_kernel_years
            nm = match_pass(
                eligible, world.gender, world.pref, world.birth_step,
                cfg.base_attractiveness, 1.0 / (w * w), cfg.steps_per_year,
                c, u_pick, u_match, out_a, out_b,
            )
            matches = 0
            g = world.graph
            for j in range(nm):
                a, b = int(out_a[j]), int(out_b[j])
                eid = g.find_edge(a, b)
                if eid is None:
                    g.add_edge(a, b, 2, active=True, app=True)
                    matches += 1
                elif g.layer[eid] == 2 and not g.active[eid]:
                    g.active[eid] = True
                    g.app[eid] = True
                    matches += 1
            row["app_matches"] = matches

    # (4) layer conversion
    if not cfg.well_mixed:
        world.graph.convert_layers(
            cfg.casual_to_steady, cfg.steady_to_casual, rng, world.seeking
        )

    # (5) interaction
    world.fresh[: world.n_top] = False
    exposures = np.zeros(k, dtype=np.int64)
    if cfg.well_mixed:
        wm_ids = world.alive_ids()
        wm_pos = np.zeros(world.n_top, dtype=np.int64)
        wm_pos[wm_ids] = np.arange(len(wm_ids), dtype=np.int64)
        initiators = wm_ids
        ptr = np.zeros(1, dtype=np.int64)
        nbr = np.zeros(0, dtype=np.int64)
        nbr_app = np.zeros(0, dtype=bool)
    else:
        ea, eb, eapp = world.graph.avail_edge_arrays()
        idx = np.concatenate((ea, eb))
        partner = np.concatenate((eb, ea))
        appf = np.concatenate((eapp, eapp))
        counts = np.bincount(idx, minlength=world.n_top)
        ptr = np.zeros(world.n_top + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        order = np.argsort(idx, kind="stable")
        nbr = partner[order]
        nbr_app = appf[order]
        initiators = np.flatnonzero(counts > 0)
        wm_ids = np.zeros(0, dtype=np.int64)
        wm_pos = np.zeros(1, dtype=np.int64)

    ni = len(initiators)
    n_inter = n_app = n_ev = 0
    app_ev_a = np.zeros(0, dtype=np.int64)
    app_ev_b = np.zeros(0, dtype=np.int64)
    if ni:
        u_pick = rng.random(ni)
        u_tr = rng.random((ni, k))
        u_dur = rng.random((ni, k))
        app_ev_a = np.empty(ni, dtype=np.int64)
        app_ev_b = np.empty(ni, dtype=np.int64)
        cap_on = cfg.weekly_cap is not None
        n_inter, n_app, n_ev = interaction_pass(
            initiators, ptr, nbr, nbr_app,
            cfg.well_mixed, wm_ids, wm_pos,
            world.status, world.timer, world.fresh,
            world.zeta,
            world.beta_p, world.beta_u,
            world.exp_lo, world.exp_hi, world.dur_model, cfg.steps_per_day,
            cap_on, cfg.weekly_cap if cap_on else 1, cfg.cap_window_steps, now,
            world.ring, world.ring_n,
            world.app_hit,
            world.pick_partner, world.pick_step,
            u_pick, u_tr, u_dur,
            exposures,
            app_ev_a, app_ev_b,
        )
    row["interactions"] = n_inter
    row["app_interactions"] = n_app
    row["new_infections"] = int(exposures.sum())

    # (6) epidemiological timers and reinforcement
    new_infectious = np.zeros(k, dtype=np.int64)
    recoveries = np.zeros(k, dtype=np.int64)
    n_disease_deaths = 0
    spd = cfg.steps_per_day
    top = world.n_top
    for p in range(k):
        al = world.alive[:top]
        col = world.status[:top, p]
        i_old = np.flatnonzero(al & (col == INFECTIOUS))
        e_ids = np.flatnonzero(al & (col == EXPOSED) & ~world.fresh[:top, p])
        if len(e_ids):
            world.timer[e_ids, p] -= 1
            done = e_ids[world.timer[e_ids, p] <= 0]
            if len(done):
                us = rng.random(len(done))
                lo, hi = world.inf_lo[p], world.inf_hi[p]
                model = world.dur_model[p]
                for j, x in enumerate(done):
                    world.status[x, p] = INFECTIOUS
                    world.timer[x, p] = sample_episode_steps(lo, hi, model, spd, us[j])
                new_infectious[p] = len(done)
        if len(i_old):
            world.timer[i_old, p] -= 1
            done = i_old[world.timer[i_old, p] <= 0]
            if len(done):
                us = rng.random(len(done))
                dies = us < world.mortality[p]
                for x in done[dies]:
                    world._kill(int(x), inf_loss)
                n_disease_deaths += int(np.count_nonzero(dies))
                surv = done[~dies]
                world.status[surv, p] = SUSCEPTIBLE
                world.timer[surv, p] = 0
                world.ever_rec[surv, p] = True
                world._rec_row[surv] = True
                recoveries[p] = len(surv)
    row["disease_deaths"] = n_disease_deaths
    row["new_infectious"] = int(new_infectious.sum())
    row["recoveries"] = int(recoveries.sum())

    ended = world._stopped[world.alive[world._stopped]] if len(world._stopped) else world._stopped
    if len(ended):
        used = ended[world.app_used[ended]]
        if len(used):
            hit = world.app_hit[used]
            world.d[used[hit]] = np.minimum(1.0, world.d[used[hit]] + cfg.app_success_boost)
            world.d[used[~hit]] = np.maximum(0.0, world.d[used[~hit]] - cfg.app_failure_drop)
        world.app_used[ended] = False
        world.app_hit[ended] = False

    # (7) metrics
    row.update(world.counts())
    row["early_termination"] = int(row["population"] == 0)
    row["r_t"] = float("nan")  # filled by MetricsSeries.finalize

    if world.audit_state is not None:
        world.audit_state.check_step(
            world, row,
            inf_loss=inf_loss, new_infectious=new_infectious,
            recoveries=recoveries, exposures=exposures,
            app_events=(app_ev_a[:n_ev], app_ev_b[:n_ev]),
            matched=eligible,
        )
    return row


def _spawn(world: World, n_births: int) -> None:
    """Add newborn adults: age 18, default app adoption, no partnerships."""
    cfg = world.cfg
    rng = world.rng
    if world.n_top + n_births > world.alive.shape[0]:
        world._grow(n_births)
    ids = np.arange(world.n_top, world.n_top + n_births)
    world.n_top += n_births
    world.alive[ids] = True
    world.gender[ids] = (rng.random(n_births) < 0.5).astype(np.int8)
    hetero = rng.random(n_births) < cfg.heterosexual_fraction
    world.pref[ids] = np.where(hetero, 1 << (1 - world.gender[ids]), 1 << world.gender[ids])
    world.zeta[ids] = rng.random(n_births) < cfg.protected_fraction
    world.birth_step[ids] = world.now - int(round(18.0 * cfg.steps_per_year))
    world.d[ids] = cfg.app_adoption
    world.seeking[ids] = False
    hours = truncnorm_positive(cfg.rest_mean_hours, cfg.rest_sd_hours, rng.random(n_births))
    world.seek_timer[ids] = world._hours_to_steps(hours)
    tau = cfg.certification_steps
    if tau is not None:
        world.last_cert[ids] = world.now - np.floor(rng.random(n_births) * tau).astype(np.int64)


def run(cfg: SimConfig, rng: Optional[np.random.Generator] = None,
        return_world: bool = False):
    """Run the full horizon; returns the per-step series with E[R_t] filled."""
    world = init_world(cfg, rng)
    series = MetricsSeries(k=world.k)
    series.initial = world.counts()
    names = series_columns(world.k)
    rows = {name: [] for name in names}
    for _ in range(cfg.steps):
        row = step(world)
        for name in names:
            rows[name].append(row[name])
        if row["early_termination"]:
            break
    for name in names:
        dtype = np.float64 if name == "r_t" else np.int64
        series.columns[name] = np.asarray(rows[name], dtype=dtype)
    series.finalize(burn_in=cfg.burn_in_steps)
    if return_world:
        return series, world
    return series


# -- replications --------------------------------------------------------------


def replication_rng(master_seed: int, rep: int) -> np.random.Generator:
    """The stream for replication ``rep`` is derived from (master seed, rep)."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, rep]))


def _rep_task(args):
    cfg, rep, keep_series = args
    series = run(cfg, replication_rng(cfg.seed, rep))
    return rep, series.e_rt, (series if keep_series else None)


def run_replications(cfg: SimConfig, n_reps: Optional[int] = None, workers: int = 1,
                     keep_series: bool = False) -> ReplicationSummary:
    """Run independent replications with deterministically derived streams.

    Results are identical for any worker count: replication ``i`` always
    uses the stream derived from ``(cfg.seed, i)`` and outputs are ordered
    by replication index.
    """
    n = cfg.replications if n_reps is None else int(n_reps)
    if n < 1:
        raise ValueError("n_reps must be >= 1")
    tasks = [(cfg, rep, keep_series) for rep in range(n)]
    results = [None] * n
    if workers > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rep, e_rt, series in pool.map(_rep_task, tasks):
                results[rep] = (e_rt, series)
    else:
        for t in tasks:
            rep, e_rt, series = _rep_task(t)
            results[rep] = (e_rt, series)
    e_rts = [r[0] for r in results]
    series = [r[1] for r in results] if keep_series else []
    seeds = [[cfg.seed, rep] for rep in range(n)]
    return ReplicationSummary.from_values(e_rts, seeds, series)
