"""Mean-field compartment ODE over the joint pathogen-status lattice.

An agent's joint status across ``k`` pathogens is a partition of the
pathogen set into susceptible / exposed / infectious subsets, encoded as a
base-3 integer over ``k`` trits (trit ``j``: 0=S, 1=E, 2=I for pathogen
``j``).  The ODE tracks occupancy per partition plus accumulated dead
mass:

  * infection moves S->E for pathogen ``j`` at rate ``beta_j`` times the
    total occupancy of all j-infectious compartments (bilinear mass
    action);
  * progression E->I at rate ``phi_j``; immunity decay I->S at ``psi_j``;
  * disease death at ``mu_j`` per infectious pathogen; natural death at
    ``upsilon`` everywhere — both flow into the dead accumulator;
  * births at per-capita rate ``alpha`` enter the all-susceptible
    compartment by default (``births="all_susceptible"``); the literal
    alternative of crediting every compartment is available as
    ``births="every_compartment"``.

Integration is classical fixed-step fourth-order Runge-Kutta.  This module
is the independent cross-check for the agent simulation in the well-mixed
limit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

MAX_PATHOGENS = 12  # 3^12 compartments; beyond this the lattice explodes


class MeanFieldError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionState:
    """One point of the status lattice: disjoint (s, e, i) covering D."""

    code: int
    k: int

    @property
    def s(self) -> frozenset:
        return frozenset(j for j in range(self.k) if self.trit(j) == 0)

    @property
    def e(self) -> frozenset:
        return frozenset(j for j in range(self.k) if self.trit(j) == 1)

    @property
    def i(self) -> frozenset:
        return frozenset(j for j in range(self.k) if self.trit(j) == 2)

    def trit(self, j: int) -> int:
        return (self.code // 3 ** j) % 3


def encode_partition(s, e, i, k: int) -> int:
    """Base-3 code of a partition; rejects overlapping or incomplete sets."""
    s, e, i = frozenset(s), frozenset(e), frozenset(i)
    if (s | e | i) != frozenset(range(k)) or len(s) + len(e) + len(i) != k:
        raise MeanFieldError("(s, e, i) must partition the pathogen set")
    code = 0
    for j in e:
        code += 3 ** j
    for j in i:
        code += 2 * 3 ** j
    return code


def decode_partition(code: int, k: int) -> PartitionState:
    if not (0 <= code < 3 ** k):
        raise MeanFieldError(f"code {code} outside [0, 3^{k})")
    return PartitionState(code, k)


def enumerate_states(k: int) -> list:
    """All 3^k live partitions in canonical base-3 ascending order."""
    if k < 0:
        raise MeanFieldError("k must be >= 0")
    if k > MAX_PATHOGENS:
        raise MeanFieldError(f"k={k} exceeds the supported maximum {MAX_PATHOGENS}")
    return [PartitionState(code, k) for code in range(3 ** k)]


@dataclass
class MeanFieldParams:
    """Per-unit-time (per-day) rates of the compartment system."""

    k: int
    beta: np.ndarray     # transmission, per pathogen
    phi: np.ndarray      # E -> I
    psi: np.ndarray      # I -> S (immunity decay)
    mu: np.ndarray       # disease death
    alpha: float = 0.0   # per-capita birth rate
    upsilon: float = 0.0  # natural death rate
    births: str = "all_susceptible"  # or "every_compartment"

    def __post_init__(self):
        for name in ("beta", "phi", "psi", "mu"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (self.k,):
                raise MeanFieldError(f"{name} must have shape ({self.k},)")
            if np.any(arr < 0):
                raise MeanFieldError(f"{name} must be nonnegative")
            setattr(self, name, arr)
        if self.alpha < 0 or self.upsilon < 0:
            raise MeanFieldError("alpha and upsilon must be nonnegative")
        if self.births not in ("all_susceptible", "every_compartment"):
            raise MeanFieldError(f"unknown births mode {self.births!r}")


@dataclass
class CompartmentVector:
    """Occupancy per partition code plus accumulated dead mass."""

    occupancy: np.ndarray
    cumulative_dead: float = 0.0

    def copy(self) -> "CompartmentVector":
        return CompartmentVector(self.occupancy.copy(), self.cumulative_dead)


@lru_cache(maxsize=None)
def _lattice(k: int):
    """Per-pathogen source-index arrays for vectorised flow assembly."""
    codes = np.arange(3 ** k)
    per_j = []
    for j in range(k):
        trit = (codes // 3 ** j) % 3
        per_j.append((
            codes[trit == 0],  # susceptible-for-j sources
            codes[trit == 1],  # exposed-for-j sources
            codes[trit == 2],  # infectious-for-j sources
        ))
    return per_j


def derivative(v: CompartmentVector, params: MeanFieldParams):
    """Time derivative ``(d occupancy, d dead)`` at the given state."""
    occ = v.occupancy
    k = params.k
    d = np.zeros_like(occ)
    d_dead = 0.0
    lattice = _lattice(k)
    for j in range(k):
        s_src, e_src, i_src = lattice[j]
        step = 3 ** j
        i_total = occ[i_src].sum()
        if params.beta[j] != 0.0 and i_total != 0.0:
            flow = params.beta[j] * occ[s_src] * i_total
            d[s_src] -= flow
            d[s_src + step] += flow
        if params.phi[j] != 0.0:
            flow = params.phi[j] * occ[e_src]
            d[e_src] -= flow
            d[e_src + step] += flow
        if params.psi[j] != 0.0:
            flow = params.psi[j] * occ[i_src]
            d[i_src] -= flow
            d[i_src - 2 * step] += flow
        if params.mu[j] != 0.0:
            flow = params.mu[j] * occ[i_src]
            d[i_src] -= flow
            d_dead += flow.sum()
    total = occ.sum()
    if params.upsilon != 0.0:
        d -= params.upsilon * occ
        d_dead += params.upsilon * total
    if params.alpha != 0.0:
        if params.births == "all_susceptible":
            d[0] += params.alpha * total
        else:
            d += params.alpha * total
    return d, d_dead


@dataclass
class Trajectory:
    t: np.ndarray            # sample times, one per integration step
    occupancy: np.ndarray    # (len(t), 3^k)
    dead: np.ndarray
    clamped: bool = False    # a negative occupancy beyond tolerance was clamped

    def prevalence_any(self) -> np.ndarray:
        """Fraction of live mass infectious for at least one pathogen."""
        k = int(round(np.log(self.occupancy.shape[1]) / np.log(3.0)))
        codes = np.arange(3 ** k)
        any_i = np.zeros(3 ** k, dtype=bool)
        for j in range(k):
            any_i |= ((codes // 3 ** j) % 3) == 2
        live = self.occupancy.sum(axis=1)
        return self.occupancy[:, any_i].sum(axis=1) / np.where(live > 0, live, 1.0)


def integrate(v0: CompartmentVector, params: MeanFieldParams, t0: float,
              tf: float, h: float, clamp_tol: float = 1e-9) -> Trajectory:
    """Classical RK4 with fixed step ``h``, sampled at every step.

    Occupancies pushed below zero are clamped; a clamp deeper than
    ``clamp_tol`` flags the trajectory and emits a warning.  Divergence
    (NaN/inf) aborts with a diagnostic.
    """
    if h <= 0:
        raise MeanFieldError("h must be > 0")
    if tf <= t0:
        raise MeanFieldError("tf must be > t0")
    n_steps = max(1, int(round((tf - t0) / h)))
    hh = (tf - t0) / n_steps
    occ = np.asarray(v0.occupancy, dtype=np.float64).copy()
    dead = float(v0.cumulative_dead)
    ts = np.empty(n_steps + 1)
    occs = np.empty((n_steps + 1, occ.shape[0]))
    deads = np.empty(n_steps + 1)
    ts[0], occs[0], deads[0] = t0, occ, dead
    clamped = False

    def f(o, dd):
        return derivative(CompartmentVector(o, dd), params)

    for i in range(1, n_steps + 1):
        k1, kd1 = f(occ, dead)
        k2, kd2 = f(occ + 0.5 * hh * k1, dead + 0.5 * hh * kd1)
        k3, kd3 = f(occ + 0.5 * hh * k2, dead + 0.5 * hh * kd2)
        k4, kd4 = f(occ + hh * k3, dead + hh * kd3)
        occ = occ + (hh / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        dead = dead + (hh / 6.0) * (kd1 + 2.0 * kd2 + 2.0 * kd3 + kd4)
        if not np.all(np.isfinite(occ)) or not np.isfinite(dead):
            raise MeanFieldError(
                f"integration diverged at t={t0 + i * hh:.6g} (non-finite occupancy)"
            )
        low = occ.min()
        if low < 0.0:
            if low < -clamp_tol:
                clamped = True
                warnings.warn(
                    f"occupancy clamped at t={t0 + i * hh:.6g} (min {low:.3e})",
                    RuntimeWarning, stacklevel=2,
                )
            np.clip(occ, 0.0, None, out=occ)
        ts[i], occs[i], deads[i] = t0 + i * hh, occ, dead
    return Trajectory(ts, occs, deads, clamped)


# -- comparison against the agent simulation ---------------------------------


@dataclass
class DeviationReport:
    max_abs: float
    mean_abs: float
    containment: float   # fraction of time points inside mean +/- 3 std
    n_points: int


def compare_abm(trajectory: Trajectory, abm_prevalence: np.ndarray) -> DeviationReport:
    """Compare an ODE prevalence curve against replicated agent runs.

    ``abm_prevalence`` has shape (n_reps, n_points) and must match the
    trajectory's sample count after its initial point.  Reports absolute
    deviations of the ODE curve from the replication mean and the fraction
    of points where the curve lies inside the mean +/- 3 std band.
    """
    abm = np.asarray(abm_prevalence, dtype=np.float64)
    if abm.ndim != 2 or abm.shape[0] < 1:
        raise MeanFieldError("abm_prevalence must be (n_reps, n_points) with >= 1 rep")
    ode = trajectory.prevalence_any()[1:]
    if ode.shape[0] != abm.shape[1]:
        raise MeanFieldError(
            f"horizon mismatch: ODE has {ode.shape[0]} points, ABM {abm.shape[1]}"
        )
    mean = abm.mean(axis=0)
    std = abm.std(axis=0, ddof=1) if abm.shape[0] > 1 else np.zeros_like(mean)
    dev = np.abs(ode - mean)
    inside = dev <= 3.0 * std + 1e-15
    return DeviationReport(
        max_abs=float(dev.max()),
        mean_abs=float(dev.mean()),
        containment=float(np.mean(inside)),
        n_points=int(ode.shape[0]),
    )


def wellmixed_params(cfg) -> MeanFieldParams:
    """Derive matched ODE rates from a well-mixed simulation config.

    Per-act transmission converts to a per-day rate via the contact
    process: each agent initiates one contact per step with a uniform
    partner, so a discordant pair forms at rate 2*s*i per agent-step and

        beta_day = 2 * beta_act * steps_per_day * n / (n - 1).

    Protection mixes in as the population pair-level expectation.  Stage
    exit rates use the interval midpoint as mean duration (exact for the
    geometric duration model); per-episode mortality splits the infectious
    exit rate between recovery and death.
    """
    n = cfg.population
    q_unprot = (1.0 - cfg.protected_fraction) ** 2
    spd = cfg.steps_per_day
    k = cfg.n_pathogens
    beta = np.empty(k)
    phi = np.empty(k)
    psi = np.empty(k)
    mu = np.empty(k)
    for j, p in enumerate(cfg.pathogens):
        beta_act = q_unprot * p.beta_unprotected + (1.0 - q_unprot) * p.beta_protected
        beta[j] = 2.0 * beta_act * spd * n / (n - 1.0)
        mean_e = 0.5 * (p.exposure_days[0] + p.exposure_days[1])
        mean_i = 0.5 * (p.infectious_days[0] + p.infectious_days[1])
        mean_e = max(mean_e, 1.0 / spd)  # durations are floored at one step
        mean_i = max(mean_i, 1.0 / spd)
        phi[j] = 1.0 / mean_e
        psi[j] = (1.0 - p.mortality) / mean_i
        mu[j] = p.mortality / mean_i
    return MeanFieldParams(
        k=k, beta=beta, phi=phi, psi=psi, mu=mu,
        alpha=cfg.birth_rate_per_day, upsilon=cfg.death_rate_per_day,
    )


def export_trajectory_csv(trajectory: Trajectory, path) -> None:
    """Long-format export: ``t,state_code,occupancy`` rows plus ``t,dead`` rows."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,state_code,occupancy\n")
        for i, t in enumerate(trajectory.t):
            for code in range(trajectory.occupancy.shape[1]):
                fh.write(f"{repr(float(t))},{code},{repr(float(trajectory.occupancy[i, code]))}\n")
            fh.write(f"{repr(float(t))},dead,{repr(float(trajectory.dead[i]))}\n")
