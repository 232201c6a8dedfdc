"""Per-step metrics series and the reproduction-number estimate.

The per-step reproduction number is the difference estimator

    R_t = (I(t) - I(t-1) + S(t) - S(t-1)) / I(t-1)

where ``I(t)`` counts infected agents — carrying at least one pathogen,
whether still incubating or already contagious (``infected_any``) — and
``S(t)`` counts agents that have recovered at least once and are currently
susceptible again for some previously-carried pathogen (the
recovered-and-susceptible stock, ``s_recovered``).  With that pairing the
numerator tracks fresh infections net of re-exposures of the recovered
pool: within-partnership reinfection cycles cancel while transmission to
new victims accumulates.  ``E[R_t]`` averages the defined steps after an
optional burn-in; it is NaN when no step has ``I(t-1) > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def series_columns(k: int) -> list:
    """Frozen CSV column order for a k-pathogen run."""
    cols = [
        "step", "population", "births", "natural_deaths", "disease_deaths",
        "s_all", "e_any", "i_any", "infected_any", "s_recovered",
        "new_infections", "new_infectious", "recoveries",
        "app_users", "app_matches", "app_interactions", "interactions",
    ]
    cols += [f"i_p{j}" for j in range(k)]
    cols += [f"e_p{j}" for j in range(k)]
    cols += ["r_t", "early_termination"]
    return cols


_FLOAT_COLUMNS = {"r_t"}


@dataclass
class MetricsSeries:
    """Column-oriented per-step output of one run."""

    k: int
    columns: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)  # step-0 stocks (for R_1)
    e_rt: float = float("nan")

    def __len__(self) -> int:
        return len(self.columns["step"]) if self.columns else 0

    @property
    def column_names(self) -> list:
        return series_columns(self.k)

    def finalize(self, burn_in: int = 0) -> None:
        """Fill the r_t column and the run-level E[R_t]."""
        rt, e_rt = compute_rt(
            self.columns["infected_any"],
            self.columns["s_recovered"],
            self.initial["infected_any"],
            self.initial["s_recovered"],
            burn_in=burn_in,
        )
        self.columns["r_t"] = rt
        self.e_rt = e_rt


def compute_rt(i_any, s_recovered, i0: int, s0: int, burn_in: int = 0):
    """Apply the difference formula along a series.

    ``i0``/``s0`` are the pre-run stocks used for the first step.  Steps
    with a zero previous infectious count are undefined (NaN) and excluded
    from the average; if every step is undefined, ``e_rt`` is NaN.
    """
    i_any = np.asarray(i_any, dtype=np.float64)
    s_rec = np.asarray(s_recovered, dtype=np.float64)
    prev_i = np.concatenate(([float(i0)], i_any[:-1]))
    prev_s = np.concatenate(([float(s0)], s_rec[:-1]))
    rt = np.full(i_any.shape[0], np.nan)
    ok = prev_i > 0
    rt[ok] = ((i_any - prev_i) + (s_rec - prev_s))[ok] / prev_i[ok]
    use = ok.copy()
    if burn_in > 0:
        use[:burn_in] = False
    e_rt = float(np.mean(rt[use])) if np.any(use) else float("nan")
    return rt, e_rt


@dataclass
class ReplicationSummary:
    """Aggregate of ``run_replications``: per-rep E[R_t] plus seed records."""

    e_rts: np.ndarray
    seeds: list
    mean_e_rt: float
    std_e_rt: float
    series: list = field(default_factory=list)  # populated on request

    @classmethod
    def from_values(cls, e_rts, seeds, series=None) -> "ReplicationSummary":
        arr = np.asarray(e_rts, dtype=np.float64)
        mean = float(np.mean(arr))
        std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
        return cls(arr, list(seeds), mean, std, series or [])
