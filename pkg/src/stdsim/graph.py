"""Two-layer partnership graph.

Layer 1 holds steady partnerships (always available for interaction).
Layer 2 holds casual partnerships: a persistent pool of latent candidate
edges plus transient app-created edges.  A casual edge is available only
while *active*; it activates when both endpoints are simultaneously seeking
and deactivates as soon as either stops.  App-created casual edges are
one-off: they are deleted (not just deactivated) when the encounter window
closes, while latent pool edges survive as inactive candidates.

Edges live in flat arrays (endpoints, layer, flags) with a free-list for
slot reuse and a pair-key map enforcing at most one edge per unordered
pair — which also makes the two layers disjoint by construction.
"""

from __future__ import annotations

import numpy as np

L1 = 1
L2 = 2

_NO_EDGE = -1


def pair_key(a: int, b: int) -> int:
    if a > b:
        a, b = b, a
    return (a << 32) | b


class GraphError(ValueError):
    pass


class TwoLayerGraph:
    def __init__(self, capacity: int = 1024):
        capacity = max(16, int(capacity))
        self.ea = np.full(capacity, _NO_EDGE, dtype=np.int64)
        self.eb = np.full(capacity, _NO_EDGE, dtype=np.int64)
        self.layer = np.zeros(capacity, dtype=np.int8)
        self.active = np.zeros(capacity, dtype=bool)
        self.app = np.zeros(capacity, dtype=bool)
        self.alive = np.zeros(capacity, dtype=bool)
        self._free: list[int] = []
        self._top = 0
        self._pairs: dict[int, int] = {}

    # -- basic mutation ----------------------------------------------------

    def _grow(self) -> None:
        new_cap = int(self.ea.shape[0] * 1.6) + 16
        for name in ("ea", "eb"):
            arr = getattr(self, name)
            grown = np.full(new_cap, _NO_EDGE, dtype=np.int64)
            grown[: arr.shape[0]] = arr
            setattr(self, name, grown)
        for name in ("layer",):
            arr = getattr(self, name)
            grown = np.zeros(new_cap, dtype=arr.dtype)
            grown[: arr.shape[0]] = arr
            setattr(self, name, grown)
        for name in ("active", "app", "alive"):
            arr = getattr(self, name)
            grown = np.zeros(new_cap, dtype=bool)
            grown[: arr.shape[0]] = arr
            setattr(self, name, grown)

    def add_edge(self, a: int, b: int, layer: int, active: bool = False,
                 app: bool = False) -> int:
        if a == b:
            raise GraphError(f"self-loop on agent {a}")
        key = pair_key(a, b)
        if key in self._pairs:
            raise GraphError(f"edge ({a}, {b}) already exists")
        if self._free:
            eid = self._free.pop()
        else:
            if self._top == self.ea.shape[0]:
                self._grow()
            eid = self._top
            self._top += 1
        self.ea[eid] = a
        self.eb[eid] = b
        self.layer[eid] = layer
        self.active[eid] = True if layer == L1 else active
        self.app[eid] = app
        self.alive[eid] = True
        self._pairs[key] = eid
        return eid

    def remove_edge(self, eid: int) -> None:
        key = pair_key(int(self.ea[eid]), int(self.eb[eid]))
        del self._pairs[key]
        self.alive[eid] = False
        self.active[eid] = False
        self.app[eid] = False
        self._free.append(eid)

    def find_edge(self, a: int, b: int):
        return self._pairs.get(pair_key(a, b))

    def edge_ids(self) -> np.ndarray:
        return np.flatnonzero(self.alive[: self._top])

    def edge_count(self, layer=None) -> int:
        m = self.alive[: self._top]
        if layer is not None:
            m = m & (self.layer[: self._top] == layer)
        return int(np.count_nonzero(m))

    def incident_edges(self, x: int) -> np.ndarray:
        top = self._top
        m = self.alive[:top] & ((self.ea[:top] == x) | (self.eb[:top] == x))
        return np.flatnonzero(m)

    def remove_agent(self, x: int) -> int:
        """Delete every edge incident to ``x`` (agent death)."""
        ids = self.incident_edges(x)
        for eid in ids:
            self.remove_edge(int(eid))
        return len(ids)

    def degrees(self, n_agents: int, layer=None, active_only: bool = False) -> np.ndarray:
        top = self._top
        m = self.alive[:top]
        if layer is not None:
            m = m & (self.layer[:top] == layer)
        if active_only:
            m = m & self.active[:top]
        deg = np.zeros(n_agents, dtype=np.int64)
        np.add.at(deg, self.ea[:top][m], 1)
        np.add.at(deg, self.eb[:top][m], 1)
        return deg

    # -- single-agent operations (contract level) ---------------------------

    def available_edges(self, x: int) -> np.ndarray:
        """Edge ids over which ``x`` can interact now (L1, or active L2)."""
        ids = self.incident_edges(x)
        if len(ids) == 0:
            return ids
        avail = (self.layer[ids] == L1) | self.active[ids]
        return ids[avail]

    def select_partner(self, x: int, rng: np.random.Generator):
        """Uniform choice among ``x``'s available edges; None if isolated."""
        ids = self.available_edges(x)
        if len(ids) == 0:
            return None
        eid = int(ids[int(rng.random() * len(ids))])
        return int(self.eb[eid]) if int(self.ea[eid]) == x else int(self.ea[eid])

    def activate_casual(self, x: int, y: int, xi: float, seeking,
                        rng: np.random.Generator) -> bool:
        """Try to activate the latent casual edge (x, y); both must be seeking."""
        eid = self.find_edge(x, y)
        if eid is None or self.layer[eid] != L2:
            raise GraphError(f"no casual edge ({x}, {y})")
        if self.active[eid]:
            raise GraphError(f"casual edge ({x}, {y}) already active")
        if not (seeking[x] and seeking[y]):
            raise GraphError("activation requires both endpoints seeking")
        if rng.random() < xi:
            self.active[eid] = True
            return True
        return False

    def deactivate_on_stop(self, x: int) -> int:
        """Close ``x``'s active casual edges after it stops seeking.

        The edges leave the active interaction set but persist as latent
        candidates (the pair remains acquainted and can re-activate when
        both seek again); app provenance is kept for the policy gates.
        Steady edges are untouched.  Returns the number of edges closed.
        """
        ids = self.incident_edges(x)
        ids = ids[(self.layer[ids] == L2) & self.active[ids]]
        self.active[ids] = False
        return len(ids)

    # -- whole-graph passes (engine level) -----------------------------------

    def deactivate_nonseeking(self, seeking: np.ndarray) -> int:
        """Close every active casual edge lacking a doubly-seeking pair."""
        top = self._top
        m = (
            self.alive[:top]
            & (self.layer[:top] == L2)
            & self.active[:top]
            & ~(seeking[self.ea[:top]] & seeking[self.eb[:top]])
        )
        ids = np.flatnonzero(m)
        self.active[ids] = False
        return len(ids)

    def activation_pass(self, seeking: np.ndarray, xi: float,
                        rng: np.random.Generator) -> int:
        """Activate latent casual edges whose endpoints are both seeking."""
        top = self._top
        m = (
            self.alive[:top]
            & (self.layer[:top] == L2)
            & ~self.active[:top]
            & seeking[self.ea[:top]]
            & seeking[self.eb[:top]]
        )
        ids = np.flatnonzero(m)
        if len(ids) == 0:
            return 0
        hits = ids[rng.random(len(ids)) < xi]
        self.active[hits] = True
        return len(hits)

    def convert_layers(self, casual_to_steady: float, steady_to_casual: float,
                       rng: np.random.Generator, seeking=None):
        """Per-step stochastic layer conversion.

        Active casual edges become steady with probability
        ``casual_to_steady`` (app provenance is dropped: the partnership is
        steady now).  Steady edges become casual with ``steady_to_casual``;
        the resulting casual edge is active only if both endpoints are
        currently seeking, keeping the activity invariant intact.
        Returns ``(n_casual_to_steady, n_steady_to_casual)``.
        """
        top = self._top
        al = self.alive[:top]
        c_ids = np.flatnonzero(al & (self.layer[:top] == L2) & self.active[:top])
        s_ids = np.flatnonzero(al & (self.layer[:top] == L1))
        n_cs = n_sc = 0
        if len(c_ids) and casual_to_steady > 0.0:
            hits = c_ids[rng.random(len(c_ids)) < casual_to_steady]
            self.layer[hits] = L1
            self.active[hits] = True
            self.app[hits] = False
            n_cs = len(hits)
        if len(s_ids) and steady_to_casual > 0.0:
            hits = s_ids[rng.random(len(s_ids)) < steady_to_casual]
            self.layer[hits] = L2
            if seeking is None:
                self.active[hits] = False
            else:
                self.active[hits] = seeking[self.ea[hits]] & seeking[self.eb[hits]]
            n_sc = len(hits)
        return n_cs, n_sc

    def avail_edge_arrays(self):
        """Compact (a, b, app) arrays of currently-available edges."""
        top = self._top
        m = self.alive[:top] & ((self.layer[:top] == L1) | self.active[:top])
        ids = np.flatnonzero(m)
        return self.ea[ids], self.eb[ids], self.app[ids]

    # -- I/O and checks -------------------------------------------------------

    def export_edgelist(self, path) -> None:
        """Write ``agent_a,agent_b,layer,active`` lines (snapshot format)."""
        ids = self.edge_ids()
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("agent_a,agent_b,layer,active\n")
            for eid in ids:
                fh.write(
                    f"{int(self.ea[eid])},{int(self.eb[eid])},"
                    f"L{int(self.layer[eid])},{int(self.active[eid])}\n"
                )

    def check(self, alive_agents=None, seeking=None) -> None:
        """Structural audit; raises GraphError on violation."""
        ids = self.edge_ids()
        a, b = self.ea[ids], self.eb[ids]
        if np.any(a == b):
            raise GraphError("self-loop present")
        keys = np.where(a < b, (a << 32) | b, (b << 32) | a)
        if len(np.unique(keys)) != len(keys):
            raise GraphError("duplicate pair (layer disjointness broken)")
        if set(keys.tolist()) != set(self._pairs.keys()):
            raise GraphError("pair map out of sync")
        if np.any(~self.active[ids] & (self.layer[ids] == L1)):
            raise GraphError("inactive steady edge")
        if alive_agents is not None:
            if np.any(~alive_agents[a]) or np.any(~alive_agents[b]):
                raise GraphError("edge incident to a dead agent")
        if seeking is not None:
            act = ids[(self.layer[ids] == L2) & self.active[ids]]
            if np.any(~(seeking[self.ea[act]] & seeking[self.eb[act]])):
                raise GraphError("active casual edge without both endpoints seeking")


class SeekingState:
    """Partner-seeking toggle with a phase countdown.

    Agents alternate between a short looking phase and a longer resting
    phase; phase lengths are drawn from positive-truncated normals (in
    hours) and floored at one step.
    """

    __slots__ = ("seeking", "remaining_steps")

    def __init__(self, seeking: bool, remaining_steps: int):
        if remaining_steps < 1:
            raise GraphError("seeking phase must last at least one step")
        self.seeking = bool(seeking)
        self.remaining_steps = int(remaining_steps)

    def __repr__(self):
        return f"SeekingState(seeking={self.seeking}, remaining_steps={self.remaining_steps})"


def update_seeking(state: SeekingState, look_hours, rest_hours, dt_hours: float,
                   rng: np.random.Generator) -> SeekingState:
    """Count the current phase down; toggle and resample on expiry.

    ``look_hours`` and ``rest_hours`` are ``(mean, sd)`` pairs of the phase
    duration distributions.
    """
    from .sampling import hours_to_steps, truncnorm_positive

    remaining = state.remaining_steps - 1
    if remaining > 0:
        return SeekingState(state.seeking, remaining)
    seeking = not state.seeking
    mean, sd = look_hours if seeking else rest_hours
    hours = float(truncnorm_positive(mean, sd, rng.random()))
    return SeekingState(seeking, hours_to_steps(hours, dt_hours))


def init_graph(n_agents: int, steady_fraction: float, casual_mean_degree: float,
               rng: np.random.Generator) -> TwoLayerGraph:
    """Build the initial partnership graph over agents ``0..n_agents-1``.

    A ``steady_fraction`` share of agents is paired monogamously into steady
    edges (an odd remainder leaves one agent unpaired).  Latent casual
    candidates are laid down by giving each agent Poisson(rho/2) stubs to
    uniformly random non-partner agents, which yields a mean casual degree
    of rho.
    """
    n_pairs = int(n_agents * steady_fraction / 2.0)
    expected = int(n_agents * (steady_fraction / 2.0 + casual_mean_degree / 2.0))
    g = TwoLayerGraph(capacity=int(expected * 1.3) + 64)

    order = rng.permutation(n_agents)
    for i in range(n_pairs):
        g.add_edge(int(order[2 * i]), int(order[2 * i + 1]), L1)

    if casual_mean_degree > 0 and n_agents > 1:
        stubs = rng.poisson(casual_mean_degree / 2.0, n_agents)
        for x in range(n_agents):
            for _ in range(int(stubs[x])):
                y = int(rng.integers(0, n_agents - 1))
                if y >= x:
                    y += 1
                if g.find_edge(x, y) is None:
                    g.add_edge(x, y, L2, active=False)
    return g
