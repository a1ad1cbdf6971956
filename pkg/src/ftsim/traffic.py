"""Synthetic traffic: uniform, hotspot incast, and in-network hotspots."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit

from .errors import ConfigError, RoutingError, TopologyError
from .rng import next_below
from .topology import RLFT, SWITCH, PortRef, SwitchPosition

# ids used by the reference 11664-node runs; smaller trees scale them down
REFERENCE_NODES = 11664
REFERENCE_HOTSPOTS = (600, 3400, 5200, 9500)
IHS_FRACTION = 0.20

ROLE_UNIFORM = -1
ROLE_SILENT = -2


@dataclass(frozen=True)
class TrafficPattern:
    """``variant`` is ``uniform``, ``hs`` or ``ihs``.

    ``hotspots`` lists destination node ids for ``hs``; ``ihs_ports`` lists
    stage-2 upward output ports for ``ihs``. Empty tuples mean "use the
    defaults for this tree".
    """

    variant: str = "uniform"
    load: float = 1.0
    fraction: float = 0.0
    hotspots: tuple = ()
    ihs_ports: tuple = field(default=())

    def __post_init__(self):
        if self.variant not in ("uniform", "hs", "ihs"):
            raise ConfigError(f"unknown traffic pattern {self.variant!r}")
        if not 0.0 <= self.load <= 1.0:
            raise ConfigError(f"load must be in [0, 1], got {self.load}")
        if self.variant != "uniform" and not 0.0 < self.fraction <= 1.0:
            raise ConfigError(f"sender fraction must be in (0, 1], got {self.fraction}")

    def with_load(self, load: float) -> "TrafficPattern":
        return TrafficPattern(self.variant, load, self.fraction, self.hotspots, self.ihs_ports)


def scaled_hotspots(nodes: int, count: int = 4) -> tuple[int, ...]:
    """Reference hotspot ids rescaled to a tree of ``nodes`` end-nodes."""
    if not 1 <= count <= len(REFERENCE_HOTSPOTS):
        raise ConfigError(f"hotspot count must be 1..{len(REFERENCE_HOTSPOTS)}")
    return tuple(h * nodes // REFERENCE_NODES for h in REFERENCE_HOTSPOTS[:count])


def named_pattern(name: str, nodes: int, load: float = 1.0) -> TrafficPattern:
    """``uniform``, ``IHS`` or ``HS<pct>-<count>`` such as ``HS25-4``."""
    up = name.strip().upper()
    if up == "UNIFORM":
        return TrafficPattern("uniform", load)
    if up == "IHS":
        return TrafficPattern("ihs", load, IHS_FRACTION)
    if up.startswith("HS") and "-" in up:
        pct, count = up[2:].split("-", 1)
        try:
            frac, n_hot = int(pct) / 100.0, int(count)
        except ValueError:
            raise ConfigError(f"bad hotspot pattern name {name!r}") from None
        return TrafficPattern("hs", load, frac, scaled_hotspots(nodes, n_hot))
    raise ConfigError(f"unknown traffic pattern name {name!r}")


def default_ihs_ports(rlft: RLFT) -> tuple[PortRef, ...]:
    """One stage-2 upward port per top-level group, spread over replicas and ports."""
    if rlft.stages < 3:
        raise ConfigError("in-network hotspots need at least three stages")
    k = rlft.arity
    reps = k
    out = []
    for w in range(rlft.node_count // k**2):
        h = w % reps
        u = w % k
        out.append(PortRef(2, w * reps + h, k + u))
    return tuple(out)


def dmodk_port_destinations(rlft: RLFT) -> dict[tuple[int, int], frozenset]:
    """``(gid, port) -> destinations`` over the D-mod-K route of every source leaf."""
    cached = _DMODK_CACHE.get(id(rlft))
    if cached is not None and cached[0] is rlft:
        return cached[1]
    from .routing import dmodk_up_port
    from .topology import down_port_of

    k = rlft.arity
    peer = rlft.peer
    sets: dict[tuple[int, int], set] = {}
    leaves = sorted({a[0] for a in rlft.attachments})
    for dst in range(rlft.node_count):
        for leaf in leaves:
            g = leaf
            while True:
                pos = rlft.position(g)
                if rlft.reaches_down(pos, dst):
                    port = down_port_of(rlft, pos, dst)
                else:
                    port = k + dmodk_up_port(rlft, pos, dst)
                sets.setdefault((g, port), set()).add(dst)
                if peer[g, port, 0] != SWITCH:
                    break
                g = int(peer[g, port, 1])
    out = {key: frozenset(v) for key, v in sets.items()}
    _DMODK_CACHE.clear()
    _DMODK_CACHE[id(rlft)] = (rlft, out)
    return out


_DMODK_CACHE: dict = {}


def ihs_destination_set(rlft: RLFT, port: PortRef) -> frozenset:
    """Destinations whose D-mod-K route from some source crosses ``port``."""
    pos = SwitchPosition(port.stage, port.index)
    if port.stage != 2:
        raise RoutingError(f"expected a stage-2 port, got stage {port.stage}")
    g = rlft.gid(pos)
    if not rlft.is_up_port(pos, port.port):
        raise RoutingError(f"port {port.port} of {pos} is not an upward port")
    dsts = dmodk_port_destinations(rlft).get((g, port.port), frozenset())
    if not dsts:
        raise RoutingError(f"no destination crosses {port}")
    return dsts


def _ihs_sources(rlft: RLFT, port: PortRef) -> list[int]:
    """Nodes whose upward D-mod-K routes can reach ``port``'s switch."""
    k = rlft.arity
    pos = SwitchPosition(port.stage, port.index)
    w = rlft.subtree(pos)
    return [n for n in range(rlft.node_count) if n // k**2 == w]


class Roles(NamedTuple):
    """Per-node generator setup consumed by the kernel.

    ``target[n]`` is a fixed destination, -1 for a uniform sender, or -2 for
    a node that generates nothing.
    ``set_start``/``set_len`` index ``set_dsts`` for nodes drawing from an
    in-network hotspot set (``set_len`` 0 otherwise).
    """

    target: np.ndarray
    set_start: np.ndarray
    set_len: np.ndarray
    set_dsts: np.ndarray

    @property
    def hotspot_senders(self) -> np.ndarray:
        return np.flatnonzero(self.target >= 0)

    @property
    def set_senders(self) -> np.ndarray:
        return np.flatnonzero(self.set_len > 0)


def assign_roles(pattern: TrafficPattern, rlft: RLFT, seed: int) -> Roles:
    """Choose which sources send to hotspots; the rest send uniformly."""
    n = rlft.node_count
    rng = np.random.default_rng(seed)
    target = np.full(n, ROLE_UNIFORM, np.int64)
    set_start = np.zeros(n, np.int64)
    set_len = np.zeros(n, np.int64)
    set_dsts = np.zeros(0, np.int64)

    if pattern.variant == "hs":
        hot = tuple(pattern.hotspots) or scaled_hotspots(n, 1)
        for h in hot:
            try:
                rlft.check_node(int(h))
            except TopologyError as exc:
                raise ConfigError(f"hotspot {h} is not in the topology: {exc}") from None
        pool = np.setdiff1d(np.arange(n), np.array(hot, np.int64))
        count = min(math.floor(pattern.fraction * n + 1e-9), len(pool))
        senders = np.sort(rng.choice(pool, size=count, replace=False))
        for i, s in enumerate(senders):
            target[s] = hot[i % len(hot)]

    elif pattern.variant == "ihs":
        ports = tuple(pattern.ihs_ports) or default_ihs_ports(rlft)
        count = math.floor(pattern.fraction * n + 1e-9)
        sets = [np.array(sorted(ihs_destination_set(rlft, p)), np.int64) for p in ports]
        offsets = np.cumsum([0] + [len(s) for s in sets])
        set_dsts = np.concatenate(sets) if sets else set_dsts
        # senders are drawn among the nodes that can feed each port, evenly
        feeders = [_ihs_sources(rlft, p) for p in ports]
        quota = [count // len(ports) + (1 if i < count % len(ports) else 0) for i in range(len(ports))]
        taken = set()
        for i, (nodes, want) in enumerate(zip(feeders, quota)):
            free = [x for x in nodes if x not in taken]
            pick = rng.choice(np.array(free, np.int64), size=min(want, len(free)), replace=False)
            for s in np.sort(pick):
                taken.add(int(s))
                set_start[s] = offsets[i]
                set_len[s] = len(sets[i])

    return Roles(target, set_start, set_len, set_dsts)


@njit(cache=True)
def draw_destination(rng_state, src, n, target, set_start, set_len, set_dsts):
    t = target[src]
    if t >= 0:
        return t
    m = set_len[src]
    if m > 0:
        return set_dsts[set_start[src] + next_below(rng_state, src, m)]
    d = next_below(rng_state, src, n - 1)
    if d >= src:
        d += 1
    return d


def next_destination(src: int, roles: Roles, rng_state: np.ndarray) -> int:
    """Destination of the next packet from ``src``; ``rng_state`` holds per-node streams."""
    n = roles.target.shape[0]
    return int(draw_destination(rng_state, src, n, roles.target, roles.set_start, roles.set_len, roles.set_dsts))


def mean_interarrival(load: float, ser_ns: int) -> float:
    """Mean gap between generated packets; infinite at zero load."""
    if load < 0:
        raise ConfigError(f"negative load {load}")
    return math.inf if load == 0 else ser_ns / load


def injection_times(src: int, load: float, ser_ns: int, horizon_ns: int, rng_state: np.ndarray) -> np.ndarray:
    """Unblocked generation instants of one source up to ``horizon_ns``."""
    from .rng import next_exponential

    if load == 0:
        return np.zeros(0, np.int64)
    mean = mean_interarrival(load, ser_ns)
    out = []
    t = int(round(next_exponential(rng_state, src, mean)))
    while t < horizon_ns:
        out.append(t)
        t += int(round(next_exponential(rng_state, src, mean)))
    return np.array(out, np.int64)
