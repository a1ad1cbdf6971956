"""Real-Life Fat-Tree (RLFT) construction and static route analysis.

Switches are numbered per stage, left to right. At every non-top switch
ports ``0..K-1`` face down and ``K..2K-1`` face up; top-stage switches use
all ``2K`` ports downward.

A stage-``t`` switch below the top is identified by ``(w, h)``: ``w`` is the
subtree it serves (every node ``n`` with ``n // K**t == w`` hangs below it)
and ``h`` in ``[0, K**(t-1))`` is its replica label. Its index inside the
stage is ``w * K**(t-1) + h``. Up port ``K + u`` leads to replica
``h + u * K**(t-1)`` of the parent subtree ``w // K``, which means ``h``
spells out the sequence of upward choices taken to reach a switch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import RoutingError, TopologyError

NODE = 0
SWITCH = 1

DEFAULT_NODE_LIMIT = 65536


@dataclass(frozen=True)
class RLFTParams:
    ports: int
    stages: int
    node_limit: int = DEFAULT_NODE_LIMIT

    def __post_init__(self):
        if self.ports < 2 or self.ports % 2:
            raise TopologyError(f"port count must be even and >= 2, got {self.ports}")
        if self.stages < 1:
            raise TopologyError(f"stage count must be >= 1, got {self.stages}")
        nodes = 2 * self.arity**self.stages
        if nodes > self.node_limit:
            raise TopologyError(
                f"RLFT(P={self.ports}, T={self.stages}) has {nodes} nodes, "
                f"above the limit of {self.node_limit}"
            )

    @property
    def arity(self) -> int:
        return self.ports // 2

    @property
    def nodes(self) -> int:
        return 2 * self.arity**self.stages

    @property
    def switches(self) -> int:
        return self.nodes * (2 * self.stages - 1) // (2 * self.arity)


class SwitchPosition(NamedTuple):
    stage: int
    index: int


class Endpoint(NamedTuple):
    kind: int  # NODE or SWITCH
    ident: int  # node id or global switch id
    port: int


class Link(NamedTuple):
    lower: Endpoint
    upper: Endpoint
    # direction label of the lower->upper traversal; the reverse is "down"
    direction: str = "up"


class Hop(NamedTuple):
    switch: SwitchPosition
    out_port: int

    def __str__(self):
        return f"sw({self.switch.stage},{self.switch.index}):{self.out_port}"


class PortRef(NamedTuple):
    """An output port. ``stage == 0`` denotes an end-node's injection port."""

    stage: int
    index: int
    port: int


@dataclass(frozen=True, eq=False)
class RLFT:
    params: RLFTParams
    stage_sizes: tuple
    offsets: tuple
    links: tuple
    attachments: tuple  # per node: (global switch id, port)
    # peer[g, p] = (kind, ident, port) at the far end of switch g's port p
    peer: np.ndarray = field(repr=False)

    @property
    def arity(self) -> int:
        return self.params.arity

    @property
    def ports(self) -> int:
        return self.params.ports

    @property
    def stages(self) -> int:
        return self.params.stages

    @property
    def node_count(self) -> int:
        return self.params.nodes

    @property
    def switch_count(self) -> int:
        return len(self.peer)

    def switches_in_stage(self, stage: int) -> list[SwitchPosition]:
        return [SwitchPosition(stage, i) for i in range(self.stage_sizes[stage - 1])]

    def gid(self, pos: SwitchPosition) -> int:
        stage, index = pos
        if not 1 <= stage <= self.stages or not 0 <= index < self.stage_sizes[stage - 1]:
            raise TopologyError(f"no switch at {pos}")
        return self.offsets[stage - 1] + index

    def position(self, gid: int) -> SwitchPosition:
        for stage in range(self.stages, 0, -1):
            if gid >= self.offsets[stage - 1]:
                return SwitchPosition(stage, gid - self.offsets[stage - 1])
        raise TopologyError(f"no switch with global id {gid}")

    def check_node(self, node: int) -> None:
        if not 0 <= node < self.node_count:
            raise TopologyError(f"node {node} outside 0..{self.node_count - 1}")

    def subtree(self, pos: SwitchPosition) -> int:
        """The ``w`` label: index of the node block served by ``pos``."""
        if pos.stage == self.stages:
            return 0
        return pos.index // self.arity ** (pos.stage - 1)

    def replica(self, pos: SwitchPosition) -> int:
        if pos.stage == self.stages:
            return pos.index
        return pos.index % self.arity ** (pos.stage - 1)

    def reaches_down(self, pos: SwitchPosition, dst: int) -> bool:
        if pos.stage == self.stages:
            return True
        return dst // self.arity**pos.stage == self.subtree(pos)

    def is_up_port(self, pos: SwitchPosition, port: int) -> bool:
        return pos.stage < self.stages and port >= self.arity

    def leaf_of(self, node: int) -> SwitchPosition:
        self.check_node(node)
        return self.position(self.attachments[node][0])

    def common_stage(self, src: int, dst: int) -> int:
        """Stage of the nearest common ancestor level of two nodes."""
        for stage in range(1, self.stages):
            if src // self.arity**stage == dst // self.arity**stage:
                return stage
        return self.stages


def build_rlft(params: RLFTParams) -> RLFT:
    """Wire an RLFT.

    Produces ``N = 2K^T`` nodes and ``N(2T-1)/2K`` switches; stage-1
    switches hold ``K`` nodes each (all ``2K`` for a one-stage tree).
    """
    k, t = params.arity, params.stages
    n = params.nodes
    sizes = tuple(2 * k ** (t - 1) if s < t else k ** (t - 1) for s in range(1, t + 1))
    offsets = tuple(int(x) for x in np.concatenate([[0], np.cumsum(sizes)[:-1]]))
    total = sum(sizes)
    assert total == params.switches
    p = params.ports
    peer = np.full((total, p, 3), -1, dtype=np.int64)
    links = []
    attachments = []

    for node in range(n):
        if t == 1:
            g, port = 0, node
        else:
            g, port = offsets[0] + node // k, node % k
        attachments.append((g, port))
        peer[g, port] = (NODE, node, 0)
        links.append(Link(Endpoint(NODE, node, 0), Endpoint(SWITCH, g, port)))

    for stage in range(1, t):
        reps = k ** (stage - 1)
        for index in range(sizes[stage - 1]):
            w, h = divmod(index, reps)
            g = offsets[stage - 1] + index
            for u in range(k):
                if stage + 1 < t:
                    parent = (w // k) * k**stage + h + u * reps
                    parent_port = w % k
                else:
                    parent = h + u * reps
                    parent_port = w
                pg = offsets[stage] + parent
                peer[g, k + u] = (SWITCH, pg, parent_port)
                peer[pg, parent_port] = (SWITCH, g, k + u)
                links.append(Link(Endpoint(SWITCH, g, k + u), Endpoint(SWITCH, pg, parent_port)))

    peer.setflags(write=False)
    return RLFT(params, sizes, offsets, tuple(links), tuple(attachments), peer)


def down_port_of(rlft: RLFT, pos: SwitchPosition, dst: int) -> int:
    """The unique downward output port toward ``dst``."""
    rlft.check_node(dst)
    if not rlft.reaches_down(pos, dst):
        raise RoutingError(f"node {dst} is not below switch {pos}")
    k = rlft.arity
    if pos.stage == rlft.stages:
        return dst // k ** (rlft.stages - 1)
    return (dst // k ** (pos.stage - 1)) % k


def enumerate_shortest_paths(rlft: RLFT, src: int, dst: int) -> list[tuple[Hop, ...]]:
    """All up*-turnaround-down* shortest paths from ``src`` to ``dst``.

    The search walks the wired peer table, so it exercises the wiring rather
    than the digit arithmetic. The number of paths is ``K**(s-1)`` where
    ``s`` is the stage of the nearest common ancestor level.
    """
    rlft.check_node(src)
    rlft.check_node(dst)
    if src == dst:
        raise RoutingError(f"degenerate pair: src == dst == {src}")
    k = rlft.arity
    peer = rlft.peer
    paths = []

    def descend(g, prefix):
        while True:
            pos = rlft.position(g)
            port = down_port_of(rlft, pos, dst)
            prefix = prefix + (Hop(pos, port),)
            kind, ident, _ = peer[g, port]
            if kind == NODE:
                assert ident == dst
                return prefix
            g = int(ident)

    def climb(g, prefix):
        pos = rlft.position(g)
        if rlft.reaches_down(pos, dst):
            paths.append(descend(g, prefix))
            return
        for u in range(k):
            kind, ident, _ = peer[g, k + u]
            climb(int(ident), prefix + (Hop(pos, k + u),))

    climb(rlft.attachments[src][0], ())
    return paths


def allowed_route_ports(rlft: RLFT, routing, start: int, dst: int):
    """Output ports ``(gid, port)`` reachable from switch ``start`` toward ``dst``.

    Follows every upward port the path selection could pick under
    ``routing``, then the unique downward ports.
    """
    from .routing import allowed_up_ports

    k = rlft.arity
    peer = rlft.peer
    out = []
    frontier = [start]
    seen = set()
    while frontier:
        g = frontier.pop()
        if g in seen:
            continue
        seen.add(g)
        pos = rlft.position(g)
        if rlft.reaches_down(pos, dst):
            port = down_port_of(rlft, pos, dst)
            out.append((g, port))
            if peer[g, port, 0] == SWITCH:
                frontier.append(int(peer[g, port, 1]))
            continue
        for u in allowed_up_ports(rlft, pos, dst, routing):
            out.append((g, k + u))
            frontier.append(int(peer[g, k + u, 1]))
    return out


def destinations_per_port(rlft: RLFT, routing) -> dict[PortRef, frozenset]:
    """Destinations whose allowed routes cross each output port.

    "Allowed" is the union of everything the path selection could ever pick
    for the given routing configuration, whatever the credit state.
    End-node injection ports appear with ``stage == 0``; every switch port is
    present, possibly with an empty set.
    """
    n = rlft.node_count
    sets: dict[PortRef, set] = {}
    for node in range(n):
        sets[PortRef(0, node, 0)] = set(range(n)) - {node}
    for g in range(rlft.switch_count):
        pos = rlft.position(g)
        for port in range(rlft.ports):
            sets[PortRef(pos.stage, pos.index, port)] = set()

    for dst in range(n):
        starts = {rlft.attachments[s][0] for s in range(n) if s != dst}
        seen = set()
        for start in starts:
            for g, port in allowed_route_ports(rlft, routing, start, dst):
                if (g, port) in seen:
                    continue
                seen.add((g, port))
                pos = rlft.position(g)
                sets[PortRef(pos.stage, pos.index, port)].add(dst)
    return {ref: frozenset(v) for ref, v in sets.items()}


def port_column(rlft: RLFT, ref: PortRef) -> str:
    """Table column for an output port: ``EU``, ``S<t>U`` or ``S<t>D``."""
    if ref.stage == 0:
        return "EU"
    pos = SwitchPosition(ref.stage, ref.index)
    return f"S{ref.stage}{'U' if rlft.is_up_port(pos, ref.port) else 'D'}"


def table_columns(stages: int) -> list[str]:
    up = [f"S{s}U" for s in range(1, stages)]
    down = [f"S{s}D" for s in range(stages, 0, -1)]
    return ["EU"] + up + down


# Rows of the destinations-per-port table: (adaptive stages, apply K/delta).
# ``None`` stages means every upward stage; an empty tuple is deterministic.
TABLE_ROWS = {
    "Deterministic (D-mod-K)": ((), False),
    "Fully adaptive and oblivious": (None, False),
    "Adaptive Stage 1 (1S)": ((1,), False),
    "Adaptive Stage 2 (2S)": ((2,), False),
    "All stages (*S) and K/Delta": (None, True),
    "Adaptive Stage 1 (1S) and K/Delta": ((1,), True),
    "Adaptive Stage 2 (2S) and K/Delta": ((2,), True),
}


def stage_fanouts(k: int, stages: int, adaptive, use_delta: bool, delta: int) -> list[int]:
    """Candidate upward ports per destination at stages ``1..T-1``."""
    wide = k // delta if use_delta else k
    out = []
    for s in range(1, stages):
        on = adaptive is None or s in adaptive
        out.append(wide if on else 1)
    return out


def expected_destinations(row: str, column: str, k: int, stages: int, delta: int = 1) -> int:
    """Closed-form cell of the destinations-per-port table, any stage count.

    With ``f_s`` candidate ports at upward stage ``s`` (``1`` when that stage
    routes deterministically, ``K`` when fully adaptive, ``K/delta`` under the
    port restriction), an upward port at stage ``s`` carries
    ``(N - K^s) * f_1...f_s / K^s`` destinations and a downward port at stage
    ``s`` carries ``f_1...f_{s-1}``. For ``T = 3`` this reproduces the
    published rows.
    """
    adaptive, use_delta = TABLE_ROWS[row]
    n = 2 * k**stages
    f = stage_fanouts(k, stages, adaptive, use_delta, delta)
    if column == "EU":
        return n - 1
    stage, direction = int(column[1:-1]), column[-1]
    if direction == "U":
        num = (n - k**stage) * int(np.prod(f[:stage], dtype=np.int64))
        den = k**stage
    else:
        num = int(np.prod(f[: stage - 1], dtype=np.int64))
        den = 1
    if num % den:
        raise ValueError(f"non-integral cell {row}/{column} for K={k}, T={stages}, delta={delta}")
    return num // den


def row_routing(row: str, stages: int, delta: int):
    """RoutingConfig whose selectable-port union matches a table row."""
    from .routing import RoutingConfig

    adaptive, use_delta = TABLE_ROWS[row]
    if adaptive == ():
        return RoutingConfig(mode="deterministic")
    stage = "all" if adaptive is None else adaptive[0]
    return RoutingConfig(mode="adaptive", triggering="NoTH", stage=stage, delta=delta if use_delta else 1)


class TableCell(NamedTuple):
    row: str
    column: str
    expected: int
    observed: tuple  # sorted distinct per-port cardinalities
    ok: bool


def table_check(rlft: RLFT, delta: int) -> list[TableCell]:
    """Compare per-port destination counts against the closed-form table.

    A cell passes only when every port of that column carries exactly the
    expected number of destinations.
    """
    k, t = rlft.arity, rlft.stages
    cells = []
    for row in TABLE_ROWS:
        dpp = destinations_per_port(rlft, row_routing(row, t, delta))
        by_col: dict[str, set] = {}
        for ref, dsts in dpp.items():
            by_col.setdefault(port_column(rlft, ref), set()).add(len(dsts))
        for col in table_columns(t):
            exp = expected_destinations(row, col, k, t, delta)
            obs = tuple(sorted(by_col.get(col, {0})))
            cells.append(TableCell(row, col, exp, obs, obs == (exp,)))
    return cells
