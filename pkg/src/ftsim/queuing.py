"""Static queuing schemes: destination/flow to virtual-channel mappings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from numba import njit

from .errors import ConfigError
from .topology import RLFT, SWITCH, allowed_route_ports

SCHEMES = ("1Q", "DBBM", "VFTREE", "FLOW2SL")
SCHEME_1Q, SCHEME_DBBM, SCHEME_VFTREE, SCHEME_FLOW2SL = range(4)

_ALIASES = {"ONEQ": "1Q", "1VC": "1Q", "FLOW2SL": "FLOW2SL", "VFTREE": "VFTREE", "DBBM": "DBBM", "1Q": "1Q"}


@dataclass(frozen=True)
class QueueScheme:
    variant: str = "1Q"
    vcs: int | None = None

    def __post_init__(self):
        variant = _ALIASES.get(str(self.variant).upper())
        if variant is None:
            raise ConfigError(f"unknown queuing scheme {self.variant!r}")
        object.__setattr__(self, "variant", variant)
        vcs = self.vcs
        if vcs is None:
            vcs = 1 if variant == "1Q" else 3
        if variant == "1Q" and vcs != 1:
            raise ConfigError(f"1Q uses a single VC, got vcs={vcs}")
        if vcs < 1:
            raise ConfigError(f"vcs must be >= 1, got {vcs}")
        object.__setattr__(self, "vcs", int(vcs))

    @property
    def code(self) -> int:
        return SCHEMES.index(self.variant)

    @property
    def label(self) -> str:
        return "1Q" if self.variant == "1Q" else f"{self.variant}{self.vcs}"


def group_size(nodes: int, vcs: int) -> int:
    return -(-nodes // vcs)


@njit(cache=True)
def vc_for(scheme, vcs, src, dst, k, gsize):
    if scheme == SCHEME_DBBM:
        return dst % vcs
    if scheme == SCHEME_VFTREE:
        return (dst // k - src // k) % vcs
    if scheme == SCHEME_FLOW2SL:
        return (dst // gsize - src // gsize) % vcs
    return 0


def map_to_vc(scheme: QueueScheme, src: int, dst: int, rlft: RLFT) -> int:
    """VC assigned at injection and kept for the whole route."""
    rlft.check_node(src)
    rlft.check_node(dst)
    leaf_width = rlft.arity if rlft.stages > 1 else rlft.ports
    return int(
        vc_for(scheme.code, scheme.vcs, src, dst, leaf_width, group_size(rlft.node_count, scheme.vcs))
    )


class BufferRef(NamedTuple):
    """A switch input buffer; ``upward`` is True when it stores upward-phase packets."""

    stage: int
    index: int
    port: int
    upward: bool


def input_buffer(rlft: RLFT, g: int, port: int) -> BufferRef:
    pos = rlft.position(g)
    upward = pos.stage == rlft.stages or port < rlft.arity
    return BufferRef(pos.stage, pos.index, port, upward)


def mapping_table(scheme: QueueScheme, rlft: RLFT, routing) -> dict[BufferRef, tuple]:
    """Destinations that can occupy each VC of each switch input buffer.

    Every buffer maps to a tuple of ``vcs`` frozensets. Traffic is all-to-all
    under the routes ``routing`` can ever select.
    """
    n = rlft.node_count
    peer = rlft.peer
    table: dict[BufferRef, list] = {}
    for g in range(rlft.switch_count):
        for port in range(rlft.ports):
            table[input_buffer(rlft, g, port)] = [set() for _ in range(scheme.vcs)]

    by_leaf: dict[int, list] = {}
    for src in range(n):
        by_leaf.setdefault(rlft.attachments[src][0], []).append(src)

    for dst in range(n):
        for leaf, sources in by_leaf.items():
            hops = allowed_route_ports(rlft, routing, leaf, dst)
            vcs = {map_to_vc(scheme, s, dst, rlft) for s in sources if s != dst}
            if not vcs:
                continue
            for g, port in hops:
                kind, ident, peer_port = peer[g, port]
                if kind != SWITCH:
                    continue
                ref = input_buffer(rlft, int(ident), int(peer_port))
                for vc in vcs:
                    table[ref][vc].add(dst)
    return {ref: tuple(frozenset(s) for s in sets) for ref, sets in table.items()}
