"""Output-port selection: D-mod-K, oblivious, and restricted adaptive routing.

Upward ports are addressed by their index ``u`` in ``0..K-1`` (switch port
``K + u``). Downward ports use the raw switch port number.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError, RoutingError
from .rng import next_below
from .topology import RLFT, SwitchPosition, down_port_of

MODES = ("deterministic", "oblivious", "adaptive")
TRIGGERS = ("NoTH", "TH", "2TH")

# kernel codes
MODE_DETERMINISTIC, MODE_OBLIVIOUS, MODE_ADAPTIVE = 0, 1, 2
TRIG_NOTH, TRIG_TH, TRIG_2TH = 0, 1, 2
ALL_STAGES = 0


@dataclass(frozen=True)
class RoutingConfig:
    """Routing mode plus the three adaptivity restrictions.

    ``ltth``/``htth`` are free-credit counts per VC. ``stage`` is ``"all"`` or
    the single stage (1-based) where adaptive choices are allowed. ``delta``
    of 1 disables the port filter.
    """

    mode: str = "deterministic"
    triggering: str = "NoTH"
    ltth: int = 0
    htth: int = 0
    stage: int | str = "all"
    delta: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown routing mode {self.mode!r}")
        if self.triggering not in TRIGGERS:
            raise ConfigError(f"unknown triggering option {self.triggering!r}")
        if self.stage != "all" and not (isinstance(self.stage, int) and self.stage >= 1):
            raise ConfigError(f"stage must be 'all' or a positive integer, got {self.stage!r}")
        if self.delta < 1:
            raise ConfigError(f"delta must be >= 1, got {self.delta}")

    def validate(self, arity: int, capacity: int) -> "RoutingConfig":
        """Check the fields that depend on the switch arity and VC capacity."""
        if self.delta > arity:
            raise ConfigError(f"delta {self.delta} exceeds arity {arity}")
        if self.delta > 1 and arity % self.delta:
            raise ConfigError(f"delta {self.delta} does not divide arity {arity}")
        if self.mode == "adaptive" and self.triggering in ("TH", "2TH"):
            if not 0 < self.ltth <= capacity:
                raise ConfigError(f"ltth must be in 1..{capacity}, got {self.ltth}")
        if self.mode == "adaptive" and self.triggering == "2TH":
            if not self.ltth < self.htth <= capacity:
                raise ConfigError(
                    f"2TH needs ltth < htth <= {capacity}, got ltth={self.ltth} htth={self.htth}"
                )
        return self

    @property
    def mode_code(self) -> int:
        return MODES.index(self.mode)

    @property
    def trigger_code(self) -> int:
        return TRIGGERS.index(self.triggering)

    @property
    def stage_code(self) -> int:
        return ALL_STAGES if self.stage == "all" else int(self.stage)

    def adapts_at(self, stage: int) -> bool:
        return self.mode == "adaptive" and (self.stage == "all" or self.stage == stage)


def _upward(rlft: RLFT, pos: SwitchPosition, dst: int) -> None:
    rlft.gid(pos)
    rlft.check_node(dst)
    if pos.stage >= rlft.stages:
        raise RoutingError(f"no upward hop from top-stage switch {pos}")


def dmodk_up_port(rlft: RLFT, pos: SwitchPosition, dst: int) -> int:
    """D-mod-K: the base-K digit ``stage-1`` of the destination."""
    _upward(rlft, pos, dst)
    k = rlft.arity
    return (dst // k ** (pos.stage - 1)) % k


def down_port(rlft: RLFT, pos: SwitchPosition, dst: int) -> int:
    return down_port_of(rlft, pos, dst)


def stage_local_destination(dst: int, k: int, stage: int) -> int:
    """Destination label as seen by D-mod-K at ``stage``."""
    return dst // k ** (stage - 1)


def candidate_ports(dst: int, k: int, delta: int) -> list[int]:
    """Upward indices kept by the K/delta filter, ascending."""
    if not 1 <= delta <= k:
        raise ConfigError(f"delta must be in 1..{k}, got {delta}")
    if delta == 1:
        return list(range(k))
    return list(range(dst % delta, k, delta))


@njit(cache=True, inline="always")
def select_up_port(dmodk, local_dst, vc, k, delta, triggering, ltth, htth, capacity, credits, flags):
    """Restricted path selection over upward ports of one switch.

    ``credits`` and ``flags`` are ``[K, Q]`` views of the free downstream
    credits and congestion flags. Returns the chosen upward index; may update
    ``flags[dmodk, vc]`` under the two-threshold option.
    """
    port = dmodk
    if triggering == TRIG_TH:
        if credits[port, vc] >= ltth:
            return port
        best = ltth
    elif triggering == TRIG_2TH:
        if credits[port, vc] >= ltth and not flags[port, vc]:
            return port
        if credits[port, vc] >= htth:
            flags[port, vc] = False
            return port
        flags[port, vc] = True
        best = ltth
    else:
        best = 0
    if delta > 1:
        start = local_dst % delta
        step = delta
    else:
        start = 0
        step = 1
    for i in range(start, k, step):
        c = credits[i, vc]
        if c > best:
            best = c
            port = i
            if best == capacity:
                break
    return port


def restricted_path_selection(
    rlft: RLFT,
    pos: SwitchPosition,
    dst: int,
    vc: int,
    cfg: RoutingConfig,
    credits: np.ndarray,
    flags: np.ndarray,
    capacity: int,
) -> int:
    """Pick an upward port for a packet in its upward phase.

    Starts from the D-mod-K port and only deviates when ``cfg`` allows
    adaptivity at this stage; the threshold options decide when. The K/delta
    filter is applied to the stage-local destination label, so the D-mod-K
    port is always among the candidates.
    """
    dmodk = dmodk_up_port(rlft, pos, dst)
    if not cfg.adapts_at(pos.stage):
        return dmodk
    k = rlft.arity
    credits = np.ascontiguousarray(credits, dtype=np.int64)
    if credits.shape[0] != k or flags.shape != credits.shape:
        raise RoutingError(f"credit view must be [K={k}, Q], got {credits.shape}")
    return int(
        select_up_port(
            dmodk,
            stage_local_destination(dst, k, pos.stage),
            vc,
            k,
            cfg.delta,
            cfg.trigger_code,
            cfg.ltth,
            cfg.htth,
            capacity,
            credits,
            flags,
        )
    )


@njit(cache=True)
def _oblivious(state, stream, k):
    return next_below(state, stream, k)


def oblivious_port(k: int, stream) -> int:
    """Uniform choice over the ``k`` upward ports from a seeded stream."""
    if k == 1:
        return 0
    return int(_oblivious(stream.state, 0, k))


def allowed_up_ports(rlft: RLFT, pos: SwitchPosition, dst: int, cfg: RoutingConfig) -> list[int]:
    """Every upward index the selection could return, over all credit states."""
    dmodk = dmodk_up_port(rlft, pos, dst)
    if cfg.mode == "deterministic":
        return [dmodk]
    if cfg.mode == "oblivious":
        return list(range(rlft.arity))
    if not cfg.adapts_at(pos.stage):
        return [dmodk]
    local = stage_local_destination(dst, rlft.arity, pos.stage)
    return candidate_ports(local, rlft.arity, cfg.delta)
