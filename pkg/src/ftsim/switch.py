"""Input-queued switches with per-VC buffers, optional VOQs and iSLIP.

The whole network's buffer state lives in one :class:`Fabric` of flat numpy
arrays so the compiled kernel can touch it without Python objects. Packets
are whole-MTU units; credits count packets.

Non-VOQ input buffers are one FIFO per (port, VC): the head is routed once,
when it first competes, and keeps that output. With VOQs, each (port, VC)
buffer is split per output on arrival, with the VC capacity shared by its
VOQs since flow control is per VC.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from .errors import ConfigError, FlowControlError
from .queuing import vc_for
from .rng import next_below
from .routing import MODE_ADAPTIVE, MODE_DETERMINISTIC, select_up_port
from .topology import NODE, RLFT

INFINITE_CREDITS = 1 << 40

# integer parameter vector layout
(
    P_NODES,
    P_SWITCHES,
    P_PORTS,
    P_ARITY,
    P_STAGES,
    P_VCS,
    P_CAPACITY,
    P_VOQ,
    P_SER,
    P_PROP,
    P_MODE,
    P_TRIG,
    P_LTTH,
    P_HTTH,
    P_STAGE,
    P_DELTA,
    P_SCHEME,
    P_GSIZE,
    P_LEAFW,
    P_ITERS,
) = range(20)
N_PARAMS = 20

# error codes reported by kernels
OK = 0
ERR_BUFFER_OVERFLOW = 1
ERR_NO_CREDIT = 2
ERR_CREDIT_OVERFLOW = 3
ERR_POOL_EXHAUSTED = 4
ERR_QUEUE_FULL = 5
ERR_CREDIT_AUDIT = 6
ERR_PACKET_AUDIT = 7
ERR_DEADLOCK = 8
ERR_CAUSALITY = 9

ERROR_TEXT = {
    ERR_BUFFER_OVERFLOW: "packet arrived at a full VC buffer",
    ERR_NO_CREDIT: "forwarded without a downstream credit",
    ERR_CREDIT_OVERFLOW: "credit return exceeded VC capacity",
    ERR_POOL_EXHAUSTED: "packet pool exhausted",
    ERR_QUEUE_FULL: "event queue overflow",
    ERR_CREDIT_AUDIT: "credit conservation audit failed",
    ERR_PACKET_AUDIT: "packet conservation audit failed",
    ERR_DEADLOCK: "no delivery progress while packets are resident",
    ERR_CAUSALITY: "event scheduled in the past",
}


@dataclass(frozen=True)
class SwitchConfig:
    """Buffering options shared by every switch and NIC."""

    voq: bool = False
    buffer_bytes: int = 192_000
    mtu_bytes: int = 4000

    def __post_init__(self):
        if self.mtu_bytes <= 0 or self.buffer_bytes < self.mtu_bytes:
            raise ConfigError(f"buffer of {self.buffer_bytes} B cannot hold a {self.mtu_bytes} B packet")

    def capacity(self, vcs: int) -> int:
        """Packets per VC: the port buffer split evenly across VCs."""
        cap = (self.buffer_bytes // self.mtu_bytes) // vcs
        if cap < 1:
            raise ConfigError(f"{self.buffer_bytes} B per port leaves no room per VC with {vcs} VCs")
        return cap


class Fabric(NamedTuple):
    prm: np.ndarray
    pow_k: np.ndarray  # K**i
    # topology
    stage_of: np.ndarray  # [S]
    subtree_of: np.ndarray  # [S]
    peer_kind: np.ndarray  # [S, P]
    peer_id: np.ndarray
    peer_port: np.ndarray
    node_leaf: np.ndarray  # [N]
    node_port: np.ndarray
    # packet pool
    pk_src: np.ndarray
    pk_dst: np.ndarray
    pk_vc: np.ndarray
    pk_out: np.ndarray
    pk_birth: np.ndarray
    pk_free: np.ndarray
    pool_top: np.ndarray  # [1] number of free slots on the stack
    # switch input buffers
    qbuf: np.ndarray  # [S, P, Q, C]
    qhead: np.ndarray  # [S, P, Q]
    qcnt: np.ndarray  # [S, P, Q]
    vbuf: np.ndarray  # [S, P, Q, P, C] when VOQ, else dummy
    vhead: np.ndarray
    vcnt: np.ndarray
    vmask: np.ndarray  # [S, P, Q] bitmask of non-empty VOQs
    load: np.ndarray  # [S] resident packets
    # switch output side
    cred: np.ndarray  # [S, P, Q]
    flags: np.ndarray  # [S, P, Q]
    g_ptr: np.ndarray  # [S, P]
    a_ptr: np.ndarray  # [S, P]
    vc_ptr: np.ndarray  # [S, P]
    # end-node NICs
    nbuf: np.ndarray  # [N, Q, C]
    nhead: np.ndarray
    ncnt: np.ndarray
    ncred: np.ndarray  # [N, Q]
    nvc_ptr: np.ndarray  # [N]
    # per-switch random streams (oblivious routing)
    sw_rng: np.ndarray


def make_params(
    rlft: RLFT,
    *,
    vcs: int,
    capacity: int,
    voq: bool,
    ser_ns: int = 320,
    prop_ns: int = 6,
    routing=None,
    scheme=None,
    iterations: int | None = None,
) -> np.ndarray:
    prm = np.zeros(N_PARAMS, np.int64)
    prm[P_NODES] = rlft.node_count
    prm[P_SWITCHES] = rlft.switch_count
    prm[P_PORTS] = rlft.ports
    prm[P_ARITY] = rlft.arity
    prm[P_STAGES] = rlft.stages
    prm[P_VCS] = vcs
    prm[P_CAPACITY] = capacity
    prm[P_VOQ] = int(voq)
    prm[P_SER] = ser_ns
    prm[P_PROP] = prop_ns
    prm[P_ITERS] = rlft.ports if iterations is None else iterations
    if routing is not None:
        prm[P_MODE] = routing.mode_code
        prm[P_TRIG] = routing.trigger_code
        prm[P_LTTH] = routing.ltth
        prm[P_HTTH] = routing.htth
        prm[P_STAGE] = routing.stage_code
        prm[P_DELTA] = routing.delta
    else:
        prm[P_DELTA] = 1
    prm[P_LEAFW] = rlft.arity if rlft.stages > 1 else rlft.ports
    prm[P_GSIZE] = -(-rlft.node_count // vcs)
    if scheme is not None:
        prm[P_SCHEME] = scheme.code
    return prm


def make_fabric(rlft: RLFT, prm: np.ndarray, sw_rng: np.ndarray | None = None, pool: int | None = None) -> Fabric:
    n, s, p = rlft.node_count, rlft.switch_count, rlft.ports
    q, c = int(prm[P_VCS]), int(prm[P_CAPACITY])
    voq = bool(prm[P_VOQ])
    if p > 63:
        raise ValueError("request bitmasks support at most 63 ports")
    if pool is None:
        # every buffered packet plus at most two per link in flight
        pool = (s * p + n) * q * c + 2 * (s * p + n)
    stage_of = np.array([rlft.position(g).stage for g in range(s)], np.int64)
    subtree_of = np.array([rlft.subtree(rlft.position(g)) for g in range(s)], np.int64)
    peer = rlft.peer
    cred = np.full((s, p, q), c, np.int64)
    cred[peer[:, :, 0] == NODE] = INFINITE_CREDITS
    cred[peer[:, :, 0] < 0] = 0
    vshape = (s, p, q, p, c) if voq else (1, 1, 1, 1, 1)
    return Fabric(
        prm=prm,
        pow_k=np.array([rlft.arity**i for i in range(rlft.stages + 1)], np.int64),
        stage_of=stage_of,
        subtree_of=subtree_of,
        peer_kind=np.ascontiguousarray(peer[:, :, 0]),
        peer_id=np.ascontiguousarray(peer[:, :, 1]),
        peer_port=np.ascontiguousarray(peer[:, :, 2]),
        node_leaf=np.array([a[0] for a in rlft.attachments], np.int64),
        node_port=np.array([a[1] for a in rlft.attachments], np.int64),
        pk_src=np.zeros(pool, np.int64),
        pk_dst=np.zeros(pool, np.int64),
        pk_vc=np.zeros(pool, np.int64),
        pk_out=np.full(pool, -1, np.int64),
        pk_birth=np.full(pool, -1, np.int64),
        pk_free=np.arange(pool - 1, -1, -1, dtype=np.int64),
        pool_top=np.array([pool], np.int64),
        qbuf=np.zeros((s, p, q, c), np.int64),
        qhead=np.zeros((s, p, q), np.int64),
        qcnt=np.zeros((s, p, q), np.int64),
        vbuf=np.zeros(vshape, np.int64),
        vhead=np.zeros(vshape[:4], np.int64),
        vcnt=np.zeros(vshape[:4], np.int64),
        vmask=np.zeros((s, p, q), np.int64),
        load=np.zeros(s, np.int64),
        cred=cred,
        flags=np.zeros((s, p, q), np.bool_),
        g_ptr=np.zeros((s, p), np.int64),
        a_ptr=np.zeros((s, p), np.int64),
        vc_ptr=np.zeros((s, p), np.int64),
        nbuf=np.zeros((n, q, c), np.int64),
        nhead=np.zeros((n, q), np.int64),
        ncnt=np.zeros((n, q), np.int64),
        ncred=np.full((n, q), c, np.int64),
        nvc_ptr=np.zeros(n, np.int64),
        sw_rng=np.zeros(s, np.uint64) if sw_rng is None else sw_rng,
    )


# packet pool -----------------------------------------------------------------


@njit(cache=True)
def pool_alloc(fab, src, dst, vc, birth):
    pk_src = fab.pk_src; pk_dst = fab.pk_dst; pk_vc = fab.pk_vc; pk_out = fab.pk_out; pk_birth = fab.pk_birth; pk_free = fab.pk_free; pool_top = fab.pool_top
    top = pool_top[0]
    if top == 0:
        return -1
    top -= 1
    pool_top[0] = top
    pid = pk_free[top]
    pk_src[pid] = src
    pk_dst[pid] = dst
    pk_vc[pid] = vc
    pk_out[pid] = -1
    pk_birth[pid] = birth
    return pid


@njit(cache=True, inline="always")
def pool_release(fab, pid):
    pk_birth = fab.pk_birth; pk_free = fab.pk_free; pool_top = fab.pool_top
    pk_birth[pid] = -1
    pk_free[pool_top[0]] = pid
    pool_top[0] += 1


@njit(cache=True, inline="always")
def packet_vc(fab, src, dst):
    prm = fab.prm
    return vc_for(prm[P_SCHEME], prm[P_VCS], src, dst, prm[P_LEAFW], prm[P_GSIZE])


# routing -----------------------------------------------------------------------


@njit(cache=True)
def route_core(prm, pow_k, stage_of, subtree_of, cred, flags, sw_rng, g, dst, vc):
    k = prm[P_ARITY]
    t = prm[P_STAGES]
    stage = stage_of[g]
    if stage == t:
        return dst // pow_k[t - 1]
    if dst // pow_k[stage] == subtree_of[g]:
        return (dst // pow_k[stage - 1]) % k
    local = dst // pow_k[stage - 1]
    dmodk = local % k
    mode = prm[P_MODE]
    if mode == MODE_DETERMINISTIC:
        return k + dmodk
    if mode != MODE_ADAPTIVE:
        return k + next_below(sw_rng, g, k)
    only = prm[P_STAGE]
    if only != 0 and only != stage:
        return k + dmodk
    u = select_up_port(
        dmodk,
        local,
        vc,
        k,
        prm[P_DELTA],
        prm[P_TRIG],
        prm[P_LTTH],
        prm[P_HTTH],
        prm[P_CAPACITY],
        cred[g, k:],
        flags[g, k:],
    )
    return k + u


# Kernels that receive the whole Fabric must not pass it on to other compiled
# functions: numba then reference-counts every array in the tuple per call,
# which costs more than the work itself. They pass the arrays they need.


@njit(cache=True)
def route_packet(fab, g, pid):
    """Output port for packet ``pid`` at switch ``g`` under current credits."""
    return route_core(
        fab.prm, fab.pow_k, fab.stage_of, fab.subtree_of, fab.cred, fab.flags, fab.sw_rng, g, fab.pk_dst[pid], fab.pk_vc[pid]
    )


# buffers -----------------------------------------------------------------------


@njit(cache=True, inline="always")
def enqueue_input(fab, g, port, pid):
    """Store an arriving packet; VOQ mode routes it immediately."""
    pk_dst = fab.pk_dst; pow_k = fab.pow_k; stage_of = fab.stage_of; subtree_of = fab.subtree_of
    prm = fab.prm; pk_vc = fab.pk_vc; pk_out = fab.pk_out; qbuf = fab.qbuf; qhead = fab.qhead; qcnt = fab.qcnt; vbuf = fab.vbuf; vhead = fab.vhead; vcnt = fab.vcnt; vmask = fab.vmask; load = fab.load
    q = pk_vc[pid]
    c = prm[P_CAPACITY]
    k = prm[P_ARITY]
    n_stages = prm[P_STAGES]
    if qcnt[g, port, q] >= c:
        return ERR_BUFFER_OVERFLOW
    pk_out[pid] = -1
    if prm[P_VOQ]:
        dst = pk_dst[pid]
        stage = stage_of[g]
        if stage == n_stages:
            o = dst // pow_k[n_stages - 1]
        elif dst // pow_k[stage] == subtree_of[g]:
            o = (dst // pow_k[stage - 1]) % k
        else:
            local = dst // pow_k[stage - 1]
            mode = prm[P_MODE]
            only = prm[P_STAGE]
            if mode == MODE_ADAPTIVE and (only == 0 or only == stage):
                o = k + select_up_port(
                    local % k, local, q, k, prm[P_DELTA], prm[P_TRIG], prm[P_LTTH], prm[P_HTTH], prm[P_CAPACITY],
                    fab.cred[g, k:], fab.flags[g, k:],
                )
            elif mode == MODE_ADAPTIVE or mode == MODE_DETERMINISTIC:
                o = k + local % k
            else:
                o = k + next_below(fab.sw_rng, g, k)
        pk_out[pid] = o
        n = vcnt[g, port, q, o]
        vbuf[g, port, q, o, (vhead[g, port, q, o] + n) % c] = pid
        vcnt[g, port, q, o] = n + 1
        vmask[g, port, q] |= np.int64(1) << o
    else:
        n = qcnt[g, port, q]
        qbuf[g, port, q, (qhead[g, port, q] + n) % c] = pid
    qcnt[g, port, q] += 1
    load[g] += 1
    return OK


@njit(cache=True)
def head_packet(fab, g, port, q, o):
    """Packet that would leave (port, q) toward ``o``, or -1."""
    prm = fab.prm; pk_out = fab.pk_out; qbuf = fab.qbuf; qhead = fab.qhead; qcnt = fab.qcnt; vbuf = fab.vbuf; vhead = fab.vhead; vcnt = fab.vcnt
    if prm[P_VOQ]:
        if vcnt[g, port, q, o] == 0:
            return -1
        return vbuf[g, port, q, o, vhead[g, port, q, o]]
    if qcnt[g, port, q] == 0:
        return -1
    pid = qbuf[g, port, q, qhead[g, port, q]]
    if pk_out[pid] != o:
        return -1
    return pid


@njit(cache=True, inline="always")
def dequeue_input(fab, g, port, q, o):
    prm = fab.prm; qbuf = fab.qbuf; qhead = fab.qhead; qcnt = fab.qcnt; vbuf = fab.vbuf; vhead = fab.vhead; vcnt = fab.vcnt; vmask = fab.vmask; load = fab.load
    c = prm[P_CAPACITY]
    if prm[P_VOQ]:
        h = vhead[g, port, q, o]
        pid = vbuf[g, port, q, o, h]
        vhead[g, port, q, o] = (h + 1) % c
        vcnt[g, port, q, o] -= 1
        if vcnt[g, port, q, o] == 0:
            vmask[g, port, q] &= ~(np.int64(1) << o)
    else:
        h = qhead[g, port, q]
        pid = qbuf[g, port, q, h]
        qhead[g, port, q] = (h + 1) % c
    qcnt[g, port, q] -= 1
    load[g] -= 1
    return pid


@njit(cache=True, inline="always")
def build_requests(fab, g, req):
    """Fill ``req[p]`` with the bitmask of outputs input ``p`` can use now.

    A (port, VC) requests an output only while that output holds a credit
    for the VC. Non-VOQ heads are routed here the first time they compete.
    """
    prm = fab.prm; pk_out = fab.pk_out; pk_dst = fab.pk_dst; qbuf = fab.qbuf; qhead = fab.qhead; qcnt = fab.qcnt
    vmask = fab.vmask; cred = fab.cred
    pow_k = fab.pow_k; stage_of = fab.stage_of; subtree_of = fab.subtree_of
    k = prm[P_ARITY]
    n_stages = prm[P_STAGES]
    p_count = prm[P_PORTS]
    q_count = prm[P_VCS]
    any_req = False
    if prm[P_VOQ]:
        for q in range(q_count):
            ok = np.int64(0)
            for o in range(p_count):
                if cred[g, o, q] > 0:
                    ok |= np.int64(1) << o
            for p in range(p_count):
                if q == 0:
                    req[p] = 0
                r = vmask[g, p, q] & ok
                if r:
                    req[p] |= r
                    any_req = True
        return any_req
    for p in range(p_count):
        r = np.int64(0)
        for q in range(q_count):
            if qcnt[g, p, q] == 0:
                continue
            pid = qbuf[g, p, q, qhead[g, p, q]]
            o = pk_out[pid]
            if o < 0:
                dst = pk_dst[pid]
                stage = stage_of[g]
                if stage == n_stages:
                    o = dst // pow_k[n_stages - 1]
                elif dst // pow_k[stage] == subtree_of[g]:
                    o = (dst // pow_k[stage - 1]) % k
                else:
                    local = dst // pow_k[stage - 1]
                    mode = prm[P_MODE]
                    only = prm[P_STAGE]
                    if mode == MODE_ADAPTIVE and (only == 0 or only == stage):
                        o = k + select_up_port(
                            local % k, local, q, k, prm[P_DELTA], prm[P_TRIG], prm[P_LTTH], prm[P_HTTH], prm[P_CAPACITY],
                            fab.cred[g, k:], fab.flags[g, k:],
                        )
                    elif mode == MODE_ADAPTIVE or mode == MODE_DETERMINISTIC:
                        o = k + local % k
                    else:
                        o = k + next_below(fab.sw_rng, g, k)
                pk_out[pid] = o
            if cred[g, o, q] > 0:
                r |= np.int64(1) << o
        req[p] = r
        if r:
            any_req = True
    return any_req


@njit(cache=True, inline="always")
def islip_arbitrate(req, g_ptr, a_ptr, iterations, match_in):
    """iSLIP request/grant/accept over bitmask requests.

    ``req[i]`` has bit ``o`` set when input ``i`` requests output ``o``.
    Grant and accept pointers move one past the matched partner, and only
    for matches made in the first iteration. Stops early once an iteration
    adds nothing. Returns the number of matched pairs; ``match_in[i]`` is the
    output matched to input ``i`` or -1.
    """
    n_in = req.shape[0]
    n_out = g_ptr.shape[0]
    for i in range(n_in):
        match_in[i] = -1
    free_out = (np.int64(1) << n_out) - 1
    free_in = (np.int64(1) << n_in) - 1
    grant = np.empty(n_out, np.int64)
    matched = 0
    for it in range(iterations):
        # grant: each free output picks a requesting free input round-robin
        offered = np.zeros(n_in, np.int64)
        any_grant = False
        for o in range(n_out):
            grant[o] = -1
            if not (free_out >> o) & 1:
                continue
            start = g_ptr[o]
            for d in range(n_in):
                i = start + d
                if i >= n_in:
                    i -= n_in
                if (free_in >> i) & 1 and (req[i] >> o) & 1:
                    grant[o] = i
                    offered[i] |= np.int64(1) << o
                    any_grant = True
                    break
        if not any_grant:
            break
        # accept: each input takes one granting output round-robin
        added = 0
        for i in range(n_in):
            if offered[i] == 0:
                continue
            start = a_ptr[i]
            for d in range(n_out):
                o = start + d
                if o >= n_out:
                    o -= n_out
                if (offered[i] >> o) & 1:
                    match_in[i] = o
                    free_in &= ~(np.int64(1) << i)
                    free_out &= ~(np.int64(1) << o)
                    added += 1
                    if it == 0:
                        g_ptr[o] = (i + 1) % n_in
                        a_ptr[i] = (o + 1) % n_out
                    break
        matched += added
        if added == 0:
            break
    return matched


@njit(cache=True, inline="always")
def pick_vc(fab, g, p, o):
    """Round-robin VC at input ``p`` with a packet for ``o`` and a credit."""
    prm = fab.prm; cred = fab.cred; vc_ptr = fab.vc_ptr; pk_out = fab.pk_out
    qbuf = fab.qbuf; qhead = fab.qhead; qcnt = fab.qcnt; vcnt = fab.vcnt
    q_count = prm[P_VCS]
    voq = prm[P_VOQ]
    start = vc_ptr[g, p]
    for d in range(q_count):
        q = (start + d) % q_count
        if cred[g, o, q] <= 0:
            continue
        if voq:
            ready = vcnt[g, p, q, o] > 0
        else:
            ready = qcnt[g, p, q] > 0 and pk_out[qbuf[g, p, q, qhead[g, p, q]]] == o
        if ready:
            vc_ptr[g, p] = (q + 1) % q_count
            return q
    return -1


# Python-facing wrappers ---------------------------------------------------------


def on_packet_arrival(fab: Fabric, g: int, port: int, pid: int) -> None:
    code = enqueue_input(fab, g, port, pid)
    if code != OK:
        q = int(fab.pk_vc[pid])
        raise FlowControlError(
            f"{ERROR_TEXT[code]}: switch {g} port {port} vc {q} "
            f"(occupancy {int(fab.qcnt[g, port, q])}/{int(fab.prm[P_CAPACITY])})"
        )


def on_credit_return(fab: Fabric, g: int, port: int, vc: int) -> None:
    if fab.cred[g, port, vc] >= fab.prm[P_CAPACITY]:
        raise FlowControlError(f"{ERROR_TEXT[ERR_CREDIT_OVERFLOW]}: switch {g} port {port} vc {vc}")
    fab.cred[g, port, vc] += 1


def forward_matched(fab: Fabric, g: int, matching, now: int) -> list[tuple[int, int, int, int]]:
    """Move matched head packets out of switch ``g``.

    Returns ``(pid, out_port, arrival_time, vc)`` per forwarded packet; the
    kernel does the same inline and schedules the events.
    """
    prm = fab.prm
    sent = []
    for p, o in sorted(matching):
        q = pick_vc(fab, g, p, o)
        if q < 0:
            raise FlowControlError(f"{ERROR_TEXT[ERR_NO_CREDIT]}: switch {g} {p}->{o}")
        pid = int(dequeue_input(fab, g, p, q, o))
        if fab.cred[g, o, q] < INFINITE_CREDITS:
            fab.cred[g, o, q] -= 1
        sent.append((pid, o, now + int(prm[P_SER] + prm[P_PROP]), q))
    return sent


class ISlipPointers(NamedTuple):
    grant: np.ndarray
    accept: np.ndarray

    @classmethod
    def zeros(cls, inputs: int, outputs: int | None = None) -> "ISlipPointers":
        outputs = inputs if outputs is None else outputs
        return cls(np.zeros(outputs, np.int64), np.zeros(inputs, np.int64))


def requests_to_masks(requests, inputs: int) -> np.ndarray:
    """Bitmask rows from a boolean matrix or a mapping ``input -> outputs``."""
    masks = np.zeros(inputs, np.int64)
    if isinstance(requests, dict):
        for i, outs in requests.items():
            for o in outs:
                masks[i] |= 1 << o
        return masks
    mat = np.asarray(requests, dtype=bool)
    for i in range(mat.shape[0]):
        for o in np.flatnonzero(mat[i]):
            masks[i] |= 1 << int(o)
    return masks


def islip(requests, pointers: ISlipPointers, iterations: int | None = None) -> set[tuple[int, int]]:
    """Match inputs to outputs; ``pointers`` are updated in place."""
    inputs = pointers.accept.shape[0]
    masks = requests_to_masks(requests, inputs)
    iterations = max(inputs, pointers.grant.shape[0]) if iterations is None else iterations
    match = np.empty(inputs, np.int64)
    islip_arbitrate(masks, pointers.grant, pointers.accept, iterations, match)
    return {(i, int(o)) for i, o in enumerate(match) if o >= 0}
