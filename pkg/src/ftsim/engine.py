"""Discrete-event run loop.

Time is integer nanoseconds. Every ``serialization`` ns an arbitration
epoch lets each NIC send one packet and each switch run iSLIP and forward
its matches. A packet sent at ``t`` lands at ``t + serialization +
propagation`` and can compete at the first epoch after that; the freed slot
is credited back upstream ``propagation`` ns after the send.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ._borrow import borrow
from .errors import AuditError, ConfigError, FlowControlError
from .events import (
    ARBITRATE,
    AUDIT,
    INJECTION,
    METRICS_TICK,
    SRC_ARRIVAL,
    SRC_CREDIT,
    SRC_HEAP,
    SRC_NONE,
    heap_pop,
    heap_push,
    lane_entry,
    lane_pop,
    lane_push,
    lane_size,
    make_heap,
    make_lane,
    next_source,
    source_time,
)
from .queuing import QueueScheme
from .rng import SWITCH_STREAM_BASE, next_exponential, seed_streams
from .routing import RoutingConfig
from .switch import (
    ERR_BUFFER_OVERFLOW,
    ERR_CREDIT_AUDIT,
    ERR_CREDIT_OVERFLOW,
    ERR_DEADLOCK,
    ERR_NO_CREDIT,
    ERR_PACKET_AUDIT,
    ERR_POOL_EXHAUSTED,
    ERR_QUEUE_FULL,
    ERROR_TEXT,
    INFINITE_CREDITS,
    OK,
    P_CAPACITY,
    P_ITERS,
    P_NODES,
    P_PORTS,
    P_PROP,
    P_SER,
    P_STAGES,
    P_SWITCHES,
    P_VCS,
    P_VOQ,
    SwitchConfig,
    build_requests,
    dequeue_input,
    enqueue_input,
    islip_arbitrate,
    make_fabric,
    make_params,
    packet_vc,
    pick_vc,
    pool_release,
)
from .topology import NODE, RLFT
from .traffic import ROLE_SILENT, TrafficPattern, assign_roles, draw_destination

# sim parameter vector
S_DURATION, S_BIN, S_AUDIT, S_WINDOW, S_BOUND, S_NBINS = range(6)
# stats vector
(
    ST_ERR,
    ST_TIME,
    ST_A,
    ST_B,
    ST_C,
    ST_INJECTED,
    ST_DELIVERED,
    ST_EVENTS,
    ST_AUDITS,
    ST_SEQ,
    ST_LAST_DELIVERY,
) = range(11)
N_STATS = 11

LIVENESS_SERVICE_TIMES = 10


@dataclass(frozen=True)
class SimConfig:
    duration_ns: int = 3_000_000
    warmup_ns: int = 1_000_000
    seed: int = 1
    metrics_bin_ns: int = 10_000
    audit_interval_ns: int = 100_000
    bandwidth_gbps: float = 100.0
    propagation_ns: int = 6

    def __post_init__(self):
        if self.bandwidth_gbps <= 0:
            raise ConfigError(f"bandwidth must be positive, got {self.bandwidth_gbps}")
        if not 0 <= self.warmup_ns < self.duration_ns:
            raise ConfigError(f"need 0 <= warmup < duration, got {self.warmup_ns} and {self.duration_ns}")
        if self.metrics_bin_ns <= 0:
            raise ConfigError("metrics bin must be positive")
        if self.propagation_ns < 0:
            raise ConfigError("propagation delay must be non-negative")
        if self.audit_interval_ns < 0:
            raise ConfigError("audit interval must be non-negative (0 disables periodic audits)")

    def serialization_ns(self, mtu_bytes: int) -> int:
        ns = mtu_bytes * 8 / self.bandwidth_gbps
        if abs(ns - round(ns)) > 1e-9:
            raise ConfigError(f"MTU {mtu_bytes} B at {self.bandwidth_gbps} Gbps is not a whole number of ns")
        return int(round(ns))


@dataclass(frozen=True)
class MetricsSeries:
    """Per-bin delivered and injected packet counts of one run."""

    bin_ns: int
    serialization_ns: int
    nodes: int
    warmup_ns: int
    delivered: np.ndarray
    injected: np.ndarray
    events: int = 0
    audits: int = 0

    @property
    def time_ns(self) -> np.ndarray:
        return np.arange(len(self.delivered), dtype=np.int64) * self.bin_ns

    def _norm(self, counts):
        return counts * self.serialization_ns / (self.nodes * self.bin_ns)

    @property
    def delivered_frac(self) -> np.ndarray:
        return self._norm(self.delivered.astype(float))

    @property
    def injected_frac(self) -> np.ndarray:
        return self._norm(self.injected.astype(float))

    def steady_state(self) -> float:
        """Mean normalized delivered throughput over bins starting at or after warm-up."""
        keep = self.time_ns >= self.warmup_ns
        if not keep.any():
            return 0.0
        return float(self.delivered_frac[keep].mean())


@njit(cache=True, inline="always")
def _gap(node_rng, n, mean_gap):
    return np.int64(next_exponential(node_rng, n, mean_gap) + 0.5)


@njit(cache=True)
def _fail(st, code, t, a, b, c):
    st[ST_ERR] = code
    st[ST_TIME] = t
    st[ST_A] = a
    st[ST_B] = b
    st[ST_C] = c
    return code


@njit(cache=True)
def audit(fab, arrivals, credits, injected, delivered, st, t):
    """Check credit conservation on every link/VC and global packet conservation."""
    prm = fab.prm; peer_kind = fab.peer_kind; peer_id = fab.peer_id; peer_port = fab.peer_port; node_leaf = fab.node_leaf; node_port = fab.node_port; pk_vc = fab.pk_vc; pk_free = fab.pk_free; pool_top = fab.pool_top; qcnt = fab.qcnt; vcnt = fab.vcnt; vmask = fab.vmask; load = fab.load; cred = fab.cred; ncnt = fab.ncnt; ncred = fab.ncred
    n_nodes = prm[P_NODES]
    n_sw = prm[P_SWITCHES]
    p_count = prm[P_PORTS]
    q_count = prm[P_VCS]
    cap = prm[P_CAPACITY]
    arr_cnt = np.zeros((n_sw, p_count, q_count), np.int64)
    cr_cnt = np.zeros((n_sw, p_count, q_count), np.int64)
    ncr_cnt = np.zeros((n_nodes, q_count), np.int64)
    in_flight = lane_size(arrivals)
    for k in range(in_flight):
        _, _, pid, target = lane_entry(arrivals, k)
        if target >= 0:
            arr_cnt[target // p_count, target % p_count, pk_vc[pid]] += 1
    for k in range(lane_size(credits)):
        _, _, code, _ = lane_entry(credits, k)
        if code >= 0:
            q = code % q_count
            rest = code // q_count
            cr_cnt[rest // p_count, rest % p_count, q] += 1
        else:
            x = -code - 1
            ncr_cnt[x // q_count, x % q_count] += 1

    resident = 0
    for g in range(n_sw):
        count = 0
        for p in range(p_count):
            for q in range(q_count):
                count += qcnt[g, p, q]
                if prm[P_VOQ]:
                    tot = 0
                    mask = np.int64(0)
                    for o in range(p_count):
                        c = vcnt[g, p, q, o]
                        tot += c
                        if c > 0:
                            mask |= np.int64(1) << o
                    if tot != qcnt[g, p, q] or mask != vmask[g, p, q]:
                        return _fail(st, ERR_PACKET_AUDIT, t, g, p, q)
        if count != load[g]:
            return _fail(st, ERR_PACKET_AUDIT, t, g, -1, -1)
        resident += count
        for o in range(p_count):
            kind = peer_kind[g, o]
            for q in range(q_count):
                if kind == NODE:
                    if cred[g, o, q] != INFINITE_CREDITS:
                        return _fail(st, ERR_CREDIT_AUDIT, t, g, o, q)
                    continue
                g2 = peer_id[g, o]
                p2 = peer_port[g, o]
                total = cred[g, o, q] + qcnt[g2, p2, q] + arr_cnt[g2, p2, q] + cr_cnt[g, o, q]
                if total != cap:
                    return _fail(st, ERR_CREDIT_AUDIT, t, g, o, q)
    for n in range(n_nodes):
        leaf = node_leaf[n]
        port = node_port[n]
        for q in range(q_count):
            resident += ncnt[n, q]
            total = ncred[n, q] + qcnt[leaf, port, q] + arr_cnt[leaf, port, q] + ncr_cnt[n, q]
            if total != cap:
                return _fail(st, ERR_CREDIT_AUDIT, t, -1 - n, 0, q)
    if injected != delivered + resident + in_flight:
        return _fail(st, ERR_PACKET_AUDIT, t, injected, delivered, resident + in_flight)
    if pk_free.shape[0] - pool_top[0] != injected - delivered:
        return _fail(st, ERR_PACKET_AUDIT, t, injected, delivered, pool_top[0])
    st[ST_AUDITS] += 1
    return OK


@njit(cache=True, inline="always")
def _nic_enqueue(fab, n, dst, q, t):
    prm = fab.prm; nbuf = fab.nbuf; nhead = fab.nhead; ncnt = fab.ncnt; pool_top = fab.pool_top
    top = pool_top[0]
    if top == 0:
        return False
    top -= 1
    pool_top[0] = top
    pid = fab.pk_free[top]
    fab.pk_src[pid] = n
    fab.pk_dst[pid] = dst
    fab.pk_vc[pid] = q
    fab.pk_out[pid] = -1
    fab.pk_birth[pid] = t
    c = prm[P_CAPACITY]
    nbuf[n, q, (nhead[n, q] + ncnt[n, q]) % c] = pid
    ncnt[n, q] += 1
    return True


@njit(cache=True)
def _backlogged_destination(fab, node_rng, n, q, target, set_start, set_len, set_dsts):
    """Destination of a packet that waited for VC ``q``.

    Destinations are drawn independently, so drawing until one maps to ``q``
    is the same as having remembered the one drawn at generation time.
    """
    n_nodes = fab.prm[P_NODES]
    for _ in range(1 << 20):
        dst = draw_destination(node_rng, n, n_nodes, target, set_start, set_len, set_dsts)
        if packet_vc(fab, n, dst) == q:
            return dst
    return -1


@njit(cache=True)
def run_kernel(
    fab, heap, arrivals, credits, target, set_start, set_len, set_dsts, node_rng, backlog, simp, mean_gap, bins_del, bins_inj, st
):
    fab = borrow(fab)
    heap = borrow(heap)
    arrivals = borrow(arrivals)
    credits = borrow(credits)
    prm = fab.prm; peer_kind = fab.peer_kind; peer_id = fab.peer_id; peer_port = fab.peer_port; node_leaf = fab.node_leaf; node_port = fab.node_port; pk_vc = fab.pk_vc; pk_birth = fab.pk_birth; load = fab.load; cred = fab.cred; g_ptr = fab.g_ptr; a_ptr = fab.a_ptr; nbuf = fab.nbuf; nhead = fab.nhead; ncnt = fab.ncnt; ncred = fab.ncred; nvc_ptr = fab.nvc_ptr
    n_nodes = prm[P_NODES]
    n_sw = prm[P_SWITCHES]
    p_count = prm[P_PORTS]
    q_count = prm[P_VCS]
    cap = prm[P_CAPACITY]
    ser = prm[P_SER]
    prop = prm[P_PROP]
    hop = ser + prop
    iters = prm[P_ITERS]
    duration = simp[S_DURATION]
    bin_ns = simp[S_BIN]
    audit_ns = simp[S_AUDIT]
    window = simp[S_WINDOW]
    bound = simp[S_BOUND]
    nbins = simp[S_NBINS]

    req = np.zeros(p_count, np.int64)
    match = np.empty(p_count, np.int64)
    seq = 0
    injected = 0
    delivered = 0
    acc_del = 0
    acc_inj = 0
    last_delivery = 0
    next_live_check = 0
    events = 0

    ok = heap_push(heap, 0, seq, ARBITRATE, 0)
    seq += 1
    if mean_gap > 0:
        for n in range(n_nodes):
            if target[n] == ROLE_SILENT:
                continue
            ok &= heap_push(heap, _gap(node_rng, n, mean_gap), seq, INJECTION, n)
            seq += 1
    if nbins > 0:
        ok &= heap_push(heap, bin_ns, seq, METRICS_TICK, 0)
        seq += 1
    if audit_ns > 0:
        ok &= heap_push(heap, audit_ns, seq, AUDIT, 0)
        seq += 1
    if not ok:
        return _fail(st, ERR_QUEUE_FULL, 0, 0, 0, 0)

    code = OK
    t = kind = arg = pid = dest = ccode = 0
    while True:
        src = next_source(heap, arrivals, credits)
        if src == SRC_NONE or source_time(heap, arrivals, credits, src) > duration:
            break
        if src == SRC_HEAP:
            t, _, kind, arg = heap_pop(heap)
        elif src == SRC_ARRIVAL:
            t, _, pid, dest = lane_pop(arrivals)
        else:
            t, _, ccode, _ = lane_pop(credits)
        events += 1

        if src == SRC_ARRIVAL:
            if dest < 0:
                delivered += 1
                acc_del += 1
                last_delivery = t
                pool_release(fab, pid)
            else:
                g = dest // p_count
                p = dest % p_count
                if enqueue_input(fab, g, p, pid) != OK:
                    code = _fail(st, ERR_BUFFER_OVERFLOW, t, g, p, pk_vc[pid])
                    break
            continue

        if src == SRC_CREDIT:
            if ccode >= 0:
                q = ccode % q_count
                rest = ccode // q_count
                g = rest // p_count
                o = rest % p_count
                if cred[g, o, q] >= cap:
                    code = _fail(st, ERR_CREDIT_OVERFLOW, t, g, o, q)
                    break
                cred[g, o, q] += 1
            else:
                x = -ccode - 1
                n = x // q_count
                q = x % q_count
                if ncred[n, q] >= cap:
                    code = _fail(st, ERR_CREDIT_OVERFLOW, t, -1 - n, 0, q)
                    break
                ncred[n, q] += 1
            continue

        if kind == INJECTION:
            # a full VC queue only holds back packets of that VC
            n = arg
            dst = draw_destination(node_rng, n, n_nodes, target, set_start, set_len, set_dsts)
            q = packet_vc(fab, n, dst)
            if ncnt[n, q] < cap:
                if not _nic_enqueue(fab, n, dst, q, t):
                    code = _fail(st, ERR_POOL_EXHAUSTED, t, n, dst, q)
                    break
                injected += 1
                acc_inj += 1
            else:
                backlog[n, q] += 1
            if not heap_push(heap, t + _gap(node_rng, n, mean_gap), seq, INJECTION, n):
                code = _fail(st, ERR_QUEUE_FULL, t, n, 0, 0)
                break
            seq += 1
            continue

        if kind == METRICS_TICK:
            bins_del[arg] = acc_del
            bins_inj[arg] = acc_inj
            acc_del = 0
            acc_inj = 0
            if arg + 1 < nbins:
                heap_push(heap, (arg + 2) * bin_ns, seq, METRICS_TICK, arg + 1)
                seq += 1
            continue

        if kind == AUDIT:
            code = audit(fab, arrivals, credits, injected, delivered, st, t)
            if code != OK:
                break
            if t + audit_ns <= duration:
                heap_push(heap, t + audit_ns, seq, AUDIT, 0)
                seq += 1
            continue

        # arbitration epoch: NICs first, then every non-empty switch
        for n in range(n_nodes):
            start = nvc_ptr[n]
            for d in range(q_count):
                q = (start + d) % q_count
                if ncnt[n, q] == 0 or ncred[n, q] == 0:
                    continue
                h = nhead[n, q]
                pid = nbuf[n, q, h]
                nhead[n, q] = (h + 1) % cap
                ncnt[n, q] -= 1
                ncred[n, q] -= 1
                nvc_ptr[n] = (q + 1) % q_count
                ok = lane_push(arrivals, t + hop, seq, pid, node_leaf[n] * p_count + node_port[n])
                seq += 1
                if backlog[n, q] > 0:
                    dst = _backlogged_destination(fab, node_rng, n, q, target, set_start, set_len, set_dsts)
                    if dst < 0 or not _nic_enqueue(fab, n, dst, q, t):
                        code = _fail(st, ERR_POOL_EXHAUSTED, t, n, dst, q)
                        break
                    backlog[n, q] -= 1
                    injected += 1
                    acc_inj += 1
                if not ok:
                    code = _fail(st, ERR_QUEUE_FULL, t, n, 0, 0)
                break
            if code != OK:
                break
        if code != OK:
            break

        for g in range(n_sw):
            if load[g] == 0:
                continue
            if not build_requests(fab, g, req):
                continue
            islip_arbitrate(req, g_ptr[g], a_ptr[g], iters, match)
            for p in range(p_count):
                o = match[p]
                if o < 0:
                    continue
                q = pick_vc(fab, g, p, o)
                if q < 0:
                    code = _fail(st, ERR_NO_CREDIT, t, g, p, o)
                    break
                pid = dequeue_input(fab, g, p, q, o)
                if peer_kind[g, o] == NODE:
                    dest = -1 - peer_id[g, o]
                else:
                    cred[g, o, q] -= 1
                    dest = peer_id[g, o] * p_count + peer_port[g, o]
                ok = lane_push(arrivals, t + hop, seq, pid, dest)
                seq += 1
                if peer_kind[g, p] == NODE:
                    ccode = -1 - (peer_id[g, p] * q_count + q)
                else:
                    ccode = (peer_id[g, p] * p_count + peer_port[g, p]) * q_count + q
                ok &= lane_push(credits, t + prop, seq, ccode, 0)
                seq += 1
                if not ok:
                    code = _fail(st, ERR_QUEUE_FULL, t, g, p, o)
                    break
            if code != OK:
                break
        if code != OK:
            break

        # liveness: some packet must be delivered within the window once the
        # oldest resident packet has had time to cross an idle network
        if injected > delivered and t - last_delivery > window and t >= next_live_check:
            oldest = t
            for i in range(pk_birth.shape[0]):
                b = pk_birth[i]
                if b >= 0 and b < oldest:
                    oldest = b
            anchor = max(last_delivery, oldest + bound)
            if t - anchor > window:
                code = _fail(st, ERR_DEADLOCK, t, injected, delivered, last_delivery)
                break
            next_live_check = anchor + window + 1

        if t + ser <= duration:
            heap_push(heap, t + ser, seq, ARBITRATE, 0)
            seq += 1

    st[ST_INJECTED] = injected
    st[ST_DELIVERED] = delivered
    st[ST_EVENTS] = events
    st[ST_SEQ] = seq
    st[ST_LAST_DELIVERY] = last_delivery
    if code == OK:
        code = audit(fab, arrivals, credits, injected, delivered, st, duration)
    return code


def _raise_for(code: int, st: np.ndarray) -> None:
    text = ERROR_TEXT.get(code, f"error {code}")
    where = f"at t={int(st[ST_TIME])} ns (details {int(st[ST_A])}, {int(st[ST_B])}, {int(st[ST_C])})"
    if code in (ERR_CREDIT_AUDIT, ERR_PACKET_AUDIT, ERR_DEADLOCK):
        raise AuditError(f"{text} {where}")
    raise FlowControlError(f"{text} {where}")


class RunState:
    """Everything a run owns, kept so tests can inspect the final state."""

    def __init__(self, rlft, routing, scheme, traffic, sim, switch):
        self.rlft = rlft
        self.routing = routing
        self.scheme = scheme
        self.traffic = traffic
        self.sim = sim
        self.switch = switch
        self.ser = sim.serialization_ns(switch.mtu_bytes)
        self.capacity = switch.capacity(scheme.vcs)
        routing.validate(rlft.arity, self.capacity)
        prm = make_params(
            rlft,
            vcs=scheme.vcs,
            capacity=self.capacity,
            voq=switch.voq,
            ser_ns=self.ser,
            prop_ns=sim.propagation_ns,
            routing=routing,
            scheme=scheme,
        )
        sw_rng = seed_streams(sim.seed, SWITCH_STREAM_BASE + np.arange(rlft.switch_count))
        self.fabric = make_fabric(rlft, prm, sw_rng)
        self.node_rng = seed_streams(sim.seed, np.arange(rlft.node_count))
        self.roles = assign_roles(traffic, rlft, sim.seed)
        n, links = rlft.node_count, rlft.switch_count * rlft.ports + rlft.node_count
        self.heap = make_heap(n + 16)
        self.arrivals = make_lane(2 * links + 16)
        self.credits = make_lane(2 * links + 16)
        self.backlog = np.zeros((n, scheme.vcs), np.int64)
        self.nbins = sim.duration_ns // sim.metrics_bin_ns
        self.stats = np.zeros(N_STATS, np.int64)

    def execute(self) -> MetricsSeries:
        sim = self.sim
        simp = np.zeros(6, np.int64)
        simp[S_DURATION] = sim.duration_ns
        simp[S_BIN] = sim.metrics_bin_ns
        simp[S_AUDIT] = sim.audit_interval_ns
        simp[S_WINDOW] = LIVENESS_SERVICE_TIMES * self.ser
        # worst idle-network latency: wait for an epoch, then two epochs per link
        simp[S_BOUND] = (2 * int(self.fabric.prm[P_STAGES]) + 1) * 2 * self.ser
        simp[S_NBINS] = self.nbins
        mean_gap = 0.0 if self.traffic.load == 0 else self.ser / self.traffic.load
        bins_del = np.zeros(self.nbins, np.int64)
        bins_inj = np.zeros(self.nbins, np.int64)
        r = self.roles
        code = run_kernel(
            self.fabric,
            self.heap,
            self.arrivals,
            self.credits,
            r.target,
            r.set_start,
            r.set_len,
            r.set_dsts,
            self.node_rng,
            self.backlog,
            simp,
            mean_gap,
            bins_del,
            bins_inj,
            self.stats,
        )
        if code != OK:
            _raise_for(int(code), self.stats)
        return MetricsSeries(
            sim.metrics_bin_ns,
            self.ser,
            self.rlft.node_count,
            sim.warmup_ns,
            bins_del,
            bins_inj,
            int(self.stats[ST_EVENTS]),
            int(self.stats[ST_AUDITS]),
        )

    @property
    def injected(self) -> int:
        return int(self.stats[ST_INJECTED])

    @property
    def delivered(self) -> int:
        return int(self.stats[ST_DELIVERED])


def run(
    rlft: RLFT,
    routing: RoutingConfig,
    scheme: QueueScheme,
    traffic: TrafficPattern,
    sim: SimConfig = SimConfig(),
    switch: SwitchConfig = SwitchConfig(),
) -> MetricsSeries:
    """Simulate one configuration and return its throughput series.

    Raises FlowControlError on a credit-accounting violation and AuditError
    when a conservation audit or the liveness check fails.
    """
    return RunState(rlft, routing, scheme, traffic, sim, switch).execute()
