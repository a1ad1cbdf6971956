import itertools
import random

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ftsim import FlowControlError, QueueScheme, RLFTParams, RoutingConfig, SwitchConfig, build_rlft
from ftsim.switch import (
    INFINITE_CREDITS,
    ISlipPointers,
    build_requests,
    forward_matched,
    islip,
    make_fabric,
    make_params,
    on_credit_return,
    on_packet_arrival,
    pool_alloc,
)


def fabric(voq=False, vcs=1, capacity=16):
    rlft = build_rlft(RLFTParams(4, 3))
    prm = make_params(
        rlft, vcs=vcs, capacity=capacity, voq=voq, routing=RoutingConfig(), scheme=QueueScheme("1Q" if vcs == 1 else "DBBM", vcs)
    )
    return rlft, make_fabric(rlft, prm)


def packet(fab, src, dst, vc=0):
    return int(pool_alloc(fab, src, dst, vc, 0))


def test_capacity_split():
    assert SwitchConfig().capacity(1) == 48
    assert SwitchConfig().capacity(3) == 16


def test_fill_to_capacity_then_overflow():
    _, fab = fabric()
    on_packet_arrival(fab, 0, 0, packet(fab, 0, 5))
    assert fab.qcnt[0, 0, 0] == 1
    for _ in range(15):
        on_packet_arrival(fab, 0, 0, packet(fab, 0, 5))
    assert fab.qcnt[0, 0, 0] == 16
    with pytest.raises(FlowControlError):
        on_packet_arrival(fab, 0, 0, packet(fab, 0, 5))


def test_credit_return_bounds():
    _, fab = fabric()
    up = 2  # first upward port of a K=2 leaf
    fab.cred[0, up, 0] = 15
    on_credit_return(fab, 0, up, 0)
    assert fab.cred[0, up, 0] == 16
    with pytest.raises(FlowControlError):
        on_credit_return(fab, 0, up, 0)


def requests_of(fab, g):
    req = np.zeros(fab.prm[2], np.int64)
    build_requests(fab, g, req)
    return {p: {o for o in range(len(req)) if (req[p] >> o) & 1} for p in range(len(req)) if req[p]}


def test_forward_timing_and_credit_round_trip():
    _, fab = fabric()
    on_packet_arrival(fab, 0, 0, packet(fab, 0, 5))
    reqs = requests_of(fab, 0)
    # dst 5 leaves leaf 0 on D-mod-K index 1, port 3
    assert reqs == {0: {3}}
    match = islip(reqs, ISlipPointers(fab.g_ptr[0], fab.a_ptr[0]))
    sent = forward_matched(fab, 0, match, now=1000)
    assert [(o, t) for _, o, t, _ in sent] == [(3, 1000 + 320 + 6)]
    assert fab.cred[0, 3, 0] == 15 and fab.qcnt[0, 0, 0] == 0
    on_credit_return(fab, 0, 3, 0)
    assert fab.cred[0, 3, 0] == 16


def test_node_ports_never_run_out_of_credit():
    _, fab = fabric()
    on_packet_arrival(fab, 0, 0, packet(fab, 0, 1))
    assert requests_of(fab, 0) == {0: {1}}
    sent = forward_matched(fab, 0, {(0, 1)}, now=0)
    assert sent[0][1] == 1
    assert fab.cred[0, 1, 0] == INFINITE_CREDITS


def test_no_request_without_credit():
    _, fab = fabric()
    on_packet_arrival(fab, 0, 0, packet(fab, 0, 5))
    fab.cred[0, 3, 0] = 0
    assert requests_of(fab, 0) == {}
    with pytest.raises(FlowControlError):
        forward_matched(fab, 0, {(0, 3)}, now=0)


def test_voq_lifts_head_of_line_blocking():
    # blocked head toward port 3, a second packet toward node port 1 behind it
    for voq, want in ((False, {}), (True, {0: {1}})):
        _, fab = fabric(voq=voq)
        on_packet_arrival(fab, 0, 0, packet(fab, 0, 5))
        on_packet_arrival(fab, 0, 0, packet(fab, 0, 1))
        fab.cred[0, 3, 0] = 0
        assert requests_of(fab, 0) == want
    _, fab = fabric(voq=True)
    on_packet_arrival(fab, 0, 0, packet(fab, 0, 5))
    on_packet_arrival(fab, 0, 0, packet(fab, 0, 1))
    assert requests_of(fab, 0) == {0: {1, 3}}


def test_vcs_isolate_a_blocked_queue():
    _, fab = fabric(vcs=2, capacity=8)
    on_packet_arrival(fab, 0, 0, packet(fab, 0, 5, vc=1))
    on_packet_arrival(fab, 0, 0, packet(fab, 0, 4, vc=0))
    fab.cred[0, 3, 1] = 0
    # dst 4 goes up port 2 on VC 0 and is not stuck behind VC 1
    assert requests_of(fab, 0) == {0: {2}}


# iSLIP


def is_matching(pairs):
    ins = [i for i, _ in pairs]
    outs = [o for _, o in pairs]
    return len(set(ins)) == len(ins) and len(set(outs)) == len(outs)


def is_maximal(pairs, reqs):
    used_in = {i for i, _ in pairs}
    used_out = {o for _, o in pairs}
    return all(i in used_in or o in used_out for i, outs in reqs.items() for o in outs)


def all_maximal_matchings(edges):
    """Brute force over every subset of request edges."""
    found = []
    for r in range(len(edges) + 1):
        for sub in itertools.combinations(edges, r):
            if is_matching(sub):
                reqs = {}
                for i, o in edges:
                    reqs.setdefault(i, set()).add(o)
                if is_maximal(sub, reqs):
                    found.append(frozenset(sub))
    return set(found)


def test_islip_examples():
    assert islip({0: {0}, 1: {1}}, ISlipPointers.zeros(2)) == {(0, 0), (1, 1)}
    got = islip({0: {0, 1}, 1: {0}}, ISlipPointers.zeros(2))
    assert got in all_maximal_matchings([(0, 0), (0, 1), (1, 0)])
    assert islip({}, ISlipPointers.zeros(2)) == set()


def test_islip_pointers_move_on_first_iteration_accepts():
    ptr = ISlipPointers.zeros(3)
    islip({0: {0, 1}, 1: {0}}, ptr)
    # iteration 1: output 0 grants input 0, output 1 grants input 0; input 0 accepts output 0
    # iteration 2: input 1 is matched to nothing (output 0 taken); no pointer moves
    assert list(ptr.grant) == [1, 0, 0]
    assert list(ptr.accept) == [1, 0, 0]


def test_islip_rotates_under_persistent_contention():
    ptr = ISlipPointers.zeros(2)
    winners = [next(iter(islip({0: {0}, 1: {0}}, ptr)))[0] for _ in range(4)]
    assert winners == [0, 1, 0, 1]


def test_islip_exhaustive_3x3():
    pairs = [(i, o) for i in range(3) for o in range(3)]
    for bits in range(1 << 9):
        edges = [pairs[b] for b in range(9) if bits >> b & 1]
        reqs = {}
        for i, o in edges:
            reqs.setdefault(i, set()).add(o)
        got = islip(reqs, ISlipPointers.zeros(3))
        assert got <= set(edges)
        assert frozenset(got) in all_maximal_matchings(edges)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.lists(st.booleans(), min_size=8, max_size=8), min_size=8, max_size=8), st.data())
def test_islip_random_pointers(matrix, data):
    grant = np.array(data.draw(st.lists(st.integers(0, 7), min_size=8, max_size=8)), np.int64)
    accept = np.array(data.draw(st.lists(st.integers(0, 7), min_size=8, max_size=8)), np.int64)
    reqs = {i: {o for o in range(8) if matrix[i][o]} for i in range(8)}
    got = islip(reqs, ISlipPointers(grant, accept))
    assert is_matching(got)
    assert all(o in reqs[i] for i, o in got)
    assert is_maximal(got, reqs)


def test_islip_random_8x8_against_oracle():
    rng = random.Random(7)
    ptr = ISlipPointers.zeros(8)
    for _ in range(1000):
        density = rng.random()
        reqs = {i: {o for o in range(8) if rng.random() < density} for i in range(8)}
        got = islip(reqs, ptr)
        assert is_matching(got) and is_maximal(got, reqs)
        g = nx.Graph()
        g.add_nodes_from(("i", i) for i in range(8))
        g.add_edges_from((("i", i), ("o", o)) for i, outs in reqs.items() for o in outs)
        best = len(nx.bipartite.maximum_matching(g, top_nodes=[("i", i) for i in range(8)])) // 2
        assert 2 * len(got) >= best
