"""Acceptance criteria 1-9. Each test records a PASS/FAIL line that is echoed
in the terminal summary, then asserts."""

import itertools
import statistics
import time

import networkx as nx
import numpy as np
from conftest import ACCEPTANCE

from ftsim import QueueScheme, RLFTParams, RoutingConfig, build_rlft, enumerate_shortest_paths, mapping_table
from ftsim.harness import ExperimentSpec, run_spec, to_csv
from ftsim.routing import restricted_path_selection
from ftsim.switch import ISlipPointers, islip
from ftsim.topology import NODE, SWITCH, TABLE_ROWS, destinations_per_port, expected_destinations, row_routing, table_check


def record(key, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {key}: {detail}"
    ACCEPTANCE[str(key)] = line
    print(line)
    assert ok, line


# -- 1: destinations per output port ----------------------------------------


def wired_graph(rlft):
    """Graph over ``("s", gid)`` / ``("n", node)`` with the output port on each directed hop."""
    g = nx.Graph()
    port_of = {}
    for s in range(rlft.switch_count):
        for p in range(rlft.ports):
            kind, ident, _ = rlft.peer[s, p]
            if kind == SWITCH:
                other = ("s", int(ident))
            elif kind == NODE:
                other = ("n", int(ident))
            else:
                continue
            assert (("s", s), other) not in port_of, "parallel links"
            port_of[("s", s), other] = p
            g.add_edge(("s", s), other)
    return g, port_of


def brute_force_sets(rlft, graph, port_of, adaptive, delta):
    """Per-port destination sets from every shortest path that passes the upward filter.

    ``adaptive`` is the set of stages allowed to deviate from D-mod-K
    (empty for deterministic).
    """
    k, t = rlft.arity, rlft.stages
    sets = {}
    leaves = sorted({rlft.attachments[n][0] for n in range(rlft.node_count)})
    for dst in range(rlft.node_count):
        for leaf in leaves:
            if all(rlft.attachments[s][0] != leaf or s == dst for s in range(rlft.node_count)):
                continue
            for path in nx.all_shortest_paths(graph, ("s", leaf), ("n", dst)):
                hops = []
                ok = True
                for a, b in zip(path, path[1:]):
                    gid, port = a[1], port_of[a, b]
                    stage = rlft.position(gid).stage
                    if stage < t and port >= k:
                        digit = (dst // k ** (stage - 1)) % k
                        u = port - k
                        if stage in adaptive:
                            ok &= u % delta == digit % delta
                        else:
                            ok &= u == digit
                    hops.append((gid, port))
                if ok:
                    for hop in hops:
                        sets.setdefault(hop, set()).add(dst)
    return sets


def column_of(rlft, gid, port):
    stage = rlft.position(gid).stage
    up = stage < rlft.stages and port >= rlft.arity
    return f"S{stage}{'U' if up else 'D'}"


# Three-stage closed forms for the rows without the port filter, written out by hand.
def by_hand_t3(row, col, n, k):
    table = {
        "Deterministic (D-mod-K)": {"S1U": (n - k) // k, "S2U": (n - k * k) // k**2, "S3D": 1, "S2D": 1, "S1D": 1},
        "Fully adaptive and oblivious": {"S1U": n - k, "S2U": n - k * k, "S3D": k * k, "S2D": k, "S1D": 1},
        "Adaptive Stage 1 (1S)": {"S1U": n - k, "S2U": (n - k * k) // k, "S3D": k, "S2D": k, "S1D": 1},
        "Adaptive Stage 2 (2S)": {"S1U": (n - k) // k, "S2U": (n - k * k) // k, "S3D": k, "S2D": 1, "S1D": 1},
    }
    return table.get(row, {}).get(col)


def test_criterion_1_table_check():
    failures = []
    cells = 0
    library_seconds = 0.0
    for k, t in itertools.product((2, 3, 4), (2, 3)):
        rlft = build_rlft(RLFTParams(2 * k, t))
        graph, port_of = wired_graph(rlft)
        n = rlft.node_count
        for delta in sorted({1} | {d for d in range(1, k + 1) if k % d == 0}):
            start = time.perf_counter()
            checked = table_check(rlft, delta)
            library_seconds += time.perf_counter() - start
            failures += [(k, t, delta, c) for c in checked if not c.ok]
            for row, (stages, use_delta) in TABLE_ROWS.items():
                adaptive = set(range(1, t)) if stages is None else set(stages)
                brute = brute_force_sets(rlft, graph, port_of, adaptive, delta if use_delta else 1)
                lib = destinations_per_port(rlft, row_routing(row, t, delta))
                by_col = {}
                for g in range(rlft.switch_count):
                    pos = rlft.position(g)
                    for p in range(rlft.ports):
                        got = brute.get((g, p), set())
                        if lib[(pos.stage, pos.index, p)] != got:
                            failures.append((k, t, delta, row, g, p, "set mismatch"))
                        by_col.setdefault(column_of(rlft, g, p), set()).add(len(got))
                for col, sizes in by_col.items():
                    cells += 1
                    want = expected_destinations(row, col, k, t, delta)
                    if sizes != {want}:
                        failures.append((k, t, delta, row, col, sizes, want))
                    by_hand = by_hand_t3(row, col, n, k) if t == 3 else None
                    if by_hand is not None and by_hand != want:
                        failures.append((k, t, delta, row, col, "hand form", by_hand, want))
    ok = not failures and library_seconds < 30
    record(1, ok, f"{cells} cells vs brute force, {len(failures)} mismatches, table-check {library_seconds:.1f}s (< 30s)")


# -- 2: path diversity ------------------------------------------------------


def test_criterion_2_path_diversity():
    start = time.perf_counter()
    bad = []
    pairs = 0
    for k, t in itertools.product((2, 3), (1, 2, 3)):
        rlft = build_rlft(RLFTParams(2 * k, t))
        graph, _ = wired_graph(rlft)
        for src, dst in itertools.permutations(range(rlft.node_count), 2):
            pairs += 1
            paths = enumerate_shortest_paths(rlft, src, dst)
            stage = max(len(p) for p in paths) // 2 + 1
            oracle = sum(1 for _ in nx.all_shortest_paths(graph, ("n", src), ("n", dst)))
            if len(paths) != k ** (stage - 1) or len(paths) != oracle:
                bad.append((k, t, src, dst, len(paths), oracle))
    elapsed = time.perf_counter() - start
    record(2, not bad and elapsed < 10, f"{pairs} pairs, {len(bad)} wrong counts, {elapsed:.1f}s (< 10s)")


# -- 3: destination-to-VC mappings ------------------------------------------


def test_criterion_3_mapping(tree_k2t3):
    rlft = tree_k2t3
    n, k, t = rlft.node_count, rlft.arity, rlft.stages
    problems = []

    table = mapping_table(QueueScheme("DBBM", 2), rlft, RoutingConfig())
    stage2_up = [(r, v) for r, v in table.items() if r.stage == 2 and r.port < k]
    for ref, vcs in stage2_up:
        union = frozenset().union(*vcs)
        if not union or sorted(map(len, vcs)) != [0, len(union)]:
            problems.append(("DBBM", ref))

    table = mapping_table(QueueScheme("VFTREE", 2), rlft, RoutingConfig("adaptive"))
    top = [(r, v) for r, v in table.items() if r.stage == t]
    for ref, vcs in top:
        # everything outside the pod the packet came up from
        if any(len(vc) != n - k ** (t - 1) for vc in vcs) or len(set(vcs)) != 1:
            problems.append(("VFTREE", ref))

    table = mapping_table(QueueScheme("FLOW2SL", 2), rlft, RoutingConfig("adaptive"))
    stage1_down = [(r, v) for r, v in table.items() if r.stage == 1 and r.port >= k]
    for ref, vcs in stage1_down:
        leaf = frozenset(range(ref.index * k, ref.index * k + k))
        if any(vc != leaf for vc in vcs):
            problems.append(("FLOW2SL", ref))

    checked = len(stage2_up) + len(top) + len(stage1_down)
    record(3, not problems and checked == 48, f"{checked} buffers at K=2 T=3 Q=2, {len(problems)} violations")


# -- 4: path selection hand traces ------------------------------------------


def test_criterion_4_selection_traces():
    rlft = build_rlft(RLFTParams(8, 3))
    leaf = rlft.position(0)
    dst = 6  # D-mod-K port 2 at stage 1
    results = []

    def pick(cfg, credits, flags):
        view = np.array(credits, np.int64).reshape(4, 1)
        return restricted_path_selection(rlft, leaf, dst, 0, cfg, view, flags, 16)

    th = RoutingConfig("adaptive", "TH", ltth=4, htth=8)
    flags = np.zeros((4, 1), bool)
    results.append(pick(th, [16, 16, 10, 16], flags) == 2)
    results.append(pick(th, [12, 0, 3, 5], flags) == 0)
    # nothing strictly above the floor keeps the D-mod-K port
    results.append(pick(th, [4, 0, 3, 4], flags) == 2)

    two = RoutingConfig("adaptive", "2TH", ltth=4, htth=8)
    flags = np.zeros((4, 1), bool)
    trace = []
    for c in (3, 6, 9):
        port = pick(two, [12, 0, c, 5], flags)
        trace.append((port, bool(flags[2, 0])))
    results.append(trace == [(0, True), (0, True), (2, False)])

    noth = RoutingConfig("adaptive", "NoTH")
    results.append(pick(noth, [12, 0, 10, 5], np.zeros((4, 1), bool)) == 0)
    results.append(pick(noth, [7, 7, 7, 7], np.zeros((4, 1), bool)) == 0)
    record(4, all(results), f"{sum(results)}/{len(results)} traces exact, 2TH trace {trace}")


# -- 5: conservation and liveness matrix ------------------------------------

ROUTINGS = {
    "DMODK": {},
    "OBLIV": {"mode": "oblivious"},
    "ADAP-NoTH-*S-K": {"mode": "adaptive"},
    "ADAP-2TH-*S-Kd2": {"mode": "adaptive", "triggering": "2TH", "delta": 2},
}
SCHEMES = ("1Q", "DBBM", "VFTREE", "FLOW2SL")
PATTERNS = ("HS10-1", "HS25-1", "HS10-4", "HS25-4", "IHS")


def test_criterion_5_conservation_and_liveness():
    start = time.perf_counter()
    failures = []
    runs = 0
    for (name, routing), scheme, voq, pattern in itertools.product(ROUTINGS.items(), SCHEMES, (False, True), PATTERNS):
        spec = ExperimentSpec(ports=8, stages=3, scheme=scheme, voq=voq, pattern=pattern, duration_ns=3_000_000, **routing)
        runs += 1
        try:
            series = run_spec(spec)
        except Exception as exc:  # an audit or liveness failure is the finding
            failures.append(f"{spec.config_id}/{pattern}: {exc}")
            continue
        if series.audits < 30 or series.delivered.sum() > series.injected.sum() or series.delivered.sum() == 0:
            failures.append(f"{spec.config_id}/{pattern}: audits={series.audits}")
    elapsed = time.perf_counter() - start
    detail = f"{runs} runs, {len(failures)} failures, {elapsed:.0f}s (< 600s)"
    if failures:
        detail += f"; first: {failures[0]}"
    record(5, runs == 160 and not failures and elapsed < 600, detail)


# -- 6: uniform sanity ------------------------------------------------------


def test_criterion_6_uniform_tracks_load():
    got = run_spec(ExperimentSpec(pattern="uniform", load=0.4)).steady_state()
    record(6, abs(got - 0.40) <= 0.02, f"D-mod-K 1Q uniform 40% delivers {got:.4f} (0.40 +/- 0.02)")


# -- 7: trends at N=432 -----------------------------------------------------

SEEDS = (1, 2, 3)


def median_throughput(**kw):
    spec = ExperimentSpec(ports=12, stages=3, load=1.0, warmup_ns=1_000_000, **kw)
    return statistics.median(run_spec(spec, seed=s).steady_state() for s in SEEDS)


FULLY_ADAPTIVE = {"mode": "adaptive"}


def restricted(triggering="2TH", stage="all", delta=1):
    return {"mode": "adaptive", "triggering": triggering, "stage": stage, "delta": delta}


def test_criterion_7a_fully_adaptive_1q_collapses():
    got = median_throughput(pattern="HS25-1", **FULLY_ADAPTIVE)
    record("7a", got < 0.05, f"HS25-1 ADAP-NoTH-*S-K+1Q median {got:.3f} (< 0.05)")


def test_criterion_7b_flow2sl_restricted_beats_fully_adaptive():
    ours = median_throughput(pattern="HS25-1", scheme="FLOW2SL", **restricted())
    base = median_throughput(pattern="HS25-1", scheme="FLOW2SL", **FULLY_ADAPTIVE)
    margin = 100 * (ours - base)
    record("7b", margin >= 10, f"HS25-1 FLOW2SL 2TH-*S-K {ours:.3f} vs fully adaptive {base:.3f}, +{margin:.1f} pts (>= 10)")


def test_criterion_7c_vftree_k_delta_beats_fully_adaptive():
    ours = median_throughput(pattern="HS25-4", scheme="VFTREE", **restricted(delta=3))
    base = median_throughput(pattern="HS25-4", scheme="VFTREE", **FULLY_ADAPTIVE)
    margin = 100 * (ours - base)
    record("7c", margin >= 15, f"HS25-4 VFTREE 2TH-*S-Kd3 {ours:.3f} vs fully adaptive {base:.3f}, +{margin:.1f} pts (>= 15)")


def test_criterion_7d_voq():
    dmodk = median_throughput(pattern="HS25-4", scheme="VFTREE", voq=True)
    configs = {
        "TH-*S-Kd3": restricted("TH", delta=3),
        "2TH-*S-Kd3": restricted(delta=3),
        "2TH-1S-Kd3": restricted(stage=1, delta=3),
    }
    scores = {name: median_throughput(pattern="HS25-4", scheme="VFTREE", voq=True, **cfg) for name, cfg in configs.items()}
    one_q = median_throughput(pattern="HS25-4", voq=True, **FULLY_ADAPTIVE)
    keeps_up = all(v >= dmodk - 0.03 for v in scores.values())
    listed = ", ".join(f"{k} {v:.3f}" for k, v in scores.items())
    record(
        "7d",
        keeps_up and one_q < 0.05,
        f"HS25-4 VOQ VFTREE D-mod-K {dmodk:.3f}; {listed} (>= D-mod-K - 0.03); fully adaptive 1Q {one_q:.3f} (< 0.05)",
    )


# -- 8: determinism ---------------------------------------------------------


def test_criterion_8_byte_identical_csv():
    spec = ExperimentSpec(mode="adaptive", triggering="2TH", delta=2, scheme="VFTREE", pattern="HS25-4", duration_ns=1_000_000, warmup_ns=200_000, seed=7)
    first = to_csv(run_spec(spec)).encode()
    second = to_csv(run_spec(spec)).encode()
    other = to_csv(run_spec(spec, seed=8)).encode()
    record(8, first == second and first != other, f"{len(first)} bytes identical across repeats, differs for another seed")


# -- 9: iSLIP ---------------------------------------------------------------


def matchings(req):
    """Every matching of a boolean request matrix, by brute force."""
    pairs = [(i, o) for i in range(req.shape[0]) for o in range(req.shape[1]) if req[i, o]]
    out = []
    for r in range(len(pairs) + 1):
        for combo in itertools.combinations(pairs, r):
            ins = [i for i, _ in combo]
            outs = [o for _, o in combo]
            if len(set(ins)) == len(ins) and len(set(outs)) == len(outs):
                out.append(frozenset(combo))
    return out


def maximal_set(req):
    every = matchings(req)
    return {m for m in every if not any(m < other for other in every)}


def is_maximal(req, match):
    ins = {i for i, _ in match}
    outs = {o for _, o in match}
    return not any(req[i, o] for i in range(req.shape[0]) for o in range(req.shape[1]) if i not in ins and o not in outs)


def test_criterion_9_islip():
    failures = 0
    rng = np.random.default_rng(2024)
    for bits in range(1 << 9):
        req = np.array([(bits >> b) & 1 for b in range(9)], bool).reshape(3, 3)
        pointers = ISlipPointers(rng.integers(0, 3, 3), rng.integers(0, 3, 3))
        got = frozenset(islip(req, pointers))
        failures += got not in maximal_set(req)
    for _ in range(1000):
        req = rng.random((8, 8)) < rng.uniform(0.1, 0.9)
        pointers = ISlipPointers(rng.integers(0, 8, 8), rng.integers(0, 8, 8))
        got = islip(req, pointers)
        valid = all(req[i, o] for i, o in got) and len({i for i, _ in got}) == len(got) == len({o for _, o in got})
        failures += not (valid and is_maximal(req, got))
    record(9, failures == 0, f"512 exhaustive 3x3 + 1000 random 8x8, {failures} failures")

