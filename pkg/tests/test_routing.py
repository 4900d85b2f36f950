import random

import pytest
from hypothesis import given, settings, strategies as st

from dfpsim.errors import ConfigError, InvariantError, RoutingError
from dfpsim.routing import (
    FPAR, INTERMEDIATE_LEAF, INTERMEDIATE_SPINE, MINIMAL, MINIMAL_ONLY, VL0, VL1,
    RouteCandidate, RoutingConfig, channel_dependency_graph, choose_port,
    classify_path, enumerate_candidates, find_dependency_cycle, vl_transition,
)
from dfpsim.simcore import EnginePlan
from dfpsim.simcore.state import Chunk


def chunk(src, dst, vl=VL0, cls=MINIMAL, trace=()):
    return Chunk(0, 0, 4096, src, dst, vl, cls, list(trace))


def linked_spines(topo, group, dst_group):
    """Oracle: scan the port tables directly for global links into ``dst_group``."""
    return {
        s for s in topo.spines(group)
        if any(k == "global" and topo.group_of(p) == dst_group for k, p in topo.ports(s))
    }


def reference_choose(cands, T):
    short = min(c.hop_count_remaining for c in cands)
    pick = lambda cs: min(cs, key=lambda c: (c.score, c.out_port))
    s = [c for c in cands if c.hop_count_remaining == short]
    l = [c for c in cands if c.hop_count_remaining > short]
    return pick([c for c in s if c.score <= T] or [c for c in l if c.score <= T] or s)


def cand(port, hops, score, cls=MINIMAL):
    return RouteCandidate(port, cls, hops, score, VL0)


# --- enumerate_candidates ---------------------------------------------------------


def test_full_source_leaf_has_24_candidates(full):
    src, dst = 0, full.num_terminals - 1
    leaf = full.terminal_leaf(src)
    cands = enumerate_candidates(full, leaf, chunk(src, dst))
    assert len(cands) == 24
    minimal = {full.port_peer(leaf, c.out_port)[1] for c in cands if c.path_class == MINIMAL}
    assert minimal == linked_spines(full, 0, 8)
    assert all(c.vl_after == VL0 for c in cands)


def test_mini_source_leaf_split(mini):
    src, dst = 0, mini.num_terminals - 1
    leaf = mini.terminal_leaf(src)
    cands = enumerate_candidates(mini, leaf, chunk(src, dst))
    assert len(cands) == mini.params.spines_per_group
    by_cls = {}
    for c in cands:
        by_cls.setdefault(c.path_class, set()).add(mini.port_peer(leaf, c.out_port)[1])
    assert by_cls[MINIMAL] == linked_spines(mini, 0, 8)
    assert len(by_cls[INTERMEDIATE_SPINE]) == mini.params.spines_per_group - 1
    short = min(c.hop_count_remaining for c in cands if c.path_class == MINIMAL)
    assert all(c.hop_count_remaining > short for c in cands if c.path_class != MINIMAL)


def test_vl1_at_intermediate_spine_is_direct_only(mini):
    src, dst = 0, mini.num_terminals - 1
    spine = next(iter(linked_spines(mini, 4, 8)))
    cands = enumerate_candidates(mini, spine, chunk(src, dst, VL1, INTERMEDIATE_LEAF))
    assert [mini.port_peer(spine, c.out_port)[1] for c in cands]
    assert all(mini.group_of(mini.port_peer(spine, c.out_port)[1]) == 8 for c in cands)
    assert all(c.vl_after == VL1 for c in cands)


def test_intermediate_spine_offers_direct_and_descend(full):
    src, dst = 0, full.num_terminals - 1
    spine = full.spine_id(4, 0)
    cands = enumerate_candidates(full, spine, chunk(src, dst, trace=[0, full.spine_id(0, 0)]))
    direct = [c for c in cands if c.path_class == INTERMEDIATE_SPINE]
    down = [c for c in cands if c.path_class == INTERMEDIATE_LEAF]
    assert len(direct) == len(full.global_ports_to(spine, 8)) > 0
    assert all(c.vl_after == VL1 for c in direct)
    assert len(down) == full.params.leaves_per_group and all(c.vl_after == VL0 for c in down)
    assert max(c.hop_count_remaining for c in direct) < min(c.hop_count_remaining for c in down)


def test_mini_intermediate_spine_without_link_must_descend(mini):
    src, dst = 0, mini.num_terminals - 1
    spine = next(s for s in mini.spines(4) if s not in linked_spines(mini, 4, 8))
    cands = enumerate_candidates(mini, spine, chunk(src, dst, trace=[0, 8]))
    assert {c.path_class for c in cands} == {INTERMEDIATE_LEAF}
    assert len(cands) == mini.params.leaves_per_group


def test_intermediate_leaf_goes_up_on_vl1(mini):
    src, dst = 0, mini.num_terminals - 1
    leaf = mini.leaf_id(4, 0)
    entry = next(s for s in mini.spines(4) if s not in linked_spines(mini, 4, 8))
    cands = enumerate_candidates(mini, leaf, chunk(src, dst, cls=INTERMEDIATE_LEAF, trace=[0, 8, entry]))
    ups = {mini.port_peer(leaf, c.out_port)[1] for c in cands}
    assert ups == linked_spines(mini, 4, 8)
    assert all(c.vl_after == VL1 for c in cands)


def test_same_leaf_single_terminal_port(mini):
    cands = enumerate_candidates(mini, mini.terminal_leaf(0), chunk(0, 3))
    assert cands == [RouteCandidate(mini.terminal_port(3), MINIMAL, 0, 0.0, VL0)]


def test_intra_group_minimal_only(mini):
    leaf = mini.terminal_leaf(0)
    cands = enumerate_candidates(mini, leaf, chunk(0, 15))
    assert len(cands) == mini.params.spines_per_group
    assert all(c.path_class == MINIMAL and c.hop_count_remaining == 2 for c in cands)
    spine = mini.spine_id(0, 1)
    down = enumerate_candidates(mini, spine, chunk(0, 15))
    assert [mini.port_peer(spine, c.out_port)[1] for c in down] == [mini.terminal_leaf(15)]


def test_destination_spine_goes_down(mini):
    dst = mini.num_terminals - 1
    spine = mini.spine_id(8, 2)
    cands = enumerate_candidates(mini, spine, chunk(0, dst))
    assert [mini.port_peer(spine, c.out_port)[1] for c in cands] == [mini.terminal_leaf(dst)]


def test_wrong_leaf_in_destination_group_raises(mini):
    with pytest.raises(RoutingError):
        enumerate_candidates(mini, mini.leaf_id(8, 0), chunk(0, mini.num_terminals - 1))


def test_vl1_at_source_leaf_raises(mini):
    with pytest.raises(RoutingError):
        enumerate_candidates(mini, mini.terminal_leaf(0), chunk(0, 143, VL1))


def test_no_spine_divert_restricts_source_spine(mini):
    spine = next(iter(linked_spines(mini, 0, 8)))
    on = enumerate_candidates(mini, spine, chunk(0, 143), allow_spine_divert=True)
    off = enumerate_candidates(mini, spine, chunk(0, 143), allow_spine_divert=False)
    assert {c.path_class for c in off} == {MINIMAL}
    assert len(on) == mini.params.global_links_per_spine


# --- choose_port --------------------------------------------------------------------


FPAR_CFG = RoutingConfig()


def test_rule_example_minimal_preferred():
    c = [cand(0, 3, 0.3), cand(1, 4, 0.1, INTERMEDIATE_SPINE), cand(2, 4, 0.2, INTERMEDIATE_SPINE)]
    assert choose_port(c, FPAR_CFG).out_port == 0


def test_rule_example_longer_path_when_shorter_busy():
    c = [cand(0, 3, 0.6), cand(1, 4, 0.4, INTERMEDIATE_SPINE)]
    assert choose_port(c, FPAR_CFG).out_port == 1


def test_rule_example_all_busy_least_loaded_shorter():
    c = [cand(0, 3, 0.6), cand(1, 4, 0.8, INTERMEDIATE_SPINE), cand(2, 4, 0.9, INTERMEDIATE_SPINE)]
    assert choose_port(c, FPAR_CFG).out_port == 0


def test_score_equal_to_threshold_counts_as_under():
    c = [cand(3, 3, 0.5), cand(1, 4, 0.0, INTERMEDIATE_SPINE)]
    assert choose_port(c, FPAR_CFG).out_port == 3


def test_ties_to_lowest_port():
    c = [cand(5, 3, 0.2), cand(2, 3, 0.2), cand(9, 3, 0.2)]
    assert choose_port(c, FPAR_CFG).out_port == 2


def test_minimal_only_ignores_longer():
    c = [cand(0, 3, 0.9), cand(1, 4, 0.0, INTERMEDIATE_SPINE)]
    assert choose_port(c, RoutingConfig(mode=MINIMAL_ONLY)).out_port == 0


def test_empty_candidates_raise():
    with pytest.raises(RoutingError):
        choose_port([], FPAR_CFG)


@pytest.mark.parametrize("T", [0.0, 1.0, -0.1])
def test_fpar_threshold_bounds(T):
    with pytest.raises(ConfigError):
        RoutingConfig(threshold_T=T)


def test_unknown_mode():
    with pytest.raises(ConfigError):
        RoutingConfig(mode="valiant")


scores = st.sampled_from([0.0, 0.125, 0.25, 0.5, 0.75, 1.0]) | st.floats(0, 1)


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.tuples(st.integers(2, 4), scores), min_size=1, max_size=12),
    st.floats(0.01, 0.99),
)
def test_choose_port_matches_reference(items, T):
    ports = random.Random(len(items)).sample(range(64), len(items))
    c = [cand(p, h, s) for p, (h, s) in zip(ports, items)]
    assert choose_port(c, RoutingConfig(threshold_T=T)) == reference_choose(c, T)


# --- VL transition -----------------------------------------------------------------------


def test_vl_transitions():
    ch = chunk(0, 143)
    assert vl_transition(ch, RouteCandidate(0, MINIMAL, 3, 0.0, VL0)) == VL0
    assert vl_transition(ch, RouteCandidate(0, INTERMEDIATE_SPINE, 2, 0.0, VL1)) == VL1
    ch.current_vl = VL1
    assert vl_transition(ch, RouteCandidate(0, INTERMEDIATE_SPINE, 2, 0.0, VL1)) == VL1
    with pytest.raises(InvariantError):
        vl_transition(ch, RouteCandidate(0, INTERMEDIATE_LEAF, 4, 0.0, VL0))


# --- path classification ----------------------------------------------------------------


def test_classify_legal_shapes(mini):
    src, dst = 0, 143
    sl, dl = mini.terminal_leaf(src), mini.terminal_leaf(dst)
    s_src = next(iter(linked_spines(mini, 0, 8)))
    s_dst = next(k for _, k in mini.ports(s_src) if mini.group_of(k) == 8)
    assert classify_path(mini, [sl, s_src, s_dst, dl], src, dst) == MINIMAL
    assert classify_path(mini, [sl], 0, 3) == MINIMAL
    # diverted through the group reached by the first spine's first global port
    sp0 = mini.spine_id(0, 0)
    mid_spine = next(p for k, p in mini.ports(sp0) if k == "global" and mini.group_of(p) != 8)
    mg = mini.group_of(mid_spine)
    exit_spine = next(iter(linked_spines(mini, mg, 8)))
    exit_dst = next(k for _, k in mini.ports(exit_spine) if mini.group_of(k) == 8)
    if exit_spine == mid_spine:
        assert classify_path(mini, [sl, sp0, mid_spine, exit_dst, dl], src, dst) == INTERMEDIATE_SPINE
    mid_leaf = mini.leaf_id(mg, 0)
    if exit_spine != mid_spine:
        trace = [sl, sp0, mid_spine, mid_leaf, exit_spine, exit_dst, dl]
        assert classify_path(mini, trace, src, dst) == INTERMEDIATE_LEAF
        assert len(trace) == 7


@pytest.mark.parametrize("trace", [[], [0, 8, 0], [0, 9], [8, 4]])
def test_classify_rejects_illegal(mini, trace):
    with pytest.raises(InvariantError):
        classify_path(mini, trace, 0, 15)


def test_engine_paths_all_legal_under_load(mini, engine_cls):
    # tornado-like pressure pushes chunks onto both non-minimal shapes
    plan = EnginePlan(1)
    n, tpg = mini.num_terminals, mini.params.terminals_per_group
    for i in range(20):
        plan.add_batch(i * 250, [plan.add_message(0, r, (r + tpg) % n, 8192) for r in range(n)])
    eng = engine_cls(mini, plan)
    report = eng.run_until()
    res = eng.result()
    assert report.undelivered == 0
    assert {MINIMAL, INTERMEDIATE_SPINE, INTERMEDIATE_LEAF} <= set(res.path_class)
    for cls, vl in zip(res.path_class, res.vl):
        assert vl == (VL0 if cls == MINIMAL else VL1)


def test_minimal_mode_never_diverts(mini, engine_cls):
    plan = EnginePlan(1)
    n, tpg = mini.num_terminals, mini.params.terminals_per_group
    for i in range(10):
        plan.add_batch(i * 250, [plan.add_message(0, r, (r + tpg) % n, 8192) for r in range(n)])
    eng = engine_cls(mini, plan, routing=RoutingConfig(mode=MINIMAL_ONLY))
    assert eng.run_until().undelivered == 0
    assert set(eng.result().path_class) == {MINIMAL}
    assert set(eng.result().vl) == {VL0}


# --- deadlock freedom ---------------------------------------------------------------


@pytest.mark.parametrize("mode", [FPAR, MINIMAL_ONLY])
def test_channel_dependency_graph_acyclic(mini, mode):
    deps = channel_dependency_graph(mini, RoutingConfig(mode=mode))
    assert deps
    assert find_dependency_cycle(deps) is None


def test_cycle_finder_detects_cycle():
    assert find_dependency_cycle({1: {2}, 2: {3}, 3: {1}}) is not None
