import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dfpsim.errors import ArgumentError, ConfigError
from dfpsim.placement import Allocation, contiguous_alloc
from dfpsim.topology import GIB
from dfpsim.workload import (
    BACKGROUND, BROADCAST, STENCIL3D, TORNADO, UNIFORM_RANDOM, JobSpec,
    background_local_ids, background_peers, broadcast_targets, build_engine_plan,
    default_stencil_dims, format_workload, msg_size_for_tgll, parse_workload, rank_rng,
    resolve_seeds, stencil_is_degenerate, stencil_neighbors, tgll, tornado_dest,
    traffic_plan, ur_dest, ur_dests,
)

BW = 4.37 * GIB

# Background message sizes in bytes: rows are intervals, columns 50/90/130 % load
TABLE1 = {
    1_000: (2_340, 4_212, 6_084),
    10_000: (23_400, 42_120, 60_840),
    100_000: (234_000, 421_200, 608_400),
}


def chi2_z(counts, expected):
    """Wilson-Hilferty normal score of a chi-square statistic."""
    df = len(counts) - 1
    stat = float(((counts - expected) ** 2 / expected).sum())
    return ((stat / df) ** (1 / 3) - (1 - 2 / (9 * df))) / math.sqrt(2 / (9 * df))


# --- TGLL ---------------------------------------------------------------------------


@pytest.mark.parametrize("interval,row", TABLE1.items())
def test_table1_regenerated_within_one_percent(interval, row):
    for load, nominal_size in zip((0.5, 0.9, 1.3), row):
        assert msg_size_for_tgll(load, interval, BW) == pytest.approx(nominal_size, rel=0.01)
        assert tgll(nominal_size, interval, BW) == pytest.approx(load, rel=0.01)


def test_tgll_examples():
    assert tgll(2_340, 1_000, BW) == pytest.approx(0.499, abs=0.005)
    assert tgll(42_120, 10_000, BW) == pytest.approx(0.898, abs=0.005)
    assert tgll(0, 123, 1.0) == 0


def test_msg_size_examples():
    assert msg_size_for_tgll(1.30, 1_000, BW) == pytest.approx(6_100, rel=0.01)
    assert msg_size_for_tgll(0.50, 100_000, BW) == pytest.approx(234_620, rel=0.001)


@given(st.floats(0.01, 6.0), st.integers(1_000, 10**6))
def test_tgll_round_trip(x, interval):
    assert tgll(msg_size_for_tgll(x, interval, BW), interval, BW) == pytest.approx(x, rel=0.01)


@pytest.mark.parametrize("args", [(1, 0, BW), (1, 10, 0)])
def test_tgll_rejects(args):
    with pytest.raises(ArgumentError):
        tgll(*args)


def test_msg_size_rejects_zero_target():
    with pytest.raises(ArgumentError):
        msg_size_for_tgll(0, 1000, BW)


# --- uniform random ------------------------------------------------------------------


def test_ur_two_ranks():
    rng = rank_rng(5, 0)
    assert {ur_dest(0, 2, rng) for _ in range(50)} == {1}
    assert set(ur_dests(1, 2, rank_rng(5, 1), 50).tolist()) == {0}


def test_ur_histogram_uniform():
    n, rank, draws = 2304, 17, 10**6
    d = ur_dests(rank, n, rank_rng(42, rank), draws)
    counts = np.bincount(d, minlength=n).astype(float)
    assert counts[rank] == 0
    counts = np.delete(counts, rank)
    assert abs(chi2_z(counts, draws / (n - 1))) < 3


def test_ur_scalar_and_vector_share_stream_semantics():
    a = [ur_dest(3, 10, rng) for rng in [rank_rng(9, 3)] for _ in range(100)]
    assert all(0 <= x < 10 and x != 3 for x in a)
    assert a == [ur_dest(3, 10, rng) for rng in [rank_rng(9, 3)] for _ in range(100)]


def test_ur_determinism():
    a = ur_dests(5, 100, rank_rng(1, 5), 1000)
    b = ur_dests(5, 100, rank_rng(1, 5), 1000)
    assert (a == b).all()
    assert not (a == ur_dests(5, 100, rank_rng(2, 5), 1000)).all()


# --- stencil -------------------------------------------------------------------------


def test_stencil_examples():
    assert sorted(stencil_neighbors(0, (4, 4, 4))) == [1, 3, 4, 12, 16, 48]
    assert sorted(stencil_neighbors(0, (12, 12, 16))) == [1, 11, 12, 132, 144, 2160]
    assert not stencil_is_degenerate((4, 4, 4))


def test_stencil_degenerate():
    nb = stencil_neighbors(0, (2, 1, 1))
    assert nb[:2] == [1, 1] and nb[2:] == [0, 0, 0, 0]
    assert stencil_is_degenerate((2, 1, 1))


def test_stencil_symmetric_and_six_distinct():
    dims = (4, 4, 6)
    for r in range(96):
        nb = stencil_neighbors(r, dims)
        assert len(set(nb)) == 6 and r not in nb
        for q in nb:
            assert r in stencil_neighbors(q, dims)


def test_stencil_errors():
    with pytest.raises(ConfigError):
        stencil_neighbors(64, (4, 4, 4))
    with pytest.raises(ConfigError):
        JobSpec(0, STENCIL3D, 64, 10, 10, 1, 0, (4, 4, 3))


def test_default_stencil_dims():
    assert default_stencil_dims(2304) == (12, 12, 16)
    assert default_stencil_dims(96) == (4, 4, 6)
    assert default_stencil_dims(64) == (4, 4, 4)
    assert default_stencil_dims(7) == (1, 1, 7)


# --- tornado and broadcast ------------------------------------------------------------


def test_tornado():
    assert tornado_dest(0, 384, 2304) == 384
    assert tornado_dest(2303, 384, 2304) == 383
    assert sorted(tornado_dest(r, 384, 2304) for r in range(2304)) == list(range(2304))
    with pytest.raises(ConfigError):
        tornado_dest(0, 0, 10)


def test_broadcast():
    assert broadcast_targets(1, 3) == [0, 2]
    assert len(broadcast_targets(0, 2304)) == 2303
    assert broadcast_targets(0, 1) == []
    with pytest.raises(ConfigError):
        broadcast_targets(3, 3)


# --- background -----------------------------------------------------------------------


def test_background_peers_full_scale(full):
    g0, g1, g2 = (full.group_terminals(g) for g in range(3))
    assert background_peers(full, 0, 0, [0, 1, 2]) == [g1[0], g2[0]]
    assert background_peers(full, 5, 1, [0, 1]) == [g0[5]]
    with pytest.raises(ConfigError):
        background_peers(full, 0, 3, [0, 1, 2])
    with pytest.raises(ConfigError):
        background_peers(full, 384, 0, [0, 1, 2])


def test_background_spread_two_per_leaf(full):
    local = background_local_ids(full, 48)
    terms = full.group_terminals(0)
    per_leaf = {}
    for x in local:
        leaf = full.terminal_leaf(terms[x])
        per_leaf[leaf] = per_leaf.get(leaf, 0) + 1
    assert len(per_leaf) == 24 and set(per_leaf.values()) == {2}


def test_background_job_validation():
    with pytest.raises(ConfigError):
        JobSpec(0, BACKGROUND, 10, 1, 1, 1, 0, (0, 1, 2))
    with pytest.raises(ConfigError):
        JobSpec(0, BACKGROUND, 4, 1, 1, 1, 0, (0, 0))


# --- JobSpec ----------------------------------------------------------------------------


@pytest.mark.parametrize("kw", [
    dict(nprocs=1), dict(msg_size=0), dict(interval=-1), dict(msg_count=-1),
    dict(seed=-1), dict(seed=2**64), dict(pattern="alltoall"),
])
def test_jobspec_rejects(kw):
    base = dict(job_id=0, pattern=UNIFORM_RANDOM, nprocs=4, msg_size=1, interval=0, msg_count=1, seed=0)
    base.update(kw)
    with pytest.raises(ConfigError):
        JobSpec(**base)


@pytest.mark.parametrize("pattern,args", [(TORNADO, (0,)), (TORNADO, (4,)), (BROADCAST, (4,)), (UNIFORM_RANDOM, (1,))])
def test_pattern_args_rejected(pattern, args):
    with pytest.raises(ConfigError):
        JobSpec(0, pattern, 4, 1, 1, 1, 0, args)


# --- schedules --------------------------------------------------------------------------


def test_traffic_plan_open_loop_schedule():
    job = JobSpec(0, UNIFORM_RANDOM, 8, 64, 250, 5, 3)
    plan = traffic_plan(job)
    for r, row in enumerate(plan):
        assert [t for t, _ in row] == [i * 250 for i in range(5)]
        assert all(0 <= d < 8 and d != r for _, d in row)
    assert plan == traffic_plan(job)


def test_traffic_plan_stencil_six_per_iteration():
    job = JobSpec(0, STENCIL3D, 64, 64, 100, 2, 0, (4, 4, 4))
    row = traffic_plan(job)[0]
    assert [t for t, _ in row] == [0] * 6 + [100] * 6


def test_build_engine_plan_gates_broadcast(mini):
    bc = JobSpec(0, BROADCAST, 4, 64, 0, 3, 0, (0,))
    ur = JobSpec(1, UNIFORM_RANDOM, 4, 64, 100, 2, 0)
    allocs = {0: contiguous_alloc(4, mini, 0, 0), 1: Allocation(1, [20, 21, 22, 23])}
    plan, ids = build_engine_plan([bc, ur], allocs)
    assert len(ids) == 3 * 3 + 2 * 4
    gates = [g for g in plan.batch_gate if g >= 0]
    assert len(gates) == 2
    # each broadcast iteration waits on the previous broadcast batch
    bc_batches = [b for b, msgs in enumerate(plan.batch_msgs) if plan.msg_job[msgs[0]] == 0]
    assert [plan.batch_gate[b] for b in bc_batches] == [-1] + bc_batches[:-1]


def test_build_engine_plan_allocation_size_mismatch(mini):
    job = JobSpec(0, TORNADO, 4, 64, 0, 1, 0, (1,))
    with pytest.raises(ConfigError):
        build_engine_plan([job], {0: Allocation(0, [0, 1, 2])})


def test_build_engine_plan_requires_seed(mini):
    job = JobSpec(0, UNIFORM_RANDOM, 4, 64, 0, 1, None)
    with pytest.raises(ConfigError):
        build_engine_plan([job], {0: contiguous_alloc(4, mini)})


# --- seeds and files ---------------------------------------------------------------------


def test_resolve_seeds_env():
    jobs = [JobSpec(0, UNIFORM_RANDOM, 4, 1, 1, 1, None), JobSpec(3, UNIFORM_RANDOM, 4, 1, 1, 1, 99)]
    assert [j.seed for j in resolve_seeds(jobs, {"DFPSIM_SEED": "1000"})] == [1000, 99]
    assert [j.seed for j in resolve_seeds(jobs, {})] == [0, 99]
    with pytest.raises(ConfigError):
        resolve_seeds(jobs, {"DFPSIM_SEED": "abc"})


WORKLOAD = """\
# target and background
0 uniform-random 96 2048 1000 100 7
1 stencil3d 64 4096 500 10 - 4 4 4
2 tornado 96 2048 1000 5 1 16
3 broadcast 96 2048 0 10 2 0
4 background 3 4096 10000 20 5 0,1,2
"""


def test_workload_round_trip():
    jobs = parse_workload(WORKLOAD)
    assert [j.pattern for j in jobs] == [UNIFORM_RANDOM, STENCIL3D, TORNADO, BROADCAST, BACKGROUND]
    assert jobs[1].seed is None and jobs[1].args == (4, 4, 4)
    assert jobs[4].args == (0, 1, 2)
    assert parse_workload(format_workload(jobs)) == jobs


def test_stencil_default_dims_in_file():
    (job,) = parse_workload("0 stencil3d 96 10 10 1 0\n")
    assert job.args == (4, 4, 6)


@pytest.mark.parametrize("text,line", [
    ("0 uniform-random 4 1 1\n", 1),
    ("\n0 uniform-random four 1 1 1 0\n", 2),
    ("0 uniform-random 4 1 1 1 x\n", 1),
    ("0 uniform-random 4 1 1 1 0\n0 tornado 4 1 1 1 0 1\n", 2),
    ("0 tornado 4 1 1 1 0 z\n", 1),
    ("0 pingpong 4 1 1 1 0\n", 1),
    ("0 background 4 1 1 1 0 0 1\n", 1),
])
def test_workload_parse_errors_report_line(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_workload(text, "w.txt")
    assert exc.value.line == line and exc.value.path == "w.txt"
