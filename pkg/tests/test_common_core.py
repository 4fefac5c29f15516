from hypothesis import given, settings, strategies as st

from bftsim.checks import check_common_core
from bftsim.common_core import CommonCore, run_exchange
from conftest import flood_run


def test_identical_full_sets():
    out = run_exchange(4, 1, {p: {1, 2, 3, 4} for p in (1, 2, 3, 4)})
    assert set(out.values()) == {frozenset({1, 2, 3, 4})}


def test_silent_fourth():
    out = run_exchange(4, 1, {p: {1, 2, 3} for p in (1, 2, 3)})
    assert set(out) == {1, 2, 3}
    assert frozenset.intersection(*out.values()) == {1, 2, 3}


def test_early_set_counts_once_accept_grows():
    core = CommonCore(4, 1)
    assert core.begin(1, {1, 2, 3}) == {1, 2, 3}
    for src in (1, 2):
        core.receive(src, 1, 1, {1, 2, 3})
    core.receive(3, 1, 1, {1, 3, 4})  # not yet a subset: kept, not counted
    assert core.poll(1, {1, 2, 3}) == (None, None)
    sent, result = core.poll(1, {1, 2, 3, 4})
    assert sent == {1, 2, 3, 4} and result is None
    assert core.exchanges[1].eligible[1] == [1, 2, 3]


def test_first_set_per_sender_wins():
    core = CommonCore(4, 1)
    assert core.receive(2, 1, 1, {1, 2, 3})
    assert not core.receive(2, 1, 1, {1, 2, 3, 4})
    assert core.received[(1, 1)][2] == {1, 2, 3}


def test_returns_live_accept_set():
    core = CommonCore(4, 1)
    core.begin(1, {1, 2, 3})
    for step in (1, 2):
        for src in (1, 2, 3):
            core.receive(src, 1, step, {1, 2, 3})
    _, result = core.poll(1, {1, 2, 3, 4})
    assert result == {1, 2, 3, 4}


@st.composite
def staggered(draw):
    # correct processors' accept sets: each holds n - t of the correct ids
    # plus any subset of the rest, modelling different arrival orders
    n = draw(st.sampled_from([4, 7, 10]))
    t = (n - 1) // 3
    ids = list(range(1, n + 1))
    sets = {}
    for p in ids[: n - t]:
        extra = draw(st.sets(st.sampled_from(ids)))
        base = draw(st.permutations(ids)).__getitem__(slice(0, n - t))
        sets[p] = set(base) | extra | {p}
    order = draw(st.permutations(sorted(sets)))
    return n, t, sets, order


@settings(max_examples=150, deadline=None)
@given(staggered())
def test_static_exchange_properties(case):
    n, t, sets, order = case
    out = run_exchange(n, t, sets, order)
    # all n - t participants are correct, so everyone terminates
    if all(sum(sets[q] <= sets[p] for q in sets) >= n - t for p in sets):
        assert set(out) == set(sets)
    for p, res in out.items():
        assert sets[p] <= res
    if len(out) == len(sets):
        assert len(frozenset.intersection(*out.values())) >= n - t


def test_engine_n4_silent_common_core():
    trace = flood_run(4, 1, "silent").trace
    assert all(not v for v in check_common_core(trace).values())
    returns = [set(e["set"]) for e in trace.of("cc-return") if e["p"] != 4]
    assert len(returns) == 3 * 2
    assert all(r == {1, 2, 3} for r in returns)


def test_engine_n7_staggered_commonality():
    for seed in range(25):
        trace = flood_run(7, 2, "equivocator", seed=seed).trace
        by_round = {}
        for e in trace.of("cc-return"):
            if e["p"] in trace.byzantine():
                continue
            by_round.setdefault(e["r"], []).append(frozenset(e["set"]))
        for sets in by_round.values():
            assert len(sets) == 5
            assert len(frozenset.intersection(*sets)) >= 5
