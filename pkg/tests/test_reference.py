import pytest
from hypothesis import given, settings, strategies as st

from bftsim import (
    ABSENT,
    AdversarySpec,
    InvalidRun,
    MobRun,
    SystemConfig,
    check_equivalence,
    execute_sync,
    extract_run,
    flooding_spec,
    run_simulation,
    validate_run,
    wire,
)
from bftsim.adversary import Custom
from bftsim.network import SlowSenders
from bftsim.reference import corrupt_trace
from conftest import STRATEGY_NAMES, flood_run

IDS4 = {i: i for i in range(1, 5)}


def drop_all_from(sender, n, rounds):
    return {r: frozenset((sender, q) for q in range(1, n + 1)) for r in range(1, rounds + 1)}


def flood_oracle(run: MobRun) -> dict:
    """Who knows whose input after each round, by plain set reasoning."""
    live = [p for p in run.ids if run.altered_inputs[p] is not ABSENT]
    known = {p: {p} for p in live}
    for r in range(1, run.rounds + 1):
        gone = run.drops.get(r, frozenset())
        known = {q: known[q].union(*(known[p] for p in live if (p, q) not in gone)) for q in live}
    return {q: [[p, run.altered_inputs[p]] for p in sorted(known[q])] for q in live}


def test_no_drops_everyone_learns_everything():
    run = MobRun(4, 1, 1, IDS4, dict(IDS4))
    res = execute_sync(flooding_spec(1), run, "MOBtt")
    assert all(out == [[1, 1], [2, 2], [3, 3], [4, 4]] for out in res.outputs.values())


def test_p4_dropped_every_round():
    run = MobRun(4, 1, 2, IDS4, dict(IDS4), drop_all_from(4, 4, 2))
    res = execute_sync(flooding_spec(2), run, "MOBtt")
    for p in (1, 2, 3):
        assert res.outputs[p] == [[1, 1], [2, 2], [3, 3]]
    assert res.outputs == flood_oracle(run)
    validate_run(run, "MAOBt")


def test_two_dropped_senders_is_invalid_mobtt():
    drops = {1: frozenset({(3, 1), (4, 2)})}
    run = MobRun(4, 1, 1, IDS4, dict(IDS4), drops)
    with pytest.raises(InvalidRun):
        validate_run(run, "MOBtt")
    with pytest.raises(InvalidRun):
        execute_sync(flooding_spec(1), run, "MOBtt")
    validate_run(run, "MAOBt")  # one incoming drop per receiver is fine there


def test_maobt_receiver_budget():
    run = MobRun(4, 1, 1, IDS4, dict(IDS4), {1: frozenset({(3, 1), (4, 1)})})
    with pytest.raises(InvalidRun):
        validate_run(run, "MAOBt")


def test_too_many_alterations():
    run = MobRun(4, 1, 1, IDS4, {1: 1, 2: 2, 3: 30, 4: 40})
    assert run.alteration_set() == {3, 4}
    with pytest.raises(InvalidRun):
        validate_run(run, "MOBtt")
    validate_run(run, "MOBfm", f=2, m=0)


def test_absent_processor_sends_nothing():
    run = MobRun(4, 1, 2, IDS4, {1: 1, 2: 2, 3: 3, 4: ABSENT})
    res = execute_sync(flooding_spec(2), run, "MOBtt")
    assert set(res.outputs) == {1, 2, 3}
    assert res.outputs[1] == [[1, 1], [2, 2], [3, 3]]


@st.composite
def mobtt_runs(draw):
    n = draw(st.sampled_from([4, 7]))
    t = (n - 1) // 3
    rounds = draw(st.integers(1, 3))
    drops = {}
    for r in range(1, rounds + 1):
        senders = draw(st.sets(st.integers(1, n), max_size=t))
        pairs = {(s, q) for s in senders for q in range(1, n + 1) if draw(st.booleans())}
        drops[r] = frozenset(pairs)
    ids = {i: i for i in range(1, n + 1)}
    return MobRun(n, t, rounds, ids, dict(ids), drops)


@settings(max_examples=100, deadline=None)
@given(mobtt_runs())
def test_sync_flooding_matches_oracle(run):
    validate_run(run, "MOBtt")
    assert execute_sync(flooding_spec(run.rounds), run).outputs == flood_oracle(run)


def test_extract_fault_free():
    run = extract_run(flood_run(seed=1).trace)
    assert run.alteration_set() == set()
    assert all(not d for d in run.drops.values())


def _split_input(ctx, dst, payload):
    # p1 gets the real input in p4's init; every other round-1 message of
    # p4's instance carries 99, so the majority echoes 99
    m = wire.decode(payload, ctx.n)
    if m and m.r == 1 and m.s == ctx.me and not (m.kind == wire.INIT and dst == 1):
        return [(dst, wire.cosend(m.kind, 1, m.s, "99"))]
    return [(dst, payload)]


def test_extract_equivocated_input():
    adv = AdversarySpec({4: Custom(_split_input, "split-input")})
    trace = run_simulation(SystemConfig(4, 1), flooding_spec(2), IDS4, "MOBtt", adv, seed=0).trace
    inits = {e["msg"] for e in trace.of("submit") if e["src"] == 4 and '"init","r":1' in e["msg"]}
    assert len(inits) == 2
    accepted = {e["v"] for e in trace.of("accept") if e["r"] == 1 and e["s"] == 4 and e["p"] != 4}
    assert accepted == {"99"}
    run = extract_run(trace)
    assert run.altered_inputs == {1: 1, 2: 2, 3: 3, 4: 99}
    assert run.alteration_set() == {4}
    assert check_equivalence(trace).ok


@pytest.mark.parametrize("strategy", STRATEGY_NAMES)
def test_mobtt_projection_bounded(strategy):
    for seed in range(10):
        trace = flood_run(7, 2, strategy, seed=seed).trace
        correct = trace.correct()
        pis = {}
        for e in trace.of("broadcast"):
            if e["p"] in correct and e["r"] > 1:
                pis.setdefault(e["r"] - 1, []).append(set(e["v"]))
        for r, sets in pis.items():
            dropped = set().union(*(set(range(1, 8)) - s for s in sets))
            assert len(dropped) <= 2
        validate_run(extract_run(trace), "MOBtt")


def test_absent_byzantine_input():
    run = extract_run(flood_run(strategy="silent", seed=3).trace)
    assert run.altered_inputs[4] is ABSENT
    assert all({s for s, _ in d} == {4} for d in run.drops.values())
    validate_run(run, "MOBtt")


@pytest.mark.parametrize("mode", ["MAOBt", "MOBtt"])
def test_fault_free_passes(mode):
    verdict = check_equivalence(flood_run(mode=mode, seed=7).trace)
    assert verdict.ok, verdict.report()
    assert verdict.compared == 4 * 12


def test_corrupted_digest_fails_with_location():
    trace = flood_run(strategy="equivocator", seed=2).trace
    verdict = check_equivalence(corrupt_trace(trace, 5), verbose=True)
    assert not verdict.ok
    assert verdict.divergence["recorded"] != verdict.divergence["replayed"]
    assert {"processor", "replica", "round", "replayed_state"} <= set(verdict.divergence)
    assert check_equivalence(trace).ok  # the original is untouched


def test_corrupted_output_fails():
    trace = flood_run(seed=2).trace.copy()
    next(trace.of("output"))["value"] = [[1, 1]]
    verdict = check_equivalence(trace)
    assert not verdict.ok and "output" in verdict.reason


def test_nonquiescent_trace_fails_cleanly():
    trace = flood_run().trace.copy()
    trace.events.pop()
    verdict = check_equivalence(trace)
    assert not verdict.ok and "extraction" in verdict.reason


def _skip_core(ctx, dst, payload):
    # Byzantine p4 skips the common core and broadcasts {2, 3, 4}
    m = wire.decode(payload, ctx.n)
    if m and m.kind == wire.INIT and m.r >= 2 and m.s == ctx.me:
        return [(dst, wire.cosend(wire.INIT, m.r, m.s, (2, 3, 4)))]
    if m and m.kind == wire.CC:
        return []
    return [(dst, payload)]


def test_core_skipping_byzantine_breaks_mobtt_budget():
    # A Byzantine processor's own accept set is not bound to the common core;
    # when correct processors leave it out and it leaves out p1, the extracted
    # sender projection is {1, 4}.  The run stays MAOBt-valid and replays
    # exactly; only the MOBtt budget is exceeded.
    adv = AdversarySpec({4: Custom(_skip_core, "skip-core")}, SlowSenders([4], 20))
    res = run_simulation(SystemConfig(4, 1), flooding_spec(2), IDS4, "MOBtt", adv, seed=0)
    verdict = check_equivalence(res.trace)
    assert not verdict.ok
    assert "dropped-sender set [1, 4]" in verdict.reason
    run = extract_run(res.trace)
    validate_run(run, "MAOBt")
    replay = execute_sync(flooding_spec(2), run)
    assert all(replay.outputs[p] == res.outputs[p] for p in (1, 2, 3))
