import pytest

from bftsim import (
    AdversarySpec,
    ConfigError,
    NonQuiescent,
    RunAborted,
    ResilienceViolation,
    SystemConfig,
    Trace,
    ben_or_style_spec,
    extract_outputs,
    flooding_spec,
    run_simulation,
)
from bftsim.adversary import Silent
from bftsim.checks import check_replica_agreement, check_value_free
from bftsim.coin import AmpcCoinProvider
from bftsim.errors import MissingSnapshot
from bftsim.reference import MobRun, execute_sync
from conftest import adversary, flood_run

FULL = [[1, 1], [2, 2], [3, 3], [4, 4]]


def test_fault_free_flooding_matches_sync_replay():
    res = flood_run()
    spec = flooding_spec(2)
    sync = execute_sync(spec, MobRun(4, 1, 2, {i: i for i in range(1, 5)}, {i: i for i in range(1, 5)}))
    assert res.outputs == sync.outputs == {p: FULL for p in range(1, 5)}
    out = extract_outputs(res)
    assert len(out.digests) == 4 * 3
    assert all(len(set(d.values())) == 1 and len(d) == 4 for d in out.digests.values())


@pytest.mark.parametrize("mode", ["MAOBt", "MOBtt"])
def test_silent_p4(mode):
    res = flood_run(strategy="silent", mode=mode)
    assert set(res.outputs) == {1, 2, 3}
    for e in res.trace.of("broadcast"):
        if e["r"] > 1:
            assert len(e["v"]) >= 3
    assert res.outputs[1] == [[1, 1], [2, 2], [3, 3]]


def test_fake_accept_set_blocks_only_p4():
    res = flood_run(strategy="fake-accept-set")
    footer = res.trace.footer
    assert footer["blocked"] == {str(p): [[3, 4]] for p in (1, 2, 3)}
    assert set(res.outputs) == {1, 2, 3}
    out = extract_outputs(res)
    assert (4, 2) not in out.digests and (4, 1) in out.digests
    assert all(len(set(d.values())) == 1 for d in out.digests.values())


def test_blocked_replica_digests_stop_early():
    # SM_4 has digests only up to its last processed round, equal everywhere
    out = extract_outputs(flood_run(strategy="fake-accept-set", seed=5))
    rounds = sorted(r for i, r in out.digests if i == 4)
    assert rounds == [1]
    assert set(out.digests[(4, 1)]) == {1, 2, 3}


def test_sm_start_carries_input():
    res = flood_run(inputs={1: 1, 2: 9, 3: 3, 4: 4})
    assert res.outputs[1][1] == [2, 9]
    starts = [e for e in res.trace.of("sm-start") if e["i"] == 2]
    assert len(starts) == 4


def test_missing_sender_message_is_omitted():
    # a replica whose outbox skips p1 contributes nothing to SM_1's inbox
    from bftsim import ProtocolSpec, Step

    def start(v, me, cfg):
        targets = range(1, cfg.n + 1) if me != 3 else (2, 3, 4)
        return Step(v, {q: (me, v) for q in targets})

    def transition(inbox, state, r):
        return Step(state, {}, output=sorted(inbox))

    spec = ProtocolSpec("skip", 1, start, transition)
    res = run_simulation(SystemConfig(4, 1), spec, {i: i for i in range(1, 5)}, "MOBtt", seed=1)
    assert 3 not in res.outputs[1]
    assert 3 in res.outputs[2]


def test_value_free_after_round_one():
    res = flood_run(7, 2, "equivocator", seed=3)
    assert check_value_free(res.trace, include_byzantine=True) == []
    assert check_replica_agreement(res.trace) == []


def test_self_membership_and_quorum():
    res = flood_run(7, 2, "crash-after", seed=4)
    for e in res.trace.of("broadcast"):
        if e["r"] > 1 and e["p"] <= 5:
            assert e["p"] in e["v"] and len(e["v"]) >= 5


def test_processors_keep_serving_after_halting():
    res = flood_run(seed=2)
    last_output = max(i for i, e in enumerate(res.trace.events) if e["ev"] == "output")
    assert res.trace.quiescent
    assert len(res.trace.events) > last_output


def test_config_guards():
    with pytest.raises(ResilienceViolation):
        run_simulation(SystemConfig(3, 1), flooding_spec(1), {1: 1, 2: 2, 3: 3})
    with pytest.raises(ConfigError):
        run_simulation(SystemConfig(4, 1), flooding_spec(1), {1: 1, 2: 2})
    with pytest.raises(ConfigError):
        run_simulation(SystemConfig(4, 1), flooding_spec(1), {i: i for i in range(1, 5)},
                       adversary=AdversarySpec({3: Silent(), 4: Silent()}))


def test_coin_spec_refused_without_provider():
    with pytest.raises(ConfigError):
        run_simulation(SystemConfig(5, 1), ben_or_style_spec(1), {i: 0 for i in range(1, 6)}, "randomized")


def test_unavailable_coin_aborts():
    with pytest.raises(RunAborted):
        run_simulation(SystemConfig(5, 1), ben_or_style_spec(1), {i: 0 for i in range(1, 6)},
                       "randomized", coins=AmpcCoinProvider())


def test_budget_exhaustion_is_non_quiescent():
    with pytest.raises(NonQuiescent):
        run_simulation(SystemConfig(4, 1), flooding_spec(2), {i: i for i in range(1, 5)}, max_picks=10)


def test_extract_outputs_needs_quiescent_run():
    with pytest.raises(NonQuiescent, match="not quiescent"):
        extract_outputs(Trace())


def test_missing_snapshot_is_internal_failure():
    from bftsim.engine import Simulation

    sim = Simulation(SystemConfig(4, 1), flooding_spec(2), {i: i for i in range(1, 5)})
    with pytest.raises(MissingSnapshot):
        sim.processors[1]._process(2, 1, (1, 2, 3))


def test_malformed_round_one_input_rejected_everywhere():
    # a Byzantine input that does not decode is never processed by anyone
    from bftsim.adversary import Custom
    from bftsim import wire

    def garble(ctx, dst, payload):
        m = wire.decode(payload, ctx.n)
        if m and m.r == 1 and m.s == ctx.me:
            return [(dst, wire.cosend(m.kind, 1, m.s, "{not json"))]
        return [(dst, payload)]

    res = run_simulation(SystemConfig(4, 1), flooding_spec(2), {i: i for i in range(1, 5)},
                         "MOBtt", AdversarySpec({4: Custom(garble)}), seed=0)
    assert res.outputs[1] == [[1, 1], [2, 2], [3, 3]]
    assert not any(e["s"] == 4 for e in res.trace.of("accept") if e["p"] != 4)
