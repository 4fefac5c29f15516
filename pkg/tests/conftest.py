import pytest

from bftsim import AdversarySpec, SystemConfig, flooding_spec, make_strategy, run_simulation

STRATEGY_NAMES = ["silent", "crash-after", "equivocator", "fake-accept-set"]


def adversary(n, t, strategy, alt=99):
    """The last ``t`` ids run ``strategy``; an equivocator splits on ``alt``."""
    desc = {"name": strategy, "alt_input": alt} if strategy == "equivocator" else strategy
    return AdversarySpec({p: make_strategy(desc) for p in range(n - t + 1, n + 1)})


def flood_run(n=4, t=1, strategy=None, mode="MOBtt", seed=0, rounds=2, inputs=None):
    adv = adversary(n, t, strategy) if strategy else None
    inputs = inputs or {i: i for i in range(1, n + 1)}
    return run_simulation(SystemConfig(n, t), flooding_spec(rounds), inputs, mode, adv, seed=seed)


@pytest.fixture
def cfg4():
    return SystemConfig(4, 1)


def pytest_terminal_summary(terminalreporter):
    # output capture hides the per-criterion lines; repeat them uncaptured
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
