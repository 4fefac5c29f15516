"""Asynchronous Byzantine simulation of synchronous round-based protocols.

Each processor replicates every participant's protocol state machine and
broadcasts only sets of processor ids after round 1; a synchronous reference
executor replays the run each trace encodes and checks the two agree.
"""

from .adversary import AdversarySpec, CrashAfter, Equivocator, FakeAcceptSet, Silent, make_strategy
from .coin import AmpcCoinProvider, IdealDealer, sim_coin
from .common_core import CommonCore, run_exchange
from .cosend import AcceptEvent, CoSendLayer
from .engine import RunResult, Simulation, extract_outputs, run_simulation
from .errors import (
    ConfigError,
    DuplicateInstance,
    ExtractionFailure,
    InvalidRun,
    MissingSnapshot,
    NonQuiescent,
    PreconditionError,
    ProtocolPanic,
    ProviderUnavailable,
    ResilienceViolation,
    RunAborted,
    SimError,
)
from .model import Mode, ProtocolSpec, Step, SystemConfig, validate_config
from .network import Network, Schedule
from .protocols import approx_agreement_spec, ben_or_style_spec, build_spec, flooding_spec
from .reference import ABSENT, MobRun, check_equivalence, execute_sync, extract_run, validate_run
from .scenario import ScenarioConfig, run_batch, run_scenario
from .trace import Trace

__version__ = "0.1.0"
