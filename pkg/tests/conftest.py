import pytest

from gameshap.goofspiel import Goofspiel, GoofspielConfig
from gameshap.kuhn import KuhnPoker
from gameshap.game import StrategyProfile

# Analytic Kuhn equilibrium family (player 1 parameter alpha in [0, 1/3]).
def kuhn_equilibrium(alpha: float = 0.0) -> StrategyProfile:
    bet = {"J": alpha, "Q": 0.0, "K": 3 * alpha}
    call_after_pb = {"J": 0.0, "Q": alpha + 1 / 3, "K": 1.0}
    p2_bet_after_p = {"J": 1 / 3, "Q": 0.0, "K": 1.0}
    p2_call_after_b = {"J": 0.0, "Q": 1 / 3, "K": 1.0}
    prof = StrategyProfile()
    for c in "JQK":
        prof[f"p1|{c}|"] = [1 - bet[c], bet[c]]
        prof[f"p1|{c}|pb"] = [1 - call_after_pb[c], call_after_pb[c]]
        prof[f"p2|{c}|p"] = [1 - p2_bet_after_p[c], p2_bet_after_p[c]]
        prof[f"p2|{c}|b"] = [1 - p2_call_after_b[c], p2_call_after_b[c]]
    return prof


@pytest.fixture(scope="session")
def kuhn():
    return KuhnPoker()


@pytest.fixture(scope="session")
def g3():
    return Goofspiel(GoofspielConfig(k=3))


@pytest.fixture(scope="session")
def g4():
    return Goofspiel(GoofspielConfig(k=4))
