"""Three-card Kuhn poker, used to calibrate the solvers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .game import CHANCE, TERMINAL, Game, UsageError

CARD_NAMES = "JQK"
DEALS = tuple((a, b) for a in range(3) for b in range(3) if a != b)
_TERMINAL_HISTORIES = ("pp", "bp", "bb", "pbp", "pbb")


@dataclass(frozen=True)
class KuhnState:
    deal: tuple[int, int] | None = None
    history: str = ""


class KuhnPoker(Game):
    """Ante 1, single bet of 1.  Actions: 0 = pass/fold, 1 = bet/call."""

    name = "kuhn"

    def config_dict(self) -> dict:
        return {"name": self.name}

    def initial_state(self) -> KuhnState:
        return KuhnState()

    def current_player(self, s: KuhnState) -> int:
        if s.deal is None:
            return CHANCE
        if s.history in _TERMINAL_HISTORIES:
            return TERMINAL
        return 1 + len(s.history) % 2

    def num_actions(self, s: KuhnState) -> int:
        p = self.current_player(s)
        if p == TERMINAL:
            raise UsageError("terminal state has no actions")
        return len(DEALS) if p == CHANCE else 2

    def action_labels(self, s: KuhnState) -> tuple[str, ...]:
        if self.current_player(s) == CHANCE:
            return tuple(CARD_NAMES[a] + CARD_NAMES[b] for a, b in DEALS)
        self.num_actions(s)
        return ("p", "b")

    def chance_probs(self, s: KuhnState) -> np.ndarray:
        if self.current_player(s) != CHANCE:
            raise UsageError("chance_probs called at a non-chance node")
        return np.full(len(DEALS), 1.0 / len(DEALS))

    def apply(self, s: KuhnState, action: int) -> KuhnState:
        n = self.num_actions(s)
        if not 0 <= action < n:
            raise UsageError(f"illegal action {action} (legal: 0..{n - 1})")
        if s.deal is None:
            return KuhnState(DEALS[action], "")
        return KuhnState(s.deal, s.history + "pb"[action])

    def utilities(self, s: KuhnState) -> tuple[float, float]:
        if self.current_player(s) != TERMINAL:
            raise UsageError("utilities requested at a non-terminal state")
        h = s.history
        if h == "bp":
            u = 1.0
        elif h == "pbp":
            u = -1.0
        else:
            stake = 2.0 if "b" in h else 1.0
            u = stake if s.deal[0] > s.deal[1] else -stake
        return u, -u

    def infoset_key(self, s: KuhnState, player: int) -> str:
        self._check_decision(s, player)
        return f"p{player}|{CARD_NAMES[s.deal[player - 1]]}|{s.history}"
