"""Sequential-move Goofspiel and its four infoset features.

Rules: each player holds cards ``1..k``; a point card is drawn uniformly from
the pile each round, player 1 commits a card face down, player 2 answers
without seeing it, and the higher card wins points equal to the point card
(ties score nothing).  Card sets are bitmasks, bit ``c - 1`` for card ``c``.

Infoset keys carry everything a player has observed, in a fixed field order::

    p1|2.3.4/1.1.3|c4

i.e. ``p<player>|`` then resolved rounds as ``center.own.opp`` separated by
``/``, then ``|c<center>`` for the face-up point card of the current round.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .game import CHANCE, TERMINAL, Game, GameError, UsageError

FEATURES = ("C", "D", "O", "P")
UTILITY_MODES = ("differential", "win-loss")


def cards(mask: int) -> list[int]:
    """Sorted card values held in a bitmask."""
    out = []
    c = 1
    while mask:
        if mask & 1:
            out.append(c)
        mask >>= 1
        c += 1
    return out


def mask_of(values) -> int:
    m = 0
    for c in values:
        m |= 1 << (c - 1)
    return m


@dataclass(frozen=True)
class GoofspielConfig:
    k: int = 4
    target_player: int = 1
    utility_mode: str = "differential"

    def __post_init__(self):
        if not isinstance(self.k, int) or self.k < 2:
            raise GameError(f"Goofspiel needs k >= 2, got {self.k!r}")
        if self.target_player not in (1, 2):
            raise GameError(f"target_player must be 1 or 2, got {self.target_player!r}")
        if self.utility_mode not in UTILITY_MODES:
            raise GameError(f"utility_mode must be one of {UTILITY_MODES}")


@dataclass(frozen=True)
class GoofspielState:
    round: int
    deck: int
    hand1: int
    hand2: int
    center: int = 0
    pending: int = 0
    points1: int = 0
    points2: int = 0
    history: tuple[tuple[int, int, int], ...] = field(default=())


class FeatureVector(NamedTuple):
    """Feature values of one infoset; ``D`` and ``O`` are card bitmasks."""

    C: int
    D: int
    O: int
    P: int

    def to_json(self) -> dict:
        return {"C": self.C, "D": cards(self.D), "O": cards(self.O), "P": self.P}


class ParsedKey(NamedTuple):
    player: int
    rounds: tuple[tuple[int, int, int], ...]
    center: int


def parse_key(key: str) -> ParsedKey:
    try:
        head, body, tail = key.split("|")
        player = int(head[1:])
        rounds = tuple(
            tuple(int(x) for x in r.split(".")) for r in body.split("/") if r
        )
        center = int(tail[1:])
    except (ValueError, IndexError) as exc:
        raise UsageError(f"malformed Goofspiel infoset key {key!r}") from exc
    if head[0] != "p" or tail[0] != "c" or any(len(r) != 3 for r in rounds):
        raise UsageError(f"malformed Goofspiel infoset key {key!r}")
    return ParsedKey(player, rounds, center)


class Goofspiel(Game):
    name = "goofspiel"
    feature_ids = FEATURES

    def __init__(self, config: GoofspielConfig | None = None):
        self.config = config or GoofspielConfig()
        self.k = self.config.k
        self.full = (1 << self.k) - 1
        # Memoised per instance; keys repeat heavily across solver passes.
        self.features = lru_cache(maxsize=None)(self._features)

    def config_dict(self) -> dict:
        return {
            "name": self.name,
            "k": self.k,
            "target_player": self.config.target_player,
            "utility_mode": self.config.utility_mode,
        }

    def nash_value(self) -> float:
        # Symmetric game: both seats have the same equilibrium payoff, so 0.
        return 0.0

    def initial_state(self) -> GoofspielState:
        return GoofspielState(0, self.full, self.full, self.full)

    def current_player(self, s: GoofspielState) -> int:
        if s.round == self.k:
            return TERMINAL
        if s.center == 0:
            return CHANCE
        return 1 if s.pending == 0 else 2

    def _action_mask(self, s: GoofspielState) -> int:
        p = self.current_player(s)
        if p == TERMINAL:
            raise UsageError("terminal state has no actions")
        return (s.deck, s.hand1, s.hand2)[p]

    def num_actions(self, s: GoofspielState) -> int:
        return bin(self._action_mask(s)).count("1")

    def action_labels(self, s: GoofspielState) -> tuple[int, ...]:
        return tuple(cards(self._action_mask(s)))

    def chance_probs(self, s: GoofspielState) -> np.ndarray:
        if self.current_player(s) != CHANCE:
            raise UsageError("chance_probs called at a non-chance node")
        n = self.num_actions(s)
        return np.full(n, 1.0 / n)

    def apply(self, s: GoofspielState, action: int) -> GoofspielState:
        labels = self.action_labels(s)
        if not 0 <= action < len(labels):
            raise UsageError(f"illegal action {action} (legal: 0..{len(labels) - 1})")
        card = labels[action]
        bit = 1 << (card - 1)
        p = self.current_player(s)
        if p == CHANCE:
            return GoofspielState(
                s.round, s.deck & ~bit, s.hand1, s.hand2, card, 0,
                s.points1, s.points2, s.history,
            )
        if p == 1:
            return GoofspielState(
                s.round, s.deck, s.hand1, s.hand2, s.center, card,
                s.points1, s.points2, s.history,
            )
        c1, c2 = s.pending, card
        p1 = s.points1 + (s.center if c1 > c2 else 0)
        p2 = s.points2 + (s.center if c2 > c1 else 0)
        return GoofspielState(
            s.round + 1, s.deck, s.hand1 & ~(1 << (c1 - 1)), s.hand2 & ~bit, 0, 0,
            p1, p2, s.history + ((s.center, c1, c2),),
        )

    def utilities(self, s: GoofspielState) -> tuple[float, float]:
        if self.current_player(s) != TERMINAL:
            raise UsageError("utilities requested at a non-terminal state")
        diff = s.points1 - s.points2
        if self.config.utility_mode == "win-loss":
            diff = (diff > 0) - (diff < 0)
        return float(diff), float(-diff)

    def infoset_key(self, s: GoofspielState, player: int) -> str:
        self._check_decision(s, player)
        if player == 1:
            rounds = "/".join(f"{c}.{a}.{b}" for c, a, b in s.history)
        else:
            rounds = "/".join(f"{c}.{b}.{a}" for c, a, b in s.history)
        return f"p{player}|{rounds}|c{s.center}"

    def _target_key(self, key: str) -> ParsedKey:
        pk = parse_key(key)
        if pk.player != self.config.target_player:
            raise UsageError(
                f"{key!r} belongs to player {pk.player}, "
                f"features are defined for target player {self.config.target_player}"
            )
        return pk

    def _features(self, key: str) -> FeatureVector:
        pk = self._target_key(key)
        drawn = mask_of([c for c, _, _ in pk.rounds]) | (1 << (pk.center - 1))
        opp = self.full & ~mask_of([b for _, _, b in pk.rounds])
        diff = 0
        for c, a, b in pk.rounds:
            diff += c if a > b else -c if b > a else 0
        return FeatureVector(pk.center, self.full & ~drawn, opp, diff)

    def action_set_signature(self, key: str) -> int:
        """The player's remaining hand as a bitmask."""
        pk = self._target_key(key)
        return self.full & ~mask_of([a for _, a, _ in pk.rounds])
