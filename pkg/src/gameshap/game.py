"""Extensive-form game contract and exact tree-walking utilities.

Concrete games (Goofspiel, Kuhn poker) subclass :class:`Game`.  States are
immutable values; ``apply`` always returns a fresh successor so callers may
keep the parent around.  Player ids follow the convention ``0`` = chance,
``1`` and ``2`` = the two decision makers.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from collections.abc import Iterator, Mapping, Sequence
from typing import Any

import numpy as np

CHANCE = 0
PLAYERS = (1, 2)
TERMINAL = -1


class GameError(ValueError):
    """Invalid game configuration."""


class UsageError(ValueError):
    """A game operation was called on a state where it is undefined."""


class Game(ABC):
    """Two-player zero-sum extensive-form game with chance."""

    name: str = "game"
    #: Feature ids registered by the game (empty if it exposes none).
    feature_ids: tuple[str, ...] = ()

    @abstractmethod
    def initial_state(self) -> Any: ...

    @abstractmethod
    def current_player(self, state: Any) -> int:
        """0 for chance, 1/2 for players, -1 at terminals."""

    @abstractmethod
    def num_actions(self, state: Any) -> int: ...

    @abstractmethod
    def action_labels(self, state: Any) -> tuple: ...

    @abstractmethod
    def apply(self, state: Any, action: int) -> Any: ...

    @abstractmethod
    def utilities(self, state: Any) -> tuple[float, float]: ...

    @abstractmethod
    def chance_probs(self, state: Any) -> np.ndarray: ...

    @abstractmethod
    def infoset_key(self, state: Any, player: int) -> str: ...

    @abstractmethod
    def config_dict(self) -> dict: ...

    def is_terminal(self, state: Any) -> bool:
        return self.current_player(state) == TERMINAL

    def nash_value(self) -> float | None:
        """Equilibrium value for player 1 when known in closed form."""
        return None

    def features(self, key: str) -> dict:
        raise UsageError(f"{self.name} registers no feature functions")

    def action_set_signature(self, key: str) -> Any:
        raise UsageError(f"{self.name} registers no feature functions")

    def _check_decision(self, state: Any, player: int) -> None:
        cur = self.current_player(state)
        if cur not in PLAYERS:
            raise UsageError("infoset_key called at a chance or terminal node")
        if cur != player:
            raise UsageError(f"player {player} is not to act (player {cur} is)")


class StrategyProfile:
    """Behaviour strategies of both players keyed by infoset key.

    Unknown keys resolve to the uniform distribution, so a profile is total
    over any game even when a sampling solver never visited some infosets.
    """

    def __init__(self, tables: Mapping[str, Sequence[float]] | None = None):
        self._probs: dict[str, np.ndarray] = {}
        for key, probs in (tables or {}).items():
            self[key] = probs

    def __setitem__(self, key: str, probs: Sequence[float]) -> None:
        arr = np.asarray(probs, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0 or np.any(arr < 0):
            raise ValueError(f"invalid distribution for {key!r}: {probs!r}")
        if abs(arr.sum() - 1.0) > 1e-9:
            raise ValueError(f"distribution for {key!r} sums to {arr.sum()!r}")
        self._probs[key] = arr

    def __contains__(self, key: str) -> bool:
        return key in self._probs

    def __len__(self) -> int:
        return len(self._probs)

    def keys(self):
        return self._probs.keys()

    def items(self):
        return self._probs.items()

    def probs(self, key: str, num_actions: int) -> np.ndarray:
        arr = self._probs.get(key)
        if arr is None:
            return np.full(num_actions, 1.0 / num_actions)
        if arr.size != num_actions:
            raise UsageError(f"{key!r} stores {arr.size} actions, expected {num_actions}")
        return arr

    def to_json(self) -> list[dict]:
        out = []
        for player in PLAYERS:
            prefix = f"p{player}|"
            entries = [
                {"infoset": k, "probs": [float(x) for x in self._probs[k]]}
                for k in sorted(self._probs)
                if k.startswith(prefix)
            ]
            out.append({"player": player, "entries": entries})
        return out

    @classmethod
    def from_json(cls, blocks: Sequence[Mapping]) -> StrategyProfile:
        prof = cls()
        for block in blocks:
            player = int(block["player"])
            for entry in block["entries"]:
                key = entry["infoset"]
                if not key.startswith(f"p{player}|"):
                    raise ValueError(f"infoset {key!r} listed under player {player}")
                prof[key] = entry["probs"]
        return prof

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def walk(game: Game) -> Iterator[tuple[Any, float]]:
    """Depth-first walk yielding ``(state, chance_reach)`` in action order."""
    stack = [(game.initial_state(), 1.0)]
    while stack:
        state, reach = stack.pop()
        yield state, reach
        player = game.current_player(state)
        if player == TERMINAL:
            continue
        n = game.num_actions(state)
        probs = game.chance_probs(state) if player == CHANCE else np.ones(n)
        for a in reversed(range(n)):
            stack.append((game.apply(state, a), reach * probs[a]))


def enumerate_infosets(game: Game, player: int) -> list[tuple[str, int]]:
    """All infosets of ``player`` reachable under a full-support profile.

    Returned in first-visit DFS order; duplicate free.
    """
    seen: dict[str, int] = {}
    for state, _ in walk(game):
        if game.current_player(state) != player:
            continue
        key = game.infoset_key(state, player)
        n = game.num_actions(state)
        if seen.setdefault(key, n) != n:
            raise GameError(f"infoset {key!r} has inconsistent action counts")
    return list(seen.items())


def expected_value(game: Game, profile: StrategyProfile, player: int) -> float:
    """Exact expected utility of ``player`` by full recursive traversal."""
    if player not in PLAYERS:
        raise UsageError(f"no utility for player {player}")

    def rec(state) -> float:
        cur = game.current_player(state)
        if cur == TERMINAL:
            return game.utilities(state)[player - 1]
        n = game.num_actions(state)
        if cur == CHANCE:
            probs = game.chance_probs(state)
        else:
            probs = profile.probs(game.infoset_key(state, cur), n)
        total = 0.0
        for a in range(n):
            if probs[a] > 0.0:
                total += probs[a] * rec(game.apply(state, a))
        return total

    return rec(game.initial_state())
