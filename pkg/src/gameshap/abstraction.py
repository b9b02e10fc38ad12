"""Feature-subset abstractions of the target player's infosets.

Under a visible-feature subset ``S`` the target player cannot tell apart
infosets that share an action set and agree on every feature in ``S``.  The
opponent is never abstracted.  Abstractions are realised as a key rewrite:
each raw infoset id maps to a class id and the solvers index their tables
by class.
"""

from __future__ import annotations

from collections.abc import Iterable
from itertools import combinations
from typing import NamedTuple

import numpy as np

from .game import Game, UsageError
from .tree import GameTree


class FeatureSubset(frozenset):
    """Set of visible feature ids.

    Text form lists members in the game's feature order (``"CD"``); the
    empty set is ``"none"`` and the full set may be written ``"all"``.
    """

    @classmethod
    def parse(cls, text: str, feature_ids: Iterable[str]) -> FeatureSubset:
        ids = tuple(feature_ids)
        text = text.strip()
        if text == "none":
            return cls()
        if text == "all":
            return cls(ids)
        unknown = [ch for ch in text if ch not in ids]
        if unknown or len(set(text)) != len(text) or not text:
            raise ValueError(f"bad feature subset {text!r}; use letters from {''.join(ids)}, 'none' or 'all'")
        return cls(text)

    def label(self, feature_ids: Iterable[str]) -> str:
        s = "".join(f for f in feature_ids if f in self)
        return s or "none"


def all_subsets(feature_ids: Iterable[str]) -> list[FeatureSubset]:
    """Every subset, ordered by size then by feature order."""
    ids = tuple(feature_ids)
    return [
        FeatureSubset(c) for r in range(len(ids) + 1) for c in combinations(ids, r)
    ]


class AbstractKey(NamedTuple):
    player: int
    action_signature: object
    visible_features: tuple[tuple[str, object], ...]


def abstract_key(game: Game, key: str, subset: Iterable[str]) -> AbstractKey:
    """Abstract class of a target-player infoset under visible features ``subset``."""
    subset = frozenset(subset)
    unknown = subset - set(game.feature_ids)
    if unknown:
        raise UsageError(f"unknown features {sorted(unknown)}")
    fv = game.features(key)  # raises for non-target infosets
    visible = tuple(
        (fid, fv[i]) for i, fid in enumerate(game.feature_ids) if fid in subset
    )
    player = int(key.split("|", 1)[0][1:])
    return AbstractKey(player, game.action_set_signature(key), visible)


def abstraction_refines(a: Iterable[str], b: Iterable[str]) -> bool:
    """True when the partition of ``a`` is at least as fine as that of ``b``."""
    return frozenset(b) <= frozenset(a)


class ClassMap(NamedTuple):
    cmap: np.ndarray  # raw infoset id -> class id
    class_nact: np.ndarray
    class_player: np.ndarray
    class_keys: list  # AbstractKey for target classes, raw key string otherwise


def identity_classes(tree: GameTree) -> ClassMap:
    return ClassMap(
        np.arange(tree.num_infosets, dtype=np.int32),
        tree.infoset_nactions.copy(),
        tree.infoset_player.copy(),
        list(tree.infoset_keys),
    )


def class_map(tree: GameTree, subset: Iterable[str] | None, target: int) -> ClassMap:
    """Class ids for the abstraction ``subset`` applied to player ``target``.

    ``None`` means the null abstraction for everybody.
    """
    if subset is None:
        return identity_classes(tree)
    game = tree.game
    cmap = np.empty(tree.num_infosets, dtype=np.int32)
    index: dict = {}
    nact: list[int] = []
    players: list[int] = []
    for i, key in enumerate(tree.infoset_keys):
        p = int(tree.infoset_player[i])
        ck = abstract_key(game, key, subset) if p == target else key
        c = index.get(ck)
        if c is None:
            c = index[ck] = len(nact)
            nact.append(int(tree.infoset_nactions[i]))
            players.append(p)
        elif nact[c] != tree.infoset_nactions[i]:
            raise UsageError(f"abstract class {ck!r} merges different action counts")
        cmap[i] = c
    return ClassMap(
        cmap, np.asarray(nact, dtype=np.int32), np.asarray(players, dtype=np.int8), list(index)
    )
