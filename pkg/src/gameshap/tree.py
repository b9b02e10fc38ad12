"""Flat array encoding of a game tree for the numeric kernels.

Children of a node occupy a contiguous index block allocated after the
parent, so a forward index sweep visits parents before children and a
reverse sweep visits children first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .game import CHANCE, TERMINAL, Game, GameError, StrategyProfile


@dataclass(eq=False)
class GameTree:
    game: Game
    kind: np.ndarray  # int8: -1 terminal, 0 chance, 1/2 player to act
    first_child: np.ndarray  # int32
    n_children: np.ndarray  # int32
    chance_prob: np.ndarray  # float64, probability of the edge into the node
    infoset: np.ndarray  # int32 global infoset id, -1 off decision nodes
    utility: np.ndarray  # float64, player-1 payoff at terminals
    depth: np.ndarray  # int32
    infoset_keys: list[str]
    infoset_player: np.ndarray  # int8
    infoset_nactions: np.ndarray  # int32
    infoset_labels: list[tuple]
    depth_order: np.ndarray  # node ids sorted by depth, deepest first
    level_starts: np.ndarray  # boundaries of equal-depth runs in depth_order

    def __post_init__(self):
        self.infoset_index = {k: i for i, k in enumerate(self.infoset_keys)}
        self.max_actions = int(self.n_children.max())
        self.max_depth = int(self.depth.max())

    @property
    def num_nodes(self) -> int:
        return int(self.kind.size)

    @property
    def num_infosets(self) -> int:
        return len(self.infoset_keys)

    def player_infosets(self, player: int) -> np.ndarray:
        return np.flatnonzero(self.infoset_player == player)

    def policy_array(self, profile: StrategyProfile) -> np.ndarray:
        """Dense ``(num_infosets, max_actions)`` table of behaviour probabilities."""
        pol = np.zeros((self.num_infosets, self.max_actions))
        for i, key in enumerate(self.infoset_keys):
            n = self.infoset_nactions[i]
            pol[i, :n] = profile.probs(key, n)
        return pol

    def profile_from_array(self, policy: np.ndarray) -> StrategyProfile:
        prof = StrategyProfile()
        for i, key in enumerate(self.infoset_keys):
            prof[key] = policy[i, : self.infoset_nactions[i]]
        return prof

    def uniform_policy(self) -> np.ndarray:
        pol = np.zeros((self.num_infosets, self.max_actions))
        for i, n in enumerate(self.infoset_nactions):
            pol[i, :n] = 1.0 / n
        return pol


def compile_tree(game: Game) -> GameTree:
    """Walk ``game`` once and lay it out as flat arrays."""
    kind = [0]
    first_child = [0]
    n_children = [0]
    chance_prob = [1.0]
    infoset = [-1]
    utility = [0.0]
    depth = [0]
    keys: dict[str, int] = {}
    key_depth: list[int] = []
    players: list[int] = []
    nactions: list[int] = []
    labels: list[tuple] = []

    stack = [(game.initial_state(), 0)]
    while stack:
        state, idx = stack.pop()
        p = game.current_player(state)
        kind[idx] = p
        if p == TERMINAL:
            u1, u2 = game.utilities(state)
            if u1 + u2 != 0.0:
                raise GameError(f"non zero-sum terminal: {u1} + {u2}")
            utility[idx] = u1
            continue
        n = game.num_actions(state)
        if n < 1:
            raise GameError("non-terminal state without legal actions")
        first = len(kind)
        first_child[idx] = first
        n_children[idx] = n
        if p == CHANCE:
            probs = game.chance_probs(state)
            if abs(probs.sum() - 1.0) > 1e-12:
                raise GameError(f"chance probabilities sum to {probs.sum()!r}")
        else:
            probs = np.ones(n)
            key = game.infoset_key(state, p)
            iid = keys.get(key)
            if iid is None:
                iid = keys[key] = len(players)
                players.append(p)
                nactions.append(n)
                labels.append(game.action_labels(state))
                key_depth.append(depth[idx])
            elif nactions[iid] != n or labels[iid] != game.action_labels(state):
                raise GameError(f"infoset {key!r} mixes different action sets")
            elif key_depth[iid] != depth[idx]:
                raise GameError(f"infoset {key!r} spans several tree depths")
            infoset[idx] = iid
        d = depth[idx] + 1
        kind.extend([0] * n)
        first_child.extend([0] * n)
        n_children.extend([0] * n)
        chance_prob.extend(float(x) for x in probs)
        infoset.extend([-1] * n)
        utility.extend([0.0] * n)
        depth.extend([d] * n)
        for a in reversed(range(n)):
            stack.append((game.apply(state, a), first + a))

    depth_arr = np.asarray(depth, dtype=np.int32)
    order = np.argsort(-depth_arr, kind="stable").astype(np.int32)
    sorted_depth = depth_arr[order]
    starts = np.flatnonzero(np.diff(sorted_depth)) + 1
    level_starts = np.concatenate(([0], starts, [order.size])).astype(np.int64)
    return GameTree(
        game=game,
        kind=np.asarray(kind, dtype=np.int8),
        first_child=np.asarray(first_child, dtype=np.int32),
        n_children=np.asarray(n_children, dtype=np.int32),
        chance_prob=np.asarray(chance_prob, dtype=np.float64),
        infoset=np.asarray(infoset, dtype=np.int32),
        utility=np.asarray(utility, dtype=np.float64),
        depth=depth_arr,
        infoset_keys=list(keys),
        infoset_player=np.asarray(players, dtype=np.int8),
        infoset_nactions=np.asarray(nactions, dtype=np.int32),
        infoset_labels=labels,
        depth_order=order,
        level_starts=level_starts,
    )


_CACHE: dict[str, GameTree] = {}


def get_tree(game: Game) -> GameTree:
    """Compiled tree for ``game``, memoised per configuration in this process."""
    sig = json.dumps(game.config_dict(), sort_keys=True)
    tree = _CACHE.get(sig)
    if tree is None or type(tree.game) is not type(game):
        tree = _CACHE[sig] = compile_tree(game)
    return tree
