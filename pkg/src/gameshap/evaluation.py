"""Exact best responses, expected values and exploitability."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .game import PLAYERS, Game, StrategyProfile, UsageError
from .tree import GameTree, get_tree

SCHEMA_VERSION = 1
# Vanilla CFR run used to pin down v* when a game has no closed-form value.
NASH_ESTIMATE_ITERATIONS = 100_000


@dataclass
class BestResponseResult:
    value: float
    strategy: dict[str, int]


@dataclass
class ExploitabilityReport:
    eps1: float
    eps2: float
    v_star: float
    tolerance: float = 0.0

    @property
    def avg(self) -> float:
        return 0.5 * (self.eps1 + self.eps2)

    def to_json(self) -> dict:
        out = asdict(self)
        out["avg"] = self.avg
        out["schema_version"] = SCHEMA_VERSION
        return out


def as_policy(tree: GameTree, profile) -> np.ndarray:
    if isinstance(profile, StrategyProfile):
        return tree.policy_array(profile)
    policy = np.asarray(profile, dtype=np.float64)
    if policy.shape != (tree.num_infosets, tree.max_actions):
        raise UsageError(f"policy table has shape {policy.shape}")
    return policy


def tree_value(tree: GameTree, policy: np.ndarray) -> float:
    """Player-1 expected utility of a dense policy table."""
    ev, _ = kernels.expected_value(
        tree.kind, tree.first_child, tree.n_children, tree.chance_prob,
        tree.infoset, tree.utility, policy,
    )
    return ev


def br_value(tree: GameTree, policy: np.ndarray, player: int) -> tuple[float, np.ndarray]:
    if player not in PLAYERS:
        raise UsageError(f"no best response for player {player}")
    return kernels.best_response(
        tree.kind, tree.first_child, tree.n_children, tree.chance_prob,
        tree.infoset, tree.utility, tree.depth_order, tree.level_starts,
        policy, player, tree.num_infosets, tree.max_actions,
    )


def expected_value(game: Game, profile, player: int) -> float:
    """Exact expected utility of ``player`` (flat-tree route)."""
    tree = get_tree(game)
    v = tree_value(tree, as_policy(tree, profile))
    return v if player == 1 else -v


def best_response(game: Game, opponent_profile, player: int) -> BestResponseResult:
    tree = get_tree(game)
    value, best = br_value(tree, as_policy(tree, opponent_profile), player)
    strategy = {
        tree.infoset_keys[i]: int(best[i])
        for i in tree.player_infosets(player)
        if best[i] >= 0
    }
    return BestResponseResult(float(value), strategy)


def pure_policy(tree: GameTree, base: np.ndarray, player: int, best: np.ndarray) -> np.ndarray:
    """``base`` with ``player``'s rows replaced by the pure choices in ``best``.

    Infosets the best response never reached keep action 0.
    """
    pol = base.copy()
    for i in tree.player_infosets(player):
        pol[i] = 0.0
        pol[i, max(int(best[i]), 0)] = 1.0
    return pol


_NASH_CACHE: dict[str, tuple[float, float]] = {}


def nash_value(game: Game) -> tuple[float, float]:
    """Equilibrium value for player 1 and an error bound on it.

    Uses the game's closed form when it has one; otherwise brackets the value
    between ``-b2(s1)`` and ``b1(s2)`` for a long vanilla CFR solve.
    """
    exact = game.nash_value()
    if exact is not None:
        return float(exact), 0.0
    sig = json.dumps(game.config_dict(), sort_keys=True)
    if sig not in _NASH_CACHE:
        from .solver import Solver, SolverConfig

        solver = Solver(game, SolverConfig("vanilla_cfr", NASH_ESTIMATE_ITERATIONS))
        solver.run(NASH_ESTIMATE_ITERATIONS)
        policy = solver.average_policy()
        hi, _ = br_value(solver.tree, policy, 1)
        b2, _ = br_value(solver.tree, policy, 2)
        lo = -b2
        _NASH_CACHE[sig] = (0.5 * (hi + lo), 0.5 * (hi - lo))
    return _NASH_CACHE[sig]


def exploitability_of_policy(tree: GameTree, policy: np.ndarray) -> ExploitabilityReport:
    v1, tol = nash_value(tree.game)
    b1, _ = br_value(tree, policy, 1)
    b2, _ = br_value(tree, policy, 2)
    return ExploitabilityReport(float(b2 + v1), float(b1 - v1), v1, tol)


def exploitability(game: Game, profile) -> ExploitabilityReport:
    """``eps1 = b2(s1) - v2*`` and ``eps2 = b1(s2) - v1*``."""
    tree = get_tree(game)
    return exploitability_of_policy(tree, as_policy(tree, profile))


def infoset_reach(tree: GameTree, policy: np.ndarray) -> np.ndarray:
    """Probability of reaching each infoset when everyone follows ``policy``."""
    reach = np.zeros(tree.num_nodes)
    reach[0] = 1.0
    out = np.zeros(tree.num_infosets)
    for node in range(tree.num_nodes):
        k = tree.kind[node]
        if k == -1 or reach[node] == 0.0:
            continue
        fc, nc = tree.first_child[node], tree.n_children[node]
        if k == 0:
            probs = tree.chance_prob[fc : fc + nc]
        else:
            out[tree.infoset[node]] += reach[node]
            probs = policy[tree.infoset[node], :nc]
        reach[fc : fc + nc] = reach[node] * probs
    return out
