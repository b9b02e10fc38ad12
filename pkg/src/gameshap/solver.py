"""Vanilla CFR and external-sampling MCCFR, optionally under an abstraction.

One MCCFR *timestep* is a single external-sampling traversal for one
updating player; the updating player alternates every timestep, starting
with player 1.  One vanilla CFR iteration updates both players at once.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .abstraction import FeatureSubset, class_map
from .evaluation import SCHEMA_VERSION, exploitability_of_policy, tree_value
from .game import Game, StrategyProfile, UsageError
from .tree import GameTree, get_tree

ALGORITHMS = ("vanilla_cfr", "external_mccfr")
AVERAGING = ("opponent", "own_reach")
# MCCFR timesteps per kernel call; bounds latency between checkpoints.
_CHUNK = 100_000


def regret_matching(cumulative_regret) -> np.ndarray:
    """Positive parts of the regrets, normalised; uniform if none is positive."""
    r = np.asarray(cumulative_regret, dtype=np.float64)
    pos = np.maximum(r, 0.0)
    total = pos.sum()
    if total > 0.0:
        return pos / total
    return np.full(r.size, 1.0 / r.size)


@dataclass(frozen=True)
class SolverConfig:
    algorithm: str = "external_mccfr"
    iterations: int = 1_000_000
    seed: int = 0
    target_abstraction: FeatureSubset | None = None
    eval_schedule: tuple[int, ...] = ()
    averaging: str = "opponent"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise UsageError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.averaging not in AVERAGING:
            raise UsageError(f"averaging must be one of {AVERAGING}, got {self.averaging!r}")
        if self.iterations < 1:
            raise UsageError("iterations must be >= 1")
        if any(t < 1 or t > self.iterations for t in self.eval_schedule):
            raise UsageError("eval_schedule checkpoints must lie in [1, iterations]")


@dataclass
class ConvergenceLog:
    """Rows of ``(iteration, player, expected_value, exploitability)``."""

    rows: list[tuple[int, int, float, float]] = field(default_factory=list)

    def record(self, iteration: int, tree: GameTree, policy: np.ndarray) -> None:
        v1 = tree_value(tree, policy)
        rep = exploitability_of_policy(tree, policy)
        self.rows.append((iteration, 1, v1, rep.eps1))
        self.rows.append((iteration, 2, -v1, rep.eps2))

    def last(self, player: int) -> tuple[int, int, float, float]:
        return [r for r in self.rows if r[1] == player][-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["schema_version", "iteration", "player", "expected_value", "exploitability"])
        for it, p, ev, ex in self.rows:
            w.writerow([SCHEMA_VERSION, it, p, repr(float(ev)), repr(float(ex))])
        return buf.getvalue()


class Solver:
    """Regret tables plus the loop driving one solve.

    The target player (``game.config.target_player``) is abstracted when
    ``config.target_abstraction`` is set; the opponent always keeps raw
    infosets.
    """

    def __init__(self, game: Game, config: SolverConfig, tree: GameTree | None = None):
        self.game = game
        self.config = config
        self.tree = tree if tree is not None else get_tree(game)
        subset = config.target_abstraction
        target = getattr(getattr(game, "config", None), "target_player", None)
        if subset is not None and target is None:
            raise UsageError(f"{game.name} has no target player to abstract")
        self.classes = class_map(self.tree, subset, target)
        shape = (self.classes.class_nact.size, self.tree.max_actions)
        self.regret = np.zeros(shape)
        self.cumstrat = np.zeros(shape)
        self.visits = np.zeros(self.tree.num_nodes, dtype=np.int64)
        self.rng = kernels.rng_state(np.random.SeedSequence(config.seed))
        self.steps = 0

    def run(self, n: int) -> None:
        t = self.tree
        args = (
            t.kind, t.first_child, t.n_children, t.chance_prob, t.infoset, t.utility,
            self.classes.cmap, self.classes.class_nact, self.regret, self.cumstrat,
        )
        if self.config.algorithm == "vanilla_cfr":
            kernels.cfr_iterations(*args, n)
            self.steps += n
            return
        done = 0
        while done < n:
            m = min(_CHUNK, n - done)
            kernels.es_timesteps(
                *args, self.visits, self.rng, self.config.averaging == "own_reach",
                t.max_depth,
                self.steps, m,
            )
            self.steps += m
            done += m

    def average_class_policy(self) -> np.ndarray:
        avg = np.zeros_like(self.cumstrat)
        for c, n in enumerate(self.classes.class_nact):
            row = self.cumstrat[c, :n]
            total = row.sum()
            avg[c, :n] = row / total if total > 0.0 else 1.0 / n
        return avg

    def average_policy(self) -> np.ndarray:
        """Average strategy lifted to raw infosets (dense table)."""
        return self.average_class_policy()[self.classes.cmap]

    def current_policy(self) -> np.ndarray:
        cur = np.zeros_like(self.regret)
        for c, n in enumerate(self.classes.class_nact):
            cur[c, :n] = regret_matching(self.regret[c, :n])
        return cur[self.classes.cmap]

    def profile(self) -> StrategyProfile:
        return self.tree.profile_from_array(self.average_policy())

    def solve(self) -> ConvergenceLog:
        log = ConvergenceLog()
        for checkpoint in sorted(set(self.config.eval_schedule) | {self.config.iterations}):
            self.run(checkpoint - self.steps)
            log.record(self.steps, self.tree, self.average_policy())
        return log


def solve(game: Game, config: SolverConfig) -> tuple[StrategyProfile, ConvergenceLog]:
    """Average strategy profile after ``config.iterations`` plus its convergence log."""
    solver = Solver(game, config)
    log = solver.solve()
    return solver.profile(), log


def solve_abstracted(game: Game, config: SolverConfig) -> StrategyProfile:
    """Solve with the target player restricted to ``config.target_abstraction``.

    The returned profile is expressed over raw infoset keys: every raw infoset
    of one abstract class carries the class strategy.
    """
    if config.target_abstraction is None:
        raise UsageError("solve_abstracted needs a target_abstraction")
    profile, _ = solve(game, config)
    return profile
