"""Shapley feature importance of a game for its target player.

The value of a coalition ``S`` is the target player's exact expected return
in an approximate equilibrium of the game where the target only sees the
features in ``S`` (the opponent sees everything).  Shapley values over the
complete table of ``2**m`` coalitions then attribute the gap between seeing
nothing and seeing everything to individual features.
"""

from __future__ import annotations

import logging
import math
import multiprocessing as mp
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .abstraction import FeatureSubset, all_subsets
from .evaluation import SCHEMA_VERSION
from .game import Game, UsageError
from .solver import ConvergenceLog, Solver, SolverConfig

log = logging.getLogger(__name__)


@dataclass
class CoalitionResult:
    subset: FeatureSubset
    value: float
    seed: int
    iterations: int
    exploitability: float
    log: ConvergenceLog = field(repr=False)


@dataclass
class SgfiReport:
    feature_ids: tuple[str, ...]
    phi: dict[str, float]
    baseline: float
    full: float
    single_gain: dict[str, float]  # v({j}) - v(none)
    drop_loss: dict[str, float]  # v(M) - v(M - {j})


def _target(game: Game) -> int:
    target = getattr(getattr(game, "config", None), "target_player", None)
    if target is None:
        raise UsageError(f"{game.name} has no target player")
    return target


def solve_coalition(game: Game, subset, config: SolverConfig) -> CoalitionResult:
    """Solve the game abstracted to ``subset`` and score the target player."""
    subset = FeatureSubset(subset)
    target = _target(game)
    solver = Solver(game, replace(config, target_abstraction=subset))
    conv = solver.solve()
    _, _, value, eps = conv.last(target)
    return CoalitionResult(subset, float(value), config.seed, solver.steps, float(eps), conv)


def coalition_value(game: Game, subset, config: SolverConfig) -> float:
    return solve_coalition(game, subset, config).value


def shapley_exact(table: Mapping, feature_ids: Sequence[str]) -> SgfiReport:
    """Exact Shapley values of a complete coalition table.

    ``table`` maps every subset of ``feature_ids`` (any iterable of ids, e.g.
    a frozenset) to its value.
    """
    ids = tuple(feature_ids)
    m = len(ids)
    values = {frozenset(k): float(v) for k, v in table.items()}
    missing = [s.label(ids) for s in all_subsets(ids) if frozenset(s) not in values]
    if missing:
        raise UsageError(f"coalition table incomplete; missing {missing}")
    weight = [
        math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m) for s in range(m)
    ]
    phi = {}
    for j in ids:
        total = 0.0
        for s in all_subsets(x for x in ids if x != j):
            total += weight[len(s)] * (values[s | {j}] - values[s])
        phi[j] = total
    empty, full = values[frozenset()], values[frozenset(ids)]
    return SgfiReport(
        feature_ids=ids,
        phi=phi,
        baseline=empty,
        full=full,
        single_gain={j: values[frozenset({j})] - empty for j in ids},
        drop_loss={j: full - values[frozenset(ids) - {j}] for j in ids},
    )


def coalition_seed(master_seed: int, replicate: int, index: int) -> int:
    """Independent 64-bit seed for one coalition solve of one replicate."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(replicate, index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class SgfiRun:
    feature_ids: tuple[str, ...]
    replicates: list[SgfiReport]
    coalitions: list[dict[str, CoalitionResult]]  # per replicate, keyed by label

    def phi_mean(self) -> dict[str, float]:
        return {j: float(np.mean([r.phi[j] for r in self.replicates])) for j in self.feature_ids}

    def phi_std(self) -> dict[str, float]:
        ddof = 1 if len(self.replicates) > 1 else 0
        return {
            j: float(np.std([r.phi[j] for r in self.replicates], ddof=ddof))
            for j in self.feature_ids
        }

    def coalition_means(self) -> dict[str, float]:
        labels = self.coalitions[0].keys()
        return {
            s: float(np.mean([rep[s].value for rep in self.coalitions])) for s in labels
        }

    def _mean_of(self, attr: str) -> dict[str, float]:
        return {
            j: float(np.mean([getattr(r, attr)[j] for r in self.replicates]))
            for j in self.feature_ids
        }

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "phi": self.phi_mean(),
            "stddev": self.phi_std(),
            "coalitions": self.coalition_means(),
            "single_gain": self._mean_of("single_gain"),
            "drop_loss": self._mean_of("drop_loss"),
            "replicates": [
                {
                    "phi": rep.phi,
                    "coalitions": {
                        s: {
                            "value": c.value,
                            "seed": c.seed,
                            "iterations": c.iterations,
                            "exploitability": c.exploitability,
                        }
                        for s, c in coal.items()
                    },
                }
                for rep, coal in zip(self.replicates, self.coalitions)
            ],
        }


_POOL_GAME: Game | None = None


def _pool_solve(job):
    subset, config = job
    res = solve_coalition(_POOL_GAME, subset, config)
    return res


def run_sgfi(
    game: Game,
    config: SolverConfig,
    replicates: int = 1,
    workers: int = 1,
    progress: Callable[[int, CoalitionResult], None] | None = None,
) -> SgfiRun:
    """All ``2**m`` coalition solves for each replicate, then exact Shapley.

    ``config.seed`` is the master seed; each (replicate, coalition) solve
    draws its own seed from it via :func:`coalition_seed`.
    """
    global _POOL_GAME
    if replicates < 1:
        raise UsageError("replicates must be >= 1")
    ids = tuple(game.feature_ids)
    if not ids:
        raise UsageError(f"{game.name} registers no features")
    subsets = all_subsets(ids)
    jobs = [
        (s, replace(config, seed=coalition_seed(config.seed, r, i), target_abstraction=s))
        for r in range(replicates)
        for i, s in enumerate(subsets)
    ]
    if workers > 1:
        from .tree import get_tree

        get_tree(game)  # compiled once in the parent, inherited by forked workers
        _POOL_GAME = game
        with ProcessPoolExecutor(workers, mp_context=mp.get_context("fork")) as pool:
            results = list(pool.map(_pool_solve, jobs))
    else:
        results = []
        for n, (s, cfg) in enumerate(jobs):
            res = solve_coalition(game, s, cfg)
            results.append(res)
            if progress is not None:
                progress(n, res)
    reports, tables = [], []
    per = len(subsets)
    for r in range(replicates):
        chunk = results[r * per : (r + 1) * per]
        coal = {res.subset.label(ids): res for res in chunk}
        tables.append(coal)
        reports.append(shapley_exact({res.subset: res.value for res in chunk}, ids))
        log.info("replicate %d phi=%s", r, reports[-1].phi)
    return SgfiRun(ids, reports, tables)
