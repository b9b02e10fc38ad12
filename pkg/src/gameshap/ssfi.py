"""Shapley feature importance of one strategy at one infoset.

Model agnostic: only the behaviour probabilities of the explained player are
read.  Features are swapped in from alternative infosets that share the
explained infoset's action set; a coalition is realised by looking up an
infoset whose feature vector mixes the explained infoset (visible features)
and the alternative (hidden features).  When no such infoset exists the
baseline ``phi0`` stands in for its strategy.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .evaluation import SCHEMA_VERSION
from .game import Game, StrategyProfile, UsageError
from .goofspiel import cards
from .tree import get_tree

log = logging.getLogger(__name__)

# Largest (pool size x coalitions) table ssfi_exact will build.
EXACT_LIMIT = 5_000_000
_CHUNK = 1 << 18


class ResourceError(RuntimeError):
    """Input too large for the requested exhaustive computation."""


class InfosetIndex:
    """Target-player infosets grouped by action set and feature values."""

    def __init__(self, game: Game, player: int | None = None):
        self.game = game
        self.player = player or game.config.target_player
        tree = get_tree(game)
        self.keys = [tree.infoset_keys[i] for i in tree.player_infosets(self.player)]
        self.nactions = {
            tree.infoset_keys[i]: int(tree.infoset_nactions[i])
            for i in tree.player_infosets(self.player)
        }
        self.labels = {
            tree.infoset_keys[i]: tree.infoset_labels[i]
            for i in tree.player_infosets(self.player)
        }
        self.features = {k: game.features(k) for k in self.keys}
        self.signature = {k: game.action_set_signature(k) for k in self.keys}
        self.by_action_set: dict[object, list[str]] = defaultdict(list)
        for k in self.keys:
            self.by_action_set[self.signature[k]].append(k)
        self._partial: dict[tuple, dict[tuple, list[str]]] = {}

    def query(self, signature, constraints: dict[str, object]) -> list[str]:
        """Infosets with action set ``signature`` matching every constraint exactly."""
        fids = tuple(f for f in self.game.feature_ids if f in constraints)
        unknown = set(constraints) - set(fids)
        if unknown:
            raise UsageError(f"unknown features {sorted(unknown)}")
        table = self._partial.get((signature, fids))
        if table is None:
            pos = [self.game.feature_ids.index(f) for f in fids]
            table = defaultdict(list)
            for k in self.by_action_set.get(signature, ()):
                fv = self.features[k]
                table[tuple(fv[p] for p in pos)].append(k)
            self._partial[(signature, fids)] = table
        return list(table.get(tuple(constraints[f] for f in fids), ()))


@dataclass
class SsfiReport:
    infoset: str
    actions: tuple
    feature_set: tuple[str, ...]
    phi0: np.ndarray
    phi: dict[str, np.ndarray]
    strategy: np.ndarray
    t1: int
    t2: int
    missing_rate: float
    determined: tuple[str, ...] = ()

    @property
    def reconstructed(self) -> np.ndarray:
        return self.phi0 + sum(self.phi.values(), np.zeros_like(self.phi0))

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "infoset": self.infoset,
            "actions": list(self.actions),
            "phi0": self.phi0.tolist(),
            "phi": {j: v.tolist() for j, v in self.phi.items()},
            "reconstructed": self.reconstructed.tolist(),
            "strategy": self.strategy.tolist(),
            "missing_rate": self.missing_rate,
            "t1": self.t1,
            "t2": self.t2,
        }

    def render(self) -> str:
        """Plain-text table: one row per term, one column per action, in percent."""
        head = [""] + [f"Card {a}" if isinstance(a, int) else str(a) for a in self.actions]
        rows = [["phi_0"] + [f"{100 * x:.1f}%" for x in self.phi0]]
        for j, v in self.phi.items():
            rows.append([f"phi_{j}"] + [f"{100 * x:+.1f}%" for x in v])
        rows.append(["sum"] + [f"{100 * x:.1f}%" for x in self.reconstructed])
        rows.append(["sigma(I)"] + [f"{100 * x:.1f}%" for x in self.strategy])
        widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
        fmt = lambda r: " | ".join(c.rjust(w) for c, w in zip(r, widths))  # noqa: E731
        rule = "-+-".join("-" * w for w in widths)
        lines = [fmt(head), rule] + [fmt(r) for r in rows[:-2]] + [rule] + [fmt(r) for r in rows[-2:]]
        return "\n".join(lines) + f"\nmissing_rate={self.missing_rate:.4f}\n"


class _Pool:
    """Dense view of one action-set pool for a fixed explained infoset."""

    def __init__(self, index: InfosetIndex, profile: StrategyProfile, infoset: str, feature_set):
        game = index.game
        if infoset not in index.features:
            raise UsageError(f"{infoset!r} is not an infoset of player {index.player}")
        unknown = [f for f in feature_set if f not in game.feature_ids]
        if unknown or len(set(feature_set)) != len(feature_set) or not feature_set:
            raise UsageError(f"bad feature set {feature_set!r}")
        self.fids = tuple(f for f in game.feature_ids if f in feature_set)
        pos = [game.feature_ids.index(f) for f in self.fids]
        self.keys = index.by_action_set[index.signature[infoset]]
        n_act = index.nactions[infoset]
        self.strategies = np.array([profile.probs(k, n_act) for k in self.keys])
        self.target = np.asarray(profile.probs(infoset, n_act), dtype=np.float64)
        full = [tuple(index.features[k][p] for p in pos) for k in self.keys]
        mine = tuple(index.features[infoset][p] for p in pos)

        groups: dict[tuple, list[int]] = defaultdict(list)
        for i, fv in enumerate(full):
            groups[fv].append(i)
        m = len(self.fids)
        n = len(self.keys)
        if n * (1 << m) > EXACT_LIMIT:
            raise ResourceError(f"pool of {n} infosets x {1 << m} coalitions is too large")
        ids: dict[tuple, int] = {}
        sizes, members = [], []
        # group_of[mask, alt]: group whose features equal the explained infoset
        # on ``mask`` bits and the alternative elsewhere; -1 when empty.
        self.group_of = np.full((1 << m, n), -1, dtype=np.int64)
        for mask in range(1 << m):
            for alt, fv in enumerate(full):
                hyb = tuple(mine[q] if mask >> q & 1 else fv[q] for q in range(m))
                g = ids.get(hyb)
                if g is None:
                    found = groups.get(hyb)
                    if not found:
                        continue
                    g = ids[hyb] = len(sizes)
                    sizes.append(len(found))
                    members.extend(found)
                self.group_of[mask, alt] = g
        self.sizes = np.asarray(sizes, dtype=np.int64)
        self.starts = np.concatenate(([0], np.cumsum(self.sizes)[:-1])).astype(np.int64)
        self.members = np.asarray(members, dtype=np.int64)
        self.full_features = full
        self.n_act = n_act

    def group_means(self, fallback: np.ndarray) -> np.ndarray:
        means = np.empty((self.sizes.size + 1, self.n_act))
        for g, (s, z) in enumerate(zip(self.starts, self.sizes)):
            means[g] = self.strategies[self.members[s : s + z]].mean(axis=0)
        means[-1] = fallback  # row for group id -1
        return means


def determined_features(index: InfosetIndex, infoset: str, feature_set: Sequence[str]) -> tuple[str, ...]:
    """Features of ``feature_set`` that are a function of the others on the pool."""
    game = index.game
    pool = index.by_action_set[index.signature[infoset]]
    out = []
    for j in feature_set:
        others = [game.feature_ids.index(f) for f in feature_set if f != j]
        pj = game.feature_ids.index(j)
        seen: dict[tuple, object] = {}
        functional = True
        for k in pool:
            fv = index.features[k]
            key = tuple(fv[p] for p in others)
            if seen.setdefault(key, fv[pj]) != fv[pj]:
                functional = False
                break
        if functional:
            out.append(j)
    return tuple(out)


def ssfi(
    index: InfosetIndex,
    profile: StrategyProfile,
    infoset: str,
    feature_set: Sequence[str],
    t1: int,
    t2: int,
    seed: int,
) -> SsfiReport:
    """Sampled SSFI with ``t1`` baseline draws and ``t2`` repetitions per feature."""
    if t1 < 1 or t2 < 1:
        raise UsageError("t1 and t2 must be >= 1")
    pool = _Pool(index, profile, infoset, feature_set)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    n = len(pool.keys)
    m = len(pool.fids)

    acc = np.zeros(pool.n_act)
    for lo in range(0, t1, _CHUNK):
        draws = rng.integers(n, size=min(_CHUNK, t1 - lo))
        acc += pool.strategies[draws].sum(axis=0)
    phi0 = acc / t1

    phi = {}
    missing = 0
    for j, fid in enumerate(pool.fids):
        acc = np.zeros(pool.n_act)
        for lo in range(0, t2, _CHUNK):
            size = min(_CHUNK, t2 - lo)
            alt = rng.integers(n, size=size)
            # Random priorities give a uniform permutation; P = features ahead of j.
            prio = rng.random((size, m))
            ahead = (prio < prio[:, j : j + 1]) @ (1 << np.arange(m))
            terms = []
            for mask in (ahead | (1 << j), ahead):
                g = pool.group_of[mask, alt]
                u = rng.random(size)
                ok = g >= 0
                vals = np.broadcast_to(phi0, (size, pool.n_act)).copy()
                gi = g[ok]
                pick = pool.starts[gi] + (u[ok] * pool.sizes[gi]).astype(np.int64)
                vals[ok] = pool.strategies[pool.members[pick]]
                missing += int(size - ok.sum())
                terms.append(vals)
            acc += (terms[0] - terms[1]).sum(axis=0)
        phi[fid] = acc / t2

    det = determined_features(index, infoset, pool.fids)
    if det:
        log.warning("features %s are determined by the action set and the other features", det)
    return SsfiReport(
        infoset, index.labels[infoset], pool.fids, phi0, phi, pool.target,
        t1, t2, missing / (2 * t2 * m), det,
    )


def ssfi_exact(index: InfosetIndex, profile: StrategyProfile, infoset: str, feature_set: Sequence[str]) -> SsfiReport:
    """Exact expectation of the sampled estimator (all alternatives, all orders)."""
    pool = _Pool(index, profile, infoset, feature_set)
    n = len(pool.keys)
    m = len(pool.fids)
    phi0 = pool.strategies.mean(axis=0)
    means = pool.group_means(phi0)
    weight = [math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m) for s in range(m)]
    phi = {}
    missing = 0.0
    for j, fid in enumerate(pool.fids):
        total = np.zeros(pool.n_act)
        others = [q for q in range(m) if q != j]
        for r in range(m):
            for ahead in itertools.combinations(others, r):
                mask = sum(1 << q for q in ahead)
                g_with = pool.group_of[mask | (1 << j)]
                g_without = pool.group_of[mask]
                diff = means[g_with].mean(axis=0) - means[g_without].mean(axis=0)
                total += weight[r] * diff
                missing += weight[r] * ((g_with < 0).sum() + (g_without < 0).sum()) / (2 * n)
        phi[fid] = total
    return SsfiReport(
        infoset, index.labels[infoset], pool.fids, phi0, phi, pool.target,
        0, 0, missing / m, determined_features(index, infoset, pool.fids),
    )


def select_infosets(
    index: InfosetIndex,
    hand: Iterable[int],
    C: int | None = None,
    D: Iterable[int] | None = None,
    O: Iterable[int] | None = None,
    P: int | None = None,
) -> list[str]:
    """Goofspiel infosets of the target player matching a (hand, C, D, O, P) selector."""
    from .goofspiel import mask_of

    cons: dict[str, object] = {}
    if C is not None:
        cons["C"] = C
    if D is not None:
        cons["D"] = mask_of(D)
    if O is not None:
        cons["O"] = mask_of(O)
    if P is not None:
        cons["P"] = P
    return sorted(index.query(mask_of(hand), cons))


def describe(index: InfosetIndex, key: str) -> dict:
    fv = index.features[key]
    out = {"infoset": key, "hand": cards(index.signature[key])}
    out.update(fv.to_json() if hasattr(fv, "to_json") else dict(zip(index.game.feature_ids, fv)))
    return out
