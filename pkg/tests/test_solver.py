from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gameshap import kernels
from gameshap.abstraction import FeatureSubset
from gameshap.evaluation import exploitability
from gameshap.game import CHANCE, TERMINAL, UsageError
from gameshap.goofspiel import Goofspiel, GoofspielConfig
from gameshap.solver import ConvergenceLog, Solver, SolverConfig, regret_matching, solve, solve_abstracted
from gameshap.tree import get_tree


@pytest.mark.parametrize(
    "regret, expected",
    [
        ([1.0, 2.0, -1.0], [1 / 3, 2 / 3, 0.0]),
        ([-1.0, -5.0], [0.5, 0.5]),
        ([0.0, 0.0, 0.0, 0.0], [0.25] * 4),
        ([0.0, 3.0], [0.0, 1.0]),
    ],
)
def test_regret_matching_examples(regret, expected):
    assert np.allclose(regret_matching(regret), expected, atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=6))
def test_kernel_regret_match_agrees(row):
    table = np.array([row])
    out = np.empty(len(row))
    kernels.regret_match(table, 0, len(row), out)
    assert np.allclose(out, regret_matching(row), atol=1e-12)
    assert out.sum() == pytest.approx(1.0)


def test_config_validation():
    with pytest.raises(UsageError):
        SolverConfig(algorithm="cfr+")
    with pytest.raises(UsageError):
        SolverConfig(iterations=0)
    with pytest.raises(UsageError):
        SolverConfig(iterations=10, eval_schedule=(11,))
    with pytest.raises(UsageError):
        SolverConfig(averaging="linear")
    with pytest.raises(UsageError):
        solve_abstracted(Goofspiel(GoofspielConfig(k=2)), SolverConfig(iterations=1))


def test_kuhn_cannot_be_abstracted(kuhn):
    with pytest.raises(UsageError):
        Solver(kuhn, SolverConfig(iterations=1, target_abstraction=FeatureSubset()))


# -- vanilla CFR vs an independent recursive reference ----------------------

def reference_cfr(game, iterations):
    """Textbook recursive CFR, simultaneous updates, own-reach averaging."""
    regret = defaultdict(lambda: None)
    cum = {}

    def strategy(key, n):
        r = regret[key]
        if r is None:
            regret[key] = r = np.zeros(n)
        return regret_matching(r)

    def rec(state, pi1, pi2, pic, sigma, deltas):
        p = game.current_player(state)
        if p == TERMINAL:
            return game.utilities(state)[0]
        n = game.num_actions(state)
        if p == CHANCE:
            probs = game.chance_probs(state)
            return sum(probs[a] * rec(game.apply(state, a), pi1, pi2, pic * probs[a], sigma, deltas) for a in range(n))
        key = game.infoset_key(state, p)
        s = sigma.setdefault(key, strategy(key, n))
        vals = np.array([
            rec(game.apply(state, a), pi1 * (s[a] if p == 1 else 1), pi2 * (s[a] if p == 2 else 1), pic, sigma, deltas)
            for a in range(n)
        ])
        v = float(s @ vals)
        sign = 1.0 if p == 1 else -1.0
        cf = (pi2 if p == 1 else pi1) * pic
        own = pi1 if p == 1 else pi2
        d_r, d_s = deltas.setdefault(key, [np.zeros(n), np.zeros(n)])
        d_r += cf * sign * (vals - v)
        d_s += own * s
        return v

    for _ in range(iterations):
        sigma, deltas = {}, {}
        rec(game.initial_state(), 1.0, 1.0, 1.0, sigma, deltas)
        for key, (d_r, d_s) in deltas.items():
            regret[key] = regret[key] + d_r
            cum[key] = cum.get(key, 0) + d_s
    return {k: v / v.sum() for k, v in cum.items()}


@pytest.mark.parametrize("which", ["kuhn", "g3"])
def test_vanilla_cfr_matches_reference(which, request):
    game = request.getfixturevalue(which)
    iters = 25 if which == "kuhn" else 4
    ref = reference_cfr(game, iters)
    solver = Solver(game, SolverConfig("vanilla_cfr", iters))
    solver.run(iters)
    prof = solver.profile()
    for key, probs in ref.items():
        assert np.allclose(prof.probs(key, probs.size), probs, atol=1e-12), key


def test_vanilla_cfr_kuhn_converges(kuhn):
    prof, log = solve(kuhn, SolverConfig("vanilla_cfr", 5000, eval_schedule=(500,)))
    rep = exploitability(kuhn, prof)
    assert rep.eps1 < 0.02 and rep.eps2 < 0.02
    assert [r[0] for r in log.rows] == [500, 500, 5000, 5000]
    assert log.last(1)[3] < log.rows[0][3]


# -- external sampling ------------------------------------------------------

def es_visit_oracle(game, updater):
    """Nodes touched by one external-sampling traversal.

    Every Goofspiel subtree at a given depth has the same shape, so the count
    does not depend on which child is sampled.
    """

    def rec(state):
        p = game.current_player(state)
        if p == TERMINAL:
            return 1
        if p == updater:
            return 1 + sum(rec(game.apply(state, a)) for a in range(game.num_actions(state)))
        return 1 + rec(game.apply(state, 0))

    return rec(game.initial_state())


@pytest.mark.parametrize("k", [2, 3])
def test_external_sampling_visit_contract(k):
    game = Goofspiel(GoofspielConfig(k=k))
    tree = get_tree(game)
    solver = Solver(game, SolverConfig(iterations=10, seed=5))
    solver.run(1)
    assert solver.visits.sum() == es_visit_oracle(game, 1)
    # at player-1 nodes every action is explored
    for node in np.flatnonzero(solver.visits):
        if tree.kind[node] == 1:
            fc, nc = tree.first_child[node], tree.n_children[node]
            assert (solver.visits[fc : fc + nc] == solver.visits[node]).all()
        elif tree.kind[node] in (0, 2):
            fc, nc = tree.first_child[node], tree.n_children[node]
            assert solver.visits[fc : fc + nc].sum() == solver.visits[node]
    before = solver.visits.sum()
    solver.run(1)
    assert solver.visits.sum() - before == es_visit_oracle(game, 2)


def test_seed_determinism_and_chunking(g3):
    a = Solver(g3, SolverConfig(iterations=3000, seed=42))
    a.run(3000)
    b = Solver(g3, SolverConfig(iterations=3000, seed=42))
    for _ in range(3):
        b.run(1000)
    assert np.array_equal(a.regret, b.regret) and np.array_equal(a.cumstrat, b.cumstrat)
    c = Solver(g3, SolverConfig(iterations=3000, seed=43))
    c.run(3000)
    assert not np.array_equal(a.cumstrat, c.cumstrat)


@pytest.mark.parametrize("averaging", ["opponent", "own_reach"])
def test_average_policy_is_distribution(g3, averaging):
    s = Solver(g3, SolverConfig(iterations=2000, seed=1, averaging=averaging))
    s.run(2000)
    pol = s.average_policy()
    tree = s.tree
    for i in range(tree.num_infosets):
        n = tree.infoset_nactions[i]
        assert pol[i, :n].sum() == pytest.approx(1.0, abs=1e-12)
        assert (pol[i, :n] >= 0).all() and (pol[i, n:] == 0).all()
    cur = s.current_policy()
    assert np.allclose(cur.sum(axis=1), 1.0)


def test_mccfr_kuhn_converges(kuhn):
    prof, _ = solve(kuhn, SolverConfig(iterations=200_000, seed=3))
    rep = exploitability(kuhn, prof)
    assert rep.avg < 0.02


def test_mccfr_goofspiel_k3_converges(g3):
    prof, _ = solve(g3, SolverConfig(iterations=200_000, seed=3))
    assert exploitability(g3, prof).avg < 0.01


@pytest.mark.parametrize("subset", ["none", "C", "CD"])
def test_abstracted_classes_share_strategy(g3, subset):
    fs = FeatureSubset.parse(subset, g3.feature_ids)
    s = Solver(g3, SolverConfig(iterations=5000, seed=2, target_abstraction=fs))
    s.run(5000)
    pol = s.average_policy()
    by_class = defaultdict(list)
    for i, c in enumerate(s.classes.cmap):
        by_class[c].append(i)
    merged = 0
    for members in by_class.values():
        if len(members) > 1:
            merged += 1
            assert all(np.array_equal(pol[m], pol[members[0]]) for m in members)
    assert merged > 0
    # the opponent keeps its own infosets
    p2 = s.tree.player_infosets(2)
    assert len({s.classes.cmap[i] for i in p2}) == p2.size


def test_convergence_log_csv():
    log = ConvergenceLog([(10, 1, 0.5, 0.1), (10, 2, -0.5, 0.2)])
    lines = log.to_csv().splitlines()
    assert lines[0] == "schema_version,iteration,player,expected_value,exploitability"
    assert lines[1] == "1,10,1,0.5,0.1"
    assert log.last(2) == (10, 2, -0.5, 0.2)
