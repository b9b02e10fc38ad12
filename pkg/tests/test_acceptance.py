"""Exit criteria.  Each test prints one ``CRITERION n: PASS|FAIL`` line with its numbers.

Long: the whole module needs roughly 15 minutes on one core.  Criterion 4
(k=5, 10^7 timesteps per coalition) only runs with ``GAMESHAP_LONG_RUN=1``.
"""

import itertools
import json
import math
import os
import time
from fractions import Fraction

import numpy as np
import pytest
from click.testing import CliRunner

from gameshap.abstraction import all_subsets
from gameshap.cli import main
from gameshap.evaluation import exploitability, exploitability_of_policy, infoset_reach
from gameshap.game import StrategyProfile, enumerate_infosets, expected_value
from gameshap.goofspiel import Goofspiel, GoofspielConfig
from gameshap.kuhn import KuhnPoker
from gameshap.sgfi import run_sgfi, shapley_exact
from gameshap.solver import Solver, SolverConfig
from gameshap.ssfi import InfosetIndex, select_infosets, ssfi, ssfi_exact

pytestmark = pytest.mark.acceptance

MASTER_SEED = 0
KUHN_VALUE = float(Fraction(-1, 18))


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}")
        assert ok, detail

    return emit


def brute_force_best_response(game, opponent, player):
    infos = enumerate_infosets(game, player)
    best = -math.inf
    for plan in itertools.product(*[range(n) for _, n in infos]):
        prof = StrategyProfile(dict(opponent.items()))
        for (key, n), a in zip(infos, plan):
            prof[key] = np.eye(n)[a]
        best = max(best, expected_value(game, prof, player))
    return best


# 1 ------------------------------------------------------------------------

def test_criterion_1_kuhn_calibration(verdict):
    kuhn = KuhnPoker()
    t0 = time.perf_counter()
    solver = Solver(kuhn, SolverConfig("vanilla_cfr", 100_000))
    solver.run(100_000)
    elapsed = time.perf_counter() - t0
    prof = solver.profile()
    ev1 = expected_value(kuhn, prof, 1)
    # oracle: every pure plan of each player, against the closed-form game value
    eps1 = brute_force_best_response(kuhn, prof, 2) + KUHN_VALUE
    eps2 = brute_force_best_response(kuhn, prof, 1) - KUHN_VALUE
    tool = exploitability(kuhn, prof)
    ok = eps1 < 0.005 and eps2 < 0.005 and abs(ev1 - KUHN_VALUE) <= 0.005 and elapsed < 10
    verdict(1, ok, f"eps=({eps1:.2e}, {eps2:.2e}) tool eps=({tool.eps1:.2e}, {tool.eps2:.2e}) "
                   f"EV1={ev1:.6f} (target {KUHN_VALUE:.6f}) solve {elapsed:.1f}s")


# 2 ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def k4_profile():
    game = Goofspiel(GoofspielConfig(k=4))
    t0 = time.perf_counter()
    solver = Solver(game, SolverConfig("external_mccfr", 1_000_000, seed=MASTER_SEED))
    solver.run(1_000_000)
    policy = solver.average_policy()
    rep = exploitability_of_policy(solver.tree, policy)
    return game, solver, rep, time.perf_counter() - t0


def test_criterion_2_goofspiel_exploitability(verdict, k4_profile):
    _, _, rep, elapsed = k4_profile
    ok = rep.avg < 0.02 and elapsed < 300
    verdict(2, ok, f"avg exploitability {rep.avg:.4f} (eps1 {rep.eps1:.4f}, eps2 {rep.eps2:.4f}; "
                   f"published 0.006) in {elapsed:.0f}s")


# 3 ------------------------------------------------------------------------

def test_criterion_3_sgfi_ordering(verdict):
    game = Goofspiel(GoofspielConfig(k=4))
    t0 = time.perf_counter()
    run = run_sgfi(game, SolverConfig(iterations=1_000_000, seed=MASTER_SEED), replicates=3,
                   workers=os.cpu_count() or 1)
    elapsed = time.perf_counter() - t0
    lines, ok = [], elapsed < 3600
    for r, rep in enumerate(run.replicates):
        phi = rep.phi
        good = min(phi["C"], phi["D"]) > max(phi["O"], phi["P"])
        ok &= good
        lines.append(f"r{r}: " + " ".join(f"{j}={phi[j]:+.3f}" for j in "CDOP") + ("" if good else " (order broken)"))
    means = run.coalition_means()
    lines.append(f"v(none)={means['none']:.3f} v(all)={means['CDOP']:.3f}")
    verdict(3, ok, "; ".join(lines) + f"; {elapsed:.0f}s")


# 4 ------------------------------------------------------------------------

PUBLISHED_K5 = {"C": 0.298, "D": 0.295, "O": 0.096, "P": 0.101}


def test_criterion_4_sgfi_k5(capsys):
    if os.environ.get("GAMESHAP_LONG_RUN") != "1":
        with capsys.disabled():
            print("\nCRITERION 4: SKIPPED | optional long run; set GAMESHAP_LONG_RUN=1 "
                  "(k=5 needs ~9M tree nodes and 16 x 10^7 timesteps, beyond the 1 h desk budget)")
        pytest.skip("optional long run")
    game = Goofspiel(GoofspielConfig(k=5))
    run = run_sgfi(game, SolverConfig(iterations=10_000_000, seed=MASTER_SEED), replicates=2,
                   workers=os.cpu_count() or 1)
    phi, sd = run.phi_mean(), run.phi_std()
    ok = all(abs(phi[j] - PUBLISHED_K5[j]) <= 0.05 for j in PUBLISHED_K5)
    with capsys.disabled():
        print(f"\nCRITERION 4: {'PASS' if ok else 'FAIL'} | phi={phi} sd={sd}")
    assert ok


# 5 ------------------------------------------------------------------------

def permutation_shapley(values, ids):
    phi = dict.fromkeys(ids, 0.0)
    perms = list(itertools.permutations(ids))
    for order in perms:
        seen = frozenset()
        for j in order:
            phi[j] += values[seen | {j}] - values[seen]
            seen = seen | {j}
    return {j: v / len(perms) for j, v in phi.items()}


def test_criterion_5_shapley_axioms(verdict):
    rng = np.random.default_rng(MASTER_SEED)
    t0 = time.perf_counter()
    worst = {"efficiency": 0.0, "dummy": 0.0, "symmetry": 0.0, "brute": 0.0}
    for _ in range(1000):
        m = int(rng.integers(2, 6))
        ids = "abcde"[:m]
        dummy, (s1, s2) = ids[-1], (ids[0], ids[1]) if m > 2 else (None, None)
        memo = {}

        def v(S):
            # value ignores the dummy and only counts how many of the symmetric pair are present
            key = (frozenset(S) - {dummy, s1, s2}, len(set(S) & {s1, s2}) if s1 else None)
            if key not in memo:
                memo[key] = float(rng.normal())
            return memo[key]

        table = {frozenset(S): v(S) for S in all_subsets(ids)}
        rep = shapley_exact(table, ids)
        brute = permutation_shapley(table, ids)
        worst["efficiency"] = max(worst["efficiency"], abs(sum(rep.phi.values()) - (rep.full - rep.baseline)))
        worst["dummy"] = max(worst["dummy"], abs(rep.phi[dummy]))
        if s1:
            worst["symmetry"] = max(worst["symmetry"], abs(rep.phi[s1] - rep.phi[s2]))
        worst["brute"] = max(worst["brute"], max(abs(rep.phi[j] - brute[j]) for j in ids))
    elapsed = time.perf_counter() - t0
    ok = all(x < 1e-9 for x in worst.values()) and elapsed < 10
    verdict(5, ok, " ".join(f"{k}={x:.1e}" for k, x in worst.items()) + f" over 1000 tables in {elapsed:.1f}s")


# 6 ------------------------------------------------------------------------

def test_criterion_6_monotonicity(verdict):
    game = Goofspiel(GoofspielConfig(k=3))
    t0 = time.perf_counter()
    eps = {}
    for s in all_subsets(game.feature_ids):
        solver = Solver(game, SolverConfig("vanilla_cfr", 100_000, target_abstraction=s))
        solver.run(100_000)
        eps[s] = exploitability_of_policy(solver.tree, solver.average_policy()).eps1
    elapsed = time.perf_counter() - t0
    pairs = [(a, b) for a, b in itertools.product(eps, repeat=2) if a <= b]
    slack = min(eps[a] - eps[b] for a, b in pairs)
    ok = slack >= -0.02 and elapsed < 600
    table = " ".join(f"{s.label(game.feature_ids)}={e:.4f}" for s, e in eps.items())
    verdict(6, ok, f"{len(pairs)} pairs S<=S', min eps(S)-eps(S')={slack:+.2e}; {table}; {elapsed:.0f}s")


# 7 ------------------------------------------------------------------------

def test_criterion_7_ssfi_estimator(verdict):
    game = Goofspiel(GoofspielConfig(k=3))
    t0 = time.perf_counter()
    solver = Solver(game, SolverConfig("vanilla_cfr", 10_000))
    solver.run(10_000)
    prof = solver.profile()
    index = InfosetIndex(game)
    rng = np.random.default_rng(MASTER_SEED)
    choices = [k for k in index.keys if index.nactions[k] > 1]
    keys = [choices[i] for i in rng.choice(len(choices), 10, replace=False)]
    fs = list(game.feature_ids)
    worst, clean, local_err, group_err = 0.0, 0, 0.0, 0.0
    for n, key in enumerate(keys):
        exact = ssfi_exact(index, prof, key, fs)
        # infosets sharing every feature value with ``key`` are indistinguishable to the explainer
        twins = index.query(index.signature[key], index.features[key]._asdict())
        group = np.mean([prof.probs(k, index.nactions[key]) for k in twins], axis=0)
        group_err = max(group_err, np.abs(exact.reconstructed - group).max())
        est = ssfi(index, prof, key, fs, 1_000_000, 1_000_000, seed=n)
        worst = max([worst, np.abs(est.phi0 - exact.phi0).max()] + [np.abs(est.phi[j] - exact.phi[j]).max() for j in fs])
        if exact.missing_rate == 0:
            clean += 1
            local_err = max(local_err, np.abs(exact.reconstructed - exact.strategy).max())
    elapsed = time.perf_counter() - t0
    ok = worst < 0.01 and local_err < 1e-9 and group_err < 1e-9 and elapsed < 300
    verdict(7, ok, f"max |sampled-exact|={worst:.4f} over 10 infosets; local accuracy checked on "
                   f"{clean}/10 substitution-free infosets (max err {local_err:.1e}); "
                   f"exact reconstruction vs feature-group mean max err {group_err:.1e}; {elapsed:.0f}s")


# 8 ------------------------------------------------------------------------

PUBLISHED_SIGNS = {
    "I1": {"C": [-1, 1, 1], "D": [-1, 1, -1], "O": [-1, 1, -1]},
    "I2": {"C": [1, -1], "D": [1, -1], "O": [1, -1], "P": [1, -1]},
}


def test_criterion_8_ssfi_tables(verdict, k4_profile):
    game, solver, _, _ = k4_profile
    t0 = time.perf_counter()
    prof = solver.profile()
    index = InfosetIndex(game)
    reach = infoset_reach(solver.tree, solver.average_policy())
    i1 = select_infosets(index, [1, 2, 4], C=3, D=[1, 4], O=[1, 2, 3])
    i2 = select_infosets(index, [1, 4], C=3, D=[4], O=[3, 4])
    # the selector for I2 is ambiguous; explain the candidate play reaches most often
    i2_key = max(i2, key=lambda k: reach[solver.tree.infoset_index[k]])
    lines, ok = [], True
    for name, key, fs in (("I1", i1[0], "CDO"), ("I2", i2_key, "CDOP")):
        rep = ssfi(index, prof, key, list(fs), 1_000_000, 1_000_000, seed=MASTER_SEED)
        gap = np.abs(rep.reconstructed - rep.strategy).max()
        signs = {j: np.sign(rep.phi[j]).astype(int).tolist() for j in fs}
        sign_ok = signs == PUBLISHED_SIGNS[name]
        ok &= bool(gap <= 0.02) and sign_ok
        pct = lambda v: "(" + ", ".join(f"{100 * x:+.1f}%" for x in v) + ")"  # noqa: E731
        lines.append(
            f"{name} {key} [{len(i1) if name == 'I1' else len(i2)} match]: sigma={pct(rep.strategy)} "
            f"recon={pct(rep.reconstructed)} gap={gap:.3f} phi0={pct(rep.phi0)} "
            + " ".join(f"phi_{j}={pct(rep.phi[j])}" for j in fs)
            + f" missing={rep.missing_rate:.3f} signs {'match' if sign_ok else 'differ'}"
        )
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    verdict(8, ok, " || ".join(lines) + f"; {elapsed:.0f}s")


# 9 ------------------------------------------------------------------------

def _files(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*"))
            if p.is_file() and p.name != "run_manifest.json"}


def test_criterion_9_determinism(verdict, tmp_path):
    runner = CliRunner()
    base = tmp_path / "solve"
    jobs = {
        "solve": ["solve", "--set", "game.k=3", "--set", "solver.iterations=50000", "--set", "solver.eval_schedule=[10000]"],
        "sgfi": ["sgfi", "--set", "game.k=2", "--set", "solver.iterations=2000", "--set", "sgfi.replicates=2"],
        "ssfi": ["ssfi", "--set", "game.k=3", "--set", "solver.iterations=20000", "--set", 'ssfi.infoset="p1|1.2.2|c3"',
                 "--set", "ssfi.t1=100000", "--set", "ssfi.t2=100000"],
        "eval": ["eval", str(base / "first" / "strategy.json")],
        "enumerate": ["enumerate", "--set", "game.k=3"],
    }
    results = []
    for name, args in jobs.items():
        first, second = tmp_path / name / "first", tmp_path / name / "second"
        a = runner.invoke(main, [*args, "-o", str(first)])
        replay = [args[0]] + ([args[1]] if name == "eval" else [])
        b = runner.invoke(main, [*replay, "--replay", str(first / "run_manifest.json"), "-o", str(second)])
        ma = json.loads((first / "run_manifest.json").read_text())
        mb = json.loads((second / "run_manifest.json").read_text())
        same = a.exit_code == b.exit_code == 0 and _files(first) == _files(second) and ma["files"] == mb["files"]
        results.append((name, same, len(ma["files"])))
    ok = all(s for _, s, _ in results)
    verdict(9, ok, " ".join(f"{n}:{'identical' if s else 'DIFFERS'}({c} files)" for n, s, c in results))
