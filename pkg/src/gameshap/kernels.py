"""Numba kernels over :class:`~gameshap.tree.GameTree` arrays.

Infoset ids are global (both players share one id space).  Solver tables
are indexed by *class* ids obtained through ``cmap``; the identity map gives
the unabstracted game.

Random draws inside the sampling kernels come from xoshiro256** with its
256-bit state held in a caller-owned ``uint64[4]`` array, so every solve owns
an independent stream (seed it with :func:`rng_state`).
"""

from __future__ import annotations

import numpy as np
from numba import njit


def rng_state(seed_seq: np.random.SeedSequence) -> np.ndarray:
    state = seed_seq.generate_state(4, dtype=np.uint64)
    if not state.any():
        state[0] = 1
    return state


@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True)
def next_double(s):
    """Uniform double in [0, 1) from xoshiro256**."""
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return (result >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def regret_match(regret, c, n, out):
    """Write the regret-matching distribution of row ``c`` into ``out[:n]``."""
    total = 0.0
    for a in range(n):
        r = regret[c, a]
        if r > 0.0:
            total += r
    if total > 0.0:
        for a in range(n):
            r = regret[c, a]
            out[a] = r / total if r > 0.0 else 0.0
    else:
        for a in range(n):
            out[a] = 1.0 / n


@njit(cache=True)
def expected_value(kind, first_child, n_children, chance_prob, infoset, utility, policy):
    """Exact player-1 expected utility plus the total terminal reach."""
    reach = np.zeros(kind.size)
    reach[0] = 1.0
    ev = 0.0
    mass = 0.0
    for node in range(kind.size):
        k = kind[node]
        if k == -1:
            ev += reach[node] * utility[node]
            mass += reach[node]
            continue
        fc = first_child[node]
        for a in range(n_children[node]):
            if k == 0:
                p = chance_prob[fc + a]
            else:
                p = policy[infoset[node], a]
            reach[fc + a] = reach[node] * p
    return ev, mass


@njit(cache=True)
def best_response(
    kind, first_child, n_children, chance_prob, infoset, utility,
    depth_order, level_starts, policy, player, n_infosets, max_actions,
):
    """Best-response value for ``player`` and its pure action per infoset.

    Ties go to the lowest action id.  Requires every infoset to sit at one
    tree depth, which :func:`gameshap.tree.compile_tree` enforces.
    """
    n = kind.size
    sign = 1.0 if player == 1 else -1.0
    opp_reach = np.zeros(n)
    opp_reach[0] = 1.0
    for node in range(n):
        k = kind[node]
        if k == -1:
            continue
        fc = first_child[node]
        for a in range(n_children[node]):
            if k == 0:
                p = chance_prob[fc + a]
            elif k == player:
                p = 1.0
            else:
                p = policy[infoset[node], a]
            opp_reach[fc + a] = opp_reach[node] * p

    value = np.zeros(n)
    q = np.zeros((n_infosets, max_actions))
    best = np.full(n_infosets, -1, dtype=np.int64)
    for lv in range(level_starts.size - 1):
        lo = level_starts[lv]
        hi = level_starts[lv + 1]
        for i in range(lo, hi):
            node = depth_order[i]
            k = kind[node]
            fc = first_child[node]
            if k == -1:
                value[node] = sign * utility[node]
            elif k == player:
                I = infoset[node]
                for a in range(n_children[node]):
                    q[I, a] += opp_reach[node] * value[fc + a]
            else:
                v = 0.0
                for a in range(n_children[node]):
                    if k == 0:
                        p = chance_prob[fc + a]
                    else:
                        p = policy[infoset[node], a]
                    v += p * value[fc + a]
                value[node] = v
        for i in range(lo, hi):
            node = depth_order[i]
            if kind[node] != player:
                continue
            I = infoset[node]
            if best[I] < 0:
                b = 0
                for a in range(1, n_children[node]):
                    if q[I, a] > q[I, b]:
                        b = a
                best[I] = b
            value[node] = value[first_child[node] + best[I]]
    return value[0], best


@njit(cache=True)
def cfr_iterations(
    kind, first_child, n_children, chance_prob, infoset, utility,
    cmap, class_nact, regret, cumstrat, iterations,
):
    """Vanilla CFR with simultaneous updates; average weighted by own reach."""
    n = kind.size
    n_classes = class_nact.size
    sigma = np.zeros(regret.shape)
    reach1 = np.zeros(n)
    reach2 = np.zeros(n)
    reachc = np.zeros(n)
    value = np.zeros(n)
    for _ in range(iterations):
        for c in range(n_classes):
            regret_match(regret, c, class_nact[c], sigma[c])
        reach1[0] = 1.0
        reach2[0] = 1.0
        reachc[0] = 1.0
        for node in range(n):
            k = kind[node]
            if k == -1:
                continue
            fc = first_child[node]
            for a in range(n_children[node]):
                ch = fc + a
                reach1[ch] = reach1[node]
                reach2[ch] = reach2[node]
                reachc[ch] = reachc[node]
                if k == 0:
                    reachc[ch] *= chance_prob[ch]
                elif k == 1:
                    reach1[ch] *= sigma[cmap[infoset[node]], a]
                else:
                    reach2[ch] *= sigma[cmap[infoset[node]], a]
        for node in range(n - 1, -1, -1):
            k = kind[node]
            if k == -1:
                value[node] = utility[node]
                continue
            fc = first_child[node]
            nc = n_children[node]
            if k == 0:
                v = 0.0
                for a in range(nc):
                    v += chance_prob[fc + a] * value[fc + a]
                value[node] = v
                continue
            c = cmap[infoset[node]]
            v = 0.0
            for a in range(nc):
                v += sigma[c, a] * value[fc + a]
            value[node] = v
            if k == 1:
                cf = reach2[node] * reachc[node]
                own = reach1[node]
                sgn = 1.0
            else:
                cf = reach1[node] * reachc[node]
                own = reach2[node]
                sgn = -1.0
            for a in range(nc):
                regret[c, a] += cf * sgn * (value[fc + a] - v)
                cumstrat[c, a] += own * sigma[c, a]


@njit(cache=True)
def _sample(rng, probs, n):
    u = next_double(rng)
    acc = 0.0
    for a in range(n - 1):
        acc += probs[a]
        if u < acc:
            return a
    return n - 1


@njit(cache=True)
def es_timesteps(
    kind, first_child, n_children, chance_prob, infoset, utility,
    cmap, class_nact, regret, cumstrat, visits, rng, avg_own, max_depth, start, count,
):
    """Run ``count`` external-sampling traversals; step ``t`` updates player ``1 + t % 2``.

    ``avg_own`` selects where the average strategy accumulates: false adds the
    current strategy at sampled opponent nodes (unbiased in expectation),
    true adds it at the updating player's nodes weighted by own reach.

    The traversal keeps an explicit stack holding one frame per updating-player
    node on the current path; chance and opponent nodes are sampled in place.
    """
    size = max_depth + 2
    maxa = class_nact.max()
    f_node = np.empty(size, dtype=np.int64)
    f_next = np.empty(size, dtype=np.int64)
    f_reach = np.empty(size)
    sig = np.empty((size, maxa))
    vals = np.empty((size, maxa))
    for t in range(start, start + count):
        player = 1 + t % 2
        sp = -1
        node = 0
        reach = 1.0
        ret = 0.0
        entering = True
        while True:
            if entering:
                visits[node] += 1
                k = kind[node]
                if k == -1:
                    ret = utility[node] if player == 1 else -utility[node]
                    entering = False
                    continue
                fc = first_child[node]
                nc = n_children[node]
                if k == 0:
                    node = fc + _sample(rng, chance_prob[fc : fc + nc], nc)
                    continue
                c = cmap[infoset[node]]
                if k != player:
                    tmp = sig[sp + 1]
                    regret_match(regret, c, nc, tmp)
                    if not avg_own:
                        for a in range(nc):
                            cumstrat[c, a] += tmp[a]
                    node = fc + _sample(rng, tmp, nc)
                    continue
                sp += 1
                f_node[sp] = node
                f_next[sp] = 0
                f_reach[sp] = reach
                regret_match(regret, c, nc, sig[sp])
                reach = reach * sig[sp, 0]
                node = fc
                continue
            if sp < 0:
                break
            node = f_node[sp]
            a = f_next[sp]
            vals[sp, a] = ret
            a += 1
            nc = n_children[node]
            if a < nc:
                f_next[sp] = a
                reach = f_reach[sp] * sig[sp, a]
                node = first_child[node] + a
                entering = True
                continue
            c = cmap[infoset[node]]
            v = 0.0
            for b in range(nc):
                v += sig[sp, b] * vals[sp, b]
            for b in range(nc):
                regret[c, b] += vals[sp, b] - v
                if avg_own:
                    cumstrat[c, b] += f_reach[sp] * sig[sp, b]
            ret = v
            sp -= 1
