"""Brute-force reference implementations of the backbone checks, straight from their definitions."""

from __future__ import annotations

import numpy as np


def naive_chain(parents, tip):
    out = []
    while tip != 0:
        out.append(tip)
        tip = parents[tip]
    return out[::-1]


def naive_common_prefix(parents, tips) -> int:
    """Smallest k with every pruned chain a prefix of every chain at the same or a later snapshot."""
    chains = [[naive_chain(parents, t) for t in row] for row in tips]
    best = 0
    for s, row in enumerate(chains):
        for c in row:
            for later in chains[s:]:
                for c2 in later:
                    k = 0
                    while c[: len(c) - k] != c2[: len(c) - k]:
                        k += 1
                    best = max(best, k)
    return best


def naive_growth(parents, times, tips, kg) -> float:
    """Minimum growth over every window of kg consecutive rounds and every node, divided by kg."""
    lengths = [[len(naive_chain(parents, t)) for t in row] for row in tips]

    def length_at(r, j):
        s = max(i for i, t in enumerate(times) if t <= r)
        return lengths[s][j]

    worst = None
    for r in range(times[0], times[-1] - kg + 1):
        for j in range(len(tips[0])):
            g = length_at(r + kg, j) - length_at(r, j)
            worst = g if worst is None else min(worst, g)
    return max(0, worst) / kg


def naive_quality(flags, kq) -> float:
    return min(sum(flags[i:i + kq]) / kq for i in range(len(flags) - kq + 1))


def random_history(rng: np.random.Generator, max_blocks: int = 64):
    """Random block tree (parents, honest flags), one snapshot per round, random tips per node."""
    nb = int(rng.integers(2, max_blocks + 1))
    parents = [0] + [int(rng.integers(max(0, b - 4), b)) for b in range(1, nb)]
    honest = [True] + [bool(x) for x in rng.random(nb - 1) < 0.7]
    nodes = int(rng.integers(1, 5))
    snaps = int(rng.integers(1, 13))
    tips = rng.integers(0, nb, (snaps, nodes)).tolist()
    return parents, honest, list(range(snaps)), tips
