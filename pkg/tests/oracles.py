"""Slow, obviously-correct reference implementations used as test oracles."""
import itertools
import math

import numpy as np


def entropy_bits(p):
    return -sum(x * math.log2(x) for x in p if x > 0)


def jsd_bits(p, q):
    m = [(a + b) / 2 for a, b in zip(p, q)]

    def kl(a, b):
        return sum(x * math.log2(x / y) for x, y in zip(a, b) if x > 0)

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def auroc_pairs(pos, neg):
    """Fraction of (positive, negative) pairs ordered correctly; ties count 1/2."""
    wins = 0.0
    for a, b in itertools.product(pos, neg):
        wins += 1.0 if a > b else 0.5 if a == b else 0.0
    return wins / (len(pos) * len(neg))


def average_precision(pos, neg):
    """Step average precision: each distinct threshold contributes (delta recall) * precision."""
    scored = [(s, 1) for s in pos] + [(s, 0) for s in neg]
    total, prev_recall = 0.0, 0.0
    for thr in sorted({s for s, _ in scored}, reverse=True):
        above = [y for s, y in scored if s >= thr]
        recall = sum(above) / len(pos)
        total += (recall - prev_recall) * sum(above) / len(above)
        prev_recall = recall
    return total


def random_distribution(rng, n, sparsity=0.3):
    p = rng.random(n)
    p[rng.random(n) < sparsity] = 0.0
    if p.sum() == 0:
        p[rng.integers(n)] = 1.0
    return p / p.sum()
