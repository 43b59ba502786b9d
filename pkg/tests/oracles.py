"""Independent reference computations used by the tests.

Deliberately slow and literal; none of them import package internals.
"""

import math
from fractions import Fraction


def per_cycle_contention(transfers, w0, w1):
    """Accumulate each transfer's bytes spread evenly over its active cycles.

    ``transfers`` is a list of ``(start, end, nbytes)`` with integer cycles.
    Returns an exact Fraction.
    """
    total = Fraction(0)
    for c in range(w0, w1):
        for s, e, b in transfers:
            if s <= c < e:
                total += Fraction(b, e - s)
    return total


def normal_tail(x, upper=40.0, steps=200_000):
    """P[Z > x] by composite Simpson integration of the standard normal density."""
    if x >= upper:
        return 0.0
    h = (upper - x) / steps
    f = lambda t: math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)
    acc = f(x) + f(upper)
    for i in range(1, steps):
        acc += (4 if i % 2 else 2) * f(x + i * h)
    return acc * h / 3


def unbiased_autocorr(x, lag):
    n = len(x)
    m = sum(x) / n
    var = sum((v - m) ** 2 for v in x) / n
    if var == 0:
        return 0.0
    return sum((x[i] - m) * (x[i + lag] - m) for i in range(n - lag)) / (n - lag) / var


def knn_label(train_rows, train_labels, query, k):
    """Brute-force k-NN on already-normalised rows with the documented tie rules."""
    def dist(r):
        acc = 0.0
        for a, b in zip(r, query):
            acc += (a - b) * (a - b)
        return math.sqrt(acc)

    dists = [(dist(r), i) for i, r in enumerate(train_rows)]
    dists.sort()
    votes = {}
    for d, i in dists[:k]:
        c, s = votes.get(train_labels[i], (0, 0.0))
        votes[train_labels[i]] = (c + 1, s + d)
    best = max(v[0] for v in votes.values())
    tied = [lab for lab, v in votes.items() if v[0] == best]
    return min(tied, key=lambda lab: votes[lab][1])
