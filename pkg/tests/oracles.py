"""Independent reference implementations used as test oracles."""

import math

import numpy as np


def greedy_oracle(W, cutoff=0.0):
    """Literal step-by-step greedy: pick the best remaining pair, drop its
    row and column, repeat.  Returns a list of (i, j) in acceptance order."""
    rows = list(range(len(W)))
    cols = list(range(len(W[0]))) if len(W) else []
    links = []
    while True:
        best = None
        for i in rows:
            for j in cols:
                w = W[i][j]
                if w <= cutoff:
                    continue
                if best is None or w > best[0] or (w == best[0] and (i, j) < best[1:]):
                    best = (w, i, j)
        if best is None:
            return links
        _, i, j = best
        links.append((i, j))
        rows.remove(i)
        cols.remove(j)


def reference_params(m, u, g):
    """Transition probabilities computed directly from the defining formulas."""
    s, t = 1 - m - g, 1 - u - g
    if s <= 1e-12:
        p1 = p2 = 0.0
        q = u / t if t > 0 else 0.0
        return p1, p2, q, q, 1.0
    if u <= 0.5 * (1 - g):
        p1 = s / m
        if p1 <= 1:
            q = u / t
            return p1, 1.0, q, q, 1.0
        q = 2 * m * u / (t * (1 - g))
        return 1.0, m / s, q, q, q
    p1 = s * t / (m * (3 * u + g - 1))
    return p1, p1 * m / s, 1.0, 1.0, 1.0


def reference_step(cells, truth, params, rng):
    """One kernel transition on ``cells`` in place, pure Python, same draw order."""
    nx, ny, nl = cells.shape
    i = min(int(rng.random() * nx), nx - 1)
    l = min(int(rng.random() * nl), nl - 1)
    t = truth[i]
    p1, p2, q1, q2, q3 = params[l]
    before = int(cells[i, t, l])
    if before == 0:
        return (i, l, "missing")
    r = rng.random()
    if before == 1:
        if r >= p1:
            return (i, l, "stay_agree")
        cells[i, t, l] = -1
        q, clear, case = q1, True, "a"
    elif r < p2:
        cells[i, t, l] = 1
        q, clear, case = q2, True, "b"
    else:
        q, clear, case = q3, False, "c"
    for j in range(ny):
        if j == t:
            continue
        v = cells[i, j, l]
        if v == 1 and clear:
            cells[i, j, l] = -1
        elif v == -1:
            if q >= 1.0:
                cells[i, j, l] = 1
            elif q > 0.0 and rng.random() < q:
                cells[i, j, l] = 1
    return (i, l, case)


def log2_weight(num, den):
    return math.log2(num / den)
