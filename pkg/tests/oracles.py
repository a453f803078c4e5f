"""Brute-force reference implementations, written with plain loops.

These deliberately share no code with the package: HDRs are found by trying
every candidate threshold, substitutions by scanning every grid cell, and the
curves by summing the defining expressions term by term.
"""

import math


def hdr_supported(col, widths, alpha):
    """Supported flags for one unit: the largest threshold t whose set {f >= t}
    carries normalized mass >= alpha."""
    total = sum(f * w for f, w in zip(col, widths))
    best = None
    for t in sorted(set(col), reverse=True):
        mass = sum(f * w for f, w in zip(col, widths) if f >= t) / total
        if mass >= alpha - 1e-12:
            best = t
            break
    return [f >= best for f in col], best


def nearest_supported(i, grid, supported):
    if supported[i]:
        return grid[i]
    best, best_d = None, math.inf
    for k, a in enumerate(grid):  # ascending, so strict < keeps the lower of a tie
        if supported[k] and abs(a - grid[i]) < best_d - 1e-12:
            best, best_d = a, abs(a - grid[i])
    return best


def brute_curves(grid, widths, dens, L, predict, alpha, cutoff=None):
    """dens[i][j] = f(a_i | l_j); predict(a, l) -> float. Returns a dict of lists."""
    m, n = len(grid), len(L)
    sup = [[False] * n for _ in range(m)]
    for j in range(n):
        flags, _ = hdr_supported([dens[i][j] for i in range(m)], widths, alpha)
        for i in range(m):
            sup[i][j] = flags[i]
    out = {"standard": [], "feasible": [], "trimming": [], "weighted": [], "tau": []}
    for i, a in enumerate(grid):
        std = sum(predict(a, L[j]) for j in range(n)) / n
        feas = 0.0
        for j in range(n):
            d = nearest_supported(i, grid, [sup[k][j] for k in range(m)])
            feas += predict(d, L[j])
        feas /= n
        k = sum(sup[i])
        trim = sum(predict(a, L[j]) for j in range(n) if sup[i][j]) / k if k else float("nan")
        fbar = sum(dens[i]) / n
        wsum = 0.0
        if cutoff is not None:
            for j in range(n):
                f = dens[i][j]
                w = 1.0 if f > cutoff else (f / fbar if fbar > 0 else 0.0)
                wsum += predict(a, L[j]) * w
        out["standard"].append(std)
        out["feasible"].append(feas)
        out["trimming"].append(trim)
        out["weighted"].append(wsum / n)
        out["tau"].append(1 - k / n)
    return out
