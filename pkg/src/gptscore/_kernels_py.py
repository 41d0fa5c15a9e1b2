"""Pure-Python numeric kernels.

Mirrors ``_kernels.pyx`` operation-for-operation so both builds agree to the
last bit on ordinary inputs. Degenerate correlations come back as NaN; the
public wrappers in :mod:`gptscore.metaeval` turn those into exceptions.
"""

from __future__ import annotations

import math

NAN = float("nan")


def _as_list(values) -> list[float]:
    return [float(v) for v in values]


def _ranks(x: list[float]) -> list[float]:
    n = len(x)
    order = sorted(range(n), key=x.__getitem__)
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i + 1
        while j < n and x[order[j]] == x[order[i]]:
            j += 1
        # positions i..j-1 (0-based) share the average 1-based rank
        avg = (i + j + 1) / 2.0
        for t in range(i, j):
            ranks[order[t]] = avg
        i = j
    return ranks


def _pearson(x: list[float], y: list[float]) -> float:
    n = len(x)
    if n < 2:
        return NAN
    x0 = x[0]
    y0 = y[0]
    x_const = True
    y_const = True
    sx = 0.0
    sy = 0.0
    for i in range(n):
        if x[i] != x0:
            x_const = False
        if y[i] != y0:
            y_const = False
        sx += x[i]
        sy += y[i]
    if x_const or y_const:
        return NAN
    mx = sx / n
    my = sy / n
    # scale deviations to [-1, 1] so tiny or huge inputs neither underflow nor overflow
    ax = 0.0
    ay = 0.0
    for i in range(n):
        ax = max(ax, abs(x[i] - mx))
        ay = max(ay, abs(y[i] - my))
    if ax == 0.0 or ay == 0.0:
        return NAN
    sxy = 0.0
    sxx = 0.0
    syy = 0.0
    for i in range(n):
        dx = (x[i] - mx) / ax
        dy = (y[i] - my) / ay
        sxy += dx * dy
        sxx += dx * dx
        syy += dy * dy
    r = sxy / math.sqrt(sxx * syy)
    if r > 1.0:
        return 1.0
    if r < -1.0:
        return -1.0
    return r


def rankdata(x) -> list[float]:
    """Fractional (average) ranks, 1-based."""
    return _ranks(_as_list(x))


def pearson(x, y) -> float:
    return _pearson(_as_list(x), _as_list(y))


def spearman(x, y) -> float:
    return _pearson(_ranks(_as_list(x)), _ranks(_as_list(y)))


def _corr(x: list[float], y: list[float], kind: int) -> float:
    if kind == 1:
        return _pearson(_ranks(x), _ranks(y))
    return _pearson(x, y)


def group_correlations(auto, human, offsets, kind: int) -> list[float]:
    """Per-group correlation; ``offsets`` has n+1 entries delimiting groups.

    ``kind`` is 0 for Pearson, 1 for Spearman.
    """
    a = _as_list(auto)
    h = _as_list(human)
    off = [int(o) for o in offsets]
    return [_corr(a[off[g]:off[g + 1]], h[off[g]:off[g + 1]], kind) for g in range(len(off) - 1)]


def resampled_dataset_correlation(auto, human, offsets, groups, kind: int) -> float:
    """Correlation over the concatenation of the selected groups (with repeats)."""
    a = _as_list(auto)
    h = _as_list(human)
    off = [int(o) for o in offsets]
    xa: list[float] = []
    xh: list[float] = []
    for g in groups:
        g = int(g)
        xa.extend(a[off[g]:off[g + 1]])
        xh.extend(h[off[g]:off[g + 1]])
    return _corr(xa, xh, kind)


def lcs_length(a, b) -> int:
    """Length of the longest common subsequence of two integer sequences."""
    a = [int(v) for v in a]
    b = [int(v) for v in b]
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for ai in a:
        cur = [0] * (len(b) + 1)
        for j, bj in enumerate(b, start=1):
            if ai == bj:
                cur[j] = prev[j - 1] + 1
            elif prev[j] >= cur[j - 1]:
                cur[j] = prev[j]
            else:
                cur[j] = cur[j - 1]
        prev = cur
    return prev[-1]
