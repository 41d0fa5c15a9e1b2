"""Correlation of metric scores with human judgments.

Pearson and Spearman (average ranks for ties) come from the compiled kernels
when available. Aggregation follows the two usual strategies: sample-level
(mean of per-sample correlations across systems) and dataset-level (one
correlation over every pair).
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from ._accel import kernels
from .datasets import Strategy

DEFAULT_RESAMPLES = 1000
DEFAULT_ALPHA = 0.05


class DegenerateInputError(ValueError):
    """Correlation undefined: constant input or fewer than two points."""


class CorrelationKind(str, Enum):
    SPEARMAN = "Spearman"
    PEARSON = "Pearson"

    @property
    def code(self) -> int:
        return 1 if self is CorrelationKind.SPEARMAN else 0

    @classmethod
    def parse(cls, value: str | CorrelationKind) -> CorrelationKind:
        if isinstance(value, CorrelationKind):
            return value
        for member in cls:
            if member.value.lower() == str(value).lower():
                return member
        raise ValueError(f"unknown correlation kind {value!r}")


def _vectors(x: Sequence[float], y: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.ndim != 1 or xa.shape != ya.shape:
        raise ValueError("x and y must be 1-D and of equal length")
    if xa.size < 2:
        raise DegenerateInputError("need at least two points")
    if not (np.isfinite(xa).all() and np.isfinite(ya).all()):
        raise ValueError("non-finite values")
    return xa, ya


def ranks(x: Sequence[float]) -> np.ndarray:
    """1-based fractional ranks; tied values share the mean of their positions."""
    return np.asarray(kernels.rankdata(np.asarray(x, dtype=np.float64)), dtype=np.float64)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    xa, ya = _vectors(x, y)
    r = kernels.pearson(xa, ya)
    if math.isnan(r):
        raise DegenerateInputError("zero variance")
    return float(r)


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    xa, ya = _vectors(x, y)
    r = kernels.spearman(xa, ya)
    if math.isnan(r):
        raise DegenerateInputError("zero rank variance")
    return float(r)


def correlation(x: Sequence[float], y: Sequence[float], kind: CorrelationKind | str) -> float:
    kind = CorrelationKind.parse(kind)
    return spearman(x, y) if kind is CorrelationKind.SPEARMAN else pearson(x, y)


class PairedScores:
    """Groups of (auto, human) pairs, one group per source sample."""

    def __init__(self, groups: Sequence[Sequence[tuple[float, float]]], group_ids: Sequence[str] | None = None):
        if not groups:
            raise ValueError("no groups")
        auto, human, offsets = [], [], [0]
        for g, pairs in enumerate(groups):
            if not pairs:
                raise ValueError(f"group {g} is empty")
            for a, h in pairs:
                auto.append(float(a))
                human.append(float(h))
            offsets.append(len(auto))
        self.auto = np.asarray(auto, dtype=np.float64)
        self.human = np.asarray(human, dtype=np.float64)
        if not (np.isfinite(self.auto).all() and np.isfinite(self.human).all()):
            raise ValueError("non-finite score in paired scores")
        self.offsets = np.asarray(offsets, dtype=np.intp)
        self.group_ids = list(group_ids) if group_ids is not None else [str(i) for i in range(len(groups))]
        if len(self.group_ids) != len(groups):
            raise ValueError("group_ids length mismatch")

    @property
    def n_groups(self) -> int:
        return len(self.offsets) - 1

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def groups(self) -> list[list[tuple[float, float]]]:
        return [
            list(zip(self.auto[s:e].tolist(), self.human[s:e].tolist()))
            for s, e in zip(self.offsets[:-1], self.offsets[1:])
        ]

    def same_layout(self, other: PairedScores) -> bool:
        return (
            self.group_ids == other.group_ids
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.human, other.human)
        )


@dataclass(frozen=True)
class CorrelationReport:
    kind: CorrelationKind
    strategy: Strategy
    value: float
    n_used: int
    n_skipped: int

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "strategy": self.strategy.value,
            "value": self.value,
            "n_used": self.n_used,
            "n_skipped": self.n_skipped,
        }


def group_correlations(ps: PairedScores, kind: CorrelationKind | str) -> np.ndarray:
    """Per-group correlations; NaN marks degenerate groups."""
    kind = CorrelationKind.parse(kind)
    return np.asarray(kernels.group_correlations(ps.auto, ps.human, ps.offsets, kind.code), dtype=np.float64)


def aggregate(ps: PairedScores, kind: CorrelationKind | str, strategy: Strategy | str) -> CorrelationReport:
    kind = CorrelationKind.parse(kind)
    strategy = Strategy.parse(strategy)
    if strategy is Strategy.SAMPLE:
        per_group = group_correlations(ps, kind)
        valid = per_group[~np.isnan(per_group)]
        if valid.size == 0:
            raise DegenerateInputError("every group is degenerate")
        value = math.fsum(valid.tolist()) / valid.size
        return CorrelationReport(kind, strategy, value, int(valid.size), int(per_group.size - valid.size))
    value = kernels.pearson(ps.auto, ps.human) if kind is CorrelationKind.PEARSON else kernels.spearman(ps.auto, ps.human)
    if math.isnan(value):
        raise DegenerateInputError("flattened scores are degenerate")
    return CorrelationReport(kind, strategy, float(value), ps.n_groups, 0)


@dataclass(frozen=True)
class SignificanceResult:
    p_value: float
    n_resamples: int
    alpha: float
    significant: bool
    seed: int
    corr_a: float | None = None
    corr_b: float | None = None

    def to_json(self) -> dict:
        return {
            "p_value": self.p_value,
            "n_resamples": self.n_resamples,
            "alpha": self.alpha,
            "significant": self.significant,
            "seed": self.seed,
            "corr_a": self.corr_a,
            "corr_b": self.corr_b,
        }


class BootstrapError(ValueError):
    pass


def _resampled(ps: PairedScores, per_group: np.ndarray | None, idx: np.ndarray, kind: int) -> float:
    if per_group is not None:
        vals = per_group[idx]
        vals = vals[~np.isnan(vals)]
        return math.fsum(vals.tolist()) / vals.size if vals.size else math.nan
    return kernels.resampled_dataset_correlation(ps.auto, ps.human, ps.offsets, idx, kind)


def bootstrap_compare(
    a: PairedScores,
    b: PairedScores,
    kind: CorrelationKind | str = CorrelationKind.SPEARMAN,
    strategy: Strategy | str = Strategy.SAMPLE,
    n_resamples: int = DEFAULT_RESAMPLES,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
    n_jobs: int = 1,
) -> SignificanceResult:
    """Paired bootstrap over groups: p = share of resamples where corr(a) <= corr(b).

    Small p means metric ``a`` correlates better than ``b``. Resample ``r``
    draws from its own child stream of ``SeedSequence(seed)``, so the result
    does not depend on ``n_jobs``. Resamples where either side is undefined
    are redrawn, with at most ``10 * n_resamples`` draws in total.
    """
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    if a.group_ids != b.group_ids or not np.array_equal(a.offsets, b.offsets):
        raise BootstrapError("paired scores cover different (group, pair) index sets")
    if not np.array_equal(a.human, b.human):
        raise BootstrapError("paired scores carry different human values")
    kind = CorrelationKind.parse(kind)
    strategy = Strategy.parse(strategy)

    per_a = group_correlations(a, kind) if strategy is Strategy.SAMPLE else None
    per_b = group_correlations(b, kind) if strategy is Strategy.SAMPLE else None
    n = a.n_groups
    budget = 10 * n_resamples
    children = np.random.SeedSequence(seed).spawn(n_resamples)

    draws = 0
    lock = threading.Lock()

    def one(r: int) -> bool:
        nonlocal draws
        rng = np.random.default_rng(children[r])
        while True:
            with lock:
                draws += 1
                over = draws > budget
            if over:
                raise BootstrapError(f"too many degenerate resamples (more than {budget} draws for {n_resamples} resamples)")
            idx = rng.integers(0, n, size=n)
            ca = _resampled(a, per_a, idx, kind.code)
            cb = _resampled(b, per_b, idx, kind.code)
            if not (math.isnan(ca) or math.isnan(cb)):
                return ca <= cb

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            outcomes = list(pool.map(one, range(n_resamples)))
    else:
        outcomes = [one(r) for r in range(n_resamples)]
    count = sum(outcomes)
    p = count / n_resamples

    def observed(ps: PairedScores) -> float | None:
        try:
            return aggregate(ps, kind, strategy).value
        except DegenerateInputError:
            return None

    return SignificanceResult(p, n_resamples, alpha, p < alpha, seed, observed(a), observed(b))
