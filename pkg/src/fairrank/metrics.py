"""Exact pair-counting utility and disparity metrics.

Every metric is a ratio of two integer pair counts; counts are accumulated
exactly and divided once at the end, so values are reproducible bit for bit.
Each metric accepts either raw samples (scores may tie, governed by
``TiePolicy``) or a ``CrossGroupOrdering`` plus its groups (a total order,
ties impossible, stored scores ignored).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    CrossGroupOrdering,
    GroupedSequence,
    Sample,
    TiePolicy,
    UndefinedMetricError,
    items_in_order,
    sort_into_groups,
)


@dataclass(frozen=True)
class MetricValue:
    """An exact pair-fraction: value == numerator / denominator.

    Under ``TiePolicy.HALF`` the numerator holds doubled wins plus ties and
    the denominator is doubled, keeping everything integral.
    """

    value: float
    numerator: int
    denominator: int

    @staticmethod
    def from_counts(wins: int, ties: int, total: int, policy: TiePolicy) -> "MetricValue":
        if total <= 0:
            raise UndefinedMetricError("no pairs to count")
        if policy is TiePolicy.HALF:
            return MetricValue((2 * wins + ties) / (2 * total), 2 * wins + ties, 2 * total)
        return MetricValue(wins / total, wins, total)


@dataclass(frozen=True)
class XrocCurve:
    """Threshold-sweep step curve; x is the one-group negative rate above the
    threshold, y the other group's positive rate above it."""

    points: tuple[tuple[float, float], ...]
    area: float


@dataclass(frozen=True)
class DominanceReport:
    groups: tuple[str, ...]
    pairwise: tuple[tuple[float, ...], ...]  # pairwise[i][j] = Pr[S^gi > S^gj], half-credit
    verdict: str  # "dominant:<group>" | "cycle" | "tie"


class Ranking:
    """Normalized rank view: labels and groups in rank order plus tie blocks.

    Built once, consumed by every metric. Tie blocks partition ranks into
    runs of equal score; an ordering yields singleton blocks.
    """

    def __init__(self, labels: np.ndarray, group_codes: np.ndarray,
                 blocks: np.ndarray, group_names: tuple[str, ...]):
        self.labels = labels
        self.group_codes = group_codes
        self.blocks = blocks
        self.group_names = group_names

    @staticmethod
    def from_samples(samples: Sequence[Sample]) -> "Ranking":
        groups = sort_into_groups(samples)
        names = tuple(g.group for g in groups)
        code = {name: i for i, name in enumerate(names)}
        flat = sorted(
            (s if s.row >= 0 else Sample(s.id, s.score, s.label, s.group, row=i)
             for i, s in enumerate(samples)),
            key=lambda s: (-s.score, s.row),
        )
        labels = np.array([s.label for s in flat], dtype=np.int8)
        codes = np.array([code[s.group] for s in flat], dtype=np.int32)
        scores = np.array([s.score for s in flat], dtype=np.float64)
        blocks = np.zeros(len(flat), dtype=np.int64)
        if len(flat) > 1:
            blocks[1:] = np.cumsum(scores[1:] != scores[:-1])
        return Ranking(labels, codes, blocks, names)

    @staticmethod
    def from_ordering(ordering: CrossGroupOrdering,
                      groups: Sequence[GroupedSequence]) -> "Ranking":
        names = tuple(g.group for g in groups)
        code = {name: i for i, name in enumerate(names)}
        items = items_in_order(ordering, groups)
        labels = np.array([s.label for s in items], dtype=np.int8)
        codes = np.array([code[s.group] for s in items], dtype=np.int32)
        return Ranking(labels, codes, np.arange(len(items), dtype=np.int64), names)

    def pair_counts(self, top_mask: np.ndarray, bottom_mask: np.ndarray) -> tuple[int, int, int]:
        """(strict wins, ties, total pairs) for top-set members ranked above
        bottom-set members."""
        n_blocks = int(self.blocks[-1]) + 1 if len(self.blocks) else 0
        top_per_block = np.bincount(self.blocks[top_mask], minlength=n_blocks)
        bot_per_block = np.bincount(self.blocks[bottom_mask], minlength=n_blocks)
        tops_before = np.concatenate(([0], np.cumsum(top_per_block)[:-1]))
        wins = int(np.dot(bot_per_block, tops_before))
        ties = int(np.dot(bot_per_block, top_per_block))
        total = int(top_per_block.sum()) * int(bot_per_block.sum())
        return wins, ties, total


def _ranking(data, groups: Sequence[GroupedSequence] | None) -> Ranking:
    if isinstance(data, Ranking):
        return data
    if isinstance(data, CrossGroupOrdering):
        if groups is None:
            raise ValueError("an ordering needs its GroupedSequences")
        return Ranking.from_ordering(data, groups)
    return Ranking.from_samples(data)


def auc(data, groups=None, ties: TiePolicy = TiePolicy.STRICT) -> MetricValue:
    """Fraction of (positive, negative) pairs with the positive ranked above."""
    r = _ranking(data, groups)
    pos = r.labels == 1
    neg = r.labels == 0
    if not pos.any() or not neg.any():
        raise UndefinedMetricError("auc needs at least one positive and one negative")
    return MetricValue.from_counts(*r.pair_counts(pos, neg), ties)


def xauc(data, from_group: str, to_group: str, groups=None,
         ties: TiePolicy = TiePolicy.STRICT) -> MetricValue:
    """Fraction of (positive in from_group, negative in to_group) pairs ranked
    correctly."""
    r = _ranking(data, groups)
    fi = r.group_names.index(from_group)
    ti = r.group_names.index(to_group)
    pos = (r.labels == 1) & (r.group_codes == fi)
    neg = (r.labels == 0) & (r.group_codes == ti)
    if not pos.any():
        raise UndefinedMetricError(f"group {from_group!r} has no positives")
    if not neg.any():
        raise UndefinedMetricError(f"group {to_group!r} has no negatives")
    return MetricValue.from_counts(*r.pair_counts(pos, neg), ties)


def delta_xauc(data, a: str, b: str, groups=None,
               ties: TiePolicy = TiePolicy.STRICT) -> MetricValue:
    """|xAUC(a,b) - xAUC(b,a)| as an exact fraction over a common denominator."""
    ab = xauc(data, a, b, groups, ties)
    ba = xauc(data, b, a, groups, ties)
    return _abs_gap(ab, ba)


def prf(data, group: str, groups=None, ties: TiePolicy = TiePolicy.STRICT) -> MetricValue:
    """Fraction of (positive in the group, any negative) pairs ranked correctly."""
    r = _ranking(data, groups)
    gi = r.group_names.index(group)
    pos = (r.labels == 1) & (r.group_codes == gi)
    neg = r.labels == 0
    if not pos.any():
        raise UndefinedMetricError(f"group {group!r} has no positives")
    if not neg.any():
        raise UndefinedMetricError("no negatives in the data")
    return MetricValue.from_counts(*r.pair_counts(pos, neg), ties)


def delta_prf(data, a: str, b: str, groups=None,
              ties: TiePolicy = TiePolicy.STRICT) -> MetricValue:
    pa = prf(data, a, groups, ties)
    pb = prf(data, b, groups, ties)
    return _abs_gap(pa, pb)


def urf_pair(data, a: str, b: str, groups=None,
             ties: TiePolicy = TiePolicy.STRICT) -> tuple[MetricValue, MetricValue]:
    """(Pr[S^a > S^b], |Pr[S^a > S^b] - Pr[S^b > S^a]|) over all cross pairs,
    labels ignored."""
    r = _ranking(data, groups)
    ai = r.group_names.index(a)
    bi = r.group_names.index(b)
    in_a = r.group_codes == ai
    in_b = r.group_codes == bi
    if not in_a.any():
        raise UndefinedMetricError(f"group {a!r} is empty")
    if not in_b.any():
        raise UndefinedMetricError(f"group {b!r} is empty")
    above = MetricValue.from_counts(*r.pair_counts(in_a, in_b), ties)
    below = MetricValue.from_counts(*r.pair_counts(in_b, in_a), ties)
    return above, _abs_gap(above, below)


_DISPARITIES = {
    "xauc": lambda r, a, b, ties: delta_xauc(r, a, b, ties=ties),
    "prf": lambda r, a, b, ties: delta_prf(r, a, b, ties=ties),
    "urf": lambda r, a, b, ties: urf_pair(r, a, b, ties=ties)[1],
}


def pairwise_disparity(data, metric: str, a: str, b: str, groups=None,
                       ties: TiePolicy = TiePolicy.STRICT) -> MetricValue:
    """Dispatch to the named two-group disparity (xauc, prf, or urf)."""
    if metric not in _DISPARITIES:
        raise ValueError(f"unknown disparity metric {metric!r}")
    return _DISPARITIES[metric](_ranking(data, groups), a, b, ties)


def multigroup_disparity(data, metric: str, groups=None,
                         ties: TiePolicy = TiePolicy.STRICT
                         ) -> tuple[MetricValue, tuple[str, str]]:
    """Max pairwise disparity over all unordered group pairs, with the argmax pair."""
    r = _ranking(data, groups)
    names = r.group_names
    if len(names) < 2:
        raise UndefinedMetricError("need at least two groups")
    best: MetricValue | None = None
    best_pair: tuple[str, str] | None = None
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            try:
                d = pairwise_disparity(r, metric, names[i], names[j], ties=ties)
            except UndefinedMetricError as exc:
                raise UndefinedMetricError(
                    f"pair ({names[i]!r}, {names[j]!r}): {exc}"
                ) from exc
            # exact integer comparison: d > best iff num*best.den > best.num*den
            if best is None or d.numerator * best.denominator > best.numerator * d.denominator:
                best, best_pair = d, (names[i], names[j])
    assert best is not None and best_pair is not None
    return best, best_pair


def xroc_curve(samples: Sequence[Sample], a: str, b: str) -> XrocCurve:
    """Step curve of (to-group negative rate above t, from-group positive rate
    above t) over all distinct score thresholds; trapezoid area matches
    xauc(a, b) (exactly so when scores are tie-free)."""
    pos_a = np.sort([s.score for s in samples if s.group == a and s.label == 1])
    neg_b = np.sort([s.score for s in samples if s.group == b and s.label == 0])
    if pos_a.size == 0:
        raise UndefinedMetricError(f"group {a!r} has no positives")
    if neg_b.size == 0:
        raise UndefinedMetricError(f"group {b!r} has no negatives")
    thresholds = np.unique([s.score for s in samples])[::-1]
    pts: list[tuple[float, float]] = [(0.0, 0.0)]
    for t in thresholds:
        x = (neg_b.size - np.searchsorted(neg_b, t, side="right")) / neg_b.size
        y = (pos_a.size - np.searchsorted(pos_a, t, side="right")) / pos_a.size
        if (x, y) != pts[-1]:
            pts.append((float(x), float(y)))
    if pts[-1] != (1.0, 1.0):
        pts.append((1.0, 1.0))
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    area = float(np.trapz(ys, xs))
    return XrocCurve(points=tuple(pts), area=area)


def dominance_report(samples: Sequence[Sample]) -> DominanceReport:
    """Pairwise rank-above probabilities (half credit on ties) and the
    dominance verdict: a group beating every other with probability > 1/2,
    a majority-edge cycle, or a tie."""
    r = Ranking.from_samples(samples)
    names = r.group_names
    if len(names) < 2:
        raise UndefinedMetricError("need at least two non-empty groups")
    g = len(names)
    prob = [[0.0] * g for _ in range(g)]
    beats = [[False] * g for _ in range(g)]
    for i in range(g):
        for j in range(g):
            if i == j:
                continue
            wins, ties_, total = r.pair_counts(r.group_codes == i, r.group_codes == j)
            prob[i][j] = (2 * wins + ties_) / (2 * total)
            beats[i][j] = 2 * wins + ties_ > total  # exact strict-majority test
    verdict = "tie"
    for i in range(g):
        if all(beats[i][j] for j in range(g) if j != i):
            verdict = f"dominant:{names[i]}"
            break
    else:
        if _has_cycle(beats):
            verdict = "cycle"
    return DominanceReport(
        groups=names,
        pairwise=tuple(tuple(row) for row in prob),
        verdict=verdict,
    )


def within_group_correct_pairs(seq: GroupedSequence) -> int:
    """Count of (positive above negative) pairs inside one descending sequence;
    constant across all legal interleavings."""
    wins = 0
    pos_seen = 0
    for item in seq.items:
        if item.label == 1:
            pos_seen += 1
        else:
            wins += pos_seen
    return wins


def _abs_gap(x: MetricValue, y: MetricValue) -> MetricValue:
    num = abs(x.numerator * y.denominator - y.numerator * x.denominator)
    den = x.denominator * y.denominator
    from math import gcd

    g = gcd(num, den) or 1
    return MetricValue((num // g) / (den // g), num // g, den // g)


def _has_cycle(beats: list[list[bool]]) -> bool:
    n = len(beats)
    state = [0] * n  # 0 unvisited, 1 on stack, 2 done

    def visit(u: int) -> bool:
        state[u] = 1
        for v in range(n):
            if beats[u][v]:
                if state[v] == 1:
                    return True
                if state[v] == 0 and visit(v):
                    return True
        state[u] = 2
        return False

    return any(state[u] == 0 and visit(u) for u in range(n))
