"""Core data model: scored samples, per-group sorted sequences, and cross-group orderings.

A cross-group ordering is a merged total order over all samples that keeps
each group's internal descending-score order intact. Everything downstream
(metrics, the ordering optimizer, score transfer) consumes these types.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class InputError(ValueError):
    """Malformed or out-of-contract input data."""


class UndefinedMetricError(ValueError):
    """A pair statistic has an empty denominator (no pairs to count)."""


class ResourceBudgetError(RuntimeError):
    """A computation would exceed its configured memory or enumeration budget."""


class TiePolicy(enum.Enum):
    """How equal raw scores contribute to pair statistics.

    STRICT counts only strict wins (a tie earns nothing); HALF gives ties
    half credit. Orderings are total, so the policy only matters for
    metrics computed directly from raw scores.
    """

    STRICT = "strict"
    HALF = "half"


@dataclass(frozen=True)
class Sample:
    """One scored, labeled, group-tagged record.

    ``row`` is the position of the record in its source table and is the
    deterministic tie-break key for equal scores. Loaders set it; when it is
    negative, ``sort_into_groups`` fills it from input position.
    """

    id: str
    score: float
    label: int
    group: str
    row: int = -1

    def __post_init__(self) -> None:
        if not math.isfinite(self.score) or not (0.0 <= self.score <= 1.0):
            raise InputError(
                f"sample {self.id!r} (row {self.row}): score {self.score!r} "
                "is not a finite value in [0, 1]"
            )
        if self.label not in (0, 1):
            raise InputError(
                f"sample {self.id!r} (row {self.row}): label {self.label!r} is not 0 or 1"
            )


@dataclass(frozen=True)
class GroupedSequence:
    """One group's samples in descending score order (ties by ascending row)."""

    group: str
    items: tuple[Sample, ...]

    @property
    def n(self) -> int:
        return len(self.items)

    @property
    def n_pos(self) -> int:
        return sum(s.label for s in self.items)

    @property
    def n_neg(self) -> int:
        return self.n - self.n_pos

    def __post_init__(self) -> None:
        for earlier, later in zip(self.items, self.items[1:]):
            if earlier.score < later.score:
                raise InputError(
                    f"group {self.group!r}: items not in descending score order"
                )


@dataclass(frozen=True)
class CrossGroupOrdering:
    """A merged total order over all samples, top rank first.

    ``entries`` holds (group, within-group position) pairs with positions
    1-based; each group's positions must appear in increasing order, which
    is exactly the within-group order-preservation constraint.
    """

    entries: tuple[tuple[str, int], ...]
    provenance: str = "unspecified"


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violation: str | None = None


def sort_into_groups(samples: Sequence[Sample]) -> list[GroupedSequence]:
    """Split samples by group token and sort each group by descending score.

    Groups come back in first-appearance order. Equal scores are ordered by
    ascending row index, so the result is a pure function of the input.
    """
    if not samples:
        raise InputError("no samples given")
    filled = [
        s if s.row >= 0 else Sample(s.id, s.score, s.label, s.group, row=i)
        for i, s in enumerate(samples)
    ]
    by_group: dict[str, list[Sample]] = {}
    for s in filled:
        by_group.setdefault(s.group, []).append(s)
    out = []
    for group, members in by_group.items():
        members.sort(key=lambda s: (-s.score, s.row))
        out.append(GroupedSequence(group=group, items=tuple(members)))
    return out


def ordering_from_scores(groups: Sequence[GroupedSequence]) -> CrossGroupOrdering:
    """The global descending-score merge of all groups (the unadjusted ranking)."""
    tagged = [
        (item, g.group, pos + 1)
        for g in groups
        for pos, item in enumerate(g.items)
    ]
    tagged.sort(key=lambda t: (-t[0].score, t[0].row))
    return CrossGroupOrdering(
        entries=tuple((group, pos) for _, group, pos in tagged),
        provenance="score-induced",
    )


def validate_ordering(
    ordering: CrossGroupOrdering, groups: Sequence[GroupedSequence]
) -> ValidationReport:
    """Check that an ordering is a legal interleaving of the given groups.

    Violations (missing entry, duplicate, within-group inversion) are report
    content, not exceptions.
    """
    expected = {g.group: g.n for g in groups}
    seen: dict[str, set[int]] = {g.group: set() for g in groups}
    last: dict[str, int] = {g.group: 0 for g in groups}
    for idx, (group, pos) in enumerate(ordering.entries):
        if group not in expected:
            return ValidationReport(False, f"entry {idx}: unknown group {group!r}")
        if not (1 <= pos <= expected[group]):
            return ValidationReport(
                False,
                f"entry {idx}: position {pos} outside 1..{expected[group]} for group {group!r}",
            )
        if pos in seen[group]:
            return ValidationReport(
                False, f"entry {idx}: duplicate group {group!r} position {pos}"
            )
        if pos < last[group]:
            return ValidationReport(
                False,
                f"entry {idx}: group {group!r} inversion, position {pos} after {last[group]}",
            )
        seen[group].add(pos)
        last[group] = pos
    for group, positions in seen.items():
        if len(positions) != expected[group]:
            missing = min(set(range(1, expected[group] + 1)) - positions)
            return ValidationReport(
                False, f"missing group {group!r} position {missing}"
            )
    return ValidationReport(True)


def items_in_order(
    ordering: CrossGroupOrdering, groups: Sequence[GroupedSequence]
) -> list[Sample]:
    """Materialize the ordering's samples, top rank first."""
    by_group = {g.group: g for g in groups}
    return [by_group[group].items[pos - 1] for group, pos in ordering.entries]
