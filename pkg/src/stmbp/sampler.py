"""BP-range grouping, grouped k-fold splits and the balanced oversampling iterator.

Samples are bucketed into four BP groups. Each group is shuffled and dealt
round-robin into ``k`` small groups; fold ``c`` validates on small group ``c``
of every big group. Training batches draw an equal count from each group,
restarting (after a reshuffle) any group that runs out.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, DataError

N_GROUPS = 4


@dataclass(frozen=True)
class GroupBoundaries:
    sbp: tuple[float, float, float] = (110.0, 120.0, 140.0)
    dbp: tuple[float, float, float] = (70.0, 80.0, 90.0)

    def __post_init__(self):
        for name in ("sbp", "dbp"):
            b = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, b)
            if len(b) != N_GROUPS - 1 or any(x >= y for x, y in zip(b, b[1:])):
                raise ConfigError(f"{name} boundaries must be 3 strictly ascending values, got {b}")
            if b[0] < 40.0 or b[-1] > 250.0:
                raise ConfigError(f"{name} boundaries outside physiological range: {b}")

    def for_target(self, target: str) -> tuple[float, float, float]:
        return self.sbp if target.upper() == "SBP" else self.dbp


def assign_group(bp: float, bounds: Sequence[float]) -> int:
    """Group index 1..4 over (-inf, b1), [b1, b2), [b2, b3), [b3, inf)."""
    return bisect.bisect_right(list(bounds), bp) + 1


@dataclass
class FoldPlan:
    """``assignment[sample_id] = (group, small_group)``; groups 1..4, small groups 0..k-1."""

    k: int
    assignment: dict[str, tuple[int, int]]
    order: list[str] = field(default_factory=list)

    def validation_ids(self, c: int) -> list[str]:
        return [s for s in self.order if self.assignment[s][1] == c]

    def training_ids(self, c: int) -> list[str]:
        return [s for s in self.order if self.assignment[s][1] != c]

    def group_members(self, ids: Sequence[str]) -> list[list[str]]:
        groups: list[list[str]] = [[] for _ in range(N_GROUPS)]
        for s in ids:
            groups[self.assignment[s][0] - 1].append(s)
        return groups

    def to_text(self) -> str:
        lines = ["sample_id\tgroup\tsmall_group"]
        lines += [f"{s}\t{self.assignment[s][0]}\t{self.assignment[s][1]}" for s in self.order]
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


def make_folds(records: Sequence[tuple[str, int]], k: int = 5, seed: int = 0) -> FoldPlan:
    """Split ``(sample_id, group)`` records into ``k`` folds, balanced per group."""
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    ids = [r[0] for r in records]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate sample_id in fold records")
    members: list[list[str]] = [[] for _ in range(N_GROUPS)]
    for sid, g in records:
        if not 1 <= g <= N_GROUPS:
            raise DataError(f"group index {g} of {sid!r} outside 1..{N_GROUPS}")
        members[g - 1].append(sid)
    for g, m in enumerate(members, start=1):
        if len(m) < k:
            raise DataError(f"group G{g} has {len(m)} samples, fewer than k={k}")
    rng = np.random.default_rng(seed)
    assignment: dict[str, tuple[int, int]] = {}
    for g, m in enumerate(members, start=1):
        for i, j in enumerate(rng.permutation(len(m))):
            assignment[m[j]] = (g, i % k)
    return FoldPlan(k, assignment, list(ids))


def epoch_length(group_sizes: Sequence[int], batch_size: int) -> int:
    per = batch_size // N_GROUPS
    return math.ceil(max(group_sizes) / per)


def oversample_batches(
    train_groups: Sequence[Sequence], batch_size: int, seed: int = 0
) -> Iterator[list]:
    """One epoch of batches with ``batch_size / 4`` items from every group.

    Each group is read in order through a cursor; an exhausted group is
    reshuffled and read again from its start. The epoch ends once the largest
    group has been read through once.
    """
    if batch_size <= 0 or batch_size % N_GROUPS:
        raise ConfigError(f"batch_size must be a positive multiple of {N_GROUPS}, got {batch_size}")
    if len(train_groups) != N_GROUPS:
        raise DataError(f"expected {N_GROUPS} groups, got {len(train_groups)}")
    for g, members in enumerate(train_groups, start=1):
        if len(members) == 0:
            raise DataError(f"group G{g} is empty")
    per = batch_size // N_GROUPS
    rng = np.random.default_rng(seed)
    orders = [list(m) for m in train_groups]
    cursors = [0] * N_GROUPS
    for _ in range(epoch_length([len(m) for m in train_groups], batch_size)):
        batch = []
        for g in range(N_GROUPS):
            for _ in range(per):
                if cursors[g] == len(orders[g]):
                    orders[g] = [orders[g][i] for i in rng.permutation(len(orders[g]))]
                    cursors[g] = 0
                batch.append(orders[g][cursors[g]])
                cursors[g] += 1
        yield batch


def shuffled_batches(items: Sequence, batch_size: int, seed: int = 0) -> Iterator[list]:
    """Plain epoch: one pass over a shuffled copy, last batch may be short."""
    if batch_size <= 0:
        raise ConfigError(f"batch_size must be positive, got {batch_size}")
    rng = np.random.default_rng(seed)
    order = [items[i] for i in rng.permutation(len(items))]
    for start in range(0, len(order), batch_size):
        yield order[start : start + batch_size]
