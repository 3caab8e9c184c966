"""Adjacent-block partitions and the reverse cross-fitting / neighbours-left-out fold plans.

Indices are 0-based and ranges half-open: a block ``(start, stop)`` covers
``start, ..., stop - 1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

__all__ = [
    "BlockPartition",
    "Direction",
    "Fold",
    "FoldError",
    "FoldPlan",
    "Scheme",
    "make_plan",
    "nlo_plan",
    "partition",
    "rcf_plan",
    "sample_usage",
]

Range = tuple[int, int]


class FoldError(ValueError):
    pass


class Scheme(str, Enum):
    RCF = "rcf"
    NLO = "nlo"


class Direction(str, Enum):
    FORWARD = "forward"    # training data lie before the main block
    REVERSED = "reversed"  # training data lie after the main block
    BOTH = "both"


@dataclass(frozen=True)
class BlockPartition:
    T: int
    K: int
    blocks: tuple[Range, ...]

    def sizes(self) -> tuple[int, ...]:
        return tuple(b - a for a, b in self.blocks)


@dataclass(frozen=True)
class Fold:
    main: Range
    auxiliary: tuple[Range, ...]
    direction: Direction

    @property
    def n_aux(self) -> int:
        return sum(b - a for a, b in self.auxiliary)

    def main_index(self) -> np.ndarray:
        return np.arange(*self.main)

    def aux_index(self) -> np.ndarray:
        """Auxiliary row indices in the order used for training.

        Reversed folds present their training rows in reverse time order.
        """
        idx = np.concatenate([np.arange(a, b) for a, b in self.auxiliary]) if self.auxiliary else np.arange(0)
        return idx[::-1].copy() if self.direction is Direction.REVERSED else idx


@dataclass(frozen=True)
class FoldPlan:
    scheme: Scheme
    T: int
    folds: tuple[Fold, ...]

    @property
    def K(self) -> int:
        return len(self.folds)

    def fold_of_t(self) -> np.ndarray:
        out = np.full(self.T, -1, dtype=np.int64)
        for k, f in enumerate(self.folds):
            out[f.main[0]:f.main[1]] = k
        return out

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "T": self.T,
            "folds": [
                {"main": list(f.main), "auxiliary": [list(r) for r in f.auxiliary], "direction": f.direction.value}
                for f in self.folds
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "FoldPlan":
        folds = tuple(
            Fold(tuple(f["main"]), tuple(tuple(r) for r in f["auxiliary"]), Direction(f["direction"]))
            for f in d["folds"]
        )
        return cls(Scheme(d["scheme"]), int(d["T"]), folds)


def partition(T: int, K: int) -> BlockPartition:
    """Split ``range(T)`` into ``K`` contiguous blocks; the first ``T % K`` get one extra row."""
    if K < 2:
        raise FoldError(f"need K >= 2 folds, got {K}")
    if K > T:
        raise FoldError(f"cannot split T={T} observations into K={K} blocks")
    base, extra = divmod(T, K)
    blocks, start = [], 0
    for k in range(K):
        stop = start + base + (1 if k < extra else 0)
        blocks.append((start, stop))
        start = stop
    return BlockPartition(T, K, tuple(blocks))


def rcf_plan(part: BlockPartition) -> FoldPlan:
    """Reverse cross-fitting: train on the larger side of each main block, or both if tied."""
    T = part.T
    folds = []
    for a, b in part.blocks:
        left, right = a, T - b
        if left > right:
            folds.append(Fold((a, b), ((0, a),), Direction.FORWARD))
        elif right > left:
            folds.append(Fold((a, b), ((b, T),), Direction.REVERSED))
        else:
            folds.append(Fold((a, b), ((0, a), (b, T)), Direction.BOTH))
    return FoldPlan(Scheme.RCF, T, tuple(folds))


def nlo_plan(part: BlockPartition) -> FoldPlan:
    """Neighbours-left-out: drop the main block and its adjacent block(s)."""
    K, blocks = part.K, part.blocks
    folds = []
    for k in range(K):
        keep = [blocks[i] for i in range(K) if abs(i - k) > 1]
        if not keep:
            raise FoldError(f"NLO with K={K} leaves fold {k + 1} without auxiliary data")
        # merge touching ranges
        merged: list[list[int]] = []
        for lo, hi in keep:
            if merged and merged[-1][1] == lo:
                merged[-1][1] = hi
            else:
                merged.append([lo, hi])
        folds.append(Fold(blocks[k], tuple((lo, hi) for lo, hi in merged), Direction.BOTH))
    return FoldPlan(Scheme.NLO, part.T, tuple(folds))


def make_plan(T: int, K: int, scheme: Scheme | str) -> FoldPlan:
    part = partition(T, K)
    return rcf_plan(part) if Scheme(scheme) is Scheme.RCF else nlo_plan(part)


def sample_usage(plan: FoldPlan) -> Fraction:
    """Mean share of the sample used for training across folds (exact)."""
    return sum((Fraction(f.n_aux, plan.T) for f in plan.folds), Fraction(0)) / plan.K
