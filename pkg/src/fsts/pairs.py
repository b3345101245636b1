"""Balanced same/different-label pair generation for Siamese pretraining."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .seeding import derive_seed, rng_for

DEFAULT_CAP = 10_000


@dataclass(frozen=True)
class PairSet:
    """Index pairs into one dataset, with label 1 for same class and 0 otherwise."""

    source: str
    index_a: np.ndarray
    index_b: np.ndarray
    label: np.ndarray
    seed: int

    def __len__(self):
        return len(self.label)

    def __iter__(self):
        return iter(zip(self.index_a.tolist(), self.index_b.tolist(), self.label.tolist()))


def unrank_combinations(ranks: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Map lexicographic ranks of 2-subsets of ``range(n)`` to ``(i, j)`` with ``i < j``."""
    r = np.asarray(ranks, dtype=np.int64)
    # rows before row i hold start(i) = i*n - i*(i+1)/2 combinations
    disc = (2 * n - 1) ** 2 - 8 * r
    i = np.floor(((2 * n - 1) - np.sqrt(disc.astype(np.float64))) / 2).astype(np.int64)
    start = lambda k: k * n - k * (k + 1) // 2
    # float sqrt may be off by one near row boundaries
    i = np.where(start(i + 1) <= r, i + 1, i)
    i = np.where(start(i) > r, i - 1, i)
    j = r - start(i) + i + 1
    return i, j


def _same_label_pairs(members: np.ndarray, cap: int | None, rng: np.random.Generator):
    n = len(members)
    total = n * (n - 1) // 2
    if cap is None or total <= cap:
        ranks = np.arange(total, dtype=np.int64)
    else:
        ranks = np.sort(rng.choice(total, size=cap, replace=False))
    i, j = unrank_combinations(ranks, n)
    return members[i], members[j]


def generate_pairs(dataset: Dataset, cap_per_class: int | None = DEFAULT_CAP, seed: int = 0) -> PairSet:
    """Per class with ``n`` members: ``p = min(n(n-1)/2, cap)`` same-label pairs
    drawn from distinct combinations, plus ``p`` different-label pairs that match
    a uniformly drawn member with a uniformly drawn non-member (with replacement).
    """
    if cap_per_class is not None and cap_per_class < 1:
        raise ValueError("cap_per_class must be positive")
    labels = dataset.labels
    present = np.unique(labels)
    if len(present) < 2:
        raise ValueError(f"{dataset.name}: need at least two classes to form different-label pairs")
    a_parts, b_parts, y_parts = [], [], []
    for c in present.tolist():
        members = np.flatnonzero(labels == c)
        others = np.flatnonzero(labels != c)
        if len(members) < 2:
            continue
        rng = rng_for(seed, "pairs", dataset.name, c)
        sa, sb = _same_label_pairs(members, cap_per_class, rng)
        p = len(sa)
        da = members[rng.integers(0, len(members), p)]
        db = others[rng.integers(0, len(others), p)]
        a_parts += [sa, da]
        b_parts += [sb, db]
        y_parts += [np.ones(p, np.int8), np.zeros(p, np.int8)]
    cat = lambda parts, dt: np.concatenate(parts).astype(dt) if parts else np.zeros(0, dt)
    return PairSet(dataset.name, cat(a_parts, np.int64), cat(b_parts, np.int64), cat(y_parts, np.int8), seed)


def merge_pairsets(pairsets: list[PairSet], offsets, source: str) -> PairSet:
    """Combine per-dataset pair sets after their datasets were concatenated at ``offsets``."""
    return PairSet(
        source,
        np.concatenate([p.index_a + o for p, o in zip(pairsets, offsets)]),
        np.concatenate([p.index_b + o for p, o in zip(pairsets, offsets)]),
        np.concatenate([p.label for p in pairsets]),
        pairsets[0].seed if pairsets else 0,
    )


def batch_pairs(pairset: PairSet, values: np.ndarray, batch_size: int, seed: int, epoch: int = 0):
    """Yield ``((x_a, x_b), y)`` batches in an epoch-specific shuffled order.

    ``values`` is the padded ``(M, L)`` matrix the pair indices refer to.  The
    last batch may be short.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if len(pairset) == 0:
        raise ValueError("cannot batch an empty pair set")
    order = np.random.default_rng(derive_seed(seed, "epoch", epoch)).permutation(len(pairset))
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        yield (values[pairset.index_a[idx]], values[pairset.index_b[idx]]), pairset.label[idx]


def write_pairs_csv(pairset: PairSet, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index_a", "index_b", "label"])
        w.writerows(pairset)


def read_pairs_csv(path, source: str = "", seed: int = 0) -> PairSet:
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    return PairSet(
        source,
        np.array([int(r["index_a"]) for r in rows], dtype=np.int64),
        np.array([int(r["index_b"]) for r in rows], dtype=np.int64),
        np.array([int(r["label"]) for r in rows], dtype=np.int8),
        seed,
    )
