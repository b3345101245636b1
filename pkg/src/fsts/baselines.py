"""1-NN classifiers under Euclidean and DTW distance on the shared episodic protocol.

DTW compares the unpadded prefixes (``original_length``) while ED compares the
padded, equal-length vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .dtw import dtw_distance, dtw_matrix
from .episodes import EvalResult, FewShotTask, run_episodes


class EqualLengthError(ValueError):
    """Euclidean distance was asked to compare series of different lengths."""


@dataclass(frozen=True)
class DistanceKind:
    kind: str = "euclidean"  # "euclidean" | "dtw"
    window: int | None = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "dtw"):
            raise ValueError(f"unknown distance {self.kind!r}")
        if self.kind == "euclidean" and self.window is not None:
            raise ValueError("a warping window only applies to dtw")

    @property
    def label(self) -> str:
        return "ED" if self.kind == "euclidean" else "DTW"


EUCLIDEAN = DistanceKind("euclidean")
DTW = DistanceKind("dtw")


def euclidean_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise EqualLengthError(f"euclidean distance needs equal-length series, got {len(a)} and {len(b)}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def distance(a, b, kind: DistanceKind = EUCLIDEAN) -> float:
    if kind.kind == "euclidean":
        return euclidean_distance(a, b)
    return dtw_distance(a, b, kind.window)


def one_nn_classify(support, support_labels, query, kind: DistanceKind = EUCLIDEAN):
    """Label of the closest support series; ties go to the lowest support index."""
    if len(support) == 0:
        raise ValueError("support set is empty")
    d = np.array([distance(s, query, kind) for s in support])
    return support_labels[int(np.argmin(d))]


def _ragged(dataset: Dataset):
    lengths = dataset.lengths
    out = np.zeros((len(dataset), int(lengths.max(initial=0))))
    for i, s in enumerate(dataset.series):
        out[i, : s.original_length] = np.asarray(s.values[: s.original_length], dtype=np.float64)
    return out, lengths


def euclidean_matrix(queries: np.ndarray, supports: np.ndarray) -> np.ndarray:
    diff = queries[:, None, :] - supports[None, :, :]
    return np.sqrt(np.einsum("qst,qst->qs", diff, diff))


def evaluate_baseline(dataset: Dataset, kind: DistanceKind, n_way: int = 5, k_shot: int = 5,
                      q_queries: int = 20, n_tasks: int = 20, seed: int = 0) -> EvalResult:
    """1-NN over the whole N*K support set, on exactly the tasks ``episodes.evaluate`` samples."""
    if kind.kind == "euclidean":
        if not dataset.is_padded:
            raise EqualLengthError(
                f"{dataset.name}: euclidean 1-NN needs equal-length series; pad the dataset first")
        values = dataset.matrix(np.float64)

        def dist(q_idx, s_idx):
            return euclidean_matrix(values[q_idx], values[s_idx])
    else:
        values, lengths = _ragged(dataset)

        def dist(q_idx, s_idx):
            return dtw_matrix(values[q_idx], lengths[q_idx], values[s_idx], lengths[s_idx], kind.window)

    def predict(task: FewShotTask):
        support_pos = np.repeat(np.arange(task.n_way), task.k_shot)
        d = dist(task.query.ravel(), task.support.ravel())
        return support_pos[np.argmin(d, axis=1)]

    return run_episodes(predict, dataset, n_way, k_shot, q_queries, n_tasks, seed, kind.label)
