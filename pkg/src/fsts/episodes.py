"""N-way K-shot task sampling, prototype-based adaptation and macro metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .seeding import derive_seed

METRIC_NAMES = ("accuracy", "macro_precision", "macro_recall", "macro_f1")


class ClassTooSmallError(ValueError):
    pass


@dataclass(frozen=True)
class FewShotTask:
    n_way: int
    k_shot: int
    q_queries: int
    class_ids: np.ndarray  # (n_way,) dataset labels, ascending
    support: np.ndarray  # (n_way, k_shot) dataset indices
    query: np.ndarray  # (n_way, q_queries) dataset indices
    seed: int

    @property
    def query_targets(self) -> np.ndarray:
        """Class position (0..n_way-1) of every query in ``query.ravel()`` order."""
        return np.repeat(np.arange(self.n_way), self.q_queries)


def task_seed(master: int, n_way: int, k_shot: int, q_queries: int, index: int) -> int:
    return derive_seed(master, "task", n_way, k_shot, q_queries, index)


def sample_task(dataset: Dataset, n_way: int, k_shot: int, q_queries: int, seed: int) -> FewShotTask:
    """Draw ``k_shot`` support and ``q_queries`` disjoint query members per class.

    When the dataset has more than ``n_way`` classes, ``n_way`` of them are
    chosen uniformly first.
    """
    if min(n_way, k_shot, q_queries) < 1:
        raise ValueError("n_way, k_shot and q_queries must be positive")
    rng = np.random.default_rng(seed)
    members = {c: m for c, m in dataset.class_members().items() if len(m)}
    available = np.array(sorted(members))
    if n_way > len(available):
        raise ClassTooSmallError(f"{dataset.name}: {n_way}-way tasks need {n_way} classes, found {len(available)}")
    classes = available if n_way == len(available) else np.sort(rng.choice(available, n_way, replace=False))
    need = k_shot + q_queries
    for c in classes:
        if len(members[c]) < need:
            raise ClassTooSmallError(
                f"{dataset.name}: class {dataset.label_names[c]!r} has {len(members[c])} series, "
                f"K={k_shot} plus {q_queries} queries needs {need}")
    support = np.empty((n_way, k_shot), np.int64)
    query = np.empty((n_way, q_queries), np.int64)
    for i, c in enumerate(classes):
        picked = rng.choice(members[c], need, replace=False)
        support[i], query[i] = picked[:k_shot], picked[k_shot:]
    return FewShotTask(n_way, k_shot, q_queries, classes, support, query, seed)


@dataclass
class TaskMetrics:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: np.ndarray = field(repr=False)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in METRIC_NAMES}


def confusion_matrix(targets, predictions, n: int) -> np.ndarray:
    """Counts with true class on rows and predicted class on columns."""
    cm = np.zeros((n, n), dtype=np.int64)
    np.add.at(cm, (np.asarray(targets), np.asarray(predictions)), 1)
    return cm


def _safe_div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den != 0)


def macro_metrics(confusion) -> TaskMetrics:
    """Accuracy and unweighted class means of precision, recall and F1 (0/0 counts as 0)."""
    cm = np.asarray(confusion)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError(f"confusion matrix must be square, got shape {cm.shape}")
    tp = np.diag(cm).astype(np.float64)
    precision = _safe_div(tp, cm.sum(axis=0))
    recall = _safe_div(tp, cm.sum(axis=1))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    total = cm.sum()
    acc = float(tp.sum() / total) if total else 0.0
    return TaskMetrics(acc, float(precision.mean()), float(recall.mean()), float(f1.mean()), cm)


def mean_metrics(per_task: list[TaskMetrics]) -> TaskMetrics:
    if not per_task:
        raise ValueError("no task metrics to average")
    vals = {k: float(np.mean([getattr(m, k) for m in per_task])) for k in METRIC_NAMES}
    return TaskMetrics(**vals, confusion=sum(m.confusion for m in per_task))


def argmax_lowest(scores) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest column."""
    return np.argmax(np.asarray(scores), axis=1)


def class_prototypes(support_embeddings: np.ndarray) -> np.ndarray:
    """Mean over the shot axis of ``(n_way, k_shot, dim)`` embeddings."""
    return support_embeddings.mean(axis=1)


def prototype_scores(model, prototypes, query_embeddings) -> np.ndarray:
    """``(n_queries, n_way)`` similarity of every query to every class prototype."""
    nq, n = len(query_embeddings), len(prototypes)
    a = np.repeat(query_embeddings, n, axis=0)
    b = np.tile(prototypes, (nq, 1))
    return np.asarray(model.similarity(a, b)).reshape(nq, n)


def adapt_and_predict(model, dataset: Dataset, task: FewShotTask, values: np.ndarray | None = None) -> np.ndarray:
    """Predicted class position for each query, ordered like ``task.query.ravel()``."""
    if values is None:
        values = dataset.matrix(model.dtype)
    n, k = task.support.shape
    sup = model.embed(values[task.support.ravel()], train=False)
    protos = class_prototypes(sup.reshape(n, k, -1))
    queries = model.embed(values[task.query.ravel()], train=False)
    return argmax_lowest(prototype_scores(model, protos, queries))


@dataclass
class EvalResult:
    model: str
    n_way: int
    k_shot: int
    q_queries: int
    mean: TaskMetrics
    per_task: list[TaskMetrics]


def run_episodes(predict, dataset: Dataset, n_way: int, k_shot: int, q_queries: int, n_tasks: int,
                 seed: int, model_name: str) -> EvalResult:
    """Evaluate ``predict(task) -> class positions`` on ``n_tasks`` independently seeded tasks."""
    if n_tasks < 1:
        raise ValueError("n_tasks must be >= 1")
    per_task = []
    for t in range(n_tasks):
        task = sample_task(dataset, n_way, k_shot, q_queries, task_seed(seed, n_way, k_shot, q_queries, t))
        pred = predict(task)
        per_task.append(macro_metrics(confusion_matrix(task.query_targets, pred, n_way)))
    return EvalResult(model_name, n_way, k_shot, q_queries, mean_metrics(per_task), per_task)


def evaluate(model, dataset: Dataset, n_way: int = 5, k_shot: int = 5, q_queries: int = 20,
             n_tasks: int = 20, seed: int = 0) -> EvalResult:
    values = dataset.matrix(model.dtype)
    if values.shape[1] != model.config.input_length:
        raise ValueError(f"series length {values.shape[1]} does not match model input {model.config.input_length}")
    return run_episodes(lambda task: adapt_and_predict(model, dataset, task, values),
                        dataset, n_way, k_shot, q_queries, n_tasks, seed, "SCNN")


# result files ---------------------------------------------------------------

RESULT_FIELDS = ("model", "n_way", "k_shot", "task_index") + METRIC_NAMES


def result_rows(results: list[EvalResult]) -> list[dict]:
    """Per-task rows followed by one ``task_index == "mean"`` row per result."""
    rows = []
    for r in results:
        base = {"model": r.model, "n_way": r.n_way, "k_shot": r.k_shot}
        for i, m in enumerate(r.per_task):
            rows.append({**base, "task_index": i, **m.as_dict()})
    for r in results:
        rows.append({"model": r.model, "n_way": r.n_way, "k_shot": r.k_shot, "task_index": "mean",
                     **r.mean.as_dict()})
    return rows


def write_results_csv(results: list[EvalResult], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
        w.writeheader()
        for row in result_rows(results):
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})


def write_summary_csv(results: list[EvalResult], path) -> None:
    """One row per (model, K), with the mean of each metric."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["K", "model", "accuracy", "precision", "recall", "f1"])
        for r in results:
            m = r.mean
            w.writerow([r.k_shot, r.model, f"{m.accuracy:.4f}", f"{m.macro_precision:.3f}",
                        f"{m.macro_recall:.3f}", f"{m.macro_f1:.3f}"])


def format_summary(results: list[EvalResult]) -> str:
    lines = [f"{'K':>3}  {'model':<5}  {'acc':>6}  {'prec':>5}  {'rec':>5}  {'f1':>5}"]
    for r in results:
        m = r.mean
        lines.append(f"{r.k_shot:>3}  {r.model:<5}  {m.accuracy:.4f}  {m.macro_precision:.3f}  "
                     f"{m.macro_recall:.3f}  {m.macro_f1:.3f}")
    return "\n".join(lines)
