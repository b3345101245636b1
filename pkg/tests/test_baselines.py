import itertools

import numpy as np
import pytest

from fsts import dtw as dtw_mod
from fsts.baselines import (
    DTW,
    EUCLIDEAN,
    DistanceKind,
    EqualLengthError,
    euclidean_distance,
    evaluate_baseline,
    one_nn_classify,
)
from fsts.data import Dataset, TimeSeries
from fsts.episodes import sample_task, task_seed


def brute_dtw(a, b):
    """Minimum L1 cost over every monotone alignment path, by explicit enumeration."""
    n, m = len(a), len(b)
    best = np.inf

    def walk(i, j, cost):
        nonlocal best
        cost += abs(a[i] - b[j])
        if cost >= best:
            return
        if (i, j) == (n - 1, m - 1):
            best = cost
            return
        if i + 1 < n:
            walk(i + 1, j, cost)
        if j + 1 < m:
            walk(i, j + 1, cost)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, cost)

    walk(0, 0, 0.0)
    return best


def banded_brute(a, b, w):
    """Same enumeration restricted to cells with |i - j| <= w."""
    n, m = len(a), len(b)
    best = np.inf

    def walk(i, j, cost):
        nonlocal best
        if abs(i - j) > w:
            return
        cost += abs(a[i] - b[j])
        if (i, j) == (n - 1, m - 1):
            best = min(best, cost)
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            if i + di < n and j + dj < m:
                walk(i + di, j + dj, cost)

    walk(0, 0, 0.0)
    return best


@pytest.fixture(params=sorted(dtw_mod.BACKENDS))
def backend(request):
    return request.param


def test_dtw_hand_example(backend):
    assert dtw_mod.dtw_distance([1, 2, 3], [1, 2, 2, 3], backend=backend) == 0.0
    assert dtw_mod.dtw_distance([0, 0], [1], backend=backend) == 2.0


def test_dtw_brute_force_small(backend):
    rng = np.random.default_rng(0)
    for _ in range(300):
        a = rng.integers(0, 3, rng.integers(1, 6)).astype(float)
        b = rng.integers(0, 3, rng.integers(1, 6)).astype(float)
        assert dtw_mod.dtw_distance(a, b, backend=backend) == brute_dtw(a, b)


def test_dtw_window_brute_force(backend):
    rng = np.random.default_rng(1)
    for _ in range(200):
        a = rng.normal(size=rng.integers(1, 7))
        b = rng.normal(size=rng.integers(1, 7))
        w = int(rng.integers(abs(len(a) - len(b)), 7))
        assert dtw_mod.dtw_distance(a, b, w, backend=backend) == pytest.approx(banded_brute(a, b, w), abs=1e-12)


def test_dtw_full_window_equals_unconstrained(backend):
    rng = np.random.default_rng(2)
    for _ in range(50):
        a, b = rng.normal(size=rng.integers(1, 30)), rng.normal(size=rng.integers(1, 30))
        assert dtw_mod.dtw_distance(a, b, max(len(a), len(b)), backend=backend) == dtw_mod.dtw_distance(a, b, backend=backend)


def test_dtw_symmetry_and_identity(backend):
    rng = np.random.default_rng(3)
    for _ in range(200):
        a, b = rng.normal(size=rng.integers(1, 40)), rng.normal(size=rng.integers(1, 40))
        assert dtw_mod.dtw_distance(a, b, backend=backend) == dtw_mod.dtw_distance(b, a, backend=backend)
        assert dtw_mod.dtw_distance(a, a, backend=backend) == 0.0


def test_dtw_bounded_by_diagonal(backend):
    rng = np.random.default_rng(4)
    for _ in range(100):
        a, b = rng.normal(size=20), rng.normal(size=20)
        assert dtw_mod.dtw_distance(a, b, backend=backend) <= np.abs(a - b).sum() + 1e-12


def test_dtw_errors(backend):
    with pytest.raises(ValueError, match="non-empty"):
        dtw_mod.dtw_distance([], [1.0], backend=backend)
    with pytest.raises(dtw_mod.WindowError):
        dtw_mod.dtw_distance([1, 2, 3, 4], [1], 2, backend=backend)
    with pytest.raises(dtw_mod.WindowError):
        dtw_mod.dtw_distance([1, 2], [1, 2], -1, backend=backend)


def test_backends_agree_on_matrix():
    if "cython" not in dtw_mod.BACKENDS:
        pytest.skip("compiled extension not built")
    rng = np.random.default_rng(5)
    q, s = rng.normal(size=(4, 25)), rng.normal(size=(6, 25))
    ql, sl = rng.integers(1, 26, 4), rng.integers(1, 26, 6)
    a = dtw_mod.dtw_matrix(q, ql, s, sl, backend="cython")
    b = dtw_mod.dtw_matrix(q, ql, s, sl, backend="python")
    assert np.allclose(a, b, rtol=0, atol=1e-12)
    for i, j in itertools.product(range(4), range(6)):
        assert a[i, j] == dtw_mod.dtw_distance(q[i, : ql[i]], s[j, : sl[j]])


# euclidean / 1-NN --------------------------------------------------------

def test_euclidean_examples():
    assert euclidean_distance([0, 0], [3, 4]) == 5.0
    x = np.random.default_rng(0).normal(size=10)
    assert euclidean_distance(x, x) == 0.0
    y = np.random.default_rng(1).normal(size=10)
    assert euclidean_distance(x, y) == euclidean_distance(y, x)
    with pytest.raises(EqualLengthError):
        euclidean_distance([1, 2], [1, 2, 3])


def test_distance_kind_validation():
    with pytest.raises(ValueError):
        DistanceKind("manhattan")
    with pytest.raises(ValueError):
        DistanceKind("euclidean", window=3)
    assert DistanceKind("dtw", 4).label == "DTW" and EUCLIDEAN.label == "ED"


def test_one_nn_rules():
    assert one_nn_classify([[5.0, 5.0]], ["only"], [0.0, 0.0]) == "only"
    sup = [[0.0, 0.0], [1.0, 1.0], [1.0, 1.0]]
    assert one_nn_classify(sup, ["a", "b", "c"], [1.0, 1.0]) == "b"
    # equidistant from both: tie goes to the lower index
    assert one_nn_classify([[0.0], [2.0]], ["lo", "hi"], [1.0]) == "lo"
    assert one_nn_classify([[0.0, 1.0], [1.0, 2.0, 3.0]], ["x", "y"], [1.0, 2.0, 3.0], DTW) == "y"


def test_one_nn_monotone_transform_invariant():
    rng = np.random.default_rng(6)
    for _ in range(100):
        sup = rng.normal(size=(7, 12))
        labels = rng.integers(0, 3, 7)
        q = rng.normal(size=12)
        d = np.array([euclidean_distance(s, q) for s in sup])
        assert one_nn_classify(sup, labels, q) == labels[np.argmin(d ** 2)]


def _ragged_dataset(per_class=8, n_classes=3, seed=0):
    rng = np.random.default_rng(seed)
    series, L = [], 20
    for c in range(n_classes):
        for _ in range(per_class):
            n = int(rng.integers(10, L + 1))
            v = (np.sin(np.linspace(0, (c + 1) * np.pi, n)) + rng.normal(0, 0.05, n)).astype(np.float32)
            series.append(TimeSeries(v, n, c))
    return Dataset("ragged", "test", series, [str(c) for c in range(n_classes)])


def test_baseline_same_tasks_as_scnn_sampler():
    ds = _ragged_dataset()
    seen = []

    def spy(task):
        seen.append(task.support.copy())
        return task.query_targets

    from fsts.episodes import run_episodes
    run_episodes(spy, ds, 3, 2, 3, 3, 11, "X")
    for t, sup in enumerate(seen):
        assert np.array_equal(sup, sample_task(ds, 3, 2, 3, task_seed(11, 3, 2, 3, t)).support)


def test_baseline_dtw_uses_prefixes_and_beats_chance():
    ds = _ragged_dataset()
    res = evaluate_baseline(ds, DTW, n_way=3, k_shot=1, q_queries=4, n_tasks=5, seed=0)
    assert res.model == "DTW" and len(res.per_task) == 5
    assert res.mean.accuracy > 0.8


def test_baseline_dtw_matches_naive_one_nn():
    ds = _ragged_dataset(seed=3)
    res = evaluate_baseline(ds, DTW, 3, 2, 3, 2, seed=5)
    for t in range(2):
        task = sample_task(ds, 3, 2, 3, task_seed(5, 3, 2, 3, t))
        sup = [ds.series[i] for i in task.support.ravel()]
        sup_vals = [s.values[: s.original_length] for s in sup]
        pos = np.repeat(np.arange(3), 2)
        preds = [one_nn_classify(sup_vals, pos, ds.series[i].values[: ds.series[i].original_length], DTW)
                 for i in task.query.ravel()]
        assert np.trace(res.per_task[t].confusion) == int(np.sum(np.array(preds) == task.query_targets))


def test_baseline_ed_rejects_ragged():
    with pytest.raises(EqualLengthError, match="equal-length"):
        evaluate_baseline(_ragged_dataset(), EUCLIDEAN, 3, 1, 2, 1)


def test_baseline_ed_on_padded_data():
    from fsts.data import prepare
    ds = prepare(_ragged_dataset(), l_max=20)
    res = evaluate_baseline(ds, EUCLIDEAN, 3, 2, 3, 3, seed=0)
    assert res.model == "ED" and 0.0 <= res.mean.accuracy <= 1.0
