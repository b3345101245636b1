"""Self-checks behind ``fsts verify``: gradients, DTW against a recursive oracle, pair balance.

Every check reports the largest error it observed next to its tolerance.
"""

from __future__ import annotations

import itertools
import sys
from dataclasses import dataclass

import numpy as np

from . import neural as nn
from .data import Dataset, TimeSeries
from .dtw import dtw_distance, dtw_matrix
from .gradcheck import near_kink, numeric_grad, rel_error
from .pairs import generate_pairs
from .siamese import EmbeddingConfig, SiameseNet

OP_TOL = 1e-6
NET_TOL = 1e-5
DTW_ALPHABET = (0, 1, 2)
DTW_MAX_LEN = 6

FULL_STEPS = ((1, 0), (0, 1), (1, 1))
CORRUPT_STEPS = ((1, 0), (0, 1))  # diagonal move missing


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"{status}  {self.name:<28} max_err={self.max_error:.3e}  tol={self.tolerance:.0e}{extra}"


# gradients ----------------------------------------------------------------

def _linear_probe(rng, shape):
    return rng.standard_normal(shape)


def _op_cases(rng):
    """Yield ``(name, analytic_grads, loss_fn, inputs)`` for every differentiable op."""
    x, w, b = rng.standard_normal((5, 2)), rng.standard_normal((3, 2, 3)), rng.standard_normal(3)
    R = _linear_probe(rng, (5, 3))
    yield ("conv1d", nn.conv1d_backward(R, x, w),
           lambda: float((nn.conv1d_forward(x, w, b) * R).sum()), (x, w, b))

    for train in (True, False):
        xb = rng.standard_normal((3, 4, 2))
        g, be = rng.standard_normal(2), rng.standard_normal(2)
        rm0, rv0 = rng.standard_normal(2), rng.random(2) + 0.5
        Rb = _linear_probe(rng, xb.shape)

        def f(xb=xb, g=g, be=be, rm0=rm0, rv0=rv0, Rb=Rb, train=train):
            out, _ = nn.batchnorm1d_forward(xb, g, be, rm0.copy(), rv0.copy(), train=train)
            return float((out * Rb).sum())

        _, cache = nn.batchnorm1d_forward(xb, g, be, rm0.copy(), rv0.copy(), train=train)
        yield (f"batchnorm1d[{'train' if train else 'infer'}]", nn.batchnorm1d_backward(Rb, cache, g), f, (xb, g, be))

    xp = rng.standard_normal((2, 11, 3))
    Rp = _linear_probe(rng, (2, 3, 3))
    _, cache = nn.maxpool1d_forward(xp, 3)
    yield ("maxpool1d", (nn.maxpool1d_backward(Rp, cache),),
           lambda: float((nn.maxpool1d_forward(xp, 3)[0] * Rp).sum()), (xp,))

    xd = rng.standard_normal(20)
    Rd = _linear_probe(rng, 20)
    _, mask = nn.dropout_forward(xd, 0.4, True, np.random.default_rng(5))
    yield ("dropout", (nn.dropout_backward(Rd, mask),),
           lambda: float((nn.dropout_forward(xd, 0.4, True, np.random.default_rng(5))[0] * Rd).sum()), (xd,))

    xr, Rr = rng.standard_normal(30), _linear_probe(rng, 30)
    yield ("relu", (nn.relu_backward(Rr, nn.relu_forward(xr)[1]),),
           lambda: float((nn.relu_forward(xr)[0] * Rr).sum()), (xr,))

    xs, Rs = rng.standard_normal(30) * 3, _linear_probe(rng, 30)
    yield ("sigmoid", (nn.sigmoid_backward(Rs, nn.sigmoid(xs)),),
           lambda: float((nn.sigmoid(xs) * Rs).sum()), (xs,))

    a, c, Ra = rng.standard_normal(30), rng.standard_normal(30), _linear_probe(rng, 30)
    yield ("abs_diff", nn.abs_diff_backward(Ra, nn.abs_diff_forward(a, c)[1]),
           lambda: float((nn.abs_diff_forward(a, c)[0] * Ra).sum()), (a, c))

    xl, wl, bl = rng.standard_normal((4, 6)), rng.standard_normal((6, 2)), rng.standard_normal(2)
    Rl = _linear_probe(rng, (4, 2))
    yield ("dense", nn.dense_backward(Rl, xl, wl),
           lambda: float((nn.dense_forward(xl, wl, bl)[0] * Rl).sum()), (xl, wl, bl))

    p, y = rng.uniform(0.05, 0.95, 8), rng.integers(0, 2, 8)
    yield ("bce", (nn.bce_loss(p, y)[1],), lambda: nn.bce_loss(p, y)[0], (p,))


def check_op_gradients(seed: int = 1234) -> list[CheckResult]:
    out = []
    for name, analytic, f, inputs in _op_cases(np.random.default_rng(seed)):
        err = max(rel_error(g, numeric_grad(f, x)) for g, x in zip(analytic, inputs))
        out.append(CheckResult(f"grad/{name}", err < OP_TOL, err, OP_TOL))
    return out


MINI_NET = EmbeddingConfig(blocks=((4, 3, 2), (4, 3, 2)), dropout_rate=0.2, input_length=16)


def end_to_end_grad_error(seed: int, config: EmbeddingConfig = MINI_NET, batch: int = 3):
    """Relative error of the whole miniature network's flattened parameter gradient.

    Returns None when the sample point lies within the step of a ReLU or
    pooling switch, where finite differences do not estimate the gradient.
    """
    rng = np.random.default_rng(seed)
    model = SiameseNet(config, seed=seed, dtype=np.float64)
    for prm in model.params.values():
        prm.value[...] = rng.uniform(-0.8, 0.8, prm.shape) + (1.0 if prm.name.endswith("gamma") else 0.0)
    L = config.input_length
    xa, xb, y = rng.random((batch, L)), rng.random((batch, L)), rng.integers(0, 2, batch)

    def loss():
        return model.pair_loss(xa, xb, y, rng=np.random.default_rng(77), backward=False)[0]

    if any(near_kink(loss, prm.value) for prm in model.params.values()):
        return None
    model.zero_grad()
    model.pair_loss(xa, xb, y, rng=np.random.default_rng(77))
    analytic = np.concatenate([prm.grad.ravel() for prm in model.params.values()])
    numeric = np.concatenate([numeric_grad(loss, prm.value).ravel() for prm in model.params.values()])
    return rel_error(analytic, numeric)


def check_network_gradients(n_points: int = 5, max_seeds: int = 40) -> CheckResult:
    errs, rejected = [], []
    for seed in range(max_seeds):
        e = end_to_end_grad_error(seed)
        (rejected.append(seed) if e is None else errs.append(e))
        if len(errs) == n_points:
            break
    err = max(errs, default=float("inf"))
    ok = len(errs) == n_points and err < NET_TOL
    return CheckResult("grad/siamese_end_to_end", ok, err, NET_TOL,
                       f"points={len(errs)} near_kink_rejected={len(rejected)}")


# dtw ----------------------------------------------------------------------

def _encode(series) -> int:
    """Base-4 code with digits ``x + 1``; dropping the last element is ``code >> 2``."""
    code = 0
    for x in series:
        code = code * 4 + int(x) + 1
    return code


class RecursiveDTW:
    """The textbook recursion with a memo shared across calls.

    ``D(a, b) = |a_n - b_m| + min(D(a[:-1], b), D(a, b[:-1]), D(a[:-1], b[:-1]))``
    with ``D(empty, empty) = 0`` and infinity when exactly one side is empty.
    Series hold integers in 0..2, encoded by ``_encode``.
    """

    def __init__(self):
        self.memo: dict[int, float] = {}

    def __call__(self, a, b) -> float:
        return self._d(_encode(a), _encode(b))

    def _d(self, a: int, b: int) -> float:
        key = (a << 32) | b
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        if a == 0 or b == 0:
            val = 0.0 if a == b else np.inf
        else:
            val = abs((a & 3) - (b & 3)) + min(self._d(a >> 2, b), self._d(a, b >> 2), self._d(a >> 2, b >> 2))
        self.memo[key] = val
        return val


def all_series(alphabet=DTW_ALPHABET, max_len=DTW_MAX_LEN):
    for n in range(1, max_len + 1):
        yield from itertools.product(alphabet, repeat=n)


def stepped_dtw_matrix(queries, query_lengths, supports, support_lengths, steps=FULL_STEPS):
    """Plain numpy DP over every (query, support) pair, grouped by length, with a chosen step set."""
    out = np.empty((len(queries), len(supports)))
    for n in np.unique(query_lengths):
        qi = np.flatnonzero(query_lengths == n)
        for m in np.unique(support_lengths):
            si = np.flatnonzero(support_lengths == m)
            A = queries[qi, :n][:, None, :]
            B = supports[si, :m][None, :, :]
            D = np.full((n + 1, m + 1, len(qi), len(si)), np.inf)
            for i in range(1, n + 1):
                for j in range(1, m + 1):
                    # every path starts at the first cell whatever the step set
                    best = 0.0 if i == j == 1 else np.minimum.reduce([D[i - di, j - dj] for di, dj in steps])
                    D[i, j] = np.abs(A[:, :, i - 1] - B[:, :, j - 1]) + best
            out[np.ix_(qi, si)] = D[n, m]
    return out


def corrupted_dtw_matrix(queries, query_lengths, supports, support_lengths):
    return stepped_dtw_matrix(queries, query_lengths, supports, support_lengths, CORRUPT_STEPS)


def check_dtw_oracle(matrix_fn=None, alphabet=DTW_ALPHABET, max_len=DTW_MAX_LEN) -> CheckResult:
    """Exhaustive comparison on every pair of series with lengths 1..max_len."""
    if not set(alphabet) <= {0, 1, 2}:
        raise ValueError("the recursive oracle encodes symbols 0..2 only")
    matrix_fn = matrix_fn or dtw_matrix
    series = list(all_series(alphabet, max_len))
    lengths = np.array([len(s) for s in series], dtype=np.int64)
    padded = np.zeros((len(series), max_len))
    for i, s in enumerate(series):
        padded[i, : len(s)] = s
    got = np.asarray(matrix_fn(padded, lengths, padded, lengths))
    oracle = RecursiveDTW()
    want = np.array([[oracle(a, b) for b in series] for a in series])
    diff = np.abs(got - want)
    bad = int(np.count_nonzero(diff))
    return CheckResult("dtw/recursive_oracle", bad == 0, float(diff.max()), 0.0,
                       f"pairs={len(series) ** 2} mismatches={bad}")


def check_dtw_symmetry(n_pairs: int = 1000, seed: int = 0, distance=dtw_distance) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        a = rng.normal(size=rng.integers(1, 60))
        b = rng.normal(size=rng.integers(1, 60))
        worst = max(worst, abs(distance(a, b) - distance(b, a)), abs(distance(a, a)))
    return CheckResult("dtw/symmetry_identity", worst == 0.0, worst, 0.0, f"pairs={n_pairs}")


# pairs --------------------------------------------------------------------

def random_labelled_dataset(rng, max_classes=5, max_size=30) -> Dataset:
    n_classes = int(rng.integers(2, max_classes + 1))
    sizes = rng.integers(1, max_size + 1, n_classes)
    sizes[rng.integers(n_classes)] = max(sizes.max(), 2)
    labels = rng.permutation(np.repeat(np.arange(n_classes), sizes))
    series = [TimeSeries(np.zeros(4, np.float32), 4, int(c)) for c in labels]
    return Dataset("synthetic", "train", series, [str(c) for c in range(n_classes)])


def pair_balance_violations(dataset: Dataset, pairs, cap) -> list[str]:
    """Every rule the pair generator must satisfy, checked on every emitted pair."""
    problems = []
    labels = dataset.labels
    la, lb = labels[pairs.index_a], labels[pairs.index_b]
    if not np.array_equal(la == lb, pairs.label == 1):
        problems.append("pair label disagrees with class labels")
    if np.any(pairs.index_a[pairs.label == 1] == pairs.index_b[pairs.label == 1]):
        problems.append("series paired with itself")
    for c, members in dataset.class_members().items():
        n = len(members)
        p = n * (n - 1) // 2 if cap is None else min(n * (n - 1) // 2, cap)
        same = (pairs.label == 1) & (la == c)
        diff = (pairs.label == 0) & (la == c)
        if same.sum() != p or diff.sum() != p:
            problems.append(f"class {c}: {same.sum()} same / {diff.sum()} different, expected {p}")
        combos = {tuple(sorted(t)) for t in zip(pairs.index_a[same].tolist(), pairs.index_b[same].tolist())}
        if len(combos) != same.sum():
            problems.append(f"class {c}: repeated same-label pair")
    return problems


def check_pair_balance(n_datasets: int = 50, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    failures = []
    for t in range(n_datasets):
        ds = random_labelled_dataset(rng)
        cap = [None, 3, 10, 50][t % 4]
        failures += pair_balance_violations(ds, generate_pairs(ds, cap, seed=t), cap)
    return CheckResult("pairs/balance", not failures, float(len(failures)), 0.0,
                       f"datasets={n_datasets}" + (f" first={failures[0]}" if failures else ""))


# driver -------------------------------------------------------------------

def run_all(corrupt_dtw: bool = False, progress=None) -> list[CheckResult]:
    results = []

    def add(r):
        results.append(r)
        if progress:
            progress(r.line())

    for r in check_op_gradients():
        add(r)
    add(check_network_gradients())
    add(check_dtw_oracle(corrupted_dtw_matrix if corrupt_dtw else None))
    add(check_dtw_symmetry())
    add(check_pair_balance())
    return results


def main(corrupt_dtw: bool = False, stream=sys.stdout) -> int:
    results = run_all(corrupt_dtw, progress=lambda line: print(line, file=stream, flush=True))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed", file=stream)
    return 1 if failed else 0
