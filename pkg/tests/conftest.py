import numpy as np
import pytest


def synth_values(rng, label, length):
    """Class-dependent wave shape with jitter, so 1-NN and the CNN can separate classes."""
    t = np.linspace(0, 1, length)
    freq = 1 + label
    phase = rng.normal(0, 0.3)
    return np.sin(2 * np.pi * freq * t + phase) * (1 + 0.3 * label) + rng.normal(0, 0.15, length)


def write_ucr(path, per_class, length, n_classes=2, seed=0, delimiter="\t", labels=None, ragged=False):
    rng = np.random.default_rng(seed)
    labels = labels or [str(c + 1) for c in range(n_classes)]
    lines = []
    for c, name in enumerate(labels):
        for _ in range(per_class):
            n = int(rng.integers(length // 2, length + 1)) if ragged else length
            v = synth_values(rng, c, n)
            lines.append(delimiter.join([name] + [f"{x:.6f}" for x in v]))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_mitbih(path, per_class, length=187, seed=0):
    rng = np.random.default_rng(seed)
    lines = []
    for c in range(5):
        for _ in range(per_class):
            v = synth_values(rng, c, length)
            v = (v - v.min()) / (v.max() - v.min())
            lines.append(",".join([f"{x:.6e}" for x in v] + [f"{float(c):.6e}"]))
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def data_dir(tmp_path, monkeypatch):
    """A dataset root with small synthetic stand-ins under the expected file names."""
    root = tmp_path / "data"
    root.mkdir()
    write_ucr(root / "ECG200_TRAIN.tsv", 50, 96, 2, seed=1, labels=["-1", "1"])
    write_ucr(root / "ECG200_TEST.tsv", 50, 96, 2, seed=2, labels=["-1", "1"])
    write_ucr(root / "ECG5000_TRAIN.tsv", 8, 140, 5, seed=3)
    write_ucr(root / "ECGFiveDays_TRAIN.tsv", 8, 136, 2, seed=4)
    write_ucr(root / "TwoLeadECG_TRAIN.tsv", 8, 82, 2, seed=5)
    write_mitbih(root / "mitbih_train.csv", 30, seed=6)
    monkeypatch.setenv("FSTS_DATA_DIR", str(root))
    return root


# acceptance report -----------------------------------------------------------

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=_criterion_order):
            terminalreporter.write_line(line)


def _criterion_order(line):
    tag = line.split("criterion")[1].split(":")[0].strip()
    return (0, int(tag)) if tag.isdigit() else (1, tag)
