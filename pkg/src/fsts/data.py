"""Dataset parsing, min-max scaling, zero post-padding and the canonical binary format.

Canonical ``.fsts`` layout (all integers little-endian)::

    b"FSTS"  u16 version
    u32 len + utf-8   dataset name
    u32 len + utf-8   role
    u32 n_series, u32 l_max, u32 n_labels
    n_labels x (u32 len + utf-8 label name)
    n_series x u32 label
    n_series x u32 original_length
    n_series * l_max x f32 samples, row-major
"""

from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"FSTS"
FORMAT_VERSION = 1
ROLES = ("train", "validation", "test", "raw")
MITBIH_CLASSES = ("N", "S", "V", "F", "Q")

# Sizes the loaders should reproduce for the ECG benchmark collection.
KNOWN_DATASETS = {
    "ECG200": (200, 96, 2),
    "ECG5000": (5000, 140, 5),
    "ECGFiveDays": (884, 136, 2),
    "TwoLeadECG": (1162, 82, 2),
    "MIT-BIH": (21892, 187, 5),
}
DEFAULT_L_MAX = 187


class DataError(ValueError):
    """Malformed input data."""


class ParseError(DataError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}" if line else f"{path}: {message}")


class FormatError(DataError):
    """Canonical file is not readable."""


class MagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


@dataclass
class TimeSeries:
    values: np.ndarray
    original_length: int
    label: int


@dataclass
class Dataset:
    """Labelled series; ``values`` rows may be ragged until :func:`prepare` pads them."""

    name: str
    role: str
    series: list[TimeSeries]
    label_names: list[str]
    sources: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.role not in ROLES:
            raise DataError(f"unknown role {self.role!r}")
        for s in self.series:
            if not 0 <= s.label < len(self.label_names):
                raise DataError(f"{self.name}: label id {s.label} has no name")

    def __len__(self):
        return len(self.series)

    @property
    def source_names(self) -> tuple[str, ...]:
        return self.sources or (self.name,)

    @property
    def l_max(self) -> int:
        return max((len(s.values) for s in self.series), default=0)

    @property
    def is_padded(self) -> bool:
        return len({len(s.values) for s in self.series}) <= 1

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.series], dtype=np.int64)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([s.original_length for s in self.series], dtype=np.int64)

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    def matrix(self, dtype=np.float32) -> np.ndarray:
        """Stack the (padded) series into an ``(M, l_max)`` array."""
        if not self.is_padded:
            raise DataError(f"{self.name}: series have unequal lengths; pad them first")
        if not self.series:
            return np.zeros((0, 0), dtype=dtype)
        return np.stack([np.asarray(s.values, dtype=dtype) for s in self.series])

    def class_members(self) -> dict[int, np.ndarray]:
        labels = self.labels
        return {c: np.flatnonzero(labels == c) for c in range(self.n_classes)}

    def summary(self) -> tuple[int, int, int]:
        """(size, longest original length, number of classes)."""
        return len(self), int(self.lengths.max(initial=0)), len(set(self.labels.tolist()))


def _label_sort_key(name):
    try:
        return (0, float(name), name)
    except ValueError:
        return (1, 0.0, name)


def _label_text(tok):
    v = float(tok)
    return str(int(v)) if v.is_integer() else repr(v)


def detect_delimiter(line: str) -> str:
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    return " "


def dataset_name_from_path(path) -> str:
    stem = Path(path).name
    stem = re.sub(r"\.(tsv|csv|txt|fsts)$", "", stem, flags=re.I)
    return re.sub(r"_(TRAIN|TEST)$", "", stem, flags=re.I)


def parse_ucr(path, delimiter: str | None = None, name: str | None = None, role: str = "raw") -> Dataset:
    """Read a UCR-style text file: label first, then samples, one record per line.

    ``delimiter`` may be ``"tab"``, ``"comma"``, a literal character, or
    ``None`` to detect from the first line.  Trailing NaN padding is dropped.
    """
    path = Path(path)
    delimiter = {"tab": "\t", "tsv": "\t", "comma": ",", "csv": ","}.get(delimiter, delimiter)
    raw_labels, rows = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if delimiter is None:
                delimiter = detect_delimiter(line)
            fields = line.split() if delimiter == " " else line.split(delimiter)
            try:
                vals = [float(f) for f in fields]
            except ValueError as exc:
                raise ParseError(path, lineno, f"non-numeric field ({exc})") from None
            if len(vals) < 2:
                raise ParseError(path, lineno, "record needs a label and at least one sample")
            if not math.isfinite(vals[0]):
                raise ParseError(path, lineno, "label is not finite")
            samples = np.array(vals[1:])
            finite = np.isfinite(samples)
            if not finite.all():
                # variable-length archives pad the tail with NaN
                n = len(samples) - np.argmax(finite[::-1]) if finite.any() else 0
                if n == 0 or not finite[:n].all():
                    raise ParseError(path, lineno, "non-finite sample inside the series")
                samples = samples[:n]
            raw_labels.append(_label_text(fields[0]))
            rows.append(samples)
    if not rows:
        raise ParseError(path, 0, "file contains no records")
    names = sorted(set(raw_labels), key=_label_sort_key)
    ids = {n: i for i, n in enumerate(names)}
    series = [TimeSeries(r, len(r), ids[lab]) for r, lab in zip(rows, raw_labels)]
    return Dataset(name or dataset_name_from_path(path), role, series, names)


def parse_mitbih(path, name: str = "MIT-BIH", role: str = "raw") -> Dataset:
    """Read the heartbeat CSV export: samples followed by a trailing class id in 0..4."""
    path = Path(path)
    series = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            try:
                vals = [float(f) for f in fields]
            except ValueError as exc:
                raise ParseError(path, lineno, f"non-numeric field ({exc})") from None
            if len(vals) < 2:
                raise ParseError(path, lineno, "record needs samples and a label")
            lab = vals[-1]
            if not lab.is_integer() or not 0 <= lab <= 4:
                raise ParseError(path, lineno, f"label {fields[-1]!r} outside 0..4")
            samples = np.array(vals[:-1])
            if not np.isfinite(samples).all():
                raise ParseError(path, lineno, "non-finite sample")
            series.append(TimeSeries(samples, len(samples), int(lab)))
    if not series:
        raise ParseError(path, 0, "file contains no records")
    return Dataset(name, role, series, list(MITBIH_CLASSES))


def merge_datasets(name: str, parts: list[Dataset], role: str = "raw") -> Dataset:
    """Concatenate parts of one dataset (e.g. TRAIN and TEST splits), unifying labels by name."""
    names = sorted({n for p in parts for n in p.label_names}, key=_label_sort_key)
    if all(p.label_names == parts[0].label_names for p in parts):
        names = list(parts[0].label_names)
    ids = {n: i for i, n in enumerate(names)}
    series = [
        TimeSeries(s.values, s.original_length, ids[p.label_names[s.label]])
        for p in parts for s in p.series
    ]
    return Dataset(name, role, series, names)


def concat_datasets(parts: list[Dataset], role: str | None = None) -> tuple[Dataset, np.ndarray]:
    """Stack distinct datasets, keeping their classes distinct.

    Returns the combined dataset and the index offset of each part.
    """
    if not parts:
        raise DataError("nothing to concatenate")
    widths = {p.l_max for p in parts}
    if len(widths) != 1 or not all(p.is_padded for p in parts):
        raise DataError("datasets must share one padded length before concatenation")
    series, label_names, offsets = [], [], []
    for p in parts:
        offsets.append(len(series))
        base = len(label_names)
        label_names += [f"{p.name}:{n}" for n in p.label_names]
        series += [TimeSeries(s.values, s.original_length, s.label + base) for s in p.series]
    sources = tuple(src for p in parts for src in p.source_names)
    return (
        Dataset("+".join(p.name for p in parts), role or parts[0].role, series, label_names, sources),
        np.array(offsets, dtype=np.int64),
    )


def scale_minmax(values, length: int | None = None, bounds: tuple[float, float] | None = None) -> np.ndarray:
    """Min-max scale the first ``length`` samples into [0, 1].

    ``bounds`` overrides the series' own (min, max), which is how dataset-wide
    scaling is done.  A constant prefix maps to zeros.  Samples past
    ``length`` are returned unchanged.
    """
    v = np.array(values, dtype=np.float64)
    n = len(v) if length is None else length
    if n == 0:
        return v
    lo, hi = bounds if bounds is not None else (v[:n].min(), v[:n].max())
    if hi > lo:
        v[:n] = (v[:n] - lo) / (hi - lo)
    else:
        v[:n] = 0.0
    return v


def pad_to(values, l_max: int, length: int | None = None) -> np.ndarray:
    """Keep the first ``length`` samples and append zeros up to ``l_max``."""
    v = np.asarray(values)
    n = len(v) if length is None else length
    if n > l_max:
        raise DataError(f"series of length {n} exceeds l_max={l_max}")
    out = np.zeros(l_max, dtype=np.float32)
    out[:n] = v[:n]
    return out


def prepare(dataset: Dataset, l_max: int = DEFAULT_L_MAX, scale: str = "series", role: str | None = None) -> Dataset:
    """Scale each series' unpadded prefix to [0, 1] and post-pad with zeros to ``l_max``.

    ``scale="dataset"`` uses one (min, max) over all prefixes instead.
    Output samples are float32.  Applying this twice gives the same result.
    """
    if scale not in ("series", "dataset", "none"):
        raise ValueError(f"unknown scaling mode {scale!r}")
    bounds = None
    if scale == "dataset" and dataset.series:
        prefixes = [np.asarray(s.values[: s.original_length], dtype=np.float64) for s in dataset.series]
        bounds = (min(p.min() for p in prefixes), max(p.max() for p in prefixes))
    out = []
    for s in dataset.series:
        n = s.original_length
        v = s.values if scale == "none" else scale_minmax(s.values, n, bounds)
        out.append(TimeSeries(pad_to(v, l_max, n), n, s.label))
    return Dataset(dataset.name, role or dataset.role, out, list(dataset.label_names), dataset.sources)


# canonical binary format ---------------------------------------------------

def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def save_canonical(dataset: Dataset, path) -> None:
    if not dataset.series:
        raise DataError("refusing to save an empty dataset")
    if not dataset.is_padded:
        raise DataError(f"{dataset.name}: pad series to a common length before saving")
    l_max = dataset.l_max
    for s in dataset.series:
        if not 0 < s.original_length <= l_max:
            raise DataError(f"{dataset.name}: original_length {s.original_length} outside 1..{l_max}")
    parts = [
        MAGIC,
        struct.pack("<H", FORMAT_VERSION),
        _pack_str(dataset.name),
        _pack_str(dataset.role),
        struct.pack("<III", len(dataset), l_max, len(dataset.label_names)),
    ]
    parts += [_pack_str(n) for n in dataset.label_names]
    parts.append(dataset.labels.astype("<u4").tobytes())
    parts.append(dataset.lengths.astype("<u4").tobytes())
    parts.append(dataset.matrix(np.float32).astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedError(f"{self.path}: truncated at byte {len(self.buf)}, needed {self.pos + n}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")


def load_canonical(path) -> Dataset:
    buf = Path(path).read_bytes()
    r = _Reader(buf, path)
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise MagicError(f"{path}: not an FSTS file (magic {buf[:4]!r})")
    r.take(4)
    (version,) = r.unpack("<H")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    name = r.string()
    role = r.string()
    n, l_max, n_labels = r.unpack("<III")
    label_names = [r.string() for _ in range(n_labels)]
    labels = np.frombuffer(r.take(4 * n), dtype="<u4").astype(np.int64)
    lengths = np.frombuffer(r.take(4 * n), dtype="<u4").astype(np.int64)
    values = np.frombuffer(r.take(4 * n * l_max), dtype="<f4").astype(np.float32).reshape(n, l_max)
    if r.pos != len(buf):
        raise FormatError(f"{path}: {len(buf) - r.pos} trailing bytes")
    series = [TimeSeries(values[i], int(lengths[i]), int(labels[i])) for i in range(n)]
    return Dataset(name, role, series, label_names)
