"""``fsts`` command line: prep, pairs, train, eval, baseline, verify.

Exit codes: 0 success, 1 internal error, 2 input error, 3 configuration error.
Dataset arguments are file paths, directories, or names looked up under
``$FSTS_DATA_DIR`` (a ``NAME.fsts`` canonical file wins over raw text files).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .baselines import DistanceKind, EqualLengthError, evaluate_baseline
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint, save_report
from .data import (
    DEFAULT_L_MAX,
    DataError,
    Dataset,
    concat_datasets,
    dataset_name_from_path,
    load_canonical,
    merge_datasets,
    parse_mitbih,
    parse_ucr,
    prepare,
    save_canonical,
)
from .episodes import ClassTooSmallError, evaluate, format_summary, write_results_csv, write_summary_csv
from .pairs import DEFAULT_CAP, generate_pairs, merge_pairsets, write_pairs_csv
from .siamese import EmbeddingConfig, OverlapError, TrainConfig, pretrain

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2, 3

DEFAULT_TRAIN = ("ECG200", "ECG5000")
DEFAULT_VAL = ("ECGFiveDays", "TwoLeadECG")
DEFAULT_TEST = "MIT-BIH"
TABLE_K = (1, 2, 3, 4, 5, 10, 20, 30, 40, 50)
MITBIH_STEMS = {"mitbih", "mit-bih", "mit_bih"}
RAW_SUFFIXES = {".tsv", ".csv", ".txt", ""}

log = logging.getLogger("fsts")


class InputError(Exception):
    pass


class ConfigError(Exception):
    pass


# argument types -------------------------------------------------------------

def positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def rate(text):
    v = float(text)
    if not 0 <= v < 1:
        raise argparse.ArgumentTypeError(f"expected a rate in [0, 1), got {text}")
    return v


def k_values(tokens) -> list[int]:
    """``["1,2", "5"]`` -> ``[1, 2, 5]``; ``table`` expands to the full K sweep."""
    out = []
    for tok in tokens:
        if tok == "table":
            out += TABLE_K
            continue
        out += [positive_int(t) for t in str(tok).split(",") if t]
    if not out:
        raise ConfigError("--k needs at least one value")
    return out


# dataset resolution ---------------------------------------------------------

def data_root(args) -> Path | None:
    root = getattr(args, "data_dir", None) or os.environ.get("FSTS_DATA_DIR")
    return Path(root) if root else None


def _split_order(path: Path):
    """TRAIN before TEST so merged datasets keep a fixed series order."""
    stem = path.stem.upper()
    return (0 if stem.endswith("TRAIN") else 1 if stem.endswith("TEST") else 2, path.name)


def _raw_files_in(directory: Path) -> list[Path]:
    files = [p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in RAW_SUFFIXES - {""}]
    return sorted(files, key=_split_order)


def resolve(arg: str, root: Path | None) -> list[Path]:
    """Files backing one dataset argument."""
    names = [arg] + (sorted(MITBIH_STEMS | {"MIT-BIH"}) if _is_mitbih(arg) else [])
    candidates = [Path(arg)]
    if root is not None and not Path(arg).is_absolute():
        candidates += [c for n in names for c in (root / f"{n}.fsts", root / n)]
    for c in candidates:
        if c.is_file():
            return [c]
        if c.is_dir():
            canon = c / f"{c.name}.fsts"
            if canon.is_file():
                return [canon]
            files = _raw_files_in(c)
            if files:
                return files
    if root is not None:
        for n in names:
            files = sorted((p for p in root.glob(f"{n}_*") if p.suffix.lower() in RAW_SUFFIXES), key=_split_order)
            if files:
                return files
    where = f" (also looked under {root})" if root else ""
    raise InputError(f"dataset not found: {arg}{where}")


def _is_mitbih(name: str) -> bool:
    return name.lower() in MITBIH_STEMS


def parse_raw(files: list[Path], delimiter: str | None, name: str | None = None) -> Dataset:
    """Parse and merge the split files of one raw dataset."""
    for f in files:
        if not f.is_file():
            raise InputError(f"no such file: {f}")
    stem = name or dataset_name_from_path(files[0])
    if _is_mitbih(stem):
        parts = [parse_mitbih(f) for f in files]
        return merge_datasets("MIT-BIH", parts)
    parts = [parse_ucr(f, delimiter=delimiter, name=stem) for f in files]
    return merge_datasets(stem, parts) if len(parts) > 1 else parts[0]


def load_dataset(ref: str, args, role: str, pad: bool = True) -> Dataset:
    files = resolve(ref, data_root(args))
    if len(files) == 1 and files[0].suffix == ".fsts":
        ds = load_canonical(files[0])
        ds.role = role
        return ds
    raw = parse_raw(files, getattr(args, "format", None))
    return prepare(raw, l_max=args.l_max, role=role) if pad else raw


# commands -------------------------------------------------------------------

def cmd_prep(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    groups: dict[str, list[Path]] = {}
    for arg in args.inputs:
        for f in resolve(arg, data_root(args)):
            groups.setdefault(dataset_name_from_path(f), []).append(f)
    for stem, files in groups.items():
        raw = parse_raw(sorted(set(files), key=_split_order), args.format, stem)
        ds = prepare(raw, l_max=args.l_max, role="raw")
        size, length, n_classes = raw.summary()
        target = out / f"{ds.name}.fsts"
        save_canonical(ds, target)
        print(f"{ds.name}: {size}, {length}→{ds.l_max}, {n_classes} classes  -> {target}")
    return EXIT_OK


def cmd_pairs(args) -> int:
    ds = load_dataset(args.dataset, args, "train")
    ps = generate_pairs(ds, args.cap_pairs, seed=args.seed)
    out = Path(args.out)
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / f"{ds.name}_pairs.csv"
    write_pairs_csv(ps, out)
    n_same = int((ps.label == 1).sum())
    print(f"{ds.name}: {len(ps)} pairs ({n_same} same, {len(ps) - n_same} different) -> {out}")
    return EXIT_OK


def _stack(names, args, role):
    parts = [load_dataset(n, args, role) for n in names]
    pairs = [generate_pairs(p, args.cap_pairs, seed=args.seed) for p in parts]
    data, offsets = concat_datasets(parts, role=role)
    return data, merge_pairsets(pairs, offsets, data.name)


def cmd_train(args) -> int:
    overlap = sorted(set(args.train) & set(args.val))
    if overlap:
        raise ConfigError(f"datasets used for both training and validation: {overlap}")
    train_data, train_pairs = _stack(args.train, args, "train")
    val_data, val_pairs = _stack(args.val, args, "validation")
    config = EmbeddingConfig(dropout_rate=args.dropout, input_length=train_data.l_max)
    hyper = TrainConfig(learning_rate=args.lr, batch_size=args.batch_size, patience=args.patience,
                        max_epochs=args.epochs)
    print(f"train {train_data.name}: {len(train_data)} series, {len(train_pairs)} pairs; "
          f"val {val_data.name}: {len(val_data)} series, {len(val_pairs)} pairs", file=sys.stderr)

    def progress(epoch, tl, vl, va):
        print(f"epoch {epoch:3d}  train {tl:.5f}  val {vl:.5f}  val_acc {va:.4f}", file=sys.stderr, flush=True)

    model, report = pretrain(train_pairs, val_pairs, train_data, val_data, config, hyper,
                             seed=args.seed, progress=progress)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "model.json"
    save_checkpoint(model, ckpt)
    save_report(report, out / "train_report.txt")
    print(f"best epoch {report.best_epoch} ({report.stop_reason}), "
          f"val loss {min(report.val_loss):.5f} -> {ckpt}")
    return EXIT_OK


def _write_eval(results, out: Path, prefix: str):
    out.mkdir(parents=True, exist_ok=True)
    write_results_csv(results, out / f"{prefix}_results.csv")
    write_summary_csv(results, out / f"{prefix}_summary.csv")
    print(format_summary(results))


def cmd_eval(args) -> int:
    if not args.checkpoint:
        raise ConfigError("eval needs --checkpoint")
    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise InputError(f"no such checkpoint: {ckpt}")
    model, config = load_checkpoint(ckpt)
    args.l_max = config.input_length
    ds = load_dataset(args.dataset, args, "test")
    results = [evaluate(model, ds, args.n_way, k, args.queries, args.tasks, args.seed) for k in args.k]
    _write_eval(results, Path(args.out), "scnn")
    return EXIT_OK


def cmd_baseline(args) -> int:
    kind = DistanceKind("dtw", args.window) if args.kind == "dtw" else DistanceKind("euclidean")
    if args.window is not None and args.kind != "dtw":
        raise ConfigError("--window only applies to dtw")
    ds = load_dataset(args.dataset, args, "test", pad=not args.no_pad)
    results = [evaluate_baseline(ds, kind, args.n_way, k, args.queries, args.tasks, args.seed) for k in args.k]
    _write_eval(results, Path(args.out), kind.label.lower())
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import main as verify_main
    return verify_main(corrupt_dtw=args.corrupt_dtw)


# parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsts", description="Few-shot time-series classification with a Siamese 1-D CNN.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed for every random stage")
    common.add_argument("--data-dir", help="dataset root (default: $FSTS_DATA_DIR)")
    common.add_argument("--format", choices=["tsv", "csv"], help="raw file delimiter (default: detect)")
    common.add_argument("--l-max", type=positive_int, default=DEFAULT_L_MAX, help="padded length")
    common.add_argument("--out", default=".", help="output directory")

    episodic = argparse.ArgumentParser(add_help=False)
    episodic.add_argument("--k", nargs="+", default=[5], help="shots per class, e.g. --k 1 2 5, --k 1,2,5 or --k table")
    episodic.add_argument("--n-way", type=positive_int, default=5)
    episodic.add_argument("--queries", type=positive_int, default=20, help="queries per class")
    episodic.add_argument("--tasks", type=positive_int, default=20)

    p = sub.add_parser("prep", parents=[common], help="parse, scale and pad raw files into canonical .fsts files")
    p.add_argument("inputs", nargs="+", help="raw files, directories or dataset names")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("pairs", parents=[common], help="write the same/different-label pair list of a dataset")
    p.add_argument("dataset")
    p.add_argument("--cap-pairs", type=positive_int, default=DEFAULT_CAP)
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("train", parents=[common], help="pretrain the Siamese network")
    p.add_argument("--train", nargs="+", default=list(DEFAULT_TRAIN))
    p.add_argument("--val", nargs="+", default=list(DEFAULT_VAL))
    p.add_argument("--cap-pairs", type=positive_int, default=DEFAULT_CAP)
    p.add_argument("--batch-size", type=positive_int, default=128)
    p.add_argument("--lr", type=positive_float, default=1e-3)
    p.add_argument("--patience", type=positive_int, default=20)
    p.add_argument("--epochs", type=positive_int, default=200, help="epoch cap")
    p.add_argument("--dropout", type=rate, default=0.2)
    p.add_argument("--checkpoint", help="manifest path (default: OUT/model.json)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common, episodic], help="episodic evaluation of a checkpoint")
    p.add_argument("dataset", nargs="?", default=DEFAULT_TEST)
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", parents=[common, episodic], help="1-NN baseline on the same tasks")
    p.add_argument("kind", choices=["ed", "dtw"])
    p.add_argument("dataset", nargs="?", default=DEFAULT_TEST)
    p.add_argument("--window", type=int, help="Sakoe-Chiba band half-width (dtw only)")
    p.add_argument("--no-pad", action="store_true", help="keep raw series unscaled and unpadded")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("verify", help="gradient, DTW and pair-balance self-checks")
    p.add_argument("--corrupt-dtw", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if hasattr(args, "k"):
            args.k = k_values(args.k)
        return args.func(args)
    except (InputError, FileNotFoundError, DataError, CheckpointError) as exc:
        print(f"fsts: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigError, OverlapError, ClassTooSmallError, EqualLengthError, argparse.ArgumentTypeError) as exc:
        print(f"fsts: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"fsts: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
