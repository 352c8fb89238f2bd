"""Training data: bars-and-stripes, OptDigits ingestion and spin-pattern files.

OptDigits images become 64 visible spins: 56 pixels (8 rows x 7 columns,
row-major) followed by 8 one-hot label spins for classes 0-7.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

N_PIXELS = 56
N_CLASSES = 8
PIXEL_ROWS, PIXEL_COLS = 8, 7


class ParseError(ValueError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno


class CapacityError(ValueError):
    pass


@dataclass(frozen=True)
class DigitRecord:
    pixels: np.ndarray  # (8, 8) ints in [0, 16]
    label: int


@dataclass(frozen=True)
class PatternRecord:
    visible: np.ndarray  # +-1, pixels then one-hot label spins
    cls: int


def gen_bas(n) -> np.ndarray:
    """All distinct n x n bars-and-stripes patterns as a (2**(n+1) - 2, n, n) +-1 array.

    Stripes (constant rows) come first in binary order, then bars (constant
    columns) other than the two uniform images.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    out = []
    codes = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1) * 2 - 1
    for row_vals in codes:
        out.append(np.repeat(row_vals[:, None], n, axis=1))
    for col_vals in codes:
        if abs(col_vals.sum()) == n:
            continue
        out.append(np.repeat(col_vals[None, :], n, axis=0))
    return np.array(out, dtype=np.int8)


def bundled_optdigits(split="tra") -> Path:
    """Path of the bundled UCI optdigits training ('tra') or test ('tes') file."""
    if split not in ("tra", "tes"):
        raise ValueError("split is 'tra' or 'tes'")
    return Path(str(resources.files("valleyscope") / "data" / f"optdigits.{split}"))


def load_optdigits(path) -> list:
    """Parse the UCI text format: 64 comma-separated pixel values in [0, 16], then the label."""
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != 65:
                raise ParseError(path, lineno, f"expected 65 fields, found {len(fields)}")
            try:
                vals = [int(x) for x in fields]
            except ValueError as exc:
                raise ParseError(path, lineno, f"non-integer field ({exc})") from None
            pix = np.array(vals[:64])
            if pix.min() < 0 or pix.max() > 16:
                raise ParseError(path, lineno, "pixel value outside [0, 16]")
            if not 0 <= vals[64] <= 9:
                raise ParseError(path, lineno, f"label {vals[64]} outside 0-9")
            records.append(DigitRecord(pix.reshape(8, 8), vals[64]))
    return records


def _to_8x7(pixels, drop):
    if drop == "right":
        return pixels[:, :7]
    if drop == "left":
        return pixels[:, 1:]
    if drop == "merge-max":
        return np.concatenate([pixels[:, :6], pixels[:, 6:].max(axis=1, keepdims=True)], axis=1)
    raise ValueError(f"unknown column reduction {drop!r}")


def to_pattern(record: DigitRecord, threshold=8, drop="right") -> PatternRecord:
    pix = _to_8x7(record.pixels, drop)
    spins = np.where(pix.reshape(-1) >= threshold, 1, -1)
    label = -np.ones(N_CLASSES, dtype=np.int64)
    label[record.label] = 1
    return PatternRecord(np.concatenate([spins, label]).astype(np.int8), record.label)


def _round_robin(records, count):
    by_class = {c: [r for r in records if r.label == c] for c in range(N_CLASSES)}
    pos = dict.fromkeys(by_class, 0)
    out = []
    while len(out) < count:
        progressed = False
        for c in range(N_CLASSES):
            if len(out) == count:
                break
            if pos[c] < len(by_class[c]):
                out.append(by_class[c][pos[c]])
                pos[c] += 1
                progressed = True
        if not progressed:
            raise CapacityError(f"only {len(out)} records available, {count} requested")
    return out


def preprocess(train_records, test_records=None, threshold=8, train_count=1024, test_count=440, drop="right"):
    """Select, reduce to 8x7, binarize and label-encode digits of classes 0-7.

    Selection is round-robin over classes in file order. Without
    `test_records` the test split is drawn from the records not used for
    training. Returns ``(train, test)`` lists of PatternRecord.
    """
    if not 1 <= threshold <= 16:
        raise ValueError("threshold must be in [1, 16]")
    train_pool = [r for r in train_records if r.label < N_CLASSES]
    train_sel = _round_robin(train_pool, train_count)
    if test_records is None:
        used = {id(r) for r in train_sel}
        test_pool = [r for r in train_pool if id(r) not in used]
    else:
        test_pool = [r for r in test_records if r.label < N_CLASSES]
    test_sel = _round_robin(test_pool, test_count)
    return [to_pattern(r, threshold, drop) for r in train_sel], [to_pattern(r, threshold, drop) for r in test_sel]


def write_patterns(path, patterns):
    with open(path, "w") as fh:
        for p in patterns:
            fh.write(" ".join(str(int(x)) for x in p.visible) + f" {p.cls}\n")


def read_patterns(path) -> list:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            vals = [int(x) for x in parts]
            spins = np.array(vals[:-1], dtype=np.int8)
            if not np.all(np.abs(spins) == 1):
                raise ParseError(path, lineno, "pattern values must be -1 or +1")
            out.append(PatternRecord(spins, vals[-1]))
    return out


def patterns_array(patterns) -> np.ndarray:
    return np.array([p.visible for p in patterns], dtype=np.int8)


def prototype_patterns(n_classes, n_pixels, per_class, flip_prob=0.05, seed=0):
    """Toy labelled set: noisy copies of one random prototype per class, one-hot labels appended.

    Returns ``(patterns, prototypes)``; label spins occupy the last `n_classes` units.
    """
    rng = np.random.default_rng(seed)
    protos = np.where(rng.random((n_classes, n_pixels)) < 0.5, 1, -1).astype(np.int8)
    out = []
    for k in range(per_class):
        for c in range(n_classes):
            pix = protos[c].copy()
            if k > 0:
                flips = rng.random(n_pixels) < flip_prob
                pix[flips] *= -1
            label = -np.ones(n_classes, dtype=np.int8)
            label[c] = 1
            out.append(PatternRecord(np.concatenate([pix, label]), c))
    return out, protos
