"""Synthetic domain-shift datasets and the scenario CSV format.

CSV layout (UTF-8, comma separated, header required)::

    domain,label,f0,f1,...
    source,0,2.91,0.13
    target,-1,1.07,3.40

``domain`` is ``source`` or ``target``. Target rows may use label ``-1`` when
unlabeled; those rows are still used for training but skipped by evaluation.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

UNLABELED = -1


class ScenarioFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    source_x: np.ndarray
    source_y: np.ndarray
    target_x: np.ndarray
    target_y: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return int(self.meta["num_classes"])

    @property
    def input_dim(self) -> int:
        return int(self.source_x.shape[1])

    @property
    def labeled_target(self) -> np.ndarray:
        """Boolean mask of target rows that carry a label."""
        return self.target_y != UNLABELED


def _rotate(x: np.ndarray, rotation: float) -> np.ndarray:
    c, s = math.cos(rotation), math.sin(rotation)
    out = x.copy()
    out[:, 0] = c * x[:, 0] - s * x[:, 1]
    out[:, 1] = s * x[:, 0] + c * x[:, 1]
    return out


def make_blobs(
    seed: int,
    num_classes: int = 2,
    per_class: int = 200,
    input_dim: int = 2,
    rotation: float = math.pi / 4,
    translation: Sequence[float] | None = (1.0, 1.0),
    noise_sigma: float = 1.0,
) -> Dataset:
    """Gaussian class blobs on a circle of radius 3, plus a rotated and shifted copy.

    Class ``k`` is centred at ``3 * (cos 2pi k/K, sin 2pi k/K, 0, ...)``. Target
    samples are fresh draws from the same generator, rotated by ``rotation``
    about the origin (first two coordinates) and then translated.
    """
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    if per_class < 10:
        raise ValueError("per_class must be >= 10")
    if input_dim < 2:
        raise ValueError("input_dim must be >= 2")
    if not noise_sigma > 0:
        raise ValueError("noise_sigma must be positive")
    shift = np.zeros(input_dim)
    if translation is not None:
        t = np.asarray(translation, dtype=np.float64)
        if t.ndim != 1 or t.size > input_dim:
            raise ValueError(f"translation must have at most {input_dim} entries")
        shift[: t.size] = t

    angles = 2.0 * math.pi * np.arange(num_classes) / num_classes
    centres = np.zeros((num_classes, input_dim))
    centres[:, 0] = 3.0 * np.cos(angles)
    centres[:, 1] = 3.0 * np.sin(angles)
    labels = np.repeat(np.arange(num_classes), per_class)

    rng = np.random.default_rng(seed)
    source_x = centres[labels] + noise_sigma * rng.standard_normal((labels.size, input_dim))
    raw_target = centres[labels] + noise_sigma * rng.standard_normal((labels.size, input_dim))
    target_x = _rotate(raw_target, rotation) + shift
    meta = {
        "num_classes": num_classes,
        "input_dim": input_dim,
        "shift_kind": "rotate+translate",
        "seed": seed,
        "rotation": rotation,
        "translation": shift.tolist(),
        "noise_sigma": noise_sigma,
    }
    return Dataset(source_x, labels.copy(), target_x, labels.copy(), meta)


def write_csv(data: Dataset, path: str | Path) -> None:
    path = Path(path)
    d = data.input_dim
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["domain", "label", *(f"f{i}" for i in range(d))])
        for domain, xs, ys in (("source", data.source_x, data.source_y), ("target", data.target_x, data.target_y)):
            for x, y in zip(xs, ys):
                w.writerow([domain, int(y), *(repr(float(v)) for v in x)])


def load_csv(path: str | Path) -> Dataset:
    path = Path(path)
    rows: dict[str, tuple[list, list]] = {"source": ([], []), "target": ([], [])}
    n_features = None
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if (
            header is None
            or len(header) < 3
            or [h.strip() for h in header[:2]] != ["domain", "label"]
            or any(h.strip() != f"f{i}" for i, h in enumerate(header[2:]))
        ):
            raise ScenarioFormatError(f"{path}: line 1: expected header 'domain,label,f0,f1,...'")
        n_features = len(header) - 2
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_features + 2:
                raise ScenarioFormatError(
                    f"{path}: line {lineno}: expected {n_features} features, got {len(row) - 2}"
                )
            domain = row[0].strip()
            if domain not in rows:
                raise ScenarioFormatError(f"{path}: line {lineno}: domain must be 'source' or 'target', got {domain!r}")
            try:
                label = int(row[1])
                feats = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise ScenarioFormatError(f"{path}: line {lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in feats):
                raise ScenarioFormatError(f"{path}: line {lineno}: non-finite feature")
            if label < UNLABELED or (domain == "source" and label == UNLABELED):
                raise ScenarioFormatError(f"{path}: line {lineno}: invalid label {label}")
            rows[domain][0].append(feats)
            rows[domain][1].append(label)

    (sx, sy), (tx, ty) = rows["source"], rows["target"]
    if not sx or not tx:
        raise ScenarioFormatError(f"{path}: need at least one source row and one target row")
    labels = [*sy, *(y for y in ty if y != UNLABELED)]
    meta = {
        "num_classes": max(labels) + 1,
        "input_dim": n_features,
        "shift_kind": "csv",
        "seed": None,
    }
    return Dataset(
        np.array(sx, dtype=np.float64),
        np.array(sy, dtype=np.int64),
        np.array(tx, dtype=np.float64),
        np.array(ty, dtype=np.int64),
        meta,
    )
