"""Inner-product traces and histograms of task-gradient pairs.

Trace files are JSONL; each line is either ``{"iter": i, "ip": x}`` or
``{"iter": i, "g1": [...], "g2": [...]}`` (optionally with ``"ip"`` too).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .harmonizer import GradientPair, HarmonizeMethod, harmonize
from .vecmath import dot, norm


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TraceEntry:
    iter: int
    inner_product: float
    g1: np.ndarray | None = None
    g2: np.ndarray | None = None

    @property
    def has_gradients(self) -> bool:
        return self.g1 is not None


@dataclass(frozen=True)
class GradientTrace:
    entries: tuple[TraceEntry, ...]

    def __post_init__(self) -> None:
        iters = [e.iter for e in self.entries]
        if any(b <= a for a, b in zip(iters, iters[1:])):
            raise ValueError("trace iterations must be strictly increasing")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def inner_products(self) -> np.ndarray:
        return np.array([e.inner_product for e in self.entries], dtype=np.float64)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[np.ndarray, np.ndarray]], start: int = 0) -> "GradientTrace":
        return cls(tuple(
            TraceEntry(start + i, dot(g1, g2), np.asarray(g1, dtype=np.float64), np.asarray(g2, dtype=np.float64))
            for i, (g1, g2) in enumerate(pairs)
        ))


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    total: int
    obtuse_fraction: float

    def to_dict(self) -> dict:
        return {
            "bin_edges": self.bin_edges.tolist(),
            "counts": self.counts.tolist(),
            "total": self.total,
            "obtuse_fraction": self.obtuse_fraction,
        }

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            fh.write("left,right,count\n")
            for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
                fh.write(f"{lo!r},{hi!r},{int(c)}\n")


def _parse_line(raw: str, lineno: int, path: Path) -> TraceEntry:
    where = f"{path}: line {lineno}"
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"{where}: invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict) or not isinstance(obj.get("iter"), int) or isinstance(obj.get("iter"), bool):
        raise TraceFormatError(f"{where}: expected an object with an integer 'iter'")
    if "g1" in obj or "g2" in obj:
        try:
            g1 = np.asarray(obj["g1"], dtype=np.float64)
            g2 = np.asarray(obj["g2"], dtype=np.float64)
        except (KeyError, TypeError, ValueError):
            raise TraceFormatError(f"{where}: 'g1' and 'g2' must both be numeric arrays") from None
        if g1.ndim != 1 or g1.shape != g2.shape or g1.size == 0:
            raise TraceFormatError(f"{where}: 'g1' and 'g2' must be non-empty vectors of equal length")
        if not (np.all(np.isfinite(g1)) and np.all(np.isfinite(g2))):
            raise TraceFormatError(f"{where}: non-finite gradient entry")
        ip = dot(g1, g2)
        if "ip" in obj:
            stored = obj["ip"]
            if not isinstance(stored, (int, float)) or abs(stored - ip) > 1e-12 * max(abs(ip), norm(g1) * norm(g2), 1e-300):
                raise TraceFormatError(f"{where}: stored 'ip' disagrees with g1.g2")
        return TraceEntry(obj["iter"], ip, g1, g2)
    ip = obj.get("ip")
    if isinstance(ip, bool) or not isinstance(ip, (int, float)) or not math.isfinite(ip):
        raise TraceFormatError(f"{where}: expected a finite numeric 'ip' or 'g1'/'g2' arrays")
    return TraceEntry(obj["iter"], float(ip))


def load_trace(path: str | Path) -> GradientTrace:
    path = Path(path)
    entries = []
    last = None
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            e = _parse_line(raw, lineno, path)
            if last is not None and e.iter <= last:
                raise TraceFormatError(f"{path}: line {lineno}: iter {e.iter} does not increase (previous {last})")
            last = e.iter
            entries.append(e)
    return GradientTrace(tuple(entries))


def write_trace(trace: GradientTrace, path: str | Path, *, gradients: bool = True) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for e in trace.entries:
            obj: dict = {"iter": e.iter, "ip": e.inner_product}
            if gradients and e.has_gradients:
                obj["g1"] = e.g1.tolist()
                obj["g2"] = e.g2.tolist()
            fh.write(json.dumps(obj) + "\n")


def histogram(trace: GradientTrace, num_bins: int = 20) -> Histogram:
    """Equal-width bins over the data range; the rightmost bin is closed."""
    if num_bins < 2:
        raise ValueError("num_bins must be >= 2")
    if len(trace) == 0:
        raise ValueError("cannot histogram an empty trace")
    ips = trace.inner_products
    counts, edges = np.histogram(ips, bins=num_bins)
    return Histogram(edges, counts, int(ips.size), float(np.count_nonzero(ips < 0.0)) / ips.size)


def post_harmonization_trace(trace: GradientTrace, method: HarmonizeMethod) -> GradientTrace:
    """Replay ``method`` on each stored pair and keep the harmonized pairs."""
    if any(not e.has_gradients for e in trace.entries):
        raise ValueError("replay needs full g1/g2 entries, not inner products only")
    out = []
    for e in trace.entries:
        r = harmonize(method, GradientPair(e.g1, e.g2))
        out.append(TraceEntry(e.iter, dot(r.tilde_g1, r.tilde_g2), np.asarray(r.tilde_g1), np.asarray(r.tilde_g2)))
    return GradientTrace(tuple(out))
