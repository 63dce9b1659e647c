"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Kernel timings call each backend module directly. The end-to-end rows
(harmonize loop, short training run) run in subprocesses, one with
``GRADHARMONY_PURE=1``, so the whole package uses a single backend.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from gradharmony._backend import available_backends

END_TO_END = {
    "harmonize x2000 (dim 50)": """
import numpy as np
from gradharmony import GradientPair, HarmonizeMethod, harmonize
rng = np.random.default_rng(0)
pairs = [(rng.standard_normal(50), -rng.standard_normal(50)) for _ in range(2000)]
m = HarmonizeMethod.parse("gh")
import time; t = time.perf_counter()
for g1, g2 in pairs:
    harmonize(m, GradientPair(g1, g2))
print(time.perf_counter() - t)
""",
    "train 300 iters (gh)": """
from gradharmony.scenario import make_blobs
from gradharmony.trainer import TrainConfig, train
from gradharmony.harmonizer import HarmonizeMethod
data = make_blobs(0)
import time; t = time.perf_counter()
train(TrainConfig(method=HarmonizeMethod.parse("gh"), iterations=300), data)
print(time.perf_counter() - t)
""",
}


def bench_kernels(repeat: int) -> list[tuple[str, dict[str, float]]]:
    rng = np.random.default_rng(0)
    rows = []
    backends = available_backends()
    for n in (50, 10_000, 1_000_000):
        a, b = rng.standard_normal(n), rng.standard_normal(n)
        cases = {
            f"dot n={n}": lambda k: k.dot(a, b),
            f"pair_stats n={n}": lambda k: k.pair_stats(a, b),
            f"project_out n={n}": lambda k: k.project_out(a, b, 0.3, -0.2),
        }
        for name, fn in cases.items():
            rows.append((name, {bk: _best(lambda: fn(mod), repeat) for bk, mod in backends.items()}))
    for n in (100, 400):
        x, y = rng.standard_normal((n, 2)), rng.standard_normal((n, 2))
        rows.append((f"sq_dists {n}x{n}", {bk: _best(lambda: mod.sq_dists(x, y), repeat) for bk, mod in backends.items()}))
    return rows


def _best(fn, repeat: int) -> float:
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def bench_end_to_end() -> list[tuple[str, dict[str, float]]]:
    rows = []
    for name, code in END_TO_END.items():
        times = {}
        for bk, pure in (("cython", "0"), ("python", "1")):
            env = dict(os.environ, GRADHARMONY_PURE=pure)
            out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
            times[bk] = float(out.stdout.strip())
        rows.append((name, times))
    return rows


def fmt(seconds: float) -> str:
    for unit, scale in (("s", 1.0), ("ms", 1e-3), ("us", 1e-6)):
        if seconds >= scale:
            return f"{seconds / scale:8.2f} {unit}"
    return f"{seconds / 1e-9:8.1f} ns"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy backend is available")
    rows = bench_kernels(args.repeat)
    if "cython" in backends:
        rows += bench_end_to_end()
    names = sorted(backends)
    print(f"{'case':32s}" + "".join(f"{n:>14s}" for n in names) + ("  python/cython" if len(names) > 1 else ""))
    for name, t in rows:
        line = f"{name:32s}" + "".join(f"{fmt(t[n]):>14s}" for n in names)
        if len(names) > 1:
            line += f"  {t['python'] / t['cython']:10.2f}x"
        print(line)


if __name__ == "__main__":
    main()
