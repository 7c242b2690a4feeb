"""Time the compiled and numpy kernel backends on one training-sized workload.

    python3 benchmarks/bench_kernels.py [--batch 8] [--repeat 200]

Reports microseconds per forward+backward pass of an attention model for each
cell type and backend, and checks the two backends agree on the gradient.
"""

import argparse
import timeit

import numpy as np

from earlykd import kernels
from earlykd.model import ModelConfig, ModelParams, backward_batch, forward_batch


def step(params, X, be):
    fw = forward_batch(params, X, backend=be)
    return backward_batch(params, fw, d_logits=np.ones_like(fw.logits), backend=be)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--weeks", type=int, default=7)
    ap.add_argument("--hidden", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()

    names = kernels.available_backends()
    print(f"backends: {', '.join(names)}")
    rng = np.random.default_rng(0)
    X = rng.random((args.batch, args.weeks, 12))
    print(f"{'cell':8s}" + "".join(f"{n + ' us':>14s}" for n in names) + f"{'speedup':>10s}{'max |dg|':>12s}")
    for cell in ("vanilla", "gru", "lstm"):
        params = ModelParams.init(ModelConfig(cell=cell, hidden=args.hidden, seq_len=args.weeks), 0)
        times, grads = {}, {}
        for name in names:
            be = kernels.load_backend(name)
            grads[name] = step(params, X, be)
            t = min(timeit.repeat(lambda: step(params, X, be), number=args.repeat, repeat=3))
            times[name] = 1e6 * t / args.repeat
        speed = times["python"] / times["cython"] if "cython" in times else 1.0
        diff = max(float(np.abs(grads[n] - grads["python"]).max()) for n in names)
        print(f"{cell:8s}" + "".join(f"{times[n]:14.1f}" for n in names) + f"{speed:10.1f}x{diff:12.1e}")


if __name__ == "__main__":
    main()
