"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--batch 1024] [--classes 8] [--dim 2]
"""

import argparse
import timeit

import numpy as np

from hyperhier import kernels


def _inputs(batch, K, n, seed=0):
    rng = np.random.default_rng(seed)

    def ball(count):
        d = rng.standard_normal((count, n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return d * rng.uniform(0, 0.99, (count, 1))

    return ball(batch), rng.integers(0, K, batch), ball(K), rng.standard_normal((K, n)), ball(batch // 2)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=1024)
    ap.add_argument("--classes", type=int, default=8)
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    H, y, R, W, Y = _inputs(args.batch, args.classes, args.dim)
    found = kernels.backends()
    cases = {
        "hyp_logits": lambda m: m.hyp_logits(H, R, W, 1.0),
        "hyp_loss_grad": lambda m: m.hyp_loss_grad(H, y, R, W, 1.0),
        "pairwise_poincare": lambda m: m.pairwise_poincare(H, Y, 1.0),
        "pairwise_euclidean": lambda m: m.pairwise_euclidean(H, Y),
    }
    print(f"B={args.batch} K={args.classes} n={args.dim}; best of {args.repeat}, microseconds per call")
    print(f"{'kernel':<20}" + "".join(f"{name:>12}" for name in found) + f"{'speedup':>10}")
    for label, fn in cases.items():
        times = {}
        for name, mod in found.items():
            timer = timeit.Timer(lambda: fn(mod))
            number, _ = timer.autorange()
            times[name] = min(timer.repeat(args.repeat, number)) / number * 1e6
        speed = f"{times['numpy'] / times['cython']:>9.1f}x" if "cython" in times else f"{'n/a':>10}"
        print(f"{label:<20}" + "".join(f"{t:>12.1f}" for t in times.values()) + speed)


if __name__ == "__main__":
    main()
