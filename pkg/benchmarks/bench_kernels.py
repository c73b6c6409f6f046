"""Compare the compiled and pure-Python kernels.

    python benchmarks/bench_kernels.py [--sizes 1000 100000] [--repeat 5]

Reports the best-of-``repeat`` wall time of the Philox uniform generator, the
fused resampling kernel and a full 20-step walker run for every available
backend, and checks that both backends return identical arrays.
"""
import argparse
import timeit

import numpy as np

from fkdmc.engine import gaussian_fk_model, run
from fkdmc.gaussian import GaussianMeasure, GaussianModel
from fkdmc.rng import CounterRNG, available_backends


def bench(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[1_000, 10_000, 100_000])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args()

    backends = available_backends()
    model = GaussianModel.scalar(0.5, 1.0, 1.0)
    fk = gaussian_fk_model(model, GaussianMeasure.scalar(0.0, 1.0))
    print(f"backends: {', '.join(backends)}; threads={args.threads}")
    print(f"{'kernel':<10}{'N':>9}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for N in args.sizes:
        gen = np.random.default_rng(N)
        cumw = np.cumsum(gen.random(N))
        survive, uk, up = gen.random(N), gen.random(N), gen.random(N)
        rows = {"uniforms": {}, "resample": {}, "run20": {}}
        outputs = {"uniforms": [], "resample": []}
        for b in backends:
            rng = CounterRNG(12345, args.threads, b)
            rows["uniforms"][b] = bench(lambda: rng.uniforms(3, 0, N, 4), args.repeat)
            rows["resample"][b] = bench(lambda: rng.resample(cumw, survive, uk, up), args.repeat)
            rows["run20"][b] = bench(lambda: run(fk, N, 20, 7, threads=args.threads, backend=b),
                                     max(1, args.repeat // 2))
            outputs["uniforms"].append(rng.uniforms(3, 0, N, 4))
            outputs["resample"].append(rng.resample(cumw, survive, uk, up))
        for name, arrs in outputs.items():
            assert all(np.array_equal(arrs[0], a) for a in arrs[1:]), f"{name} differs"
        for name, times in rows.items():
            line = f"{name:<10}{N:>9}" + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
            if len(backends) > 1:
                line += f"{times['python'] / times['cython']:>9.1f}x"
            print(line)


if __name__ == "__main__":
    main()
