"""Time the compiled and numpy LSTM kernels on the filter's hot paths.

    python3 benchmarks/bench_lstm.py [--repeat N]

Reports the best-of-N wall time for one online training session (50 Adam
epochs on a 10-row patch, 3 x 20 network) and for a single forward pass.
"""
import argparse
import timeit

import numpy as np

from rnnfilter import lstm
from rnnfilter.lstm import LstmParams, TrainConfig


def bench(repeat):
    cfg = TrainConfig()
    params = LstmParams.glorot(np.random.default_rng(0), cfg.num_layers, 2, cfg.hidden_size, 2)
    rows = np.random.default_rng(1).normal(size=(10, 2))
    cases = {
        "train_online (50 epochs, M=10)": lambda: lstm.train_online(params, cfg.new_adam(params), rows, cfg),
        "forward_sequence (M=10)": lambda: lstm.forward_sequence(params, rows),
    }
    results = {}
    for name in lstm.available_backends():
        previous = lstm.use_backend(name)
        try:
            for case, fn in cases.items():
                n = 3 if "train" in case and name == "python" else 20
                best = min(timeit.repeat(fn, number=n, repeat=repeat)) / n
                results[(case, name)] = best
        finally:
            lstm.use_backend(previous)
    return cases, results


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    cases, results = bench(args.repeat)
    backends = lstm.available_backends()
    print(f"{'case':<34}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for case in cases:
        line = f"{case:<34}" + "".join(f"{results[(case, b)] * 1e3:>10.3f}ms" for b in backends)
        if len(backends) > 1:
            line += f"{results[(case, 'python')] / results[(case, 'compiled')]:>11.1f}x"
        print(line)
    if len(backends) == 1:
        print("compiled extension not available; only the numpy kernels were timed")


if __name__ == "__main__":
    main()
