"""Compare the compiled and numpy kernel backends.

Times each message-passing kernel on a random graph and one full training
step (forward and backward through all networks) on a generated instance.

    python benchmarks/bench_kernels.py [--nodes N] [--edges E] [--width D] [--repeat R]
"""
import argparse
import time

import numpy as np

from gnndisc.neural import kernels
from gnndisc.neural.kernels import backend_module

NAMES = ("scatter_add_rows", "segment_softmax", "segment_softmax_backward", "attend", "attend_backward")


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def kernel_cases(n, e, d, rng):
    src = np.ascontiguousarray(rng.integers(0, n, e), dtype=np.int64)
    dst = np.ascontiguousarray(np.sort(rng.integers(0, n, e)), dtype=np.int64)
    scores = rng.normal(size=(e, 1))
    z = rng.normal(size=(n, d))
    vals = rng.normal(size=(e, d))
    grad = rng.normal(size=(n, d))

    def cases(mod):
        alpha = mod.segment_softmax(scores, dst, n)
        return {
            "scatter_add_rows": lambda: mod.scatter_add_rows(vals, dst, n),
            "segment_softmax": lambda: mod.segment_softmax(scores, dst, n),
            "segment_softmax_backward": lambda: mod.segment_softmax_backward(alpha, scores, dst, n),
            "attend": lambda: mod.attend(alpha, z, src, dst, n),
            "attend_backward": lambda: mod.attend_backward(grad, alpha, z, src, dst),
        }
    return cases


def training_step_time(mod, repeat):
    from gnndisc.neural.model import Model
    from gnndisc.synthgen import GenConfig, generate_instance
    from gnndisc.training import TrainConfig, prepare_instance, train_step

    saved = {k: getattr(kernels, k) for k in NAMES}
    for k in NAMES:
        setattr(kernels, k, getattr(mod, k))
    try:
        inst = generate_instance(GenConfig(min_leaves=6, mode_leaves=6, max_leaves=6), np.random.default_rng(7))
        ti = prepare_instance(inst.log, inst.net)
        model = Model(seed=0)
        return best_of(lambda: train_step(ti, model, TrainConfig()), repeat), len(ti.order)
    finally:
        for k, v in saved.items():
            setattr(kernels, k, v)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=2000)
    ap.add_argument("--edges", type=int, default=20000)
    ap.add_argument("--width", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    try:
        compiled = backend_module("compiled")
    except ImportError:
        print("compiled extension not built; only the numpy backend is available")
        return
    python = backend_module("python")
    rng = np.random.default_rng(0)
    cases = kernel_cases(args.nodes, args.edges, args.width, rng)
    py_cases, c_cases = cases(python), cases(compiled)
    print(f"graph: {args.nodes} nodes, {args.edges} edges, width {args.width}; best of {args.repeat}")
    print(f"{'kernel':28s} {'python ms':>10s} {'compiled ms':>12s} {'speed-up':>9s}")
    for name in NAMES:
        tp = best_of(py_cases[name], args.repeat)
        tc = best_of(c_cases[name], args.repeat)
        print(f"{name:28s} {tp * 1e3:10.3f} {tc * 1e3:12.3f} {tp / tc:8.1f}x")
    tp, steps = training_step_time(python, 5)
    tc, _ = training_step_time(compiled, 5)
    print(f"{'training step (' + str(steps) + ' targets)':28s} {tp * 1e3:10.1f} {tc * 1e3:12.1f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
