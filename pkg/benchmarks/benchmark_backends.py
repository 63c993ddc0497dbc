#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the three kernels at evaluation-sized workloads and, when the
extension is available, a full dynamic-fusion evaluation pass with each
backend swapped in.  Run from anywhere after installing the package:

    python benchmarks/benchmark_backends.py
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from promptfuse import _kernels_py
from promptfuse import backend as backend_mod

try:
    from promptfuse import _accel
except ImportError:
    _accel = None


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def kernel_cases(n_images, n_classes, length, width, dim, seed=0):
    rng = np.random.default_rng(seed)
    return {
        "prompts": rng.standard_normal((n_classes, length, width)),
        "learned": rng.standard_normal((n_classes, length, width)),
        "handcrafted": rng.standard_normal((n_classes, length, width)),
        "alphas": rng.uniform(0.0, 1.0, size=n_images),
        "mix": rng.standard_normal((length, length)),
        "proj": rng.standard_normal((width, dim)),
        "upstreams": rng.standard_normal((n_classes, dim)),
    }


def bench_kernels(repeats, n_images, n_classes, length, width, dim):
    case = kernel_cases(n_images, n_classes, length, width, dim)
    impls = [("python", _kernels_py)] + ([("compiled", _accel)] if _accel else [])
    rows = []
    for kernel, args in (
        ("encode_batch", ("prompts", "mix", "proj")),
        ("encode_grad_batch", ("prompts", "mix", "proj", "upstreams")),
        ("fused_encode_batch", ("learned", "handcrafted", "alphas", "mix", "proj")),
    ):
        timings = {}
        for name, impl in impls:
            fn = getattr(impl, kernel)
            packed = tuple(case[a] for a in args)
            timings[name] = best_of(lambda: fn(*packed), repeats)
        rows.append((kernel, timings))
    return rows


def bench_end_to_end(repeats):
    """One full dynamic-fusion evaluation of the standard task per backend."""
    from promptfuse.config import RunSettings
    from promptfuse.encoder import encode_image_batch
    from promptfuse.fusion import OpenClassPredictor, build_prompt_bank
    from promptfuse.harness import derive_seeds, generate_synthetic_task, sample_few_shot
    from promptfuse.tuning import TrainConfig, train_coop

    s = RunSettings()
    seeds = derive_seeds(s.seed)
    task = generate_synthetic_task(
        s.n_classes, s.dim, s.noise_scale, s.train_per_class, seeds.task,
        test_per_class=s.test_per_class, embed_width=s.embed_width,
        feat_dim=s.feat_dim,
    )
    few = sample_few_shot(task, s.shots, seeds.sample)
    context = train_coop(
        few,
        TrainConfig(max_epochs=s.epochs, shots=s.shots, seed=seeds.train, tau=s.tau),
        task.encoders, task.universe, task.template,
    )
    bank = build_prompt_bank(context, task.encoders, task.universe)
    feats = encode_image_batch(task.test_pool.samples, task.encoders.image)

    def run_eval():
        predictor = OpenClassPredictor(bank, task.universe, task.encoders, s.tau)
        for i in range(feats.shape[0]):
            predictor(feats[i])

    timings = {}
    originals = {
        name: getattr(backend_mod, name)
        for name in ("encode_batch", "encode_grad_batch", "fused_encode_batch")
    }
    impls = [("python", _kernels_py)] + ([("compiled", _accel)] if _accel else [])
    try:
        for name, impl in impls:
            for attr in originals:
                setattr(backend_mod, attr, getattr(impl, attr))
            timings[name] = best_of(run_eval, repeats)
    finally:
        for attr, fn in originals.items():
            setattr(backend_mod, attr, fn)
    return feats.shape[0], timings


def fmt_row(label, timings):
    python = timings.get("python")
    compiled = timings.get("compiled")
    line = f"{label:28s} python {python * 1e3:9.3f} ms"
    if compiled is not None:
        line += f"   compiled {compiled * 1e3:9.3f} ms   speedup {python / compiled:5.2f}x"
    return line


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--images", type=int, default=2000)
    parser.add_argument("--classes", type=int, default=50)
    parser.add_argument("--length", type=int, default=8)
    parser.add_argument("--width", type=int, default=32)
    parser.add_argument("--dim", type=int, default=16)
    args = parser.parse_args()

    print(f"active backend: {backend_mod.backend_name()}")
    if _accel is None:
        print("compiled extension not built; timing the pure-numpy kernels only")
    print(
        f"kernel workload: {args.images} inputs, {args.classes} classes, "
        f"prompts {args.length}x{args.width} -> {args.dim} dims"
    )
    for kernel, timings in bench_kernels(
        args.repeats, args.images, args.classes, args.length, args.width, args.dim
    ):
        print(fmt_row(kernel, timings))

    n_eval, timings = bench_end_to_end(max(2, args.repeats // 2))
    print(f"dynamic-fusion evaluation ({n_eval} test images, standard task):")
    print(fmt_row("  end-to-end eval", timings))


if __name__ == "__main__":
    main()
