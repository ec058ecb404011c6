"""Time the compiled kernels against the pure numpy reference.

Runs the two hot loops (mask-weighted covariance accumulation and the
per-frequency generalized eigendecomposition) on workloads shaped like a
typical enhancement scene: a 4-channel stack of a few hundred frames at
257 frequency bins. Prints one table row per kernel and backend.

Usage::

    python3 benchmarks/bench_kernels.py [--frames 300] [--repeats 20]

The compiled backend is skipped (with a note) when the extension was not
built; results for the numpy reference are printed either way.
"""

import argparse
import time

import numpy as np

from phonobeam._kernels import reference

try:
    from phonobeam._kernels import _compiled
except ImportError:
    _compiled = None


def _random_stack(rng, channels, frames, freqs):
    real = rng.standard_normal((channels, frames, freqs))
    imag = rng.standard_normal((channels, frames, freqs))
    return real + 1j * imag


def _random_hermitian_field(rng, freqs, channels, ridge):
    a = _random_stack(rng, channels, 2 * channels, freqs).transpose(2, 0, 1)
    field = a @ a.conj().transpose(0, 2, 1) / (2 * channels)
    field += ridge * np.eye(channels)
    return field


def _time_call(fn, args, repeats):
    # One warm-up call, then the best of `repeats` timed runs.
    fn(*args)
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--channels", type=int, default=4)
    parser.add_argument("--frames", type=int, default=300)
    parser.add_argument("--freqs", type=int, default=257)
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    stack = _random_stack(rng, args.channels, args.frames, args.freqs)
    weights = rng.uniform(0.0, 1.0, size=(args.frames, args.freqs))
    speech = _random_hermitian_field(rng, args.freqs, args.channels, 1e-3)
    noise = _random_hermitian_field(rng, args.freqs, args.channels, 1.0)

    backends = [("numpy", reference)]
    if _compiled is not None:
        backends.append(("compiled", _compiled))

    cases = [
        ("weighted_covariance", (stack, weights)),
        ("gevd", (speech, noise)),
    ]

    print(
        f"channels={args.channels} frames={args.frames} freqs={args.freqs} "
        f"(best of {args.repeats})"
    )
    header = f"{'kernel':<22}{'backend':<10}{'time':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, call_args in cases:
        baseline = None
        for label, module in backends:
            elapsed = _time_call(getattr(module, name), call_args, args.repeats)
            if baseline is None:
                baseline = elapsed
            speedup = f"{baseline / elapsed:.2f}x"
            print(f"{name:<22}{label:<10}{elapsed * 1e3:>10.2f}ms{speedup:>10}")
    if _compiled is None:
        print("compiled extension not built; only the numpy reference was timed")


if __name__ == "__main__":
    main()
