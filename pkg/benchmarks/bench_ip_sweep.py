"""Time one iterative-projection sweep with each available backend.

Usage::

    python benchmarks/bench_ip_sweep.py [--repeat 20] [--frames 158]

Shapes default to a 10 s, 16 kHz scene with a 2048/1024 STFT.
"""
import argparse
import timeit

import numpy as np

from subband_bss import _backend


def make_inputs(n_freq, n_frames, n_chan, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_freq, n_frames, n_chan)) + 1j * rng.standard_normal((n_freq, n_frames, n_chan))
    W = np.tile(np.eye(n_chan, dtype=complex), (n_freq, 1, 1))
    W += 0.1 * (rng.standard_normal(W.shape) + 1j * rng.standard_normal(W.shape))
    phi = rng.uniform(0.1, 2.0, (n_freq, n_frames, n_chan))
    return X, phi, W


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--freqs", type=int, default=1025)
    p.add_argument("--frames", type=int, default=158)
    p.add_argument("--channels", type=int, nargs="+", default=[2, 3, 4])
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args(argv)

    backends = _backend.available()
    print(f"default backend: {_backend.BACKEND}; available: {', '.join(backends)}")
    print(f"{'M':>3} {'backend':>9} {'ms/sweep':>10} {'speedup':>8} {'max |diff|':>11}")
    for M in args.channels:
        X, phi, W = make_inputs(args.freqs, args.frames, M)
        ref = backends["python"](X, phi, W)
        base = None
        for name, fn in backends.items():
            fn(X, phi, W)  # warm-up
            t = min(timeit.repeat(lambda: fn(X, phi, W), number=1, repeat=args.repeat)) * 1e3
            base = base or t
            diff = np.abs(fn(X, phi, W) - ref).max()
            print(f"{M:>3} {name:>9} {t:>10.2f} {base / t:>7.1f}x {diff:>11.1e}")


if __name__ == "__main__":
    main()
