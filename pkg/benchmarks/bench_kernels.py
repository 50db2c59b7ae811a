"""Timings of the compiled kernels against the pure-numpy fallback.

Shapes mirror the training defaults (T visits, 34 features after assembly,
hidden 32, window 6, embedding 8).  Run after an editable install:

    python3 benchmarks/bench_kernels.py [--repeats N] [--seq-len T]
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from seqrisk.kernels import available_backends, get_backend


def _time(fn, repeats: int) -> float:
    fn()  # warmup
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=50)
    ap.add_argument("--seq-len", type=int, default=10)
    ap.add_argument("--features", type=int, default=34)
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--window", type=int, default=6)
    ap.add_argument("--attn-dim", type=int, default=8)
    args = ap.parse_args()

    T, D, H, W, da = args.seq_len, args.features, args.hidden, args.window, args.attn_dim
    rng = np.random.default_rng(0)
    x = rng.standard_normal((T, D))
    mask = np.ones(T, dtype=bool)
    w = rng.standard_normal((4 * H, D)) * 0.2
    u = rng.standard_normal((4 * H, H)) * 0.2
    b = rng.standard_normal(4 * H) * 0.1
    f = rng.standard_normal((T, H))
    wq = rng.standard_normal((H, da)) * 0.3
    wk = rng.standard_normal((H, da)) * 0.3
    wv = rng.standard_normal((H, H)) * 0.3
    gamma = np.asarray(0.5)
    d_seq = rng.standard_normal((T, H))

    def cases(mod):
        return {
            "lstm_seq": (
                lambda: mod.lstm_seq_forward(x, mask, w, u, b),
                lambda cache: mod.lstm_seq_backward(d_seq, cache),
            ),
            "local_lstm": (
                lambda: mod.local_lstm_forward(x, mask, w, u, b, W),
                lambda cache: mod.local_lstm_backward(d_seq, cache),
            ),
            "joint_attention": (
                lambda: mod.joint_attention_forward(f, mask, wq, wk, wv, gamma),
                lambda cache: mod.joint_attention_backward(d_seq, cache),
            ),
        }

    backends = available_backends()
    print(f"T={T} D={D} H={H} window={W} attn_dim={da}  "
          f"(median of {args.repeats}, milliseconds)")
    header = f"{'kernel':<18}{'pass':<10}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name in ("lstm_seq", "local_lstm", "joint_attention"):
        for passname in ("forward", "fwd+bwd"):
            times = []
            for backend in backends:
                fwd, bwd = cases(get_backend(backend))[name]
                if passname == "forward":
                    fn = fwd
                else:
                    def fn():
                        _, cache = fwd()
                        bwd(cache)
                times.append(_time(fn, args.repeats))
            row = f"{name:<18}{passname:<10}" + "".join(f"{t * 1e3:>12.3f}" for t in times)
            if len(times) == 2:
                row += f"{times[0] / times[1]:>9.1f}x"
            print(row)
    if len(backends) < 2:
        print("\ncompiled extension not available; showing the python backend only")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
