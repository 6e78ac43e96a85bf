"""Compare the compiled LSTM recurrence with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Shapes mirror the places the recurrence runs in the model: one streaming
frame through the time LSTM (T=1, many rows), a frequency sweep of the
bidirectional LSTM (T = bins, many rows), and a training-size batch.
Prints key=value lines; both backends are also checked to agree.
"""
import argparse
import time

import numpy as np
from threadpoolctl import threadpool_limits

from dccrnplus import _kernels
from dccrnplus._kernels import fallback

CASES = {
    # name: (T, B, H)
    "stream_time_lstm": (1, 4, 256),
    "freq_blstm_full": (4, 1, 256),
    "freq_blstm_toy": (4, 100, 32),
    "train_time_lstm_toy": (100, 16, 32),
    "train_time_lstm_full": (100, 4, 256),
}


def median_time(fn, repeat: int) -> float:
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if _kernels.compiled is None:
        print("compiled=missing (build with `pip install -e . --no-build-isolation`); fallback only")
    rng = np.random.default_rng(0)
    with threadpool_limits(limits=1):
        for name, (t, b, h) in CASES.items():
            xw = rng.standard_normal((t, b, 4 * h)).astype(np.float32)
            w_hh = (rng.standard_normal((h, 4 * h)) / np.sqrt(h)).astype(np.float32)
            h0 = np.zeros((b, h), np.float32)
            c0 = np.zeros((b, h), np.float32)
            dh = rng.standard_normal((t, b, h)).astype(np.float32)
            row = {"case": name, "T": t, "B": b, "H": h}
            outs = {}
            for label, mod in (("python", fallback), ("compiled", _kernels.compiled)):
                if mod is None:
                    continue
                hs, cs, gates = mod.lstm_forward(xw, w_hh, h0, c0)
                outs[label] = hs
                row[f"{label}_fwd_us"] = 1e6 * median_time(lambda m=mod: m.lstm_forward(xw, w_hh, h0, c0), args.repeat)
                row[f"{label}_bwd_us"] = 1e6 * median_time(
                    lambda m=mod: m.lstm_backward(dh, gates, cs, c0, w_hh), args.repeat)
            if len(outs) == 2:
                row["max_abs_diff"] = float(np.max(np.abs(outs["python"] - outs["compiled"])))
                row["fwd_speedup"] = row["python_fwd_us"] / row["compiled_fwd_us"]
                row["bwd_speedup"] = row["python_bwd_us"] / row["compiled_bwd_us"]
            print(" ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))


if __name__ == "__main__":
    main()
