"""Time the numba and numpy flavours of each hot kernel on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeats N]

Both flavours are imported directly, so MANTAE_DISABLE_NUMBA does not matter
here.  End-to-end training is dominated by BLAS matrix products, which neither
flavour touches; see the last block for a per-epoch comparison.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from mantae import _kernels as K


def best_of(fn, repeats):
    fn()  # warm-up (and JIT compile)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def report(name, t_nb, t_np):
    print(f"{name:<34} numba {t_nb * 1e3:9.3f} ms   numpy {t_np * 1e3:9.3f} ms   speedup {t_np / t_nb:5.2f}x")


EPOCH_SNIPPET = """
import time
from mantae.datagen import SynthConfig, synth_tucker_batch, train_test_split
from mantae.models import build_model
from mantae.training import TrainConfig, train
ds = synth_tucker_batch(SynthConfig(order=3, dim=20, seed=0))
tr, te = train_test_split(ds, 0.8, 0)
m = build_model("ma-ntae", ds.noisy.shape, 0.5)
train(m, tr, te, TrainConfig(epochs=1, batch_size=16))
t0 = time.perf_counter()
train(m, tr, te, TrainConfig(epochs=5, batch_size=16, eval_every=5))
print((time.perf_counter() - t0) / 5)
"""


def epoch_time(disable):
    env = dict(os.environ, MANTAE_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", EPOCH_SNIPPET], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--skip-epoch", action="store_true")
    args = ap.parse_args()
    if not K.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    r = args.repeats

    x = rng.standard_normal((512, 20, 20, 20))
    for mode in (1, 3):
        report(f"unfold (512,20,20,20) mode {mode}",
               best_of(lambda: K.unfold_numba(x, mode), r), best_of(lambda: K.unfold_numpy(x, mode), r))
    m = K.unfold_numpy(x, 2)
    report("fold (512,20,20,20) mode 2",
           best_of(lambda: K.fold_numba(m, 2, x.shape), r), best_of(lambda: K.fold_numpy(m, 2, x.shape), r))

    for n in (20, 64):
        a = rng.standard_normal((n, n))
        a = a @ a.T
        report(f"jacobi eigh {n}x{n}", best_of(lambda: K.jacobi_eigh_numba(a), r),
               best_of(lambda: K.jacobi_eigh_numpy(a), r))

    pts = rng.standard_normal((2000, 25))
    cents = rng.standard_normal((10, 25))
    report("k-means assign 2000x25, k=10", best_of(lambda: K.assign_numba(pts, cents), r),
           best_of(lambda: K.assign_numpy(pts, cents), r))

    size = 8_000_000
    p, g, mm = (rng.standard_normal(size) for _ in range(3))
    v = np.abs(rng.standard_normal(size))
    args_adam = (0.9, 0.999, 1e-8, 0.5, 1e-3)
    report(f"adam update {size:,} params", best_of(lambda: K.adam_numba(p, g, mm, v, *args_adam), r),
           best_of(lambda: K.adam_numpy(p, g, mm, v, *args_adam), r))

    if not args.skip_epoch:
        report("MA-NTAE epoch, order 3, I=20", epoch_time(False), epoch_time(True))


if __name__ == "__main__":
    main()
