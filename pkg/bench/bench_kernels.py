"""Compare the numba kernels with their pure-numpy fallbacks.

Both paths live in retarget.kernels whatever RETARGET_NO_NUMBA says; this
script calls them directly, checks they agree bit for bit and reports the
median time of each.

    python3 bench/bench_kernels.py [--sizes 40x30,160x120] [--repeat 20]
"""
import argparse
import json
import time

import numpy as np

from retarget import kernels
from retarget._accel import HAVE_NUMBA


def _time(fn, *args, repeat):
    fn(*args)  # warm-up (and JIT compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def bench_size(w, h, repeat, rng):
    lum = rng.random((h, w))
    other = rng.random((h, w // 2))
    cost = kernels._pair_cost_np(lum, other)
    cases = {
        "find_seam": (kernels._find_seam_nb, kernels._find_seam_np, (lum,)),
        "pair_cost": (kernels._pair_cost_nb, kernels._pair_cost_np, (lum, other)),
        "dtw": (kernels._dtw_nb, kernels._dtw_np, (cost,)),
    }
    rows = []
    for name, (fast, slow, args) in cases.items():
        same = bool(np.array_equal(fast(*args), slow(*args)))
        t_nb = _time(fast, *args, repeat=repeat)
        t_np = _time(slow, *args, repeat=repeat)
        rows.append({"kernel": name, "size": f"{w}x{h}", "numba_s": t_nb, "numpy_s": t_np,
                     "speedup": t_np / t_nb if t_nb > 0 else None, "identical": same})
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="40x30,160x120,240x180")
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--json", help="also write the rows here")
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba is not installed; both columns time the numpy path")
    rng = np.random.default_rng(0)
    rows = []
    for spec in args.sizes.split(","):
        w, h = (int(v) for v in spec.lower().split("x"))
        rows += bench_size(w, h, args.repeat, rng)
    print(f"{'kernel':<10} {'size':>8} {'numba ms':>10} {'numpy ms':>10} {'x':>7}  same")
    for r in rows:
        print(f"{r['kernel']:<10} {r['size']:>8} {r['numba_s'] * 1e3:10.3f} "
              f"{r['numpy_s'] * 1e3:10.3f} {r['speedup']:7.1f}  {r['identical']}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
