"""Time the hot kernels with numba on and off.

Each backend runs in its own interpreter because the backend is fixed at
import time by PLANTGROWTH_DISABLE_NUMBA. Compilation is excluded: every case
is run once before timing.

    python3 benchmarks/bench_kernels.py --repeat 5
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from plantgrowth import _accel, _kernels, ingest
from plantgrowth.curvefit import rolling_fits
from plantgrowth.envmodel.regressors import fit_knn, fit_linear_svr

repeat = int(sys.argv[1])
batch = ingest.generate_synthetic_batches(ingest.SyntheticGroundTruth(), 1, 31, seed=0)[0]
rng = np.random.default_rng(0)
x, y, q = rng.normal(size=(600, 42)), rng.normal(size=600), rng.normal(size=(150, 42))
knn = fit_knn(x, y)
sx, sy = rng.normal(size=(300, 7)), rng.normal(size=300)
r, v = rng.normal(size=4096), rng.normal(size=4096)
d = (rng.random(4096) < 0.03).astype(float)

cases = {
    "rolling_fits (26 LM fits)": lambda: rolling_fits(batch),
    "knn predict (150 x 600 rows)": lambda: knn.predict(q),
    "linear_svr fit (300 rows, 100 epochs)": lambda: fit_linear_svr(sx, sy, epochs=100),
    "gae (4096 steps)": lambda: _kernels.gae(r, v, d, 0.0, 0.99, 0.95),
}
out = {}
for name, fn in cases.items():
    fn()
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    out[name] = min(times)
print(json.dumps({"numba": _accel.USE_NUMBA, "times": out}))
"""


def run_backend(disable: bool, repeat: int) -> dict:
    env = dict(os.environ, PLANTGROWTH_DISABLE_NUMBA="1" if disable else "0")
    proc = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env, capture_output=True, text=True,
                          check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5, help="timed runs per case (best is reported)")
    parser.add_argument("--json", help="also write the results to this file")
    args = parser.parse_args(argv)

    fast = run_backend(False, args.repeat)
    slow = run_backend(True, args.repeat)
    if not fast["numba"]:
        print("numba is not available; both columns use the numpy path")
    width = max(len(k) for k in fast["times"])
    print(f"{'case':<{width}}  {'numba (ms)':>11}  {'numpy (ms)':>11}  {'speedup':>8}")
    for name, t_fast in fast["times"].items():
        t_slow = slow["times"][name]
        print(f"{name:<{width}}  {1e3 * t_fast:>11.3f}  {1e3 * t_slow:>11.3f}  {t_slow / t_fast:>7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"numba": fast["times"], "numpy": slow["times"]}, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
