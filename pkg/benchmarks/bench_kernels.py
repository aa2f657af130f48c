"""Time the numba and numpy flavours of the hot kernels side by side.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Both flavours are called directly, so the ``QPATHDIM_NUMBA`` flag does not
matter here. The numba timings exclude the first (compiling) call.
"""

import argparse
import time

import numpy as np

from qpathdim import _accel
from qpathdim import specfun
from qpathdim.pimc import UNIT, PotentialSpec, run_chain


def _best(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_ladders(repeat):
    rng = np.random.default_rng(0)
    rows = 4096
    nu0 = rng.choice([0.0, 0.25, 0.5, 0.75], rows)
    x = rng.uniform(0.1, 25.0, rows)
    count = 51
    need = np.full(rows, count)
    ref = specfun._ladders_numpy(nu0, x, count, need)
    out = {"numpy": _best(lambda: specfun._ladders_numpy(nu0, x, count, need), repeat)}
    if _accel.HAVE_NUMBA:
        got = specfun._ladders_numba(nu0, x, count, need)
        out["numba"] = _best(lambda: specfun._ladders_numba(nu0, x, count, need), repeat)
        out["max_rel_diff"] = float(np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1e-300)))
    return f"Bessel ladders ({rows} rows x {count} orders)", out


def bench_pimc(repeat, kind="harmonic", n=256, sweeps=200):
    pot = PotentialSpec(kind)

    def run(backend):
        return run_chain(pot, UNIT, n, 1.0 / n, sweeps=sweeps, therm_sweeps=50, seed=1, backend=backend)

    out = {"numpy": _best(lambda: run("numpy"), repeat)}
    if _accel.HAVE_NUMBA:
        out["numba"] = _best(lambda: run("numba"), repeat)
        a, b = run("numpy"), run("numba")
        out["max_rel_diff"] = float(np.max(np.abs(a.length - b.length) / np.abs(a.length)))
    return f"PIMC {kind} chain (N={n}, {sweeps + 50} sweeps)", out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"{'kernel':<46} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8} {'max rel diff':>13}")
    for name, res in (bench_ladders(args.repeat), bench_pimc(args.repeat)):
        nb = res.get("numba")
        speed = f"{res['numpy'] / nb:8.1f}" if nb else f"{'n/a':>8}"
        nb_s = f"{nb:10.4f}" if nb else f"{'n/a':>10}"
        diff = f"{res['max_rel_diff']:13.1e}" if "max_rel_diff" in res else f"{'n/a':>13}"
        print(f"{name:<46} {res['numpy']:10.4f} {nb_s} {speed} {diff}")


if __name__ == "__main__":
    main()
