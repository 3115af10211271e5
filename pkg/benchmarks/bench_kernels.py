"""Compare the numba-compiled kernels with the pure-numpy fallback.

Each backend runs in its own interpreter, because the choice is made at
import time from ``MOTIONIMIT_DISABLE_NUMBA``. Usage::

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import json
import os
import subprocess
import sys
import timeit


def _measure(repeat):
    import numpy as np

    from motionimit import _kernels as K
    from motionimit import rbd
    from motionimit.env.plant import toy_plant

    chain = toy_plant().chain
    rng = np.random.default_rng(0)
    q = np.concatenate((rng.normal(size=3), [1.0, 0.0, 0.0, 0.0], rng.normal(size=chain.n_joints)))
    qd = rng.normal(size=chain.nv)
    tau = np.concatenate((np.zeros(6), rng.normal(size=chain.n_joints)))
    f = rng.normal(size=200)
    valid = rng.random(200) < 0.8
    cases = {
        "crba": lambda: rbd.mass_matrix(chain, q),
        "rnea": lambda: rbd.bias_forces(chain, q, qd),
        "forward_dynamics": lambda: rbd.forward_dynamics(chain, q, qd, tau),
        "floor_softmax": lambda: K.floor_softmax(f, valid, 0.25, 0.15),
    }
    out = {}
    for name, fn in cases.items():
        fn()  # compile / warm up
        n = max(1, repeat)
        out[name] = min(timeit.repeat(fn, number=n, repeat=3)) / n * 1e6
    return {"numba": K.USE_NUMBA, "us_per_call": out}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        print(json.dumps(_measure(args.repeat)))
        return
    results = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, MOTIONIMIT_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, __file__, "--child", "--repeat", str(args.repeat)],
                             env=env, capture_output=True, text=True, check=True)
        results[label] = json.loads(res.stdout.strip().splitlines()[-1])
    print(f"{'kernel':<18}{'numba (us)':>12}{'numpy (us)':>12}{'speedup':>10}")
    for name in results["numba"]["us_per_call"]:
        a = results["numba"]["us_per_call"][name]
        b = results["numpy"]["us_per_call"][name]
        print(f"{name:<18}{a:>12.2f}{b:>12.2f}{b / a:>10.1f}")
    if not results["numba"]["numba"]:
        print("note: numba unavailable, both columns ran the numpy fallback")


if __name__ == "__main__":
    main()
