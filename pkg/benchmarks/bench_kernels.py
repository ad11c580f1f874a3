"""Compare the compiled and numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--steps 20000] [--repeat 3]

Times one exponential Euler step of the deterministic flow and of the noisy
segment kernel (barrier probing and deviation tracking on), and checks that
both backends produce the same state.
"""

import argparse
import time

import numpy as np

from chafee_exit import kernels, noise, pde_core


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--steps", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--dt", type=float, default=0.01)
    args = ap.parse_args(argv)

    params = pde_core.ModelParams(dt=args.dt)
    ops = pde_core.galerkin(params.n_modes, params.grid_points)
    E, P1 = ops.etd_coefficients(args.dt)
    phi, _ = pde_core.stable_equilibria(params)
    spec = noise.default_spec(1.5, params.n_modes, r_min=0.05)
    sc = noise.ScalingParams(2**-5, gamma=1.0)
    rows = noise.small_jump_coefficients(spec, sc, np.full(args.steps, args.dt),
                                         np.random.default_rng(0))
    barrier = ops.B @ phi - 0.4
    a0 = phi + 0.3 * np.random.default_rng(1).standard_normal(params.n_modes) / np.arange(1, 33) ** 2

    mods = {"python": kernels.backend_module("python")}
    try:
        mods["cython"] = kernels.backend_module("cython")
    except ImportError:
        print("compiled backend not available; timing numpy only")

    results, states = {}, {}
    for name, mod in mods.items():
        def advance():
            a = a0.copy()
            mod.etd_advance(a, args.steps, E, P1, ops.eig, args.dt, ops.B, ops.P, params.lam, 1e6)
            states[(name, "advance")] = a

        def segment():
            a, dev = a0.copy(), a0.copy()
            mod.noisy_segment(a, 0, args.steps, rows, spec.axes, sc.epsilon, E, P1, ops.eig,
                              args.dt, ops.B, ops.P, params.lam, 10, barrier, 1, True, dev, True,
                              np.inf, 1e6)
            states[(name, "segment")] = a
        results[name] = (best_of(advance, args.repeat), best_of(segment, args.repeat))

    print(f"N={params.n_modes} M={params.grid_points} dt={args.dt} steps={args.steps}")
    print(f"{'backend':<8} {'advance us/step':>16} {'segment us/step':>16}")
    for name, (ta, ts) in results.items():
        print(f"{name:<8} {1e6 * ta / args.steps:16.2f} {1e6 * ts / args.steps:16.2f}")
    if "cython" in results:
        sa = results["python"][0] / results["cython"][0]
        ss = results["python"][1] / results["cython"][1]
        print(f"speedup  {sa:16.1f} {ss:16.1f}")
        for kind in ("advance", "segment"):
            diff = np.max(np.abs(states[("python", kind)] - states[("cython", kind)]))
            print(f"max |python - cython| after {kind}: {diff:.2e}")


if __name__ == "__main__":
    main()
