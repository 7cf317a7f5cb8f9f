"""Timing comparison of the compiled and pure-Python tape kernels.

Run:  python benchmarks/bench_kernels.py

Times forward evaluation and full abs-normal extraction on the built-in
two-variable problem and on a batch of random tapes, against both kernel
implementations.  The sweeps are the hot inner loop of the sampling
oracle, which is why they have a compiled twin.
"""

import time

import numpy as np

from absgrad import _kernels_c, _kernels_py, backend
from absgrad.absnormal import extract
from absgrad.problems import phimu_tape, random_tape
from absgrad.tape import forward_eval


def _with_backend(impl, fn):
    saved = (backend.forward_sweep, backend.reverse_sweep)
    backend.forward_sweep = impl.forward_sweep
    backend.reverse_sweep = impl.reverse_sweep
    try:
        return fn()
    finally:
        backend.forward_sweep, backend.reverse_sweep = saved


def bench(label, fn, repeat=3):
    best = min(_time_once(fn) for _ in range(repeat))
    print(f"  {label:<18} {best * 1e3:8.1f} ms")
    return best


def _time_once(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def bench_raw_sweeps(repeat=3000):
    """Kernel-only timings on a larger tape, without the call-site wrapping."""
    rng = np.random.default_rng(0)
    tape, x = random_tape(rng, n_inputs=6, n_switch=30, n_active=0)
    xi = np.empty(0)
    print(f"raw sweeps on a {len(tape)}-node tape ({repeat} calls each):")
    times = {}
    for name, impl in (("compiled", _kernels_c), ("python", _kernels_py)):
        t0 = time.perf_counter()
        for _ in range(repeat):
            values, _, _ = impl.forward_sweep(
                tape._ops, tape._arg0, tape._arg1, tape._cval, tape._iaux,
                x, xi, False, tape.n_switch)
        t1 = time.perf_counter()
        for _ in range(repeat):
            impl.reverse_sweep(
                tape._ops, tape._arg0, tape._arg1, tape._iaux, tape._owner,
                tape._owner_pos, values, tape.output, tape.n_inputs,
                tape.n_switch)
        t2 = time.perf_counter()
        times[name] = ((t1 - t0) / repeat, (t2 - t1) / repeat)
        print(f"  {name:<9} forward {times[name][0] * 1e6:7.1f} us   "
              f"reverse {times[name][1] * 1e6:7.1f} us")
    for i, op in enumerate(("forward", "reverse")):
        print(f"  {op}: compiled is "
              f"{times['python'][i] / times['compiled'][i]:.1f}x faster")


def main():
    rng = np.random.default_rng(0)
    problems = [(phimu_tape(-1.0), np.zeros(2))]
    for _ in range(6):
        problems.append(random_tape(rng, n_inputs=4, n_switch=5, n_active=0))

    xs = {id(t): t_x + 1e-3 * rng.standard_normal((2000, t.n_inputs))
          for t, t_x in problems}

    def run_forward():
        for tape, _ in problems:
            for x in xs[id(tape)]:
                forward_eval(tape, x)

    def run_extract():
        for tape, _ in problems:
            for x in xs[id(tape)][:500]:
                extract(tape, x)

    impls = [("compiled", _kernels_c), ("python", _kernels_py)]
    results = {}
    for name, impl in impls:
        print(f"backend: {name}")
        results[name, "forward"] = _with_backend(
            impl, lambda: bench("forward x14000", run_forward))
        results[name, "extract"] = _with_backend(
            impl, lambda: bench("extract x3500", run_extract))

    if len(impls) == 2:
        for op in ("forward", "extract"):
            speedup = results["python", op] / results["compiled", op]
            print(f"{op}: compiled is {speedup:.1f}x faster (whole call)")

    print()
    bench_raw_sweeps()


if __name__ == "__main__":
    main()
