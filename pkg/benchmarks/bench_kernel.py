"""Compare the compiled quadrature-point kernel with the numpy fallback.

Usage: python benchmarks/bench_kernel.py [--points N] [--repeat R]

Times the per-point gradient/Hessian evaluation for both material variants
and one global assembly on the refined tension plate, and reports the
largest difference between the two backends.
"""

import argparse
import time

import numpy as np

from gedamage import studies
from gedamage.fem import element as el
from gedamage.fem.solver import SolverConfig, assemble
from gedamage.materials import ClosedFormParams
from gedamage.verify import random_datadriven, random_deformation


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def kernel_inputs(rng, n):
    F = random_deformation(rng, n, amplitude=0.15).reshape(n, 9)
    return F, rng.uniform(0.0, 0.5, n), rng.normal(size=(n, 3)), rng.uniform(0.0, 0.5, n)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--points", type=int, default=4000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if el.BACKEND != "compiled":
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation` first")

    rng = np.random.default_rng(0)
    models = {
        "closed-form": ClosedFormParams.from_young(210.0, 0.3, eta_d=0.5, kappa_d=0.1, c_d=1.0, beta_d=10.0),
        "data-driven": random_datadriven(rng, eta_d=0.5, kappa_d=0.1, c_d=1.0, beta_d=10.0),
    }
    F, phi, gphi, kappa = kernel_inputs(rng, args.points)
    print(f"quadrature-point kernel, {args.points} points (best of {args.repeat})")
    print(f"{'model':12s} {'python [s]':>11s} {'compiled [s]':>13s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, m in models.items():
        tp, rp = best_of(lambda: el.qp_response(F.reshape(-1, 3, 3), phi, gphi, kappa, m, False, "python"), args.repeat)
        tc, rc = best_of(lambda: el.qp_response(F.reshape(-1, 3, 3), phi, gphi, kappa, m, False, "compiled"), args.repeat)
        diff = max(float(np.abs(a - b).max() / max(np.abs(a).max(), 1.0)) for a, b in zip(rp[:2], rc[:2]))
        print(f"{name:12s} {tp:11.4f} {tc:13.4f} {tp / tc:8.1f} {diff:11.2e}")

    mesh = studies.plate_meshes()["refined"]
    m = models["closed-form"]
    problem = studies.tension_problem(mesh, m, 2.0)
    state = problem.initial_state()
    problem.apply_dirichlet(state.x, 1.0)
    print(f"\nglobal assembly, {mesh.n_elements} elements, monolithic tangent")
    res = {}
    for backend in ("python", "compiled"):
        cfg = SolverConfig(backend=backend)
        t, out = best_of(lambda: assemble(problem, state, cfg), args.repeat)
        res[backend] = (t, out)
        print(f"{backend:9s} {t:8.4f} s")
    Rp, Rc = res["python"][1][0], res["compiled"][1][0]
    print(f"speedup {res['python'][0] / res['compiled'][0]:.1f}x, "
          f"max residual difference {np.abs(Rp - Rc).max() / np.abs(Rp).max():.2e} (relative)")


if __name__ == "__main__":
    main()
