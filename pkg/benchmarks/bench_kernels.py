"""Time the numba kernels against their pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--n 200000] [--repeat 5]

Each kernel is called once before timing so numba compilation is excluded.
Reports the best of ``--repeat`` runs and checks both backends agree.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from opeforge import _kernels


def cases(n: int, n_x: int = 20, n_a: int = 10):
    rng = np.random.default_rng(0)
    contexts = rng.integers(0, n_x, n)
    actions = rng.integers(0, n_a, n)
    rewards = rng.random(n)
    behavior = rng.dirichlet(np.ones(n_a), size=n_x) * 0.9 + 0.1 / n_a
    target = rng.dirichlet(np.ones(n_a), size=n_x)
    qhat = rng.random((n_x, n_a))
    cdf = np.cumsum(behavior, axis=1)
    cdf[:, -1] = 1.0
    weight = rng.uniform(1, 50, (n_x, n_a))
    init = np.full((n_x, n_a), 0.5)
    return {
        "categorical_draw": (cdf, contexts, rng.random(n)),
        "cell_stats": (contexts, actions, rewards, n_x, n_a),
        "ope_sums": (contexts, actions, rewards, behavior[contexts, actions], target, qhat, 5.0),
        "gradient_fit": (weight, weight * qhat, init, 1e-3, 500, 1.0),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=200_000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    print(f"n={args.n} numba available: {_kernels.HAVE_NUMBA}")
    print(f"{'kernel':<18}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, call_args in cases(args.n).items():
        np_fn = getattr(_kernels, f"{name}_np")
        t_np = min(timeit.repeat(lambda: np_fn(*call_args), number=1, repeat=args.repeat)) * 1e3
        if not _kernels.HAVE_NUMBA:
            print(f"{name:<18}{t_np:>12.3f}{'n/a':>12}{'':>10}")
            continue
        nb_fn = getattr(_kernels, f"{name}_nb")
        a, b = np_fn(*call_args), nb_fn(*call_args)
        for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
            np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-12)
        t_nb = min(timeit.repeat(lambda: nb_fn(*call_args), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<18}{t_np:>12.3f}{t_nb:>12.3f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
