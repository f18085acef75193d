"""Smoke test for the pyminsum extension module.

Build and install with `maturin develop` (or copy the built shared library
next to this file as pyminsum.so), then run `python3 python/smoke_test.py`.
"""

import math
import os
import sys

import pyminsum

HERE = os.path.dirname(os.path.abspath(__file__))
FIXTURES = os.path.join(HERE, "..", "crates", "core", "tests", "fixtures")


def close(a, b, tol):
    return len(a) == len(b) and all(abs(x - y) <= tol for x, y in zip(a, b))


def main():
    # 3-cycle with couplings -0.4 and h = 1: x = 5 everywhere, gamma* = 1.25
    tri = pyminsum.Problem(3, [(0, 1, -0.4), (1, 2, -0.4), (0, 2, -0.4)], [1.0, 1.0, 1.0])
    assert tri.n == 3 and len(tri.arcs()) == 6

    res = pyminsum.solve(tri)
    assert res.status == "converged", res
    assert close(res.x, [5.0] * 3, 1e-8)
    assert close(pyminsum.direct_solve(tri), [5.0] * 3, 1e-12)
    assert close(pyminsum.gamma_star(tri), [1.25] * 6, 1e-10)

    v = pyminsum.witness(tri)
    assert close(v, [2.5] * 6, 1e-12)
    assert pyminsum.is_convex_dominated(tri, [0.0] * 6)
    assert not pyminsum.is_convex_dominated(tri, [7.0] * 6)

    bad = pyminsum.solve(tri, gamma0=[7.0] * 6)
    assert bad.status == "ill-posed" and bad.iterations == 0
    assert bad.ill_posed_edge is not None

    report = pyminsum.analyze(tri)
    assert report["walk_summable"]
    assert abs(report["rho_abs_a"] - 0.5) <= 1e-9

    sync = pyminsum.solve(tri, max_iter=5000)
    asyn = pyminsum.solve(tri, "async", seed=3, activation_prob=0.4, max_delay=2)
    assert asyn.status == "converged"
    assert close(sync.x, asyn.x, 1e-6)
    assert asyn.max_staleness is not None

    grid = pyminsum.Problem.load(os.path.join(FIXTURES, "grid9.txt"))
    res = pyminsum.solve(grid)
    assert close(res.x, pyminsum.direct_solve(grid), 1e-8)
    assert pyminsum.Problem.from_text(grid.to_text()).n == grid.n

    raw = pyminsum.Problem.load(os.path.join(FIXTURES, "raw_diag.txt"))
    x = raw.denormalize(pyminsum.solve(raw).x)
    assert close(x, [2.0 / 3.0, 1.0 / 3.0], 1e-12)

    unsummable = pyminsum.Problem(
        4, [(0, 1, -0.6), (1, 2, 0.6), (2, 3, -0.6), (0, 3, 0.6)], [1.0] * 4
    )
    assert not pyminsum.analyze(unsummable)["walk_summable"]
    try:
        pyminsum.witness(unsummable)
    except pyminsum.NotWalkSummableError:
        pass
    else:
        raise AssertionError("expected NotWalkSummableError")

    try:
        pyminsum.Problem(2, [(0, 5, 0.1)], [0.0, 0.0])
    except pyminsum.MinsumError as e:
        assert "out of range" in str(e)
    else:
        raise AssertionError("expected MinsumError")

    assert math.isfinite(tri.objective(res.x[:3]))
    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
