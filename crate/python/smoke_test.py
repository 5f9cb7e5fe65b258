"""Builds the extension module with cargo and exercises it from Python.

Usage: python3 python/smoke_test.py
"""

import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build_module(dest):
    subprocess.run(
        ["cargo", "build", "--release", "-p", "greedy-dirty-py"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "release" / "libgreedy_dirty_py.so"
    shutil.copy(lib, Path(dest) / "greedy_dirty_py.so")
    sys.path.insert(0, str(dest))


def main():
    with tempfile.TemporaryDirectory() as tmp:
        build_module(tmp)
        import greedy_dirty_py as gd

        problem, beta_star = gd.gen_synthetic(40, 0.5, 30, seed=3, s=4, noise_variance=0.0)
        assert (problem.p, problem.r, problem.n) == (40, 2, [30, 30])

        result = gd.fit(problem, epsilon=1e-9, w=1.5, nu=0.5)
        err = max(
            abs(a - b)
            for row_hat, row_star in zip(result.coefficients, beta_star)
            for a, b in zip(row_hat, row_star)
        )
        assert err < 1e-6, err
        assert result.termination == "gain-below-threshold"
        assert result.final_loss <= result.initial_loss
        assert abs(gd.loss(problem, result.coefficients) - result.final_loss) < 1e-12
        shared = [i for i, row in enumerate(beta_star) if row[0] != 0.0 and row[1] != 0.0]
        assert result.rows == shared, (result.rows, shared)
        assert json.loads(result.to_json())["termination"] == "gain-below-threshold"

        separate = gd.foba(problem, epsilon=1e-9)
        assert separate.rows == []

        assert gd.n_for_theta(2.0, 13, 128, 2.0 / 3.0) == 123
        assert gd.theta(123, 13, 128, 2.0 / 3.0) >= 2.0

        diag = gd.diagnostics(problem, beta_star, d=2, s=2)
        assert diag["lambda"] < 1e-12 and diag["epsilon_lower"] == 0.0

        x = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
        small = gd.Problem([(x, [1.0, 0.0, 1.0]), (x, [2.0, 0.0, 2.0])])
        best = gd.exhaustive_best_fit(small, 1, 1)
        assert best["rows"] == [0] and best["singletons"] == [], best
        assert best["loss"] < 1e-20

        try:
            gd.fit(problem, nu=1.5)
        except ValueError:
            pass
        else:
            raise AssertionError("nu = 1.5 accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
