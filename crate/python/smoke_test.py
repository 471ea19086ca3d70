#!/usr/bin/env python3
"""Smoke test for the npconvex_py extension module.

Builds the cdylib if needed, loads it from the cargo target
directory, and checks a handful of known solutions end to end.
"""

import math
import shutil
import subprocess
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
TARGET = REPO / "target" / "release"


def ensure_module() -> None:
    built = TARGET / "libnpconvex_py.so"
    if not built.exists():
        subprocess.run(
            ["cargo", "build", "--release", "-p", "npconvex-py"],
            cwd=REPO,
            check=True,
        )
    loadable = TARGET / "npconvex_py.so"
    if not loadable.exists() or built.stat().st_mtime > loadable.stat().st_mtime:
        shutil.copy2(built, loadable)
    sys.path.insert(0, str(TARGET))


def close(a: float, b: float, tol: float = 1e-9) -> bool:
    return abs(a - b) <= tol


def main() -> int:
    ensure_module()
    import npconvex_py as np_

    e = math.e
    checks = []

    # The binary entropic example: beta and the least favorable pair.
    s31 = np_.solve(np_.example("ex31"))
    checks.append(("ex31 beta", close(s31.beta, math.log(e + 3) - 2 * math.log(2))))
    checks.append(("ex31 Q*({0})", close(s31.q_star[0] * 0.5, 3 / (e + 3), 1e-6)))
    checks.append(("ex31 verified", s31.verified))

    # The threshold constant of the composite example.
    s33 = np_.solve(np_.example("ex33"))
    checks.append(("ex33 z", close(s33.z, 3 / e)))
    checks.append(("ex33 X*", s33.x_star == [1.0, 0.0]))
    checks.append(("ex33 duality gap", s33.duality_gap <= 1e-8))

    # Hand-built problem: uniform two-atom space, entropic vs linear.
    space = np_.Space([0.5, 0.5])
    rho1 = np_.ConvexExpectation.linear(space, [1.0, 1.0])
    rho2 = np_.ConvexExpectation.entropic(space, [1.5, 0.5])
    problem = np_.Problem(space, rho1, rho2, 0.0, 1.0, 0.5)
    solution = np_.solve(problem)
    checks.append(("rebuilt ex31 beta", close(solution.beta, s31.beta)))

    # Document round trip through JSON.
    again = np_.Problem.from_json(problem.to_json())
    checks.append(("problem JSON round trip", close(np_.solve(again).beta, solution.beta)))

    # Axioms, divergence, and the oracle cross-check.
    checks.append(("entropic axioms", rho2.certify_axioms(trials=500, seed=7)))
    checks.append(("KL at reference", np_.kl_divergence(space, [1.5, 0.5], [1.5, 0.5]) == 0.0))
    checks.append(("KL off support", np_.kl_divergence(space, [2.0, 0.0], [0.0, 2.0]) is None))
    checks.append(("expectation", close(np_.expectation(space, [1.0, 1.0], [0.2, 0.8]), 0.5)))
    checks.append(("oracle agreement", np_.oracle_agrees(np_.example("ex33"))))

    # Infeasible levels surface as ValueError.
    try:
        np_.solve(np_.Problem(space, rho1, rho2, 0.0, 1.0, -1.0))
        checks.append(("infeasible raises", False))
    except ValueError:
        checks.append(("infeasible raises", True))

    failed = [name for name, ok in checks if not ok]
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    if failed:
        print(f"{len(failed)} of {len(checks)} checks failed", file=sys.stderr)
        return 1
    print(f"all {len(checks)} checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
