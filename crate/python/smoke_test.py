"""Smoke test for the `maxreg` extension module.

Run after `maturin develop -m crates/py/Cargo.toml`:
    python python/smoke_test.py
"""

import math

import maxreg


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    e = maxreg.semigroup([[1.0]], 2.0)
    assert close(e[0][0].real, math.exp(-2.0), 1e-14), e

    a = maxreg.random_accretive(3, 0.1, 7)
    assert len(a) == 3 and all(len(r) == 3 for r in a)

    root = maxreg.frac_power([[4.0, 0.0], [0.0, 9.0]], 0.5)
    assert close(root[0][0].real, 2.0, 1e-10) and close(root[1][1].real, 3.0, 1e-10), root

    bound = maxreg.kato_bound(0.25)
    assert close(bound, math.tan(math.pi * 1.5 / 4.0), 1e-12)
    r = maxreg.kato_ratio(a, 0.25, [1.0, 1j, -0.5])
    assert 0.0 < r <= bound * (1.0 + 1e-8), r

    n = maxreg.mplus_norm([[1.0]], beta=0.0, t_min=1e-4, t_max=1e4, n=256)
    assert 0.95 <= n <= 1.05, n

    rows, verdict = maxreg.counterexample([[1.0]], [1.0], beta=1.0, decades=6)
    claim = (math.exp(-1.0) - math.exp(-2.0)) ** 2 * math.log(10.0)
    assert verdict == "growing", verdict
    assert close(rows[-1][2], claim, 0.05 * claim), rows[-1]

    passed, checks, files = maxreg.run("counterexample", '{"counterexample": {"decades": 5}}')
    assert passed, checks
    assert any(name == "counterexample.csv" for name, _ in files)

    try:
        maxreg.kato_ratio([[-1.0]], 0.25, [1.0])
    except ValueError:
        pass
    else:
        raise AssertionError("non-accretive operator accepted")

    print("maxreg smoke test: ok")


if __name__ == "__main__":
    main()
