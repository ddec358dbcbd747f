"""Smoke test for the torus_lab_py extension.

Build with `cargo build --release -p torus-lab-py --features extension-module`, copy
`target/release/libtorus_lab_py.so` to `torus_lab_py.so` on the Python path, then run
`python3 smoke_test.py`.
"""

import json
import math

import torus_lab_py as tl


def close(a, b, tol):
    assert abs(a - b) <= tol, (a, b)


def main():
    flat = tl.Metric.flat()
    close(flat.lorentz_norm((0.0, 0.0), (1.0, 0.0)), -1.0, 1e-12)
    lo, hi = sorted(flat.null_slopes((0.3, 0.7)))
    close(lo, -1.0, 1e-12)
    close(hi, 1.0, 1e-12)

    cone = tl.stable_cone(flat)
    close(cone["angle"], math.pi / 2, 1e-9)

    close(tl.distance(flat, (0.0, 0.0), (2.0, 1.0)), math.sqrt(3.0), 1e-6)
    assert tl.distance(flat, (0.0, 0.0), (0.5, 1.0)) == 0.0

    pm = tl.periodic_maximizer(flat, (2, 1))
    close(pm["period"], math.sqrt(3.0), 1e-9)

    sep = tl.StableSep(flat)
    close(sep.value((1.0, 0.3)), math.sqrt(1.0 - 0.09), 1e-3)
    gap = sep.corner_gap((1, 0), (0.0, 1.0))
    close(gap["gap"], 0.0, 3e-3)

    grid = tl.BusemannGrid(flat, n=32)
    b0 = grid.value_at((0.5, 0.0))
    b1 = grid.value_at((1.5, 0.0))
    close(b1 - b0, 1.0, 1e-3)
    assert grid.value_at((5.0, 0.0)) is None
    assert grid.eikonal()["sup"] < 1e-3

    try:
        tl.Metric.tilted(0.0)
    except ValueError:
        pass
    else:
        raise AssertionError("half_opening = 0 accepted")
    try:
        tl.verify_json("[metric]\nfamily = \"flat\"\nbogus = 1\n")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown key accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
