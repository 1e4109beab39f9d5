"""Smoke test for the waveop2d_py extension module.

Builds the module with cargo (release, extension-module feature), loads it from a
temporary directory and exercises each binding once.

    python3 python/smoke_test.py
"""

import importlib.util
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def build():
    subprocess.run(
        ["cargo", "build", "--release", "-p", "waveop2d-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "release" / "libwaveop2d_py.so"
    if not lib.exists():
        sys.exit(f"expected {lib} after the build")
    return lib


def load(lib):
    tmp = pathlib.Path(tempfile.mkdtemp())
    target = tmp / "waveop2d_py.so"
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("waveop2d_py", target)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def main():
    w = load(build())
    print("waveop2d_py", w.__version__)

    s, defect = w.smatrix(1.0, 1.0, n_omega=32)
    assert len(s) == 32 and all(len(row) == 32 for row in s)
    assert isinstance(s[0][0], complex)
    assert defect < 1e-3, defect
    # S is unitary: rows have unit norm with respect to the plain sum
    row = sum(abs(z) ** 2 for z in s[5])
    assert abs(row - 1.0) < 1e-3, row
    print(f"S(1): unitarity defect {defect:.2e}")

    # deep enough that the state fits in the periodic box
    oracle = w.oracle_bound_states(3.0)
    grid = w.grid_bound_states(3.0)
    assert len(oracle) == 1 and len(grid) == 1, (oracle, grid)
    assert abs(grid[0] - oracle[0]) < 1e-3 * abs(oracle[0]), (grid, oracle)
    print(f"g=3: E = {grid[0]:.6e} (oracle {oracle[0]:.6e})")

    lev = w.levinson(0.5)
    assert abs(lev["nearest"]) == lev["n_bound"] == 1, lev
    assert lev["distance"] < 0.05, lev
    print(f"g=0.5: winding {lev['winding']:.4f}")

    try:
        w.smatrix(1.0, 1.0, n=60)
    except ValueError as e:
        print("bad grid rejected:", e)
    else:
        raise AssertionError("n=60 should be rejected")
    print("smoke test passed")


if __name__ == "__main__":
    main()
