#!/usr/bin/env python3
"""Smoke test for the dkw_py extension module.

Build the module first:

    cargo build --release -p dkw-py

then run this script from anywhere; it locates the built cdylib
(target/{release,debug}/libdkw_py.so), stages it under the importable
name dkw_py.so and exercises the main entry points.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def stage_module() -> None:
    for profile in ("release", "debug"):
        so = REPO / "target" / profile / "libdkw_py.so"
        if so.exists():
            staging = Path(tempfile.mkdtemp(prefix="dkw_py_"))
            shutil.copy(so, staging / "dkw_py.so")
            sys.path.insert(0, str(staging))
            return
    sys.exit("libdkw_py.so not found; run: cargo build --release -p dkw-py")


stage_module()
import dkw_py  # noqa: E402


def main() -> None:
    grid = dkw_py.Grid(1, 32)
    assert grid.d == 1 and grid.n == 32 and len(grid) == 32

    # Smooth positive initial density with unit-order mass.
    rho0 = dkw_py.Field(
        grid, [1.0 + 0.3 * math.sin(2 * math.pi * i / 32) for i in range(32)]
    )
    mass0 = rho0.mass()
    assert abs(mass0 - 1.0) < 1e-12, mass0
    assert rho0.entropy() >= 0.0

    # Regularized mobility: bounded by identity, exact for moderate values.
    assert abs(dkw_py.sigma_half(0.01, 1.0) - 1.0) < 0.02
    assert dkw_py.sigma(0.01, -1.0) == 0.0

    kernel = dkw_py.Kernel.smooth(grid, [([1], [0.5], [0.2])])
    report = kernel.check()
    assert report["pass"], report
    conv = kernel.convolve(rho0)
    assert len(conv) == 1 and len(conv[0]) == 32

    # Deterministic run conserves mass to machine precision.
    det = dkw_py.skeleton(rho0, kernel, t_final=0.01, dt=2e-4)
    assert abs(det.mass_drift) < 1e-12, det.mass_drift
    assert len(det.records) == 51
    assert det.final_density().min() > 0.0

    # Noisy run: still conservative, deterministic in the seed.
    a = dkw_py.simulate(rho0, kernel, t_final=0.01, dt=2e-4, eps=0.05, k=1, seed=7)
    b = dkw_py.simulate(rho0, kernel, t_final=0.01, dt=2e-4, eps=0.05, k=1, seed=7)
    assert a.final_density().values() == b.final_density().values()
    assert abs(a.mass_drift) < 1e-12

    # Rate function round trip on a gradient control.
    phi = dkw_py.Field(
        grid, [0.4 * math.sin(2 * math.pi * i / 32) for i in range(32)]
    )
    i_forward, i_par = dkw_py.rate_drift_gradient(rho0, kernel, phi, 0.02, 2e-4)
    assert i_forward > 0.0
    assert abs(i_par - i_forward) / i_forward < 0.05, (i_forward, i_par)

    k, scale = dkw_py.scaling_k(0.01, 0.3, 1)
    assert k == 3 and abs(scale - 0.01 * 27) < 1e-12

    print("smoke test passed")
    print(f"  mass drift (deterministic): {det.mass_drift:.3e}")
    print(f"  rate round trip: I_forward={i_forward:.6e} I_par={i_par:.6e}")


if __name__ == "__main__":
    main()
