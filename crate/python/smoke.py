"""Smoke test for the mildpath Python extension.

Builds the extension with cargo when it is not importable, then exercises
the exposed types and operations against values computed here in Python.
"""

import importlib
import json
import math
import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load():
    try:
        return importlib.import_module("mildpath_py")
    except ImportError:
        pass
    subprocess.run(["cargo", "build", "--release", "-p", "mildpath-py"], cwd=ROOT, check=True)
    lib = os.path.join(ROOT, "target", "release", "libmildpath_py.so")
    where = tempfile.mkdtemp(prefix="mildpath_py_")
    shutil.copy(lib, os.path.join(where, "mildpath_py.so"))
    sys.path.insert(0, where)
    return importlib.import_module("mildpath_py")


def check(name, ok, detail=""):
    print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}")
    return ok


def main():
    mp = load()
    results = []

    op = mp.SpectralOperator.squares(3)
    results.append(check("eigenvalues", op.eigenvalues == [1.0, 4.0, 9.0]))
    x = [1.0, -2.0, 0.5]
    sx = op.semigroup(0.3, x)
    expect = [math.exp(-lam * 0.3) * v for lam, v in zip(op.eigenvalues, x)]
    results.append(check("semigroup", max(abs(a - b) for a, b in zip(sx, expect)) < 1e-14))

    params = mp.HolderParams()
    params.validate()
    bad = mp.HolderParams(alpha=0.2)
    try:
        bad.validate()
        results.append(check("invalid params rejected", False))
    except ValueError as e:
        results.append(check("invalid params rejected", True, f"({e})"))

    m = 256
    ts = [k / m for k in range(m + 1)]
    u = mp.Path(1.0, [[math.sin(t)] for t in ts])
    w = mp.Path(1.0, [[t * t] for t in ts])
    yi = mp.young_integral(u, w, 0.0, 1.0)[0]
    rs = sum(0.5 * (math.sin(ts[k]) + math.sin(ts[k + 1])) * (ts[k + 1] ** 2 - ts[k] ** 2) for k in range(m))
    results.append(check("young integral vs trapezoid Stieltjes sum", abs(yi - rs) < 1e-4, f"{yi:.8f} vs {rs:.8f}"))

    d = mp.frac_deriv_right(mp.Path(1.0, [[t] for t in ts]), 0.0, 0.5, 0.64)[0]
    exact = 0.64 ** 0.5 / math.gamma(1.5)
    results.append(check("right derivative of identity", abs(d - exact) < 1e-6, f"{d:.8f} vs {exact:.8f}"))

    driver = mp.Path.fbm(0.45, op, 32, [1.0, 0.5, 0.25], seed=3)
    results.append(check("fbm shape", driver.cells == 32 and driver.dim == 3 and driver.values()[0] == [0.0, 0.0, 0.0]))
    g = mp.Nonlinearity.example(op)
    holds, _ = g.bounds_check(200, 5)
    results.append(check("nonlinearity bounds", holds))

    u0 = [1.0, 0.5, 0.25]
    fp = mp.solve(op, driver, u0, mp.Nonlinearity.zero(op))
    orbit = all(
        abs(fp.path[j][i] - math.exp(-op.eigenvalues[i] * fp.times[j]) * u0[i]) < 1e-12
        for j in range(len(fp.times))
        for i in range(3)
    )
    results.append(check("zero nonlinearity gives semigroup orbit", orbit))
    fp = mp.solve(op, driver, u0, g)
    results.append(check("fixed point residual", fp.residual <= fp.threshold, repr(fp)))

    out = tempfile.mkdtemp(prefix="mildpath_run_")
    config = {"kind": "solve", "spectral": {"n": 3}, "path": {"level": 4}}
    report = mp.run_experiment(json.dumps(config), out)
    files = sorted(os.listdir(out))
    results.append(check("experiment report", report["kind"] == "solve" and "summary.csv" in files and "manifest.json" in files, str(files)))

    if not all(results):
        sys.exit(1)
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
