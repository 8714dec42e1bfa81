"""Smoke test for the pyvidlaw extension.

Build first with `cargo build --release -p vidlaw-py`; the script copies
target/release/libpyvidlaw.so next to itself as pyvidlaw.so.
"""
import json
import shutil
import sys
import tempfile
from pathlib import Path

HERE = Path(__file__).resolve().parent
ROOT = HERE.parent


def load():
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libpyvidlaw.so"
        if lib.exists():
            shutil.copy(lib, HERE / "pyvidlaw.so")
            break
    else:
        sys.exit("libpyvidlaw.so not found; run `cargo build --release -p vidlaw-py`")
    sys.path.insert(0, str(HERE))
    import pyvidlaw

    return pyvidlaw


def main():
    vl = load()
    assert "vdp" in vl.systems()

    times, states = vl.integrate("circular", 500, z0=[1.0, 0.0], dt=0.01)
    assert len(states) == 501
    assert abs(states[-1][0] ** 2 + states[-1][1] ** 2 - 1.0) < 1e-8
    assert vl.rmse(states, states) == 0.0
    assert vl.vps(states, states) == 500

    theta = [[1.0, x, x * x] for x in [i / 10 for i in range(20)]]
    dz = [[2.0 * row[1]] for row in theta]
    xi = vl.stlsq(theta, dz, 0.1)
    assert abs(xi[1][0] - 2.0) < 1e-9 and xi[0][0] == 0.0 and xi[2][0] == 0.0

    cfg = vl.resolve_config(overrides=["dynamics.system=linear"])
    assert cfg["dynamics"]["system"] == "linear"
    try:
        vl.resolve_config(overrides=["dynamics.sytem=linear"])
    except ValueError:
        pass
    else:
        raise AssertionError("unknown key accepted")

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        gen = vl.generate(str(tmp / "lin.seq"), ["dynamics.system=linear", "dynamics.steps=1200"])
        summary = vl.discover(gen["sequence"], str(tmp / "run"), ["dynamics.system=linear", "dynamics.steps=1200"])
        print("termination:", summary["termination_reason"])
        model = vl.SparseModel.load(str(tmp / "run" / "model.json"))
        print(model)
        report = vl.evaluate(str(tmp / "run" / "model.json"), gen["truth"])
        print(json.dumps({k: report[k] for k in ("r2", "vps", "l0")}))
        assert report["r2"] > 0.99
        assert len(model.rhs([1.0, 0.0])) == 2

    print("smoke test passed")


if __name__ == "__main__":
    main()
