"""Smoke test for the cowqkd_py extension.

Build first:
    cargo build -p cowqkd-py --release --features extension-module
Then run with plain python or pytest.
"""

import math
import pathlib
import shutil
import sys
import tempfile


def _import():
    try:
        import cowqkd_py
        return cowqkd_py
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parents[1]
    built = root / "target" / "release" / "libcowqkd_py.so"
    if not built.exists():
        raise ImportError(f"{built} not found; build the extension first")
    tmp = pathlib.Path(tempfile.mkdtemp())
    shutil.copy(built, tmp / "cowqkd_py.so")
    sys.path.insert(0, str(tmp))
    import cowqkd_py
    return cowqkd_py


cq = _import()


def test_discrimination():
    q = cq.q_usd(0.5, 0.155)
    assert abs(q - 0.667518) < 1e-5
    e = cq.med_error(0.5, 0.155)
    assert 0.0 < e < 0.5


def test_perfect_usd_attack_is_invisible():
    q = cq.q_usd(0.5, 0.155)
    s = cq.simulate(0.5, 0.155, 0.1, q, 1.0, 1, 1.0, n_signals=20000, seed=3)
    assert s["qber"]["value"] == 0.0
    for v in s["vis"].values():
        assert v is None or v["value"] == 1.0
    again = cq.simulate(0.5, 0.155, 0.1, q, 1.0, 1, 1.0, n_signals=20000, seed=3)
    assert s == again


def test_bound_is_quadratic_order():
    a = cq.alpha_max(0.155, 1e-3, budget=1, seed=1)
    assert a["verified_above"]
    r = (1 - 0.155) * 1e-3 * a["alpha_max2"]
    assert r < 1e-5
    sweep = cq.bound_sweep(0.155, [1e-2, 1e-3], budget=1, seed=1)
    assert len(sweep["points"]) == 2
    assert math.isfinite(sweep["log_slope"])


def test_bad_input_raises():
    try:
        cq.q_usd(-1.0, 0.155)
    except ValueError:
        return
    raise AssertionError("negative intensity accepted")


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
            print(f"{name}: ok")
