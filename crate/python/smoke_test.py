"""Smoke test for the cgrail extension module.

Build first:

    cargo build -p cgrail-python --release --features extension-module

then run `python3 python/smoke_test.py` (or under pytest). If `cgrail` is
not importable, the freshly built library under target/ is copied into a
temporary directory as `cgrail.so` and imported from there.
"""

import importlib
import os
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        return importlib.import_module("cgrail")
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libcgrail.so"
        if lib.exists():
            tmp = tempfile.mkdtemp(prefix="cgrail-py-")
            shutil.copy(lib, os.path.join(tmp, "cgrail.so"))
            sys.path.insert(0, tmp)
            return importlib.import_module("cgrail")
    raise ImportError("cgrail extension not built; see the module docstring")


cgrail = load()


def test_module_surface():
    assert cgrail.VARIANTS == ["bandit", "c-transfer", "smart-c-bandit", "c-grail"]
    assert cgrail.METRICS_SCHEMA == "# cgrail-metrics v1"
    p = cgrail.softmax([0.01, 0.0], 0.01)
    assert abs(sum(p) - 1.0) < 1e-12 and abs(p[0] - 0.7311) < 1e-4
    x, y = cgrail.forward_kinematics([0.0, 0.0, 0.0, 0.0], "left")
    assert abs(y) < 1e-12 and x > 0.0


def test_runner_steps_and_is_deterministic():
    a = cgrail.Runner("c-grail", seed=3)
    b = cgrail.Runner("C-GRAIL", seed=3)
    rows_a = [a.step() for _ in range(25)]
    rows_b = [b.step() for _ in range(25)]
    assert rows_a == rows_b
    assert a.trials == 25
    assert 0.0 <= rows_a[-1]["window_rate"] <= 1.0
    assert a.snapshot() == b.snapshot()
    if a.goals:
        assert a.contexts(0)
        ev = a.evaluate(10, seed=1)
        assert ev["attempts"] == 10


def test_experiment_files_and_plots():
    with tempfile.TemporaryDirectory() as out:
        res = cgrail.run_experiment("bandit", 1, 30, out)
        text = pathlib.Path(res["metrics"]).read_text()
        assert text.startswith("# cgrail-metrics v1\n")
        assert len(text.splitlines()) == 32
        ev = cgrail.evaluate_snapshot(res["snapshot"], 5)
        assert ev["attempts"] in (0, 5)
        written = cgrail.emit_plots(out, "success")
        assert any(str(p).endswith("success.svg") for p in written)


def test_errors_map_to_python_exceptions():
    for bad in (lambda: cgrail.Runner("q-learning"), lambda: cgrail.softmax([], 1.0)):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")
    try:
        cgrail.evaluate_snapshot("/nonexistent/x.snap", 3)
    except OSError:
        pass
    else:
        raise AssertionError("expected OSError")


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"ok  {name}")
    print("smoke test passed")
