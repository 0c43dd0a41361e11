"""Smoke test for the pylamlab bindings.

Build first:  cd crates/python && pip install --no-build-isolation -e .
Run:          python3 python/smoke_test.py
"""

import json
import pathlib
import tempfile

import pylamlab

ROOT = pathlib.Path(__file__).resolve().parent.parent
TWO_LAYER = ROOT / "scenarios" / "two_layer.toml"


def main():
    cfg = pylamlab.load_scenario(str(TWO_LAYER))
    assert cfg["mode"] == "elliptic"
    assert cfg["mesh"]["nx"] == 16
    assert cfg["diagnostics"]["seed"] == 0xC0FFEE

    a = 'mode = "elliptic"\n[mesh]\nnx = 8\nny = 2\n'
    b = '[mesh]\nny = 2\nnx = 8\n\nmode = "elliptic"\n'
    # key order does not matter, but a top-level key after a table belongs to it
    assert pylamlab.scenario_hash(a) != pylamlab.scenario_hash(b)
    b = 'mode = "elliptic"\n[mesh]\nny = 2\nnx = 8\n'
    assert pylamlab.scenario_hash(a) == pylamlab.scenario_hash(b)

    with tempfile.TemporaryDirectory() as tmp:
        out = pathlib.Path(tmp) / "run"
        manifest = pylamlab.run(str(TWO_LAYER), str(out))
        assert manifest["stage"] == "run"
        report = json.loads((out / "report.json").read_text())
        assert report["errors"] == []
        assert report["solver"]["residual"] <= 1e-11
        flux = report["flux"]["interfaces"][0]["mean"]
        assert abs(flux - 2.0 / 3.0) < 1e-9, flux

        try:
            pylamlab.run(str(TWO_LAYER), str(out))
        except ValueError as e:
            assert "--force" in str(e)
        else:
            raise AssertionError("second run into the same directory must fail")
        pylamlab.run(str(TWO_LAYER), str(out), force=True)

    table = pylamlab.sweep([0.1, 0.05, 0.025], a0=1.0, nx=16, ny=2)
    assert len(table["rows"]) == 3
    assert abs(table["p1"]) < 1e-6

    print("pylamlab smoke test passed")


if __name__ == "__main__":
    main()
