"""Smoke test for the nqa extension module.

Build and install first, e.g. `maturin develop -m crates/py/Cargo.toml`,
then run `python python/smoke_test.py`.
"""

import json
import math
import tempfile
from pathlib import Path

import nqa


def check_ops():
    g = nqa.nsg([1, 0, 0], [0.8, 0.4, 0.2], [math.cos(0.3), math.sin(0.3), 0], [0.2, 0.4, 0.8])
    assert all(abs(a - b) < 1e-6 for a, b in zip(g, [2.0, 0.0, -2.0])), g
    assert abs(nqa.angular_disparity([1, 0, 0], [0, 1, 0], [0, 0, 0]) - math.pi / 2) < 1e-12
    uvd = nqa.project([0, 0, 5], (100, 100, 32, 24, 64, 48), [1, 0, 0, 0], [0, 0, 0])
    assert uvd == (32.0, 24.0, 5.0), uvd
    assert nqa.project([0, 0, -5], (100, 100, 32, 24, 64, 48), [1, 0, 0, 0], [0, 0, 0]) is None

    pred, truth = [1.0, 2.0, 3.0, 4.0], [1.0, 3.0, 2.0, 4.0]
    r = nqa.evaluate(pred, truth)
    assert abs(r["plcc"] - 0.8) < 1e-12 and r["n"] == 4, r
    assert abs(nqa.srcc(pred, truth) - 0.8) < 1e-12
    try:
        nqa.plcc([1.0, 1.0], [1.0, 2.0])
    except ValueError as e:
        assert "constant" in str(e)
    else:
        raise AssertionError("constant input accepted")


def check_pipeline(tmp: Path):
    manifests = [
        nqa.synth(tmp / f"s{k}", scene_id=f"s{k}", label=-float(k)) for k in range(3)
    ]
    m = nqa.Manifest.load(manifests[0])
    assert m.scene_id == "s0" and m.view_count == 8 and m.label == 0.0
    assert json.loads(m.to_json())["colmap_dir"] == "sparse"

    f = nqa.Features.extract(manifests[0], bins=2, resample=4, points=6, rounds=2)
    rows = f.view_matrix()
    assert len(rows) == 36 and all(len(r) == 8 for r in rows)
    assert f.rounds == 2 and f.points_in_round(0) == 6
    f.write_dir(tmp / "features")
    assert nqa.Features.read_dir(tmp / "features").view_names == f.view_names

    model = nqa.Model("tiny")
    trained, log = nqa.train_model(model, manifests, epochs=2, batch_size=2, points=6, rounds=2, validation=False)
    assert len(log) == 2 and all(math.isfinite(e[1]) for e in log)
    path = tmp / "m.nqa"
    trained.save(path)
    loaded = nqa.Model.load(path)
    assert loaded.config_hash == trained.config_hash
    p = loaded.predict(f)
    assert math.isfinite(p) and p == trained.predict(f)


def main():
    check_ops()
    with tempfile.TemporaryDirectory() as d:
        check_pipeline(Path(d))
    print("smoke test passed")


if __name__ == "__main__":
    main()
