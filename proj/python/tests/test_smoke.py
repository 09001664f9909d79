import json
import os
import pathlib
import shutil
import struct
import subprocess
import threading

import numpy as np
import pytest

import percmap

ROOT = pathlib.Path(__file__).resolve().parents[2]
GRID = {"x_range": [-15, 15], "y_range": [-30, 30], "height": 200, "width": 100}


def cli_path():
    env = os.environ.get("PERCMAP_CLI")
    if env:
        return env
    local = ROOT / "build" / "percmap"
    if local.exists():
        return str(local)
    return shutil.which("percmap")


def run_cli(*args):
    exe = cli_path()
    if exe is None:
        pytest.skip("percmap CLI not built")
    subprocess.run([exe, *args], check=True, capture_output=True)


def read_checkpoint(path):
    raw = pathlib.Path(path).read_bytes()
    (n,) = struct.unpack("<Q", raw[:8])
    manifest = json.loads(raw[8 : 8 + n])
    payload = np.frombuffer(raw[8 + n :], dtype="<f8")
    out = {}
    for t in manifest["tensors"]:
        size = int(np.prod(t["shape"])) if t["shape"] else 1
        out[t["name"]] = payload[t["offset"] : t["offset"] + size].reshape(t["shape"])
    return out


def square_map():
    return {
        "frame_id": "f",
        "instances": [
            {"category": "div", "closed": False, "confidence": 1.0, "points": [[0.1, -10], [0.1, 10]]},
            {"category": "ped", "closed": True, "confidence": 0.8,
             "points": [[-4, 2], [4, 2], [4, 6], [-4, 6]]},
        ],
    }


def test_version_matches_cli():
    assert percmap.__version__
    exe = cli_path()
    if exe is None:
        pytest.skip("percmap CLI not built")
    out = subprocess.run([exe, "--version"], check=True, capture_output=True, text=True).stdout
    assert percmap.__version__ in out


def test_chamfer_examples():
    a = np.array([[0.0, 0.0], [0.0, 5.0], [2.0, 7.0]])
    assert percmap.py_chamfer(a, a) == 0.0
    assert percmap.py_chamfer(a[:2], a[:2] + [0.3, 0.0]) == pytest.approx(0.3, abs=1e-12)
    with pytest.raises(ValueError):
        percmap.py_chamfer(np.zeros((3, 3)), a)


def test_evaluate_identity_and_errors():
    doc = json.dumps(square_map())
    report = json.loads(percmap.py_evaluate(doc, doc))
    assert report["mAP"] == 1.0
    with pytest.raises(ValueError):
        percmap.py_evaluate("{", doc)
    with pytest.raises(ValueError):
        percmap.py_evaluate(json.dumps({"instances": [{"category": "nope", "points": [[0, 0], [1, 1]]}]}), doc)


def test_rasterize_is_a_read_only_view():
    mask = percmap.py_rasterize(json.dumps(square_map()), json.dumps(GRID), 1.0)
    assert mask.dtype == np.float64
    assert mask.shape[2] == 3
    assert set(np.unique(mask)) <= {0.0, 1.0}
    assert mask[..., 1].sum() > 0 and mask[..., 0].sum() > 0
    assert mask.shape == (200, 100, 3)
    assert not mask.flags.writeable
    with pytest.raises(ValueError):
        mask[0, 0, 0] = 2.0


def test_unknown_grid_key_is_rejected():
    with pytest.raises(ValueError, match="resolution"):
        percmap.py_rasterize(json.dumps(square_map()), json.dumps({"resolution": 0.3}), 1.0)


def test_heatmap_target_shape():
    heat = percmap.make_heatmap_target(json.dumps(square_map()), "toy", 3.0)
    assert heat.shape == (2, 64, 64, 3)
    assert heat.max() <= 1.0


def test_concurrent_calls_agree():
    doc = json.dumps(square_map())
    want = percmap.py_evaluate(doc, doc)
    got = [None] * 8

    def work(i):
        got[i] = percmap.py_evaluate(doc, doc)

    threads = [threading.Thread(target=work, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(g == want for g in got)


def test_parity_with_cli(tmp_path):
    run_cli("--seed", "11", "gen", "--out", str(tmp_path / "s"), "--frames", "3")
    run_cli("targets", "--in", str(tmp_path / "s"), "--out", str(tmp_path / "t"))
    frames = sorted(p.name for p in (tmp_path / "s").iterdir() if p.name.startswith("frame_"))

    # Perturbed copies as predictions so AP lands strictly between 0 and 1.
    preds, gts = [], []
    for k, name in enumerate(frames):
        gt = json.loads((tmp_path / "s" / name / "gt.json").read_text())
        pred = json.loads(json.dumps(gt))
        for i, inst in enumerate(pred["instances"]):
            inst["confidence"] = round(0.3 + 0.07 * ((i + k) % 10), 2)
            inst["points"] = [[x + 0.4 * (i % 3), y] for x, y in inst["points"]]
        (tmp_path / "p" / name).mkdir(parents=True)
        (tmp_path / "p" / name / "pred.json").write_text(json.dumps(pred))
        preds.append(pred)
        gts.append(gt)
    run_cli("eval", "--pred", str(tmp_path / "p"), "--gt", str(tmp_path / "s"), "--out", str(tmp_path / "e"))
    text = percmap.py_evaluate(json.dumps(preds), json.dumps(gts))
    assert text == (tmp_path / "e" / "report.json").read_text()
    assert 0.0 < json.loads(text)["mAP"] < 1.0

    for name in frames:
        meta = json.loads((tmp_path / "t" / name / "targets.json").read_text())
        gt_text = (tmp_path / "s" / name / "gt.json").read_text()
        stored = read_checkpoint(tmp_path / "t" / name / "targets.bin")
        mask = percmap.py_rasterize(gt_text, json.dumps(meta["grid"]), meta["line_width"])
        assert np.array_equal(mask, stored["raster"])
        rig = (tmp_path / "s" / name / "rig.json").read_text()
        heat = percmap.make_heatmap_target(gt_text, rig, meta["sigma"], meta["z_ground"])
        assert np.array_equal(heat, stored["heatmap"])
