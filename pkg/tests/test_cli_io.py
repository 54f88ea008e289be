import csv
import json
import math
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mbspect import io
from mbspect.cli import main
from mbspect.forward import Projector, Sinogram
from mbspect.grid import PixelGrid
from mbspect.phantoms import PhantomSpec, add_noise, make_geometry, make_phantom
from mbspect.solvers import HistoryRow

# -- serialization ----------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.data())
def test_image_csv_round_trip_is_exact(M, data):
    vals = np.array(data.draw(st.lists(st.floats(allow_nan=False, allow_infinity=False),
                                       min_size=M * M, max_size=M * M)))
    with tempfile.TemporaryDirectory() as tmp:
        path = io.write_image_csv(Path(tmp) / "img.csv", vals, M)
        assert np.array_equal(io.read_image_csv(path), vals)


def test_image_csv_rejects_non_square(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3\n")
    with pytest.raises(ValueError):
        io.read_image_csv(p)


def test_pgm_round_trip_within_quantization(tmp_path):
    vals = np.random.default_rng(0).uniform(0, 1, 64)
    io.write_pgm(tmp_path / "x.pgm", vals, 8, 0.0, 1.0)
    back = io.read_pgm(tmp_path / "x.pgm", 0.0, 1.0)
    assert np.max(np.abs(back - vals)) <= 0.5 / 65535 + 1e-15
    assert (tmp_path / "x.pgm").read_bytes().startswith(b"P5\n8 8\n65535\n")


def test_pgm_constant_image(tmp_path):
    io.write_pgm(tmp_path / "c.pgm", np.full(4, 0.3), 2)
    assert np.array_equal(io.read_pgm(tmp_path / "c.pgm"), np.zeros(4))


def test_sinogram_round_trip(tmp_path):
    grid = PixelGrid.unit_square(8)
    geom = make_geometry(5, 11, grid, perturb_seed=3)
    d = Sinogram(geom, np.random.default_rng(1).standard_normal(geom.n_rays))
    back = io.read_sinogram_csv(io.write_sinogram_csv(tmp_path / "d.csv", d))
    assert np.array_equal(back.values, d.values)
    assert np.array_equal(back.geometry.angles, geom.angles)
    assert np.array_equal(back.geometry.offsets, geom.offsets)


def test_sinogram_reader_rejects_bad_files(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x,y,z\n1,2,3\n")
    with pytest.raises(ValueError):
        io.read_sinogram_csv(p)
    p.write_text("s,omega,value\n0,0,1\n1,0,1\n0,1,1\n")
    with pytest.raises(ValueError):
        io.read_sinogram_csv(p)


def test_history_scan_and_boundary_files(tmp_path):
    rows = [HistoryRow(1, 2.5, 1e-4, 2e-4, 0.1, 0.9, 1.0, 0.5)]
    io.write_history_csv(tmp_path / "h.csv", rows)
    with open(tmp_path / "h.csv") as fh:
        got = list(csv.reader(fh))
    assert got[0] == list(io.HISTORY_COLUMNS)
    assert got[1] == ["1", "2.5", "0.0001", "0.0002", "0.1", "0.9", "1.0", "0.5"]

    off, val = np.array([-1e-5, 1e-5]), np.array([0.25, -3.0])
    o2, v2 = io.read_scan_csv(io.write_scan_csv(tmp_path / "s.csv", off, val))
    assert np.array_equal(o2, off) and np.array_equal(v2, val)

    sets = [np.array([[0.0, 1.0], [2.0, 3.0]]), np.array([[0.5, 0.25]])]
    back = io.read_boundary_csv(io.write_boundary_csv(tmp_path / "b.csv", sets))
    assert len(back) == 2 and all(np.array_equal(a, b) for a, b in zip(back, sets))


def test_manifest_handles_numpy_and_inf(tmp_path):
    io.write_manifest(tmp_path / "m.json", {"b": np.float64(1.5), "a": [np.int64(2), math.inf],
                                            "arr": np.arange(2)})
    text = (tmp_path / "m.json").read_text()
    assert json.loads(text) == {"a": [2, "inf"], "arr": [0, 1], "b": 1.5}
    assert text.index('"a"') < text.index('"b"')


def test_config_parsing(tmp_path):
    schema = {"run": {"seed": int, "flag": bool, "levels": tuple, "name": str}}
    p = tmp_path / "c.ini"
    p.write_text("[run]\nseed = 4\nflag = yes\nlevels = 0, 0.5, 1\nname = disks\n")
    assert io.read_config(p, schema) == {"run": {"seed": 4, "flag": True, "levels": (0.0, 0.5, 1.0),
                                                 "name": "disks"}}
    p.write_text("[run]\ncolour = red\n")
    with pytest.raises(io.ConfigError, match="unknown key"):
        io.read_config(p, schema)
    p.write_text("[other]\nseed = 1\n")
    with pytest.raises(io.ConfigError, match="unknown section"):
        io.read_config(p, schema)
    p.write_text("[run]\nseed = many\n")
    with pytest.raises(io.ConfigError):
        io.read_config(p, schema)


# -- command line -----------------------------------------------------------------


def _read(path):
    return path.read_bytes()


def test_phantom_command_writes_images(tmp_path):
    assert main(["phantom", "--name", "nested_disks", "--grid", "16", "--out", str(tmp_path)]) == 0
    a = io.read_image_csv(tmp_path / "a.csv")
    a_lib, f_lib = make_phantom(PhantomSpec("nested_disks"), PixelGrid.unit_square(16))
    assert np.array_equal(a, a_lib)
    assert np.array_equal(io.read_image_csv(tmp_path / "f.csv"), f_lib)
    assert (tmp_path / "a.pgm").exists() and (tmp_path / "manifest.json").exists()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "phantom" and manifest["config"]["phantom"]["grid"] == 16


def test_forward_without_noise_matches_library(tmp_path):
    args = ["forward", "--name", "binary_shapes", "--grid", "16", "--projections", "4",
            "--seed", "2", "--out", str(tmp_path)]
    assert main(args) == 0
    d = io.read_sinogram_csv(tmp_path / "sinogram.csv")
    grid = PixelGrid.unit_square(16)
    a, f = make_phantom(PhantomSpec("binary_shapes"), grid)
    geom = make_geometry(4, d.geometry.offsets.size, grid, perturb_seed=2)
    assert np.array_equal(d.values, Projector(grid, geom).forward(a, f))


def test_forward_with_noise_matches_library(tmp_path):
    args = ["forward", "--grid", "16", "--projections", "3", "--noise", "0.05", "--seed", "7",
            "--full-circle", "--out", str(tmp_path)]
    assert main(args) == 0
    d = io.read_sinogram_csv(tmp_path / "sinogram.csv")
    grid = PixelGrid.unit_square(16)
    a, f = make_phantom(PhantomSpec("binary_shapes"), grid)
    geom = make_geometry(3, d.geometry.offsets.size, grid, 7, full_circle=True)
    expected = add_noise(Projector(grid, geom).sinogram(a, f), 0.05, 7)
    assert np.array_equal(d.values, expected.values)


def test_forward_from_image_files(tmp_path):
    assert main(["phantom", "--grid", "8", "--out", str(tmp_path)]) == 0
    out = tmp_path / "fw"
    args = ["forward", "--a", str(tmp_path / "a.csv"), "--f", str(tmp_path / "f.csv"),
            "--projections", "2", "--out", str(out)]
    assert main(args) == 0
    assert io.read_sinogram_csv(out / "sinogram.csv").geometry.angles.size == 2


def test_repeated_runs_are_byte_identical(tmp_path):
    for k in (1, 2):
        args = ["forward", "--grid", "16", "--projections", "5", "--noise", "0.05",
                "--seed", "3", "--out", str(tmp_path / str(k))]
        assert main(args) == 0
    assert _read(tmp_path / "1" / "sinogram.csv") == _read(tmp_path / "2" / "sinogram.csv")


@pytest.mark.parametrize("args,code", [
    (["phantom", "--name", "teapot"], 2),
    (["frobnicate"], 2),
    (["phantom", "--grid", "ten"], 2),
    (["forward", "--grid", "1"], 3),
    (["forward", "--noise", "-1"], 3),
    (["singscan", "--checks", "tangent,wobble"], 2),
])
def test_exit_codes(tmp_path, args, code):
    assert main(args + ["--out", str(tmp_path)]) == code


def test_mismatched_images_are_invalid_input(tmp_path):
    io.write_image_csv(tmp_path / "a.csv", np.zeros(16), 4)
    io.write_image_csv(tmp_path / "f.csv", np.zeros(25), 5)
    args = ["forward", "--a", str(tmp_path / "a.csv"), "--f", str(tmp_path / "f.csv"),
            "--out", str(tmp_path)]
    assert main(args) == 3
    assert main(["forward", "--a", str(tmp_path / "a.csv"), "--out", str(tmp_path)]) == 3


def test_missing_sinogram_is_invalid_input(tmp_path):
    assert main(["recon", "--sinogram", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == 3


def test_unknown_config_key_is_usage_error(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[solver]\nalpah = 0.1\n")
    assert main(["phantom", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[phantom]\ngrid = 8\nname = nested_disks\n")
    assert main(["phantom", "--config", str(cfg), "--grid", "6", "--out", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["phantom"] == {"grid": 6, "name": "nested_disks"}
    assert io.read_image_csv(tmp_path / "a.csv").size == 36


def test_invalid_solver_setting_is_invalid_input(tmp_path):
    assert main(["forward", "--grid", "8", "--projections", "3", "--out", str(tmp_path)]) == 0
    cfg = tmp_path / "c.ini"
    cfg.write_text("[solver]\nalpha = 1.0\nt = 1.0\n")
    args = ["recon", "--sinogram", str(tmp_path / "sinogram.csv"), "--grid", "8",
            "--config", str(cfg), "--out", str(tmp_path)]
    assert main(args) == 3


def test_recon_writes_all_artifacts(tmp_path):
    data = tmp_path / "data"
    assert main(["forward", "--grid", "12", "--projections", "6", "--noise", "0.02",
                 "--out", str(data)]) == 0
    assert main(["phantom", "--grid", "8", "--out", str(data)]) == 0
    cfg = tmp_path / "c.ini"
    cfg.write_text("[solver]\nalpha = 0.05\nt = 1.0\nlam = 0.01\neta = 0.01\nmax_outer = 3\n")
    out = tmp_path / "rec"
    args = ["recon", "--sinogram", str(data / "sinogram.csv"), "--truth", str(data / "a.csv"),
            "--grid", "8", "--config", str(cfg), "--out", str(out)]
    assert main(args) == 0
    for name in ("a_rec.csv", "a_rec.pgm", "f_rec.csv", "f_rec.pgm", "history.csv",
                 "summary.csv", "manifest.json"):
        assert (out / name).exists(), name
    with open(out / "summary.csv") as fh:
        summary = next(csv.DictReader(fh))
    with open(out / "history.csv") as fh:
        history = list(csv.DictReader(fh))
    assert int(summary["outer_iterations"]) == len(history) <= 3
    assert float(summary["mb_proportion"]) == float(history[-1]["mb_proportion"])
    a = io.read_image_csv(out / "a_rec.csv")
    truth = io.read_image_csv(data / "a.csv")
    assert float(summary["misclassification"]) == pytest.approx(np.mean(np.abs(a - truth) > 0.5))
    counts = sum(int(v) for k, v in summary.items() if k.startswith("true_"))
    assert counts == 64
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["solver"]["alpha"] == 0.05 and manifest["solver"]["admissible"] == [0.0, 1.0]


def test_singscan_tangent_and_corner(tmp_path):
    assert main(["singscan", "--checks", "tangent,corner", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "report.csv") as fh:
        report = list(csv.DictReader(fh))
    assert [r["check"] for r in report] == ["tangent"] * 4 + ["corner"] * 3
    assert all(r["status"] == "pass" for r in report)
    off, val = io.read_scan_csv(tmp_path / "scan_tangent_0.csv")
    assert off.size == val.size == 12


def test_verify_command(tmp_path, capsys):
    assert main(["verify", "--out", str(tmp_path)]) == 0
    assert "FAIL" not in capsys.readouterr().out
    with open(tmp_path / "verify.csv") as fh:
        assert all(r["status"] == "pass" for r in csv.DictReader(fh))


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "mbspect", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
