"""End-to-end CLI contracts: exit codes, JSON errors, determinism."""

import json
import struct
import subprocess
import sys

import numpy as np
import pytest

from ovfuse import read_label_map_file, write_label_map_file, LabelMap
from ovfuse.cli import main
from ovfuse.interchange import IGNORE_INDEX
from ovfuse.synth import sha256_file


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture()
def fixture_dir(tmp_path):
    out = tmp_path / "fx"
    code = run_cli(
        "synth", "--seed", 21, "--height", 24, "--width", 24,
        "--categories", 4, "--distractors", 1, "--out-dir", out,
    )
    assert code == 0
    return out


class TestSynth:
    def test_same_seed_twice_same_files(self, tmp_path, capsys):
        for d in ("a", "b"):
            assert run_cli("synth", "--seed", 9, "--out-dir", tmp_path / d) == 0
        capsys.readouterr()
        for name in ("bundle.sov3", "truth.lbl", "classes.json", "expected.lbl"):
            assert sha256_file(tmp_path / "a" / name) == sha256_file(tmp_path / "b" / name)

    def test_spec_file_input(self, tmp_path, capsys):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"seed": 3, "height": 16, "width": 16}))
        assert run_cli("synth", "--spec", spec, "--out-dir", tmp_path / "o") == 0
        manifest = json.loads((tmp_path / "o" / "fixture.json").read_text())
        assert manifest["seed"] == 3
        assert set(manifest["digests"]) == {
            "bundle.sov3", "truth.lbl", "classes.json", "expected.lbl",
        }

    def test_invalid_spec_exits_2(self, tmp_path, capsys):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"seed": 3, "height": 0}))
        assert run_cli("synth", "--spec", spec, "--out-dir", tmp_path / "o") == 2
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["error"] == "validation"


class TestFuse:
    def test_output_digest_matches_fixture_manifest(self, fixture_dir, tmp_path, capsys):
        out = tmp_path / "out.lbl"
        code = run_cli(
            "fuse", "-i", fixture_dir / "bundle.sov3",
            "-c", fixture_dir / "classes.json", "-o", out,
            "--tau", 0.5, "--instance-conf-threshold", 0.5,
        )
        assert code == 0
        manifest = json.loads((fixture_dir / "fixture.json").read_text())
        assert sha256_file(out) == manifest["digests"]["expected.lbl"]

    def test_no_presence_reveals_the_distractor(self, fixture_dir, tmp_path, capsys):
        classes = json.loads((fixture_dir / "classes.json").read_text())
        distractor_index = len(classes["classes"]) - 2  # last real category

        gated, ungated = tmp_path / "gated.lbl", tmp_path / "ungated.lbl"
        assert run_cli("fuse", "-i", fixture_dir / "bundle.sov3",
                       "-c", fixture_dir / "classes.json", "-o", gated) == 0
        assert run_cli("fuse", "-i", fixture_dir / "bundle.sov3",
                       "-c", fixture_dir / "classes.json", "-o", ungated,
                       "--no-presence") == 0
        with_gate = read_label_map_file(gated).labels
        without_gate = read_label_map_file(ungated).labels
        assert not (with_gate == distractor_index).any()
        assert (without_gate == distractor_index).any()

    def test_missing_class_table_exits_2_naming_path(self, fixture_dir, tmp_path, capsys):
        code = run_cli("fuse", "-i", fixture_dir / "bundle.sov3",
                       "-c", tmp_path / "nope.json", "-o", tmp_path / "x.lbl")
        assert code == 2
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert "nope.json" in err["message"]

    def test_threads_do_not_change_bytes(self, fixture_dir, tmp_path, capsys):
        digests = []
        for threads in (1, 4):
            out = tmp_path / f"t{threads}.lbl"
            assert run_cli("fuse", "-i", fixture_dir / "bundle.sov3",
                           "-c", fixture_dir / "classes.json", "-o", out,
                           "--threads", threads) == 0
            digests.append(sha256_file(out))
        assert digests[0] == digests[1]

    def test_internal_error_exits_3(self, fixture_dir, tmp_path, capsys, monkeypatch):
        import ovfuse.cli as climod

        def boom(*a, **k):
            raise RuntimeError("kaput")

        monkeypatch.setattr(climod.fusion, "run_pipeline", boom)
        code = run_cli("fuse", "-i", fixture_dir / "bundle.sov3",
                       "-c", fixture_dir / "classes.json", "-o", tmp_path / "x.lbl")
        assert code == 3
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["error"] == "internal"


class TestFuseManifest:
    def test_plan_then_fuse_tiles(self, tmp_path, capsys):
        from ovfuse import read_bundle_file, write_bundle_file
        from ovfuse.synth import SynthSpec, generate
        from ovfuse.tiling import crop_bundle, read_tile_manifest

        bundle, _, classes = generate(SynthSpec(seed=6, height=40, width=40,
                                                category_count=3))
        classes.to_file(tmp_path / "classes.json")
        manifest_path = tmp_path / "tiles.json"
        assert run_cli("plan", "--height", 40, "--width", 40, "--tile-size", 16,
                       "-o", manifest_path, "--bundle-prefix", "t_") == 0
        manifest = read_tile_manifest(manifest_path)
        for win, rel in zip(manifest.grid.tiles, manifest.bundle_paths):
            write_bundle_file(crop_bundle(bundle, win), tmp_path / rel)

        out_tiled = tmp_path / "tiled.lbl"
        assert run_cli("fuse", "-i", manifest_path, "-c", tmp_path / "classes.json",
                       "-o", out_tiled) == 0

        whole = tmp_path / "whole.sov3"
        write_bundle_file(bundle, whole)
        out_whole = tmp_path / "whole.lbl"
        assert run_cli("fuse", "-i", whole, "-c", tmp_path / "classes.json",
                       "-o", out_whole) == 0
        assert sha256_file(out_tiled) == sha256_file(out_whole)

    def test_internal_tiling_flag_matches_whole(self, tmp_path, capsys):
        from ovfuse import write_bundle_file
        from ovfuse.synth import SynthSpec, generate

        bundle, _, classes = generate(SynthSpec(seed=8, height=50, width=30,
                                                category_count=3))
        classes.to_file(tmp_path / "classes.json")
        path = tmp_path / "big.sov3"
        write_bundle_file(bundle, path)
        a, b = tmp_path / "a.lbl", tmp_path / "b.lbl"
        assert run_cli("fuse", "-i", path, "-c", tmp_path / "classes.json",
                       "-o", a) == 0
        assert run_cli("fuse", "-i", path, "-c", tmp_path / "classes.json",
                       "-o", b, "--tile-size", 16) == 0
        assert sha256_file(a) == sha256_file(b)


class TestEval:
    def test_identical_rasters_give_miou_1(self, tmp_path, capsys):
        labels = LabelMap(np.asarray([[0, 1], [1, 0]], np.uint16))
        p = tmp_path / "p.lbl"
        write_label_map_file(labels, p)
        classes = tmp_path / "classes.json"
        classes.write_text(json.dumps({"classes": ["a", "b"], "background_index": None}))
        assert run_cli("eval", "--pred", p, "--truth", p, "-c", classes) == 0
        out = capsys.readouterr().out
        assert "1.0000" in out

    def test_foreground_mode_prints_one_line(self, tmp_path, capsys):
        labels = LabelMap(np.asarray([[0, 1]], np.uint16))
        p = tmp_path / "p.lbl"
        write_label_map_file(labels, p)
        classes = tmp_path / "classes.json"
        classes.write_text(json.dumps({"classes": ["bg", "building"],
                                       "background_index": 0}))
        assert run_cli("eval", "--pred", p, "--truth", p, "-c", classes,
                       "--foreground", "building") == 0
        out = capsys.readouterr().out.strip()
        assert out == "building IoU: 1.0000"

    def test_dimension_mismatch_exits_2(self, tmp_path, capsys):
        a, b = tmp_path / "a.lbl", tmp_path / "b.lbl"
        write_label_map_file(LabelMap(np.zeros((2, 2), np.uint16)), a)
        write_label_map_file(LabelMap(np.zeros((3, 2), np.uint16)), b)
        classes = tmp_path / "classes.json"
        classes.write_text(json.dumps({"classes": ["a"], "background_index": None}))
        assert run_cli("eval", "--pred", a, "--truth", b, "-c", classes) == 2

    def test_json_report_written(self, tmp_path, capsys):
        p = tmp_path / "p.lbl"
        write_label_map_file(LabelMap(np.zeros((2, 2), np.uint16)), p)
        classes = tmp_path / "classes.json"
        classes.write_text(json.dumps({"classes": ["a"], "background_index": None}))
        rep = tmp_path / "report.json"
        assert run_cli("eval", "--pred", p, "--truth", p, "-c", classes,
                       "--json", rep) == 0
        obj = json.loads(rep.read_text())
        assert obj["miou"] == 1.0


class TestRenderCli:
    def test_render_and_decode_round_trip(self, tmp_path, capsys):
        from PIL import Image
        from ovfuse.palette import decode_labels
        from ovfuse.interchange import ClassTable

        labels = LabelMap(np.asarray([[0, 1], [IGNORE_INDEX, 2]], np.uint16))
        lbl = tmp_path / "m.lbl"
        write_label_map_file(labels, lbl)
        classes_path = tmp_path / "classes.json"
        classes_path.write_text(json.dumps({"classes": ["a", "b", "c"],
                                            "background_index": None}))
        png = tmp_path / "m.png"
        assert run_cli("render", "-i", lbl, "-c", classes_path, "-o", png) == 0
        decoded = decode_labels(Image.open(png), ClassTable(("a", "b", "c")))
        assert decoded == labels

    def test_unknown_palette_class_exits_2(self, tmp_path, capsys):
        labels = LabelMap(np.zeros((1, 1), np.uint16))
        lbl = tmp_path / "m.lbl"
        write_label_map_file(labels, lbl)
        classes_path = tmp_path / "classes.json"
        classes_path.write_text(json.dumps({"classes": ["a"], "background_index": None}))
        pal = tmp_path / "pal.json"
        pal.write_text(json.dumps({"zz": [1, 2, 3]}))
        assert run_cli("render", "-i", lbl, "-c", classes_path, "-o", tmp_path / "m.png",
                       "--palette", pal) == 2


class TestInspect:
    def test_valid_bundle_reports_zero_warnings(self, fixture_dir, capsys):
        assert run_cli("inspect", "-i", fixture_dir / "bundle.sov3") == 0
        out = capsys.readouterr().out
        assert "validation warnings: 0" in out
        assert "presence=" in out

    def test_corrupted_bundle_names_the_field(self, fixture_dir, tmp_path, capsys):
        data = bytearray((fixture_dir / "bundle.sov3").read_bytes())
        # force the first prompt's presence float to NaN: it follows the
        # header, the id, the dims/counts, the category name, and the text
        nan = struct.pack("<f", float("nan"))
        # locate by parsing offsets cheaply: rewrite every f32-aligned slot
        # until the reader complains about presence
        corrupted = tmp_path / "bad.sov3"
        for off in range(8, len(data) - 4):
            trial = bytearray(data)
            trial[off : off + 4] = nan
            corrupted.write_bytes(bytes(trial))
            if run_cli("inspect", "-i", corrupted) == 2:
                err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
                assert err["error"] in ("validation", "format", "truncated")
                assert err["message"]
                return
            capsys.readouterr()
        pytest.fail("no corruption was detected")


class TestPlan:
    def test_manifest_windows_match_plan_tiles(self, tmp_path, capsys):
        from ovfuse import plan_tiles
        from ovfuse.tiling import read_tile_manifest

        out = tmp_path / "m.json"
        assert run_cli("plan", "--height", 2500, "--width", 1300,
                       "--tile-size", 512, "--overlap", 64, "-o", out) == 0
        manifest = read_tile_manifest(out)
        assert manifest.grid == plan_tiles(2500, 1300, 512, 64)


class TestSubprocessEntry:
    def test_console_script_runs(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "ovfuse.cli", "plan", "--height", "64",
             "--width", "64", "--tile-size", "32", "-o", str(tmp_path / "m.json")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "m.json").exists()

    def test_bad_args_exit_2(self):
        proc = subprocess.run(
            [sys.executable, "-m", "ovfuse.cli", "fuse"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 2
