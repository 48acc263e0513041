import json
import socket
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import make_keypoints
from handmaps import AnnotationRecord, read_tensor, write_annotations
from handmaps.cli import main


def write_fixture(path: Path, n=6, seed=90, visible_prob=1.0):
    rng = np.random.default_rng(seed)
    records = [
        AnnotationRecord(f"img{i:03d}", f"img{i:03d}.jpg", 640, 480,
                         make_keypoints(rng, visible_prob=visible_prob))
        for i in range(n)
    ]
    write_annotations(records, path)
    return records


def tree_bytes(directory: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(directory.glob("*.nsrm"))}


class TestSynthCommand:
    def test_writes_both_stacks_per_record(self, tmp_path, capsys):
        anns = tmp_path / "anns.txt"
        write_fixture(anns, n=4)
        out = tmp_path / "maps"
        code = main(["synth", "--annotations", str(anns), "--out-dir", str(out),
                     "--scheme", "g1and6", "--repr", "lpm", "--json-summary"])
        assert code == 0
        assert len(list(out.glob("*.structure.nsrm"))) == 4
        assert len(list(out.glob("*.keypoints.nsrm"))) == 4
        stack = read_tensor(out / "img000.structure.nsrm")
        assert stack.shape == (7, 46, 46)
        kcm = read_tensor(out / "img000.keypoints.nsrm")
        assert kcm.shape == (21, 46, 46)
        summary = json.loads(capsys.readouterr().out)
        assert summary["succeeded"] == 4
        assert summary["failed"] == 0

    def test_rerun_bit_identical(self, tmp_path):
        anns = tmp_path / "anns.txt"
        write_fixture(anns, n=5, seed=91)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert main(["synth", "--annotations", str(anns), "--out-dir", str(out)]) == 0
        assert tree_bytes(out1) == tree_bytes(out2)

    def test_jobs_do_not_change_output(self, tmp_path):
        anns = tmp_path / "anns.txt"
        write_fixture(anns, n=8, seed=92)
        serial, parallel = tmp_path / "serial", tmp_path / "parallel"
        assert main(["synth", "--annotations", str(anns), "--out-dir", str(serial)]) == 0
        assert main(["synth", "--annotations", str(anns), "--out-dir", str(parallel),
                     "--jobs", "4"]) == 0
        assert tree_bytes(serial) == tree_bytes(parallel)

    def test_invalid_sigma_is_config_error(self, tmp_path):
        anns = tmp_path / "anns.txt"
        write_fixture(anns, n=1)
        code = main(["synth", "--annotations", str(anns), "--out-dir", str(tmp_path / "x"),
                     "--sigma-lpm", "-2.0"])
        assert code == 2

    def test_keep_going_skips_bad_records(self, tmp_path, capsys):
        labels = tmp_path / "labels"
        labels.mkdir()
        rng = np.random.default_rng(93)
        good = [[float(x), float(y), 1] for x, y in rng.uniform(50, 300, (21, 2))]
        (labels / "a_bad.json").write_text(json.dumps({"hand_pts": good[:5]}))
        (labels / "b_good.json").write_text(json.dumps({"hand_pts": good}))
        (labels / "c_good.json").write_text(json.dumps({"hand_pts": good}))
        out = tmp_path / "maps"

        code = main(["synth", "--annotations", str(labels), "--format", "panoptic_hands",
                     "--out-dir", str(out), "--keep-going", "--json-summary"])
        assert code == 1
        summary = json.loads(capsys.readouterr().out)
        assert summary["succeeded"] == 2
        assert summary["failures"][0]["image_id"] == "a_bad"
        assert len(list(out.glob("*.structure.nsrm"))) == 2

    def test_without_keep_going_aborts_at_first_failure(self, tmp_path):
        labels = tmp_path / "labels"
        labels.mkdir()
        rng = np.random.default_rng(94)
        good = [[float(x), float(y), 1] for x, y in rng.uniform(50, 300, (21, 2))]
        (labels / "a_bad.json").write_text(json.dumps({"hand_pts": good[:5]}))
        (labels / "b_good.json").write_text(json.dumps({"hand_pts": good}))
        out = tmp_path / "maps"
        code = main(["synth", "--annotations", str(labels), "--format", "panoptic_hands",
                     "--out-dir", str(out)])
        assert code == 1
        assert not list(out.glob("*.nsrm"))

    def test_config_file_with_flag_override(self, tmp_path):
        anns = tmp_path / "anns.txt"
        write_fixture(anns, n=1, seed=95)
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"representation": "lpm", "scheme": "g1"}))
        out = tmp_path / "maps"
        code = main(["synth", "--annotations", str(anns), "--out-dir", str(out),
                     "--config", str(config), "--repr", "ldm"])
        assert code == 0
        values = read_tensor(out / "img000.structure.nsrm")
        assert values.shape[0] == 1  # scheme from the config file
        assert set(np.unique(values)) <= {0.0, 1.0}  # representation from the flag

    def test_unknown_config_key_rejected(self, tmp_path):
        anns = tmp_path / "anns.txt"
        write_fixture(anns, n=1)
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"sigma": 2.0}))
        code = main(["synth", "--annotations", str(anns), "--out-dir", str(tmp_path / "x"),
                     "--config", str(config)])
        assert code == 2

    def test_custom_topology_from_config(self, tmp_path):
        # a three-keypoint chain skeleton runs through the same engine
        rng = np.random.default_rng(104)
        records = [AnnotationRecord("tiny", "tiny.jpg", 100, 100,
                                    make_keypoints(rng, count=3, low=40, high=300))]
        anns = tmp_path / "anns.txt"
        write_annotations(records, anns)
        config = tmp_path / "run.json"
        config.write_text(json.dumps({
            "scheme": "g6",
            "topology": {
                "keypoint_count": 3,
                "limbs": [[0, 1], [1, 2]],
                "chains": [[0, 1, 2]],
                "chain_names": ["digit"],
            },
        }))
        out = tmp_path / "maps"
        code = main(["synth", "--annotations", str(anns), "--out-dir", str(out),
                     "--config", str(config)])
        assert code == 0
        assert read_tensor(out / "tiny.structure.nsrm").shape == (2, 46, 46)
        assert read_tensor(out / "tiny.keypoints.nsrm").shape == (3, 46, 46)


class TestEvalCommand:
    def test_published_row_average_reprinted(self, capsys):
        code = main(["eval", "--values", "78.48,84.73,88.54,90.89,92.64"])
        assert code == 0
        out = capsys.readouterr().out
        assert "87.0560" in out

    def test_improvement_row_format(self, capsys):
        # averages recomputed from the full rows: 80.024 vs 76.94
        code = main(["eval", "--values", "59.73,76.86,84.43,88.23,90.87",
                     "--threshold-list", "0.04,0.06,0.08,0.10,0.12",
                     "--baseline", "55.25,73.23,81.45,85.97,88.80"])
        assert code == 0
        out = capsys.readouterr().out
        assert "improvement: +3.08 (+4.01%)" in out

    def test_improvement_of_published_averages(self, capsys):
        code = main(["eval", "--values", "80.03", "--threshold-list", "0.5",
                     "--baseline", "76.94"])
        assert code == 0
        assert "improvement: +3.09 (+4.02%)" in capsys.readouterr().out

    def test_perfect_predictions_all_ones(self, tmp_path, capsys):
        anns = tmp_path / "anns.txt"
        write_fixture(anns, n=5, seed=96)
        code = main(["eval", "--preds", str(anns), "--gts", str(anns),
                     "--preset", "panoptic", "--json-summary"])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["values"] == [1.0] * 5
        assert summary["average"] == 1.0

    def test_tensor_directory_predictions(self, tmp_path, capsys):
        anns = tmp_path / "anns.txt"
        write_fixture(anns, n=4, seed=97)
        maps = tmp_path / "maps"
        assert main(["synth", "--annotations", str(anns), "--out-dir", str(maps)]) == 0
        code = main(["eval", "--preds", str(maps), "--gts", str(anns),
                     "--preset", "panoptic", "--json-summary"])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["values"] == [1.0] * 5  # argmax decode lands within 0.04*bbox

    def test_curve_and_plot_outputs(self, tmp_path, capsys):
        anns = tmp_path / "anns.txt"
        write_fixture(anns, n=3, seed=98)
        curve = tmp_path / "curve.tsv"
        plot = tmp_path / "curve.png"
        code = main(["eval", "--preds", str(anns), "--gts", str(anns),
                     "--curve-out", str(curve), "--plot-out", str(plot)])
        assert code == 0
        lines = curve.read_text().splitlines()
        assert len(lines) == 5
        assert lines[0].split("\t")[0] == "0.1"
        assert plot.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_missing_inputs_rejected(self):
        assert main(["eval"]) == 1

    def test_value_count_must_match_preset(self):
        assert main(["eval", "--values", "1,2,3"]) == 1


class TestRenderCommand:
    def test_grayscale_channel(self, tmp_path):
        anns = tmp_path / "anns.txt"
        write_fixture(anns, n=1, seed=99)
        maps = tmp_path / "maps"
        assert main(["synth", "--annotations", str(anns), "--out-dir", str(maps)]) == 0
        image = tmp_path / "hand.png"
        code = main(["render", "--tensor", str(maps / "img000.structure.nsrm"),
                     "--out", str(image), "--channel", "0"])
        assert code == 0
        from PIL import Image

        with Image.open(image) as im:
            assert im.mode == "L"
            assert im.size == (46, 46)

    def test_composite_color(self, tmp_path):
        anns = tmp_path / "anns.txt"
        write_fixture(anns, n=1, seed=100)
        maps = tmp_path / "maps"
        assert main(["synth", "--annotations", str(anns), "--out-dir", str(maps),
                     "--scheme", "g6"]) == 0
        image = tmp_path / "hand.png"
        code = main(["render", "--tensor", str(maps / "img000.structure.nsrm"),
                     "--out", str(image)])
        assert code == 0
        from PIL import Image

        with Image.open(image) as im:
            assert im.mode == "RGB"

    def test_single_channel_stack_defaults_to_grayscale(self, tmp_path):
        anns = tmp_path / "anns.txt"
        write_fixture(anns, n=1, seed=105)
        maps = tmp_path / "maps"
        assert main(["synth", "--annotations", str(anns), "--out-dir", str(maps),
                     "--scheme", "g1"]) == 0
        image = tmp_path / "whole.png"
        assert main(["render", "--tensor", str(maps / "img000.structure.nsrm"),
                     "--out", str(image)]) == 0
        from PIL import Image

        with Image.open(image) as im:
            assert im.mode == "L"

    def test_all_zero_stack_renders_black(self, tmp_path):
        from PIL import Image

        from handmaps import write_tensor

        tensor = tmp_path / "zero.nsrm"
        write_tensor(np.zeros((1, 8, 8), dtype=np.float32), tensor)
        image = tmp_path / "zero.png"
        assert main(["render", "--tensor", str(tensor), "--out", str(image),
                     "--channel", "0"]) == 0
        with Image.open(image) as im:
            assert im.getextrema() == (0, 0)

    def test_channel_out_of_range(self, tmp_path):
        from handmaps import write_tensor

        tensor = tmp_path / "t.nsrm"
        write_tensor(np.zeros((2, 4, 4), dtype=np.float32), tensor)
        assert main(["render", "--tensor", str(tensor), "--out",
                     str(tmp_path / "x.png"), "--channel", "5"]) == 1


class TestScheduleCommand:
    def test_published_decay_rows(self, capsys):
        code = main(["schedule", "--lambda1", "0.5", "--epochs", "46"])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[1].split() == ["0", "0.5", "0"]
        assert lines[21].split() == ["20", "0.05", "0"]
        assert lines[46].split() == ["45", "0.005", "0"]

    def test_defaults_from_representation(self, capsys):
        code = main(["schedule", "--repr", "ldm", "--scheme", "g1and6", "--epochs", "1"])
        assert code == 0
        row = capsys.readouterr().out.splitlines()[1].split()
        assert row == ["0", "0.2", "0.04"]

    def test_bad_epochs(self):
        assert main(["schedule", "--lambda1", "1.0", "--epochs", "0"]) == 1

    def test_json_summary_is_sole_stdout(self, capsys):
        code = main(["schedule", "--lambda1", "1.0", "--epochs", "3", "--json-summary"])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert [row["epoch"] for row in summary["rows"]] == [0, 1, 2]


class TestSplitCommand:
    def test_partition_files(self, tmp_path, capsys):
        anns = tmp_path / "anns.txt"
        write_fixture(anns, n=30, seed=101)
        out = tmp_path / "splits"
        code = main(["split", "--annotations", str(anns), "--out-dir", str(out),
                     "--seed", "5", "--json-summary"])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["sizes"] == {"train": 24, "validation": 3, "test": 3}
        from handmaps import load_annotations

        train = load_annotations(out / "train.txt")
        assert len(train) == 24

    def test_same_seed_same_partition(self, tmp_path):
        anns = tmp_path / "anns.txt"
        write_fixture(anns, n=25, seed=102)
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["split", "--annotations", str(anns), "--out-dir", str(out),
                         "--seed", "9"]) == 0
        assert (a / "train.txt").read_bytes() == (b / "train.txt").read_bytes()
        assert (a / "test.txt").read_bytes() == (b / "test.txt").read_bytes()


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture(scope="class")
def live_server():
    port = free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "uvicorn", "handmaps.service.app:app",
         "--host", "127.0.0.1", "--port", str(port), "--log-level", "warning"],
        stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
    )
    import httpx

    url = f"http://127.0.0.1:{port}"
    try:
        for _ in range(100):
            try:
                if httpx.get(url + "/health", timeout=1.0).status_code == 200:
                    break
            except httpx.HTTPError:
                time.sleep(0.1)
        else:
            raise RuntimeError("service did not come up")
        yield url
    finally:
        proc.terminate()
        proc.wait(timeout=10)


class TestRemoteMode:
    def test_synth_against_live_server_matches_local(self, live_server, tmp_path):
        anns = tmp_path / "anns.txt"
        write_fixture(anns, n=3, seed=103)
        local, remote = tmp_path / "local", tmp_path / "remote"
        assert main(["synth", "--annotations", str(anns), "--out-dir", str(local),
                     "--scheme", "g1and6"]) == 0
        assert main(["synth", "--annotations", str(anns), "--out-dir", str(remote),
                     "--scheme", "g1and6", "--server", live_server]) == 0
        assert tree_bytes(local) == tree_bytes(remote)

    def test_schedule_against_live_server(self, live_server, capsys):
        code = main(["schedule", "--lambda1", "1.0", "--epochs", "21",
                     "--server", live_server])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[21].split() == ["20", "0.1", "0"]

    def test_eval_against_live_server(self, live_server, tmp_path, capsys):
        anns = tmp_path / "anns.txt"
        write_fixture(anns, n=4, seed=106)
        code = main(["eval", "--preds", str(anns), "--gts", str(anns),
                     "--preset", "panoptic", "--server", live_server,
                     "--json-summary"])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["values"] == [1.0] * 5

    def test_server_error_reported(self, live_server, tmp_path):
        labels = tmp_path / "labels"
        labels.mkdir()
        (labels / "bad.json").write_text(json.dumps({"hand_pts": [[1.0, 2.0, 1]] * 5}))
        out = tmp_path / "maps"
        code = main(["synth", "--annotations", str(labels), "--format", "panoptic_hands",
                     "--out-dir", str(out), "--server", live_server])
        assert code == 1


class TestSynthOutputsSelection:
    def test_structure_only(self, tmp_path):
        anns = tmp_path / "anns.txt"
        write_fixture(anns, n=2, seed=107)
        out = tmp_path / "maps"
        code = main(["synth", "--annotations", str(anns), "--out-dir", str(out),
                     "--outputs", "structure"])
        assert code == 0
        assert len(list(out.glob("*.structure.nsrm"))) == 2
        assert not list(out.glob("*.keypoints.nsrm"))

    def test_unknown_output_kind_rejected(self, tmp_path):
        anns = tmp_path / "anns.txt"
        write_fixture(anns, n=1, seed=109)
        code = main(["synth", "--annotations", str(anns), "--out-dir", str(tmp_path / "x"),
                     "--outputs", "structure,everything"])
        assert code == 2

    def test_missing_prediction_tensor_reported(self, tmp_path):
        anns = tmp_path / "anns.txt"
        write_fixture(anns, n=2, seed=108)
        maps = tmp_path / "maps"
        assert main(["synth", "--annotations", str(anns), "--out-dir", str(maps)]) == 0
        (maps / "img001.keypoints.nsrm").unlink()
        code = main(["eval", "--preds", str(maps), "--gts", str(anns),
                     "--preset", "panoptic"])
        assert code == 1
