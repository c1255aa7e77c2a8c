"""End-to-end command-line pipeline on a tiny run."""

import json

import numpy as np
import pytest

from depthpolyp.cli import main
from depthpolyp.data import load_dataset
from depthpolyp.degrade import read_manifest, replay_events

MINI = ["--set", "net.widths=4,4,4,4", "--set", "net.unified_dim=4",
        "--set", "net.stream_dim=4", "--set", "net.fused_dim=8",
        "--set", "data.size=32"]
CHEAP_DEGRADE = ["--set", "degrade.motion_kernel=3,3",
                 "--set", "degrade.spots_radius=2,4"]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Run synth -> degrade -> train clean/noisy once; share the artifacts."""
    root = tmp_path_factory.mktemp("cli")
    clean = str(root / "clean")
    noisy = str(root / "noisy")
    assert main(["synth", "--out", clean, "--n", "6", "--seed", "3"] + MINI) == 0
    assert main(["degrade", "--src", clean, "--out", noisy, "--seed", "11"]
                + MINI + CHEAP_DEGRADE) == 0
    train_common = MINI + CHEAP_DEGRADE + [
        "--set", "train.total_steps=4", "--set", "train.batch_size=4",
        "--set", "train.lr=1e-3"]
    clean_ckpt = str(root / "run" / "clean.ckpt")
    noisy_ckpt = str(root / "run" / "noisy.ckpt")
    assert main(["train", "--data", clean, "--out", clean_ckpt,
                 "--condition", "clean", "--seed", "0"] + train_common) == 0
    assert main(["train", "--data", clean, "--out", noisy_ckpt,
                 "--condition", "noisy", "--seed", "0"] + train_common) == 0
    return {"root": root, "clean": clean, "noisy": noisy,
            "clean_ckpt": clean_ckpt, "noisy_ckpt": noisy_ckpt}


def test_synth_writes_loadable_dataset(pipeline):
    samples = load_dataset(pipeline["clean"])
    assert len(samples) == 6
    assert samples[0].image.shape == (32, 32, 3)


def test_degrade_writes_manifest_that_replays_bit_exactly(pipeline):
    clean = load_dataset(pipeline["clean"])
    degraded = load_dataset(pipeline["noisy"], condition="noisy")
    records = read_manifest(f"{pipeline['noisy']}/manifest.jsonl")
    assert [r["id"] for r in records] == [s.id for s in clean]
    for s, d, rec in zip(clean, degraded, records):
        img, mask, depth = replay_events(s.image, s.mask, s.depth,
                                         rec["events"])
        # saved files quantize to the 255 grid; replay must land on the
        # same grid points
        assert np.array_equal(np.rint(np.clip(img, 0, 1) * 255),
                              np.rint(d.image * 255))
        assert np.array_equal(mask, d.mask)
        assert np.array_equal(np.rint(np.clip(depth, 0, 1) * 255),
                              np.rint(d.depth * 255))


def test_train_writes_checkpoint_history_and_manifest(pipeline):
    ckpt = pipeline["clean_ckpt"]
    rows = [json.loads(line) for line in open(ckpt + ".history.jsonl")]
    assert [r["step"] for r in rows] == [1, 2, 3, 4]
    manifest = json.load(open(ckpt + ".manifest.json"))
    assert manifest["condition"] == "clean"
    assert manifest["steps"] == 4
    assert len(manifest["config_hash"]) == 16
    assert manifest["final_loss"] == pytest.approx(rows[-1]["loss"])


def test_eval_prints_summary_and_writes_reports(pipeline, capsys, tmp_path):
    report = str(tmp_path / "rep" / "clean_eval")
    rc = main(["eval", "--checkpoint", pipeline["clean_ckpt"],
               "--testset", pipeline["clean"], "--report", report] + MINI)
    assert rc == 0
    out = capsys.readouterr().out.strip().split("\n")
    summary = json.loads(out[0])
    assert summary["count"] == 6
    assert 0.0 <= summary["dice"] <= 1.0
    csv_text = open(report + ".csv").read()
    assert csv_text.startswith("sample_id,dice,iou,recall")
    assert "mean" in csv_text
    assert len(open(report + ".jsonl").readlines()) == 7


def test_quadrant_reports_all_cells_and_deltas(pipeline, capsys, tmp_path):
    report = str(tmp_path / "quad")
    rc = main(["quadrant", "--clean-ckpt", pipeline["clean_ckpt"],
               "--noisy-ckpt", pipeline["noisy_ckpt"],
               "--clean-set", pipeline["clean"],
               "--noisy-set", pipeline["noisy"],
               "--report", report] + MINI)
    assert rc == 0
    summary = json.loads(capsys.readouterr().out.strip().split("\n")[0])
    assert set(summary) == {"clean_to_clean", "clean_to_noisy",
                            "noisy_to_clean", "noisy_to_noisy",
                            "delta_r", "delta_h"}
    assert summary["delta_r"] == pytest.approx(
        summary["noisy_to_noisy"] - summary["clean_to_noisy"])
    rows = open(report + ".csv").read().strip().split("\n")
    assert len(rows) == 7  # header + 4 quadrants + 2 deltas


def test_count_prints_exact_totals(capsys):
    rc = main(["count"] + MINI)
    assert rc == 0
    out = capsys.readouterr().out
    assert "parameters:" in out
    assert "1262" in out     # mini parameter total
    assert "77872" in out    # mini MACs at 32x32


def test_count_default_config_totals(capsys):
    rc = main(["count"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "80334" in out
    assert "7532560" in out


def test_bench_emits_json(capsys):
    rc = main(["bench", "--size", "32", "--iters", "10", "--warmup", "2"] + MINI)
    assert rc == 0
    result = json.loads(capsys.readouterr().out.strip().split("\n")[-1])
    assert result["input_size"] == [32, 32]
    assert result["mean_fps"] > 0


def test_errors_exit_nonzero_with_message(tmp_path, capsys):
    rc = main(["train", "--data", str(tmp_path / "missing"),
               "--out", str(tmp_path / "x.ckpt")] + MINI)
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_unknown_config_key_exits_nonzero(tmp_path, capsys):
    rc = main(["synth", "--out", str(tmp_path / "d"),
               "--set", "train.epochz=3"])
    assert rc == 1
    assert "train.epochz" in capsys.readouterr().err


def test_config_file_is_honored(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("data.size = 32\ndata.train_n = 2\n")
    out_dir = str(tmp_path / "out")
    rc = main(["synth", "--out", out_dir, "--config", str(cfg)])
    assert rc == 0
    samples = load_dataset(out_dir)
    assert len(samples) == 2
    assert samples[0].image.shape == (32, 32, 3)
