import json

import numpy as np

from avcurator.cli import main
from avcurator.corpus import SoundClass, save_manifest
from avcurator.dsp import AudioBuffer, load_spectrogram, write_wav
from avcurator.fixtures import generate_fixture


def run_cli(*args):
    return main([str(a) for a in args])


class TestSpectrogramCommand:
    def test_five_second_crop_shape(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        wav = tmp_path / "clip.wav"
        write_wav(AudioBuffer(0.1 * rng.standard_normal(160000)), wav)
        out = tmp_path / "spec.bin"
        assert run_cli("spectrogram", "--in", wav, "--seconds", "5", "--seed", "3",
                       "--out", out) == 0
        spec = load_spectrogram(out)
        assert spec.shape == (257, 500)
        assert "257x500" in capsys.readouterr().out

    def test_full_clip(self, tmp_path):
        rng = np.random.default_rng(1)
        wav = tmp_path / "clip.wav"
        write_wav(AudioBuffer(0.1 * rng.standard_normal(160000)), wav)
        out = tmp_path / "spec.bin"
        run_cli("spectrogram", "--in", wav, "--target-frames", "1000", "--out", out)
        assert load_spectrogram(out).shape == (257, 1000)


class TestExpandCommand:
    def test_writes_query_manifest(self, tmp_path, capsys):
        classes = [SoundClass(id="bells", display_label="ring church bells", group="others")]
        classes_path = tmp_path / "classes.jsonl"
        save_manifest(classes, classes_path)
        out = tmp_path / "queries.jsonl"
        assert run_cli("expand", "--classes", classes_path, "--out", out) == 0
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        assert {l["text"] for l in lines} == {"ring church bells", "ringing church bells"}


class TestEvalCommand:
    def test_report_written(self, tmp_path, capsys):
        preds = tmp_path / "preds.jsonl"
        preds.write_text(
            json.dumps({"clip_id": "c0", "scores": {"a": 0.8, "b": 0.2}}) + "\n"
            + json.dumps({"clip_id": "c1", "scores": {"a": 0.3, "b": 0.7}}) + "\n"
        )
        truth = tmp_path / "truth.json"
        truth.write_text(json.dumps({"c0": "a", "c1": "b"}))
        out = tmp_path / "report.json"
        assert run_cli("eval", "--predictions", preds, "--truth", truth, "--out", out) == 0
        report = json.loads(out.read_text())
        assert report["top1"] == 1.0
        assert report["map"] == 1.0


class TestAudioCommand:
    def test_policies_file_route(self, tmp_path, capsys):
        from avcurator.corpus import ClipRecord
        clips = [ClipRecord(clip_id=f"v{i}:0", video_id=f"v{i}", class_id="dog",
                            start=0.0, end=10.0) for i in range(3)]
        clips_path = tmp_path / "clips.jsonl"
        save_manifest(clips, clips_path)
        scores_path = tmp_path / "scores.jsonl"
        scores_path.write_text(
            json.dumps({"clip_id": "v0:0", "speech": 0.9, "music": 0.0, "other": 0.0}) + "\n"
            + json.dumps({"clip_id": "v1:0", "speech": 0.1, "music": 0.0, "other": 0.0}) + "\n"
            + json.dumps({"clip_id": "v2:0", "speech": 0.1, "music": 0.9, "other": 0.0}) + "\n"
        )
        policies_path = tmp_path / "policies.json"
        policies_path.write_text(json.dumps(
            {"dog": {"reject_speech": True, "reject_music": False}}))
        out = tmp_path / "kept.jsonl"
        assert run_cli("audio", "--clips", clips_path, "--scores", scores_path,
                       "--policies", policies_path, "--min-clips", "1", "--out", out) == 0
        kept = [json.loads(l)["clip_id"] for l in out.read_text().splitlines()]
        assert kept == ["v1:0", "v2:0"]  # speech-heavy rejected, music allowed


class TestRunAndSplitCommands:
    def test_pipeline_then_split(self, tmp_path, capsys):
        generate_fixture(tmp_path, seed=13)
        config_path = tmp_path / "config.toml"
        assert run_cli("run", "--config", config_path, "--stages", "1-4") == 0
        printed = capsys.readouterr().out.strip().splitlines()
        assert len(printed) == 4
        reports = [json.loads(l) for l in printed]
        assert [r["stage"] for r in reports] == [1, 2, 3, 4]

        final = tmp_path / "run" / "manifests" / "clips.stage4.jsonl"
        out = tmp_path / "splits.jsonl"
        assert run_cli("split", "--clips", final, "--config", config_path, "--out", out) == 0
        counts = json.loads(capsys.readouterr().out)
        assert counts["test"] == 500 and counts["val"] == 200

    def test_stage_subset_spec_parsing(self, tmp_path):
        from avcurator.cli import _parse_stages
        assert _parse_stages("1-4") == [1, 2, 3, 4]
        assert _parse_stages("2") == [2]
        assert _parse_stages("1,3") == [1, 3]
        assert _parse_stages("1-2,4") == [1, 2, 4]


class TestMatchCommand:
    def test_signatures_written(self, tmp_path, capsys):
        generate_fixture(tmp_path, seed=5)
        inputs = tmp_path / "inputs"
        out = tmp_path / "signatures.json"
        assert run_cli(
            "match",
            "--sound-classes", inputs / "classes.jsonl",
            "--visual-classes", inputs / "visual_labels.txt",
            "--embeddings", inputs / "embeddings.txt",
            "--overrides", inputs / "overrides.json",
            "--k", "5",
            "--out", out,
        ) == 0
        signatures = json.loads(out.read_text())
        assert signatures["playing_violin"][0] == "violin"
        assert signatures["dog_barking"][0] == "dog"
        assert signatures["hammering_nails"] == ["hammer"]  # override-only fallback


def test_no_command_prints_help(capsys):
    assert main([]) == 2
