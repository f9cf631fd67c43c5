import json

import pytest

from avcurator.corpus import (
    ClipRecord,
    ManifestError,
    SoundClass,
    StageReport,
    StatusTransitionError,
    VideoRecord,
    derive_clip_id,
    diff_manifests,
    load_manifest,
    save_manifest,
    stage_report,
    validate_clips_against_videos,
)


def make_clip(i=0, video="vid0", class_id="dog", start=5.0):
    return ClipRecord(
        clip_id=f"{video}:{round(start * 1000) + i}",
        video_id=video,
        class_id=class_id,
        start=start,
        end=start + 10.0,
        provenance={"visual_pass"},
    )


class TestRecords:
    def test_clip_duration_must_be_ten_seconds(self):
        with pytest.raises(ManifestError, match="duration"):
            ClipRecord(clip_id="v:0", video_id="v", class_id="c", start=0.0, end=9.0)

    def test_clip_duration_tolerance_one_ms(self):
        ClipRecord(clip_id="v:0", video_id="v", class_id="c", start=0.0, end=10.0005)
        with pytest.raises(ManifestError):
            ClipRecord(clip_id="v:0", video_id="v", class_id="c", start=0.0, end=10.002)

    def test_clip_id_derivation(self):
        assert derive_clip_id("abc", 2.3) == "abc:2300"
        assert derive_clip_id("abc", 0.0) == "abc:0"

    def test_unknown_group_rejected(self):
        with pytest.raises(ManifestError, match="group"):
            SoundClass(id="x", display_label="x", group="weather")

    def test_music_allowed_defaults_from_group(self):
        assert SoundClass(id="v", display_label="violin", group="music").music_allowed
        assert not SoundClass(id="d", display_label="dog", group="animals").music_allowed
        forced = SoundClass(id="d", display_label="dog", group="animals", music_allowed=True)
        assert forced.music_allowed

    def test_video_duration_positive(self):
        with pytest.raises(ManifestError):
            VideoRecord(video_id="v", duration=0.0, class_id="c")

    def test_stage_report_counts_non_negative(self):
        with pytest.raises(ValueError):
            StageReport(stage=2, classes_remaining=-1, videos_remaining=0, clips_remaining=0)
        with pytest.raises(ValueError):
            StageReport(stage=5, classes_remaining=0, videos_remaining=0, clips_remaining=0)


class TestStatusLifecycle:
    def test_forward_transitions(self):
        cls = SoundClass(id="x", display_label="x", group="others")
        for status in ("visually_verified", "audio_verified", "retained"):
            cls.advance_status(status)
            assert cls.status == status

    def test_backward_transition_rejected(self):
        cls = SoundClass(id="x", display_label="x", group="others",
                         status="audio_verified")
        with pytest.raises(StatusTransitionError):
            cls.advance_status("candidate")

    def test_dropped_from_any_state_and_terminal(self):
        cls = SoundClass(id="x", display_label="x", group="others",
                         status="visually_verified")
        cls.advance_status("dropped")
        assert cls.status == "dropped"
        with pytest.raises(StatusTransitionError):
            cls.advance_status("retained")


class TestManifestIO:
    def test_round_trip_exact(self, tmp_path):
        clips = [make_clip(i=0, video=f"v{i}", start=float(i)) for i in range(3)]
        clips[1].provenance = {"visual_pass", "audio_pass", "ensemble_easy"}
        clips[2].split = "test"
        path = tmp_path / "clips.jsonl"
        assert save_manifest(clips, path) == 3
        loaded = load_manifest(path, "clips")
        assert loaded == clips

    def test_load_three_valid_clip_lines(self, tmp_path):
        path = tmp_path / "clips.jsonl"
        save_manifest([make_clip(video=f"v{i}") for i in range(3)], path)
        assert len(load_manifest(path, "clips")) == 3

    def test_class_and_video_round_trips(self, tmp_path):
        classes = [
            SoundClass(id="violin", display_label="playing violin", group="music",
                       status="visually_verified", visual_signature=["violin", "bow"]),
            SoundClass(id="dog", display_label="dog barking", group="animals"),
        ]
        videos = [VideoRecord(video_id="v1", duration=63.5, class_id="dog",
                              query_used="dog barking")]
        class_path, video_path = tmp_path / "c.jsonl", tmp_path / "v.jsonl"
        save_manifest(classes, class_path)
        save_manifest(videos, video_path)
        assert load_manifest(class_path, "classes") == classes
        assert load_manifest(video_path, "videos") == videos

    def test_scores_kind_returns_raw_records(self, tmp_path):
        path = tmp_path / "scores.jsonl"
        path.write_text(json.dumps({"clip_id": "a:0", "speech": 0.2}) + "\n"
                        + json.dumps({"clip_id": "b:0", "speech": 0.9}) + "\n")
        records = load_manifest(path, "scores")
        assert records == [{"clip_id": "a:0", "speech": 0.2},
                           {"clip_id": "b:0", "speech": 0.9}]

    def test_duration_violation_reports_line(self, tmp_path):
        good = make_clip().to_json()
        bad = make_clip(video="v9").to_json()
        bad["end"] = bad["start"] + 9.0
        path = tmp_path / "clips.jsonl"
        path.write_text(json.dumps(good) + "\n" + json.dumps(bad) + "\n")
        with pytest.raises(ManifestError, match="line 2") as err:
            load_manifest(path, "clips")
        assert "duration" in str(err.value)

    def test_duplicate_clip_id_rejected(self, tmp_path):
        clip = make_clip()
        path = tmp_path / "clips.jsonl"
        path.write_text(json.dumps(clip.to_json()) + "\n" + json.dumps(clip.to_json()) + "\n")
        with pytest.raises(ManifestError, match="duplicate"):
            load_manifest(path, "clips")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ManifestError, match="not found"):
            load_manifest(tmp_path / "nope.jsonl", "clips")

    def test_malformed_json_reports_line(self, tmp_path):
        path = tmp_path / "clips.jsonl"
        path.write_text(json.dumps(make_clip().to_json()) + "\n{oops\n")
        with pytest.raises(ManifestError, match="line 2"):
            load_manifest(path, "clips")

    def test_more_than_two_clips_per_video_rejected(self, tmp_path):
        clips = [make_clip(start=float(s)) for s in (0, 20, 40)]
        path = tmp_path / "clips.jsonl"
        path.write_text("".join(json.dumps(c.to_json()) + "\n" for c in clips))
        with pytest.raises(ManifestError, match="more than 2"):
            load_manifest(path, "clips")


class TestStageReport:
    def test_under_threshold_class_dropped(self):
        classes = [
            SoundClass(id="big", display_label="big", group="others"),
            SoundClass(id="small", display_label="small", group="others"),
        ]
        videos = [VideoRecord(video_id=f"b{i}", duration=60, class_id="big") for i in range(100)]
        videos += [VideoRecord(video_id=f"s{i}", duration=60, class_id="small") for i in range(99)]
        report = stage_report(classes, videos, [], stage=1, min_videos=100)
        assert report.classes_remaining == 1
        assert report.videos_remaining == 100
        assert classes[1].status == "dropped"
        assert classes[0].status != "dropped"

    def test_empty_corpus(self):
        report = stage_report([], [], [], stage=3)
        assert (report.classes_remaining, report.videos_remaining, report.clips_remaining) == (0, 0, 0)

    def test_stage_out_of_range(self):
        with pytest.raises(ValueError):
            stage_report([], [], [], stage=5)


class TestCrossValidation:
    def test_clip_within_video_passes(self):
        videos = [VideoRecord(video_id="vid0", duration=60.0, class_id="dog")]
        validate_clips_against_videos([make_clip()], videos)

    def test_unknown_video_rejected(self):
        with pytest.raises(ManifestError, match="unknown video"):
            validate_clips_against_videos([make_clip()], [])

    def test_clip_past_video_end_rejected(self):
        videos = [VideoRecord(video_id="vid0", duration=12.0, class_id="dog")]
        with pytest.raises(ManifestError, match="past video duration"):
            validate_clips_against_videos([make_clip(start=5.0)], videos)

    def test_video_too_short_to_yield_clips(self):
        clip = ClipRecord(clip_id="v:0", video_id="v", class_id="c", start=0.0, end=10.0)
        videos = [VideoRecord(video_id="v", duration=9.0, class_id="c")]
        with pytest.raises(ManifestError, match="only 9.00s"):
            validate_clips_against_videos([clip], videos)


class TestDiffManifests:
    def test_identical_gives_empty_removed(self):
        clips = [make_clip(video=f"v{i}") for i in range(4)]
        kept, removed = diff_manifests(clips, clips)
        assert kept == clips and removed == []

    def test_empty_after_removes_all(self):
        clips = [make_clip(video=f"v{i}") for i in range(4)]
        kept, removed = diff_manifests(clips, [])
        assert kept == [] and removed == clips

    def test_partition(self):
        a, b, c = (make_clip(video=v) for v in "abc")
        kept, removed = diff_manifests([a, b, c], [b])
        assert kept == [b]
        assert removed == [a, c]
        assert {x.clip_id for x in kept} | {x.clip_id for x in removed} == {"a:5000", "b:5000", "c:5000"}
        assert {x.clip_id for x in kept} & {x.clip_id for x in removed} == set()
