"""
Carving clips around anchor frames, then gating their audio
===========================================================

Stage 2 consumes per-frame image-classifier confidences: frames scoring above
0.2 on the class signature become anchors, each expanded 5 seconds to either
side (shifted inward at video edges). Stage 3 then rejects clips whose audio
is dominated by narration or background music.
"""
from avcurator.audio_stage import AudioGateScores, RejectionPolicy, verify_clip
from avcurator.corpus import VideoRecord
from avcurator.visual_stage import FrameScore, VisualGateConfig, carve_clips, select_anchor_frames

video = VideoRecord(video_id="yt_abc123", duration=47.0, class_id="dog_barking")
signature = ["dog", "puppy"]

# Frame scores as an image classifier would emit them: confidence per label.
frames = [
    FrameScore("yt_abc123", time=2.0, scores={"dog": 0.85, "cat": 0.1}),
    FrameScore("yt_abc123", time=3.5, scores={"puppy": 0.55}),
    FrameScore("yt_abc123", time=21.0, scores={"dog": 0.62}),
    FrameScore("yt_abc123", time=30.0, scores={"dog": 0.18}),   # below the gate
    FrameScore("yt_abc123", time=45.5, scores={"dog": 0.93}),   # near the end
]

cfg = VisualGateConfig()   # threshold 0.2, 10 frames, ±5 s, max 2 clips/video
anchors = select_anchor_frames(frames, signature, cfg)
print("anchors (time, score):", anchors)

clips = carve_clips(anchors, video, cfg)
for clip in clips:
    print(f"clip {clip.clip_id}: [{clip.start:.1f}, {clip.end:.1f}] "
          f"around frame t={clip.anchor_frame_time}")
# The 45.5 s anchor would spill past the 47 s end, so its window shifts
# inward to [37, 47] keeping the full 10 s width.
assert clips[0].end <= video.duration and clips[0].end - clips[0].start == 10.0

# --- Stage 3: the audio gate -------------------------------------------------
# Speech is always rejected above 0.5; music is rejected unless the class is
# musical. "other" is recorded but never gated.
barking = RejectionPolicy(class_id="dog_barking", reject_speech=True, reject_music=True)
bass = RejectionPolicy(class_id="playing_bass_guitar", reject_speech=True, reject_music=False)

examples = [
    ("narrated dog clip", AudioGateScores("c1", speech=0.8, music=0.1, other=0.2), barking),
    ("music-bed dog clip", AudioGateScores("c2", speech=0.1, music=0.7, other=0.2), barking),
    ("clean dog clip", AudioGateScores("c3", speech=0.2, music=0.2, other=0.9), barking),
    ("bass riff with backing track", AudioGateScores("c4", speech=0.1, music=0.9, other=0.3), bass),
]
for name, scores, policy in examples:
    verdict = verify_clip(scores, policy)
    outcome = "accept" if verdict.accepted else f"reject ({verdict.reason})"
    print(f"{name:32s} -> {outcome}")
