"""
From waveform to the 257 x 500 spectrogram
==========================================

Clips are 10 s of 16 kHz mono audio. Training samples a random 5 s window and
applies a short-time Fourier transform (512-point FFT, 400-sample Hann window,
160-sample hop) giving 257 frequency bins at ~100 frames/s; the time axis is
pinned to exactly 500 frames. Evaluation feeds the full 10 s (1000 frames).
"""
from pathlib import Path

import numpy as np

from avcurator.baseline_classifier import pool_spectrogram
from avcurator.dsp import AudioBuffer, crop_audio, save_spectrogram, stft_spectrogram

SR = 16000
OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

# A synthetic 10 s "clip": a 440 Hz tone, a rising chirp, and noise bursts.
t = np.arange(10 * SR) / SR
tone = 0.3 * np.sin(2 * np.pi * 440 * t)
chirp = 0.2 * np.sin(2 * np.pi * (200 + 300 * t) * t)
rng = np.random.default_rng(3)
bursts = 0.15 * rng.standard_normal(len(t)) * (np.sin(2 * np.pi * 0.5 * t) > 0.8)
clip = AudioBuffer(tone + chirp + bursts, SR)

# Training path: random 5 s crop -> 257 x 500.
crop = crop_audio(clip, 5.0, mode="random", seed=7)
train_spec = stft_spectrogram(crop, target_frames=500)
print(f"training crop: {crop.duration:.1f}s -> spectrogram {train_spec.shape}")

# Evaluation path: the whole clip -> 257 x 1000.
eval_spec = stft_spectrogram(clip, target_frames=1000)
print(f"full clip:     {clip.duration:.1f}s -> spectrogram {eval_spec.shape}")

# The 440 Hz tone concentrates in bin round(440 / 31.25) = 14.
energy = (np.expm1(eval_spec.values) ** 2).sum(axis=1)
print(f"strongest bin: {int(np.argmax(energy))} "
      f"(expected {round(440 / (SR / 512))} for the 440 Hz tone)")

# Spectrograms serialize to a compact binary format (uint32 LE header + f32).
save_spectrogram(train_spec, OUT / "train_spec.bin")
print(f"wrote {OUT / 'train_spec.bin'} "
      f"({(OUT / 'train_spec.bin').stat().st_size} bytes)")

# The baseline classifier consumes a 514-d mean+std pooling of the matrix.
features = pool_spectrogram(train_spec.values)
print(f"pooled feature vector: {features.shape[0]} dims")

# Optional visualization when matplotlib is around.
try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 4))
    ax.imshow(eval_spec.values, aspect="auto", origin="lower", cmap="magma",
              extent=[0, 10, 0, SR / 2 / 1000])
    ax.set_xlabel("time (s)")
    ax.set_ylabel("frequency (kHz)")
    ax.set_title("log(1 + |STFT|), 257 x 1000")
    fig.tight_layout()
    fig.savefig(OUT / "spectrogram.png", dpi=120)
    print(f"wrote {OUT / 'spectrogram.png'}")
except ImportError:
    print("matplotlib not installed; skipping the PNG")
