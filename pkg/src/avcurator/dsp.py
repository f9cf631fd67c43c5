"""Spectrogram extraction for classifier training and evaluation.

Audio is 16 kHz mono; the short-time Fourier transform uses a 512-point FFT
over 400-sample Hann windows hopping 160 samples, giving 257 frequency bins
at roughly 100 frames per second. Training crops sample a random window from
each clip, evaluation feeds the whole clip. The exact time-frame count is
pinned by center-cropping or zero-padding to a target when one is requested.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

DEFAULT_SAMPLE_RATE = 16000
DEFAULT_FFT_SIZE = 512
DEFAULT_WINDOW = 400
DEFAULT_HOP = 160


@dataclass
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("audio must be mono (1-D sample array)")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("audio contains NaN/Inf samples")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be > 0")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class Spectrogram:
    values: np.ndarray        # (frequency_bins, time_frames), log-compressed
    bin_hz: float
    frame_hop: float          # seconds between frames

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("spectrogram must be 2-D")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("spectrogram contains NaN/Inf")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def crop_audio(
    buffer: AudioBuffer,
    length: float,
    mode: str = "random",
    seed: int | None = None,
) -> AudioBuffer:
    """Return a window of exactly `length` seconds (random mode) or the
    buffer unchanged (full mode). Random offsets are seeded and uniform."""
    if mode == "full":
        return buffer
    if mode != "random":
        raise ValueError(f"mode must be 'random' or 'full', got {mode!r}")
    n_keep = int(round(length * buffer.sample_rate))
    if n_keep > len(buffer.samples):
        raise ValueError(
            f"buffer is {buffer.duration:.2f}s, cannot crop {length:.2f}s"
        )
    rng = np.random.default_rng(seed)
    offset = int(rng.integers(0, len(buffer.samples) - n_keep + 1))
    return AudioBuffer(buffer.samples[offset:offset + n_keep], buffer.sample_rate)


def frame_count(n_samples: int, window: int = DEFAULT_WINDOW, hop: int = DEFAULT_HOP) -> int:
    """Number of full analysis frames for an n-sample signal (no padding)."""
    if n_samples < window:
        return 0
    return (n_samples - window) // hop + 1


def stft_spectrogram(
    buffer: AudioBuffer,
    fft_size: int = DEFAULT_FFT_SIZE,
    window: int = DEFAULT_WINDOW,
    hop: int = DEFAULT_HOP,
    target_frames: int | None = None,
) -> Spectrogram:
    """Magnitude STFT with log(1 + m) compression.

    The frequency axis has fft_size/2 + 1 bins. With target_frames set, the
    time axis is center-cropped or zero-padded to exactly that many frames
    (log(1 + 0) = 0, so padding is silence).
    """
    samples = buffer.samples
    if len(samples) == 0:
        raise ValueError("empty audio buffer")
    if window > fft_size:
        raise ValueError("window must not exceed fft_size")
    n_frames = frame_count(len(samples), window, hop)
    if n_frames == 0:
        raise ValueError(f"buffer shorter than one window ({window} samples)")

    idx = np.arange(window)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = samples[idx] * np.hanning(window)[None, :]
    magnitude = np.abs(np.fft.rfft(frames, n=fft_size, axis=1))  # (frames, bins)
    values = np.log1p(magnitude).T                               # (bins, frames)

    if target_frames is not None:
        values = _fit_frames(values, target_frames)
    return Spectrogram(
        values=values,
        bin_hz=buffer.sample_rate / fft_size,
        frame_hop=hop / buffer.sample_rate,
    )


def _fit_frames(values: np.ndarray, target: int) -> np.ndarray:
    """Center-crop or zero-pad the time axis to exactly `target` frames."""
    if target < 1:
        raise ValueError("target_frames must be >= 1")
    n = values.shape[1]
    if n == target:
        return values
    if n > target:
        lo = (n - target) // 2
        return values[:, lo:lo + target]
    pad_left = (target - n) // 2
    pad_right = target - n - pad_left
    return np.pad(values, ((0, 0), (pad_left, pad_right)))


def read_wav(path: str | Path, expect_rate: int | None = None) -> AudioBuffer:
    """Read a mono WAV file (PCM 16-bit or 32-bit float) into [-1, 1] floats."""
    rate, data = wavfile.read(Path(path))
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got {data.ndim} channels")
    if expect_rate is not None and rate != expect_rate:
        raise ValueError(f"{path}: sample rate {rate}, expected {expect_rate}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    return AudioBuffer(samples, rate)


def write_wav(buffer: AudioBuffer, path: str | Path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(Path(path), buffer.sample_rate, buffer.samples.astype(np.float32))


def save_spectrogram(spec: Spectrogram, path: str | Path):
    """Binary matrix file: 8-byte header (rows, cols as uint32 LE) then
    row-major float32 values."""
    rows, cols = spec.values.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", rows, cols))
        fh.write(spec.values.astype("<f4").tobytes(order="C"))


def load_spectrogram(
    path: str | Path,
    bin_hz: float = DEFAULT_SAMPLE_RATE / DEFAULT_FFT_SIZE,
    frame_hop: float = DEFAULT_HOP / DEFAULT_SAMPLE_RATE,
) -> Spectrogram:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated spectrogram file")
    rows, cols = struct.unpack("<II", raw[:8])
    expected = 8 + rows * cols * 4
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    values = np.frombuffer(raw[8:], dtype="<f4").reshape(rows, cols).astype(np.float64)
    return Spectrogram(values=values, bin_hz=bin_hz, frame_hop=frame_hop)
