"""Frame-level feature extraction and the on-disk feature format.

Mel spectrograms are computed natively (Hann window, HTK mel scale);
precomputed embeddings arrive as opaque "FEA1" files written by an external
exporter and are never re-interpreted here.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

FEATURE_MAGIC = b"FEA1"
LOG_FLOOR = 1e-10


class FeatureFileError(Exception):
    """Malformed feature file (bad magic, truncation, bad dimensions)."""


@dataclass
class FrameConfig:
    """Framing parameters for mel extraction.

    target_frames=500 is authoritative; with the 20 ms stride it covers
    roughly the first 6.9 s wherever it truncates.  n_fft pads each frame
    before the FFT so the 128 mel triangles at the low end still span
    multiple bins.
    """

    sample_rate: int = 16000
    window_ms: float = 25.0
    stride_ms: float = 20.0
    n_mels: int = 128
    target_frames: int = 500
    n_fft: int = 2048

    def __post_init__(self):
        if self.stride_ms <= 0 or self.window_ms < self.stride_ms:
            raise ValueError("require window_ms >= stride_ms > 0")
        if self.target_frames <= 0:
            raise ValueError("target_frames must be positive")

    @property
    def win_length(self) -> int:
        return int(self.window_ms * self.sample_rate / 1000)

    @property
    def hop_length(self) -> int:
        return int(self.stride_ms * self.sample_rate / 1000)


def hz_to_mel(f):
    """HTK mel scale."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filters (n_mels x n_fft//2+1) from 0 Hz to Nyquist."""
    n_bins = n_fft // 2 + 1
    mel_edges = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2)
    hz_edges = mel_to_hz(mel_edges)
    bin_freqs = np.arange(n_bins) * sample_rate / n_fft

    fb = np.zeros((n_mels, n_bins))
    for j in range(n_mels):
        left, center, right = hz_edges[j], hz_edges[j + 1], hz_edges[j + 2]
        up = (bin_freqs - left) / (center - left)
        down = (right - bin_freqs) / (right - center)
        fb[j] = np.maximum(0.0, np.minimum(up, down))
    return fb


def frame_signal(waveform: np.ndarray, win: int, hop: int) -> np.ndarray:
    """Slice a 1-d signal into overlapping frames.

    For signals shorter than one window a single zero-padded frame is
    produced; otherwise n_frames = 1 + floor((N - win) / hop).
    """
    waveform = np.asarray(waveform, dtype=float).ravel()
    n = len(waveform)
    if n < win:
        frame = np.zeros(win)
        frame[:n] = waveform
        return frame[None, :]
    n_frames = 1 + (n - win) // hop
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    return waveform[idx]


def mel_spectrogram(waveform, sample_rate: int, cfg: FrameConfig | None = None) -> np.ndarray:
    """Log mel spectrogram, frames x n_mels.

    Frames are Hann-windowed, zero-padded to cfg.n_fft, and the magnitude
    spectrum is pooled by the triangular filterbank before log(x + 1e-10).
    """
    waveform = np.asarray(waveform, dtype=float).ravel()
    if sample_rate <= 0:
        raise ValueError("sample rate must be positive")
    if waveform.size == 0:
        raise ValueError("empty waveform")
    if cfg is None:
        cfg = FrameConfig(sample_rate=sample_rate)
    elif cfg.sample_rate != sample_rate:
        raise ValueError(
            f"config sample rate {cfg.sample_rate} != waveform sample rate {sample_rate}"
        )

    frames = frame_signal(waveform, cfg.win_length, cfg.hop_length)
    window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(cfg.win_length) / cfg.win_length)
    spectrum = np.abs(np.fft.rfft(frames * window, n=cfg.n_fft, axis=1))
    fb = mel_filterbank(cfg.n_mels, cfg.n_fft, sample_rate)
    return np.log(spectrum @ fb.T + LOG_FLOOR)


def pad_truncate(fm: np.ndarray, target: int = 500) -> np.ndarray:
    """Fix the frame count: keep the first ``target`` frames or zero-pad."""
    fm = np.asarray(fm)
    n_frames, n_dims = fm.shape
    if n_frames >= target:
        return fm[:target].copy()
    out = np.zeros((target, n_dims), dtype=fm.dtype)
    out[:n_frames] = fm
    return out


def summarize_mean_var(fm: np.ndarray) -> np.ndarray:
    """Concatenate per-dimension mean and population variance over frames."""
    fm = np.asarray(fm, dtype=float)
    if fm.ndim != 2 or fm.shape[0] < 1:
        raise ValueError("need a frames x dims matrix with at least one frame")
    return np.concatenate([fm.mean(axis=0), fm.var(axis=0)])


def write_feature_file(fm: np.ndarray, path) -> None:
    """Write a frames x dims matrix in the binary "FEA1" format.

    Layout (little-endian): magic "FEA1", u32 n_frames, u32 n_dims, 4
    reserved zero bytes, then float32 values frame-major.
    """
    fm = np.asarray(fm, dtype=np.float32)
    if fm.ndim != 2:
        raise ValueError("feature matrix must be 2-d")
    n_frames, n_dims = fm.shape
    if n_frames >= 2**32 or n_dims >= 2**32:
        raise FeatureFileError("dimension overflow: exceeds u32 range")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", n_frames, n_dims))
        fh.write(b"\x00\x00\x00\x00")
        fh.write(fm.astype("<f4", copy=False).tobytes())


def read_feature_file(path) -> np.ndarray:
    """Read a "FEA1" file back into a float32 frames x dims matrix."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != FEATURE_MAGIC:
        raise FeatureFileError(f"bad magic in {path}: {blob[:4]!r}")
    if len(blob) < 16:
        raise FeatureFileError(f"truncated header in {path}")
    n_frames, n_dims = struct.unpack("<II", blob[4:12])
    expected = 16 + 4 * n_frames * n_dims
    if len(blob) != expected:
        raise FeatureFileError(
            f"truncated file {path}: {len(blob)} bytes, expected {expected}"
        )
    data = np.frombuffer(blob[16:], dtype="<f4")
    return data.reshape(n_frames, n_dims).copy()
