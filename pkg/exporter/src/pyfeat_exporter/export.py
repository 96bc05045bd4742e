"""Batch export of audio files to FEA1 feature files plus a manifest fragment.

The embedding backend is pluggable: the default loads a pretrained
wav2vec2-base or WavLM-Base+ model through ``transformers`` (inference
only, no fine-tuning).  A failed model load aborts the job; an
undecodable audio file is skipped with a warning.
"""

from __future__ import annotations

import json
import logging
import os
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fea import write_fea

log = logging.getLogger("pyfeat_exporter")

MODEL_IDS = {
    "wav2vec2-base": "facebook/wav2vec2-base",
    "wavlm-base-plus": "microsoft/wavlm-base-plus",
}


class ModelLoadError(Exception):
    """The pretrained model could not be loaded."""


@dataclass
class ExportJob:
    audio_paths: list
    model: str  # wav2vec2-base | wavlm-base-plus
    layer: int  # transformer layer to pool embeddings from
    out_dir: str

    def __post_init__(self):
        if self.model not in MODEL_IDS:
            raise ValueError(f"unknown model {self.model!r}, "
                             f"expected one of {sorted(MODEL_IDS)}")
        if not self.audio_paths:
            raise ValueError("no audio files given")


class HuggingFaceBackend:
    """Frame embeddings from a pretrained transformers model."""

    sample_rate = 16000

    def __init__(self, model: str, layer: int):
        try:
            import torch
            from transformers import AutoModel
        except ImportError as e:
            raise ModelLoadError(f"transformers/torch unavailable: {e}") from e
        try:
            self._model = AutoModel.from_pretrained(MODEL_IDS[model])
        except Exception as e:  # noqa: BLE001 - any load failure aborts
            raise ModelLoadError(f"cannot load {MODEL_IDS[model]}: {e}") from e
        self._model.eval()
        self._torch = torch
        self.layer = layer

    def embed(self, waveform: np.ndarray) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            x = torch.as_tensor(waveform, dtype=torch.float32)[None, :]
            out = self._model(x, output_hidden_states=True)
        states = out.hidden_states
        if not -len(states) <= self.layer < len(states):
            raise ValueError(f"layer {self.layer} out of range "
                             f"(model has {len(states)} hidden states)")
        return states[self.layer][0].numpy()


def read_wav(path) -> tuple[np.ndarray, int]:
    """Mono float waveform in [-1, 1] plus its sample rate."""
    with wave.open(str(path), "rb") as fh:
        rate = fh.getframerate()
        n_channels = fh.getnchannels()
        width = fh.getsampwidth()
        raw = fh.readframes(fh.getnframes())
    if width != 2:
        raise ValueError(f"{path}: only 16-bit PCM supported, got {8 * width}-bit")
    data = np.frombuffer(raw, dtype="<i2").astype(float) / 32768.0
    if n_channels > 1:
        data = data.reshape(-1, n_channels).mean(axis=1)
    return data, rate


def resample(waveform: np.ndarray, rate: int, target_rate: int) -> np.ndarray:
    if rate == target_rate:
        return waveform
    n_out = int(round(len(waveform) * target_rate / rate))
    src = np.arange(len(waveform)) / rate
    dst = np.arange(n_out) / target_rate
    return np.interp(dst, src, waveform)


def export(job: ExportJob, backend=None) -> list:
    """Run the job; returns manifest-fragment records, one per exported file.

    Also writes ``manifest_fragment.jsonl`` (JSON lines matching the corpus
    manifest's record schema) next to the feature files.  Feature files are
    written atomically: a temporary file renamed into place.
    """
    if backend is None:
        backend = HuggingFaceBackend(job.model, job.layer)
    out_dir = Path(job.out_dir)
    feat_dir = out_dir / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)

    records = []
    for audio in job.audio_paths:
        audio = Path(audio)
        try:
            waveform, rate = read_wav(audio)
        except (OSError, ValueError, wave.Error) as e:
            log.warning("skipping %s: %s", audio, e)
            continue
        waveform = resample(waveform, rate, backend.sample_rate)
        frames = backend.embed(waveform)
        rel = f"features/{audio.stem}.fea"
        final = out_dir / rel
        tmp = final.with_suffix(".fea.tmp")
        write_fea(frames, tmp)
        os.replace(tmp, final)
        records.append({
            "id": audio.stem,
            "feature_path": rel,
            "n_frames": int(frames.shape[0]),
            "n_dims": int(frames.shape[1]),
        })

    fragment = out_dir / "manifest_fragment.jsonl"
    fragment.write_text(
        "".join(json.dumps(r) + "\n" for r in records), encoding="utf-8"
    )
    return records
