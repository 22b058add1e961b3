"""Run a speech model over corpus audio and dump all transformer layers
per utterance into toneprobe embedding files.

Writes are atomic (temp file + rename). By default inference is pinned to
one thread and one utterance per forward pass, so repeated extraction is
byte-identical; a failed utterance is logged and skipped, not fatal.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from toneprobe.corpus import CorpusManifest
from toneprobe.embstore import EmbeddingFile, write_embedding_file

from .audio import read_wav_mono, resample_to
from .models import ExtractorError, ModelSpec

logger = logging.getLogger(__name__)


@dataclass
class ExtractionReport:
    model_tag: str
    dim: int
    written: list[str] = field(default_factory=list)
    failed: list[tuple[str, str]] = field(default_factory=list)
    frames: dict[str, int] = field(default_factory=dict)

    def summary(self) -> str:
        return f"{self.model_tag}: {len(self.written)} utterances written, {len(self.failed)} failed"


def _hidden_state_stack(model, waveform, include_layer0: bool) -> np.ndarray:
    import torch

    with torch.no_grad():
        out = model(waveform, output_hidden_states=True)
    states = out.hidden_states  # index 0 = front-end output, 1..N = blocks
    first = 0 if include_layer0 else 1
    return np.stack([states[i][0].cpu().numpy().astype(np.float32) for i in range(first, len(states))])


def extract(
    manifest: CorpusManifest,
    spec: ModelSpec,
    out_dir: str | Path,
    include_layer0: bool = False,
    device: str = "cpu",
    deterministic: bool = True,
) -> ExtractionReport:
    """One .tpeb file per manifest utterance under out_dir/<model_tag>/."""
    import torch

    if deterministic:
        torch.set_num_threads(1)
    model = spec.load(device)
    dim = int(model.config.hidden_size)
    if dim != 768:
        # all stock checkpoints are base-architecture; anything else is worth flagging
        logger.warning("%s: hidden size is %d, not the base architecture's 768", spec.model_tag, dim)
    target_dir = Path(out_dir) / spec.model_tag
    target_dir.mkdir(parents=True, exist_ok=True)

    report = ExtractionReport(spec.model_tag, dim)
    for entry in manifest.entries:
        try:
            rate, audio = read_wav_mono(manifest.resolve(entry.audio_path))
            audio = resample_to(audio, rate, spec.sample_rate)
            if spec.normalize:
                audio = (audio - audio.mean()) / (audio.std() + 1e-7)
            waveform = torch.from_numpy(audio).to(device)[None, :]
            layers = _hidden_state_stack(model, waveform, include_layer0)
            duration = audio.shape[0] / spec.sample_rate
            n_frames = layers.shape[1]
            if abs(n_frames * spec.frame_stride - duration) > 2.5 * spec.frame_stride + 0.025:
                raise ExtractorError(
                    f"{entry.utterance_id}: {n_frames} frames x {spec.frame_stride} s "
                    f"inconsistent with {duration:.3f} s of audio (stride mismatch?)"
                )
            emb = EmbeddingFile(
                entry.utterance_id, spec.frame_stride, 0.0, layers, includes_layer0=include_layer0
            )
            path = target_dir / f"{entry.utterance_id}.tpeb"
            tmp = path.with_name(path.name + ".tmp")
            write_embedding_file(emb, tmp)
            os.replace(tmp, path)
            report.written.append(entry.utterance_id)
            report.frames[entry.utterance_id] = n_frames
        except ExtractorError as err:
            logger.error("utterance %s failed: %s", entry.utterance_id, err)
            report.failed.append((entry.utterance_id, str(err)))
    logger.info("%s", report.summary())
    return report


def write_extraction_log(report: ExtractionReport, path: str | Path) -> None:
    lines = [f"model_tag={report.model_tag}", f"dim={report.dim}"]
    lines += [f"written {uid} frames={report.frames[uid]}" for uid in report.written]
    lines += [f"failed {uid}: {reason}" for uid, reason in report.failed]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
