"""Checkpoint registry and model loading.

The four stock checkpoints share the base architecture (12 transformer
layers, hidden size 768, 20 ms frame stride at 16 kHz input). A ModelSpec
with ``checkpoint=None`` builds a randomly initialized model from the
architecture config with a fixed seed, so extraction can be exercised
offline and reproducibly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field


class ExtractorError(Exception):
    pass


@dataclass(frozen=True)
class ModelSpec:
    model_tag: str
    checkpoint: str | None  # hub id, local directory, or None for seeded random init
    expected_dim: int | None = 768
    frame_stride: float = 0.020
    sample_rate: int = 16000
    normalize: bool = True  # zero-mean/unit-variance the waveform per utterance
    init_seed: int = 0
    config_overrides: tuple[tuple[str, object], ...] = field(default=())

    def __post_init__(self):
        if not re.fullmatch(r"[A-Za-z0-9._-]+", self.model_tag):
            raise ExtractorError(f"model_tag {self.model_tag!r} is not filesystem-safe")
        if not self.frame_stride > 0:
            raise ExtractorError(f"frame_stride must be > 0, got {self.frame_stride}")

    def load(self, device: str = "cpu"):
        import torch
        from transformers import Wav2Vec2Config, Wav2Vec2Model

        if self.checkpoint is None:
            config = Wav2Vec2Config(**dict(self.config_overrides))
            torch.manual_seed(self.init_seed)
            model = Wav2Vec2Model(config)
        else:
            try:
                model = Wav2Vec2Model.from_pretrained(self.checkpoint)
            except OSError as err:
                raise ExtractorError(f"checkpoint {self.checkpoint!r} unavailable: {err}") from None
        model = model.to(device).eval()
        if self.expected_dim is not None and model.config.hidden_size != self.expected_dim:
            raise ExtractorError(
                f"{self.model_tag}: checkpoint hidden size {model.config.hidden_size} "
                f"!= expected {self.expected_dim}"
            )
        return model


MODEL_REGISTRY = {
    "wav2vec2-base": ModelSpec("wav2vec2-base", "facebook/wav2vec2-base"),
    "mandarin-wav2vec2": ModelSpec("mandarin-wav2vec2", "kehanlu/mandarin-wav2vec2"),
    "chinese-wav2vec2-base": ModelSpec("chinese-wav2vec2-base", "TencentGameMate/chinese-wav2vec2-base"),
    "wav2vec2-base-vi": ModelSpec("wav2vec2-base-vi", "nguyenvulebinh/wav2vec2-base-vi"),
}


def untrained_base_spec(model_tag: str = "untrained-base", init_seed: int = 0) -> ModelSpec:
    """Base architecture with seeded random weights (offline testing)."""
    return ModelSpec(model_tag, None, expected_dim=768, init_seed=init_seed)


def resolve_model(tag: str, checkpoint: str | None = None, untrained: bool = False) -> ModelSpec:
    if untrained:
        return untrained_base_spec(tag)
    if checkpoint is not None:
        return ModelSpec(tag, checkpoint, expected_dim=None)
    if tag not in MODEL_REGISTRY:
        known = ", ".join(sorted(MODEL_REGISTRY))
        raise ExtractorError(f"unknown model tag {tag!r}; known tags: {known}")
    return MODEL_REGISTRY[tag]
