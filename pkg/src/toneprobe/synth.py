"""Synthetic corpus generation: tokens, TextGrids, and embedding files
with controllable class separability, speaker structure, and per-layer
signal strength.

Each tone class gets a unit-norm prototype direction; frames inside a
class-c token at layer l are drawn from a Gaussian centered at
class_separation[l] * prototype(c), plus a per-speaker constant offset.
Dialects can remap class prototypes to simulate cross-dialect mismatch.
This is a test fixture with tunable linear separability, not a tone model.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .corpus import ToneToken
from .embstore import EmbeddingFile, frame_range_for_segment, write_embedding_file
from .textgrid import Interval, IntervalTier, TextGrid, serialize_textgrid


class SynthError(Exception):
    pass


@dataclass
class SynthSpec:
    language: str = "synthlang"
    tones: tuple[str, ...] = ("L", "H", "R", "F")
    n_speakers: int = 8
    n_dialects: int = 2
    tokens_per_speaker: int = 24
    dim: int = 16
    n_layers: int = 12
    frame_stride: float = 0.02
    class_separation: tuple[float, ...] = ()
    noise_std: float = 1.0
    speaker_offset_std: float | None = None  # defaults to noise_std
    seed: int = 42
    model_tag: str = "synthetic"
    # per-dialect permutation of class prototype indices; None = identity
    dialect_prototype_maps: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        if not self.class_separation:
            self.class_separation = tuple(1.0 for _ in range(self.n_layers))
        self.class_separation = tuple(float(v) for v in self.class_separation)
        self.tones = tuple(self.tones)
        if len(self.class_separation) != self.n_layers:
            raise SynthError(
                f"class_separation has {len(self.class_separation)} entries "
                f"for {self.n_layers} layers"
            )
        if min(self.n_speakers, self.n_dialects, self.tokens_per_speaker, self.dim, self.n_layers) < 1:
            raise SynthError("all corpus dimensions must be >= 1")
        if not self.noise_std > 0:
            raise SynthError(f"noise_std must be > 0, got {self.noise_std}")
        if any(s < 0 for s in self.class_separation):
            raise SynthError("class_separation entries must be >= 0")
        if self.dialect_prototype_maps is not None:
            maps = tuple(tuple(int(i) for i in m) for m in self.dialect_prototype_maps)
            if len(maps) != self.n_dialects:
                raise SynthError(f"{len(maps)} prototype maps for {self.n_dialects} dialects")
            for m in maps:
                if sorted(m) != list(range(len(self.tones))):
                    raise SynthError(f"{m} is not a permutation of the class indices")
            self.dialect_prototype_maps = maps

    def to_json(self, path: str | Path) -> None:
        doc = {
            "language": self.language,
            "tones": list(self.tones),
            "n_speakers": self.n_speakers,
            "n_dialects": self.n_dialects,
            "tokens_per_speaker": self.tokens_per_speaker,
            "dim": self.dim,
            "n_layers": self.n_layers,
            "frame_stride": self.frame_stride,
            "class_separation": list(self.class_separation),
            "noise_std": self.noise_std,
            "speaker_offset_std": self.speaker_offset_std,
            "seed": self.seed,
            "model_tag": self.model_tag,
            "dialect_prototype_maps": (
                [list(m) for m in self.dialect_prototype_maps]
                if self.dialect_prototype_maps is not None
                else None
            ),
        }
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthSpec":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if "tones" in doc:
            doc["tones"] = tuple(doc["tones"])
        if doc.get("class_separation"):
            doc["class_separation"] = tuple(doc["class_separation"])
        if doc.get("dialect_prototype_maps") is not None:
            doc["dialect_prototype_maps"] = tuple(tuple(m) for m in doc["dialect_prototype_maps"])
        return cls(**doc)


@dataclass
class SynthCorpus:
    manifest_path: Path
    emb_dir: Path
    tokens: list[ToneToken]
    tone_counts: dict[str, int] = field(default_factory=dict)


def dialect_shift_spec(base: SynthSpec) -> SynthSpec:
    """Spec whose last dialect uses cyclically permuted class prototypes,
    so dialect-independent CV scores drop below speaker-independent ones."""
    if base.n_dialects < 2:
        raise SynthError(f"need >= 2 dialects to shift one, got {base.n_dialects}")
    n = len(base.tones)
    identity = tuple(range(n))
    shifted = tuple((i + 1) % n for i in range(n))
    maps = tuple(identity for _ in range(base.n_dialects - 1)) + (shifted,)
    return replace(base, dialect_prototype_maps=maps)


def generate(spec: SynthSpec, out_dir: str | Path) -> SynthCorpus:
    """Write manifest + TextGrids + embedding files; deterministic per seed."""
    out_dir = Path(out_dir)
    grids_dir = out_dir / "grids"
    emb_dir = out_dir / "emb" / spec.model_tag
    grids_dir.mkdir(parents=True, exist_ok=True)
    emb_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(spec.seed)
    n_classes = len(spec.tones)
    protos = rng.standard_normal((n_classes, spec.dim))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    offset_std = spec.noise_std if spec.speaker_offset_std is None else spec.speaker_offset_std
    speaker_offsets = rng.standard_normal((spec.n_speakers, spec.dim)) * offset_std
    separation = np.asarray(spec.class_separation)

    manifest_rows = []
    tokens: list[ToneToken] = []
    tone_counts = {t: 0 for t in spec.tones}
    for s in range(spec.n_speakers):
        speaker = f"spk{s:03d}"
        dialect_index = s % spec.n_dialects
        dialect = f"dialect{dialect_index}"
        utt = f"{speaker}_u000"
        proto_map = (
            spec.dialect_prototype_maps[dialect_index]
            if spec.dialect_prototype_maps is not None
            else tuple(range(n_classes))
        )

        intervals: list[Interval] = []
        cursor = 0.0
        for t in range(spec.tokens_per_speaker):
            gap = float(rng.uniform(0.02, 0.08))
            duration = float(rng.uniform(0.06, 0.4))
            start = cursor + gap
            end = start + duration
            if gap > 0:
                intervals.append(Interval(cursor, start, ""))
            tone = spec.tones[t % n_classes]
            intervals.append(Interval(start, end, tone))
            cursor = end
        num_frames = math.ceil((cursor + 0.05) / spec.frame_stride)
        xmax = num_frames * spec.frame_stride
        intervals.append(Interval(cursor, xmax, ""))

        frames = rng.normal(0.0, spec.noise_std, (spec.n_layers, num_frames, spec.dim))
        for index, interval in enumerate(intervals):
            if interval.label == "":
                continue
            fr = frame_range_for_segment(
                interval.start, interval.end, spec.frame_stride, 0.0, num_frames
            )
            if fr is None:  # durations >= 0.06 s always straddle a center
                raise SynthError(f"token at [{interval.start}, {interval.end}] spans no frame")
            class_index = proto_map[spec.tones.index(interval.label)]
            mean = separation[:, None] * protos[class_index][None, :]
            frames[:, fr.first : fr.last_exclusive, :] += mean[:, None, :]
            tokens.append(
                ToneToken(
                    token_id=f"{utt}#{index}",
                    utterance_id=utt,
                    speaker_id=speaker,
                    dialect=dialect,
                    tone=interval.label,
                    start=interval.start,
                    end=interval.end,
                )
            )
            tone_counts[interval.label] += 1
        frames += speaker_offsets[s][None, None, :]

        grid = TextGrid(0.0, xmax, (IntervalTier("tones", tuple(intervals)),))
        (grids_dir / f"{utt}.TextGrid").write_text(serialize_textgrid(grid), encoding="utf-8")
        emb = EmbeddingFile(utt, spec.frame_stride, 0.0, frames.astype(np.float32))
        write_embedding_file(emb, emb_dir / f"{utt}.tpeb")
        manifest_rows.append(
            [utt, f"audio/{utt}.wav", f"grids/{utt}.TextGrid", speaker, dialect, "isolation"]
        )

    manifest_path = out_dir / "manifest.csv"
    with manifest_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["utterance_id", "audio_path", "textgrid_path", "speaker_id", "dialect", "context"])
        writer.writerows(manifest_rows)
    return SynthCorpus(manifest_path, emb_dir, tokens, tone_counts)
