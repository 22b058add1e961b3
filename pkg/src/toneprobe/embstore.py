"""Per-utterance layer-embedding files (.tpeb), frame/segment alignment,
and mean pooling into per-token per-layer feature vectors.

File layout (little-endian): magic ``TPEB``, u16 version = 1, u16 flags,
u32 num_layers, u32 dim, u32 num_frames, f64 frame_stride, f64
frame_offset, u16 utterance-id length + UTF-8 bytes, then num_layers
contiguous blocks of num_frames x dim float32, row-major. Flag bit 0 marks
that the first stored block is the front-end output ("layer 0"); otherwise
block i holds transformer layer i+1.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import ToneToken

logger = logging.getLogger(__name__)

MAGIC = b"TPEB"
VERSION = 1
FLAG_HAS_LAYER0 = 0x1
_HEADER = struct.Struct("<4sHHIIIddH")

FEATURE_MAGIC = b"TPFT"
_FEATURE_HEADER = struct.Struct("<4sHHII")


class EmbeddingFormatError(Exception):
    pass


@dataclass
class EmbeddingFile:
    utterance_id: str
    frame_stride: float
    frame_offset: float
    layers: np.ndarray  # (num_layers, num_frames, dim) float32
    includes_layer0: bool = False

    def __post_init__(self):
        self.layers = np.asarray(self.layers, dtype=np.float32)
        if self.layers.ndim != 3:
            raise EmbeddingFormatError(f"layer data must be 3-d, got shape {self.layers.shape}")
        if self.num_layers < 1 or self.dim < 1:
            raise EmbeddingFormatError(f"need >= 1 layer and dim >= 1, got shape {self.layers.shape}")
        if not self.frame_stride > 0:
            raise EmbeddingFormatError(f"frame_stride must be > 0, got {self.frame_stride}")

    @property
    def num_layers(self) -> int:
        return self.layers.shape[0]

    @property
    def num_frames(self) -> int:
        return self.layers.shape[1]

    @property
    def dim(self) -> int:
        return self.layers.shape[2]

    @property
    def first_layer(self) -> int:
        return 0 if self.includes_layer0 else 1

    def layer_numbers(self) -> range:
        return range(self.first_layer, self.first_layer + self.num_layers)

    def layer_matrix(self, layer: int) -> np.ndarray:
        """Frames x dim matrix for a semantic layer number."""
        if layer not in self.layer_numbers():
            raise ValueError(
                f"layer {layer} out of range {self.layer_numbers()} for utterance "
                f"{self.utterance_id!r}"
            )
        return self.layers[layer - self.first_layer]

    @classmethod
    def from_layer_list(
        cls,
        utterance_id: str,
        matrices: list[np.ndarray],
        frame_stride: float,
        frame_offset: float = 0.0,
        includes_layer0: bool = False,
    ) -> "EmbeddingFile":
        mats = [np.asarray(m, dtype=np.float32) for m in matrices]
        shapes = {m.shape for m in mats}
        if len(shapes) != 1:
            raise EmbeddingFormatError(f"layer shape mismatch: {sorted(shapes)}")
        return cls(utterance_id, frame_stride, frame_offset, np.stack(mats), includes_layer0)


def write_embedding_file(emb: EmbeddingFile, path: str | Path) -> None:
    uid = emb.utterance_id.encode("utf-8")
    if len(uid) > 0xFFFF:
        raise EmbeddingFormatError("utterance id too long")
    flags = FLAG_HAS_LAYER0 if emb.includes_layer0 else 0
    header = _HEADER.pack(
        MAGIC, VERSION, flags, emb.num_layers, emb.dim, emb.num_frames,
        emb.frame_stride, emb.frame_offset, len(uid),
    )
    payload = np.ascontiguousarray(emb.layers, dtype=np.float32).tobytes()
    Path(path).write_bytes(header + uid + payload)


def read_embedding_file(path: str | Path) -> EmbeddingFile:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise EmbeddingFormatError(f"{path}: truncated header")
    magic, version, flags, n_layers, dim, n_frames, stride, offset, uid_len = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise EmbeddingFormatError(f"{path}: unsupported version {version}")
    pos = _HEADER.size
    if len(data) < pos + uid_len:
        raise EmbeddingFormatError(f"{path}: truncated utterance id")
    uid = data[pos : pos + uid_len].decode("utf-8")
    pos += uid_len
    expected = n_layers * n_frames * dim * 4
    if len(data) - pos != expected:
        raise EmbeddingFormatError(
            f"{path}: payload is {len(data) - pos} bytes, header declares {expected}"
        )
    if n_layers < 1 or dim < 1:
        raise EmbeddingFormatError(f"{path}: implausible header ({n_layers} layers, dim {dim})")
    if not stride > 0:
        raise EmbeddingFormatError(f"{path}: frame_stride must be > 0, got {stride}")
    arr = np.frombuffer(data, dtype="<f4", count=n_layers * n_frames * dim, offset=pos)
    layers = arr.reshape(n_layers, n_frames, dim).copy()
    return EmbeddingFile(uid, stride, offset, layers, bool(flags & FLAG_HAS_LAYER0))


@dataclass(frozen=True)
class FrameRange:
    first: int
    last_exclusive: int

    @property
    def count(self) -> int:
        return self.last_exclusive - self.first


def frame_range_for_segment(
    start: float, end: float, stride: float, offset: float, num_frames: int
) -> FrameRange | None:
    """Frames whose center ``offset + i*stride + stride/2`` lies in
    [start, end), clipped to [0, num_frames); None when no frame qualifies.

    Adjacent segments sharing a boundary evaluate the same expression for
    the shared edge, so a center sitting exactly on it lands in exactly one
    of them.
    """
    if not stride > 0:
        raise ValueError(f"stride must be > 0, got {stride}")
    if not start < end:
        raise ValueError(f"need start < end, got [{start}, {end})")
    half = 0.5 * stride
    first = max(math.ceil((start - offset - half) / stride), 0)
    last = min(math.ceil((end - offset - half) / stride), num_frames)
    if first >= last:
        return None
    return FrameRange(first, last)


@dataclass
class PooledFeature:
    token_id: str
    layer: int
    vector: np.ndarray  # float64
    tone: str
    speaker_id: str
    dialect: str


def pool_token(emb: EmbeddingFile, token: ToneToken, layer: int) -> PooledFeature | None:
    """Mean of the token's frame rows at one layer; None when the token
    spans no frame center (dropped)."""
    if token.utterance_id != emb.utterance_id:
        raise ValueError(
            f"token {token.token_id!r} is from utterance {token.utterance_id!r}, "
            f"file holds {emb.utterance_id!r}"
        )
    matrix = emb.layer_matrix(layer)
    fr = frame_range_for_segment(token.start, token.end, emb.frame_stride, emb.frame_offset, emb.num_frames)
    if fr is None:
        return None
    vector = matrix[fr.first : fr.last_exclusive].mean(axis=0, dtype=np.float64)
    if not np.all(np.isfinite(vector)):
        raise ValueError(f"token {token.token_id!r} layer {layer}: non-finite pooled vector")
    return PooledFeature(token.token_id, layer, vector, token.tone, token.speaker_id, token.dialect)


@dataclass(frozen=True)
class DropRecord:
    token_id: str
    utterance_id: str
    reason: str


@dataclass
class FeatureTable:
    """Columnar pooled-feature table: one row per (token, layer)."""

    model_tag: str
    language: str
    token_ids: list[str]
    layers: np.ndarray  # (n,) int32
    tones: list[str]
    speakers: list[str]
    dialects: list[str]
    X: np.ndarray  # (n, dim) float32

    def __len__(self) -> int:
        return len(self.token_ids)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def available_layers(self) -> list[int]:
        return sorted(set(int(v) for v in self.layers))

    def rows_for_layer(self, layer: int) -> np.ndarray:
        return np.nonzero(self.layers == layer)[0]

    def save(self, path: str | Path) -> None:
        parts = [
            _FEATURE_HEADER.pack(FEATURE_MAGIC, VERSION, 0, len(self.token_ids), self.dim),
            _pack_str(self.model_tag),
            _pack_str(self.language),
        ]
        X32 = np.ascontiguousarray(self.X, dtype=np.float32)
        for i in range(len(self.token_ids)):
            parts.append(_pack_str(self.token_ids[i]))
            parts.append(struct.pack("<H", int(self.layers[i])))
            parts.append(_pack_str(self.tones[i]))
            parts.append(_pack_str(self.speakers[i]))
            parts.append(_pack_str(self.dialects[i]))
            parts.append(X32[i].tobytes())
        Path(path).write_bytes(b"".join(parts))

    @classmethod
    def load(cls, path: str | Path) -> "FeatureTable":
        data = Path(path).read_bytes()
        if len(data) < _FEATURE_HEADER.size:
            raise EmbeddingFormatError(f"{path}: truncated feature table header")
        magic, version, _flags, n_rows, dim = _FEATURE_HEADER.unpack_from(data)
        if magic != FEATURE_MAGIC:
            raise EmbeddingFormatError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise EmbeddingFormatError(f"{path}: unsupported version {version}")
        pos = _FEATURE_HEADER.size
        try:
            model_tag, pos = _unpack_str(data, pos)
            language, pos = _unpack_str(data, pos)
            token_ids, tones, speakers, dialects = [], [], [], []
            layers = np.empty(n_rows, dtype=np.int32)
            X = np.empty((n_rows, dim), dtype=np.float32)
            for i in range(n_rows):
                tid, pos = _unpack_str(data, pos)
                (layer,) = struct.unpack_from("<H", data, pos)
                pos += 2
                tone, pos = _unpack_str(data, pos)
                speaker, pos = _unpack_str(data, pos)
                dialect, pos = _unpack_str(data, pos)
                row = np.frombuffer(data, dtype="<f4", count=dim, offset=pos)
                pos += dim * 4
                token_ids.append(tid)
                layers[i] = layer
                tones.append(tone)
                speakers.append(speaker)
                dialects.append(dialect)
                X[i] = row
        except struct.error as err:
            raise EmbeddingFormatError(f"{path}: truncated feature table ({err})") from None
        if pos != len(data):
            raise EmbeddingFormatError(f"{path}: {len(data) - pos} trailing bytes")
        return cls(model_tag, language, token_ids, layers, tones, speakers, dialects, X)


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    if len(b) > 0xFFFF:
        raise EmbeddingFormatError(f"string too long: {s[:40]!r}...")
    return struct.pack("<H", len(b)) + b


def _unpack_str(data: bytes, pos: int) -> tuple[str, int]:
    (n,) = struct.unpack_from("<H", data, pos)
    pos += 2
    if pos + n > len(data):
        raise EmbeddingFormatError("truncated string field")
    return data[pos : pos + n].decode("utf-8"), pos + n


def pool_corpus(
    tokens: list[ToneToken],
    emb_dir: str | Path,
    layers: list[int],
    language: str = "",
) -> tuple[FeatureTable, list[DropRecord]]:
    """Pool every (token, layer) pair from per-utterance embedding files.

    The table holds (|tokens| - drops) x |layers| rows ordered by
    (token_id, layer); tokens spanning no frame center are dropped with a
    record. A missing embedding file is fatal.
    """
    emb_dir = Path(emb_dir)
    layers = sorted(set(int(v) for v in layers))
    if not layers:
        raise ValueError("no layers requested")
    by_utt: dict[str, list[ToneToken]] = {}
    for tok in tokens:
        by_utt.setdefault(tok.utterance_id, []).append(tok)

    rows: list[PooledFeature] = []
    drops: list[DropRecord] = []
    dim: int | None = None
    for utt in sorted(by_utt):
        path = emb_dir / f"{utt}.tpeb"
        if not path.exists():
            raise EmbeddingFormatError(f"no embedding file for utterance {utt!r}: {path}")
        emb = read_embedding_file(path)
        missing = [l for l in layers if l not in emb.layer_numbers()]
        if missing:
            raise EmbeddingFormatError(
                f"utterance {utt!r}: layers {missing} not stored (file has {emb.layer_numbers()})"
            )
        if dim is None:
            dim = emb.dim
        elif emb.dim != dim:
            raise EmbeddingFormatError(f"utterance {utt!r}: dim {emb.dim} != {dim} of earlier files")
        for tok in by_utt[utt]:
            fr = frame_range_for_segment(tok.start, tok.end, emb.frame_stride, emb.frame_offset, emb.num_frames)
            if fr is None:
                drops.append(DropRecord(tok.token_id, utt, "no frame center inside token span"))
                continue
            for layer in layers:
                feat = pool_token(emb, tok, layer)
                assert feat is not None  # same frame range as checked above
                rows.append(feat)

    rows.sort(key=lambda r: (r.token_id, r.layer))
    drops.sort(key=lambda d: d.token_id)
    n = len(rows)
    table = FeatureTable(
        model_tag=emb_dir.name,
        language=language,
        token_ids=[r.token_id for r in rows],
        layers=np.array([r.layer for r in rows], dtype=np.int32),
        tones=[r.tone for r in rows],
        speakers=[r.speaker_id for r in rows],
        dialects=[r.dialect for r in rows],
        X=np.array([r.vector for r in rows], dtype=np.float32).reshape(n, dim if dim else 0),
    )
    if drops:
        logger.info("pooling dropped %d of %d tokens", len(drops), len(tokens))
    return table, drops


def write_drop_report(drops: list[DropRecord], path: str | Path) -> None:
    lines = ["token_id,utterance_id,reason"]
    lines += [f"{d.token_id},{d.utterance_id},{d.reason}" for d in drops]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
