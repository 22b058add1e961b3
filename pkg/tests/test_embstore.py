import numpy as np
import pytest

from toneprobe.corpus import ToneToken
from toneprobe.embstore import (
    EmbeddingFile,
    EmbeddingFormatError,
    FeatureTable,
    FrameRange,
    frame_range_for_segment,
    pool_corpus,
    pool_token,
    read_embedding_file,
    write_embedding_file,
)


def make_file(uid="u1", n_layers=2, n_frames=3, dim=4, stride=0.02, fill=None, rng=None, layer0=False):
    if rng is not None:
        data = rng.standard_normal((n_layers, n_frames, dim)).astype(np.float32)
    else:
        data = np.full((n_layers, n_frames, dim), 0.0 if fill is None else fill, dtype=np.float32)
    return EmbeddingFile(uid, stride, 0.0, data, includes_layer0=layer0)


def token(uid="u1", start=0.0, end=0.06, tid="u1#0", tone="H"):
    return ToneToken(tid, uid, "s1", "d1", tone, start, end)


def test_write_read_roundtrip_zeros(tmp_path):
    emb = make_file()
    path = tmp_path / "u1.tpeb"
    write_embedding_file(emb, path)
    back = read_embedding_file(path)
    assert back.utterance_id == "u1"
    assert back.frame_stride == 0.02 and back.frame_offset == 0.0
    assert np.array_equal(back.layers, emb.layers)
    # writing the read value reproduces the bytes
    path2 = tmp_path / "again.tpeb"
    write_embedding_file(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_truncated_payload_error(tmp_path):
    emb = make_file(n_layers=3)
    path = tmp_path / "u1.tpeb"
    write_embedding_file(emb, path)
    data = path.read_bytes()
    block = 3 * 4 * 4  # one layer of 3 frames x dim 4 float32
    path.write_bytes(data[:-block])
    with pytest.raises(EmbeddingFormatError, match="payload"):
        read_embedding_file(path)


def test_bad_magic_and_version(tmp_path):
    emb = make_file()
    path = tmp_path / "u1.tpeb"
    write_embedding_file(emb, path)
    data = bytearray(path.read_bytes())
    data[:4] = b"NOPE"
    path.write_bytes(bytes(data))
    with pytest.raises(EmbeddingFormatError, match="magic"):
        read_embedding_file(path)
    data[:4] = b"TPEB"
    data[4] = 9
    path.write_bytes(bytes(data))
    with pytest.raises(EmbeddingFormatError, match="version"):
        read_embedding_file(path)


def test_roundtrip_random_large(tmp_path):
    rng = np.random.default_rng(123)
    emb = make_file(n_layers=13, n_frames=100, dim=768, rng=rng, layer0=True)
    path = tmp_path / "big.tpeb"
    write_embedding_file(emb, path)
    back = read_embedding_file(path)
    assert back.includes_layer0
    assert list(back.layer_numbers()) == list(range(0, 13))
    assert np.array_equal(back.layers, emb.layers)


def test_layer_shape_mismatch():
    with pytest.raises(EmbeddingFormatError, match="mismatch"):
        EmbeddingFile.from_layer_list("u", [np.zeros((3, 4)), np.zeros((2, 4))], 0.02)


def test_frame_range_hand_case():
    # centers at 0.01, 0.03, ...; [0.10, 0.16) holds centers 0.11, 0.13, 0.15
    assert frame_range_for_segment(0.10, 0.16, 0.02, 0.0, 100) == FrameRange(5, 8)


def test_frame_range_between_centers_empty():
    assert frame_range_for_segment(0.011, 0.019, 0.02, 0.0, 100) is None


def test_frame_range_whole_utterance():
    assert frame_range_for_segment(0.0, 50 * 0.02, 0.02, 0.0, 50) == FrameRange(0, 50)


def test_frame_range_boundary_center_belongs_to_one_token():
    # adjacent tokens evaluate the same expression for the shared edge, so
    # a center on the boundary lands in exactly one of them
    stride, offset, n = 0.02, 0.0, 100
    boundary = offset + 7 * stride + stride / 2  # center of frame 7
    left = frame_range_for_segment(0.05, boundary, stride, offset, n)
    right = frame_range_for_segment(boundary, 0.25, stride, offset, n)
    assert left.last_exclusive == right.first
    # with exact binary floats the half-open rule sends it right
    left = frame_range_for_segment(0.125, 0.875, 0.25, 0.0, 10)  # centers 0.125+0.25k
    right = frame_range_for_segment(0.875, 2.0, 0.25, 0.0, 10)
    assert left.last_exclusive == right.first == 3


def test_frame_range_min_duration_two_frames():
    rng = np.random.default_rng(5)
    for _ in range(500):
        start = float(rng.uniform(0.1, 5.0))
        dur = float(rng.uniform(0.05, 0.3))
        fr = frame_range_for_segment(start, start + dur, 0.02, 0.0, 10_000)
        assert fr is not None and fr.count >= 2


def test_pool_token_mean_of_two_rows():
    data = np.stack([np.array([[1, 1, 1, 1], [3, 3, 3, 3]], dtype=np.float32)])
    emb = EmbeddingFile("u1", 0.02, 0.0, data)
    feat = pool_token(emb, token(end=0.04), 1)
    assert np.array_equal(feat.vector, np.array([2.0, 2.0, 2.0, 2.0]))


def test_pool_token_single_frame_verbatim():
    rng = np.random.default_rng(3)
    emb = make_file(n_frames=5, rng=rng)
    feat = pool_token(emb, token(start=0.0, end=0.02, tid="u1#0"), 1)
    assert np.allclose(feat.vector, emb.layers[0][0], atol=0)


def test_pool_token_brute_force_oracle():
    rng = np.random.default_rng(17)
    emb = make_file(n_frames=5, rng=rng)
    # token covering frame centers 1..3 (0.03, 0.05, 0.07)
    feat = pool_token(emb, token(start=0.025, end=0.075, tid="u1#0"), 2)
    rows = emb.layers[1][1:4].astype(np.float64)
    brute = (rows[0] + rows[1] + rows[2]) / 3.0
    assert np.max(np.abs(feat.vector - brute)) < 1e-6


def test_pool_token_empty_range_dropped():
    emb = make_file(n_frames=5)
    assert pool_token(emb, token(start=0.011, end=0.019), 1) is None


def test_pool_token_errors():
    emb = make_file()
    with pytest.raises(ValueError, match="layer"):
        pool_token(emb, token(), 3)
    with pytest.raises(ValueError, match="utterance"):
        pool_token(emb, token(uid="other", tid="other#0"), 1)


def test_pooling_linearity_and_constant_identity():
    rng = np.random.default_rng(8)
    emb = make_file(n_frames=12, rng=rng)
    tok = token(start=0.03, end=0.21)
    base = pool_token(emb, tok, 1).vector
    scaled = EmbeddingFile("u1", 0.02, 0.0, emb.layers * np.float32(2.0))
    assert np.array_equal(pool_token(scaled, tok, 1).vector, base * 2.0)
    const = make_file(n_frames=12, fill=1.25)
    assert np.array_equal(pool_token(const, tok, 1).vector, np.full(4, 1.25))


def corpus_fixture(tmp_path, n_tokens=3, narrow=None):
    rng = np.random.default_rng(77)
    tokens = []
    for u in range(n_tokens):
        uid = f"u{u}"
        emb = make_file(uid=uid, n_layers=12, n_frames=20, rng=rng)
        write_embedding_file(emb, tmp_path / f"{uid}.tpeb")
        if narrow is not None and u == narrow:
            tokens.append(token(uid=uid, start=0.011, end=0.019, tid=f"{uid}#0"))
        else:
            tokens.append(token(uid=uid, start=0.0, end=0.2, tid=f"{uid}#0"))
    return tokens


def test_pool_corpus_cardinality(tmp_path):
    tokens = corpus_fixture(tmp_path)
    table, drops = pool_corpus(tokens, tmp_path, list(range(1, 13)))
    assert len(table) == 36 and not drops
    assert table.token_ids == sorted(table.token_ids)


def test_pool_corpus_with_drop(tmp_path):
    tokens = corpus_fixture(tmp_path, narrow=1)
    table, drops = pool_corpus(tokens, tmp_path, list(range(1, 13)))
    assert len(table) == 24
    assert len(drops) == 1 and drops[0].token_id == "u1#0"


def test_pool_corpus_empty(tmp_path):
    table, drops = pool_corpus([], tmp_path, [1])
    assert len(table) == 0 and not drops


def test_pool_corpus_missing_file(tmp_path):
    tokens = [token(uid="ghost", tid="ghost#0")]
    with pytest.raises(EmbeddingFormatError, match="ghost"):
        pool_corpus(tokens, tmp_path, [1])


def test_feature_table_roundtrip(tmp_path):
    tokens = corpus_fixture(tmp_path)
    table, _ = pool_corpus(tokens, tmp_path, [1, 2, 3], language="synthetic")
    path = tmp_path / "feats.tpft"
    table.save(path)
    back = FeatureTable.load(path)
    assert back.model_tag == table.model_tag and back.language == "synthetic"
    assert back.token_ids == table.token_ids
    assert np.array_equal(back.layers, table.layers)
    assert np.array_equal(back.X, table.X)
    assert back.available_layers() == [1, 2, 3]
    # deterministic bytes
    path2 = tmp_path / "feats2.tpft"
    back.save(path2)
    assert path.read_bytes() == path2.read_bytes()
