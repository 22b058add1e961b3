import numpy as np
import pytest
from scipy.io import wavfile

from tone_extractor.audio import read_wav_mono, resample_to
from tone_extractor.extract import extract, write_extraction_log
from tone_extractor.models import MODEL_REGISTRY, ExtractorError, ModelSpec, resolve_model
from toneprobe.corpus import load_manifest
from toneprobe.embstore import pool_corpus, read_embedding_file
from toneprobe.corpus import ToneToken

TINY_OVERRIDES = (
    ("hidden_size", 32),
    ("num_hidden_layers", 2),
    ("num_attention_heads", 2),
    ("intermediate_size", 64),
    ("conv_dim", (32, 32, 32, 32, 32, 32, 32)),
)


def tiny_spec(tag="tiny-test"):
    return ModelSpec(tag, None, expected_dim=32, config_overrides=TINY_OVERRIDES)


def write_corpus(root, durations, rate=44100, missing=()):
    rng = np.random.default_rng(0)
    rows = ["utterance_id,audio_path,textgrid_path,speaker_id,dialect,context"]
    (root / "audio").mkdir(parents=True, exist_ok=True)
    for i, dur in enumerate(durations):
        uid = f"u{i}"
        if uid not in missing:
            samples = (0.1 * rng.standard_normal(int(rate * dur))).astype(np.float32)
            wavfile.write(root / "audio" / f"{uid}.wav", rate, (samples * 32767).astype(np.int16))
        rows.append(f"{uid},audio/{uid}.wav,grids/{uid}.TextGrid,s{i},d0,")
    manifest = root / "manifest.csv"
    manifest.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return manifest


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("wav_corpus")
    manifest = write_corpus(root, [1.0, 0.5, 2.0])
    return root, manifest


@pytest.fixture(scope="module")
def extracted(corpus, tmp_path_factory):
    root, manifest_path = corpus
    out = tmp_path_factory.mktemp("emb_out")
    report = extract(load_manifest(manifest_path), tiny_spec(), out)
    return out, report


def test_audio_reading_and_resampling(corpus):
    root, _ = corpus
    rate, x = read_wav_mono(root / "audio" / "u0.wav")
    assert rate == 44100 and x.dtype == np.float32
    assert np.max(np.abs(x)) <= 1.0
    y = resample_to(x, rate, 16000)
    assert abs(len(y) - 16000) <= 2


def test_missing_audio_raises():
    with pytest.raises(ExtractorError, match="missing"):
        read_wav_mono("/nonexistent/audio.wav")


def test_extract_writes_valid_files(extracted):
    out, report = extracted
    assert report.dim == 32
    assert sorted(report.written) == ["u0", "u1", "u2"] and not report.failed
    for uid in report.written:
        emb = read_embedding_file(out / "tiny-test" / f"{uid}.tpeb")
        assert emb.utterance_id == uid
        assert emb.num_layers == 2 and emb.dim == 32
        assert list(emb.layer_numbers()) == [1, 2]
        assert emb.frame_stride == 0.020 and emb.frame_offset == 0.0
        assert np.all(np.isfinite(emb.layers))


def test_frame_counts_track_duration(extracted):
    out, report = extracted
    # 1.0 s -> ~49 frames at 20 ms; 0.5 s about half; 2.0 s about double
    f1, fh, f2 = report.frames["u0"], report.frames["u1"], report.frames["u2"]
    assert 48 <= f1 <= 50
    assert abs(2 * fh - f1) <= 2
    assert abs(f2 - 2 * f1) <= 2


def test_repeat_extraction_byte_identical(corpus, extracted, tmp_path):
    root, manifest_path = corpus
    out1, _ = extracted
    report = extract(load_manifest(manifest_path), tiny_spec(), tmp_path)
    assert not report.failed
    for uid in report.written:
        a = (out1 / "tiny-test" / f"{uid}.tpeb").read_bytes()
        b = (tmp_path / "tiny-test" / f"{uid}.tpeb").read_bytes()
        assert a == b


def test_include_layer0(corpus, tmp_path):
    _, manifest_path = corpus
    report = extract(load_manifest(manifest_path), tiny_spec(), tmp_path, include_layer0=True)
    emb = read_embedding_file(tmp_path / "tiny-test" / "u0.tpeb")
    assert emb.includes_layer0
    assert emb.num_layers == 3 and list(emb.layer_numbers()) == [0, 1, 2]


def test_missing_audio_logged_others_processed(tmp_path):
    manifest_path = write_corpus(tmp_path, [0.5, 0.5, 0.5], missing={"u1"})
    report = extract(load_manifest(manifest_path), tiny_spec(), tmp_path / "out")
    assert sorted(report.written) == ["u0", "u2"]
    assert len(report.failed) == 1 and report.failed[0][0] == "u1"
    log = tmp_path / "extract.log"
    write_extraction_log(report, log)
    text = log.read_text()
    assert "failed u1" in text and "written u0" in text


def test_local_checkpoint_roundtrip(tmp_path, corpus):
    # save the tiny model as a local checkpoint and load it back by path
    _, manifest_path = corpus
    model = tiny_spec().load()
    ckpt = tmp_path / "ckpt"
    model.save_pretrained(ckpt)
    spec = ModelSpec("tiny-local", str(ckpt), expected_dim=32)
    report = extract(load_manifest(manifest_path), spec, tmp_path / "out")
    assert sorted(report.written) == ["u0", "u1", "u2"]


def test_expected_dim_mismatch_rejected(tmp_path, corpus):
    _, manifest_path = corpus
    spec = ModelSpec("tiny-wrong", None, expected_dim=768, config_overrides=TINY_OVERRIDES)
    with pytest.raises(ExtractorError, match="hidden size"):
        extract(load_manifest(manifest_path), spec, tmp_path)


def test_registry_and_resolution():
    assert set(MODEL_REGISTRY) == {
        "wav2vec2-base", "mandarin-wav2vec2", "chinese-wav2vec2-base", "wav2vec2-base-vi",
    }
    assert all(s.expected_dim == 768 and s.frame_stride == 0.020 for s in MODEL_REGISTRY.values())
    spec = resolve_model("wav2vec2-base")
    assert spec.checkpoint == "facebook/wav2vec2-base"
    assert resolve_model("anything", untrained=True).checkpoint is None
    with pytest.raises(ExtractorError, match="unknown model tag"):
        resolve_model("no-such-model")
    with pytest.raises(ExtractorError, match="filesystem-safe"):
        ModelSpec("bad/tag", None)


def test_pipeline_integration(extracted):
    out, _ = extracted
    # tokens inside each utterance pool cleanly through the main toolkit
    tokens = [
        ToneToken("u0#0", "u0", "s0", "d0", "H", 0.05, 0.40),
        ToneToken("u0#1", "u0", "s0", "d0", "L", 0.45, 0.90),
        ToneToken("u1#0", "u1", "s1", "d0", "H", 0.10, 0.45),
    ]
    table, drops = pool_corpus(tokens, out / "tiny-test", [1, 2])
    assert not drops and len(table) == 6
    assert table.dim == 32
