"""Tone-recognition probing toolkit: TextGrid ingestion, embedding pooling,
group-independent cross-validation, linear SVM probes, and layer-wise reports."""

from .corpus import (
    ANGAMI_TONES,
    AO_TONES,
    MIZO_TONES,
    CorpusAccounting,
    CorpusError,
    CorpusManifest,
    ManifestEntry,
    ToneToken,
    accounting,
    extract_tokens,
    filter_by_duration,
    load_manifest,
)
from .embstore import (
    EmbeddingFile,
    EmbeddingFormatError,
    FeatureTable,
    FrameRange,
    PooledFeature,
    frame_range_for_segment,
    pool_corpus,
    pool_token,
    read_embedding_file,
    write_embedding_file,
)
from .evalreport import (
    AggregateResult,
    LayerResult,
    SvmConfig,
    aggregate,
    best_layer,
    confusion_and_metrics,
    emit_reports,
    run_sweep,
)
from .folds import FoldPlan, FoldStats, build_dialect_folds, build_speaker_folds, validate_plan
from .svm import BinarySvm, OvrModel, Standardizer, predict, train_binary, train_ovr
from .synth import SynthSpec, dialect_shift_spec, generate
from .textgrid import (
    Interval,
    IntervalTier,
    ParseDiagnostic,
    ParseResult,
    TextGrid,
    parse_textgrid,
    read_textgrid,
    serialize_textgrid,
    tier_by_name,
)

__version__ = "0.1.0"
