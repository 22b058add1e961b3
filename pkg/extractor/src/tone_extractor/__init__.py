"""Embedding extraction: speech-model hidden states to toneprobe files."""

from .extract import ExtractionReport, extract, write_extraction_log
from .models import MODEL_REGISTRY, ExtractorError, ModelSpec, resolve_model, untrained_base_spec

__version__ = "0.1.0"
