"""WAV loading and resampling to the model input rate."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .models import ExtractorError

_INT_SCALE = {np.dtype(np.int16): 32768.0, np.dtype(np.int32): 2147483648.0, np.dtype(np.uint8): 128.0}


def read_wav_mono(path: str | Path) -> tuple[int, np.ndarray]:
    """Load a WAV as float32 mono in [-1, 1]."""
    path = Path(path)
    if not path.exists():
        raise ExtractorError(f"audio file missing: {path}")
    try:
        rate, data = wavfile.read(path)
    except ValueError as err:
        raise ExtractorError(f"corrupt audio {path}: {err}") from None
    if data.size == 0:
        raise ExtractorError(f"empty audio: {path}")
    if data.dtype in _INT_SCALE:
        offset = 128.0 if data.dtype == np.uint8 else 0.0
        data = (data.astype(np.float32) - offset) / _INT_SCALE[data.dtype]
    else:
        data = data.astype(np.float32)
    if data.ndim == 2:
        data = data.mean(axis=1)
    return int(rate), data


def resample_to(x: np.ndarray, rate: int, target: int) -> np.ndarray:
    """Polyphase resampling (Kaiser-windowed) to the target rate."""
    if rate == target:
        return x.astype(np.float32)
    g = math.gcd(rate, target)
    return resample_poly(x.astype(np.float64), target // g, rate // g).astype(np.float32)
