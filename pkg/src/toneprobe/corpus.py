"""Corpus ingestion: manifest loading, tone-token extraction, duration
filtering, and per-tone accounting.

A corpus is described by a manifest CSV pointing at one TextGrid (and one
audio file) per utterance. Tokens are the non-empty intervals of a named
annotation tier whose labels belong to the language's tone inventory.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .textgrid import read_textgrid, tier_by_name

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ("utterance_id", "audio_path", "textgrid_path", "speaker_id", "dialect", "context")
TOKEN_COLUMNS = ("token_id", "utterance_id", "speaker_id", "dialect", "tone", "start", "end")

# Tone inventories of the three languages the toolkit was built around.
ANGAMI_TONES = ("T1", "T2", "T3", "T4")
AO_TONES = ("L", "M", "H")
MIZO_TONES = ("L", "H", "R", "F")

DEFAULT_TIER = "tones"
DEFAULT_MIN_DURATION = 0.050


class CorpusError(Exception):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    audio_path: str
    textgrid_path: str
    speaker_id: str
    dialect: str
    context: str = ""


@dataclass
class CorpusManifest:
    language: str
    entries: list[ManifestEntry]
    root: Path = field(default_factory=Path)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.root / p


@dataclass(frozen=True)
class ToneToken:
    token_id: str
    utterance_id: str
    speaker_id: str
    dialect: str
    tone: str
    start: float
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass
class CorpusAccounting:
    """Per-tone token counts and summed durations (exact values; reports
    round minutes to 2 decimals)."""

    counts: dict[str, int]
    minutes: dict[str, float]

    @property
    def total_count(self) -> int:
        return sum(self.counts.values())

    @property
    def total_minutes(self) -> float:
        return sum(self.minutes.values())

    def rows(self) -> list[tuple[str, int, float]]:
        out = [(tone, self.counts[tone], round(self.minutes[tone], 2)) for tone in self.counts]
        out.append(("TOTAL", self.total_count, round(self.total_minutes, 2)))
        return out


def load_manifest(path: str | Path, language: str | None = None) -> CorpusManifest:
    """Load and validate a manifest CSV (header per MANIFEST_COLUMNS)."""
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"manifest not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = tuple(reader.fieldnames or ())
        missing = [c for c in MANIFEST_COLUMNS if c not in header]
        if missing:
            raise CorpusError(f"manifest {path} missing column(s): {', '.join(missing)}")
        entries: list[ManifestEntry] = []
        seen: set[str] = set()
        for row in reader:
            uid = (row["utterance_id"] or "").strip()
            if not uid:
                raise CorpusError(f"manifest {path}: empty utterance_id")
            if uid in seen:
                raise CorpusError(f"manifest {path}: duplicate utterance_id {uid!r}")
            seen.add(uid)
            speaker = (row["speaker_id"] or "").strip()
            dialect = (row["dialect"] or "").strip()
            if not speaker or not dialect:
                raise CorpusError(f"manifest {path}: utterance {uid!r} has empty speaker_id or dialect")
            entries.append(
                ManifestEntry(
                    utterance_id=uid,
                    audio_path=row["audio_path"],
                    textgrid_path=row["textgrid_path"],
                    speaker_id=speaker,
                    dialect=dialect,
                    context=(row.get("context") or "").strip(),
                )
            )
    return CorpusManifest(language=language or path.stem, entries=entries, root=path.parent)


def extract_tokens(
    manifest: CorpusManifest,
    tier_name: str = DEFAULT_TIER,
    inventory: tuple[str, ...] | set[str] = (),
) -> tuple[list[ToneToken], list[str]]:
    """Turn the named tier of every utterance's TextGrid into tone tokens.

    A token is a non-empty interval whose label is in the inventory;
    out-of-inventory labels are skipped with a warning. token_id is
    ``utterance_id#<index of the interval on its tier>`` (0-based, spacers
    included in the count).
    """
    inv = set(inventory)
    if not inv:
        raise CorpusError("empty tone inventory")
    tokens: list[ToneToken] = []
    warnings: list[str] = []
    for entry in manifest.entries:
        grid_path = manifest.resolve(entry.textgrid_path)
        if not grid_path.exists():
            raise CorpusError(f"utterance {entry.utterance_id!r}: TextGrid missing: {grid_path}")
        result = read_textgrid(grid_path)
        if result.grid is None:
            details = "; ".join(f"line {d.line}: {d.message}" for d in result.fatals())
            raise CorpusError(f"utterance {entry.utterance_id!r}: unparseable TextGrid ({details})")
        for diag in result.warnings():
            warnings.append(f"{entry.utterance_id}: {diag.message}")
        tier = tier_by_name(result.grid, tier_name)
        if tier is None:
            raise CorpusError(f"utterance {entry.utterance_id!r}: tier {tier_name!r} not found")
        for index, interval in enumerate(tier.intervals):
            if interval.label == "":
                continue
            if interval.label not in inv:
                warnings.append(
                    f"{entry.utterance_id}: interval {index} label {interval.label!r} "
                    f"not in inventory, skipped"
                )
                continue
            tokens.append(
                ToneToken(
                    token_id=f"{entry.utterance_id}#{index}",
                    utterance_id=entry.utterance_id,
                    speaker_id=entry.speaker_id,
                    dialect=entry.dialect,
                    tone=interval.label,
                    start=interval.start,
                    end=interval.end,
                )
            )
    return tokens, warnings


def filter_by_duration(tokens: list[ToneToken], min_duration: float = DEFAULT_MIN_DURATION) -> list[ToneToken]:
    """Keep tokens with duration >= min_duration (inclusive), in order."""
    if min_duration < 0:
        raise ValueError(f"min_duration must be >= 0, got {min_duration}")
    kept = [t for t in tokens if t.end - t.start >= min_duration]
    removed = len(tokens) - len(kept)
    if removed:
        logger.info("duration filter at %.3f s removed %d of %d tokens", min_duration, removed, len(tokens))
    return kept


def accounting(tokens: list[ToneToken], inventory: tuple[str, ...] | None = None) -> CorpusAccounting:
    """Per-tone counts and durations in minutes; tones in inventory order
    when given, else sorted."""
    tones = list(inventory) if inventory else sorted({t.tone for t in tokens})
    counts = {tone: 0 for tone in tones}
    seconds = {tone: 0.0 for tone in tones}
    for tok in tokens:
        if tok.tone not in counts:  # tokens outside a declared inventory still count
            counts[tok.tone] = 0
            seconds[tok.tone] = 0.0
        counts[tok.tone] += 1
        seconds[tok.tone] += tok.end - tok.start
    return CorpusAccounting(counts=counts, minutes={t: s / 60.0 for t, s in seconds.items()})


def write_tokens_csv(tokens: list[ToneToken], path: str | Path) -> None:
    """Serialize tokens; times printed to 6 decimals."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TOKEN_COLUMNS)
        for t in tokens:
            writer.writerow(
                [t.token_id, t.utterance_id, t.speaker_id, t.dialect, t.tone, f"{t.start:.6f}", f"{t.end:.6f}"]
            )


def read_tokens_csv(path: str | Path) -> list[ToneToken]:
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"token CSV not found: {path}")
    tokens: list[ToneToken] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in TOKEN_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise CorpusError(f"token CSV {path} missing column(s): {', '.join(missing)}")
        for row in reader:
            tokens.append(
                ToneToken(
                    token_id=row["token_id"],
                    utterance_id=row["utterance_id"],
                    speaker_id=row["speaker_id"],
                    dialect=row["dialect"],
                    tone=row["tone"],
                    start=float(row["start"]),
                    end=float(row["end"]),
                )
            )
    return tokens


def write_accounting_csv(acct: CorpusAccounting, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["tone", "tokens", "duration_min"])
        for tone, count, minutes in acct.rows():
            writer.writerow([tone, count, f"{minutes:.2f}"])
