"""Praat TextGrid parsing with diagnostics, plus a test-support serializer.

Handles both syntaxes Praat emits: the "long" form (``key = value`` lines)
and the "short" form (bare values), encoded as UTF-8 or UTF-16 with an
optional BOM. Interval tiers become values; point tiers are consumed and
skipped with a warning. Parsing is total: malformed input yields fatal
diagnostics, never an exception.
"""

from __future__ import annotations

import codecs
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path

logger = logging.getLogger(__name__)

# Praat prints ~17 significant digits; exact float comparison is brittle.
TIME_TOLERANCE = 1e-6

# Guard against absurd declared counts in corrupt files.
_MAX_COUNT = 10_000_000


@dataclass(frozen=True)
class Interval:
    start: float
    end: float
    label: str


@dataclass(frozen=True)
class IntervalTier:
    name: str
    intervals: tuple[Interval, ...]


@dataclass(frozen=True)
class TextGrid:
    xmin: float
    xmax: float
    tiers: tuple[IntervalTier, ...]


@dataclass(frozen=True)
class ParseDiagnostic:
    line: int
    severity: str  # "warning" | "fatal"
    message: str


@dataclass
class ParseResult:
    grid: TextGrid | None
    diagnostics: list[ParseDiagnostic]

    @property
    def ok(self) -> bool:
        return self.grid is not None

    def fatals(self) -> list[ParseDiagnostic]:
        return [d for d in self.diagnostics if d.severity == "fatal"]

    def warnings(self) -> list[ParseDiagnostic]:
        return [d for d in self.diagnostics if d.severity == "warning"]


class _FatalParse(Exception):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class _Lines:
    """Cursor over the input's lines, 1-based line numbers."""

    def __init__(self, text: str):
        self.lines = text.split("\n")
        self.pos = 0

    @property
    def lineno(self) -> int:
        return self.pos  # number of the line just consumed

    def at_end(self) -> bool:
        return self.pos >= len(self.lines)

    def next_raw(self) -> str:
        if self.at_end():
            raise _FatalParse(len(self.lines), "unexpected end of input")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def next_nonblank(self, what: str) -> tuple[str, int]:
        while not self.at_end():
            line = self.next_raw()
            if line.strip():
                return line, self.pos
        raise _FatalParse(len(self.lines), f"expected {what}, got end of input")


def _read_quoted(lines: _Lines, after_quote: str, start_line: int) -> tuple[str, str]:
    """Read a Praat string whose opening quote was already consumed.

    ``""`` inside the string is an escaped quote; the string may span lines.
    Returns (value, remainder of the final line after the closing quote).
    """
    parts: list[str] = []
    cur = after_quote
    while True:
        q = cur.find('"')
        if q == -1:
            parts.append(cur)
            parts.append("\n")
            if lines.at_end():
                raise _FatalParse(start_line, "unterminated string")
            cur = lines.next_raw()
            continue
        if q + 1 < len(cur) and cur[q + 1] == '"':
            parts.append(cur[: q + 1])
            cur = cur[q + 2 :]
            continue
        parts.append(cur[:q])
        return "".join(parts), cur[q + 1 :]


def _to_number(token: str, line: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise _FatalParse(line, f"non-numeric {what}: {token!r}") from None
    if not math.isfinite(value):
        raise _FatalParse(line, f"non-finite {what}: {token!r}")
    return value


class _LongReader:
    """Field reader for the long (key = value) syntax."""

    # Structural lines like `item []:` / `intervals [3]:` carry no value.
    _STRUCTURAL = re.compile(r"^[A-Za-z]+\s*\[\d*\]\s*:\s*$")

    def __init__(self, lines: _Lines):
        self.lines = lines

    def _next_field(self, what: str) -> tuple[str, int]:
        while True:
            line, no = self.lines.next_nonblank(what)
            if self._STRUCTURAL.match(line.strip()):
                continue
            return line, no

    def read_number(self, what: str) -> tuple[float, int]:
        line, no = self._next_field(what)
        _, eq, value = line.partition("=")
        if not eq:
            raise _FatalParse(no, f"expected {what} assignment, got {line.strip()!r}")
        return _to_number(value.strip(), no, what), no

    def read_string(self, what: str) -> tuple[str, int]:
        line, no = self._next_field(what)
        _, eq, value = line.partition("=")
        if not eq or not value.strip().startswith('"'):
            raise _FatalParse(no, f"expected quoted {what}, got {line.strip()!r}")
        text, _rest = _read_quoted(self.lines, value.strip()[1:], no)
        return text, no

    def read_flag(self, what: str) -> tuple[bool, int]:
        line, no = self.lines.next_nonblank(what)
        if "<exists>" in line:
            return True, no
        if "<absent>" in line:
            return False, no
        raise _FatalParse(no, f"expected {what} flag, got {line.strip()!r}")


class _ShortReader:
    """Field reader for the short (bare value) syntax."""

    def __init__(self, lines: _Lines):
        self.lines = lines

    def read_number(self, what: str) -> tuple[float, int]:
        line, no = self.lines.next_nonblank(what)
        return _to_number(line.strip(), no, what), no

    def read_string(self, what: str) -> tuple[str, int]:
        line, no = self.lines.next_nonblank(what)
        stripped = line.strip()
        if not stripped.startswith('"'):
            raise _FatalParse(no, f"expected quoted {what}, got {stripped!r}")
        text, _rest = _read_quoted(self.lines, stripped[1:], no)
        return text, no

    def read_flag(self, what: str) -> tuple[bool, int]:
        line, no = self.lines.next_nonblank(what)
        if "<exists>" in line:
            return True, no
        if "<absent>" in line:
            return False, no
        raise _FatalParse(no, f"expected {what} flag, got {line.strip()!r}")


def _read_count(reader, what: str) -> tuple[int, int]:
    value, no = reader.read_number(what)
    if value != int(value) or value < 0 or value > _MAX_COUNT:
        raise _FatalParse(no, f"implausible {what}: {value!r}")
    return int(value), no


def _parse_grid(text: str, diagnostics: list[ParseDiagnostic]) -> TextGrid:
    lines = _Lines(text)
    header, no = lines.next_nonblank("file type header")
    if "ooTextFile" not in header:
        raise _FatalParse(no, "not an ooTextFile header")
    objclass, no = lines.next_nonblank("object class header")
    if "TextGrid" not in objclass:
        raise _FatalParse(no, "object class is not TextGrid")

    # Long files continue with `xmin = ...`; short files with a bare number.
    probe = lines.pos
    peek, _ = lines.next_nonblank("grid start time")
    lines.pos = probe
    reader = _LongReader(lines) if peek.lstrip().startswith("xmin") else _ShortReader(lines)

    xmin, xmin_line = reader.read_number("grid start time")
    xmax, xmax_line = reader.read_number("grid end time")
    if xmin > xmax:
        raise _FatalParse(xmax_line, f"grid range inverted: xmin {xmin} > xmax {xmax}")
    has_tiers, _ = reader.read_flag("tiers")

    tiers: list[IntervalTier] = []
    if has_tiers:
        n_tiers, _ = _read_count(reader, "tier count")
        for _t in range(n_tiers):
            tier_class, class_line = reader.read_string("tier class")
            name, _ = reader.read_string("tier name")
            t_xmin, t_line = reader.read_number("tier start time")
            t_xmax, _ = reader.read_number("tier end time")
            if t_xmin < xmin - TIME_TOLERANCE or t_xmax > xmax + TIME_TOLERANCE:
                raise _FatalParse(
                    t_line,
                    f"tier {name!r} range [{t_xmin}, {t_xmax}] outside grid "
                    f"range [{xmin}, {xmax}]",
                )
            if tier_class == "IntervalTier":
                n_items, _ = _read_count(reader, "interval count")
                intervals: list[Interval] = []
                prev_end: float | None = None
                for _i in range(n_items):
                    i_start, i_line = reader.read_number("interval start")
                    i_end, _ = reader.read_number("interval end")
                    label, _ = reader.read_string("interval text")
                    if i_start > i_end or (i_start >= i_end and label != ""):
                        raise _FatalParse(
                            i_line,
                            f"degenerate interval [{i_start}, {i_end}] "
                            f"with label {label!r}",
                        )
                    if i_start < xmin - TIME_TOLERANCE or i_end > xmax + TIME_TOLERANCE:
                        raise _FatalParse(
                            i_line,
                            f"interval [{i_start}, {i_end}] outside grid range",
                        )
                    if prev_end is not None and i_start + TIME_TOLERANCE < prev_end:
                        raise _FatalParse(
                            i_line,
                            f"interval starting at {i_start} overlaps or is out of "
                            f"order with previous interval ending at {prev_end}",
                        )
                    intervals.append(Interval(i_start, i_end, label))
                    prev_end = i_end
                tiers.append(IntervalTier(name, tuple(intervals)))
            elif tier_class in ("TextTier", "PointTier"):
                n_items, _ = _read_count(reader, "point count")
                for _i in range(n_items):
                    reader.read_number("point time")
                    reader.read_string("point mark")
                diagnostics.append(
                    ParseDiagnostic(class_line, "warning", f"point tier {name!r} skipped")
                )
            else:
                raise _FatalParse(class_line, f"unknown tier class {tier_class!r}")

    return TextGrid(xmin, xmax, tuple(tiers))


def parse_textgrid(content: str) -> ParseResult:
    """Parse TextGrid text into a value, or fatal diagnostics on failure."""
    diagnostics: list[ParseDiagnostic] = []
    text = content.replace("\r\n", "\n").replace("\r", "\n")
    try:
        grid = _parse_grid(text, diagnostics)
    except _FatalParse as err:
        diagnostics.append(ParseDiagnostic(err.line, "fatal", err.message))
        return ParseResult(None, diagnostics)
    return ParseResult(grid, diagnostics)


def decode_textgrid_bytes(data: bytes) -> str:
    """Decode raw TextGrid bytes, honoring a UTF-16/UTF-8 BOM; UTF-8 default."""
    if data.startswith(codecs.BOM_UTF16_BE):
        return data[2:].decode("utf-16-be", errors="replace")
    if data.startswith(codecs.BOM_UTF16_LE):
        return data[2:].decode("utf-16-le", errors="replace")
    if data.startswith(codecs.BOM_UTF8):
        return data[3:].decode("utf-8", errors="replace")
    return data.decode("utf-8", errors="replace")


def parse_textgrid_bytes(data: bytes) -> ParseResult:
    return parse_textgrid(decode_textgrid_bytes(data))


def read_textgrid(path: str | Path) -> ParseResult:
    return parse_textgrid_bytes(Path(path).read_bytes())


def tier_by_name(grid: TextGrid, name: str) -> IntervalTier | None:
    """Return the first interval tier with this exact name, or None.

    The match is case-sensitive; duplicate names log a warning and the
    first tier wins.
    """
    matches = [t for t in grid.tiers if t.name == name]
    if not matches:
        return None
    if len(matches) > 1:
        logger.warning("duplicate tier name %r: using the first of %d", name, len(matches))
    return matches[0]


def _fmt(x: float) -> str:
    return repr(float(x))


def _esc(label: str) -> str:
    return label.replace('"', '""')


def serialize_textgrid(grid: TextGrid, short: bool = False) -> str:
    """Render a TextGrid in Praat syntax (round-trip support for tests)."""
    out: list[str] = ['File type = "ooTextFile"', 'Object class = "TextGrid"', ""]
    if short:
        out += [_fmt(grid.xmin), _fmt(grid.xmax), "<exists>", str(len(grid.tiers))]
        for tier in grid.tiers:
            out += ['"IntervalTier"', f'"{_esc(tier.name)}"', _fmt(grid.xmin), _fmt(grid.xmax)]
            out.append(str(len(tier.intervals)))
            for iv in tier.intervals:
                out += [_fmt(iv.start), _fmt(iv.end), f'"{_esc(iv.label)}"']
    else:
        out += [
            f"xmin = {_fmt(grid.xmin)}",
            f"xmax = {_fmt(grid.xmax)}",
            "tiers? <exists>",
            f"size = {len(grid.tiers)}",
            "item []:",
        ]
        for t, tier in enumerate(grid.tiers, 1):
            out += [
                f"    item [{t}]:",
                '        class = "IntervalTier"',
                f'        name = "{_esc(tier.name)}"',
                f"        xmin = {_fmt(grid.xmin)}",
                f"        xmax = {_fmt(grid.xmax)}",
                f"        intervals: size = {len(tier.intervals)}",
            ]
            for i, iv in enumerate(tier.intervals, 1):
                out += [
                    f"        intervals [{i}]:",
                    f"            xmin = {_fmt(iv.start)}",
                    f"            xmax = {_fmt(iv.end)}",
                    f'            text = "{_esc(iv.label)}"',
                ]
    return "\n".join(out) + "\n"
