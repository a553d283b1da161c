"""WebVTT parsing and transcript normalization.

Times are kept as exact ``Fraction`` seconds (millisecond resolution) so that
durations sum without float drift.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from fractions import Fraction

from subtext.subtitle_index import SourceKind

_TIMESTAMP = re.compile(r"(?:(\d{2,}):)?([0-5]\d):([0-5]\d)\.(\d{3})", re.ASCII)
_TAG = re.compile(r"<[^>]*>")
_WS = re.compile(r"\s+")
_SKIPPED_BLOCKS = ("NOTE", "STYLE", "REGION")


class BadTimestamp(ValueError):
    def __init__(self, text: str):
        super().__init__(f"bad timestamp: {text!r}")
        self.text = text


class NotVtt(ValueError):
    pass


@dataclass(frozen=True)
class Cue:
    start_s: Fraction
    end_s: Fraction
    text: str


@dataclass(frozen=True)
class CueTrack:
    cues: tuple[Cue, ...] = ()
    language: str = ""
    source: SourceKind = SourceKind.Unknown
    warnings: tuple[str, ...] = field(default=(), compare=False)


def parse_timestamp(text: str) -> Fraction:
    """Parse ``HH:MM:SS.mmm`` or ``MM:SS.mmm`` into exact seconds."""
    m = _TIMESTAMP.fullmatch(text)
    if m is None:
        raise BadTimestamp(text)
    hours, minutes, seconds, millis = m.groups()
    total_ms = ((int(hours or 0) * 60 + int(minutes)) * 60 + int(seconds)) * 1000 + int(millis)
    return Fraction(total_ms, 1000)


def format_seconds(value: Fraction) -> str:
    """Seconds with exactly three decimals, no float rounding."""
    ms = round(Fraction(value) * 1000)
    sign = "-" if ms < 0 else ""
    ms = abs(ms)
    return f"{sign}{ms // 1000}.{ms % 1000:03d}"


def _decode(data: bytes, warnings: list[str]) -> str:
    if data.startswith(b"\xef\xbb\xbf"):
        data = data[3:]
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        text = data.decode("utf-8", errors="replace")
        warnings.append("invalid UTF-8 replaced")
    return text.replace("\r\n", "\n").replace("\r", "\n")


def _is_header(line: str) -> bool:
    return line == "WEBVTT" or (line.startswith("WEBVTT") and line[6] in " \t")


def _blocks(lines: list[str]):
    block: list[str] = []
    for line in lines:
        if line.strip():
            block.append(line)
        elif block:
            yield block
            block = []
    if block:
        yield block


def _is_skipped(first_line: str) -> bool:
    for keyword in _SKIPPED_BLOCKS:
        if first_line == keyword or (
            first_line.startswith(keyword) and first_line[len(keyword)] in " \t"
        ):
            return True
    return False


def _parse_timing(line: str) -> tuple[Fraction, Fraction]:
    left, _, right = line.partition("-->")
    start = parse_timestamp(left.strip())
    end_fields = right.split()
    if not end_fields:
        raise BadTimestamp(right)
    # anything after the end time is cue settings
    return start, parse_timestamp(end_fields[0])


def parse_vtt(
    data: bytes | str, language: str = "", source: SourceKind = SourceKind.Unknown
) -> CueTrack:
    """Decode a WebVTT file into a CueTrack.

    Only a missing ``WEBVTT`` header is fatal (``NotVtt``). Malformed cue
    blocks are skipped and noted in ``warnings``.
    """
    warnings: list[str] = []
    if isinstance(data, str):
        data = data.encode("utf-8", errors="surrogatepass")
    text = _decode(bytes(data), warnings)
    lines = text.split("\n")
    if not _is_header(lines[0]):
        raise NotVtt("missing WEBVTT header")

    cues: list[Cue] = []
    blocks = _blocks(lines)
    next(blocks)  # header block, including any header metadata lines
    for block in blocks:
        if _is_skipped(block[0]):
            continue
        if "-->" in block[0]:
            timing, payload = block[0], block[1:]
        elif len(block) > 1 and "-->" in block[1]:
            timing, payload = block[1], block[2:]
        else:
            warnings.append(f"skipped block without timing line: {block[0][:40]!r}")
            continue
        try:
            start, end = _parse_timing(timing)
        except BadTimestamp as exc:
            warnings.append(f"skipped cue: {exc}")
            continue
        cues.append(Cue(start, end, " ".join(line.strip() for line in payload)))
    return CueTrack(tuple(cues), language, source, tuple(warnings))


def clean_text(text: str) -> str:
    return _WS.sub(" ", _TAG.sub("", text)).strip()


def normalize_track(track: CueTrack) -> CueTrack:
    """Clean cue text and drop unusable cues.

    Markup is stripped and whitespace collapsed; empty cues and cues ending
    before they start are dropped; cues are stable-sorted by start time; a
    cue whose text equals the previous kept cue's text is dropped. Sorting
    happens before the duplicate check so the result is idempotent.
    """
    warnings = list(track.warnings)
    cleaned: list[Cue] = []
    for cue in track.cues:
        text = clean_text(cue.text)
        if not text:
            continue
        if cue.end_s < cue.start_s:
            warnings.append(f"dropped cue ending before it starts at {format_seconds(cue.start_s)}")
            continue
        cleaned.append(replace(cue, text=text))
    cleaned.sort(key=lambda c: c.start_s)
    kept: list[Cue] = []
    for cue in cleaned:
        if kept and kept[-1].text == cue.text:
            continue
        kept.append(cue)
    return replace(track, cues=tuple(kept), warnings=tuple(warnings))


def track_text(track: CueTrack) -> str:
    return " ".join(cue.text for cue in track.cues)


def speech_duration(track: CueTrack) -> Fraction:
    return sum((cue.end_s - cue.start_s for cue in track.cues), Fraction(0))
