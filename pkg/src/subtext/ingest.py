"""Stream capture files into normalized post records.

Two input shapes are accepted: Zeeschuimer-style NDJSON (one captured item
per line) and CSV files previously exported from 4CAT or by this package.
Bad items never abort a file; they come back as ``ItemError`` values in
stream order.
"""

from __future__ import annotations

import csv
import enum
import json
import re
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

from subtext.errors import FileUnreadable, HeaderMissing
from subtext.subtitle_index import (
    SubtitleDescriptor,
    classify_source,
    extract_descriptors,
)

# Capture schema. Every payload path the parser reads lives here.
ITEM_ROOTS = ("payload", "data")
KNOWN_ITEM_FIELDS = frozenset(
    {"id", "desc", "author", "stats", "video", "music", "createTime", "challenges", "textExtra"}
)
ID_FIELD = "id"
AUTHOR_PATHS = (("author", "uniqueId"), ("author",))
DESC_FIELD = "desc"
CREATED_FIELD = "createTime"
METRIC_PATHS = {
    "plays": ("stats", "playCount"),
    "likes": ("stats", "diggCount"),
    "comments": ("stats", "commentCount"),
    "shares": ("stats", "shareCount"),
}
MUSIC_FIELD = "music"
STRUCTURED_HASHTAGS = (("challenges", "title"), ("textExtra", "hashtagName"))

METRIC_NAMES = tuple(METRIC_PATHS)

_INLINE_HASHTAG = re.compile(r"#(\w+)")


class ErrorKind(str, enum.Enum):
    MalformedJson = "malformed_json"
    MissingId = "missing_id"
    UnrecognizedShape = "unrecognized_shape"


@dataclass(frozen=True)
class ItemError:
    line_number: int
    kind: ErrorKind
    message: str
    source_path: str = ""


@dataclass(frozen=True)
class RawCapture:
    line_number: int
    payload: dict
    source_path: str = ""


@dataclass
class PostRecord:
    id: str
    author: str = ""
    description: str = ""
    hashtags: list[str] = field(default_factory=list)
    created_at: int = 0
    metrics: dict[str, int] = field(default_factory=lambda: dict.fromkeys(METRIC_NAMES, 0))
    music: dict | None = None
    subtitle_descriptors: list[SubtitleDescriptor] = field(default_factory=list)
    query: str = ""
    raw: RawCapture | None = field(default=None, compare=False, repr=False)


def _open_binary(path):
    try:
        return open(path, "rb")
    except OSError as exc:
        raise FileUnreadable(f"cannot read {path}: {exc}") from exc


def stream_ndjson(path) -> Iterator[RawCapture | ItemError]:
    """Yield one RawCapture or ItemError per non-blank line, in file order.

    The file is opened eagerly so an unreadable path fails before iteration
    starts; lines are then read one at a time.
    """
    fh = _open_binary(path)
    return _iter_ndjson(fh, str(path))


def _iter_ndjson(fh, source: str) -> Iterator[RawCapture | ItemError]:
    with fh:
        for line_number, line in enumerate(fh, start=1):
            if line_number == 1 and line.startswith(b"\xef\xbb\xbf"):
                line = line[3:]
            if not line.strip():
                continue
            try:
                obj = json.loads(line.decode("utf-8"))
            except (UnicodeDecodeError, ValueError) as exc:
                yield ItemError(line_number, ErrorKind.MalformedJson, str(exc), source)
                continue
            if not isinstance(obj, dict):
                yield ItemError(
                    line_number,
                    ErrorKind.UnrecognizedShape,
                    f"expected a JSON object, got {type(obj).__name__}",
                    source,
                )
                continue
            yield RawCapture(line_number, obj, source)


def _dig(obj: Any, path: Iterable[str]) -> Any:
    for key in path:
        if not isinstance(obj, Mapping):
            return None
        obj = obj.get(key)
    return obj


def item_root(payload: Mapping[str, Any]) -> Mapping[str, Any] | None:
    """The mapping that holds the TikTok item fields, or None if nothing looks like one."""
    for name in ITEM_ROOTS:
        candidate = payload.get(name)
        if isinstance(candidate, Mapping) and KNOWN_ITEM_FIELDS & candidate.keys():
            return candidate
    if KNOWN_ITEM_FIELDS & payload.keys():
        return payload
    return None


def canonical_id(value: Any) -> str:
    if isinstance(value, bool):
        return ""
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return value.strip()
    return ""


def _count(value: Any) -> int:
    if isinstance(value, bool) or value is None:
        return 0
    try:
        n = int(value)
    except (TypeError, ValueError):
        try:
            n = int(float(value))
        except (TypeError, ValueError, OverflowError):
            return 0
    return max(n, 0)


def _text(value: Any) -> str:
    return value if isinstance(value, str) else ""


def normalize_hashtag(tag: str) -> str:
    return tag.strip().lstrip("#").lower()


def merge_hashtags(*sources: Iterable[str]) -> list[str]:
    seen: dict[str, None] = {}
    for source in sources:
        for tag in source:
            tag = normalize_hashtag(tag)
            if tag and not any(ch.isspace() or ch == "#" for ch in tag):
                seen.setdefault(tag, None)
    return list(seen)


def _structured_hashtags(item: Mapping[str, Any]) -> list[str]:
    tags = []
    for list_field, name_field in STRUCTURED_HASHTAGS:
        entries = item.get(list_field)
        if not isinstance(entries, list):
            continue
        for entry in entries:
            name = _dig(entry, (name_field,))
            if isinstance(name, str):
                tags.append(name)
    return tags


def _author(item: Mapping[str, Any]) -> str:
    for path in AUTHOR_PATHS:
        value = _dig(item, path)
        if isinstance(value, str):
            return value
    return ""


def _music(item: Mapping[str, Any]) -> dict | None:
    music = item.get(MUSIC_FIELD)
    if not isinstance(music, Mapping):
        return None
    return {
        "music_id": canonical_id(music.get("id")),
        "title": _text(music.get("title")),
        "original": bool(music.get("original", False)),
    }


def parse_post(raw: RawCapture, query: str = "") -> PostRecord | ItemError:
    """Normalize one captured item. Absent optional fields get defaults."""
    item = item_root(raw.payload)
    if item is None:
        return ItemError(
            raw.line_number,
            ErrorKind.UnrecognizedShape,
            "no known item root (payload, data or top-level item fields)",
            raw.source_path,
        )
    post_id = canonical_id(item.get(ID_FIELD))
    if not post_id:
        return ItemError(raw.line_number, ErrorKind.MissingId, "no post id", raw.source_path)
    description = _text(item.get(DESC_FIELD))
    return PostRecord(
        id=post_id,
        author=_author(item),
        description=description,
        hashtags=merge_hashtags(_INLINE_HASHTAG.findall(description), _structured_hashtags(item)),
        created_at=_count(item.get(CREATED_FIELD)),
        metrics={name: _count(_dig(item, path)) for name, path in METRIC_PATHS.items()},
        music=_music(item),
        subtitle_descriptors=extract_descriptors(item),
        query=query,
        raw=raw,
    )


def read_ndjson(path, query: str = "") -> Iterator[PostRecord | ItemError]:
    for entry in stream_ndjson(path):
        yield parse_post(entry, query) if isinstance(entry, RawCapture) else entry


# 4CAT-style CSV

TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"


def format_timestamp(unix_seconds: int) -> str:
    if not unix_seconds:
        return ""
    return datetime.fromtimestamp(unix_seconds, tz=timezone.utc).strftime(TIMESTAMP_FORMAT)


def parse_csv_timestamp(value: str) -> int:
    value = (value or "").strip()
    if not value:
        return 0
    if re.fullmatch(r"-?\d+(\.\d+)?", value):
        return _count(value)
    try:
        dt = datetime.strptime(value, TIMESTAMP_FORMAT)
    except ValueError:
        try:
            dt = datetime.fromisoformat(value)
        except ValueError:
            return 0
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return max(int(dt.timestamp()), 0)


def _csv_descriptors(row: Mapping[str, str]) -> list[SubtitleDescriptor]:
    url = (row.get("subtitle_url") or "").strip()
    language = (row.get("subtitle_language") or "").strip().lower()
    if not url or not language:
        return []
    return [
        SubtitleDescriptor(
            language=language,
            format=(row.get("subtitle_format") or "").strip() or "webvtt",
            source=classify_source(row.get("subtitle_source") or ""),
            url=url,
            url_key=(row.get("subtitle_url_key") or "").strip(),
        )
    ]


def read_4cat_csv(path, query: str = "") -> Iterator[PostRecord | ItemError]:
    """Map a 4CAT-style CSV onto PostRecords.

    Recognized columns: id, thread_id, author, body, timestamp, hashtags,
    plays, likes, comments, shares, music_title, query and the subtitle_*
    columns. The row itself is kept as the record's raw payload so embedded
    transcript columns stay reachable.
    """
    try:
        fh = open(path, newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise FileUnreadable(f"cannot read {path}: {exc}") from exc
    csv.field_size_limit(min(sys.maxsize, 2**31 - 1))
    reader = csv.DictReader(fh)
    try:
        header = reader.fieldnames
    except (csv.Error, UnicodeDecodeError) as exc:
        fh.close()
        raise FileUnreadable(f"cannot parse {path}: {exc}") from exc
    if not header or "id" not in header:
        fh.close()
        raise HeaderMissing(f"{path}: no 'id' column in header")
    return _iter_csv(fh, reader, str(path), query)


def _iter_csv(fh, reader: csv.DictReader, source: str, query: str) -> Iterator[PostRecord | ItemError]:
    with fh:
        for row_number, row in enumerate(reader, start=1):
            row = {k: (v if v is not None else "") for k, v in row.items() if k is not None}
            raw = RawCapture(row_number, row, source)
            post_id = row.get("id", "").strip()
            if not post_id:
                yield ItemError(row_number, ErrorKind.MissingId, "empty id column", source)
                continue
            music_title = row.get("music_title", "")
            yield PostRecord(
                id=post_id,
                author=row.get("author", ""),
                description=row.get("body", ""),
                hashtags=merge_hashtags(re.split(r"[,\s]+", row.get("hashtags", ""))),
                created_at=parse_csv_timestamp(row.get("timestamp", "")),
                metrics={name: _count(row.get(name) or 0) for name in METRIC_NAMES},
                music={"music_id": "", "title": music_title, "original": False} if music_title else None,
                subtitle_descriptors=_csv_descriptors(row),
                query=query or row.get("query", ""),
                raw=raw,
            )


def read_posts(path, query: str = "") -> Iterator[PostRecord | ItemError]:
    """Dispatch on file extension: ``.csv`` is read as 4CAT CSV, anything else as NDJSON."""
    if Path(path).suffix.lower() == ".csv":
        return read_4cat_csv(path, query)
    return read_ndjson(path, query)


def dedup_posts(posts: Iterable[PostRecord]) -> tuple[list[PostRecord], int]:
    """Keep the first sighting of every post id. Returns (kept, dropped_count)."""
    seen: set[str] = set()
    kept: list[PostRecord] = []
    dropped = 0
    for post in posts:
        if post.id in seen:
            dropped += 1
            continue
        seen.add(post.id)
        kept.append(post)
    return kept, dropped
