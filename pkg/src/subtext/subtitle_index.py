"""Locate subtitle tracks in a TikTok item payload and pick one to fetch."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence
from urllib.parse import urlsplit


class SourceKind(str, enum.Enum):
    AutomaticSpeech = "asr"
    MachineTranslation = "mt"
    CreatorCaption = "creator_caption"
    Unknown = "unknown"


_SOURCE_TABLE = {
    "asr": SourceKind.AutomaticSpeech,
    "mt": SourceKind.MachineTranslation,
    "creator_caption": SourceKind.CreatorCaption,
}

# Lower rank wins during selection.
_SOURCE_RANK = {
    SourceKind.CreatorCaption: 0,
    SourceKind.AutomaticSpeech: 1,
    SourceKind.MachineTranslation: 2,
    SourceKind.Unknown: 3,
}


def classify_source(tag: Any) -> SourceKind:
    if not isinstance(tag, str):
        return SourceKind.Unknown
    return _SOURCE_TABLE.get(tag.strip().lower(), SourceKind.Unknown)


@dataclass(frozen=True)
class SubtitleDescriptor:
    language: str
    format: str
    source: SourceKind
    url: str
    url_key: str = ""
    size_bytes: int | None = None

    @property
    def is_webvtt(self) -> bool:
        return self.format.strip().lower() == "webvtt"


# Field aliases inside one `subtitleInfos` entry, probed in order.
# Matching is case-insensitive.
DESCRIPTOR_FIELDS = {
    "language": ("LanguageCodeName", "language", "lang", "languageCode"),
    "url": ("Url", "url"),
    "format": ("Format", "format"),
    "source": ("Source", "source"),
    "url_key": ("UrlKey", "VideoSubtitleID", "urlKey"),
    "size": ("Size", "size"),
}


def _lookup(entry: Mapping[str, Any], field: str) -> Any:
    lowered = {k.lower(): v for k, v in entry.items() if isinstance(k, str)}
    for alias in DESCRIPTOR_FIELDS[field]:
        if alias.lower() in lowered:
            value = lowered[alias.lower()]
            if value is not None and value != "":
                return value
    return None


def _as_text(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return ""
    if isinstance(value, (int, float, str)):
        return str(value).strip()
    return ""


def _is_absolute_url(url: str) -> bool:
    parts = urlsplit(url)
    return bool(parts.scheme) and bool(parts.netloc)


def parse_descriptor(entry: Any) -> SubtitleDescriptor | None:
    """Build a descriptor from one payload entry, or None when it is unusable."""
    if not isinstance(entry, Mapping):
        return None
    language = _as_text(_lookup(entry, "language")).lower()
    url = _as_text(_lookup(entry, "url"))
    if not language or not url or not _is_absolute_url(url):
        return None
    size_raw = _lookup(entry, "size")
    size: int | None
    try:
        size = int(size_raw) if size_raw is not None and not isinstance(size_raw, bool) else None
    except (TypeError, ValueError):
        size = None
    if size is not None and size < 0:
        size = None
    return SubtitleDescriptor(
        language=language,
        format=_as_text(_lookup(entry, "format")) or "webvtt",
        source=classify_source(_lookup(entry, "source")),
        url=url,
        url_key=_as_text(_lookup(entry, "url_key")),
        size_bytes=size,
    )


def subtitle_entries(item: Mapping[str, Any]) -> list:
    video = item.get("video") if isinstance(item, Mapping) else None
    if not isinstance(video, Mapping):
        return []
    infos = video.get("subtitleInfos")
    return list(infos) if isinstance(infos, list) else []


def extract_descriptors_counted(item: Mapping[str, Any]) -> tuple[list[SubtitleDescriptor], int]:
    """Return (descriptors, skipped) for the entries under ``video.subtitleInfos``."""
    found: list[SubtitleDescriptor] = []
    skipped = 0
    for entry in subtitle_entries(item):
        descriptor = parse_descriptor(entry)
        if descriptor is None:
            skipped += 1
        else:
            found.append(descriptor)
    return found, skipped


def extract_descriptors(item: Mapping[str, Any]) -> list[SubtitleDescriptor]:
    return extract_descriptors_counted(item)[0]


def language_matches(pref: str, language: str) -> bool:
    # "en" matches "en", "en-us" and "eng-us"
    pref = pref.strip().lower()
    return bool(pref) and language.lower().startswith(pref)


def _pref_rank(language: str, prefs: Sequence[str]) -> int:
    if not prefs:
        return 0
    for i, pref in enumerate(prefs):
        if language_matches(pref, language):
            return i
    return len(prefs)


def selection_key(descriptor: SubtitleDescriptor, prefs: Sequence[str]) -> tuple:
    return (
        _pref_rank(descriptor.language, prefs),
        _SOURCE_RANK[descriptor.source],
        descriptor.language,
        descriptor.url_key,
        descriptor.url,
    )


def select_track(
    descriptors: Iterable[SubtitleDescriptor], prefs: Sequence[str] = ()
) -> SubtitleDescriptor | None:
    """Pick the best track: language preference, then source kind, then a stable tie-break."""
    prefs = [p.strip().lower() for p in prefs if p.strip()]
    best = None
    best_key = None
    for d in descriptors:
        key = selection_key(d, prefs)
        if best_key is None or key < best_key:
            best, best_key = d, key
    return best


def safe_language(language: str) -> str:
    return re.sub(r"[^a-z0-9_-]", "-", language.lower())
