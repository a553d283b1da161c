"""Transcript assembly and the three file outputs: embedded CSV, text corpus, cue table."""

from __future__ import annotations

import csv
import enum
import io
import re
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from subtext.errors import PathUnwritable
from subtext.fetcher import FailureKind, FetchError, SubtitlePayload
from subtext.ingest import PostRecord, format_timestamp
from subtext.subtitle_index import SourceKind, SubtitleDescriptor
from subtext.vtt import CueTrack, NotVtt, format_seconds, normalize_track, speech_duration, track_text


class Status(str, enum.Enum):
    Ok = "ok"
    NoDescriptor = "no_descriptor"
    FetchFailed = "fetch_failed"
    UnsupportedFormat = "unsupported_format"
    ParseFailed = "parse_failed"


@dataclass
class Transcript:
    post_id: str
    status: Status
    language: str = ""
    source: SourceKind = SourceKind.Unknown
    text: str = ""
    word_count: int = 0
    cue_count: int = 0
    speech_duration_s: Fraction = Fraction(0)
    failure: FailureKind | None = None
    fetched_at: int = 0
    cache_hit: bool = False
    track: CueTrack | None = field(default=None, repr=False, compare=False)

    @property
    def status_label(self) -> str:
        if self.status is Status.FetchFailed and self.failure is not None:
            return f"{self.status.value}:{self.failure.value}"
        return self.status.value

    @property
    def has_speech(self) -> bool:
        return self.status is Status.Ok and self.text != ""


def build_transcript(
    post: PostRecord,
    selected: SubtitleDescriptor | None,
    payload: SubtitlePayload | FetchError | None = None,
    track: CueTrack | NotVtt | None = None,
) -> Transcript:
    """Fold the outcome of every pipeline stage for one post into a Transcript."""
    if selected is None:
        return Transcript(post.id, Status.NoDescriptor)
    base = dict(post_id=post.id, language=selected.language, source=selected.source)
    if not selected.is_webvtt:
        return Transcript(status=Status.UnsupportedFormat, **base)
    if isinstance(payload, FetchError) or payload is None:
        kind = payload.kind if payload is not None else FailureKind.OfflineMiss
        return Transcript(status=Status.FetchFailed, failure=kind, **base)
    provenance = dict(fetched_at=payload.fetched_at, cache_hit=payload.cache_hit)
    if isinstance(track, NotVtt) or track is None:
        return Transcript(status=Status.ParseFailed, **base, **provenance)
    track = normalize_track(track)
    text = track_text(track)
    return Transcript(
        status=Status.Ok,
        text=text,
        word_count=len(text.split()),
        cue_count=len(track.cues),
        speech_duration_s=speech_duration(track),
        track=track,
        **base,
        **provenance,
    )


BASE_COLUMNS = (
    "id", "author", "body", "timestamp", "hashtags",
    "plays", "likes", "comments", "shares", "music_title", "query",
)
SUBTITLE_COLUMNS = (
    "subtitle_status", "subtitle_language", "subtitle_source", "subtitle_text",
    "subtitle_word_count", "subtitle_duration_s", "subtitle_cue_count",
)
CUE_COLUMNS = ("post_id", "cue_index", "start_s", "end_s", "text")

EMBED_MODES = ("embed_all", "speech_only")
CORPUS_LAYOUTS = ("per_post_files", "single_file_lines")


@contextmanager
def _open_for_write(path: Path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fh = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise PathUnwritable(f"cannot write {path}: {exc}") from exc
    with fh:
        try:
            yield fh
        except OSError as exc:
            raise PathUnwritable(f"cannot write {path}: {exc}") from exc


class LFWriter:
    """RFC-4180 rows terminated by LF.

    The stdlib writer only quotes characters that appear in its line
    terminator, so a bare CR would go out unquoted with ``lineterminator="\\n"``.
    Rows are formatted with CRLF (quoting both) and the terminator swapped.
    """

    def __init__(self, fh):
        self._fh = fh
        self._buf = io.StringIO()
        self._csv = csv.writer(self._buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)

    def writerow(self, row) -> None:
        self._buf.seek(0)
        self._buf.truncate()
        self._csv.writerow(row)
        self._fh.write(self._buf.getvalue()[:-2] + "\n")


def _subtitle_cells(t: Transcript | None) -> list[str]:
    if t is None:
        return [""] * len(SUBTITLE_COLUMNS)
    ok = t.status is Status.Ok
    return [
        t.status_label,
        t.language,
        t.source.value if t.language else "",
        t.text,
        str(t.word_count) if ok else "",
        format_seconds(t.speech_duration_s) if ok else "",
        str(t.cue_count) if ok else "",
    ]


def post_row(post: PostRecord) -> list[str]:
    return [
        post.id,
        post.author,
        post.description,
        format_timestamp(post.created_at),
        " ".join(post.hashtags),
        *(str(post.metrics.get(k, 0)) for k in ("plays", "likes", "comments", "shares")),
        post.music["title"] if post.music else "",
        post.query,
    ]


def embed_csv(
    posts: Iterable[PostRecord],
    transcripts: Mapping[str, Transcript],
    path,
    mode: str = "embed_all",
) -> int:
    """Write posts with subtitle columns appended. Returns the number of data rows."""
    if mode not in EMBED_MODES:
        raise ValueError(f"unknown embed mode {mode!r}")
    rows = 0
    with _open_for_write(path) as fh:
        w = LFWriter(fh)
        w.writerow(BASE_COLUMNS + SUBTITLE_COLUMNS)
        for post in posts:
            t = transcripts.get(post.id)
            if mode == "speech_only" and (t is None or not t.has_speech):
                continue
            w.writerow(post_row(post) + _subtitle_cells(t))
            rows += 1
    return rows


_FILENAME_UNSAFE = re.compile(r"[^\w.-]")


def corpus_line(text: str) -> str:
    return " ".join(text.splitlines())


def write_corpus(transcripts: Iterable[Transcript], directory, layout: str = "per_post_files") -> int:
    """Write the raw text corpus. Only Ok transcripts with text are included.

    Returns the number of files written.
    """
    if layout not in CORPUS_LAYOUTS:
        raise ValueError(f"unknown corpus layout {layout!r}")
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PathUnwritable(f"cannot create {directory}: {exc}") from exc
    selected = [t for t in transcripts if t.has_speech]
    if layout == "per_post_files":
        for t in selected:
            with _open_for_write(directory / f"{_FILENAME_UNSAFE.sub('_', t.post_id)}.txt") as fh:
                fh.write(t.text.rstrip("\n") + "\n")
        return len(selected)
    with _open_for_write(directory / "corpus.txt") as fh:
        for t in selected:
            fh.write(corpus_line(t.text) + "\n")
    with _open_for_write(directory / "corpus.index.csv") as fh:
        w = LFWriter(fh)
        w.writerow(("line", "post_id"))
        for line_no, t in enumerate(selected, start=1):
            w.writerow((line_no, t.post_id))
    return 2


def write_cue_csv(tracks: Mapping[str, CueTrack], path) -> int:
    """Long-format cue table, ordered by post (mapping order) then cue index."""
    rows = 0
    with _open_for_write(path) as fh:
        w = LFWriter(fh)
        w.writerow(CUE_COLUMNS)
        for post_id, track in tracks.items():
            for i, cue in enumerate(track.cues):
                w.writerow((post_id, i, format_seconds(cue.start_s), format_seconds(cue.end_s), cue.text))
                rows += 1
    return rows


def tracks_of(transcripts: Sequence[Transcript]) -> dict[str, CueTrack]:
    return {t.post_id: t.track for t in transcripts if t.status is Status.Ok and t.track is not None}
