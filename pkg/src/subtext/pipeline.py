"""Stage orchestration shared by the CLI subcommands.

Every stage after ``pull`` reads subtitles from the cache only, so running
``pull``, ``export`` and ``stats`` separately produces the same files as
``run``.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from subtext.exporter import (
    Status,
    Transcript,
    build_transcript,
    embed_csv,
    tracks_of,
    write_corpus,
    write_cue_csv,
)
from subtext.fetcher import FailureKind, Fetcher, FetchError, SubtitlePayload, load_cached
from subtext.ingest import ItemError, PostRecord, dedup_posts, item_root, read_posts
from subtext.report import coverage_by_query, speech_stats, write_reports
from subtext.subtitle_index import SubtitleDescriptor, extract_descriptors_counted, select_track
from subtext.vtt import NotVtt, parse_vtt

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InputSpec:
    path: Path
    query: str = ""


@dataclass
class Ingested:
    posts: list[PostRecord]
    errors: list[ItemError]
    duplicates: int
    items: int


def ingest_inputs(inputs: Sequence[InputSpec]) -> Ingested:
    records: list[PostRecord] = []
    errors: list[ItemError] = []
    items = 0
    for spec in inputs:
        for entry in read_posts(spec.path, spec.query):
            items += 1
            if isinstance(entry, ItemError):
                log.warning("%s:%d %s: %s", entry.source_path, entry.line_number, entry.kind.value, entry.message)
                errors.append(entry)
            else:
                records.append(entry)
    posts, dropped = dedup_posts(records)
    if dropped:
        log.info("dropped %d duplicate post(s)", dropped)
    return Ingested(posts, errors, dropped, items)


def census(ingested: Ingested) -> dict:
    """Descriptor census per query, without any network access."""
    by_query: dict[str, dict] = {}
    for post in ingested.posts:
        q = by_query.setdefault(post.query, {
            "posts": 0, "with_descriptor": 0, "descriptors": 0, "skipped_descriptors": 0,
            "languages": Counter(), "sources": Counter(), "formats": Counter(),
        })
        q["posts"] += 1
        q["with_descriptor"] += bool(post.subtitle_descriptors)
        q["descriptors"] += len(post.subtitle_descriptors)
        if post.raw is not None:
            root = item_root(post.raw.payload)
            if root is not None:
                q["skipped_descriptors"] += extract_descriptors_counted(root)[1]
        for d in post.subtitle_descriptors:
            q["languages"][d.language] += 1
            q["sources"][d.source.value] += 1
            q["formats"][d.format.lower()] += 1
    for q in by_query.values():
        for name in ("languages", "sources", "formats"):
            q[name] = dict(sorted(q[name].items()))
    return {
        "items": ingested.items,
        "posts": len(ingested.posts),
        "duplicates_dropped": ingested.duplicates,
        "item_errors": dict(sorted(Counter(e.kind.value for e in ingested.errors).items())),
        "queries": by_query,
    }


def tracks_to_fetch(
    post: PostRecord, prefs: Sequence[str], all_languages: bool = False
) -> list[SubtitleDescriptor]:
    if all_languages:
        return [d for d in post.subtitle_descriptors if d.is_webvtt]
    chosen = select_track(post.subtitle_descriptors, prefs)
    return [chosen] if chosen is not None and chosen.is_webvtt else []


@dataclass
class PullResult:
    jobs: int = 0
    fetched: int = 0
    cache_hits: int = 0
    failures: Counter = field(default_factory=Counter)

    @property
    def offline_misses(self) -> int:
        return self.failures.get(FailureKind.OfflineMiss.value, 0)


def pull(posts: Sequence[PostRecord], prefs: Sequence[str], fetcher: Fetcher,
         all_languages: bool = False) -> PullResult:
    jobs = [(d, post.id) for post in posts for d in tracks_to_fetch(post, prefs, all_languages)]
    result = PullResult(jobs=len(jobs))
    for outcome in fetcher.fetch_many(jobs):
        if isinstance(outcome, FetchError):
            result.failures[outcome.kind.value] += 1
        else:
            result.fetched += 1
            result.cache_hits += outcome.cache_hit
    return result


def transcribe(post: PostRecord, prefs: Sequence[str], cache_dir: Path) -> tuple[Transcript, int]:
    """Build one post's transcript from the cache. Returns (transcript, vtt_warning_count)."""
    selected = select_track(post.subtitle_descriptors, prefs)
    if selected is None or not selected.is_webvtt:
        return build_transcript(post, selected), 0
    payload = load_cached(selected, post.id, cache_dir)
    if not isinstance(payload, SubtitlePayload):
        return build_transcript(post, selected, payload), 0
    try:
        track = parse_vtt(payload.data, selected.language, selected.source)
    except NotVtt as exc:
        log.warning("%s: %s", post.id, exc)
        return build_transcript(post, selected, payload, exc), 0
    return build_transcript(post, selected, payload, track), len(track.warnings)


@dataclass
class Transcribed:
    transcripts: list[Transcript]
    vtt_warnings: int = 0

    @property
    def by_id(self) -> dict[str, Transcript]:
        return {t.post_id: t for t in self.transcripts}

    def status_counts(self) -> dict[str, int]:
        return dict(sorted(Counter(t.status_label for t in self.transcripts).items()))

    @property
    def offline_misses(self) -> int:
        return sum(t.failure is FailureKind.OfflineMiss for t in self.transcripts)

    @property
    def item_failures(self) -> int:
        """Per-item failures other than offline misses."""
        return sum(
            (t.status is Status.FetchFailed and t.failure is not FailureKind.OfflineMiss)
            or t.status is Status.ParseFailed
            for t in self.transcripts
        )


def transcribe_all(posts: Sequence[PostRecord], prefs: Sequence[str], cache_dir: Path) -> Transcribed:
    out = Transcribed([])
    for post in posts:
        t, warnings = transcribe(post, prefs, cache_dir)
        out.transcripts.append(t)
        out.vtt_warnings += warnings
    return out


CORPUS_DIR = "corpus"
POSTS_CSV = "posts.csv"
CUES_CSV = "cues.csv"


def export_outputs(posts: Sequence[PostRecord], transcribed: Transcribed, out_dir: Path,
                   mode: str = "embed_all", corpus_layout: str = "per_post_files") -> dict:
    out_dir = Path(out_dir)
    rows = embed_csv(posts, transcribed.by_id, out_dir / POSTS_CSV, mode)
    files = write_corpus(transcribed.transcripts, out_dir / CORPUS_DIR, corpus_layout)
    cue_rows = write_cue_csv(tracks_of(transcribed.transcripts), out_dir / CUES_CSV)
    return {"csv_rows": rows, "corpus_files": files, "cue_rows": cue_rows}


def stats_outputs(posts: Sequence[PostRecord], transcribed: Transcribed, out_dir: Path,
                  top_k: int = 20, stopwords: Sequence[str] | None = None) -> dict:
    coverage = coverage_by_query(posts, transcribed.by_id)
    stats = speech_stats(transcribed.transcripts, top_k, stopwords)
    write_reports(coverage, stats, out_dir)
    return {"queries": len(coverage.rows), "stats_n": stats.n}
