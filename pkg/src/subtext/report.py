"""Speech coverage by query and speech length / vocabulary statistics."""

from __future__ import annotations

import io
import json
import math
import unicodedata
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence
from xml.sax.saxutils import escape

from subtext.errors import PathUnwritable
from subtext.exporter import LFWriter, Status, Transcript
from subtext.fetcher import FailureKind
from subtext.ingest import PostRecord

FETCHED_STATUSES = frozenset({Status.Ok, Status.ParseFailed})


@dataclass
class CoverageRow:
    query: str
    total_items: int = 0
    with_descriptor: int = 0
    fetched_ok: int = 0
    with_speech: int = 0
    expired: int = 0
    fetch_failed: int = 0
    descriptor_rate: float = 0.0
    speech_rate: float = 0.0
    degenerate: bool = False


@dataclass
class CoverageReport:
    rows: list[CoverageRow] = field(default_factory=list)

    def row(self, query: str) -> CoverageRow:
        for r in self.rows:
            if r.query == query:
                return r
        raise KeyError(query)


def _finish_rates(row: CoverageRow) -> None:
    if row.total_items == 0:
        row.degenerate = True
        row.descriptor_rate = row.speech_rate = 0.0
    else:
        row.descriptor_rate = row.with_descriptor / row.total_items
        row.speech_rate = row.with_speech / row.total_items


def coverage_by_query(posts: Iterable[PostRecord], transcripts: Mapping[str, Transcript]) -> CoverageReport:
    """Per-query funnel: items, items with a subtitle descriptor, fetched tracks, nonempty speech."""
    rows: dict[str, CoverageRow] = {}
    for post in posts:
        row = rows.get(post.query)
        if row is None:
            row = rows[post.query] = CoverageRow(post.query)
        row.total_items += 1
        if post.subtitle_descriptors:
            row.with_descriptor += 1
        t = transcripts.get(post.id)
        if t is None:
            continue
        if t.status in FETCHED_STATUSES:
            row.fetched_ok += 1
        if t.has_speech:
            row.with_speech += 1
        if t.status is Status.FetchFailed:
            row.fetch_failed += 1
            if t.failure is FailureKind.Expired:
                row.expired += 1
    for row in rows.values():
        _finish_rates(row)
    return CoverageReport(list(rows.values()))


@dataclass
class LengthStats:
    n: int = 0
    word_count_min: int | None = None
    word_count_max: int | None = None
    word_count_mean: float | None = None
    word_count_median: int | None = None
    word_count_p90: int | None = None
    speech_duration_mean_s: float | None = None
    type_count: int = 0
    token_count: int = 0
    top_terms: list[tuple[str, int]] = field(default_factory=list)
    word_counts: list[int] = field(default_factory=list)

    @property
    def degenerate(self) -> bool:
        return self.n == 0


def _strip_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def tokenize(text: str) -> list[str]:
    """Whitespace split, lowercase, trim surrounding punctuation, drop empties."""
    out = []
    for raw in text.split():
        token = _strip_punct(raw.lower())
        if token:
            out.append(token)
    return out


def lower_median(sorted_values: Sequence[int]) -> int:
    return sorted_values[(len(sorted_values) - 1) // 2]


def nearest_rank(sorted_values: Sequence[int], pct: float) -> int:
    rank = max(1, math.ceil(pct / 100 * len(sorted_values)))
    return sorted_values[rank - 1]


def speech_stats(
    transcripts: Iterable[Transcript], k: int = 20, stopwords: Iterable[str] | None = None
) -> LengthStats:
    """Length and vocabulary statistics over Ok transcripts with nonempty text."""
    if k < 1:
        raise ValueError("k must be positive")
    stop = {w.lower() for w in stopwords} if stopwords else set()
    counts: list[int] = []
    durations = []
    vocab: Counter[str] = Counter()
    for t in transcripts:
        if not t.has_speech:
            continue
        counts.append(t.word_count)
        durations.append(t.speech_duration_s)
        vocab.update(tokenize(t.text))
    if not counts:
        return LengthStats()
    counts.sort()
    n = len(counts)
    top = sorted(((term, c) for term, c in vocab.items() if term not in stop), key=lambda tc: (-tc[1], tc[0]))
    return LengthStats(
        n=n,
        word_count_min=counts[0],
        word_count_max=counts[-1],
        word_count_mean=sum(counts) / n,
        word_count_median=lower_median(counts),
        word_count_p90=nearest_rank(counts, 90),
        speech_duration_mean_s=float(sum(durations) / n),
        type_count=len(vocab),
        token_count=sum(vocab.values()),
        top_terms=top[:k],
        word_counts=counts,
    )


# Rendering

COVERAGE_COLUMNS = tuple(f.name for f in fields(CoverageRow))


def coverage_to_json(report: CoverageReport) -> str:
    return json.dumps({"rows": [asdict(r) for r in report.rows]}, indent=2, ensure_ascii=False) + "\n"


def coverage_from_json(text: str) -> CoverageReport:
    return CoverageReport([CoverageRow(**r) for r in json.loads(text)["rows"]])


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return "" if value is None else str(value)


def coverage_to_csv(report: CoverageReport) -> str:
    buf = io.StringIO()
    w = LFWriter(buf)
    w.writerow(COVERAGE_COLUMNS)
    for r in report.rows:
        w.writerow(_cell(getattr(r, c)) for c in COVERAGE_COLUMNS)
    return buf.getvalue()


def stats_to_json(stats: LengthStats) -> str:
    data = asdict(stats)
    data["top_terms"] = [[term, count] for term, count in stats.top_terms]
    data["degenerate"] = stats.degenerate
    return json.dumps(data, indent=2, ensure_ascii=False) + "\n"


def stats_from_json(text: str) -> LengthStats:
    data = json.loads(text)
    data.pop("degenerate", None)
    data["top_terms"] = [(term, count) for term, count in data["top_terms"]]
    return LengthStats(**data)


STATS_SCALARS = (
    "n", "word_count_min", "word_count_max", "word_count_mean", "word_count_median",
    "word_count_p90", "speech_duration_mean_s", "type_count", "token_count",
)


def stats_to_csv(stats: LengthStats) -> str:
    """Long format: ``metric,key,value``; top terms use metric ``top_term``."""
    buf = io.StringIO()
    w = LFWriter(buf)
    w.writerow(("metric", "key", "value"))
    for name in STATS_SCALARS:
        w.writerow((name, "", _cell(getattr(stats, name))))
    for term, count in stats.top_terms:
        w.writerow(("top_term", term, count))
    return buf.getvalue()


def histogram(values: Sequence[int], bins: int = 10) -> tuple[float, float, list[int]]:
    """Equal-width histogram over [min, max]. Returns (low, bin_width, counts)."""
    if not values:
        return 0.0, 1.0, [0] * bins
    low, high = min(values), max(values)
    width = (high - low) / bins if high > low else 1.0
    counts = [0] * bins
    for v in values:
        counts[min(int((v - low) / width), bins - 1)] += 1
    return float(low), width, counts


_SVG_HEAD = '<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">\n'


def coverage_svg(report: CoverageReport) -> str:
    label_w, plot_w, bar_h, gap, top = 180, 400, 22, 8, 30
    height = top + len(report.rows) * (bar_h + gap) + 10
    width = label_w + plot_w + 70
    out = [_SVG_HEAD.format(w=width, h=height)]
    out.append('<text x="10" y="18" font-weight="bold">Share of items with speech, by query</text>\n')
    for i, r in enumerate(report.rows):
        y = top + i * (bar_h + gap)
        bar_w = r.speech_rate * plot_w
        out.append(f'<text x="{label_w - 6}" y="{y + bar_h * 0.7:.1f}" text-anchor="end">{escape(r.query or "(no query)")}</text>\n')
        out.append(f'<rect class="bar" x="{label_w}" y="{y}" width="{bar_w:.2f}" height="{bar_h}" fill="#4c78a8"/>\n')
        out.append(f'<text x="{label_w + bar_w + 4:.2f}" y="{y + bar_h * 0.7:.1f}">{r.speech_rate * 100:.1f}% ({r.with_speech}/{r.total_items})</text>\n')
    out.append("</svg>\n")
    return "".join(out)


def stats_svg(stats: LengthStats, bins: int = 10) -> str:
    plot_w, plot_h, left, top = 500, 200, 50, 30
    width, height = left + plot_w + 20, top + plot_h + 40
    out = [_SVG_HEAD.format(w=width, h=height)]
    out.append('<text x="10" y="18" font-weight="bold">Transcript length (words)</text>\n')
    if stats.n == 0:
        out.append(f'<text x="{left}" y="{top + plot_h // 2}">no transcripts with speech</text>\n')
        out.append("</svg>\n")
        return "".join(out)
    low, width_bin, counts = histogram(stats.word_counts, bins)
    peak = max(counts)
    bar_w = plot_w / bins
    for i, c in enumerate(counts):
        h = plot_h * c / peak
        x = left + i * bar_w
        out.append(f'<rect class="bar" x="{x:.2f}" y="{top + plot_h - h:.2f}" width="{bar_w - 2:.2f}" height="{h:.2f}" fill="#4c78a8"><title>{low + i * width_bin:.1f}-{low + (i + 1) * width_bin:.1f}: {c}</title></rect>\n')
    out.append(f'<text x="{left}" y="{top + plot_h + 16}">{low:.0f}</text>\n')
    out.append(f'<text x="{left + plot_w}" y="{top + plot_h + 16}" text-anchor="end">{low + bins * width_bin:.0f}</text>\n')
    out.append("</svg>\n")
    return "".join(out)


_RENDERERS = {
    (CoverageReport, "csv"): coverage_to_csv,
    (CoverageReport, "json"): coverage_to_json,
    (CoverageReport, "svg"): coverage_svg,
    (LengthStats, "csv"): stats_to_csv,
    (LengthStats, "json"): stats_to_json,
    (LengthStats, "svg"): stats_svg,
}


def render_report(report: CoverageReport | LengthStats, fmt: str, path) -> Path:
    try:
        render = _RENDERERS[(type(report), fmt)]
    except KeyError:
        raise ValueError(f"cannot render {type(report).__name__} as {fmt!r}") from None
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(render(report))
    except OSError as exc:
        raise PathUnwritable(f"cannot write {path}: {exc}") from exc
    return path


def write_reports(coverage: CoverageReport, stats: LengthStats, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    for fmt in ("csv", "json", "svg"):
        written.append(render_report(coverage, fmt, out_dir / f"coverage.{fmt}"))
        written.append(render_report(stats, fmt, out_dir / f"speech_stats.{fmt}"))
    return written
