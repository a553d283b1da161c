import csv
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from subtext.errors import PathUnwritable
from subtext.exporter import (
    BASE_COLUMNS,
    CUE_COLUMNS,
    SUBTITLE_COLUMNS,
    Status,
    Transcript,
    build_transcript,
    embed_csv,
    write_corpus,
    write_cue_csv,
)
from subtext.fetcher import Expired, FailureKind, SubtitlePayload
from subtext.ingest import PostRecord, read_4cat_csv
from subtext.subtitle_index import SourceKind, SubtitleDescriptor
from subtext.vtt import Cue, CueTrack, NotVtt

D = SubtitleDescriptor("eng-us", "webvtt", SourceKind.AutomaticSpeech, "https://cdn.example/a.vtt")


def payload(d=D):
    return SubtitlePayload(d, b"WEBVTT\n", fetched_at=100, cache_hit=True)


def track(*cues):
    return CueTrack(tuple(Cue(Fraction(s), Fraction(e), t) for s, e, t in cues), "eng-us", SourceKind.AutomaticSpeech)


def strict_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh, strict=True))


def test_no_descriptor():
    t = build_transcript(PostRecord(id="1"), None)
    assert (t.status, t.text, t.word_count) == (Status.NoDescriptor, "", 0)
    assert t.status_label == "no_descriptor"


def test_fetch_failed_expired():
    t = build_transcript(PostRecord(id="1"), D, Expired("gone"))
    assert t.status is Status.FetchFailed and t.failure is FailureKind.Expired
    assert t.status_label == "fetch_failed:expired"


def test_unsupported_and_parse_failed():
    srt = SubtitleDescriptor("eng-us", "srt", SourceKind.AutomaticSpeech, "https://cdn.example/a.srt")
    assert build_transcript(PostRecord(id="1"), srt).status is Status.UnsupportedFormat
    t = build_transcript(PostRecord(id="1"), D, payload(), NotVtt("x"))
    assert t.status is Status.ParseFailed and t.cache_hit


def test_ok_counts_hand_computed():
    # spans 1.5 + 2.0 + 0.5 = 4.0 s, words 1 + 2 + 1 = 4
    tr = track((0, Fraction(3, 2), "hello"), (2, 4, "big world"), (Fraction(9, 2), 5, "again"))
    t = build_transcript(PostRecord(id="1"), D, payload(), tr)
    assert (t.status, t.word_count, t.cue_count, t.speech_duration_s) == (Status.Ok, 4, 3, Fraction(4))
    assert t.text == "hello big world again"
    assert (t.language, t.source, t.fetched_at) == ("eng-us", SourceKind.AutomaticSpeech, 100)


def test_silent_track_is_ok_but_empty():
    t = build_transcript(PostRecord(id="1"), D, payload(), track())
    assert t.status is Status.Ok and t.text == "" and not t.has_speech


def posts_and_transcripts():
    posts = [
        PostRecord(id="1", author="a", description="first, \"quoted\"", hashtags=["storytime", "fyp"], query="q"),
        PostRecord(id="2", author="b", description="second", query="q"),
        PostRecord(id="3", author="c", description="line\nbreak", query="q"),
    ]
    transcripts = {
        "1": build_transcript(posts[0], D, payload(), track((0, 1, "hello, \"world\""))),
        "2": build_transcript(posts[1], None),
        "3": build_transcript(posts[2], D, payload(), track((0, 2, "third one"))),
    }
    return posts, transcripts


def test_embed_all_and_speech_only(tmp_path):
    posts, ts = posts_and_transcripts()
    assert embed_csv(posts, ts, tmp_path / "all.csv", "embed_all") == 3
    rows = strict_rows(tmp_path / "all.csv")
    assert rows[0] == list(BASE_COLUMNS + SUBTITLE_COLUMNS)
    text_col = rows[0].index("subtitle_text")
    assert [r[text_col] for r in rows[1:]] == ['hello, "world"', "", "third one"]
    assert rows[2][rows[0].index("subtitle_status")] == "no_descriptor"
    assert rows[1][rows[0].index("subtitle_duration_s")] == "1.000"
    assert embed_csv(posts, ts, tmp_path / "speech.csv", "speech_only") == 2
    assert len(strict_rows(tmp_path / "speech.csv")) == 3


def test_embed_csv_unwritable(tmp_path):
    (tmp_path / "blocker").write_text("file")
    with pytest.raises(PathUnwritable):
        embed_csv([], {}, tmp_path / "blocker" / "x.csv")


cell_text = st.text(alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\x00"), max_size=30)


@settings(suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(st.tuples(st.integers(1, 10**19), cell_text, cell_text), max_size=12, unique_by=lambda t: t[0]))
def test_embed_round_trip_via_4cat_reader(tmp_path, rows):
    posts = [PostRecord(id=str(i), description=body) for i, body, _ in rows]
    ts = {str(i): Transcript(str(i), Status.Ok, "eng-us", SourceKind.AutomaticSpeech, text, len(text.split()))
          for i, _, text in rows}
    path = tmp_path / "rt.csv"
    embed_csv(posts, ts, path)
    back = list(read_4cat_csv(path))
    assert [p.id for p in back] == [p.id for p in posts]
    assert [p.raw.payload["subtitle_text"] for p in back] == [text for _, _, text in rows]
    assert [p.description for p in back] == [body for _, body, _ in rows]


def test_corpus_per_post(tmp_path):
    posts, ts = posts_and_transcripts()
    assert write_corpus(ts.values(), tmp_path / "c", "per_post_files") == 2
    assert sorted(p.name for p in (tmp_path / "c").iterdir()) == ["1.txt", "3.txt"]
    assert (tmp_path / "c" / "1.txt").read_bytes() == b'hello, "world"\n'


def test_corpus_single_file_with_newline_text(tmp_path):
    ts = [
        Transcript("a", Status.Ok, text="one\ntwo", word_count=2),
        Transcript("b", Status.NoDescriptor),
        Transcript("c", Status.Ok, text="three\r\nfour\rfive", word_count=3),
        Transcript("d", Status.Ok, text="six", word_count=1),
    ]
    assert write_corpus(ts, tmp_path, "single_file_lines") == 2
    lines = (tmp_path / "corpus.txt").read_text(encoding="utf-8").split("\n")
    assert lines[-1] == ""
    assert lines[:-1] == ["one two", "three four five", "six"]
    # index sidecar, checked against the order transcripts were enumerated in
    expected = [(str(n), t.post_id) for n, t in enumerate((t for t in ts if t.has_speech), start=1)]
    index = strict_rows(tmp_path / "corpus.index.csv")
    assert index[0] == ["line", "post_id"]
    assert [tuple(r) for r in index[1:]] == expected


def test_cue_csv(tmp_path):
    tracks = {"p1": track((0, 1, "a"), (1, Fraction(5, 2), "b, c"), (3, 4, "d")), "p0": track()}
    assert write_cue_csv(tracks, tmp_path / "cues.csv") == 3
    rows = strict_rows(tmp_path / "cues.csv")
    assert rows == [list(CUE_COLUMNS), ["p1", "0", "0.000", "1.000", "a"], ["p1", "1", "1.000", "2.500", "b, c"],
                    ["p1", "2", "3.000", "4.000", "d"]]
    assert write_cue_csv({}, tmp_path / "empty.csv") == 0
    assert strict_rows(tmp_path / "empty.csv") == [list(CUE_COLUMNS)]


def test_outputs_are_deterministic(tmp_path):
    posts, ts = posts_and_transcripts()
    for name in ("a", "b"):
        embed_csv(posts, ts, tmp_path / name / "posts.csv")
        write_corpus(ts.values(), tmp_path / name / "corpus", "single_file_lines")
    for rel in ("posts.csv", "corpus/corpus.txt", "corpus/corpus.index.csv"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
