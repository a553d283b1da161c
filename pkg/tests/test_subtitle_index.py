import random

import pytest
from hypothesis import given, strategies as st

from subtext.subtitle_index import (
    SourceKind,
    SubtitleDescriptor,
    classify_source,
    extract_descriptors,
    extract_descriptors_counted,
    select_track,
)
from subtext.synthetic import subtitle_info


def desc(language, source, url="https://cdn.example/x.vtt", url_key=""):
    return SubtitleDescriptor(language, "webvtt", source, url, url_key)


def test_absent_subtitle_infos():
    assert extract_descriptors({"id": "1"}) == []
    assert extract_descriptors({"video": {}}) == []
    assert extract_descriptors({"video": {"subtitleInfos": None}}) == []


def test_two_entries_classified():
    item = {"video": {"subtitleInfos": [
        subtitle_info("eng-US", "https://cdn.example/a.vtt", "ASR"),
        subtitle_info("fra-FR", "https://cdn.example/b.vtt", "MT"),
    ]}}
    found = extract_descriptors(item)
    assert [(d.language, d.source) for d in found] == [
        ("eng-us", SourceKind.AutomaticSpeech),
        ("fra-fr", SourceKind.MachineTranslation),
    ]
    assert found[0].size_bytes == 1024


def test_entry_without_url_is_skipped():
    broken = subtitle_info("eng-US", "https://cdn.example/a.vtt")
    del broken["Url"]
    item = {"video": {"subtitleInfos": [broken, subtitle_info("deu-DE", "https://cdn.example/c.vtt")]}}
    found, skipped = extract_descriptors_counted(item)
    assert skipped == 1
    assert [d.language for d in found] == ["deu-de"]


def test_relative_url_and_non_mapping_entries_skipped():
    item = {"video": {"subtitleInfos": ["nope", {"LanguageCodeName": "eng-US", "Url": "/rel.vtt"}]}}
    assert extract_descriptors_counted(item) == ([], 2)


@pytest.mark.parametrize("tag,kind", [
    ("ASR", SourceKind.AutomaticSpeech),
    ("asr", SourceKind.AutomaticSpeech),
    ("MT ", SourceKind.MachineTranslation),
    ("creator_caption", SourceKind.CreatorCaption),
    ("", SourceKind.Unknown),
    ("LC", SourceKind.Unknown),
    (None, SourceKind.Unknown),
    (3, SourceKind.Unknown),
])
def test_classify_source(tag, kind):
    assert classify_source(tag) is kind


@given(st.text())
def test_classify_source_total(tag):
    assert classify_source(tag) in SourceKind


def test_select_empty():
    assert select_track([], ["en"]) is None
    assert select_track([], []) is None


def test_language_preference_dominates_source():
    fr_asr = desc("fra-fr", SourceKind.AutomaticSpeech)
    en_mt = desc("eng-us", SourceKind.MachineTranslation)
    assert select_track([fr_asr, en_mt], ["en"]) is en_mt


def test_source_order_without_prefs():
    mt = desc("eng-us", SourceKind.MachineTranslation)
    asr = desc("eng-us", SourceKind.AutomaticSpeech)
    assert select_track([mt, asr], []) is asr


def test_unmatched_languages_rank_after_matches():
    cc_de = desc("deu-de", SourceKind.CreatorCaption)
    mt_en = desc("en", SourceKind.MachineTranslation)
    assert select_track([cc_de, mt_en], ["en"]) is mt_en
    assert select_track([cc_de, mt_en], ["fr"]) is cc_de


LANGS = ["eng-us", "en", "fra-fr", "deu-de", "spa-es", "en-gb"]
PREF_POOL = ["en", "fr", "de", "es", "it", "eng"]


def random_descriptors(rng, n):
    return [
        SubtitleDescriptor(
            rng.choice(LANGS), "webvtt", rng.choice(list(SourceKind)),
            f"https://cdn.example/{rng.randint(0, 5)}.vtt", rng.choice(["", "k1", "k2", "k3"]),
        )
        for _ in range(n)
    ]


def oracle_first(descriptors, prefs):
    """Full sort by the selection triple, written independently of the implementation."""
    source_order = [SourceKind.CreatorCaption, SourceKind.AutomaticSpeech,
                    SourceKind.MachineTranslation, SourceKind.Unknown]

    def pref_rank(lang):
        if not prefs:
            return 0
        matches = [i for i, p in enumerate(prefs) if lang[: len(p)] == p]
        return matches[0] if matches else len(prefs)

    ordered = sorted(descriptors, key=lambda d: (pref_rank(d.language), source_order.index(d.source),
                                                 (d.language, d.url_key, d.url)))
    return ordered[0] if ordered else None


def test_select_matches_exhaustive_sort_oracle():
    rng = random.Random(11)
    for _ in range(100):
        ds = random_descriptors(rng, rng.randint(0, 8))
        prefs = rng.sample(PREF_POOL, rng.randint(0, 3))
        assert select_track(ds, prefs) == oracle_first(ds, prefs)


@given(st.randoms(use_true_random=False), st.integers(1, 10), st.lists(st.sampled_from(PREF_POOL), max_size=3))
def test_select_is_permutation_invariant_and_member(rnd, n, prefs):
    ds = random_descriptors(rnd, n)
    chosen = select_track(ds, prefs)
    assert chosen in ds
    shuffled = ds[:]
    rnd.shuffle(shuffled)
    assert select_track(shuffled, prefs) == chosen
