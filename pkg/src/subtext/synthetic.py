"""Synthetic capture files and subtitle caches for tests and benchmarks.

Every generator takes an explicit ``random.Random`` so fixtures are
reproducible. The planted ground truth is returned alongside the files so
callers can check pipeline output against it.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from subtext.fetcher import Cache, cache_key
from subtext.subtitle_index import parse_descriptor

WORDS = (
    "so this happened to me last week and honestly i still cannot believe it "
    "my friend called me at midnight because her car broke down on the highway "
    "we waited for hours until someone finally stopped to help us out"
).split()


def subtitle_info(language: str, url: str, source: str = "ASR", fmt: str = "webvtt",
                  url_key: str = "", size: int = 1024) -> dict:
    info = {
        "LanguageCodeName": language,
        "Url": url,
        "Format": fmt,
        "Source": source,
        "Size": size,
        "UrlExpire": "1700000000",
    }
    if url_key:
        info["UrlKey"] = url_key
    return info


def tiktok_item(post_id: str, desc: str = "", author: str = "creator", subtitles=(),
                plays: int = 0, likes: int = 0, comments: int = 0, shares: int = 0,
                create_time: int = 1700000000) -> dict:
    item = {
        "id": post_id,
        "desc": desc,
        "createTime": create_time,
        "author": {"uniqueId": author, "nickname": author.title()},
        "stats": {"playCount": plays, "diggCount": likes, "commentCount": comments, "shareCount": shares},
        "music": {"id": f"m{post_id}", "title": f"original sound - {author}", "original": True},
        "video": {"id": post_id, "duration": 30},
    }
    if subtitles:
        item["video"]["subtitleInfos"] = list(subtitles)
    return item


def zeeschuimer_line(item: dict) -> dict:
    """Wrap an item the way Zeeschuimer exports it."""
    return {
        "id": item["id"],
        "item_id": item["id"],
        "source_platform": "tiktok.com",
        "source_platform_url": "https://www.tiktok.com/tag/storytime",
        "timestamp_collected": 1700000000000,
        "data": item,
    }


def fmt_ts(ms: int) -> str:
    h, rem = divmod(ms, 3_600_000)
    m, rem = divmod(rem, 60_000)
    s, ms = divmod(rem, 1000)
    return f"{h:02d}:{m:02d}:{s:02d}.{ms:03d}"


def vtt_bytes(cues) -> bytes:
    """Serialize [(start_ms, end_ms, text)] as WebVTT."""
    parts = ["WEBVTT", ""]
    for start, end, text in cues:
        parts += [f"{fmt_ts(start)} --> {fmt_ts(end)}", text, ""]
    return "\n".join(parts).encode("utf-8")


def random_cues(rng: random.Random, n: int, max_words: int = 8):
    t = 0
    cues = []
    for _ in range(n):
        start = t + rng.randint(0, 400)
        end = start + rng.randint(300, 3000)
        words = rng.randint(1, max_words)
        cues.append((start, end, " ".join(rng.choice(WORDS) for _ in range(words))))
        t = end
    return cues


@dataclass
class PlantedPost:
    post_id: str
    query: str
    has_descriptor: bool
    cached: bool
    malformed_vtt: bool
    has_speech: bool
    word_count: int = 0
    duration_ms: int = 0
    text: str = ""


@dataclass
class Fixture:
    inputs: list[tuple[Path, str]]
    cache_dir: Path
    planted: list[PlantedPost] = field(default_factory=list)
    malformed_lines: int = 0
    total_lines: int = 0

    def cli_inputs(self) -> list[str]:
        argv = []
        for path, query in self.inputs:
            argv += ["--input", str(path), "--query", query]
        return argv


def build_fixture(root: Path, queries: dict[str, int], seed: int = 0, *,
                  speech_rate: dict[str, float] | None = None,
                  descriptor_rate: float = 1.0,
                  cached: bool = True,
                  malformed_line_rate: float = 0.0,
                  malformed_vtt_rate: float = 0.0,
                  cues_per_track: int = 5) -> Fixture:
    """Write one NDJSON capture per query plus a warm cache under ``root``.

    Speech presence is planted exactly: ``round(n * speech_rate[q])`` posts of
    query ``q`` carry a track with cues, the rest carry an empty track (or no
    descriptor, per ``descriptor_rate``). Malformed lines and VTT files are
    planted at exact counts too.
    """
    rng = random.Random(seed)
    root = Path(root)
    cache_dir = root / "cache"
    cache = Cache(cache_dir)
    fixture = Fixture([], cache_dir)
    speech_rate = speech_rate or {}
    serial = 7_000_000_000_000_000_000
    for query, n in queries.items():
        path = root / f"{query}.ndjson"
        n_speech = round(n * speech_rate.get(query, 1.0))
        n_desc = max(n_speech, round(n * descriptor_rate))
        n_bad_vtt = round(n_speech * malformed_vtt_rate)
        n_bad_lines = round(n * malformed_line_rate)
        lines = []
        for i in range(n):
            serial += rng.randint(1, 1000)
            post_id = str(serial)
            has_desc = i < n_desc
            speech = i < n_speech
            bad_vtt = speech and i < n_bad_vtt
            subs = []
            planted = PlantedPost(post_id, query, has_desc, cached and has_desc, bad_vtt, speech and not bad_vtt)
            if has_desc:
                info = subtitle_info("eng-US", f"https://v16.tiktokcdn.example/sub/{post_id}.vtt?x-expires=1&sig={rng.random()}",
                                     url_key=f"v0201{post_id}")
                subs.append(info)
                if cached:
                    descriptor = parse_descriptor(info)
                    if bad_vtt:
                        data = b"<html>expired</html>"
                    elif speech:
                        cues = random_cues(rng, cues_per_track)
                        data = vtt_bytes(cues)
                        planted.text = " ".join(c[2] for c in cues)
                        planted.word_count = len(planted.text.split())
                        planted.duration_ms = sum(e - s for s, e, _ in cues)
                    else:
                        data = b"WEBVTT\n\n"
                    key = cache_key(descriptor, post_id)
                    cache.write(key, data, {"url": info["Url"], "fetched_at": 1700000000,
                                            "http_status": 200, "content_length": len(data)})
            item = tiktok_item(post_id, desc=f"part {i} #{query} #fyp", author=f"user{rng.randint(1, 50)}",
                               subtitles=subs, plays=rng.randint(0, 10**6), likes=rng.randint(0, 10**5))
            lines.append(json.dumps(zeeschuimer_line(item), ensure_ascii=False))
            fixture.planted.append(planted)
        for j in range(n_bad_lines):
            lines.insert(rng.randint(0, len(lines)), '{"id": "broken' + str(j))
        fixture.malformed_lines += n_bad_lines
        fixture.total_lines += len(lines)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        fixture.inputs.append((path, query))
    return fixture
