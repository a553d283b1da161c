"""Command line entry point.

Subcommands: inspect, pull, export, stats, run. Settings resolve as
flags > environment > config file > defaults, and the effective values are
written to the run manifest.

Exit codes: 0 ok, 1 fatal I/O or configuration error, 2 finished with
per-item errors, 3 offline cache misses occurred.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

from subtext import __version__
from subtext.errors import ConfigError, SubtextError
from subtext.fetcher import CACHE_ENV, DEFAULT_CACHE_DIR, FetchConfig, Fetcher
from subtext.pipeline import (
    InputSpec,
    census,
    export_outputs,
    ingest_inputs,
    pull,
    stats_outputs,
    transcribe_all,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


EXIT_OK, EXIT_FATAL, EXIT_ITEM_ERRORS, EXIT_OFFLINE_MISS = 0, 1, 2, 3

RATE_ENV = "SUBTEXT_RATE"
CLOCK_ENV = "SUBTEXT_FIXED_TIME"
DEFAULT_CONFIG_FILE = "subtext.toml"

CORPUS_CHOICES = {"per_post": "per_post_files", "single": "single_file_lines"}


@dataclass
class Settings:
    prefs: list[str] = field(default_factory=list)
    all_languages: bool = False
    offline: bool = False
    refetch: bool = False
    cache_dir: str = DEFAULT_CACHE_DIR
    rate: float = 2.0
    concurrency: int = 4
    retries: int = 3
    backoff_ms: int = 500
    timeout_ms: int = 10000
    mode: str = "embed_all"
    corpus: str = "per_post"
    out: str = "subtext_out"
    manifest: str | None = None
    top_k: int = 20
    stopwords: str | None = None

    def fetch_config(self) -> FetchConfig:
        return FetchConfig(
            max_concurrent=self.concurrency,
            requests_per_second=self.rate,
            max_retries=self.retries,
            backoff_base_ms=self.backoff_ms,
            timeout_ms=self.timeout_ms,
            cache_dir=Path(self.cache_dir),
            offline=self.offline,
            refetch=self.refetch,
        )

    def snapshot(self) -> dict:
        # output locations are not part of how a run behaves
        data = asdict(self)
        data.pop("out")
        data.pop("manifest")
        return data


SETTING_NAMES = {f.name for f in fields(Settings)}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_FATAL, f"{self.prog}: error: {message}\n")


class _InputAction(argparse.Action):
    def __call__(self, parser, namespace, values, option_string=None):
        inputs = list(getattr(namespace, "inputs", None) or [])
        inputs.append([values, ""])
        namespace.inputs = inputs


class _QueryAction(argparse.Action):
    def __call__(self, parser, namespace, values, option_string=None):
        inputs = getattr(namespace, "inputs", None)
        if not inputs:
            parser.error("--query must follow an --input")
        inputs[-1][1] = values


def _prefs(text: str) -> list[str]:
    return [p.strip().lower() for p in text.split(",") if p.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--input", action=_InputAction, dest="inputs", metavar="PATH",
                        help="capture file (.ndjson or 4CAT .csv); repeatable")
    common.add_argument("--query", action=_QueryAction, metavar="TAG",
                        help="collection query for the preceding --input")
    common.add_argument("--config", metavar="PATH", help=f"settings file (default: ./{DEFAULT_CONFIG_FILE} if present)")
    common.add_argument("--prefs", type=_prefs, metavar="LANGS", help="comma-separated language preferences, e.g. en,fr")
    common.add_argument("--all-languages", action="store_true", default=None, help="pull every webvtt track, not only the selected one")
    common.add_argument("--offline", action="store_true", default=None, help="never touch the network")
    common.add_argument("--refetch", action="store_true", default=None, help="ignore cached subtitle files")
    common.add_argument("--cache-dir", metavar="DIR")
    common.add_argument("--rate", type=float, metavar="RPS", help="max requests per second")
    common.add_argument("--concurrency", type=int, metavar="N")
    common.add_argument("--retries", type=int, metavar="N")
    common.add_argument("--backoff-ms", type=int, metavar="MS")
    common.add_argument("--timeout-ms", type=int, metavar="MS")
    common.add_argument("--mode", choices=("embed_all", "speech_only"))
    common.add_argument("--corpus", choices=tuple(CORPUS_CHOICES))
    common.add_argument("--out", metavar="DIR")
    common.add_argument("--manifest", metavar="PATH", help="manifest path (default: OUT/manifest.json)")
    common.add_argument("--top-k", type=int, metavar="K")
    common.add_argument("--stopwords", metavar="PATH", help="file with one stopword per line")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="subtext", description="Harvest TikTok subtitle transcripts from capture files.")
    parser.add_argument("--version", action="version", version=f"subtext {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("inspect", parents=[common], help="ingest and count subtitle descriptors, no network")
    sub.add_parser("pull", parents=[common], help="fetch selected subtitle tracks into the cache")
    sub.add_parser("export", parents=[common], help="cache -> transcripts -> csv, corpus, cue table")
    sub.add_parser("stats", parents=[common], help="coverage and speech-length reports")
    sub.add_parser("run", parents=[common], help="pull, export and stats in one go")
    return parser


def _load_config_file(path: Path | None) -> tuple[dict, list[InputSpec]]:
    if path is None:
        default = Path(DEFAULT_CONFIG_FILE)
        if not default.is_file():
            return {}, []
        path = default
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
    inputs = []
    for entry in data.pop("input", []):
        if not isinstance(entry, dict) or "path" not in entry:
            raise ConfigError(f"{path}: each [[input]] needs a path")
        inputs.append(InputSpec(Path(entry["path"]), str(entry.get("query", ""))))
    values = {}
    for key, value in data.items():
        name = key.replace("-", "_")
        if name not in SETTING_NAMES:
            raise ConfigError(f"{path}: unknown setting {key!r}")
        if name == "prefs" and isinstance(value, str):
            value = _prefs(value)
        values[name] = value
    return values, inputs


def _env_settings(environ) -> dict:
    values = {}
    if environ.get(CACHE_ENV):
        values["cache_dir"] = environ[CACHE_ENV]
    if environ.get(RATE_ENV):
        try:
            values["rate"] = float(environ[RATE_ENV])
        except ValueError:
            raise ConfigError(f"{RATE_ENV} must be a number") from None
    return values


def resolve_settings(args: argparse.Namespace, environ=os.environ) -> tuple[Settings, list[InputSpec]]:
    from_file, file_inputs = _load_config_file(Path(args.config) if args.config else None)
    merged = {**from_file, **_env_settings(environ)}
    for name in SETTING_NAMES:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    try:
        settings = Settings(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if settings.corpus not in CORPUS_CHOICES:
        raise ConfigError(f"corpus must be one of {sorted(CORPUS_CHOICES)}")
    if settings.mode not in ("embed_all", "speech_only"):
        raise ConfigError("mode must be embed_all or speech_only")
    if settings.top_k < 1:
        raise ConfigError("top_k must be positive")
    inputs = [InputSpec(Path(p), q) for p, q in (args.inputs or [])] or file_inputs
    return settings, inputs


def _iso(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _default_clock(environ=os.environ) -> Callable[[], float]:
    fixed = environ.get(CLOCK_ENV)
    if fixed:
        value = float(fixed)
        return lambda: value
    return time.time


def _read_stopwords(path: str | None) -> list[str] | None:
    if not path:
        return None
    try:
        with open(path, encoding="utf-8") as fh:
            return [line.strip() for line in fh if line.strip() and not line.startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read stopwords {path}: {exc}") from exc


def _write_json(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def execute(command: str, settings: Settings, inputs: Sequence[InputSpec],
            clock: Callable[[], float]) -> tuple[int, dict]:
    """Run one subcommand. Returns (exit_code, manifest)."""
    started = clock()
    if not inputs:
        raise ConfigError("no --input given")
    ingested = ingest_inputs(inputs)
    posts = ingested.posts
    counts: dict = {
        "items": ingested.items,
        "item_errors": len(ingested.errors),
        "item_errors_by_kind": {},
        "posts": len(posts),
        "duplicates_dropped": ingested.duplicates,
        "descriptors": sum(len(p.subtitle_descriptors) for p in posts),
        "with_descriptor": sum(bool(p.subtitle_descriptors) for p in posts),
    }
    for e in ingested.errors:
        counts["item_errors_by_kind"][e.kind.value] = counts["item_errors_by_kind"].get(e.kind.value, 0) + 1
    counts["item_errors_by_kind"] = dict(sorted(counts["item_errors_by_kind"].items()))
    item_problems = len(ingested.errors)
    offline_misses = 0

    if command == "inspect":
        print(json.dumps(census(ingested), indent=2, sort_keys=True, ensure_ascii=False))

    if command in ("pull", "run"):
        fetcher = Fetcher(settings.fetch_config(), clock=clock)
        result = pull(posts, settings.prefs, fetcher, settings.all_languages)
        counts["fetch"] = {
            "jobs": result.jobs,
            "fetched": result.fetched,
            "cache_hits": result.cache_hits,
            "failed_by_kind": dict(sorted(result.failures.items())),
        }
        if command == "pull":
            offline_misses = result.offline_misses
            item_problems += sum(result.failures.values()) - result.offline_misses

    if command in ("export", "stats", "run"):
        transcribed = transcribe_all(posts, settings.prefs, Path(settings.cache_dir))
        statuses = transcribed.status_counts()
        counts["transcripts"] = {
            "statuses": statuses,
            "fetched": sum(statuses.get(s, 0) for s in ("ok", "parse_failed")),
            "ok": statuses.get("ok", 0),
            "with_speech": sum(t.has_speech for t in transcribed.transcripts),
            "parse_failed": statuses.get("parse_failed", 0),
            "failed_by_kind": dict(sorted(Counter(
                t.failure.value for t in transcribed.transcripts if t.failure is not None
            ).items())),
            "vtt_warnings": transcribed.vtt_warnings,
        }
        offline_misses = transcribed.offline_misses
        item_problems += transcribed.item_failures
        out_dir = Path(settings.out)
        if command in ("export", "run"):
            counts["export"] = export_outputs(
                posts, transcribed, out_dir, settings.mode, CORPUS_CHOICES[settings.corpus]
            )
        if command in ("stats", "run"):
            counts["stats"] = stats_outputs(
                posts, transcribed, out_dir, settings.top_k, _read_stopwords(settings.stopwords)
            )

    if offline_misses:
        code = EXIT_OFFLINE_MISS
    elif item_problems:
        code = EXIT_ITEM_ERRORS
    else:
        code = EXIT_OK
    counts["offline_misses"] = offline_misses
    manifest = {
        "tool": "subtext",
        "tool_version": __version__,
        "command": command,
        "inputs": [{"path": str(s.path), "query": s.query} for s in inputs],
        "config": settings.snapshot(),
        "counts": counts,
        "exit_code": code,
        "started_at": _iso(started),
        "finished_at": _iso(clock()),
    }
    return code, manifest


def _manifest_path(command: str, settings: Settings) -> Path | None:
    if settings.manifest:
        return Path(settings.manifest)
    if command in ("export", "stats", "run"):
        return Path(settings.out) / "manifest.json"
    return None


def main(argv: Sequence[str] | None = None, clock: Callable[[], float] | None = None,
         environ=None) -> int:
    environ = os.environ if environ is None else environ
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        settings, inputs = resolve_settings(args, environ)
        settings.fetch_config()  # validates numeric settings
        code, manifest = execute(args.command, settings, inputs, clock or _default_clock(environ))
        path = _manifest_path(args.command, settings)
        if path is not None:
            _write_json(path, manifest)
    except (SubtextError, ValueError, OSError) as exc:
        print(f"subtext: error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    return code


if __name__ == "__main__":
    sys.exit(main())
