"""Write a synthetic capture set (NDJSON per query plus a warm subtitle cache).

    python3 scripts/make_fixture.py out/fixture --query storytime=300:0.9 --query originalsound=200:0.1

Prints the ``--input/--query`` arguments to pass to ``subtext``.
"""

import argparse
import json
import shlex
from dataclasses import asdict, dataclass, field
from pathlib import Path

from subtext.synthetic import build_fixture


@dataclass
class FixtureConfig:
    root: Path
    queries: dict[str, int] = field(default_factory=lambda: {"storytime": 300})
    speech_rate: dict[str, float] = field(default_factory=dict)
    seed: int = 0
    descriptor_rate: float = 1.0
    cached: bool = True
    malformed_line_rate: float = 0.0
    malformed_vtt_rate: float = 0.0
    cues_per_track: int = 5


def parse_query(text):
    # name=count[:speech_rate]
    name, _, rest = text.partition("=")
    count, _, rate = rest.partition(":")
    return name, int(count), float(rate) if rate else 1.0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("root", type=Path)
    ap.add_argument("--query", action="append", type=parse_query, metavar="NAME=COUNT[:RATE]")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--descriptor-rate", type=float, default=1.0)
    ap.add_argument("--no-cache", action="store_true")
    ap.add_argument("--malformed-lines", type=float, default=0.0)
    ap.add_argument("--malformed-vtt", type=float, default=0.0)
    ap.add_argument("--cues", type=int, default=5)
    args = ap.parse_args(argv)

    queries = args.query or [("storytime", 300, 1.0)]
    cfg = FixtureConfig(
        root=args.root,
        queries={q: n for q, n, _ in queries},
        speech_rate={q: r for q, _, r in queries},
        seed=args.seed,
        descriptor_rate=args.descriptor_rate,
        cached=not args.no_cache,
        malformed_line_rate=args.malformed_lines,
        malformed_vtt_rate=args.malformed_vtt,
        cues_per_track=args.cues,
    )
    params = asdict(cfg)
    root = params.pop("root")
    queries = params.pop("queries")
    fx = build_fixture(root, queries, **params)
    summary = {
        "cache_dir": str(fx.cache_dir),
        "lines": fx.total_lines,
        "malformed_lines": fx.malformed_lines,
        "posts": len(fx.planted),
        "with_speech": sum(p.has_speech for p in fx.planted),
    }
    print(json.dumps(summary, indent=2))
    print(" ".join(shlex.quote(a) for a in fx.cli_inputs()), "--cache-dir", shlex.quote(str(fx.cache_dir)))


if __name__ == "__main__":
    main()
