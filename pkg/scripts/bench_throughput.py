"""Time ``subtext run --offline`` over warm caches of increasing size."""

import argparse
import json
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

from subtext.synthetic import build_fixture


@dataclass
class BenchConfig:
    sizes: tuple[int, ...] = (100, 300, 1000, 3000)
    cues_per_track: int = 5
    repeats: int = 3
    seed: int = 0


def time_run(fx, out: Path) -> float:
    cmd = [sys.executable, "-m", "subtext.cli", "run", *fx.cli_inputs(), "--offline",
           "--cache-dir", str(fx.cache_dir), "--out", str(out)]
    t0 = time.perf_counter()
    proc = subprocess.run(cmd, capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    if proc.returncode != 0:
        raise SystemExit(f"run failed ({proc.returncode}): {proc.stderr}")
    return elapsed


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=lambda s: tuple(int(x) for x in s.split(",")), default=BenchConfig.sizes)
    ap.add_argument("--cues", type=int, default=BenchConfig.cues_per_track)
    ap.add_argument("--repeats", type=int, default=BenchConfig.repeats)
    args = ap.parse_args(argv)
    cfg = BenchConfig(args.sizes, args.cues, args.repeats)

    rows = []
    with tempfile.TemporaryDirectory() as tmp:
        for n in cfg.sizes:
            fx = build_fixture(Path(tmp) / f"n{n}", {"storytime": n}, seed=cfg.seed, cues_per_track=cfg.cues_per_track)
            times = [time_run(fx, Path(tmp) / f"out{n}_{r}") for r in range(cfg.repeats)]
            best = min(times)
            rows.append({"posts": n, "best_s": round(best, 3), "posts_per_s": round(n / best, 1)})
            print(f"{n:>6} posts  best {best:6.3f}s  {n / best:8.1f} posts/s", file=sys.stderr)
    print(json.dumps(rows, indent=2))


if __name__ == "__main__":
    main()
