import json
import shutil
from pathlib import Path

import pytest

from subtext.cli import main
from subtext.synthetic import build_fixture

FIXED = lambda: 1700000000.0  # noqa: E731


@pytest.fixture(autouse=True)
def isolated_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("SUBTEXT_CACHE_DIR", raising=False)
    monkeypatch.delenv("SUBTEXT_RATE", raising=False)


def run(argv, **kw):
    return main(argv, clock=FIXED, environ=kw.pop("environ", {}))


def tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_happy_path_offline(tmp_path):
    fx = build_fixture(tmp_path / "fx", {"storytime": 20}, seed=1, speech_rate={"storytime": 0.75})
    out = tmp_path / "out"
    code = run(["run", *fx.cli_inputs(), "--offline", "--cache-dir", str(fx.cache_dir), "--out", str(out)])
    assert code == 0
    names = set(tree(out))
    assert {"posts.csv", "cues.csv", "manifest.json", "coverage.csv", "coverage.json", "coverage.svg",
            "speech_stats.csv", "speech_stats.json", "speech_stats.svg"} <= names
    assert sum(n.startswith("corpus/") for n in names) == 15


def test_offline_empty_cache_exits_3(tmp_path):
    fx = build_fixture(tmp_path / "fx", {"storytime": 5}, cached=False)
    out = tmp_path / "out"
    code = run(["run", *fx.cli_inputs(), "--offline", "--cache-dir", str(tmp_path / "empty"), "--out", str(out)])
    assert code == 3
    cov = json.loads((out / "coverage.json").read_text())
    assert [r["fetched_ok"] for r in cov["rows"]] == [0]
    assert json.loads((out / "manifest.json").read_text())["exit_code"] == 3


def recount(fx):
    """Independent tally straight from the planted fixture."""
    planted = fx.planted
    return {
        "items": fx.total_lines,
        "item_errors": fx.malformed_lines,
        "posts": len(planted),
        "with_descriptor": sum(p.has_descriptor for p in planted),
        "ok": sum(p.has_descriptor and not p.malformed_vtt for p in planted),
        "parse_failed": sum(p.malformed_vtt for p in planted),
        "with_speech": sum(p.has_speech for p in planted),
    }


def test_manifest_counts_match_recount(tmp_path):
    fx = build_fixture(tmp_path / "fx", {"storytime": 40, "sound": 30}, seed=3,
                       speech_rate={"storytime": 0.8, "sound": 0.2}, descriptor_rate=0.9,
                       malformed_line_rate=0.1, malformed_vtt_rate=0.25)
    out = tmp_path / "out"
    code = run(["run", *fx.cli_inputs(), "--offline", "--cache-dir", str(fx.cache_dir), "--out", str(out)])
    assert code == 2
    m = json.loads((out / "manifest.json").read_text())
    c, expected = m["counts"], recount(fx)
    assert c["items"] == expected["items"]
    assert c["item_errors"] == expected["item_errors"] == c["item_errors_by_kind"]["malformed_json"]
    assert c["posts"] == expected["posts"]
    assert c["with_descriptor"] == expected["with_descriptor"]
    for key in ("ok", "parse_failed", "with_speech"):
        assert c["transcripts"][key] == expected[key], key
    assert m["inputs"] == [{"path": str(p), "query": q} for p, q in fx.inputs]
    assert m["started_at"] == "2023-11-14T22:13:20Z"


def test_unknown_flag_exits_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--bogus"])
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_missing_input_file_is_fatal(tmp_path):
    assert run(["run", "--input", str(tmp_path / "nope.ndjson"), "--offline", "--out", str(tmp_path / "o")]) == 1


def test_query_without_input_exits_1():
    with pytest.raises(SystemExit) as exc:
        main(["inspect", "--query", "x"])
    assert exc.value.code == 1


def test_staged_equals_run(tmp_path):
    fx = build_fixture(tmp_path / "fx", {"storytime": 15, "sound": 10}, seed=5,
                       speech_rate={"storytime": 0.9, "sound": 0.1})
    common = [*fx.cli_inputs(), "--offline", "--cache-dir", str(fx.cache_dir)]
    assert run(["run", *common, "--out", str(tmp_path / "a")]) == 0
    assert run(["pull", *common]) == 0
    assert run(["export", *common, "--out", str(tmp_path / "b")]) == 0
    assert run(["stats", *common, "--out", str(tmp_path / "b"), "--manifest", str(tmp_path / "stats.json")]) == 0
    a, b = tree(tmp_path / "a"), tree(tmp_path / "b")
    a.pop("manifest.json")
    b.pop("manifest.json")
    assert a == b


def test_config_precedence(tmp_path):
    fx = build_fixture(tmp_path / "fx", {"storytime": 3}, seed=2)
    Path("subtext.toml").write_text(
        f'rate = 1.5\nconcurrency = 2\ncache-dir = "{tmp_path / "from_file"}"\ncorpus = "single"\n'
        f'[[input]]\npath = "{fx.inputs[0][0]}"\nquery = "storytime"\n'
    )
    out = tmp_path / "out"
    code = run(["export", "--offline", "--out", str(out), "--concurrency", "3"],
               environ={"SUBTEXT_RATE": "0.5"})
    cfg = json.loads((out / "manifest.json").read_text())["config"]
    assert (cfg["rate"], cfg["concurrency"], cfg["corpus"]) == (0.5, 3, "single")
    assert cfg["cache_dir"] == str(tmp_path / "from_file")
    assert code == 3  # the file-level cache dir is empty
    code = run(["export", "--offline", "--out", str(out)], environ={"SUBTEXT_CACHE_DIR": str(fx.cache_dir)})
    assert code == 0
    assert (out / "corpus" / "corpus.txt").exists()


def test_bad_config_key(tmp_path):
    Path("subtext.toml").write_text("colour = 'blue'\n")
    assert run(["inspect", "--input", "x.ndjson"]) == 1


def test_inspect_census(tmp_path, capsys, no_network):
    fx = build_fixture(tmp_path / "fx", {"storytime": 6}, seed=4, descriptor_rate=0.5, speech_rate={"storytime": 0.5})
    assert run(["inspect", *fx.cli_inputs()]) == 0
    census = json.loads(capsys.readouterr().out)
    q = census["queries"]["storytime"]
    assert (census["posts"], q["with_descriptor"], q["languages"]) == (6, 3, {"eng-us": 3})


def test_speech_only_and_single_corpus(tmp_path):
    fx = build_fixture(tmp_path / "fx", {"storytime": 10}, seed=6, speech_rate={"storytime": 0.3})
    out = tmp_path / "out"
    assert run(["export", *fx.cli_inputs(), "--offline", "--cache-dir", str(fx.cache_dir), "--out", str(out),
                "--mode", "speech_only", "--corpus", "single"]) == 0
    assert len((out / "posts.csv").read_text().splitlines()) == 1 + 3
    assert len((out / "corpus" / "corpus.txt").read_text().splitlines()) == 3


def test_unwritable_out(tmp_path):
    fx = build_fixture(tmp_path / "fx", {"storytime": 2}, seed=1)
    (tmp_path / "blocker").write_text("")
    code = run(["export", *fx.cli_inputs(), "--offline", "--cache-dir", str(fx.cache_dir),
                "--out", str(tmp_path / "blocker" / "out")])
    assert code == 1


def test_pull_against_server(tmp_path, mock_cdn):
    fx = build_fixture(tmp_path / "fx", {"storytime": 4}, seed=8, cached=False)
    # point the capture at the mock server
    text = fx.inputs[0][0].read_text().replace("https://v16.tiktokcdn.example", mock_cdn.base_url)
    fx.inputs[0][0].write_text(text)
    vtt = b"WEBVTT\n\n00:00.000 --> 00:01.000\nhi there\n"
    ids = [p.post_id for p in fx.planted]
    for pid in ids[:3]:
        mock_cdn.routes[f"/sub/{pid}.vtt"] = [(200, vtt)]
    mock_cdn.routes[f"/sub/{ids[3]}.vtt"] = [(404, b"")]
    cache = tmp_path / "c"
    common = [*fx.cli_inputs(), "--cache-dir", str(cache), "--rate", "100", "--backoff-ms", "1"]
    assert run(["pull", *common]) == 2
    shutil.rmtree(tmp_path / "out", ignore_errors=True)
    assert run(["run", *common, "--offline", "--out", str(tmp_path / "out")]) == 2
    cov = json.loads((tmp_path / "out" / "coverage.json").read_text())["rows"][0]
    assert (cov["with_descriptor"], cov["fetched_ok"], cov["with_speech"], cov["expired"]) == (4, 3, 3, 1)
