from __future__ import annotations

import os
import sys
from pathlib import Path

import pytest

from recommendation_graph.cli import dispatch, main
from recommendation_graph.configuration import Configuration
from recommendation_graph.dataset import parse_posts, read_queries
from recommendation_graph.manifest import MANIFEST_FILE, read_manifest
from recommendation_graph.services import RecommenderResources


@pytest.fixture(scope="module")
def workspace(tmp_path_factory: pytest.TempPathFactory) -> Path:
    root = tmp_path_factory.mktemp("cli")
    assert dispatch(["demo", "--out", str(root / "demo"), "--posts", "300", "--quiet"]) == 0
    synthetic = str(root / "demo" / "synthetic.tsv")
    assert dispatch(["split", synthetic, "--out", str(root / "split"), "--test-window", "2m"]) == 0
    return root


def test_demo_writes_inputs_and_manifest(workspace: Path) -> None:
    demo = workspace / "demo"
    manifest = read_manifest(demo)

    for name in ("synthetic.tsv", "content.tsv", "demo.env", "fixture_swash_back.tsv"):
        assert (demo / name).is_file()
        assert name in manifest.outputs
    assert MANIFEST_FILE not in manifest.outputs
    assert manifest.command == "demo"


def test_split_writes_train_and_test(workspace: Path) -> None:
    split = workspace / "split"
    manifest = read_manifest(split)

    train = parse_posts(split / "train.tsv")
    test = read_queries(split / "test.tsv")
    assert manifest.counts == {"train_posts": len(train), "test_posts": len(test)}
    assert len(train) + len(test) == len(parse_posts(workspace / "demo" / "synthetic.tsv"))
    assert str(workspace / "demo" / "synthetic.tsv") in manifest.inputs


def test_core_command(workspace: Path, tmp_path: Path) -> None:
    assert dispatch(["core", str(workspace / "demo" / "synthetic.tsv"), "--out", str(tmp_path), "--n", "2"]) == 0

    manifest = read_manifest(tmp_path)
    assert (tmp_path / "posts.tsv").is_file()
    assert manifest.configuration == {"n": 2, "strict": False}
    assert manifest.counts["posts"] == len(parse_posts(tmp_path / "posts.tsv"))


def test_ingest_with_column_order(tmp_path: Path) -> None:
    raw = tmp_path / "raw.tsv"
    raw.write_text(
        "d1\tu1\tGraph\t2024-01-01 10:00:00\nbroken line\nd2\tu1\tweb\t2024-01-02 10:00:00\n", encoding="utf-8"
    )

    assert dispatch(["ingest", str(raw), "--out", str(tmp_path / "out"), "--columns", "1,0,2,3"]) == 0

    posts = parse_posts(tmp_path / "out" / "posts.tsv")
    assert {(p.user, p.document) for p in posts.posts} == {("u1", "d1"), ("u1", "d2")}
    assert read_manifest(tmp_path / "out").counts["posts"] == 2


def test_evaluate_is_reproducible(workspace: Path, tmp_path: Path) -> None:
    split = workspace / "split"
    args = ["evaluate", str(split / "train.tsv"), str(split / "test.tsv"), "--n", "5", "--quiet"]

    assert dispatch([*args, "--out", str(tmp_path / "first")]) == 0
    assert dispatch([*args, "--out", str(tmp_path / "second")]) == 0

    first = (tmp_path / "first" / "summary.csv").read_bytes()
    assert first == (tmp_path / "second" / "summary.csv").read_bytes()
    assert len(first.decode().splitlines()) == 6
    manifests = [read_manifest(tmp_path / name) for name in ("first", "second")]
    assert manifests[0].outputs["summary.csv"] == manifests[1].outputs["summary.csv"]
    assert manifests[0].config_hash == Configuration().config_hash()
    assert manifests[0].counts["failed_posts"] == 0


def test_evaluate_sweep_with_config_file(workspace: Path, tmp_path: Path) -> None:
    split = workspace / "split"
    argv = [
        "evaluate",
        str(split / "train.tsv"),
        str(split / "test.tsv"),
        "--out",
        str(tmp_path),
        "--config",
        str(workspace / "demo" / "demo.env"),
        "--n",
        "3",
        "--sweep",
        "d=0.1,0.3",
        "--quiet",
    ]

    assert dispatch(argv) == 0

    manifest = read_manifest(tmp_path)
    assert manifest.configuration["sweep"] == {"d": ["0.1", "0.3"]}
    assert str(workspace / "demo" / "demo.env") in manifest.inputs
    assert len((tmp_path / "summary.csv").read_text(encoding="utf-8").splitlines()) == 7


def test_recommend_unknown_query_prints_global_ranking(workspace: Path, capsys: pytest.CaptureFixture[str]) -> None:
    train = workspace / "split" / "train.tsv"

    assert dispatch(["recommend", str(train), "--user", "nobody", "--doc", "nothing", "--top-n", "3"]) == 0

    lines = capsys.readouterr().out.splitlines()
    configuration = Configuration(top_n=3)
    expected = RecommenderResources.build(parse_posts(train), configuration).global_ranking(configuration)
    assert [line.split("\t")[0] for line in lines] == expected.top(3).tags


def test_recommend_known_query_writes_output(workspace: Path, tmp_path: Path) -> None:
    train = workspace / "split" / "train.tsv"
    post = parse_posts(train).posts[0]

    argv = ["recommend", str(train), "--user", post.user, "--doc", post.document, "--spreader", "pathrank"]
    assert dispatch([*argv, "--out", str(tmp_path)]) == 0

    lines = (tmp_path / "recommendations.tsv").read_text(encoding="utf-8").splitlines()
    assert 0 < len(lines) <= 10
    assert read_manifest(tmp_path).counts["fallback"] is None


def test_build_graph_and_max_recall(workspace: Path, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    split = workspace / "split"

    assert dispatch(["build-graph", str(split / "train.tsv"), "--out", str(tmp_path), "--variant", "post"]) == 0
    assert (tmp_path / "edges.tsv").read_text(encoding="utf-8").startswith("# variant=post\n")

    assert dispatch(["max-recall", str(split / "train.tsv"), str(split / "test.tsv"), "--n", "4"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("#")
    assert [line.split()[0] for line in lines[1:]] == ["1", "2", "3", "4"]


def test_usage_and_input_errors(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    assert dispatch(["frobnicate"]) == 2
    assert dispatch(["core", str(tmp_path / "missing.tsv"), "--out", str(tmp_path / "out"), "--n", "2"]) == 1
    assert "not found" in capsys.readouterr().err
    assert dispatch(["split", str(tmp_path / "missing.tsv"), "--out", str(tmp_path / "x")]) == 1


def test_main_exits_with_the_command_status(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    (tmp_path / ".env").write_text("TAGREC_SEED=7\n", encoding="utf-8")
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("TAGREC_SEED", raising=False)
    monkeypatch.setattr(sys, "argv", ["tagrec", "frobnicate"])

    with pytest.raises(SystemExit) as excinfo:
        main()

    assert excinfo.value.code == 2
    assert "TAGREC_SEED" not in os.environ
