"""Command-line front end: ``tagrec <command> ...``.

Every command that writes files writes them into ``--out`` together with a
``manifest.json`` recording the inputs' hashes, the configuration and the
outputs' hashes.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Any, Callable, Sequence

from recommendation_graph.configuration import Configuration
from recommendation_graph.content import (
    DocumentContentModel,
    build_content_model,
    load_stopwords,
    read_content,
    stopwords_sha256,
)
from recommendation_graph.dataset import (
    DEFAULT_COLUMNS,
    IngestReport,
    QueryPost,
    TaggingDataset,
    clean_tags,
    parse_posts,
    read_queries,
    write_posts,
    write_queries,
)
from recommendation_graph.evaluation import run_experiment, run_sweep
from recommendation_graph.folksonomy_graph import build_graph, write_edge_list
from recommendation_graph.graph import recommend
from recommendation_graph.manifest import MANIFEST_FILE, RunManifest
from recommendation_graph.preprocessing import (
    compute_post_core,
    date_split,
    leave_one_out_split,
    parse_window,
    stratified_samples,
    theoretical_max_recall,
    tuning_split,
)
from recommendation_graph.services import RecommenderResources
from recommendation_graph.synthetic import write_demo

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"

# CLI flag -> configuration key
CONFIG_FLAGS = {
    "b": "b",
    "d": "d",
    "epsilon": "epsilon",
    "pl": "pl",
    "variant": "variant",
    "spreader": "spreader",
    "mode": "mode",
    "retrieval": "retrieval",
    "k_similar": "k_similar",
    "content_source": "content_source",
    "seed": "seed",
    "threads": "threads",
    "top_n": "top_n",
}


def _require_files(*paths: str | Path | None) -> list[Path]:
    found = []
    for path in paths:
        if path is None:
            continue
        if not Path(path).is_file():
            raise FileNotFoundError(f"input file not found: {path}")
        found.append(Path(path))
    return found


def _load_configuration(args: argparse.Namespace) -> Configuration:
    """Configuration file (if any) with the given flags applied on top."""
    overrides: dict[str, Any] = {
        key: getattr(args, flag) for flag, key in CONFIG_FLAGS.items() if getattr(args, flag, None) is not None
    }
    if args.config:
        return Configuration.from_file(args.config, overrides)
    return Configuration.from_mapping(overrides)


def _load_content(
    args: argparse.Namespace, configuration: Configuration, manifest: RunManifest
) -> DocumentContentModel | None:
    if not args.content:
        return None
    manifest.counts["stopwords_sha256"] = stopwords_sha256()
    return build_content_model(read_content(args.content), configuration.content_source, stopwords=load_stopwords())


def _progress(args: argparse.Namespace) -> bool:
    return not args.quiet and sys.stderr.isatty()


def _cmd_ingest(args: argparse.Namespace, manifest: RunManifest) -> None:
    manifest.add_inputs(_require_files(args.input))
    positions = [int(value) for value in args.columns.split(",")]
    if len(positions) != 4:
        raise ValueError("--columns needs four positions: user,document,tag,timestamp")
    columns = dict(zip(DEFAULT_COLUMNS, positions))
    report = IngestReport()
    dataset = parse_posts(args.input, columns, report=report, strict=args.strict)
    write_posts(dataset, args.out / "posts.tsv")
    manifest.configuration = {"columns": columns, "strict": args.strict}
    manifest.counts = {**report.as_dict(), **dataset.summary()}


def _cmd_clean(args: argparse.Namespace, manifest: RunManifest) -> None:
    manifest.add_inputs(_require_files(args.input))
    dataset = parse_posts(args.input)
    cleaned = clean_tags(dataset, args.profile)
    write_posts(cleaned, args.out / "posts.tsv")
    manifest.configuration = {"profile": args.profile}
    manifest.counts = {"posts_in": len(dataset), **cleaned.summary()}


def _cmd_core(args: argparse.Namespace, manifest: RunManifest) -> None:
    manifest.add_inputs(_require_files(args.input))
    dataset = parse_posts(args.input)
    core = compute_post_core(dataset, args.n, strict=args.core_strict)
    write_posts(core, args.out / "posts.tsv")
    manifest.configuration = {"n": args.n, "strict": args.core_strict}
    manifest.counts = {"posts_in": len(dataset), **core.summary()}


def _split(
    dataset: TaggingDataset, method: str, test_window: str | None, train_window: str | None
) -> tuple[TaggingDataset, list[QueryPost]]:
    if method == "leave-one-out":
        return leave_one_out_split(dataset)
    if test_window is None:
        raise ValueError("a date split needs --test-window")
    return date_split(
        dataset, parse_window(test_window), train_window=parse_window(train_window) if train_window else None
    )


def _cmd_split(args: argparse.Namespace, manifest: RunManifest) -> None:
    manifest.add_inputs(_require_files(args.input))
    dataset = parse_posts(args.input)
    train, test = _split(dataset, args.method, args.test_window, args.train_window)
    write_posts(train, args.out / "train.tsv")
    write_queries(test, args.out / "test.tsv")
    manifest.configuration = {
        "method": args.method,
        "test_window": args.test_window,
        "train_window": args.train_window,
        "tuning": args.tuning,
    }
    manifest.counts = {"train_posts": len(train), "test_posts": len(test)}
    if args.tuning:
        tuning_train, tuning_test = tuning_split(
            train,
            args.method,
            test_window=parse_window(args.test_window) if args.test_window else None,
            train_window=parse_window(args.train_window) if args.train_window else None,
        )
        write_posts(tuning_train, args.out / "tuning_train.tsv")
        write_queries(tuning_test, args.out / "tuning_test.tsv")
        manifest.counts.update({"tuning_train_posts": len(tuning_train), "tuning_test_posts": len(tuning_test)})


def _cmd_sample(args: argparse.Namespace, manifest: RunManifest) -> None:
    manifest.add_inputs(_require_files(args.input))
    dataset = parse_posts(args.input)
    seeds = [args.seed + i for i in range(args.repeats)]
    samples = stratified_samples(dataset, args.posts, seeds)
    for sample, report in samples:
        name = "sample.tsv" if args.repeats == 1 else f"sample-seed{report.seed}.tsv"
        write_posts(sample, args.out / name)
    manifest.seed = args.seed
    manifest.configuration = {"posts": args.posts, "seed": args.seed, "repeats": args.repeats}
    manifest.counts = {"samples": [report.as_dict() for _, report in samples]}


def _cmd_build_graph(args: argparse.Namespace, manifest: RunManifest) -> None:
    manifest.add_inputs(_require_files(args.input, args.content, args.config))
    configuration = _load_configuration(args)
    content = _load_content(args, configuration, manifest)
    graph = build_graph(configuration.variant, parse_posts(args.input), content)
    write_edge_list(graph, args.out / "edges.tsv")
    manifest.configuration = configuration.as_dict()
    manifest.config_hash = configuration.config_hash()
    manifest.counts.update(graph.summary())


def _cmd_recommend(args: argparse.Namespace, manifest: RunManifest) -> None:
    manifest.add_inputs(_require_files(args.train, args.content, args.config))
    configuration = _load_configuration(args)
    content = _load_content(args, configuration, manifest)
    resources = RecommenderResources.build(parse_posts(args.train), configuration, content)
    ranking = recommend(QueryPost(args.user, args.doc), resources, configuration)
    lines = [f"{tag}\t{score:.10f}\n" for tag, score in ranking]
    sys.stdout.write("".join(lines))
    if ranking.fallback:
        logger.info(f"Answered from the {ranking.fallback} fallback")
    if args.out is not None:
        (args.out / "recommendations.tsv").write_text("".join(lines), encoding="utf-8")
    manifest.configuration = configuration.as_dict()
    manifest.config_hash = configuration.config_hash()
    manifest.seed = configuration.seed
    manifest.counts.update({"user": args.user, "document": args.doc, "fallback": ranking.fallback})


def _parse_sweep(text: str) -> tuple[str, list[str]]:
    key, sep, values = text.partition("=")
    if not sep or not key.strip() or not values.strip():
        raise ValueError(f"--sweep expects key=v1,v2,... got {text!r}")
    return key.strip(), [value.strip() for value in values.split(",") if value.strip()]


def _cmd_evaluate(args: argparse.Namespace, manifest: RunManifest) -> None:
    manifest.add_inputs(_require_files(args.train, args.test, args.content, args.config))
    configuration = _load_configuration(args)
    content = _load_content(args, configuration, manifest)
    train = parse_posts(args.train)
    test = read_queries(args.test)
    n_values = list(range(1, (args.n or configuration.top_n) + 1))
    progress = _progress(args)
    if args.sweep:
        key, values = _parse_sweep(args.sweep)
        results = run_sweep(
            train, test, configuration, key, values, n_values, content=content, output_dir=args.out, progress=progress
        )
        manifest.configuration = {**configuration.as_dict(), "sweep": {key: values}}
    else:
        results = [
            run_experiment(train, test, configuration, n_values, content=content, output_dir=args.out, progress=progress)
        ]
        manifest.configuration = configuration.as_dict()
    manifest.config_hash = configuration.config_hash()
    manifest.seed = configuration.seed
    manifest.timings.update({f"evaluate_{r.config_hash}": r.seconds for r in results})
    manifest.counts.update(
        {
            "train_posts": len(train),
            "test_posts": len(test),
            "failed_posts": sum(r.failed_posts for r in results),
            "excluded_posts": sum(r.excluded_posts for r in results),
        }
    )


def _cmd_max_recall(args: argparse.Namespace, manifest: RunManifest) -> None:
    manifest.add_inputs(_require_files(args.train, args.test))
    bound = theoretical_max_recall(parse_posts(args.train), read_queries(args.test), range(1, args.n + 1))
    lines = ["# N max_recall\n"] + [f"{n} {value:.10f}\n" for n, value in bound.items()]
    sys.stdout.write("".join(lines))
    if args.out is not None:
        (args.out / "max_recall.dat").write_text("".join(lines), encoding="utf-8")
    manifest.configuration = {"n": args.n}


def _cmd_demo(args: argparse.Namespace, manifest: RunManifest) -> None:
    write_demo(args.out, seed=args.seed, n_posts=args.posts)
    manifest.seed = args.seed
    manifest.configuration = {"posts": args.posts, "seed": args.seed}


COMMANDS: dict[str, Callable[[argparse.Namespace, RunManifest], None]] = {
    "ingest": _cmd_ingest,
    "clean": _cmd_clean,
    "core": _cmd_core,
    "split": _cmd_split,
    "sample": _cmd_sample,
    "build-graph": _cmd_build_graph,
    "recommend": _cmd_recommend,
    "evaluate": _cmd_evaluate,
    "max-recall": _cmd_max_recall,
    "demo": _cmd_demo,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--quiet", action="store_true", help="Hide progress bars.")

    engine = argparse.ArgumentParser(add_help=False)
    engine.add_argument("--config", help="Flat key=value configuration file; flags override its values.")
    engine.add_argument("--content", help="Document content TSV (document, title, fulltext).")
    engine.add_argument("--b", type=float, help="Share of preference weight on the user side.")
    engine.add_argument("--d", type=float, help="Damping factor of iterative spreading.")
    engine.add_argument("--epsilon", type=float, help="Convergence threshold relative to the total weight.")
    engine.add_argument("--pl", type=int, help="Maximum path length of PathRank.")
    engine.add_argument("--variant", choices=["folksonomy", "adapted", "post", "content"])
    engine.add_argument("--spreader", choices=["iterative", "pathrank"])
    engine.add_argument("--mode", choices=["differential", "zero-pref"])
    engine.add_argument("--retrieval", choices=["direct", "post-sum"])
    engine.add_argument("--k-similar", dest="k_similar", type=int, help="Similar documents in the preference vector.")
    engine.add_argument("--content-source", dest="content_source", choices=["title", "fulltext"])
    engine.add_argument("--seed", type=int)
    engine.add_argument("--threads", type=int)
    engine.add_argument("--top-n", dest="top_n", type=int, help="Number of tags to recommend.")

    parser = argparse.ArgumentParser(prog="tagrec", description="Graph-based tag recommendation and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="Parse a tag-assignment TSV into canonical posts.")
    p.add_argument("input")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--columns", default="0,1,2,3", help="Positions of user,document,tag,timestamp.")
    p.add_argument("--strict", action="store_true", help="Fail on the first unparseable timestamp.")

    p = sub.add_parser("clean", parents=[common], help="Lower-case tags and drop generated tags.")
    p.add_argument("input")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--profile", default="generic", choices=["generic", "citeulike", "bibsonomy-bibtex"])

    p = sub.add_parser("core", parents=[common], help="Compute the post-core of level n.")
    p.add_argument("input")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--core-strict", action="store_true", help="Drop whole posts instead of failing tags.")

    p = sub.add_parser("split", parents=[common], help="Split posts into train and test sets.")
    p.add_argument("input")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--method", default="date", choices=["date", "leave-one-out"])
    p.add_argument("--test-window", help="Test period, e.g. 2m, 8w or 30d.")
    p.add_argument("--train-window", help="Training period kept before the test period.")
    p.add_argument("--tuning", action="store_true", help="Also split the training part for parameter tuning.")

    p = sub.add_parser("sample", parents=[common], help="Draw stratified document samples.")
    p.add_argument("input")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--posts", type=int, required=True, help="Target number of posts per sample.")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=1, help="Samples to draw, with seeds seed, seed+1, ...")

    p = sub.add_parser("build-graph", parents=[common, engine], help="Build a graph variant and export its edges.")
    p.add_argument("input")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("recommend", parents=[common, engine], help="Recommend tags for one user and document.")
    p.add_argument("train")
    p.add_argument("--user", required=True)
    p.add_argument("--doc", required=True)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("evaluate", parents=[common, engine], help="Evaluate a configuration on a split.")
    p.add_argument("train")
    p.add_argument("test")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n", type=int, help="Evaluate N = 1..n (default: top_n).")
    p.add_argument("--sweep", help="Run one experiment per value: key=v1,v2,...")

    p = sub.add_parser("max-recall", parents=[common], help="Theoretical maximum recall@N of a split.")
    p.add_argument("train")
    p.add_argument("test")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("demo", parents=[common], help="Write fixtures and a synthetic dataset as demo inputs.")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--posts", type=int, default=1000)
    return parser


def dispatch(argv: Sequence[str] | None = None) -> int:
    """Run one command and return its exit status (2 for usage errors, 1 for failures)."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT, force=True)
    manifest = RunManifest(command=args.command, arguments=argv)
    out: Path | None = getattr(args, "out", None)
    started = time.perf_counter()
    try:
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, manifest)
    except FileNotFoundError as exc:
        print(f"tagrec: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        logger.debug("Command failed", exc_info=True)
        print(f"tagrec: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    manifest.timings["total"] = time.perf_counter() - started

    if out is not None:
        written = sorted(path for path in out.rglob("*") if path.is_file() and path.name != MANIFEST_FILE)
        manifest.add_outputs(written, out)
        manifest.write(out)
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
