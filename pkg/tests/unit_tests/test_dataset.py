from __future__ import annotations

import io
from datetime import datetime

import pytest

from recommendation_graph.dataset import (
    IngestReport,
    Post,
    QueryPost,
    TaggingDataset,
    TimestampError,
    clean_tags,
    parse_posts,
    read_queries,
    write_posts,
    write_queries,
)


def _tsv(*lines: str) -> io.StringIO:
    return io.StringIO("".join(line + "\n" for line in lines))


def test_parse_posts_groups_assignments_into_posts() -> None:
    report = IngestReport()
    dataset = parse_posts(
        _tsv(
            "u1\td1\tgraphs\t2024-01-01T10:00:00",
            "u1\td1\tranking\t2024-01-01T10:00:00",
            "u2\td1\tgraphs\t2024-01-02T09:00:00",
        ),
        report=report,
    )

    assert len(dataset) == 2
    first = dataset.posts[0]
    assert (first.user, first.document) == ("u1", "d1")
    assert first.tags == frozenset({"graphs", "ranking"})
    assert report.lines == 3
    assert report.posts == 2


def test_parse_posts_keeps_latest_tag_set_and_collapses_duplicates() -> None:
    report = IngestReport()
    dataset = parse_posts(
        _tsv(
            "u1\td1\told\t2024-01-01T00:00:00",
            "u1\td1\tnew\t2024-02-01T00:00:00",
            "u1\td1\tnew\t2024-02-01T00:00:00",
        ),
        report=report,
    )

    assert len(dataset) == 1
    assert dataset.posts[0].tags == frozenset({"new"})
    assert report.duplicates == 1


def test_parse_posts_skips_malformed_lines() -> None:
    report = IngestReport()
    dataset = parse_posts(
        _tsv("u1\td1\tt1\t2024-01-01", "u2\td2", "u3\t\tt3\t2024-01-01", "", "u4\td4\tt4\t2024-01-03"),
        report=report,
    )

    assert len(dataset) == 2
    assert report.malformed == 2


def test_parse_posts_records_bad_timestamps() -> None:
    report = IngestReport()
    dataset = parse_posts(_tsv("u1\td1\tt1\t2024-01-01", "u2\td2\tt2\tnot-a-date"), report=report)

    assert len(dataset) == 1
    assert len(report.timestamp_errors) == 1
    assert report.timestamp_errors[0].line == 2


def test_parse_posts_strict_raises_on_bad_timestamp() -> None:
    with pytest.raises(TimestampError) as excinfo:
        parse_posts(_tsv("u1\td1\tt1\t2024-01-01", "u2\td2\tt2\tyesterday"), strict=True)
    assert excinfo.value.line == 2


def test_parse_posts_reads_quotes_literally_and_ignores_extra_columns() -> None:
    report = IngestReport()
    dataset = parse_posts(
        _tsv(
            'u1\td1\t"graph\t2024-01-01\tbookmark\tpublic',
            "",
            "u2\td2\tweb",
            "u3\td3\tsearch\tsoon",
            "u4\td4\tlinks\t2024-01-02",
        ),
        report=report,
    )

    assert {post.tags for post in dataset.posts} == {frozenset({'"graph'}), frozenset({"links"})}
    assert (report.lines, report.malformed) == (4, 1)
    assert [error.line for error in report.timestamp_errors] == [4]


def test_parse_posts_custom_columns() -> None:
    dataset = parse_posts(
        _tsv("2024-01-01\tgraphs\td1\tu1"), {"timestamp": 0, "tag": 1, "document": 2, "user": 3}
    )

    assert dataset.posts[0] == Post("u1", "d1", frozenset({"graphs"}), datetime(2024, 1, 1))


def test_empty_stream_gives_empty_dataset() -> None:
    dataset = parse_posts(io.StringIO(""))

    assert len(dataset) == 0
    assert dataset.time_range() is None


def test_dataset_rejects_duplicate_pairs_and_empty_posts() -> None:
    when = datetime(2024, 1, 1)
    with pytest.raises(ValueError):
        TaggingDataset((Post("u", "d", frozenset({"a"}), when), Post("u", "d", frozenset({"b"}), when)))
    with pytest.raises(ValueError):
        TaggingDataset((Post("u", "d", frozenset(), when),))


def test_dataset_indexes() -> None:
    when = datetime(2024, 1, 1)
    dataset = TaggingDataset.from_posts(
        [
            Post("u1", "d1", frozenset({"a", "b"}), when),
            Post("u1", "d2", frozenset({"b"}), when),
            Post("u2", "d1", frozenset({"c"}), when),
        ]
    )

    assert dataset.users == {"u1", "u2"}
    assert dataset.documents == {"d1", "d2"}
    assert dataset.tags == {"a", "b", "c"}
    assert dataset.n_assignments == 4
    assert [p.document for p in dataset.posts_of_user("u1")] == ["d1", "d2"]
    assert len(dataset.posts_of_document("d1")) == 2
    assert dataset.posts_of_user("nobody") == []
    assert dataset.summary() == {"posts": 3, "assignments": 4, "users": 2, "documents": 2, "tags": 3}


def test_clean_tags_lowercases_and_drops_generated_tags() -> None:
    dataset = parse_posts(
        _tsv(
            "u1\td1\tGraphs\t2024-01-01",
            "u1\td1\tgraphs\t2024-01-01",
            "u1\td1\tno-tag\t2024-01-01",
            "u2\td2\tbibtex-import\t2024-01-02",
            "u3\td3\tfoo-file-import-1\t2024-01-03",
            "u3\td3\tkeep\t2024-01-03",
        )
    )

    cleaned = clean_tags(dataset, "citeulike")

    assert len(cleaned) == 2
    assert cleaned.posts[0].tags == frozenset({"graphs"})
    assert cleaned.posts[1].tags == frozenset({"keep"})


def test_clean_tags_generic_profile_only_lowercases() -> None:
    dataset = parse_posts(_tsv("u1\td1\tNo-Tag\t2024-01-01"))

    assert clean_tags(dataset).posts[0].tags == frozenset({"no-tag"})


def test_clean_tags_rejects_unknown_profile() -> None:
    with pytest.raises(ValueError):
        clean_tags(TaggingDataset.empty(), "delicious")  # type: ignore[arg-type]


def test_written_posts_parse_back_to_the_same_dataset(tmp_path) -> None:
    dataset = parse_posts(_tsv("u1\td1\tb\t2024-01-01T08:30:00", "u1\td1\ta\t2024-01-01T08:30:00", "u2\td1\ta\t2024-03-01"))
    target = tmp_path / "posts.tsv"

    assert write_posts(dataset, target) == 3
    assert parse_posts(target).posts == dataset.posts


def test_queries_keep_true_tags(tmp_path) -> None:
    queries = [QueryPost("u1", "d1", frozenset({"x", "y"}), datetime(2024, 5, 1))]
    target = tmp_path / "test.tsv"
    write_queries(queries, target)

    assert read_queries(target) == queries
