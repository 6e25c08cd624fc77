import shutil
import logging
from pathlib import Path

import pytest

from tfacets.facets import (
    Venue,
    Rating,
    Result,
    DataError,
    RatingScale,
    DatasetPaths,
    IntegrityError,
    load_dataset,
    write_dataset,
    candidate_facets,
)


DATADIR = Path(__file__).parent.joinpath("data")


def _copy_tiny(tmp_path: Path) -> Path:
    directory = tmp_path / "tiny"
    shutil.copytree(DATADIR / "tiny", directory)
    return directory


def _replace_line(fname: Path, lineno: int, line: str):
    lines = fname.read_text().splitlines()
    lines[lineno - 1] = line
    fname.write_text("\n".join(lines) + "\n")


def test_load():
    dataset = load_dataset(DatasetPaths.from_dir(DATADIR / "tiny"))
    assert dataset.taxonomy.leaves() == ["a1", "a2", "b1", "b2", "c1"]
    assert len(dataset.venues) == 8
    assert dataset.venues["v5"] == Venue(id="v5", facets=("a1", "b1"))
    assert dataset.ratings[0] == Rating(user="u1", venue="v1", value=4)
    assert len(dataset.ratings) == 7
    assert [request.request_id for request in dataset.requests] == ["q1", "q2", "q3"]
    assert dataset.scale == RatingScale(minimum=0, maximum=4, positive_min=3)

    q1 = dataset.request("q1")
    assert q1.user == "u1"
    assert q1.results[0] == Result(venue="v3", relevance=0.9)
    assert q1.venues == ("v3", "v4", "v8", "v2", "v6", "v7", "v1")

    assert dataset.grade("q1", "v1") == 4
    assert dataset.grade("q1", "v4") == 0
    assert dataset.grade("q1", "v2") is None
    assert len(dataset.judgments) == 5

    assert dataset.users() == ["u1", "u2", "u3"]
    assert [r.venue for r in dataset.ratings_by_user["u2"]] == ["v2", "v4", "v7"]
    assert "u3" not in dataset.ratings_by_user

    with pytest.raises(IntegrityError):
        dataset.request("q9")


def test_load_depth_one():
    # once the taxonomy is cut to level 1, the venues' level-2 facets are unknown
    with pytest.raises(IntegrityError):
        load_dataset(DatasetPaths.from_dir(DATADIR / "tiny"), depth=1)


def test_candidate_facets():
    dataset = load_dataset(DatasetPaths.from_dir(DATADIR / "tiny"))
    assert candidate_facets(dataset, dataset.request("q1")) == frozenset(
        {"a1", "a2", "b1", "b2", "c1"}
    )
    assert candidate_facets(dataset, dataset.request("q2")) == frozenset(
        {"a1", "a2", "c1"}
    )
    assert candidate_facets(dataset, dataset.request("q3")) == frozenset(
        {"a1", "b1", "b2"}
    )


def test_write_dataset(tmp_path):
    dataset = load_dataset(DatasetPaths.from_dir(DATADIR / "tiny"))
    paths = write_dataset(dataset, tmp_path / "copy")
    assert all(fname.is_file() for fname in paths)
    assert paths.meta.is_file()
    assert load_dataset(paths) == dataset


def test_missing_file(tmp_path):
    directory = _copy_tiny(tmp_path)
    (directory / "qrels.txt").unlink()
    with pytest.raises(DataError) as info:
        load_dataset(DatasetPaths.from_dir(directory))
    assert info.value.key.endswith("qrels.txt")


def test_missing_meta(tmp_path):
    directory = _copy_tiny(tmp_path)
    (directory / "meta.json").unlink()
    dataset = load_dataset(DatasetPaths.from_dir(directory))
    assert dataset.scale == RatingScale()


def test_empty_qrels(tmp_path):
    directory = _copy_tiny(tmp_path)
    (directory / "qrels.txt").write_text("")
    assert load_dataset(DatasetPaths.from_dir(directory)).judgments == {}


@pytest.mark.parametrize(
    "fname, lineno, line",
    [
        ("venues.jsonl", 2, '{"id": "v2", "facets": ["zz"]}'),
        ("venues.jsonl", 2, '{"id": "v2", "facets": ["A"]}'),
        ("venues.jsonl", 2, '{"id": "v2", "facets": []}'),
        ("venues.jsonl", 2, '{"id": "v1", "facets": ["a2"]}'),
        ("venues.jsonl", 2, '{"id": "v 2", "facets": ["a2"]}'),
        ("ratings.csv", 3, "u1,v99,3"),
        ("ratings.csv", 3, "u1,v3,7"),
        ("ratings.csv", 3, "u1,v3,high"),
        ("ratings.csv", 3, "u1,v1,2"),
        ("qrels.txt", 2, "q9 0 v1 1"),
        ("qrels.txt", 2, "q1 0 v99 1"),
        ("qrels.txt", 2, "q1 0 v1 1"),
        (
            "requests.jsonl",
            3,
            '{"request_id": "q3", "user": "u3", "results": [{"venue": "v5",'
            ' "relevance": 1.5}]}',
        ),
        (
            "requests.jsonl",
            3,
            '{"request_id": "q3", "user": "u3", "results": [{"venue": "v99",'
            ' "relevance": 0.5}]}',
        ),
        (
            "requests.jsonl",
            3,
            '{"request_id": "q3", "user": "u3", "results": [{"venue": "v5",'
            ' "relevance": 0.5}, {"venue": "v5", "relevance": 0.4}]}',
        ),
        (
            "requests.jsonl",
            3,
            '{"request_id": "q2", "user": "u3", "results": []}',
        ),
    ],
)
def test_integrity_errors(tmp_path, fname, lineno, line):
    directory = _copy_tiny(tmp_path)
    _replace_line(directory / fname, lineno, line)
    with pytest.raises(IntegrityError) as info:
        load_dataset(DatasetPaths.from_dir(directory))
    assert info.value.key.endswith(f"{fname}:{lineno}")


@pytest.mark.parametrize(
    "fname, text, lineno",
    [
        ("qrels.txt", "q1 0 v1 4\n\n\nq1 0 v99 1\nq2 0 v2 3\n", 4),
        ("ratings.csv", "user,venue,value\n\nu1,v1,4\n\nu1,v99,3\n", 5),
    ],
)
def test_integrity_errors_blank_lines(tmp_path, fname, text, lineno):
    directory = _copy_tiny(tmp_path)
    (directory / fname).write_text(text)
    with pytest.raises(IntegrityError) as info:
        load_dataset(DatasetPaths.from_dir(directory))
    # blank lines still count toward the line number
    assert info.value.key.endswith(f"{fname}:{lineno}")


@pytest.mark.parametrize(
    "fname, lineno, line",
    [
        ("venues.jsonl", 3, "{not json"),
        ("venues.jsonl", 3, "[1, 2]"),
        ("requests.jsonl", 2, '{"request_id": "q2", "user": "u2", "results": 5}'),
        (
            "requests.jsonl",
            2,
            '{"request_id": "q2", "user": "u2", "results": [{"venue": "v2"}]}',
        ),
        ("ratings.csv", 1, "user,venue,rating"),
    ],
)
def test_malformed(tmp_path, fname, lineno, line):
    directory = _copy_tiny(tmp_path)
    _replace_line(directory / fname, lineno, line)
    with pytest.raises(DataError):
        load_dataset(DatasetPaths.from_dir(directory))


def test_resort_results(tmp_path, caplog):
    directory = _copy_tiny(tmp_path)
    _replace_line(
        directory / "requests.jsonl",
        3,
        '{"request_id": "q3", "user": "u3", "results": [{"venue": "v8", "relevance":'
        ' 0.6}, {"venue": "v5", "relevance": 0.7}, {"venue": "v1", "relevance": 0.6}]}',
    )
    with caplog.at_level(logging.WARNING):
        dataset = load_dataset(
            DatasetPaths.from_dir(directory), log=logging.getLogger("test")
        )
    assert dataset.request("q3").venues == ("v5", "v1", "v8")
    assert "re-sorted" in caplog.text


def test_rating_scale():
    scale = RatingScale(minimum=1, maximum=5, positive_min=4)
    assert 1 in scale and 5 in scale and 0 not in scale
    assert scale.is_positive(4) and not scale.is_positive(3)
    with pytest.raises(ValueError):
        RatingScale(minimum=0, maximum=4, positive_min=5)
