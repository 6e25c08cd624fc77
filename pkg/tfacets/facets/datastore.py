from __future__ import annotations
import json
import math
from pathlib import Path
from logging import Logger
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

import pandas as pd
from haptools.logging import getLogger

from .errors import DataError, IntegrityError
from .taxonomy import Taxonomy, load_taxonomy


@dataclass(frozen=True)
class Venue:
    """
    A venue (POI) in the search collection

    Attributes
    ----------
    id : str
        The venue's unique ID
    facets : tuple[str]
        The leaf t-facets assigned to the venue by its owner, in lexicographic order
    """

    id: str
    facets: tuple


@dataclass(frozen=True)
class Rating:
    user: str
    venue: str
    value: int


@dataclass(frozen=True)
class Result:
    """
    A single retrieved venue and its relevance, P(rel(d, q) = 1 | q)
    """

    venue: str
    relevance: float


@dataclass(frozen=True)
class RequestCase:
    """
    A user's query along with the results retrieved for it

    Attributes
    ----------
    request_id : str
        The request's unique ID
    user : str
        The ID of the user who submitted the request
    query : str
        An opaque description of the query
    results : tuple[Result]
        The retrieved venues, ordered by relevance (descending) and then by venue ID
    """

    request_id: str
    user: str
    query: str
    results: tuple

    @staticmethod
    def rank_key(result: Result) -> tuple:
        return (-result.relevance, result.venue)

    @property
    def venues(self) -> tuple[str]:
        return tuple(result.venue for result in self.results)


@dataclass(frozen=True)
class RatingScale:
    """
    The range of rating values used in a dataset

    Attributes
    ----------
    minimum : int
        The lowest rating value
    maximum : int
        The highest rating value
    positive_min : int
        Ratings at or above this value count as positive
    """

    minimum: int = 0
    maximum: int = 4
    positive_min: int = 3

    def __post_init__(self):
        if not self.minimum <= self.positive_min <= self.maximum:
            raise ValueError(
                "The positive threshold must lie within the rating scale:"
                f" {self.minimum} <= {self.positive_min} <= {self.maximum}"
            )

    def __contains__(self, value: int):
        return self.minimum <= value <= self.maximum

    def is_positive(self, value: int) -> bool:
        return value >= self.positive_min


@dataclass(frozen=True)
class Dataset:
    """
    Everything needed to score facets and evaluate rankings for a set of requests

    Attributes
    ----------
    taxonomy : Taxonomy
        The t-facet hierarchy
    venues : dict[str, Venue]
        Every venue, keyed by ID
    ratings : tuple[Rating]
        Historical ratings, in file order
    requests : tuple[RequestCase]
        The requests to rank facets for, in file order
    judgments : dict[tuple[str, str], int]
        Graded relevance judgments keyed by (request ID, venue ID)
    scale : RatingScale
        The scale of the rating values
    """

    taxonomy: Taxonomy
    venues: dict
    ratings: tuple
    requests: tuple
    judgments: dict
    scale: RatingScale = RatingScale()

    @cached_property
    def ratings_by_user(self) -> dict[str, tuple[Rating]]:
        by_user = {}
        for rating in self.ratings:
            by_user.setdefault(rating.user, []).append(rating)
        return {user: tuple(ratings) for user, ratings in by_user.items()}

    @cached_property
    def request_index(self) -> dict[str, RequestCase]:
        return {request.request_id: request for request in self.requests}

    def users(self) -> list[str]:
        """
        Every user that has either rated a venue or submitted a request
        """
        users = set(self.ratings_by_user)
        users.update(request.user for request in self.requests)
        return sorted(users)

    def request(self, request_id: str) -> RequestCase:
        try:
            return self.request_index[request_id]
        except KeyError:
            raise IntegrityError(
                f"Unknown request '{request_id}'", key=request_id
            ) from None

    def grade(self, request_id: str, venue: str) -> int:
        """
        The judgment for a venue retrieved for a request, or None if it wasn't judged
        """
        return self.judgments.get((request_id, venue))


@dataclass(frozen=True)
class DatasetPaths:
    """
    The files that make up a dataset

    Use :py:meth:`DatasetPaths.from_dir` for the default file names.
    """

    taxonomy: Path
    venues: Path
    ratings: Path
    requests: Path
    judgments: Path
    meta: Path = None

    @classmethod
    def from_dir(cls, directory: Path | str) -> DatasetPaths:
        directory = Path(directory)
        return cls(
            taxonomy=directory / "taxonomy.json",
            venues=directory / "venues.jsonl",
            ratings=directory / "ratings.csv",
            requests=directory / "requests.jsonl",
            judgments=directory / "qrels.txt",
            meta=directory / "meta.json",
        )

    def __iter__(self) -> Iterator[Path]:
        return iter(
            (self.taxonomy, self.venues, self.ratings, self.requests, self.judgments)
        )


def _check_id(value, what: str, where: str) -> str:
    if not isinstance(value, str) or not value or value.split() != [value]:
        raise IntegrityError(
            f"{where}: {what} must be a non-empty string without whitespace", key=where
        )
    return value


def _decode(line: bytes, where: str) -> str:
    try:
        return line.decode("utf-8")
    except UnicodeDecodeError as err:
        raise DataError(f"{where}: not valid UTF-8 ({err})", key=where) from err


def _read_jsonl(fname: Path) -> Iterator[tuple[str, dict]]:
    with open(fname, "rb") as jsonl_file:
        for lineno, line in enumerate(jsonl_file, start=1):
            where = f"{fname}:{lineno}"
            line = _decode(line, where)
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise DataError(f"{where}: invalid JSON ({err})", key=where) from err
            if not isinstance(record, dict):
                raise DataError(f"{where}: expected a JSON object", key=where)
            yield where, record


def _read_scale(fname: Path) -> RatingScale:
    if fname is None or not Path(fname).exists():
        return RatingScale()
    try:
        meta = json.loads(Path(fname).read_text(encoding="utf-8"))
        return RatingScale(
            minimum=int(meta.get("rating_min", 0)),
            maximum=int(meta.get("rating_max", 4)),
            positive_min=int(meta.get("positive_min", 3)),
        )
    except (json.JSONDecodeError, AttributeError, TypeError, ValueError) as err:
        raise DataError(f"Invalid dataset metadata in {fname}: {err}", key=str(fname))


def _read_venues(fname: Path, taxonomy: Taxonomy) -> dict[str, Venue]:
    venues = {}
    for where, record in _read_jsonl(fname):
        venue = _check_id(record.get("id"), "venue id", where)
        if venue in venues:
            raise IntegrityError(f"{where}: duplicate venue '{venue}'", key=where)
        facets = record.get("facets")
        if not isinstance(facets, list) or not facets:
            raise IntegrityError(
                f"{where}: venue '{venue}' must have at least one facet", key=where
            )
        for facet in facets:
            if facet not in taxonomy:
                raise IntegrityError(
                    f"{where}: venue '{venue}' has facet '{facet}', which is not in the"
                    " taxonomy",
                    key=where,
                )
            if not taxonomy.is_leaf(facet):
                raise IntegrityError(
                    f"{where}: venue '{venue}' has facet '{facet}', which is not a leaf"
                    f" at level {taxonomy.depth}",
                    key=where,
                )
        venues[venue] = Venue(id=venue, facets=tuple(sorted(set(facets))))
    return venues


def _read_table(fname: Path, **kwargs) -> pd.DataFrame:
    try:
        return pd.read_csv(fname, dtype=str, keep_default_na=False, **kwargs)
    except pd.errors.EmptyDataError:
        return None
    except (pd.errors.ParserError, UnicodeDecodeError) as err:
        raise DataError(f"Cannot parse {fname}: {err}", key=str(fname)) from err


def _line_numbers(fname: Path) -> list[int]:
    """
    The 1-based numbers of the non-blank lines of a file. pandas skips blank lines.
    """
    with open(fname, "rb") as table_file:
        return [
            lineno for lineno, line in enumerate(table_file, start=1) if line.strip()
        ]


def _read_ratings(
    fname: Path, venues: dict[str, Venue], scale: RatingScale
) -> tuple[Rating]:
    table = _read_table(fname)
    if table is None:
        raise DataError(f"{fname}: missing the header 'user,venue,value'", key=str(fname))
    if list(table.columns) != ["user", "venue", "value"]:
        raise DataError(
            f"{fname}: expected the header 'user,venue,value' but found"
            f" {','.join(table.columns)}",
            key=str(fname),
        )
    ratings = []
    seen = set()
    # the first line is the header
    for lineno, (user, venue, value) in zip(
        _line_numbers(fname)[1:], table.itertuples(index=False, name=None)
    ):
        where = f"{fname}:{lineno}"
        _check_id(user, "user id", where)
        if venue not in venues:
            raise IntegrityError(
                f"{where}: rating refers to unknown venue '{venue}'", key=where
            )
        try:
            value = int(value)
        except ValueError:
            raise IntegrityError(
                f"{where}: rating value '{value}' is not an integer", key=where
            ) from None
        if value not in scale:
            raise IntegrityError(
                f"{where}: rating value {value} is outside of the scale"
                f" [{scale.minimum}, {scale.maximum}]",
                key=where,
            )
        if (user, venue) in seen:
            raise IntegrityError(
                f"{where}: user '{user}' rated venue '{venue}' more than once", key=where
            )
        seen.add((user, venue))
        ratings.append(Rating(user=user, venue=venue, value=value))
    return tuple(ratings)


def _read_requests(
    fname: Path, venues: dict[str, Venue], log: Logger
) -> tuple[RequestCase]:
    requests = []
    seen = set()
    for where, record in _read_jsonl(fname):
        request_id = _check_id(record.get("request_id"), "request id", where)
        if request_id in seen:
            raise IntegrityError(f"{where}: duplicate request '{request_id}'", key=where)
        seen.add(request_id)
        user = _check_id(record.get("user"), "user id", where)
        query = record.get("query", "")
        if not isinstance(query, str):
            query = json.dumps(query, sort_keys=True)
        results = record.get("results")
        if not isinstance(results, list):
            raise DataError(f"{where}: 'results' must be a list", key=where)
        parsed = []
        for item in results:
            try:
                venue, relevance = item["venue"], float(item["relevance"])
            except (KeyError, TypeError, ValueError):
                raise DataError(
                    f"{where}: each result needs a venue and a numeric relevance",
                    key=where,
                ) from None
            if venue not in venues:
                raise IntegrityError(
                    f"{where}: result refers to unknown venue '{venue}'", key=where
                )
            if math.isnan(relevance) or not 0 <= relevance <= 1:
                raise IntegrityError(
                    f"{where}: relevance {relevance} of venue '{venue}' is not in [0, 1]",
                    key=where,
                )
            parsed.append(Result(venue=venue, relevance=relevance))
        if len({result.venue for result in parsed}) != len(parsed):
            raise IntegrityError(
                f"{where}: request '{request_id}' lists a venue more than once", key=where
            )
        ranked = sorted(parsed, key=RequestCase.rank_key)
        if ranked != parsed:
            log.warning(f"{where}: re-sorted the results of request '{request_id}'")
        requests.append(
            RequestCase(
                request_id=request_id, user=user, query=query, results=tuple(ranked)
            )
        )
    return tuple(requests)


def _read_judgments(
    fname: Path, requests: tuple[RequestCase], venues: dict[str, Venue]
) -> dict[tuple[str, str], int]:
    table = _read_table(
        fname,
        sep=r"\s+",
        header=None,
        names=["request_id", "iteration", "venue", "grade"],
    )
    if table is None:
        return {}
    request_ids = {request.request_id for request in requests}
    judgments = {}
    for lineno, (request_id, _, venue, grade) in zip(
        _line_numbers(fname), table.itertuples(index=False, name=None)
    ):
        where = f"{fname}:{lineno}"
        if request_id not in request_ids:
            raise IntegrityError(
                f"{where}: judgment refers to unknown request '{request_id}'", key=where
            )
        if venue not in venues:
            raise IntegrityError(
                f"{where}: judgment refers to unknown venue '{venue}'", key=where
            )
        try:
            grade = int(grade)
        except ValueError:
            raise IntegrityError(
                f"{where}: grade '{grade}' is not an integer", key=where
            ) from None
        if (request_id, venue) in judgments:
            raise IntegrityError(
                f"{where}: venue '{venue}' is judged twice for request '{request_id}'",
                key=where,
            )
        judgments[(request_id, venue)] = grade
    return judgments


def load_dataset(paths: DatasetPaths, depth: int = 2, log: Logger = None) -> Dataset:
    """
    Load and validate a dataset from its files

    Parameters
    ----------
    paths : DatasetPaths
        The locations of the dataset's files
    depth : int, optional
        The number of taxonomy levels to consider; deeper facets are ignored
    log : Logger, optional
        A logging instance for recording debug statements.

    Raises
    ------
    DataError
        If a file is missing or can't be parsed, or if any record fails validation.
        The first offending record is identified by file and line.

    Returns
    -------
    Dataset
        The fully validated dataset
    """
    log = log or getLogger("load_dataset")
    for fname in paths:
        if not Path(fname).is_file():
            raise DataError(f"Missing dataset file {fname}", key=str(fname))
    scale = _read_scale(paths.meta)
    log.info(f"Loading taxonomy from {paths.taxonomy}")
    taxonomy = load_taxonomy(paths.taxonomy, depth=depth, log=log)
    venues = _read_venues(paths.venues, taxonomy)
    ratings = _read_ratings(paths.ratings, venues, scale)
    requests = _read_requests(paths.requests, venues, log)
    judgments = _read_judgments(paths.judgments, requests, venues)
    log.info(
        f"Loaded {len(venues)} venues, {len(ratings)} ratings, {len(requests)} requests,"
        f" and {len(judgments)} judgments"
    )
    return Dataset(
        taxonomy=taxonomy,
        venues=venues,
        ratings=ratings,
        requests=requests,
        judgments=judgments,
        scale=scale,
    )


def write_dataset(dataset: Dataset, directory: Path | str) -> DatasetPaths:
    """
    Write a dataset to a directory using the default file names

    The files can be read back with :py:func:`load_dataset`, yielding an identical
    Dataset.

    Returns
    -------
    DatasetPaths
        The paths of the written files
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = DatasetPaths.from_dir(directory)
    dataset.taxonomy.write(paths.taxonomy)
    with open(paths.venues, "w", encoding="utf-8") as venues_file:
        for venue in dataset.venues.values():
            venues_file.write(json.dumps({"id": venue.id, "facets": list(venue.facets)}))
            venues_file.write("\n")
    ratings = pd.DataFrame(
        [(r.user, r.venue, r.value) for r in dataset.ratings],
        columns=["user", "venue", "value"],
    )
    ratings.to_csv(paths.ratings, index=False, lineterminator="\n")
    with open(paths.requests, "w", encoding="utf-8") as requests_file:
        for request in dataset.requests:
            record = {
                "request_id": request.request_id,
                "user": request.user,
                "query": request.query,
                "results": [
                    {"venue": result.venue, "relevance": result.relevance}
                    for result in request.results
                ],
            }
            requests_file.write(json.dumps(record, ensure_ascii=False) + "\n")
    with open(paths.judgments, "w", encoding="utf-8") as qrels_file:
        for (request_id, venue), grade in sorted(dataset.judgments.items()):
            qrels_file.write(f"{request_id} 0 {venue} {grade}\n")
    meta = {
        "rating_min": dataset.scale.minimum,
        "rating_max": dataset.scale.maximum,
        "positive_min": dataset.scale.positive_min,
    }
    paths.meta.write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")
    return paths


def candidate_facets(dataset: Dataset, request: RequestCase) -> frozenset[str]:
    """
    Collect the t-facets associated with the venues retrieved for a request

    This is the set of facets that get ranked for the request.
    """
    return frozenset(
        facet
        for result in request.results
        for facet in dataset.venues[result.venue].facets
    )
