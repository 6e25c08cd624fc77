from __future__ import annotations
import re
import hashlib
from pathlib import Path
from logging import Logger
from abc import ABC, abstractmethod
from typing import Sequence

import numpy as np
import numpy.typing as npt
from haptools.logging import getLogger

from .errors import DataError, EmbeddingError
from .taxonomy import Taxonomy


class EmbeddingTable:
    """
    A fixed-length real vector for each facet

    Attributes
    ----------
    dim : int
        The length of every vector (0 if the table is empty)
    vectors : dict[str, npt.NDArray[np.float64]]
        The vectors, keyed by facet ID
    """

    def __init__(self, vectors: dict[str, npt.ArrayLike] = None, log: Logger = None):
        self.log = log or getLogger(self.__class__.__name__)
        self.vectors = {}
        self.dim = 0
        for facet, vector in (vectors or {}).items():
            vector = np.asarray(vector, dtype=np.float64)
            if vector.ndim != 1 or not len(vector):
                raise EmbeddingError(f"The vector for '{facet}' is empty", key=facet)
            if not self.dim:
                self.dim = len(vector)
            elif len(vector) != self.dim:
                raise EmbeddingError(
                    f"The vector for '{facet}' has length {len(vector)} but the others"
                    f" have length {self.dim}",
                    key=facet,
                )
            if not np.isfinite(vector).all():
                raise EmbeddingError(f"The vector for '{facet}' is not finite", key=facet)
            if not vector.any():
                raise EmbeddingError(f"The vector for '{facet}' is all zeros", key=facet)
            self.vectors[facet] = vector
        self._units = {
            facet: vector / np.linalg.norm(vector)
            for facet, vector in self.vectors.items()
        }

    def __repr__(self):
        return f"EmbeddingTable(dim={self.dim}, facets={len(self.vectors)})"

    def __len__(self):
        return len(self.vectors)

    def __contains__(self, facet: str):
        return facet in self.vectors

    def unit(self, facet: str) -> npt.NDArray[np.float64]:
        """
        Retrieve the unit-length version of a facet's vector

        Raises
        ------
        EmbeddingError
            If the facet has no vector
        """
        try:
            return self._units[facet]
        except KeyError:
            raise EmbeddingError(f"No embedding for facet '{facet}'", key=facet) from None

    def write(self, fname: Path | str):
        with open(fname, "w", encoding="utf-8") as emb_file:
            for facet, vector in self.vectors.items():
                emb_file.write(facet + "\t" + " ".join(map(repr, vector.tolist())) + "\n")


def load_embeddings(fname: Path | str, log: Logger = None) -> EmbeddingTable:
    """
    Load precomputed facet vectors

    Parameters
    ----------
    fname : Path | str
        A UTF-8 text file with one facet per line: the facet ID, a tab, and then the
        space-separated vector components

    Raises
    ------
    EmbeddingError
        If a line can't be parsed, the vectors differ in length, or a vector is zero

    Returns
    -------
    EmbeddingTable
        The vectors. Facets that aren't in the taxonomy are allowed here; they just
        won't ever be looked up.
    """
    vectors = {}
    try:
        emb_file = open(fname, "rb")
    except OSError as err:
        raise DataError(f"Cannot read embeddings {fname}: {err}", key=str(fname))
    with emb_file:
        for lineno, line in enumerate(emb_file, start=1):
            where = f"{fname}:{lineno}"
            try:
                line = line.decode("utf-8")
            except UnicodeDecodeError as err:
                raise EmbeddingError(
                    f"{where}: not valid UTF-8 ({err})", key=where
                ) from err
            if not line.strip():
                continue
            facet, sep, values = line.rstrip("\n").partition("\t")
            if not sep or not facet:
                raise EmbeddingError(f"{where}: expected 'facet<TAB>values'", key=where)
            try:
                vector = np.array(values.split(), dtype=np.float64)
            except ValueError:
                raise EmbeddingError(
                    f"{where}: non-numeric component", key=where
                ) from None
            if facet in vectors:
                raise EmbeddingError(f"{where}: duplicate facet '{facet}'", key=where)
            if vectors and len(vector) != len(next(iter(vectors.values()))):
                raise EmbeddingError(f"{where}: dimension mismatch", key=where)
            vectors[facet] = vector
    return EmbeddingTable(vectors, log=log)


def _label_tokens(label: str) -> list[str]:
    words = re.findall(r"\w+", label.lower())
    tokens = ["w:" + word for word in words]
    for word in words:
        tokens.extend("t:" + word[idx : idx + 3] for idx in range(len(word) - 2))
    return tokens or ["l:" + label.lower()]


def _bucket(token: str, dim: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dim


def fallback_embeddings(taxonomy: Taxonomy, dim: int = 256) -> EmbeddingTable:
    """
    Embed facet labels with hashed word and character-trigram counts

    This is a deterministic stand-in for pretrained label vectors: labels that share
    words or trigrams (ex: "Sushi Restaurant" and "Thai Restaurant") get a positive
    cosine similarity.

    Parameters
    ----------
    taxonomy : Taxonomy
        Every facet in the taxonomy gets a vector
    dim : int, optional
        The number of hash buckets; must be at least 8

    Returns
    -------
    EmbeddingTable
        Unit-length bucket-count vectors
    """
    if dim < 8:
        raise ValueError("Fallback embeddings need at least 8 dimensions")
    vectors = {}
    for facet in taxonomy:
        vector = np.zeros(dim, dtype=np.float64)
        for token in _label_tokens(taxonomy.label(facet)):
            vector[_bucket(token, dim)] += 1
        vectors[facet] = vector / np.linalg.norm(vector)
    return EmbeddingTable(vectors)


class Coverage(ABC):
    """
    Abstract class for estimating P(cov(f_u, f_i) | f_u, f_i), the probability that a
    profile facet f_u is covered by a candidate facet f_i

    Attributes
    ----------
    name : str
        A short name for the estimator, used in reports
    """

    name = None

    def __repr__(self):
        return self.name

    def __call__(self, f_u: str, f_i: str) -> float:
        return self.prob(f_u, f_i)

    @abstractmethod
    def prob(self, f_u: str, f_i: str) -> float:
        """
        Estimate the coverage probability for a single pair of facets

        Returns
        -------
        float
            A probability in [0, 1] that is 1 whenever f_u == f_i
        """
        pass

    def matrix(self, rows: Sequence[str], cols: Sequence[str]) -> npt.NDArray[np.float64]:
        """
        Estimate the coverage probability for every pair of facets

        Returns
        -------
        npt.NDArray[np.float64]
            An array of shape len(rows) x len(cols)
        """
        return np.array(
            [[self.prob(f_u, f_i) for f_i in cols] for f_u in rows], dtype=np.float64
        ).reshape(len(rows), len(cols))


class ExactCoverage(Coverage):
    """
    A facet covers only itself
    """

    name = "exact"

    def prob(self, f_u: str, f_i: str) -> float:
        return 1.0 if f_u == f_i else 0.0

    def matrix(self, rows: Sequence[str], cols: Sequence[str]) -> npt.NDArray[np.float64]:
        rows = np.array(rows, dtype=object)[:, np.newaxis]
        cols = np.array(cols, dtype=object)[np.newaxis, :]
        return (rows == cols).astype(np.float64).reshape(rows.shape[0], cols.shape[1])


class CosineCoverage(Coverage):
    """
    Coverage is the cosine similarity of the facets' vectors, with negative
    similarities clamped to 0

    Attributes
    ----------
    table : EmbeddingTable
        The facet vectors
    """

    name = "cosine"

    def __init__(self, table: EmbeddingTable):
        self.table = table

    def prob(self, f_u: str, f_i: str) -> float:
        sim = float(np.dot(self.table.unit(f_u), self.table.unit(f_i)))
        if f_u == f_i:
            return 1.0
        return min(1.0, max(0.0, sim))

    def matrix(self, rows: Sequence[str], cols: Sequence[str]) -> npt.NDArray[np.float64]:
        if not len(rows) or not len(cols):
            return np.zeros((len(rows), len(cols)))
        row_units = np.vstack([self.table.unit(facet) for facet in rows])
        col_units = np.vstack([self.table.unit(facet) for facet in cols])
        sims = np.clip(row_units @ col_units.T, 0, 1)
        # a facet covers itself exactly, regardless of floating point error in the norm
        same = np.array(rows, dtype=object)[:, np.newaxis] == np.array(cols, dtype=object)
        sims[same] = 1.0
        return sims


def coverage(kind: Coverage, f_u: str, f_i: str) -> float:
    """
    Estimate P(cov(f_u, f_i) | f_u, f_i) with the given estimator
    """
    return kind.prob(f_u, f_i)


def make_coverage(name: str, table: EmbeddingTable = None) -> Coverage:
    """
    Create a coverage estimator by name

    Parameters
    ----------
    name : str
        Either "exact" or "cosine"
    table : EmbeddingTable, optional
        The vectors to use for cosine coverage
    """
    name = name.lower()
    if name == "exact":
        return ExactCoverage()
    if name == "cosine":
        if table is None:
            raise ValueError("Cosine coverage needs an embedding table")
        return CosineCoverage(table)
    raise ValueError(f"{name} coverage is not supported")
