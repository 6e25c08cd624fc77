from __future__ import annotations
import json
from pathlib import Path
from logging import Logger
from dataclasses import dataclass
from typing import Iterable, Iterator, Union

import networkx as nx
from haptools.logging import getLogger

from .errors import (
    DataError,
    UnknownFacet,
    OrphanParent,
    LevelMismatch,
    TaxonomyCycle,
    DuplicateFacet,
    MultiParentFacet,
    MalformedTaxonomy,
)


# the root marker; facet IDs are never empty, so it can't collide with a real facet
ROOT = ""


# We declare this class to be a dataclass to automatically define __init__ and a few
# other methods. We use frozen=True to make it immutable.
@dataclass(frozen=True)
class FacetNode:
    """
    A t-facet within the taxonomy

    Attributes
    ----------
    id : str
        The facet's unique ID
    label : str
        A human-readable name for the facet (ex: "Sushi Restaurant")
    parent : str, optional
        The ID of the parent facet or None if this is a level-1 facet
    level : int
        The depth of the facet in the taxonomy, starting at 1
    """

    id: str
    label: str
    parent: str = None
    level: int = 1

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "label": self.label,
            "parent": self.parent,
            "level": self.level,
        }


class Taxonomy:
    """
    A multi-level hierarchy of t-facets where

    1. every facet has exactly one parent (or the root marker, for level-1 facets)
    2. the leaves used for scoring are exactly the facets at the deepest level

    Taxonomy objects should be treated as immutable once created. Use
    :py:func:`parse_taxonomy` to create one from untrusted input.

    Attributes
    ----------
    nodes: dict[str, FacetNode]
        Every facet in the taxonomy, keyed by ID
    depth: int
        The deepest level in the taxonomy (the level of the leaves). An empty taxonomy
        has depth 0.
    graph: nx.DiGraph
        A directed tree with edges from parents to children. Level-1 facets hang from
        the :py:data:`ROOT` node.
    log: Logger
        A logging instance for recording debug statements.
    """

    def __init__(self, nodes: Iterable[FacetNode] = tuple(), log: Logger = None):
        self.nodes = {node.id: node for node in nodes}
        self.depth = max((node.level for node in self.nodes.values()), default=0)
        self.log = log or getLogger(self.__class__.__name__)
        self.graph = nx.DiGraph()
        self.graph.add_node(ROOT)
        for facet in sorted(self.nodes):
            node = self.nodes[facet]
            self.graph.add_edge(node.parent or ROOT, facet)

    def __repr__(self):
        return f"Taxonomy(depth={self.depth}, nodes={len(self.nodes)})"

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, facet: str):
        return facet in self.nodes

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self.nodes))

    def __eq__(self, other):
        if not isinstance(other, Taxonomy):
            return NotImplemented
        return self.depth == other.depth and self.nodes == other.nodes

    def node(self, facet: str) -> FacetNode:
        """
        Retrieve a facet by its ID

        Raises
        ------
        UnknownFacet
            If the facet is not in the taxonomy
        """
        try:
            return self.nodes[facet]
        except KeyError:
            raise UnknownFacet(f"Unknown facet '{facet}'", key=facet) from None

    def level(self, facet: str) -> int:
        return self.node(facet).level

    def label(self, facet: str) -> str:
        return self.node(facet).label

    def parent(self, facet: str) -> str:
        return self.node(facet).parent

    def children(self, facet: str) -> list[str]:
        self.node(facet)
        return sorted(self.graph.successors(facet))

    def roots(self) -> list[str]:
        return sorted(self.graph.successors(ROOT))

    def is_leaf(self, facet: str) -> bool:
        return self.node(facet).level == self.depth

    def leaves(self) -> list[str]:
        """
        Return every facet at the deepest level of the taxonomy

        Returns
        -------
        list[str]
            The IDs of the leaf facets in lexicographic order
        """
        return sorted(
            facet for facet, node in self.nodes.items() if node.level == self.depth
        )

    def ancestors(self, facet: str) -> list[str]:
        """
        Locate the ancestors of a facet

        Parameters
        ----------
        facet : str
            The ID of a facet in the taxonomy

        Returns
        -------
        list[str]
            The path from a level-1 facet down to the parent of this facet. Level-1
            facets have no ancestors.
        """
        path = []
        parent = self.node(facet).parent
        while parent is not None:
            path.append(parent)
            parent = self.nodes[parent].parent
        return path[::-1]

    def descendant_leaves(self, facet: str) -> list[str]:
        """
        The leaves below a facet, or the facet itself if it is a leaf
        """
        if self.is_leaf(facet):
            return [facet]
        return sorted(
            node for node in nx.descendants(self.graph, facet) if self.is_leaf(node)
        )

    def to_records(self) -> list[dict]:
        """
        Serialize the taxonomy into the flat record format read by
        :py:func:`parse_taxonomy`. Records are ordered by level and then by ID.
        """
        return [
            node.to_record()
            for node in sorted(self.nodes.values(), key=lambda n: (n.level, n.id))
        ]

    def write(self, fname: Path | str):
        with open(fname, "w", encoding="utf-8") as tax_file:
            json.dump(self.to_records(), tax_file, indent=1, ensure_ascii=False)
            tax_file.write("\n")

    def dot(self) -> str:
        """
        Convert the taxonomy to its representation in the dot language
        This is useful for quickly viewing the hierarchy on the command line

        Returns
        -------
        str
            A string representing the taxonomy, with nodes labeled by facet label
        """
        facets = sorted(self.nodes)
        index = {facet: idx + 1 for idx, facet in enumerate(facets)}
        index[ROOT] = 0
        graph = nx.relabel_nodes(self.graph, index)
        dot = nx.drawing.nx_pydot.to_pydot(graph)
        dot.obj_dict["attributes"]["forcelabels"] = "true"
        for node in dot.get_nodes():
            idx = int(node.get_name().strip('"'))
            label = self.nodes[facets[idx - 1]].label if idx else "root"
            node.obj_dict["attributes"] = {"label": json.dumps(label)}
        return dot.to_string()


def _check_record(record, position: int) -> FacetNode:
    """
    Convert a single flat taxonomy record into a FacetNode, checking its fields
    """
    if not isinstance(record, dict):
        raise MalformedTaxonomy(
            f"Taxonomy record #{position} is not an object", key=str(position)
        )
    facet = record.get("id")
    if not isinstance(facet, str) or not facet:
        raise MalformedTaxonomy(
            f"Taxonomy record #{position} has a missing or empty id", key=str(position)
        )
    label, parent, level = record.get("label"), record.get("parent"), record.get("level")
    if not isinstance(label, str) or not label:
        raise MalformedTaxonomy(f"Facet '{facet}' has an empty label", key=facet)
    if parent is not None and (not isinstance(parent, str) or not parent):
        raise MalformedTaxonomy(f"Facet '{facet}' has an invalid parent", key=facet)
    # bool is a subclass of int, so check for it explicitly
    if isinstance(level, bool) or not isinstance(level, int) or level < 1:
        raise MalformedTaxonomy(f"Facet '{facet}' has an invalid level", key=facet)
    if (parent is None) != (level == 1):
        raise LevelMismatch(
            f"Facet '{facet}' must have a null parent if and only if it is at level 1",
            key=facet,
        )
    return FacetNode(id=facet, label=label, parent=parent, level=level)


def parse_taxonomy(
    document: Union[str, bytes, list], depth: int = None, log: Logger = None
) -> Taxonomy:
    """
    Parse and validate a flat taxonomy document

    Parameters
    ----------
    document : str | bytes | list
        Either the JSON text of the taxonomy or the already-decoded list of records,
        each an object with keys "id", "label", "parent", and "level"
    depth : int, optional
        If provided, facets below this level are ignored
    log : Logger, optional
        A logging instance for recording debug statements.

    Raises
    ------
    TaxonomyError
        If the document is malformed, has duplicate IDs, references a missing parent,
        contains a cycle, or has inconsistent levels. The offending ID is reported.

    Returns
    -------
    Taxonomy
        The validated taxonomy
    """
    log = log or getLogger("parse_taxonomy")
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as err:
            raise MalformedTaxonomy(f"Taxonomy is not valid JSON: {err}") from err
    if not isinstance(document, list):
        raise MalformedTaxonomy("A taxonomy must be a JSON array of facet records")
    nodes = {}
    for position, record in enumerate(document):
        node = _check_record(record, position)
        if node.id in nodes:
            if nodes[node.id].parent != node.parent:
                raise MultiParentFacet(
                    f"Facet '{node.id}' has more than one parent", key=node.id
                )
            raise DuplicateFacet(f"Facet '{node.id}' appears more than once", key=node.id)
        nodes[node.id] = node
    for facet in sorted(nodes):
        parent = nodes[facet].parent
        if parent is not None and parent not in nodes:
            raise OrphanParent(
                f"Facet '{facet}' refers to an undefined parent '{parent}'", key=facet
            )
    graph = nx.DiGraph(
        (node.parent, facet) for facet, node in nodes.items() if node.parent is not None
    )
    try:
        cycle = nx.find_cycle(graph)
    except nx.NetworkXNoCycle:
        pass
    else:
        facet = min(edge[0] for edge in cycle)
        raise TaxonomyCycle(f"Facet '{facet}' is part of a cycle", key=facet)
    for facet in sorted(nodes):
        node = nodes[facet]
        if node.parent is not None and node.level != nodes[node.parent].level + 1:
            raise LevelMismatch(
                f"Facet '{facet}' is at level {node.level} but its parent is at level"
                f" {nodes[node.parent].level}",
                key=facet,
            )
    if depth is not None:
        if depth < 1:
            raise ValueError("The taxonomy depth must be at least 1")
        dropped = sum(node.level > depth for node in nodes.values())
        if dropped:
            log.debug(f"Ignoring {dropped} facets below level {depth}")
        nodes = {facet: node for facet, node in nodes.items() if node.level <= depth}
    return Taxonomy(nodes.values(), log=log)


def flatten_foursquare(document: Union[str, bytes, list, dict]) -> list[dict]:
    """
    Flatten a nested Foursquare category export into flat taxonomy records

    Parameters
    ----------
    document : str | bytes | list | dict
        The export: a list of category objects (each with "id", "name", and an
        optional "categories" list of children) or the API envelope
        ``{"response": {"categories": [...]}}``

    Raises
    ------
    MultiParentFacet
        If a category is listed under more than one parent

    Returns
    -------
    list[dict]
        Records suitable for :py:func:`parse_taxonomy`, in pre-order
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as err:
            raise MalformedTaxonomy(f"Category export is not valid JSON: {err}") from err
    if isinstance(document, dict):
        document = document.get("response", document)
        if not isinstance(document, dict):
            raise MalformedTaxonomy("The 'response' of the export must be an object")
        document = document.get("categories")
    if not isinstance(document, list):
        raise MalformedTaxonomy("Could not find a list of categories in the export")
    records = []
    parents = {}
    # use an explicit stack to avoid recursion limits on deep exports
    stack = [(category, None, 1) for category in reversed(document)]
    while stack:
        category, parent, level = stack.pop()
        if not isinstance(category, dict) or not category.get("id"):
            raise MalformedTaxonomy(f"A category under '{parent}' has no id", key=parent)
        facet = str(category["id"])
        if facet in parents:
            if parents[facet] != parent:
                raise MultiParentFacet(
                    f"Category '{facet}' appears under more than one parent", key=facet
                )
            raise DuplicateFacet(f"Category '{facet}' appears more than once", key=facet)
        parents[facet] = parent
        records.append(
            {
                "id": facet,
                "label": category.get("name") or category.get("label"),
                "parent": parent,
                "level": level,
            }
        )
        children = category.get("categories") or []
        stack.extend((child, facet, level + 1) for child in reversed(children))
    return records


def load_taxonomy(
    fname: Path | str, depth: int = None, foursquare: bool = False, log: Logger = None
) -> Taxonomy:
    """
    Read a taxonomy from a file

    Parameters
    ----------
    fname : Path | str
        A UTF-8 JSON file in the flat record format (or a Foursquare category export
        if ``foursquare`` is True)
    depth : int, optional
        See :py:func:`parse_taxonomy`
    foursquare : bool, optional
        Whether the file is a nested Foursquare category export
    log : Logger, optional
        A logging instance for recording debug statements.
    """
    try:
        text = Path(fname).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as err:
        raise DataError(
            f"Cannot read taxonomy file {fname}: {err}", key=str(fname)
        ) from err
    document = flatten_foursquare(text) if foursquare else text
    return parse_taxonomy(document, depth=depth, log=log)
