from __future__ import annotations
import json
import math
from logging import Logger
from abc import ABC, abstractmethod
from dataclasses import dataclass, asdict
from typing import Iterator, Sequence, Union

import numpy as np
import networkx as nx
from haptools.logging import getLogger

from .errors import ConfigError, DataError
from .taxonomy import ROOT, Taxonomy


AGGREGATIONS = ("avg", "max")


@dataclass(frozen=True)
class BuildConfig:
    """
    Settings for the fixed-level tree building strategy

    Attributes
    ----------
    aggregation : str
        How a parent's score is computed from its children: "avg" or "max"
    top_k : int
        The number of best children that are aggregated
    page_size_level1 : int
        The number of level-1 facets per page
    page_size_level2 : int
        The number of child facets per page of every deeper list
    """

    aggregation: str = "max"
    top_k: int = 3
    page_size_level1: int = 3
    page_size_level2: int = 3

    def __post_init__(self):
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(
                f"Unknown aggregation '{self.aggregation}'", key="aggregation"
            )
        for name in ("top_k", "page_size_level1", "page_size_level2"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1", key=name)

    def page_size(self, level: int) -> int:
        """
        The page size of a list of facets at the given level
        """
        return self.page_size_level1 if level == 1 else self.page_size_level2


class Aggregator(ABC):
    """
    Abstract class for computing a parent's score from the scores of its top k children

    Attributes
    ----------
    k : int
        The number of children to consider
    """

    name = None

    def __init__(self, k: int = 3):
        if k < 1:
            raise ValueError("k must be at least 1")
        self.k = k

    def __repr__(self):
        return f"{self.__class__.__name__}(k={self.k})"

    def __call__(self, child_scores: Sequence[float]) -> float:
        """
        Aggregate the top k scores

        Returns
        -------
        float
            The parent's score, or None if there are no children
        """
        if not len(child_scores):
            return None
        return self.combine(sorted(child_scores, reverse=True)[: self.k])

    @abstractmethod
    def combine(self, top: list[float]) -> float:
        """
        Combine the top scores, which are given in descending order
        """
        pass


class AvgAggregator(Aggregator):
    name = "avg"

    def combine(self, top: list[float]) -> float:
        return float(np.mean(top))


class MaxAggregator(Aggregator):
    name = "max"

    def combine(self, top: list[float]) -> float:
        return top[0]


def make_aggregator(name: str, k: int = 3) -> Aggregator:
    for agg in (AvgAggregator, MaxAggregator):
        if agg.name == name:
            return agg(k)
    raise ValueError(f"{name} aggregation is not supported")


def aggregate_children(
    child_scores: Sequence[float], aggregation: str = "max", k: int = 3
) -> float:
    """
    Compute a parent's score from its top k children

    Parameters
    ----------
    child_scores : Sequence[float]
        The scores of the children, in any order
    aggregation : str, optional
        Either "avg" or "max"
    k : int, optional
        The number of children to consider

    Returns
    -------
    float
        The aggregate score, or None if there are no children. Parents without children
        are left out of the tree.
    """
    return make_aggregator(aggregation, k)(child_scores)


@dataclass(frozen=True)
class RankedNode:
    """
    A facet in a ranked tree, along with its ranked children

    Attributes
    ----------
    facet : str
        The facet's ID
    score : float
        The leaf score or the aggregate of the children
    level : int
        The facet's level in the taxonomy
    children : tuple[RankedNode]
        The children in rank order; empty for leaves
    """

    facet: str
    score: float
    level: int
    children: tuple = tuple()

    @staticmethod
    def rank_key(node: RankedNode) -> tuple:
        return (-node.score, node.facet)

    def to_json(self, config: BuildConfig) -> dict:
        record = {"id": self.facet, "level": self.level, "score": self.score}
        if self.children:
            record["pages"] = [
                [child.to_json(config) for child in page]
                for page in paginate(self.children, config.page_size(self.level + 1))
            ]
        return record


@dataclass(frozen=True)
class MoreMarker:
    """
    A "+ More" item that reveals the next page of a list

    Attributes
    ----------
    parent : str
        The facet whose children the list holds, or ROOT for the level-1 list
    page : int
        The 1-based number of the page revealed by clicking the marker
    level : int
        The level of the facets in the list
    """

    parent: str
    page: int
    level: int


DisplayItem = Union[RankedNode, MoreMarker]


@dataclass(frozen=True)
class DisplayView:
    """
    How many pages of each list in a ranked tree are currently expanded

    Lists that aren't mentioned show only their first page.

    Attributes
    ----------
    expanded : tuple[tuple[str, int]]
        Sorted pairs of (list parent, number of visible pages) for every list showing
        more than one page
    """

    expanded: tuple = tuple()

    def visible(self, parent: str) -> int:
        return dict(self.expanded).get(parent, 1)

    def expand(self, parent: str) -> DisplayView:
        """
        Reveal one more page of a list
        """
        pages = dict(self.expanded)
        pages[parent] = pages.get(parent, 1) + 1
        return DisplayView(tuple(sorted(pages.items())))


def paginate(items: Sequence, size: int) -> list[list]:
    return [list(items[idx : idx + size]) for idx in range(0, len(items), size)]


class RankedTree:
    """
    The output of tree building: a ranked sub-tree of the taxonomy, shown in pages

    Attributes
    ----------
    roots : tuple[RankedNode]
        The level-1 facets in rank order
    config : BuildConfig
        The settings the tree was built with; they determine the page sizes
    """

    def __init__(self, roots: Sequence[RankedNode] = tuple(), config: BuildConfig = None):
        self.roots = tuple(roots)
        self.config = config or BuildConfig()

    def __repr__(self):
        return self.to_text()

    def __eq__(self, other):
        if not isinstance(other, RankedTree):
            return NotImplemented
        return self.roots == other.roots and self.config == other.config

    def __len__(self):
        return sum(1 for _ in self.nodes())

    def nodes(self) -> Iterator[RankedNode]:
        """
        Every node in the tree, in fully expanded reading order
        """
        stack = list(reversed(self.roots))
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    @property
    def pages(self) -> list[list[RankedNode]]:
        return paginate(self.roots, self.config.page_size_level1)

    def full_view(self) -> DisplayView:
        """
        The view in which every page of every list is expanded
        """
        expanded = {}
        if len(self.pages) > 1:
            expanded[ROOT] = len(self.pages)
        for node in self.nodes():
            size = self.config.page_size(node.level + 1)
            num_pages = math.ceil(len(node.children) / size)
            if num_pages > 1:
                expanded[node.facet] = num_pages
        return DisplayView(tuple(sorted(expanded.items())))

    def to_json(self) -> dict:
        return {
            "config": asdict(self.config),
            "pages": [
                [node.to_json(self.config) for node in page] for page in self.pages
            ],
            "display_order": [
                display_item_json(item) for item in flatten_display_order(self)
            ],
        }

    @classmethod
    def from_json(cls, document: dict) -> RankedTree:
        """
        Recreate a tree from the output of :py:meth:`to_json`
        """

        def load_node(record: dict) -> RankedNode:
            children = tuple(
                load_node(child) for page in record.get("pages", []) for child in page
            )
            return RankedNode(record["id"], record["score"], record["level"], children)

        return cls(
            roots=[load_node(record) for page in document["pages"] for record in page],
            config=BuildConfig(**document["config"]),
        )

    def to_text(self, view: DisplayView = None) -> str:
        """
        Render a view of the tree as text with one display item per line

        Each line is indented by level and then has tab-separated fields: the level and
        either the facet ID and score or the word MORE
        """
        lines = []
        for item in flatten_display_order(self, view):
            indent = "  " * (item.level - 1)
            if isinstance(item, MoreMarker):
                lines.append(f"{indent}{item.level}\tMORE")
            else:
                lines.append(f"{indent}{item.level}\t{item.facet}\t{item.score!r}")
        return "".join(line + "\n" for line in lines)

    def dot(self) -> str:
        """
        Convert the fully expanded tree to its representation in the dot language
        This is useful for quickly viewing the tree on the command line

        Returns
        -------
        str
            A string representing the tree, with nodes labeled by facet ID and score
        """
        graph = nx.DiGraph()
        graph.add_node(0, label="root")
        index = {}
        for idx, node in enumerate(self.nodes(), start=1):
            index[node.facet] = idx
            graph.add_node(idx, label=f"{node.facet}\n{node.score:.4g}")
        for node in self.nodes():
            if node.level == 1:
                graph.add_edge(0, index[node.facet])
            for child in node.children:
                graph.add_edge(index[node.facet], index[child.facet])
        dot = nx.drawing.nx_pydot.to_pydot(graph)
        dot.obj_dict["attributes"]["forcelabels"] = "true"
        for node in dot.get_nodes():
            label = graph.nodes[int(node.get_name().strip('"'))]["label"]
            node.obj_dict["attributes"] = {"label": json.dumps(label)}
        return dot.to_string()


def display_item_json(item: DisplayItem) -> dict:
    if isinstance(item, MoreMarker):
        return {"more": item.parent, "page": item.page, "level": item.level}
    return {"id": item.facet, "level": item.level, "score": item.score}


def _flatten_list(
    nodes: Sequence[RankedNode],
    parent: str,
    level: int,
    tree: RankedTree,
    view: DisplayView,
    items: list[DisplayItem],
):
    visible = view.visible(parent)
    shown = min(len(nodes), visible * tree.config.page_size(level))
    for node in nodes[:shown]:
        items.append(node)
        if node.children:
            _flatten_list(node.children, node.facet, level + 1, tree, view, items)
    if shown < len(nodes):
        items.append(MoreMarker(parent=parent, page=visible + 1, level=level))


def flatten_display_order(
    tree: RankedTree, view: DisplayView = None
) -> list[DisplayItem]:
    """
    List the items of a ranked tree in the order a user reads them

    Within the visible pages of a list, each facet is followed by its own visible
    children (recursively) and then by its children's "More" marker, if the children
    have hidden pages. The list's own "More" marker comes last.

    Parameters
    ----------
    tree : RankedTree
        The tree to flatten
    view : DisplayView, optional
        Which pages are expanded. Defaults to the first page of every list.

    Returns
    -------
    list[DisplayItem]
        The visible facets and markers
    """
    items = []
    _flatten_list(tree.roots, ROOT, 1, tree, view or DisplayView(), items)
    return items


def build_fixed_level(
    taxonomy: Taxonomy,
    scores: dict[str, float],
    config: BuildConfig = BuildConfig(),
    log: Logger = None,
) -> RankedTree:
    """
    Rank the taxonomy bottom-up from the scores of its leaves

    Leaves are sorted within their parents first. Each parent then gets the aggregate
    of its top k children and the parents are sorted among their own siblings, and so
    on up to level 1. Ties are broken by facet ID. Parents without any scored leaves
    below them are left out.

    Parameters
    ----------
    taxonomy : Taxonomy
        The facet hierarchy
    scores : dict[str, float]
        The score of every candidate leaf facet
    config : BuildConfig, optional
        The aggregation and the page sizes
    log : Logger, optional
        A logging module to which to write messages about progress and any errors

    Raises
    ------
    UnknownFacet
        If a scored facet isn't in the taxonomy
    DataError
        If a scored facet isn't a leaf or its score isn't finite

    Returns
    -------
    RankedTree
        The ranked tree
    """
    log = log or getLogger("build_fixed_level")
    aggregator = make_aggregator(config.aggregation, config.top_k)
    current = []
    for facet, score in scores.items():
        if not taxonomy.is_leaf(facet):
            raise DataError(f"Scored facet '{facet}' is not a leaf", key=facet)
        if not math.isfinite(score):
            raise DataError(f"The score of facet '{facet}' is not finite", key=facet)
        current.append(RankedNode(facet, float(score), taxonomy.depth))
    for level in range(taxonomy.depth, 1, -1):
        groups = {}
        for node in current:
            groups.setdefault(taxonomy.parent(node.facet), []).append(node)
        current = []
        for parent in sorted(groups):
            children = tuple(sorted(groups[parent], key=RankedNode.rank_key))
            score = aggregator([child.score for child in children])
            current.append(RankedNode(parent, score, level - 1, children))
    roots = sorted(current, key=RankedNode.rank_key)
    log.debug(f"Ranked {len(scores)} leaves under {len(roots)} level-1 facets")
    return RankedTree(roots, config)
