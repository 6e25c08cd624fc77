import json

import pytest
from hypothesis import given, settings, strategies as st

from tfacets.facets import (
    ROOT,
    DataError,
    FacetNode,
    Taxonomy,
    MoreMarker,
    RankedNode,
    RankedTree,
    BuildConfig,
    ConfigError,
    DisplayView,
    UnknownFacet,
    AvgAggregator,
    MaxAggregator,
    build_fixed_level,
    aggregate_children,
    flatten_display_order,
)


def _taxonomy(shape: dict) -> Taxonomy:
    """
    Create a two-level taxonomy from a dict mapping level-1 IDs to lists of leaf IDs
    """
    nodes = []
    for parent, children in shape.items():
        nodes.append(FacetNode(id=parent, label=parent))
        nodes.extend(
            FacetNode(id=child, label=child, parent=parent, level=2) for child in children
        )
    return Taxonomy(nodes)


AB = _taxonomy({"A": ["a1", "a2"], "B": ["b1", "b2"]})


def _summary(tree: RankedTree) -> list:
    return [
        (root.facet, root.score, [child.facet for child in root.children])
        for root in tree.roots
    ]


def test_aggregate_children():
    assert aggregate_children([0.9, 0.1], "max", k=2) == 0.9
    assert aggregate_children([0.9, 0.1], "avg", k=2) == pytest.approx(0.5)
    assert aggregate_children([0.9], "max", k=3) == 0.9
    assert aggregate_children([0.9], "avg", k=3) == pytest.approx(0.9)
    assert aggregate_children([0.2, 0.8, 0.4, 0.6], "avg", k=3) == pytest.approx(0.6)
    assert aggregate_children([0.2, 0.8], "max", k=1) == 0.8
    assert aggregate_children([], "avg") is None
    assert MaxAggregator(k=2)([0.1, 0.3]) == 0.3
    assert AvgAggregator(k=1)([0.1, 0.3]) == 0.3
    with pytest.raises(ValueError):
        aggregate_children([0.5], "median")
    with pytest.raises(ValueError):
        MaxAggregator(k=0)


def test_build_config():
    config = BuildConfig()
    assert (config.top_k, config.page_size_level1, config.page_size_level2) == (3, 3, 3)
    assert BuildConfig(page_size_level1=4).page_size(1) == 4
    assert BuildConfig(page_size_level2=2).page_size(3) == 2
    with pytest.raises(ConfigError):
        BuildConfig(aggregation="sum")
    with pytest.raises(ConfigError):
        BuildConfig(top_k=0)
    with pytest.raises(ConfigError):
        BuildConfig(page_size_level2=0)


def test_build_max():
    scores = {"a1": 0.9, "a2": 0.1, "b1": 0.5, "b2": 0.5}
    tree = build_fixed_level(AB, scores, BuildConfig(aggregation="max"))
    assert _summary(tree) == [("A", 0.9, ["a1", "a2"]), ("B", 0.5, ["b1", "b2"])]
    assert len(tree.pages) == 1
    assert len(tree) == 6


def test_build_avg_tie():
    scores = {"a1": 0.9, "a2": 0.1, "b1": 0.5, "b2": 0.5}
    tree = build_fixed_level(AB, scores, BuildConfig(aggregation="avg", top_k=2))
    assert [root.facet for root in tree.roots] == ["A", "B"]
    assert [root.score for root in tree.roots] == pytest.approx([0.5, 0.5])

    # b1 beats a1 but b2 drags B's average below A's
    tree = build_fixed_level(AB, {"a1": 0.4, "b1": 0.5, "b2": 0.1}, BuildConfig("avg", 2))
    assert [root.facet for root in tree.roots] == ["A", "B"]
    assert tree.roots[1].score == pytest.approx(0.3)
    assert [child.facet for child in tree.roots[1].children] == ["b1", "b2"]


def test_build_single_leaf():
    tree = build_fixed_level(AB, {"a1": 0.3})
    assert _summary(tree) == [("A", 0.3, ["a1"])]
    assert [item.facet for item in flatten_display_order(tree)] == ["A", "a1"]


def test_build_empty():
    tree = build_fixed_level(AB, {})
    assert tree.roots == ()
    assert flatten_display_order(tree) == []
    assert tree.to_text() == ""


def test_zero_scores_sorted_last():
    tree = build_fixed_level(AB, {"a1": 0.0, "a2": 0.2, "b2": 0.0})
    assert _summary(tree) == [("A", 0.2, ["a2", "a1"]), ("B", 0.0, ["b2"])]


def test_build_errors():
    with pytest.raises(UnknownFacet):
        build_fixed_level(AB, {"z1": 0.3})
    with pytest.raises(DataError):
        build_fixed_level(AB, {"A": 0.3})
    with pytest.raises(DataError):
        build_fixed_level(AB, {"a1": float("nan")})


def _grid(parents: int, children: int) -> tuple[Taxonomy, dict]:
    shape = {
        f"P{i}": [f"P{i}c{j}" for j in range(children)] for i in range(parents)
    }
    scores = {
        leaf: round(1 - (i * children + j) / (parents * children + 1), 6)
        for i, leaves in enumerate(shape.values())
        for j, leaf in enumerate(leaves)
    }
    return _taxonomy(shape), scores


def test_flatten_three_by_three():
    taxonomy, scores = _grid(3, 3)
    items = flatten_display_order(build_fixed_level(taxonomy, scores))
    assert len(items) == 12
    assert not any(isinstance(item, MoreMarker) for item in items)
    assert [item.facet for item in items[:5]] == ["P0", "P0c0", "P0c1", "P0c2", "P1"]


def test_flatten_overflow():
    taxonomy, scores = _grid(4, 4)
    tree = build_fixed_level(taxonomy, scores)
    items = flatten_display_order(tree)
    # 3 parents, each with 3 children and a marker, and then the page marker
    assert len(items) == 16
    assert items[4] == MoreMarker(parent="P0", page=2, level=2)
    assert items[-1] == MoreMarker(parent=ROOT, page=2, level=1)
    facets = [item for item in items if isinstance(item, RankedNode)]
    assert len(facets) == 12

    # reveal the second page of P0's children and of the level-1 list
    view = DisplayView().expand("P0").expand(ROOT)
    assert view.visible("P0") == 2 and view.visible("P1") == 1
    items = flatten_display_order(tree, view)
    assert [getattr(item, "facet", None) for item in items[:6]] == [
        "P0",
        "P0c0",
        "P0c1",
        "P0c2",
        "P0c3",
        "P1",
    ]
    assert items[-5].facet == "P3"
    assert items[-1] == MoreMarker(parent="P3", page=2, level=2)

    assert len(flatten_display_order(tree, tree.full_view())) == len(tree) == 20


def test_text_and_json():
    taxonomy, scores = _grid(4, 2)
    tree = build_fixed_level(taxonomy, scores, BuildConfig(page_size_level1=2))
    lines = tree.to_text().splitlines()
    assert lines[0] == f"1\tP0\t{scores['P0c0']!r}"
    assert lines[1] == f"  2\tP0c0\t{scores['P0c0']!r}"
    assert lines[-1] == "1\tMORE"

    document = tree.to_json()
    assert [len(page) for page in document["pages"]] == [2, 2]
    assert len(document["display_order"]) == len(lines)
    assert document["display_order"][-1] == {"more": ROOT, "page": 2, "level": 1}
    # JSON text round trip
    assert RankedTree.from_json(json.loads(json.dumps(document))) == tree


def test_dot():
    tree = build_fixed_level(AB, {"a1": 0.9, "b1": 0.5})
    dot = tree.dot()
    assert "forcelabels" in dot
    assert "a1" in dot and "b1" in dot
    assert dot.count("->") == 4


@st.composite
def scored_taxonomies(draw):
    num_parents = draw(st.integers(1, 8))
    shape = {}
    num_leaves = 0
    for i in range(num_parents):
        num_children = draw(st.integers(1, max(1, min(8, 40 - num_leaves))))
        if num_leaves + num_children > 40:
            break
        shape[f"P{i}"] = [f"P{i}c{j}" for j in range(num_children)]
        num_leaves += num_children
    taxonomy = _taxonomy(shape)
    leaves = draw(
        st.lists(st.sampled_from(taxonomy.leaves()), unique=True, max_size=num_leaves)
    )
    # a small set of values makes ties common
    values = st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.75, 1.0]) | st.floats(0, 10)
    scores = {leaf: draw(values) for leaf in leaves}
    config = BuildConfig(
        aggregation=draw(st.sampled_from(["avg", "max"])),
        top_k=draw(st.integers(1, 4)),
        page_size_level1=draw(st.integers(1, 4)),
        page_size_level2=draw(st.integers(1, 4)),
    )
    return taxonomy, scores, config


@settings(max_examples=100, deadline=None)
@given(scored_taxonomies())
def test_tree_invariants(case):
    taxonomy, scores, config = case
    tree = build_fixed_level(taxonomy, scores, config)

    # determinism
    assert build_fixed_level(taxonomy, scores, config).to_json() == tree.to_json()

    keys = [RankedNode.rank_key(root) for root in tree.roots]
    assert keys == sorted(keys)
    shown = set()
    for root in tree.roots:
        assert root.level == 1
        assert root.children
        keys = [RankedNode.rank_key(child) for child in root.children]
        assert keys == sorted(keys)
        for child in root.children:
            assert taxonomy.parent(child.facet) == root.facet
            assert child.score == scores[child.facet]
            shown.add(child.facet)
        if config.aggregation == "max":
            assert root.score == max(child.score for child in root.children)
    assert shown == set(scores)
    parents = {taxonomy.parent(leaf) for leaf in scores}
    assert len(tree) == len(scores) + len(parents)

    document = tree.to_json()
    for page in document["pages"]:
        assert len(page) <= config.page_size_level1
        for record in page:
            for child_page in record["pages"]:
                assert len(child_page) <= config.page_size_level2


@settings(max_examples=100, deadline=None)
@given(scored_taxonomies(), st.data())
def test_raising_a_score(case, data):
    taxonomy, scores, config = case
    if not scores:
        return
    leaf = data.draw(st.sampled_from(sorted(scores)))
    raised = dict(scores)
    raised[leaf] = scores[leaf] + data.draw(st.floats(0.01, 5))

    def positions(tree):
        parent = taxonomy.parent(leaf)
        roots = [root.facet for root in tree.roots]
        siblings = [child.facet for child in tree.roots[roots.index(parent)].children]
        return roots.index(parent), siblings.index(leaf)

    before = positions(build_fixed_level(taxonomy, scores, config))
    after = positions(build_fixed_level(taxonomy, raised, config))
    assert after[0] <= before[0]
    assert after[1] <= before[1]
