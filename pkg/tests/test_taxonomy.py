import json
from pathlib import Path

import pytest

from tfacets.facets import (
    ROOT,
    DataError,
    FacetNode,
    Taxonomy,
    TaxonomyCycle,
    UnknownFacet,
    OrphanParent,
    LevelMismatch,
    DuplicateFacet,
    MultiParentFacet,
    MalformedTaxonomy,
    load_taxonomy,
    parse_taxonomy,
    flatten_foursquare,
)


DATADIR = Path(__file__).parent.joinpath("data")


def _records():
    return [
        {"id": "A", "label": "Food", "parent": None, "level": 1},
        {"id": "B", "label": "Nightlife Spot", "parent": None, "level": 1},
        {"id": "a1", "label": "Sushi Restaurant", "parent": "A", "level": 2},
        {"id": "a2", "label": "Thai Restaurant", "parent": "A", "level": 2},
        {"id": "b1", "label": "Cocktail Bar", "parent": "B", "level": 2},
    ]


def test_parse():
    taxonomy = parse_taxonomy(_records())
    assert len(taxonomy) == 5
    assert taxonomy.depth == 2
    assert taxonomy.roots() == ["A", "B"]
    assert taxonomy.leaves() == ["a1", "a2", "b1"]
    assert taxonomy.children("A") == ["a1", "a2"]
    assert taxonomy.parent("a2") == "A"
    assert taxonomy.level("b1") == 2
    assert taxonomy.label("b1") == "Cocktail Bar"
    assert taxonomy.is_leaf("a1") and not taxonomy.is_leaf("A")
    assert taxonomy.ancestors("a1") == ["A"]
    assert taxonomy.ancestors("A") == []
    assert taxonomy.descendant_leaves("A") == ["a1", "a2"]
    assert taxonomy.descendant_leaves("b1") == ["b1"]
    assert "a1" in taxonomy and "z9" not in taxonomy
    assert list(taxonomy) == ["A", "B", "a1", "a2", "b1"]

    # the same document as JSON text gives the same taxonomy
    assert parse_taxonomy(json.dumps(_records())) == taxonomy

    with pytest.raises(UnknownFacet) as info:
        taxonomy.parent("z9")
    assert info.value.key == "z9"


def test_parse_empty():
    taxonomy = parse_taxonomy("[]")
    assert len(taxonomy) == 0
    assert taxonomy.depth == 0
    assert taxonomy.leaves() == []


def test_parse_depth():
    records = _records() + [
        {"id": "a1x", "label": "Conveyor Belt Sushi", "parent": "a1", "level": 3}
    ]
    assert parse_taxonomy(records).depth == 3
    assert parse_taxonomy(records).ancestors("a1x") == ["A", "a1"]

    taxonomy = parse_taxonomy(records, depth=2)
    assert taxonomy.depth == 2
    assert "a1x" not in taxonomy
    assert taxonomy.leaves() == ["a1", "a2", "b1"]

    taxonomy = parse_taxonomy(records, depth=1)
    assert taxonomy.leaves() == ["A", "B"]
    assert taxonomy.descendant_leaves("A") == ["A"]


@pytest.mark.parametrize(
    "change, error, key",
    [
        (lambda recs: recs.append({"id": "A", **recs[0]}), DuplicateFacet, "A"),
        (
            lambda recs: recs.append(dict(recs[2], parent="B")),
            MultiParentFacet,
            "a1",
        ),
        (lambda recs: recs[4].update(parent="Z"), OrphanParent, "b1"),
        (lambda recs: recs[4].update(level=3), LevelMismatch, "b1"),
        (lambda recs: recs[0].update(parent="B"), LevelMismatch, "A"),
        (lambda recs: recs[1].update(label=""), MalformedTaxonomy, "B"),
        (lambda recs: recs[1].update(level=True), MalformedTaxonomy, "B"),
        (lambda recs: recs.append("a string"), MalformedTaxonomy, "5"),
    ],
)
def test_parse_errors(change, error, key):
    records = _records()
    change(records)
    with pytest.raises(error) as info:
        parse_taxonomy(records)
    assert info.value.key == key
    assert isinstance(info.value, DataError)


def test_parse_cycle():
    records = [
        {"id": "A", "label": "Food", "parent": None, "level": 1},
        {"id": "x", "label": "X", "parent": "y", "level": 2},
        {"id": "y", "label": "Y", "parent": "x", "level": 3},
    ]
    with pytest.raises(TaxonomyCycle) as info:
        parse_taxonomy(records)
    assert info.value.key == "x"


def test_parse_not_a_list():
    with pytest.raises(MalformedTaxonomy):
        parse_taxonomy('{"id": "A"}')
    with pytest.raises(MalformedTaxonomy):
        parse_taxonomy("not json")


def test_write_and_load(tmp_path):
    taxonomy = parse_taxonomy(_records())
    taxonomy.write(tmp_path / "taxonomy.json")
    assert load_taxonomy(tmp_path / "taxonomy.json") == taxonomy
    assert taxonomy.to_records()[0] == _records()[0]

    with pytest.raises(DataError):
        load_taxonomy(tmp_path / "missing.json")


def test_load_fixture():
    taxonomy = load_taxonomy(DATADIR / "tiny" / "taxonomy.json")
    assert taxonomy.roots() == ["A", "B", "C"]
    assert taxonomy.children("C") == ["c1"]
    assert taxonomy.node("c1") == FacetNode(id="c1", label="Park", parent="C", level=2)


def test_graph_and_dot():
    taxonomy = Taxonomy(parse_taxonomy(_records()).nodes.values())
    assert sorted(taxonomy.graph.successors(ROOT)) == ["A", "B"]
    dot = taxonomy.dot()
    assert '"Sushi Restaurant"' in dot
    assert '"root"' in dot
    assert "forcelabels" in dot


def test_flatten_foursquare():
    document = (DATADIR / "foursquare.json").read_text()
    records = flatten_foursquare(document)
    assert [record["label"] for record in records] == [
        "Food",
        "Sushi Restaurant",
        "Thai Restaurant",
        "Som Tum Restaurant",
        "Nightlife Spot",
        "Cocktail Bar",
    ]
    assert records[3]["level"] == 3
    assert records[3]["parent"] == "4bf58dd8d48988d149941735"

    # a bare list works too
    assert flatten_foursquare(json.loads(document)["response"]["categories"]) == records

    taxonomy = load_taxonomy(DATADIR / "foursquare.json", depth=2, foursquare=True)
    assert taxonomy.depth == 2
    assert len(taxonomy.leaves()) == 3


def test_flatten_foursquare_multi_parent():
    document = [
        {"id": "f", "name": "Food", "categories": [{"id": "x", "name": "Bar"}]},
        {"id": "n", "name": "Nightlife", "categories": [{"id": "x", "name": "Bar"}]},
    ]
    with pytest.raises(MultiParentFacet) as info:
        flatten_foursquare(document)
    assert info.value.key == "x"


@pytest.mark.parametrize(
    "document",
    [{"response": []}, {"response": "x"}, {"response": None}, '{"response": [1]}'],
)
def test_flatten_foursquare_bad_envelope(document):
    with pytest.raises(MalformedTaxonomy):
        flatten_foursquare(document)
