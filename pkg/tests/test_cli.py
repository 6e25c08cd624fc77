import json
import shutil
from pathlib import Path

import pytest
from click.testing import CliRunner

from tfacets.__main__ import main
from tfacets.facets import (
    RunReport,
    DatasetPaths,
    load_dataset,
    load_taxonomy,
    read_score_maps,
)


DATADIR = Path(__file__).parent.joinpath("data")
TINY = DATADIR / "tiny"


def _invoke(cmd: str):
    runner = CliRunner()
    return runner.invoke(main, cmd.split(" "), catch_exceptions=False)


def _manifest(out: Path) -> dict:
    manifest = json.loads((out / "manifest.json").read_text())
    del manifest["created"]
    return manifest


def test_ingest(tmp_path):
    out = tmp_path / "checked"
    result = _invoke(f"ingest {TINY} -o {out}")
    assert result.exit_code == 0
    assert load_dataset(DatasetPaths.from_dir(out)) == load_dataset(
        DatasetPaths.from_dir(TINY)
    )
    manifest = _manifest(out)
    assert manifest["command"] == "ingest"
    assert "ratings.csv" in manifest["artifacts"]


def test_ingest_foursquare(tmp_path):
    result = _invoke(f"ingest {DATADIR / 'foursquare.json'} --foursquare -o {tmp_path}")
    assert result.exit_code == 0
    taxonomy = load_taxonomy(tmp_path / "taxonomy.json")
    expected = load_taxonomy(DATADIR / "foursquare.json", depth=2, foursquare=True)
    assert taxonomy == expected

    result = _invoke(f"ingest {TINY} --foursquare -o {tmp_path}")
    assert result.exit_code == 2


def test_ingest_invalid_data(tmp_path):
    broken = tmp_path / "broken"
    shutil.copytree(TINY, broken)
    with open(broken / "ratings.csv", "a") as ratings:
        ratings.write("u1,v99,2\n")
    result = _invoke(f"ingest {broken} -o {tmp_path / 'out'}")
    assert result.exit_code == 3


@pytest.mark.parametrize("fname", ["venues.jsonl", "taxonomy.json"])
def test_ingest_bad_encoding(tmp_path, fname):
    broken = tmp_path / "broken"
    shutil.copytree(TINY, broken)
    with open(broken / fname, "ab") as data_file:
        data_file.write(b'{"id": "\xff\xfe"}\n')
    result = _invoke(f"ingest {broken} -o {tmp_path / 'out'}")
    assert result.exit_code == 3


def test_synth(tmp_path):
    result = _invoke(f"synth --seed 3 -o {tmp_path / 'a'}")
    assert result.exit_code == 0
    result = _invoke(f"synth --seed 3 -o {tmp_path / 'b'}")
    assert result.exit_code == 0
    # the same seed always gives the same files
    assert _manifest(tmp_path / "a") == _manifest(tmp_path / "b")
    assert _manifest(tmp_path / "a")["seed"] == 3
    dataset = load_dataset(DatasetPaths.from_dir(tmp_path / "a"))
    assert len(dataset.users()) == 26

    result = _invoke(f"synth --dataset {TINY} -o {tmp_path / 'c'}")
    assert result.exit_code == 2
    # synthetic taxonomies always have two levels
    result = _invoke(f"synth --seed 3 --depth 1 -o {tmp_path / 'd'}")
    assert result.exit_code == 2
    assert not (tmp_path / "d").exists()


def test_score(tmp_path):
    cmd = (
        f"score --dataset {TINY} --model model1 --model model2 --baseline collab"
        f" -o {tmp_path}"
    )
    result = _invoke(cmd)
    assert result.exit_code == 0
    scores_dir = tmp_path / "scores"
    assert sorted(path.name for path in scores_dir.iterdir()) == [
        "model1-exact.jsonl",
        "model2-exact.jsonl",
        "most-prob-collab.jsonl",
    ]
    score_maps = list(read_score_maps(scores_dir / "model2-exact.jsonl"))
    assert [scores.request_id for scores in score_maps] == ["q1", "q2", "q3"]
    assert all(scores.model == "model2" for scores in score_maps)
    assert set(_manifest(tmp_path)["artifacts"]) == {
        "scores/model1-exact.jsonl",
        "scores/model2-exact.jsonl",
        "scores/most-prob-collab.jsonl",
    }


def test_build_tree(tmp_path):
    result = _invoke(
        f"build-tree --dataset {TINY} -r q1 --dot --agg avg --agg max -o {tmp_path}"
    )
    assert result.exit_code == 0
    for agg in ("avg", "max"):
        tree_dir = tmp_path / "trees" / f"model1-exact-{agg}"
        assert sorted(path.name for path in tree_dir.iterdir()) == [
            "q1.dot",
            "q1.json",
            "q1.txt",
        ]
        tree = json.loads((tree_dir / "q1.json").read_text())
        assert tree
        assert (tree_dir / "q1.txt").read_text().strip()


def test_build_tree_unknown_request(tmp_path):
    result = _invoke(f"build-tree --dataset {TINY} -r q9 -o {tmp_path}")
    assert result.exit_code == 3


def test_evaluate(tmp_path):
    out = tmp_path / "eval"
    result = _invoke(
        f"evaluate --dataset {TINY} --baseline person --agg avg --agg max -o {out}"
    )
    assert result.exit_code == 0
    names = sorted(path.stem for path in (out / "reports").iterdir())
    assert names == [
        "model1-exact-avg",
        "model1-exact-max",
        "most-prob-person-avg",
        "most-prob-person-max",
    ]
    table = (out / "table.txt").read_text()
    assert table in result.output
    assert "F-Scan (avg)" in table

    report = RunReport.load(out / "reports" / "model1-exact-max.json")
    assert report.fingerprint == _manifest(out)["fingerprint"]
    outcomes = {outcome.request_id: outcome for outcome in report.outcomes}
    # the first result of q2 is already relevant
    assert (outcomes["q2"].actions, outcomes["q2"].f_scan) == (0, 1)
    # nothing retrieved for q3 is relevant
    assert not outcomes["q3"].reachable
    assert outcomes["q3"].actions == 2 + 5 + 1


def test_evaluate_jobs(tmp_path):
    cmd = f"evaluate --seed 2 --model model1 --model model2 --agg avg -o {tmp_path}"
    assert _invoke(f"{cmd}/serial -j 1").exit_code == 0
    assert _invoke(f"{cmd}/parallel -j 3").exit_code == 0
    assert _manifest(tmp_path / "serial") == _manifest(tmp_path / "parallel")


def test_evaluate_config(tmp_path):
    config = tmp_path / "run.toml"
    config.write_text(
        f"""
[dataset]
path = "{TINY.as_posix()}"

[sim]
success_top_n = 1

[run]
out = "results"
"""
    )
    result = _invoke(f"evaluate --config {config} --top-n 2")
    assert result.exit_code == 0
    assert (tmp_path / "results" / "reports" / "model1-exact-max.json").exists()
    report_config = _manifest(tmp_path / "results")["config"]
    # command line options win over the config file
    assert report_config["sim"]["success_top_n"] == 2


@pytest.mark.parametrize(
    "options",
    [
        "--depth 0",
        "--k 0",
        "--background-n 0",
        "--coverage cosine --embeddings {bad}",
    ],
)
def test_invalid_options(tmp_path, options):
    bad = tmp_path / "bad.tsv"
    bad.write_text("A\tnot a number\n")
    options = options.format(bad=bad)
    result = _invoke(f"evaluate --dataset {TINY} {options} -o {tmp_path / 'out'}")
    assert result.exit_code in (2, 3)


def test_invalid_config_file(tmp_path):
    config = tmp_path / "run.toml"
    config.write_text("[scoring]\nmodel = 'model9'\n")
    result = _invoke(f"evaluate --config {config} -o {tmp_path / 'out'}")
    assert result.exit_code == 2


def test_compare(tmp_path):
    out = tmp_path / "eval"
    result = _invoke(f"evaluate --seed 1 --baseline person -o {out}")
    assert result.exit_code == 0
    reports = out / "reports"
    result = _invoke(
        f"compare {reports / 'model1-exact-max.json'}"
        f" {reports / 'most-prob-person-max.json'}"
        f" --against {reports / 'most-prob-person-max.json'} -o {tmp_path / 'cmp'}"
    )
    assert result.exit_code == 0
    assert (tmp_path / "cmp" / "table.txt").read_text() == (out / "table.txt").read_text()
    lines = (tmp_path / "cmp" / "comparison.tsv").read_text().splitlines()
    assert lines[0].split("\t")[:3] == ["method", "aggregation", "metric"]
    assert len(lines) == 1 + 2
    assert all(line.startswith("model1+exact\tmax") for line in lines[1:])


def test_profile_dump(tmp_path):
    result = _invoke(f"profile-dump --dataset {TINY} -u u1 -o {tmp_path}")
    assert result.exit_code == 0
    document = json.loads((tmp_path / "profiles.json").read_text())
    assert document["global"]["total_rated"] == 7
    assert document["profiles"] == [
        {
            "user": "u1",
            "total_rated": 4,
            "positive_count": {"a1": 2, "b1": 1, "c1": 1},
        }
    ]
