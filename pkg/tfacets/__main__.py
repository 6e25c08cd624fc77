#!/usr/bin/env python

import click
from pathlib import Path
from typing import Tuple


CONTEXT_SETTINGS = dict(help_option_names=["-h", "--help"])
VERBOSITY = ["CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG", "NOTSET"]


class TFacetsGroup(click.Group):
    """
    A click group that turns our errors into distinct exit statuses

    2 means the configuration or usage was invalid, 3 means the input data were
    invalid, and 1 means something else went wrong
    """

    def invoke(self, ctx: click.Context):
        from haptools.logging import getLogger
        from .facets.errors import ConfigError, DataError

        try:
            return super().invoke(ctx)
        except ConfigError as err:
            getLogger(name="tfacets").error(f"Invalid configuration: {err}")
            ctx.exit(2)
        except DataError as err:
            getLogger(name="tfacets").error(f"Invalid data: {err}")
            ctx.exit(3)


@click.group(cls=TFacetsGroup, context_settings=CONTEXT_SETTINGS)
@click.version_option()
def main():
    """
    tfacets: Personalized type-facet ranking

    Score the type facets (venue categories) of search results for a user, rank them
    into a paginated tree, and measure how much effort a simulated user spends to
    reach a relevant result
    """
    pass


def config_options(func):
    """
    Add the options shared by every command that reads a dataset
    """
    options = [
        click.option(
            "--config",
            "config_file",
            type=click.Path(exists=True, dir_okay=False, path_type=Path),
            default=None,
            help="A TOML file with the settings of the run",
        ),
        click.option(
            "--dataset",
            type=click.Path(exists=True, file_okay=False, path_type=Path),
            default=None,
            show_default="a synthetic dataset",
            help="A directory with taxonomy.json, venues.jsonl, ratings.csv, etc",
        ),
        click.option(
            "--seed",
            type=int,
            default=None,
            show_default="0",
            help="Generate a synthetic dataset from this seed instead of reading one",
        ),
        click.option(
            "--depth",
            type=int,
            default=None,
            show_default="2",
            help="Only consider this many levels of the taxonomy",
        ),
        click.option(
            "-o",
            "--out",
            type=click.Path(file_okay=False, path_type=Path),
            default=None,
            show_default="out",
            help="The directory to which to write outputs",
        ),
        click.option(
            "-v",
            "--verbosity",
            type=click.Choice(VERBOSITY),
            default="INFO",
            show_default=True,
            help="The level of verbosity desired",
        ),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def scoring_options(func):
    """
    Add the options that choose how facets are scored
    """
    options = [
        click.option(
            "--model",
            "models",
            type=click.Choice(["model1", "model2"]),
            multiple=True,
            show_default="model1",
            help="The scoring model; repeat to run several",
        ),
        click.option(
            "--coverage",
            "coverages",
            type=click.Choice(["exact", "cosine"]),
            multiple=True,
            show_default="exact",
            help="The coverage estimator; repeat to run several",
        ),
        click.option(
            "--embeddings",
            type=click.Path(exists=True, dir_okay=False, path_type=Path),
            default=None,
            show_default="hashed label vectors",
            help="A file of facet vectors for cosine coverage: 'facet<TAB>values'",
        ),
        click.option(
            "--background-n",
            "background_ns",
            type=int,
            multiple=True,
            show_default="1",
            help="The number of top results in the background distribution",
        ),
        click.option(
            "--baseline",
            "baselines",
            type=click.Choice(["person", "collab"]),
            multiple=True,
            help="Also run a most-probable baseline; repeat to run both",
        ),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def build_options(func):
    """
    Add the options that control tree building
    """
    options = [
        click.option(
            "--agg",
            "aggregations",
            type=click.Choice(["avg", "max"]),
            multiple=True,
            show_default="max",
            help="How parents aggregate their children's scores; repeat to run both",
        ),
        click.option(
            "--k",
            "top_k",
            type=int,
            default=None,
            show_default="3",
            help="The number of top children aggregated into a parent's score",
        ),
        click.option(
            "--page1",
            "page_size_level1",
            type=int,
            default=None,
            show_default="3",
            help="The number of level-1 facets per page",
        ),
        click.option(
            "--page2",
            "page_size_level2",
            type=int,
            default=None,
            show_default="3",
            help="The number of child facets per page",
        ),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _run_config(config_file: Path = None, top_n: int = None, **overrides):
    """
    Combine the config file (if any) with the options given on the command line
    """
    from dataclasses import replace
    from .config import RunConfig, load_run_config

    if "seed" in overrides:
        overrides["synth_seed"] = overrides.pop("seed")
    if config_file is None:
        config = RunConfig(synth_seed=0)
    else:
        config = load_run_config(config_file)
    config = config.override(**overrides)
    if top_n is not None:
        config = replace(config, sim=replace(config.sim, success_top_n=top_n))
    return config


@main.command(context_settings=CONTEXT_SETTINGS)
@click.argument("source", type=click.Path(exists=True, path_type=Path))
@click.option(
    "--foursquare",
    is_flag=True,
    show_default=True,
    default=False,
    help="SOURCE is a Foursquare category hierarchy to convert into a taxonomy",
)
@click.option(
    "--depth",
    type=int,
    default=2,
    show_default=True,
    help="Only consider this many levels of the taxonomy",
)
@click.option(
    "-o",
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("out"),
    show_default=True,
    help="The directory to which to write the validated dataset or taxonomy",
)
@click.option(
    "-v",
    "--verbosity",
    type=click.Choice(VERBOSITY),
    default="INFO",
    show_default=True,
    help="The level of verbosity desired",
)
def ingest(
    source: Path,
    foursquare: bool = False,
    depth: int = 2,
    out: Path = Path("out"),
    verbosity: str = "INFO",
):
    """
    Validate a dataset and write it back out in canonical form

    SOURCE is a dataset directory, or a Foursquare categories file if --foursquare is
    given, in which case only the converted taxonomy is written

    Ex: tfacets ingest tests/data/tiny -o tiny-checked
    """
    from haptools import logging
    from .config import RunConfig, write_manifest
    from .facets import load_taxonomy, write_dataset

    log = logging.getLogger(name="tfacets", level=verbosity)
    out.mkdir(parents=True, exist_ok=True)
    if foursquare:
        if not source.is_file():
            raise click.UsageError("With --foursquare, SOURCE must be a file")
        log.info(f"Converting Foursquare categories from {source}")
        taxonomy = load_taxonomy(source, depth=depth, foursquare=True, log=log)
        taxonomy.write(out / "taxonomy.json")
        log.info(f"Wrote {len(taxonomy)} facets of depth {taxonomy.depth}")
        return
    if not source.is_dir():
        raise click.UsageError("SOURCE must be a dataset directory")
    config = RunConfig(dataset=source, depth=depth)
    dataset = config.load_dataset(log=log)
    log.info(
        f"Validated {len(dataset.venues)} venues, {len(dataset.ratings)} ratings, and "
        f"{len(dataset.requests)} requests"
    )
    paths = write_dataset(dataset, out)
    write_manifest(out, config, [*paths, paths.meta], command="ingest")


@main.command(context_settings=CONTEXT_SETTINGS)
@config_options
def synth(
    config_file: Path = None,
    dataset: Path = None,
    seed: int = None,
    depth: int = None,
    out: Path = None,
    verbosity: str = "INFO",
):
    """
    Generate a synthetic dataset

    The dataset is a pure function of the seed and the [synth] section of the config

    Ex: tfacets synth --seed 7 -o synth7
    """
    from haptools import logging
    from .config import write_manifest
    from .facets import write_dataset

    log = logging.getLogger(name="tfacets", level=verbosity)
    if dataset is not None:
        raise click.UsageError("synth generates a dataset; it can't read --dataset")
    if depth is not None:
        raise click.UsageError(
            "synth generates a two-level taxonomy; it can't take --depth"
        )
    config = _run_config(config_file, seed=seed, out=out)
    if config.synth_seed is None:
        raise click.UsageError("synth needs a --seed or a [synth] config section")
    data = config.load_dataset(log=log)
    config.out.mkdir(parents=True, exist_ok=True)
    paths = write_dataset(data, config.out)
    write_manifest(config.out, config, [*paths, paths.meta], command="synth")
    log.info(f"Wrote a synthetic dataset to {config.out}")


def _scorers(config, data, log):
    """
    Create a scorer for every scoring config and baseline of a run
    """
    from .facets import make_scorer
    from .facets.scoring import BASELINES

    table = config.load_embeddings(data, log=log)
    positive_min = data.scale.positive_min
    scorers = [
        make_scorer(scoring, log=log)
        for scoring in config.scoring_configs(positive_min, table)
    ]
    scorers.extend(
        BASELINES[name](positive_min=positive_min, log=log) for name in config.baselines
    )
    return scorers


@main.command(context_settings=CONTEXT_SETTINGS)
@config_options
@scoring_options
def score(
    config_file: Path = None,
    dataset: Path = None,
    seed: int = None,
    depth: int = None,
    out: Path = None,
    verbosity: str = "INFO",
    models: Tuple[str] = tuple(),
    coverages: Tuple[str] = tuple(),
    embeddings: Path = None,
    background_ns: Tuple[int] = tuple(),
    baselines: Tuple[str] = tuple(),
):
    """
    Score the candidate facets of every request

    Each scoring method is written to scores/<method>.jsonl in the output directory,
    with one line per request

    Ex: tfacets score --seed 7 --model model1 --model model2 -o scored
    """
    from haptools import logging
    from .config import write_manifest
    from .facets import build_profile, build_global_stats, write_score_maps

    log = logging.getLogger(name="tfacets", level=verbosity)
    config = _run_config(
        config_file,
        dataset=dataset,
        seed=seed,
        depth=depth,
        out=out,
        models=models,
        coverages=coverages,
        embeddings=embeddings,
        background_ns=background_ns,
        baselines=baselines,
    )
    data = config.load_dataset(log=log)
    scores_dir = config.out / "scores"
    scores_dir.mkdir(parents=True, exist_ok=True)
    artifacts = []
    for scorer in _scorers(config, data, log):
        log.info(f"Scoring {len(data.requests)} requests with {scorer.label}")
        global_stats = build_global_stats(data, scorer.positive_min)
        score_maps = [
            scorer.score(
                data,
                request,
                build_profile(data, request.user, scorer.positive_min),
                global_stats,
            )
            for request in data.requests
        ]
        fname = scores_dir / f"{scorer.label.replace('+', '-')}.jsonl"
        write_score_maps(score_maps, fname)
        artifacts.append(fname)
    write_manifest(config.out, config, artifacts, command="score")


@main.command(name="build-tree", context_settings=CONTEXT_SETTINGS)
@config_options
@scoring_options
@build_options
@click.option(
    "-r",
    "--request",
    "request_ids",
    type=str,
    multiple=True,
    show_default="all requests",
    help="The ID of a request to build a tree for; repeat for several",
)
@click.option(
    "--dot",
    is_flag=True,
    show_default=True,
    default=False,
    help="Also write each tree in the dot language",
)
def build_tree(
    config_file: Path = None,
    dataset: Path = None,
    seed: int = None,
    depth: int = None,
    out: Path = None,
    verbosity: str = "INFO",
    models: Tuple[str] = tuple(),
    coverages: Tuple[str] = tuple(),
    embeddings: Path = None,
    background_ns: Tuple[int] = tuple(),
    baselines: Tuple[str] = tuple(),
    aggregations: Tuple[str] = tuple(),
    top_k: int = None,
    page_size_level1: int = None,
    page_size_level2: int = None,
    request_ids: Tuple[str] = tuple(),
    dot: bool = False,
):
    """
    Build the ranked facet tree of each request

    Each tree is written to trees/<method>-<agg>/<request>.json and .txt, where the
    text has one displayed item per line in reading order

    Ex: tfacets build-tree --seed 7 --agg avg --agg max -r r001
    """
    import json
    from haptools import logging
    from .config import write_manifest
    from .facets import build_profile, build_global_stats, build_fixed_level

    log = logging.getLogger(name="tfacets", level=verbosity)
    config = _run_config(
        config_file,
        dataset=dataset,
        seed=seed,
        depth=depth,
        out=out,
        models=models,
        coverages=coverages,
        embeddings=embeddings,
        background_ns=background_ns,
        baselines=baselines,
        aggregations=aggregations,
        top_k=top_k,
        page_size_level1=page_size_level1,
        page_size_level2=page_size_level2,
    )
    data = config.load_dataset(log=log)
    requests = [data.request(request_id) for request_id in request_ids] or list(
        data.requests
    )
    artifacts = []
    for scorer in _scorers(config, data, log):
        global_stats = build_global_stats(data, scorer.positive_min)
        for request in requests:
            profile = build_profile(data, request.user, scorer.positive_min)
            scores = scorer.score(data, request, profile, global_stats)
            for build_config in config.build_configs():
                tree = build_fixed_level(data.taxonomy, scores.scores, build_config, log)
                tree_dir = config.out / "trees" / (
                    f"{scorer.label.replace('+', '-')}-{build_config.aggregation}"
                )
                tree_dir.mkdir(parents=True, exist_ok=True)
                outputs = {
                    ".json": json.dumps(tree.to_json(), indent=1) + "\n",
                    ".txt": tree.to_text(),
                }
                if dot:
                    outputs[".dot"] = tree.dot()
                for suffix, text in outputs.items():
                    fname = tree_dir / f"{request.request_id}{suffix}"
                    fname.write_text(text, encoding="utf-8")
                    artifacts.append(fname)
    log.info(f"Wrote {len(artifacts)} tree files to {config.out / 'trees'}")
    write_manifest(config.out, config, artifacts, command="build-tree")


@main.command(context_settings=CONTEXT_SETTINGS)
@config_options
@scoring_options
@build_options
@click.option(
    "--top-n",
    type=int,
    default=None,
    show_default="5",
    help="The user is satisfied by a relevant result among this many top results",
)
@click.option(
    "-j",
    "--jobs",
    type=int,
    default=None,
    show_default="1",
    help="The number of processes to evaluate requests with",
)
def evaluate(
    config_file: Path = None,
    dataset: Path = None,
    seed: int = None,
    depth: int = None,
    out: Path = None,
    verbosity: str = "INFO",
    models: Tuple[str] = tuple(),
    coverages: Tuple[str] = tuple(),
    embeddings: Path = None,
    background_ns: Tuple[int] = tuple(),
    baselines: Tuple[str] = tuple(),
    aggregations: Tuple[str] = tuple(),
    top_k: int = None,
    page_size_level1: int = None,
    page_size_level2: int = None,
    top_n: int = None,
    jobs: int = None,
):
    """
    Measure the effort of a simulated user for every scoring method and aggregation

    One report per method and aggregation is written to reports/<method>-<agg>.json,
    along with a summary in table.txt

    Ex: tfacets evaluate --seed 7 --model model1 --coverage cosine --baseline person
    """
    from haptools import logging
    from .config import write_manifest
    from .facets import evaluate_run, results_table, format_table

    log = logging.getLogger(name="tfacets", level=verbosity)
    config = _run_config(
        config_file,
        top_n=top_n,
        dataset=dataset,
        seed=seed,
        depth=depth,
        out=out,
        models=models,
        coverages=coverages,
        embeddings=embeddings,
        background_ns=background_ns,
        baselines=baselines,
        aggregations=aggregations,
        top_k=top_k,
        page_size_level1=page_size_level1,
        page_size_level2=page_size_level2,
        jobs=jobs,
    )
    data = config.load_dataset(log=log)
    fingerprint, settings = config.fingerprint(), config.to_json()
    reports_dir = config.out / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    reports, artifacts = [], []
    for scorer in _scorers(config, data, log):
        for build_config in config.build_configs():
            report = evaluate_run(
                data, scorer, build_config, config.sim, jobs=config.jobs, log=log
            ).with_config(fingerprint, settings)
            log.info(
                f"{report.name}: F-Scan {report.mean_f_scan:.3f}, #Actions "
                f"{report.mean_actions:.3f}, {report.num_unreachable} unreachable"
            )
            fname = reports_dir / f"{report.name}.json"
            report.write(fname)
            reports.append(report)
            artifacts.append(fname)
    table = config.out / "table.txt"
    table.write_text(format_table(results_table(reports)), encoding="utf-8")
    artifacts.append(table)
    write_manifest(config.out, config, artifacts, command="evaluate")
    click.echo(table.read_text(encoding="utf-8"), nl=False)


@main.command(context_settings=CONTEXT_SETTINGS)
@click.argument(
    "reports", type=click.Path(exists=True, dir_okay=False, path_type=Path), nargs=-1
)
@click.option(
    "-b",
    "--against",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    show_default="no significance tests",
    help="A baseline report to test every other report against",
)
@click.option(
    "--correction",
    type=click.Choice(["bonferroni", "bh"]),
    default="bonferroni",
    show_default=True,
    help="Correct p-values via either bonferroni or benjamini-hochberg",
)
@click.option(
    "-o",
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    show_default="stdout only",
    help="A directory to which to write table.txt and comparison.tsv",
)
@click.option(
    "-v",
    "--verbosity",
    type=click.Choice(VERBOSITY),
    default="INFO",
    show_default=True,
    help="The level of verbosity desired",
)
def compare(
    reports: Tuple[Path],
    against: Path = None,
    correction: str = "bonferroni",
    out: Path = None,
    verbosity: str = "INFO",
):
    """
    Join evaluation reports into a single table

    REPORTS are JSON files written by the evaluate command

    Ex: tfacets compare out/reports/*.json --against out/reports/most-prob-person-max.json
    """
    from haptools import logging
    from .facets import RunReport, results_table, format_table, compare_reports

    log = logging.getLogger(name="tfacets", level=verbosity)
    if not reports:
        raise click.UsageError("Provide at least one report")
    loaded = [RunReport.load(fname) for fname in reports]
    fingerprints = {report.fingerprint for report in loaded}
    if len(fingerprints) > 1:
        log.warning("The reports come from runs with different configurations")
    table = format_table(results_table(loaded))
    click.echo(table, nl=False)
    comparison = None
    if against is not None:
        comparison = compare_reports(
            loaded, RunReport.load(against), correction=correction, log=log
        )
        click.echo(comparison.to_string(index=False, float_format="{:.4g}".format))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "table.txt").write_text(table, encoding="utf-8")
        if comparison is not None:
            comparison.to_csv(
                out / "comparison.tsv", sep="\t", index=False, lineterminator="\n"
            )


@main.command(name="profile-dump", context_settings=CONTEXT_SETTINGS)
@config_options
@click.option(
    "-u",
    "--user",
    "users",
    type=str,
    multiple=True,
    show_default="all users",
    help="The ID of a user to dump; repeat for several",
)
def profile_dump(
    config_file: Path = None,
    dataset: Path = None,
    seed: int = None,
    depth: int = None,
    out: Path = None,
    verbosity: str = "INFO",
    users: Tuple[str] = tuple(),
):
    """
    Write the facet profile of each user and the pooled statistics as JSON

    The output is written to profiles.json in the output directory

    Ex: tfacets profile-dump --seed 7 -u u03
    """
    import json
    from haptools import logging
    from .config import write_manifest
    from .facets import build_profile, build_global_stats

    log = logging.getLogger(name="tfacets", level=verbosity)
    config = _run_config(config_file, dataset=dataset, seed=seed, depth=depth, out=out)
    data = config.load_dataset(log=log)
    users = list(users) or data.users()
    document = {
        "global": build_global_stats(data).to_json(),
        "profiles": [build_profile(data, user).to_json() for user in users],
    }
    config.out.mkdir(parents=True, exist_ok=True)
    fname = config.out / "profiles.json"
    with open(fname, "w", encoding="utf-8") as profile_file:
        json.dump(document, profile_file, indent=1)
        profile_file.write("\n")
    log.info(f"Wrote the profiles of {len(users)} users to {fname}")
    write_manifest(config.out, config, [fname], command="profile-dump")


if __name__ == "__main__":
    # run the CLI if someone tries 'python -m tfacets' on the command line
    main(prog_name="tfacets")
