from __future__ import annotations
import json
import hashlib
import itertools
from pathlib import Path
from logging import Logger
from datetime import datetime, timezone
from dataclasses import dataclass, field, asdict, replace, fields
from typing import Iterable

from haptools.logging import getLogger

from .facets.errors import ConfigError
from .facets.treebuild import AGGREGATIONS, BuildConfig
from .facets.evalsim import SimConfig
from .facets.synthetic import SyntheticSpec, generate_synthetic
from .facets.datastore import Dataset, DatasetPaths, load_dataset
from .facets.scoring import MODELS, BASELINES, ScoringConfig
from .facets.coverage import (
    EmbeddingTable,
    make_coverage,
    load_embeddings,
    fallback_embeddings,
)

# tomllib is part of the standard library only when py >= 3.11
try:
    import tomllib
except ImportError:
    import tomli as tomllib


COVERAGES = ("exact", "cosine")


@dataclass(frozen=True)
class RunConfig:
    """
    Everything that determines the outputs of a run

    Attributes
    ----------
    dataset : Path, optional
        A dataset directory. Exactly one of this and ``synth_seed`` must be set.
    depth : int
        The taxonomy depth to load the dataset with
    synth_seed : int, optional
        The seed of a synthetic dataset
    synth : SyntheticSpec
        The shape of the synthetic dataset
    models : tuple[str]
        The scoring models to evaluate
    coverages : tuple[str]
        The coverage estimators to evaluate
    background_ns : tuple[int]
        The background depths N to evaluate
    c : float
        The constant in P(q|f)
    epsilon : float
        The floor for Model-2 denominators
    embeddings : Path, optional
        Facet vectors for cosine coverage. Hashed label vectors are used if absent.
    aggregations : tuple[str]
        The tree building aggregations to evaluate
    top_k : int
        The number of children aggregated into a parent's score
    page_size_level1 : int
        The number of level-1 facets per page
    page_size_level2 : int
        The number of child facets per page
    sim : SimConfig
        The simulated user's settings
    baselines : tuple[str]
        Baselines to evaluate alongside the models: "person" and/or "collab"
    out : Path
        The output directory
    jobs : int
        The number of processes to use
    """

    dataset: Path = None
    depth: int = 2
    synth_seed: int = None
    synth: SyntheticSpec = field(default_factory=SyntheticSpec)
    models: tuple = ("model1",)
    coverages: tuple = ("exact",)
    background_ns: tuple = (1,)
    c: float = 1.0
    epsilon: float = 1e-9
    embeddings: Path = None
    aggregations: tuple = ("max",)
    top_k: int = 3
    page_size_level1: int = 3
    page_size_level2: int = 3
    sim: SimConfig = field(default_factory=SimConfig)
    baselines: tuple = tuple()
    out: Path = Path("out")
    jobs: int = 1

    def __post_init__(self):
        if (self.dataset is None) == (self.synth_seed is None):
            raise ConfigError(
                "Exactly one of a dataset path or a synthetic seed is required",
                key="dataset",
            )
        if self.depth < 1:
            raise ConfigError("depth must be at least 1", key="depth")
        choices = (
            ("models", MODELS),
            ("coverages", COVERAGES),
            ("aggregations", AGGREGATIONS),
            ("baselines", tuple(BASELINES)),
        )
        for name, allowed in choices:
            for value in getattr(self, name):
                if value not in allowed:
                    raise ConfigError(
                        f"Unknown {name[:-1]} '{value}'; choose from {allowed}", key=name
                    )
        if any(num < 1 for num in self.background_ns):
            raise ConfigError("background_n must be at least 1", key="background_n")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1", key="jobs")
        # fail early on bad build settings
        self.build_configs()

    def override(self, **kwargs) -> RunConfig:
        """
        Replace the values that were given on the command line

        Empty values (None or an empty tuple) are ignored.
        """
        changes = {
            key: val for key, val in kwargs.items() if val is not None and val != tuple()
        }
        if changes.get("dataset") is not None:
            changes.setdefault("synth_seed", None)
        elif changes.get("synth_seed") is not None:
            changes.setdefault("dataset", None)
        return replace(self, **changes)

    def build_configs(self) -> list[BuildConfig]:
        return [
            BuildConfig(
                aggregation=aggregation,
                top_k=self.top_k,
                page_size_level1=self.page_size_level1,
                page_size_level2=self.page_size_level2,
            )
            for aggregation in self.aggregations
        ]

    def scoring_configs(
        self, positive_min: int, table: EmbeddingTable = None
    ) -> list[ScoringConfig]:
        """
        The cross product of the models, the coverages, and the background depths
        """
        configs = []
        for model, kind, num in itertools.product(
            self.models, self.coverages, self.background_ns
        ):
            configs.append(
                ScoringConfig(
                    model=model,
                    coverage=make_coverage(kind, table),
                    background_n=num,
                    c=self.c,
                    epsilon=self.epsilon,
                    positive_min=positive_min,
                )
            )
        return configs

    def load_dataset(self, log: Logger = None) -> Dataset:
        log = log or getLogger(self.__class__.__name__)
        if self.dataset is not None:
            log.info(f"Loading dataset from {self.dataset}")
            return load_dataset(DatasetPaths.from_dir(self.dataset), self.depth, log=log)
        log.info(f"Generating a synthetic dataset with seed {self.synth_seed}")
        return generate_synthetic(self.synth_seed, self.synth, log=log)

    def load_embeddings(self, dataset: Dataset, log: Logger = None) -> EmbeddingTable:
        """
        Load the facet vectors, if cosine coverage is needed
        """
        if "cosine" not in self.coverages:
            return None
        if self.embeddings is None:
            return fallback_embeddings(dataset.taxonomy)
        return load_embeddings(self.embeddings, log=log)

    def to_json(self) -> dict:
        """
        The settings that affect the contents of the outputs

        The output directory and the number of jobs are left out.
        """
        document = {
            "dataset": None if self.dataset is None else str(self.dataset),
            "depth": self.depth,
            "synth_seed": self.synth_seed,
            "synth": self.synth.to_dict() if self.synth_seed is not None else None,
            "scoring": {
                "models": list(self.models),
                "coverages": list(self.coverages),
                "background_n": list(self.background_ns),
                "c": self.c,
                "epsilon": self.epsilon,
                "embeddings": None if self.embeddings is None else str(self.embeddings),
            },
            "build": {
                "aggregations": list(self.aggregations),
                "top_k": self.top_k,
                "page_size_level1": self.page_size_level1,
                "page_size_level2": self.page_size_level2,
            },
            "sim": asdict(self.sim),
            "baselines": list(self.baselines),
        }
        return document

    def fingerprint(self) -> str:
        """
        The SHA-256 of the canonical JSON of :py:meth:`to_json`
        """
        canonical = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _as_tuple(value) -> tuple:
    if isinstance(value, (list, tuple)):
        return tuple(value)
    return (value,)


def _pop_section(document: dict, name: str) -> dict:
    section = document.pop(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f"[{name}] must be a table", key=name)
    return section


def _check_empty(section: dict, name: str):
    if section:
        raise ConfigError(
            f"Unknown keys in [{name}]: {', '.join(sorted(section))}", key=name
        )


def _build(cls, section: dict, name: str):
    allowed = {attr.name for attr in fields(cls)}
    _check_empty({key: val for key, val in section.items() if key not in allowed}, name)
    try:
        return cls(**section)
    except TypeError as err:
        raise ConfigError(f"Invalid [{name}]: {err}", key=name)


def load_run_config(fname: Path | str) -> RunConfig:
    """
    Read a run configuration from a TOML file

    Relative paths in the file are resolved against the file's directory.

    Parameters
    ----------
    fname : Path | str
        The path to the TOML file

    Raises
    ------
    ConfigError
        If the file can't be read or parsed, or if it has unknown or invalid settings

    Returns
    -------
    RunConfig
        The configuration, with defaults for anything the file doesn't mention
    """
    fname = Path(fname)
    try:
        with open(fname, "rb") as config_file:
            document = tomllib.load(config_file)
    except OSError as err:
        raise ConfigError(f"Cannot read config {fname}: {err}", key=str(fname))
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"Cannot parse config {fname}: {err}", key=str(fname))
    base = fname.parent
    kwargs = {}

    dataset = _pop_section(document, "dataset")
    if "path" in dataset:
        kwargs["dataset"] = base / dataset.pop("path")
    if "depth" in dataset:
        kwargs["depth"] = dataset.pop("depth")
    _check_empty(dataset, "dataset")

    synth = _pop_section(document, "synth")
    if synth:
        kwargs["synth_seed"] = synth.pop("seed", 0)
        kwargs["synth"] = _build(SyntheticSpec, synth, "synth")

    scoring = _pop_section(document, "scoring")
    renames = {
        "model": "models",
        "coverage": "coverages",
        "background_n": "background_ns",
    }
    for key in ("model", "models", "coverage", "coverages", "background_n"):
        if key in scoring:
            kwargs[renames.get(key, key)] = _as_tuple(scoring.pop(key))
    for key in ("c", "epsilon"):
        if key in scoring:
            kwargs[key] = scoring.pop(key)
    if "embeddings" in scoring:
        kwargs["embeddings"] = base / scoring.pop("embeddings")
    _check_empty(scoring, "scoring")

    build = _pop_section(document, "build")
    for key in ("aggregation", "aggregations"):
        if key in build:
            kwargs["aggregations"] = _as_tuple(build.pop(key))
    for key in ("top_k", "page_size_level1", "page_size_level2"):
        if key in build:
            kwargs[key] = build.pop(key)
    _check_empty(build, "build")

    sim = _pop_section(document, "sim")
    if sim:
        kwargs["sim"] = _build(SimConfig, sim, "sim")

    run = _pop_section(document, "run")
    if "out" in run:
        kwargs["out"] = base / run.pop("out")
    if "baselines" in run:
        kwargs["baselines"] = _as_tuple(run.pop("baselines"))
    if "jobs" in run:
        kwargs["jobs"] = run.pop("jobs")
    _check_empty(run, "run")

    _check_empty(document, "config")
    if "dataset" in kwargs and "synth_seed" in kwargs:
        raise ConfigError("Use either [dataset] or [synth] but not both", key="dataset")
    if "dataset" not in kwargs and "synth_seed" not in kwargs:
        # a seed may still come from the command line
        kwargs["synth_seed"] = 0
    try:
        return RunConfig(**kwargs)
    except TypeError as err:
        raise ConfigError(f"Invalid config {fname}: {err}", key=str(fname))


def sha256sum(fname: Path) -> str:
    digest = hashlib.sha256()
    with open(fname, "rb") as artifact:
        for chunk in iter(lambda: artifact.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    out: Path, config: RunConfig, artifacts: Iterable[Path], command: str
) -> Path:
    """
    Record the configuration and the checksum of every artifact of a run

    Parameters
    ----------
    out : Path
        The output directory. The manifest is written to manifest.json inside it.
    config : RunConfig
        The effective configuration
    artifacts : Iterable[Path]
        The files the run wrote
    command : str
        The name of the command that was run

    Returns
    -------
    Path
        The path to the manifest
    """
    manifest = {
        "command": command,
        "fingerprint": config.fingerprint(),
        "seed": config.synth_seed,
        "config": config.to_json(),
        "artifacts": {
            artifact.relative_to(out).as_posix(): sha256sum(artifact)
            for artifact in sorted(artifacts)
        },
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    fname = out / "manifest.json"
    with open(fname, "w", encoding="utf-8") as manifest_file:
        json.dump(manifest, manifest_file, indent=1)
        manifest_file.write("\n")
    return fname
