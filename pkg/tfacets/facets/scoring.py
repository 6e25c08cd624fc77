from __future__ import annotations
import json
from pathlib import Path
from logging import Logger
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np
from haptools.logging import getLogger

from .errors import ConfigError, DataError
from .coverage import Coverage, ExactCoverage
from .datastore import Dataset, RequestCase, Venue, candidate_facets
from .profile import UserProfile, GlobalStats, build_profile, build_global_stats


MODELS = ("model1", "model2")


# We declare this class to be a dataclass to automatically define __init__ and a few
# other methods. We use frozen=True to make it immutable.
@dataclass(frozen=True)
class ScoringConfig:
    """
    Settings for the probabilistic facet scoring models

    Attributes
    ----------
    model : str
        Either "model1" (no background data) or "model2" (normalized by the background
        distribution of the retrieved results)
    coverage : Coverage
        The estimator for P(cov(f_u, f_i) | f_u, f_i)
    background_n : int
        The number of top results used to estimate the background distribution
    c : float
        The constant in P(q|f). It cancels out of the posterior.
    epsilon : float
        The floor for Model-2 denominators
    positive_min : int, optional
        Ratings at or above this value count as positive when building profiles.
        Defaults to the threshold declared by the dataset.
    """

    model: str = "model1"
    coverage: Coverage = field(default_factory=ExactCoverage)
    background_n: int = 1
    c: float = 1.0
    epsilon: float = 1e-9
    positive_min: int = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"Unknown scoring model '{self.model}'", key="model")
        if self.background_n < 1:
            raise ConfigError("background_n must be at least 1", key="background_n")
        if not self.c > 0:
            raise ConfigError("c must be positive", key="c")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive", key="epsilon")

    @property
    def label(self) -> str:
        label = f"{self.model}+{self.coverage.name}"
        if self.background_n != 1:
            label += f"+n{self.background_n}"
        return label


@dataclass(frozen=True)
class FacetScores:
    """
    The relevance score of every candidate leaf facet for a single request

    Attributes
    ----------
    request_id : str
        The request that was scored
    scores : dict[str, float]
        The score of each candidate facet
    model : str
        The name of the scoring model or baseline
    coverage : str, optional
        The name of the coverage estimator, if the model uses one
    background_unsupported : frozenset[str]
        Model-2 facets whose denominator had to be floored at epsilon
    """

    request_id: str
    scores: dict
    model: str
    coverage: str = None
    background_unsupported: frozenset = frozenset()

    @property
    def method(self) -> str:
        if self.coverage is None:
            return self.model
        return f"{self.model}+{self.coverage}"

    def to_json(self) -> dict:
        return {
            "request_id": self.request_id,
            "model": self.model,
            "coverage": self.coverage,
            "scores": dict(sorted(self.scores.items())),
            "background_unsupported": sorted(self.background_unsupported),
        }


def background_facet_given_query(
    request: RequestCase, venues: dict[str, Venue], facet: str, n: int = 1
) -> float:
    """
    P_r(f|q): average the relevance of the top N results that carry a facet

    Parameters
    ----------
    request : RequestCase
        The request, with its results in rank order
    venues : dict[str, Venue]
        The venues, so that we can look up the facets of each result
    facet : str
        The facet f
    n : int, optional
        The number of top results to consider. If there are fewer results, the missing
        ones count as zero.

    Returns
    -------
    float
        A probability in [0, 1]
    """
    total = 0.0
    for result in request.results[:n]:
        if facet in venues[result.venue].facets:
            total += result.relevance
    return total / n


def background_distribution(
    request: RequestCase, venues: dict[str, Venue], facets: Iterable[str], n: int = 1
) -> dict[str, float]:
    return {
        facet: background_facet_given_query(request, venues, facet, n) for facet in facets
    }


def query_given_facet(
    global_stats: GlobalStats,
    request: RequestCase,
    venues: dict[str, Venue],
    facet: str,
    c: float = 1.0,
    n: int = 1,
) -> float:
    """
    P(q|f) = c * P_r(f|q) / P_r(f), or 0 if no one ever rated the facet positively
    """
    prior = global_stats.prior(facet)
    if prior <= 0:
        return 0.0
    return c * background_facet_given_query(request, venues, facet, n) / prior


def user_facet_posterior(
    profile: UserProfile,
    global_stats: GlobalStats,
    request: RequestCase,
    venues: dict[str, Venue],
    config: ScoringConfig = ScoringConfig(),
    log: Logger = None,
) -> dict[str, float]:
    """
    P(f_u|q, theta_u) for every facet f_u in a user's profile, via Bayes' rule

    Parameters
    ----------
    profile : UserProfile
        The user's profile
    global_stats : GlobalStats
        Pooled statistics, built with the same positive threshold as the profile
    request : RequestCase
        The request
    venues : dict[str, Venue]
        The venues, keyed by ID
    config : ScoringConfig, optional
        Provides c and the background depth N
    log : Logger, optional
        A logging module to which to write messages about progress and any errors

    Returns
    -------
    dict[str, float]
        The posterior of each profile facet. It sums to 1 unless the profile is empty,
        in which case it is empty, too. If none of the profile facets are supported by
        the query, we fall back to the profile's prior.
    """
    facets = list(profile)
    if not facets:
        return {}
    priors = {facet: profile.facet_prior(facet) for facet in facets}
    joint = {
        facet: priors[facet]
        * query_given_facet(
            global_stats, request, venues, facet, config.c, config.background_n
        )
        for facet in facets
    }
    normalizer = sum(joint.values())
    if normalizer > 0:
        return {facet: joint[facet] / normalizer for facet in facets}
    log = log or getLogger("user_facet_posterior")
    log.warning(
        f"No facet in the profile of user '{profile.user}' is supported by request "
        f"'{request.request_id}'. Falling back to the profile prior."
    )
    total = sum(priors.values())
    return {facet: priors[facet] / total for facet in facets}


def _candidate_list(request: RequestCase, venues: dict[str, Venue]) -> list[str]:
    return sorted(
        {facet for result in request.results for facet in venues[result.venue].facets}
    )


def score_model1(
    profile: UserProfile,
    global_stats: GlobalStats,
    request: RequestCase,
    venues: dict[str, Venue],
    facet: str,
    config: ScoringConfig = ScoringConfig(),
) -> float:
    """
    Score a candidate facet f_i as the sum over profile facets f_u of
    P(f_u|q, theta_u) * P(cov(f_u, f_i) | f_u, f_i)

    This is the model that assumes no background data are available.
    """
    posterior = user_facet_posterior(profile, global_stats, request, venues, config)
    score = 0.0
    for f_u in sorted(posterior):
        score += posterior[f_u] * config.coverage.prob(f_u, facet)
    return score


def score_model2(
    profile: UserProfile,
    global_stats: GlobalStats,
    request: RequestCase,
    venues: dict[str, Venue],
    facet: str,
    config: ScoringConfig = ScoringConfig(),
) -> float:
    """
    Score a candidate facet f_i by dividing its Model-1 score by the sum over the
    candidate facets f of P_r(f|q) * P(cov(f, f_i) | f, f_i)

    The denominator is floored at epsilon.
    """
    numerator = score_model1(profile, global_stats, request, venues, facet, config)
    denominator = 0.0
    for f in _candidate_list(request, venues):
        denominator += background_facet_given_query(
            request, venues, f, config.background_n
        ) * config.coverage.prob(f, facet)
    return numerator / max(denominator, config.epsilon)


class FacetScorer(ABC):
    """
    Abstract class for assigning relevance scores to the candidate facets of a request

    Attributes
    ----------
    positive_min : int
        The rating threshold used to build the profiles passed to :py:meth:`score`.
        None means the dataset's own threshold.
    log : Logger
        A logging instance for recording debug statements
    """

    def __init__(self, positive_min: int = None, log: Logger = None):
        self.positive_min = positive_min
        self.log = log or getLogger(self.__class__.__name__)
        super().__init__()

    def __repr__(self):
        return self.label

    @property
    @abstractmethod
    def label(self) -> str:
        """
        A short, unique name for this method, used to label reports
        """
        pass

    @abstractmethod
    def score(
        self,
        dataset: Dataset,
        request: RequestCase,
        profile: UserProfile,
        global_stats: GlobalStats,
    ) -> FacetScores:
        """
        Score every candidate facet of a request

        Parameters
        ----------
        dataset : Dataset
            The dataset containing the request
        request : RequestCase
            The request to score
        profile : UserProfile
            The profile of the user that issued the request
        global_stats : GlobalStats
            The pooled statistics of all users

        Returns
        -------
        FacetScores
            A score for each facet in :py:func:`candidate_facets`
        """
        pass


class ProbabilisticScorer(FacetScorer):
    """
    Scores facets with the Bayesian user-facet posterior and a coverage estimator

    Attributes
    ----------
    config : ScoringConfig
        The settings for the model
    """

    model = None

    def __init__(self, config: ScoringConfig = None, log: Logger = None):
        self.config = config or ScoringConfig(model=self.model)
        if self.config.model != self.model:
            raise ValueError(
                f"{self.__class__.__name__} can't run a {self.config.model} config"
            )
        super().__init__(positive_min=self.config.positive_min, log=log)

    @property
    def label(self) -> str:
        return self.config.label

    def numerators(
        self,
        posterior: dict[str, float],
        candidates: list[str],
    ) -> np.ndarray:
        """
        Compute the Model-1 sum for every candidate at once
        """
        if not posterior:
            return np.zeros(len(candidates))
        profile_facets = sorted(posterior)
        weights = np.array([posterior[facet] for facet in profile_facets])
        return weights @ self.config.coverage.matrix(profile_facets, candidates)

    @abstractmethod
    def finish(
        self,
        numerators: np.ndarray,
        candidates: list[str],
        request: RequestCase,
        dataset: Dataset,
    ) -> tuple[np.ndarray, frozenset]:
        """
        Turn the Model-1 sums into final scores

        Returns
        -------
        np.ndarray
            The score of each candidate
        frozenset[str]
            The candidates whose background support was floored
        """
        pass

    def score(
        self,
        dataset: Dataset,
        request: RequestCase,
        profile: UserProfile,
        global_stats: GlobalStats,
    ) -> FacetScores:
        candidates = sorted(candidate_facets(dataset, request))
        posterior = user_facet_posterior(
            profile, global_stats, request, dataset.venues, self.config, log=self.log
        )
        if not posterior:
            self.log.debug(
                f"User '{profile.user}' has an empty profile; request "
                f"'{request.request_id}' gets zero scores"
            )
        values, unsupported = self.finish(
            self.numerators(posterior, candidates), candidates, request, dataset
        )
        if not np.isfinite(values).all():
            raise DataError(
                f"Non-finite facet scores for request '{request.request_id}'",
                key=request.request_id,
            )
        return FacetScores(
            request_id=request.request_id,
            scores=dict(zip(candidates, values.tolist())),
            model=self.config.model,
            coverage=self.config.coverage.name,
            background_unsupported=unsupported,
        )


class Model1Scorer(ProbabilisticScorer):
    model = "model1"

    def finish(
        self,
        numerators: np.ndarray,
        candidates: list[str],
        request: RequestCase,
        dataset: Dataset,
    ) -> tuple[np.ndarray, frozenset]:
        return numerators, frozenset()


class Model2Scorer(ProbabilisticScorer):
    """
    Divides the Model-1 sums by each candidate's coverage of the background distribution
    """

    model = "model2"

    def finish(
        self,
        numerators: np.ndarray,
        candidates: list[str],
        request: RequestCase,
        dataset: Dataset,
    ) -> tuple[np.ndarray, frozenset]:
        if not candidates:
            return numerators, frozenset()
        background = background_distribution(
            request, dataset.venues, candidates, self.config.background_n
        )
        background = np.array([background[facet] for facet in candidates])
        denominators = background @ self.config.coverage.matrix(candidates, candidates)
        floored = denominators < self.config.epsilon
        unsupported = frozenset(np.array(candidates, dtype=object)[floored].tolist())
        if unsupported:
            self.log.debug(
                f"Flooring the denominator of {len(unsupported)} facets for request "
                f"'{request.request_id}'"
            )
        return numerators / np.maximum(denominators, self.config.epsilon), unsupported


def baseline_most_probable_personal(
    profile: UserProfile, candidates: Iterable[str] = None
) -> dict[str, float]:
    """
    Score facets by how often the user rated them positively

    Parameters
    ----------
    profile : UserProfile
        The user's profile
    candidates : Iterable[str], optional
        The facets to score. Facets outside the profile get 0. Defaults to the facets in
        the profile.
    """
    if candidates is None:
        candidates = profile
    return {facet: profile.facet_prior(facet) for facet in sorted(candidates)}


def baseline_most_probable_collab(
    global_stats: GlobalStats, candidates: Iterable[str] = None
) -> dict[str, float]:
    """
    Score facets by how often anyone rated them positively, the same for every user
    """
    if candidates is None:
        candidates = global_stats.global_positive_count
    return {facet: global_stats.prior(facet) for facet in sorted(candidates)}


class MostProbablePersonal(FacetScorer):
    label = "most-prob-person"

    def score(
        self,
        dataset: Dataset,
        request: RequestCase,
        profile: UserProfile,
        global_stats: GlobalStats,
    ) -> FacetScores:
        return FacetScores(
            request_id=request.request_id,
            scores=baseline_most_probable_personal(
                profile, candidate_facets(dataset, request)
            ),
            model=self.label,
        )


class MostProbableCollab(FacetScorer):
    label = "most-prob-collab"

    def score(
        self,
        dataset: Dataset,
        request: RequestCase,
        profile: UserProfile,
        global_stats: GlobalStats,
    ) -> FacetScores:
        return FacetScores(
            request_id=request.request_id,
            scores=baseline_most_probable_collab(
                global_stats, candidate_facets(dataset, request)
            ),
            model=self.label,
        )


BASELINES = {"person": MostProbablePersonal, "collab": MostProbableCollab}


def make_scorer(config: ScoringConfig, log: Logger = None) -> ProbabilisticScorer:
    if config.model == "model1":
        return Model1Scorer(config, log=log)
    return Model2Scorer(config, log=log)


def score_all(
    dataset: Dataset,
    request: RequestCase,
    config: ScoringConfig = ScoringConfig(),
    global_stats: GlobalStats = None,
    log: Logger = None,
) -> FacetScores:
    """
    Apply the configured model to every candidate facet of a request

    Parameters
    ----------
    dataset : Dataset
        The dataset containing the request
    request : RequestCase
        The request to score
    config : ScoringConfig, optional
        The model and its settings
    global_stats : GlobalStats, optional
        Pooled statistics to reuse across requests. Computed from the dataset if absent.
    log : Logger, optional
        A logging module to which to write messages about progress and any errors

    Raises
    ------
    EmbeddingError
        If cosine coverage is requested and a candidate facet has no vector

    Returns
    -------
    FacetScores
        A finite score for every candidate facet
    """
    profile = build_profile(dataset, request.user, config.positive_min)
    if global_stats is None:
        global_stats = build_global_stats(dataset, config.positive_min)
    return make_scorer(config, log=log).score(dataset, request, profile, global_stats)


def write_score_maps(score_maps: Iterable[FacetScores], fname: Path | str):
    """
    Write score maps to a JSON-lines file, one request per line
    """
    with open(fname, "w", encoding="utf-8") as score_file:
        for score_map in score_maps:
            score_file.write(json.dumps(score_map.to_json()) + "\n")


def read_score_maps(fname: Path | str) -> Iterator[FacetScores]:
    with open(fname, "r", encoding="utf-8") as score_file:
        for line in score_file:
            if not line.strip():
                continue
            record = json.loads(line)
            yield FacetScores(
                request_id=record["request_id"],
                scores=record["scores"],
                model=record["model"],
                coverage=record["coverage"],
                background_unsupported=frozenset(record["background_unsupported"]),
            )
