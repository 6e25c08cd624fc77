from __future__ import annotations
from logging import Logger
from collections import deque
from dataclasses import dataclass
from typing import Sequence, Union
from concurrent.futures import ProcessPoolExecutor

from haptools.logging import getLogger

from .errors import ConfigError
from .taxonomy import Taxonomy
from .datastore import Dataset, RequestCase, Result, Venue
from .profile import build_global_stats, build_profile
from .scoring import FacetScorer, ScoringConfig, make_scorer
from .treebuild import (
    BuildConfig,
    MoreMarker,
    RankedTree,
    DisplayView,
    build_fixed_level,
    flatten_display_order,
)


@dataclass(frozen=True)
class SimConfig:
    """
    Settings for the simulated user

    Attributes
    ----------
    success_top_n : int
        The user is satisfied once a relevant venue is among this many top results
    relevant_min : int
        Judgments at or above this grade are relevant
    max_more_clicks : int
        The number of "More" markers the user is willing to click
    max_click_depth : int, optional
        The number of facets the user is willing to click. Defaults to the depth of
        the taxonomy.
    """

    success_top_n: int = 5
    relevant_min: int = 3
    max_more_clicks: int = 5
    max_click_depth: int = None

    def __post_init__(self):
        for name in ("success_top_n", "max_more_clicks"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1", key=name)
        if self.max_click_depth is not None and self.max_click_depth < 1:
            raise ConfigError("max_click_depth must be at least 1", key="max_click_depth")
        if self.relevant_min < 0:
            raise ConfigError("relevant_min must not be negative", key="relevant_min")

    def click_depth(self, taxonomy: Taxonomy) -> int:
        if self.max_click_depth is None:
            return max(taxonomy.depth, 1)
        return self.max_click_depth


@dataclass(frozen=True)
class Click:
    """
    A single click by the simulated user

    Attributes
    ----------
    kind : str
        Either "facet" or "more"
    target : str
        The clicked facet, or the parent of the list that a "More" marker expands
    position : int
        The 1-based position of the clicked item among the displayed items
    """

    kind: str
    target: str
    position: int

    def to_json(self) -> dict:
        return {"kind": self.kind, "target": self.target, "position": self.position}


@dataclass(frozen=True)
class SimOutcome:
    """
    The effort the simulated user spent on a single request

    Attributes
    ----------
    request_id : str
        The request
    actions : int
        The number of clicks on the minimal path to a relevant venue
    f_scan : int
        The number of facets and venues scanned along that path
    reachable : bool
        Whether any click sequence within the bounds reached a relevant venue. If not,
        actions and f_scan hold penalty values.
    path : tuple[Click]
        The clicks on the path
    """

    request_id: str
    actions: int
    f_scan: int
    reachable: bool = True
    path: tuple = tuple()

    def to_json(self) -> dict:
        return {
            "request_id": self.request_id,
            "actions": self.actions,
            "f_scan": self.f_scan,
            "reachable": self.reachable,
            "path": [click.to_json() for click in self.path],
        }

    @classmethod
    def from_json(cls, record: dict) -> SimOutcome:
        return cls(
            request_id=record["request_id"],
            actions=record["actions"],
            f_scan=record["f_scan"],
            reachable=record["reachable"],
            path=tuple(Click(**click) for click in record["path"]),
        )


def filter_results(
    request: RequestCase,
    facet: str,
    venues: dict[str, Venue],
    taxonomy: Taxonomy,
) -> tuple[Result]:
    """
    Restrict a request's results to the venues carrying a facet

    Parameters
    ----------
    request : RequestCase
        The request
    facet : str
        The clicked facet. If it isn't a leaf, venues carrying any of its descendant
        leaves are kept. None keeps every result.
    venues : dict[str, Venue]
        The venues, keyed by ID
    taxonomy : Taxonomy
        The facet hierarchy

    Returns
    -------
    tuple[Result]
        The remaining results, still in rank order
    """
    if facet is None:
        return request.results
    leaves = set(taxonomy.descendant_leaves(facet))
    return tuple(
        result
        for result in request.results
        if not leaves.isdisjoint(venues[result.venue].facets)
    )


def first_relevant(
    results: Sequence[Result],
    request_id: str,
    judgments: dict[tuple[str, str], int],
    relevant_min: int,
) -> int:
    """
    The 1-based rank of the first relevant result, or None if there isn't one

    Unjudged venues aren't relevant.
    """
    for rank, result in enumerate(results, start=1):
        grade = judgments.get((request_id, result.venue))
        if grade is not None and grade >= relevant_min:
            return rank
    return None


def simulate(
    tree: RankedTree,
    request: RequestCase,
    venues: dict[str, Venue],
    taxonomy: Taxonomy,
    judgments: dict[tuple[str, str], int],
    config: SimConfig = SimConfig(),
) -> SimOutcome:
    """
    Find the shortest click sequence that surfaces a relevant venue

    The user starts from the initial view of the tree and the unfiltered results.
    Clicking a facet replaces the active filter; clicking a "More" marker reveals the
    next page of its list. Each click costs one action. The search is breadth-first
    over views, trying the displayed items in reading order, so that among the
    shortest paths the one whose clicks come earliest in the display wins. The scan
    cost of a path is the sum of the positions of the clicked items plus the rank of
    the first relevant venue in the final results.

    A facet click that doesn't surface a relevant venue leaves the view as it was, so
    it never appears on a shortest path. Shortest paths are therefore a series of
    "More" clicks followed by a single facet click, and the search only has to track
    the view.

    Parameters
    ----------
    tree : RankedTree
        The ranked facets shown to the user
    request : RequestCase
        The request
    venues : dict[str, Venue]
        The venues, keyed by ID
    taxonomy : Taxonomy
        The facet hierarchy
    judgments : dict[tuple[str, str], int]
        Graded judgments keyed by (request ID, venue ID)
    config : SimConfig, optional
        The bounds of the user's patience

    Returns
    -------
    SimOutcome
        The number of actions and the scan cost along the chosen path
    """
    request_id = request.request_id
    top_n = config.success_top_n
    max_facet_clicks = config.click_depth(taxonomy)
    ranks = {}

    def rank_after(facet: str) -> int:
        if facet not in ranks:
            ranks[facet] = first_relevant(
                filter_results(request, facet, venues, taxonomy),
                request_id,
                judgments,
                config.relevant_min,
            )
        return ranks[facet]

    rank = rank_after(None)
    if rank is not None and rank <= top_n:
        return SimOutcome(request_id, actions=0, f_scan=rank)
    penalty = SimOutcome(
        request_id,
        actions=max_facet_clicks + config.max_more_clicks + 1,
        f_scan=len(tree) + len(request.results),
        reachable=False,
    )
    if rank is None:
        # filtering only removes results, so no click can help
        return penalty
    start = DisplayView()
    seen = {start}
    queue = deque([(start, tuple(), 0)])
    while queue:
        view, path, scan = queue.popleft()
        for position, item in enumerate(flatten_display_order(tree, view), start=1):
            if isinstance(item, MoreMarker):
                if len(path) >= config.max_more_clicks:
                    continue
                state = view.expand(item.parent)
                if state in seen:
                    continue
                seen.add(state)
                click = Click("more", item.parent, position)
                queue.append((state, path + (click,), scan + position))
                continue
            rank = rank_after(item.facet)
            if rank is not None and rank <= top_n:
                return SimOutcome(
                    request_id,
                    actions=len(path) + 1,
                    f_scan=scan + position + rank,
                    path=path + (Click("facet", item.facet, position),),
                )
    return penalty


def count_actions(
    tree: RankedTree,
    request: RequestCase,
    venues: dict[str, Venue],
    taxonomy: Taxonomy,
    judgments: dict[tuple[str, str], int],
    config: SimConfig = SimConfig(),
) -> int:
    """
    The minimum number of clicks needed to surface a relevant venue

    Refer to :py:func:`simulate` for the details
    """
    return simulate(tree, request, venues, taxonomy, judgments, config).actions


def f_scan(
    tree: RankedTree,
    request: RequestCase,
    venues: dict[str, Venue],
    taxonomy: Taxonomy,
    judgments: dict[tuple[str, str], int],
    config: SimConfig = SimConfig(),
) -> int:
    """
    The scan cost along the path chosen by :py:func:`count_actions`
    """
    return simulate(tree, request, venues, taxonomy, judgments, config).f_scan


class RequestEvaluator:
    """
    Runs the whole pipeline for single requests: score, build a tree, and simulate

    Attributes
    ----------
    dataset : Dataset
        The dataset containing the requests
    scorer : FacetScorer
        Assigns scores to the candidate facets of each request
    build_config : BuildConfig
        The tree building settings
    sim_config : SimConfig
        The simulated user's settings
    global_stats : GlobalStats
        Pooled statistics, computed once with the scorer's positive threshold
    log : Logger
        A logging instance for recording debug statements
    """

    def __init__(
        self,
        dataset: Dataset,
        scorer: FacetScorer,
        build_config: BuildConfig = BuildConfig(),
        sim_config: SimConfig = SimConfig(),
        log: Logger = None,
    ):
        self.dataset = dataset
        self.scorer = scorer
        self.build_config = build_config
        self.sim_config = sim_config
        self.log = log or getLogger(self.__class__.__name__)
        self.global_stats = build_global_stats(dataset, scorer.positive_min)

    def __call__(self, request_id: str) -> SimOutcome:
        request = self.dataset.request(request_id)
        profile = build_profile(self.dataset, request.user, self.scorer.positive_min)
        scores = self.scorer.score(self.dataset, request, profile, self.global_stats)
        tree = build_fixed_level(
            self.dataset.taxonomy, scores.scores, self.build_config, log=self.log
        )
        outcome = simulate(
            tree,
            request,
            self.dataset.venues,
            self.dataset.taxonomy,
            self.dataset.judgments,
            self.sim_config,
        )
        self.log.debug(
            f"Request '{request_id}': {outcome.actions} actions, f-scan {outcome.f_scan}"
            + ("" if outcome.reachable else " (unreachable)")
        )
        return outcome


# each worker process holds its own evaluator so that the dataset is sent only once
_worker_evaluator = None


def _init_worker(evaluator: RequestEvaluator):
    global _worker_evaluator
    _worker_evaluator = evaluator


def _evaluate_in_worker(request_id: str) -> SimOutcome:
    return _worker_evaluator(request_id)


def evaluate_run(
    dataset: Dataset,
    scorer: Union[FacetScorer, ScoringConfig],
    build_config: BuildConfig = BuildConfig(),
    sim_config: SimConfig = SimConfig(),
    jobs: int = 1,
    log: Logger = None,
):
    """
    Evaluate a scoring method on every request in a dataset

    Parameters
    ----------
    dataset : Dataset
        The dataset
    scorer : FacetScorer | ScoringConfig
        A scorer (ex: a baseline) or the config of a probabilistic model
    build_config : BuildConfig, optional
        The tree building settings
    sim_config : SimConfig, optional
        The simulated user's settings
    jobs : int, optional
        The number of processes to spread the requests over. The outcomes don't
        depend on it.
    log : Logger, optional
        A logging module to which to write messages about progress and any errors

    Returns
    -------
    RunReport
        The outcome of every request, in dataset order, and their means
    """
    from .report import RunReport

    log = log or getLogger("evaluate_run")
    if isinstance(scorer, ScoringConfig):
        scorer = make_scorer(scorer, log=log)
    evaluator = RequestEvaluator(dataset, scorer, build_config, sim_config, log=log)
    request_ids = [request.request_id for request in dataset.requests]
    log.info(f"Evaluating {scorer.label} on {len(request_ids)} requests")
    if jobs > 1 and len(request_ids) > 1:
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_init_worker, initargs=(evaluator,)
        ) as executor:
            outcomes = list(executor.map(_evaluate_in_worker, request_ids))
    else:
        outcomes = [evaluator(request_id) for request_id in request_ids]
    return RunReport.from_outcomes(
        label=scorer.label,
        outcomes=outcomes,
        aggregation=build_config.aggregation,
    )
