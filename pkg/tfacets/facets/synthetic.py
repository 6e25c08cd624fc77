from __future__ import annotations
from logging import Logger
from dataclasses import dataclass, asdict

import numpy as np
from haptools.logging import getLogger

from .errors import ConfigError
from .taxonomy import FacetNode, Taxonomy
from .datastore import Venue, Rating, Result, Dataset, RatingScale, RequestCase


CATEGORY_NOUNS = (
    "Restaurant", "Bar", "Shop", "Museum", "Park", "Cafe", "Club", "Market",
    "Studio", "Hall", "Gallery", "Theater", "Store", "Garden", "Stadium", "Center",
)  # fmt: skip

MODIFIERS = (
    "Sushi", "Thai", "Italian", "Vegan", "Craft", "Sports", "Wine", "Jazz", "Art",
    "History", "Science", "Dog", "Rooftop", "Night", "Coffee", "Tea", "Book", "Record",
    "Vintage", "Farmers", "Flea", "Comedy", "Dance", "Yoga", "Climbing", "Botanical",
    "Water", "Beach", "Mountain", "Street", "Noodle", "Taco", "Burger", "Seafood",
    "Steak", "Dessert", "Bakery", "Pizza", "Karaoke", "Piano",
)  # fmt: skip


@dataclass(frozen=True)
class SyntheticSpec:
    """
    The shape of a synthetic dataset

    Attributes
    ----------
    users : int
        The number of users; each submits ``requests_per_user`` requests
    venues : int
        The number of venues
    level1 : int
        The number of level-1 facets
    level2 : int
        The number of level-2 (leaf) facets; every level-1 facet gets at least one
    ratings_per_user : int
        How many venues each user has rated (capped at the number of venues)
    results_per_request : int
        How many venues are retrieved for each request (capped at the number of venues)
    positive_fraction : float
        The fraction of each user's ratings that are positive
    requests_per_user : int
        The number of requests submitted by each user
    popularity_skew : float
        The Zipf exponent of facet popularity; 0 makes every facet equally popular
    favorites_per_user : int
        The number of leaf facets each user prefers
    relevance_cut : float
        Venues of the requested type are judged relevant only if their relevance
        score is at least this value
    """

    users: int = 26
    venues: int = 120
    level1: int = 10
    level2: int = 50
    ratings_per_user: int = 60
    results_per_request: int = 25
    positive_fraction: float = 0.5
    requests_per_user: int = 1
    popularity_skew: float = 1.0
    favorites_per_user: int = 3
    relevance_cut: float = 0.2

    def __post_init__(self):
        counts = (
            "users", "venues", "level1", "level2", "ratings_per_user",
            "results_per_request", "requests_per_user", "favorites_per_user",
        )  # fmt: skip
        for name in counts:
            if getattr(self, name) < 1:
                raise ConfigError(f"The synthetic {name} must be at least 1", key=name)
        if not 0 <= self.positive_fraction <= 1:
            raise ConfigError(
                "The positive fraction must be in [0, 1]", key="positive_fraction"
            )
        if not 0 <= self.relevance_cut <= 1:
            raise ConfigError("The relevance cut must be in [0, 1]", key="relevance_cut")
        if self.popularity_skew < 0:
            raise ConfigError(
                "The popularity skew must be non-negative", key="popularity_skew"
            )
        if self.level2 < self.level1:
            raise ConfigError(
                "There must be at least as many level-2 facets as level-1 facets, so"
                " that every level-1 facet has a child",
                key="level2",
            )

    def to_dict(self) -> dict:
        return asdict(self)


def _width(count: int, minimum: int) -> int:
    return max(minimum, len(str(count)))


def _numbered(words: tuple[str], idx: int) -> str:
    word = words[idx % len(words)]
    if idx >= len(words):
        word += f" {idx // len(words) + 1}"
    return word


class SyntheticGenerator:
    """
    Generates a seeded, self-consistent Dataset

    The generator draws everything from a single numpy Generator, in a fixed order, so
    the output is a pure function of the seed and the spec.

    Attributes
    ----------
    seed : int
        The random seed
    spec : SyntheticSpec
        The shape of the dataset
    log: Logger
        A logging instance for recording debug statements.

    Examples
    --------
    >>> dataset = SyntheticGenerator(7, SyntheticSpec()).run()
    """

    def __init__(
        self, seed: int, spec: SyntheticSpec = SyntheticSpec(), log: Logger = None
    ):
        self.seed = seed
        self.spec = spec
        self.scale = RatingScale()
        self.log = log or getLogger(self.__class__.__name__)

    def __repr__(self):
        return f"SyntheticGenerator(seed={self.seed}, spec={self.spec})"

    def run(self) -> Dataset:
        rng = np.random.default_rng(self.seed)
        taxonomy = self._taxonomy(rng)
        leaves = taxonomy.leaves()
        # leaf popularity follows a Zipf law over a random ordering of the leaves
        order = rng.permutation(len(leaves))
        weights = np.empty(len(leaves))
        weights[order] = 1 / np.arange(1, len(leaves) + 1) ** self.spec.popularity_skew
        popularity = weights / weights.sum()
        venues = self._venues(rng, leaves, popularity)
        users = [
            f"u{idx:0{_width(self.spec.users, 2)}d}"
            for idx in range(1, self.spec.users + 1)
        ]
        ratings, requests, judgments = [], [], {}
        for user in users:
            favorites = set(
                rng.choice(
                    leaves,
                    size=min(self.spec.favorites_per_user, len(leaves)),
                    replace=False,
                    p=popularity,
                ).tolist()
            )
            ratings.extend(self._ratings(rng, user, venues, favorites))
            for _ in range(self.spec.requests_per_user):
                request_id = f"r{len(requests) + 1:0{_width(self._num_requests, 2)}d}"
                request, grades = self._request(
                    rng, request_id, user, taxonomy, venues, favorites, popularity
                )
                requests.append(request)
                judgments.update(grades)
        self.log.info(
            f"Generated {len(venues)} venues, {len(ratings)} ratings, and"
            f" {len(requests)} requests with seed {self.seed}"
        )
        return Dataset(
            taxonomy=taxonomy,
            venues=venues,
            ratings=tuple(ratings),
            requests=tuple(requests),
            judgments=judgments,
            scale=self.scale,
        )

    @property
    def _num_requests(self) -> int:
        return self.spec.users * self.spec.requests_per_user

    def _taxonomy(self, rng: np.random.Generator) -> Taxonomy:
        spec = self.spec
        num_children = np.ones(spec.level1, dtype=int)
        num_children += np.bincount(
            rng.integers(0, spec.level1, size=spec.level2 - spec.level1),
            minlength=spec.level1,
        )
        nodes = []
        width = _width(spec.level1, 2)
        for idx in range(spec.level1):
            parent = f"c{idx + 1:0{width}d}"
            noun = _numbered(CATEGORY_NOUNS, idx)
            nodes.append(FacetNode(id=parent, label=noun, parent=None, level=1))
            modifiers = rng.permutation(len(MODIFIERS))
            child_width = _width(num_children[idx], 2)
            for child in range(num_children[idx]):
                mod_idx = int(modifiers[child % len(MODIFIERS)])
                label = MODIFIERS[mod_idx] + " " + noun
                if child >= len(MODIFIERS):
                    label += f" {child // len(MODIFIERS) + 1}"
                nodes.append(
                    FacetNode(
                        id=f"{parent}s{child + 1:0{child_width}d}",
                        label=label,
                        parent=parent,
                        level=2,
                    )
                )
        return Taxonomy(nodes, log=self.log)

    def _venues(
        self, rng: np.random.Generator, leaves: list[str], popularity: np.ndarray
    ) -> dict[str, Venue]:
        venues = {}
        width = _width(self.spec.venues, 3)
        for idx in range(1, self.spec.venues + 1):
            num_facets = min(int(rng.integers(1, 4)), len(leaves))
            facets = rng.choice(leaves, size=num_facets, replace=False, p=popularity)
            venue = f"v{idx:0{width}d}"
            venues[venue] = Venue(id=venue, facets=tuple(sorted(facets.tolist())))
        return venues

    def _ratings(
        self,
        rng: np.random.Generator,
        user: str,
        venues: dict[str, Venue],
        favorites: set[str],
    ) -> list[Rating]:
        """
        Rate a random subset of the venues, with the most appealing ones rated
        positively
        """
        ids = list(venues)
        rated = rng.choice(
            len(ids), size=min(self.spec.ratings_per_user, len(ids)), replace=False
        )
        appeal = np.array(
            [
                float(any(f in favorites for f in venues[ids[idx]].facets))
                for idx in rated
            ]
        )
        appeal += rng.random(len(rated)) * 0.5
        num_positive = int(np.floor(self.spec.positive_fraction * len(rated) + 0.5))
        positive = set(np.argsort(-appeal, kind="stable")[:num_positive].tolist())
        ratings = []
        for pos, idx in enumerate(rated):
            if pos in positive:
                value = rng.integers(self.scale.positive_min, self.scale.maximum + 1)
            else:
                value = rng.integers(self.scale.minimum, self.scale.positive_min)
            ratings.append(Rating(user=user, venue=ids[idx], value=int(value)))
        return ratings

    @staticmethod
    def _pick_target(
        rng: np.random.Generator,
        leaves: list[str],
        favorites: set[str],
        popularity: np.ndarray,
        carriers: dict[str, list[str]],
    ) -> str:
        # prefer a favorite with two venues: one for the anchor and one to be found
        for min_carriers in (2, 1):
            options = [
                f for f in sorted(favorites) if len(carriers.get(f, ())) >= min_carriers
            ]
            if options:
                return options[int(rng.integers(len(options)))]
            weights = np.array(
                [
                    p * (len(carriers.get(f, ())) >= min_carriers)
                    for f, p in zip(leaves, popularity)
                ]
            )
            if weights.sum():
                return leaves[int(rng.choice(len(leaves), p=weights / weights.sum()))]
        raise ValueError("None of the venues have any facets")

    def _request(
        self,
        rng: np.random.Generator,
        request_id: str,
        user: str,
        taxonomy: Taxonomy,
        venues: dict[str, Venue],
        favorites: set[str],
        popularity: np.ndarray,
    ) -> tuple[RequestCase, dict[tuple[str, str], int]]:
        """
        Retrieve results for a request that seeks venues of a hidden target type

        The top result is an anchor venue of the target type that the user is assumed
        to have visited already, so it is judged just below relevant. The remaining
        venues of the target type are spread through the rest of the ranking and are
        judged relevant when their relevance clears the cut.
        """
        carriers = {}
        for venue in venues.values():
            for facet in venue.facets:
                carriers.setdefault(facet, []).append(venue.id)
        target = self._pick_target(
            rng, taxonomy.leaves(), favorites, popularity, carriers
        )
        num_results = min(self.spec.results_per_request, len(venues))
        targets = carriers[target]
        num_targets = min(len(targets), max(2, num_results // 5), num_results)
        picked = rng.choice(targets, size=num_targets, replace=False).tolist()
        others = sorted(set(venues) - set(targets))
        num_others = min(len(others), num_results - num_targets)
        picked_others = rng.choice(others, size=num_others, replace=False).tolist()
        anchor, rest = picked[0], picked[1:] + picked_others
        rest = [rest[idx] for idx in rng.permutation(len(rest))]
        relevance = np.sort(1 - rng.random(len(rest) + 1))[::-1]
        results = tuple(
            Result(venue=venue, relevance=float(rel))
            for venue, rel in zip([anchor] + rest, relevance)
        )
        target_set = set(picked)
        grades = {}
        for rank, result in enumerate(results):
            if rank == 0:
                grade = 2
            elif result.venue in target_set:
                if result.relevance >= self.spec.relevance_cut:
                    grade = int(rng.integers(3, 5))
                else:
                    grade = 1
            else:
                grade = int(rng.integers(0, 3))
            grades[(request_id, result.venue)] = grade
        request = RequestCase(
            request_id=request_id,
            user=user,
            query="looking for " + taxonomy.label(target).lower(),
            results=tuple(sorted(results, key=RequestCase.rank_key)),
        )
        return request, grades


def generate_synthetic(
    seed: int, spec: SyntheticSpec = SyntheticSpec(), log: Logger = None
) -> Dataset:
    """
    Generate a synthetic Dataset that is a pure function of the seed and the spec

    Parameters
    ----------
    seed : int
        The random seed
    spec : SyntheticSpec, optional
        The shape of the dataset

    Returns
    -------
    Dataset
        The generated dataset
    """
    return SyntheticGenerator(seed, spec, log=log).run()
