from __future__ import annotations
from dataclasses import dataclass, field
from collections import Counter
from typing import Iterable

from .datastore import Dataset, Rating


@dataclass(frozen=True)
class UserProfile:
    """
    A user's t-facet preferences, as learned from their historical ratings

    Attributes
    ----------
    user : str
        The user's ID
    positive_count : dict[str, int]
        For each facet, the number of positively rated venues that carry it
    total_rated : int
        The number of venues the user rated, whether positively or not
    """

    user: str
    positive_count: dict = field(default_factory=dict)
    total_rated: int = 0

    def __len__(self):
        return len(self.positive_count)

    def __iter__(self):
        return iter(sorted(self.positive_count))

    def facet_prior(self, facet: str) -> float:
        """
        P(f_u | theta_u): the fraction of the user's rated venues that carry the facet
        and were rated positively
        """
        if not self.total_rated:
            return 0.0
        return self.positive_count.get(facet, 0) / self.total_rated

    def to_json(self) -> dict:
        return {
            "user": self.user,
            "total_rated": self.total_rated,
            "positive_count": dict(sorted(self.positive_count.items())),
        }


@dataclass(frozen=True)
class GlobalStats:
    """
    The t-facet preferences of a random user, pooled over everyone's ratings

    Attributes
    ----------
    global_positive_count : dict[str, int]
        For each facet, the number of positive ratings of venues that carry it
    global_total_rated : int
        The total number of ratings
    """

    global_positive_count: dict = field(default_factory=dict)
    global_total_rated: int = 0

    def prior(self, facet: str) -> float:
        """
        P_r(f): the probability that a random user rates the facet positively
        """
        if not self.global_total_rated:
            return 0.0
        return self.global_positive_count.get(facet, 0) / self.global_total_rated

    def to_json(self) -> dict:
        return {
            "total_rated": self.global_total_rated,
            "positive_count": dict(sorted(self.global_positive_count.items())),
        }


def _tally(dataset: Dataset, ratings: Iterable[Rating], positive_min: int):
    counts = Counter()
    total = 0
    for rating in ratings:
        total += 1
        if rating.value >= positive_min:
            counts.update(dataset.venues[rating.venue].facets)
    return dict(counts), total


def build_profile(dataset: Dataset, user: str, positive_min: int = None) -> UserProfile:
    """
    Build a user's profile from their ratings

    A positively rated venue with k facets increments each of the k facet counters
    once. Users without any ratings get an empty profile.

    Parameters
    ----------
    dataset : Dataset
        The dataset containing the user's ratings
    user : str
        The user's ID
    positive_min : int, optional
        Ratings at or above this value count as positive. Defaults to the dataset's
        rating scale.

    Returns
    -------
    UserProfile
        The user's profile
    """
    if positive_min is None:
        positive_min = dataset.scale.positive_min
    counts, total = _tally(dataset, dataset.ratings_by_user.get(user, ()), positive_min)
    return UserProfile(user=user, positive_count=counts, total_rated=total)


def build_global_stats(dataset: Dataset, positive_min: int = None) -> GlobalStats:
    """
    Pool the ratings of all users, counting the same way as :py:func:`build_profile`
    """
    if positive_min is None:
        positive_min = dataset.scale.positive_min
    counts, total = _tally(dataset, dataset.ratings, positive_min)
    return GlobalStats(global_positive_count=counts, global_total_rated=total)


def build_all_profiles(
    dataset: Dataset, positive_min: int = None
) -> dict[str, UserProfile]:
    return {user: build_profile(dataset, user, positive_min) for user in dataset.users()}
