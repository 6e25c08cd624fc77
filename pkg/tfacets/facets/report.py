from __future__ import annotations
import json
from pathlib import Path
from logging import Logger
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import pandas as pd
import numpy.typing as npt
from scipy.stats import wilcoxon, ttest_rel
from haptools.logging import getLogger
from statsmodels.stats.multitest import multipletests

from .errors import DataError
from .evalsim import SimOutcome


METRICS = {"f_scan": "F-Scan", "actions": "#Actions"}


@dataclass(frozen=True)
class RunReport:
    """
    The outcome of evaluating one scoring method with one tree building configuration

    Attributes
    ----------
    label : str
        The scoring method (ex: "model1+cosine" or "most-prob-person")
    aggregation : str
        The aggregation used to build the trees
    outcomes : tuple[SimOutcome]
        The outcome of each request, in dataset order
    mean_actions : float
        The mean number of actions over all requests, penalties included
    mean_f_scan : float
        The mean scan cost over all requests, penalties included
    fingerprint : str, optional
        The fingerprint of the configuration of the run
    config : dict, optional
        The effective configuration of the run
    """

    label: str
    aggregation: str
    outcomes: tuple
    mean_actions: float
    mean_f_scan: float
    fingerprint: str = None
    config: dict = None

    @classmethod
    def from_outcomes(
        cls,
        label: str,
        outcomes: Sequence[SimOutcome],
        aggregation: str,
        fingerprint: str = None,
        config: dict = None,
    ) -> RunReport:
        """
        Summarize a list of outcomes. An empty run has means of 0.
        """
        outcomes = tuple(outcomes)
        means = {metric: 0.0 for metric in METRICS}
        if outcomes:
            for metric in METRICS:
                means[metric] = float(
                    np.mean([getattr(outcome, metric) for outcome in outcomes])
                )
        return cls(
            label=label,
            aggregation=aggregation,
            outcomes=outcomes,
            mean_actions=means["actions"],
            mean_f_scan=means["f_scan"],
            fingerprint=fingerprint,
            config=config,
        )

    def with_config(self, fingerprint: str, config: dict) -> RunReport:
        return replace(self, fingerprint=fingerprint, config=config)

    @property
    def name(self) -> str:
        """
        A file name for the report
        """
        return f"{self.label.replace('+', '-')}-{self.aggregation}"

    @property
    def num_unreachable(self) -> int:
        return sum(not outcome.reachable for outcome in self.outcomes)

    def metric(self, metric: str) -> pd.Series:
        """
        The per-request values of a metric, indexed by request ID
        """
        return pd.Series(
            [getattr(outcome, metric) for outcome in self.outcomes],
            index=[outcome.request_id for outcome in self.outcomes],
            name=metric,
            dtype=np.float64,
        )

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "aggregation": self.aggregation,
            "fingerprint": self.fingerprint,
            "config": self.config,
            "mean_actions": self.mean_actions,
            "mean_f_scan": self.mean_f_scan,
            "num_requests": len(self.outcomes),
            "num_unreachable": self.num_unreachable,
            "outcomes": [outcome.to_json() for outcome in self.outcomes],
        }

    def write(self, fname: Path | str):
        with open(fname, "w", encoding="utf-8") as report_file:
            json.dump(self.to_json(), report_file, indent=1)
            report_file.write("\n")

    @classmethod
    def load(cls, fname: Path | str) -> RunReport:
        """
        Load a report written by :py:meth:`write`

        Raises
        ------
        DataError
            If the file can't be read or isn't a report
        """
        try:
            with open(fname, "r", encoding="utf-8") as report_file:
                document = json.load(report_file)
            return cls(
                label=document["label"],
                aggregation=document["aggregation"],
                outcomes=tuple(
                    SimOutcome.from_json(record) for record in document["outcomes"]
                ),
                mean_actions=document["mean_actions"],
                mean_f_scan=document["mean_f_scan"],
                fingerprint=document.get("fingerprint"),
                config=document.get("config"),
            )
        except (OSError, ValueError, KeyError, TypeError) as err:
            raise DataError(f"Cannot load report {fname}: {err}", key=str(fname))


def results_table(reports: Sequence[RunReport]) -> pd.DataFrame:
    """
    Lay out the mean metrics with one row per scoring method and a pair of F-Scan and
    #Actions columns per aggregation

    Rows keep the order in which the methods first appear. If the same method and
    aggregation appear twice, the last report wins.
    """
    records = pd.DataFrame(
        [
            {
                "method": report.label,
                "aggregation": report.aggregation,
                METRICS["f_scan"]: report.mean_f_scan,
                METRICS["actions"]: report.mean_actions,
            }
            for report in reports
        ],
        columns=["method", "aggregation", *METRICS.values()],
    )
    if records.empty:
        return pd.DataFrame()
    records = records.drop_duplicates(["method", "aggregation"], keep="last")
    table = records.pivot(
        index="method", columns="aggregation", values=list(METRICS.values())
    )
    table = table.swaplevel(axis=1).sort_index(axis=1, level=0, sort_remaining=False)
    return table.reindex(records["method"].drop_duplicates())


def format_table(table: pd.DataFrame) -> str:
    """
    Render a table from :py:func:`results_table` as plain text
    """
    if table.empty:
        return "no results\n"
    flat = table.copy()
    flat.columns = [f"{metric} ({aggregation})" for aggregation, metric in flat.columns]
    return flat.to_string(float_format="{:.3f}".format, na_rep="-") + "\n"


class Corrector(ABC):
    """
    Abstract class for correcting p-values due to multiple comparisons

    Attributes
    ----------
    thresh : float, optional
        The threshold of significance
    """

    name = None

    def __init__(self, thresh: float = 0.05, log: Logger = None):
        self.thresh = thresh
        self.log = log or getLogger(self.__class__.__name__)
        super().__init__()

    @abstractmethod
    def correct(self, pvals: npt.NDArray) -> npt.NDArray:
        """
        Correct a set of p-values

        Parameters
        ----------
        pvals: npt.NDArray
            The p-values to be corrected

        Returns
        -------
        npt.NDArray
            A set of corrected p-values in the same order as the input array
        """
        pass


class Bonferroni(Corrector):
    name = "bonferroni"

    def correct(self, pvals: npt.NDArray) -> npt.NDArray:
        if not len(pvals):
            return pvals
        return multipletests(pvals, alpha=self.thresh, method="bonferroni")[1]


class BH(Corrector):
    name = "bh"

    def correct(self, pvals: npt.NDArray) -> npt.NDArray:
        if not len(pvals):
            return pvals
        return multipletests(pvals, alpha=self.thresh, method="fdr_bh")[1]


CORRECTORS = {corrector.name: corrector for corrector in (Bonferroni, BH)}


def paired_test(values: npt.NDArray, baseline: npt.NDArray) -> tuple[str, float, float]:
    """
    Test whether paired per-request values differ from a baseline's

    We use the Wilcoxon signed-rank test and fall back to a paired t-test when it
    can't be computed. Identical values get a p-value of 1.

    Returns
    -------
    str
        The name of the test that was run
    float
        The test statistic
    float
        The p-value
    """
    diffs = np.asarray(values) - np.asarray(baseline)
    if not len(diffs) or not diffs.any():
        return "none", 0.0, 1.0
    try:
        result = wilcoxon(values, baseline)
        test = "wilcoxon"
    except ValueError:
        result = ttest_rel(values, baseline)
        test = "ttest_rel"
    pval = float(result.pvalue)
    if np.isnan(pval):
        pval = 1.0
    return test, float(result.statistic), pval


def compare_reports(
    reports: Sequence[RunReport],
    baseline: RunReport,
    correction: str = "bonferroni",
    log: Logger = None,
) -> pd.DataFrame:
    """
    Compare each report against a baseline on the requests they share

    Parameters
    ----------
    reports : Sequence[RunReport]
        The runs to compare. The baseline is skipped if it appears among them.
    baseline : RunReport
        The run to compare against
    correction : str, optional
        The multiple testing correction: "bonferroni" or "bh". P-values are corrected
        across all of the reports for each metric.
    log : Logger, optional
        A logging module to which to write messages about progress and any errors

    Returns
    -------
    pd.DataFrame
        One row per report and metric with the means, the test, and both the raw and
        corrected p-values
    """
    log = log or getLogger("compare_reports")
    try:
        corrector = CORRECTORS[correction](log=log)
    except KeyError:
        raise ValueError(f"{correction} correction is not supported") from None
    rows = []
    for report in reports:
        if report is baseline or (
            report.label == baseline.label and report.aggregation == baseline.aggregation
        ):
            continue
        for metric, metric_name in METRICS.items():
            joined = pd.concat(
                [report.metric(metric), baseline.metric(metric).rename("baseline")],
                axis=1,
                join="inner",
            )
            if len(joined) < len(report.outcomes):
                log.warning(
                    f"Only {len(joined)} of the requests in {report.name} are also in "
                    f"{baseline.name}"
                )
            test, statistic, pval = paired_test(
                joined[metric].to_numpy(), joined["baseline"].to_numpy()
            )
            rows.append(
                {
                    "method": report.label,
                    "aggregation": report.aggregation,
                    "metric": metric_name,
                    "mean": float(joined[metric].mean()) if len(joined) else 0.0,
                    "baseline_mean": (
                        float(joined["baseline"].mean()) if len(joined) else 0.0
                    ),
                    "num_requests": len(joined),
                    "test": test,
                    "statistic": statistic,
                    "pvalue": pval,
                }
            )
    comparison = pd.DataFrame(
        rows,
        columns=[
            "method",
            "aggregation",
            "metric",
            "mean",
            "baseline_mean",
            "num_requests",
            "test",
            "statistic",
            "pvalue",
        ],
    )
    comparison["pvalue_corrected"] = np.nan
    for metric_name in METRICS.values():
        rows_for_metric = comparison["metric"] == metric_name
        comparison.loc[rows_for_metric, "pvalue_corrected"] = corrector.correct(
            comparison.loc[rows_for_metric, "pvalue"].to_numpy(dtype=np.float64)
        )
    return comparison
