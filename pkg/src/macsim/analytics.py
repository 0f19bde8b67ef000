"""Correct re-link proportions per record and per retained sample."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .core import FieldParams
from .linker import LinkSet, composite_weights, greedy_link, weight_table

COARSE_EDGES = tuple(round(1.0 - k / 10, 10) for k in range(11))
FINE_EDGES = tuple(round(1.0 - k / 100, 10) for k in range(11))


def relink_samples(stream: Iterable[np.ndarray], params: Sequence[FieldParams],
                   cutoff: float = 0.0) -> list[LinkSet]:
    """Re-link every retained sample with the observed-link method."""
    table = weight_table(params)
    out = []
    for cells in stream:
        cells = getattr(cells, "cells", cells)
        out.append(greedy_link(composite_weights(cells, table=table), cutoff))
    return out


@dataclass
class AccuracyReport:
    """Re-link accuracy of one block.

    ``per_record`` is NaN for records the observed linking left unlinked;
    those records are excluded from every denominator.
    """

    per_record: np.ndarray
    per_sample: np.ndarray
    correct_per_record: np.ndarray
    correct_per_sample: np.ndarray
    linked: np.ndarray
    samples: int
    truth_per_record: np.ndarray | None = None

    @property
    def n_linked(self) -> int:
        return int(self.linked.sum())

    @property
    def unlinked(self) -> np.ndarray:
        return np.flatnonzero(~self.linked)

    @property
    def total_correct(self) -> int:
        return int(self.correct_per_record.sum())

    @property
    def overall_mean(self) -> float:
        denom = self.samples * self.n_linked
        return self.total_correct / denom if denom else float("nan")


def correct_relink(observed: LinkSet, simulated: Sequence[LinkSet],
                   truth_map: np.ndarray | None = None) -> AccuracyReport:
    """Count, per record and per sample, re-links to the observed partner.

    With ``truth_map`` an extra per-record share of samples whose re-link
    is the true match is filled in (not part of the re-link metric).
    """
    target = observed.partner()
    linked = target >= 0
    S = len(simulated)
    nx = observed.x_size
    per_rec = np.zeros(nx, dtype=np.int64)
    per_samp = np.zeros(S, dtype=np.int64)
    truth_hits = np.zeros(nx, dtype=np.int64)
    for s, ls in enumerate(simulated):
        if ls.x_size != nx:
            raise ValueError("simulated link set covers a different block")
        p = ls.partner()
        ok = linked & (p == target)
        per_rec += ok
        per_samp[s] = int(ok.sum())
        if truth_map is not None:
            truth_hits += p == truth_map
    n_linked = int(linked.sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        rec = np.where(linked, per_rec / S if S else np.nan, np.nan)
        samp = per_samp / n_linked if n_linked else np.full(S, np.nan)
    truth_rec = truth_hits / S if (truth_map is not None and S) else None
    return AccuracyReport(rec, samp, per_rec, per_samp, linked, S, truth_rec)


def bin_report(proportions: Sequence[float], edges: Sequence[float] = COARSE_EDGES) -> pd.DataFrame:
    """Counts per bin [lower, upper), the top bin closed at its upper edge.

    ``edges`` run strictly downward from 1.0; percentages are relative to
    every record passed in, so a fine table over [0.9, 1.0] reports the
    share of all records.
    """
    edges = [float(e) for e in edges]
    if edges[0] != 1.0 or any(b >= a for a, b in zip(edges, edges[1:])) or edges[-1] < 0:
        raise ValueError("edges must decrease strictly from 1.0 to a value >= 0")
    p = np.asarray([v for v in proportions if not np.isnan(v)], dtype=float)
    n = len(p)
    rows = []
    for k, (upper, lower) in enumerate(zip(edges, edges[1:])):
        if k == 0:
            count = int(((p >= lower) & (p <= upper)).sum())
        else:
            count = int(((p >= lower) & (p < upper)).sum())
        rows.append((upper, lower, count, 100.0 * count / n if n else 0.0))
    return pd.DataFrame(rows, columns=["upper", "lower", "count", "percent"])


def per_record_frame(block: str, x_ids: Sequence[str], report: AccuracyReport) -> pd.DataFrame:
    keep = report.linked
    return pd.DataFrame({
        "block": block,
        "recid": np.asarray(x_ids, dtype=object)[keep],
        "proportion": report.per_record[keep],
    })


def per_sample_frame(block: str, report: AccuracyReport) -> pd.DataFrame:
    return pd.DataFrame({
        "block": block,
        "sample": np.arange(1, report.samples + 1),
        "proportion": report.per_sample,
    })
