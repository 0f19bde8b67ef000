"""Fellegi-Sunter style weights and the greedy one-to-one linker.

Weights are base-2 log likelihood ratios.  Missing values contribute
nothing; degenerate ratios (u = 0, or a zero disagreement probability) are
capped at ``MAX_WEIGHT`` / ``MIN_WEIGHT``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import AGREE, DISAGREE, MISSING, AgreementBlock, FieldParams

MAX_WEIGHT = 30.0
MIN_WEIGHT = -30.0


def _log2_ratio(num: float, den: float, lo: float, hi: float) -> float:
    if den <= 0.0:
        return lo
    if num <= 0.0:
        return lo
    return min(hi, max(lo, math.log2(num / den)))


def cell_weight(value: int, fp: FieldParams, max_weight: float = MAX_WEIGHT,
                min_weight: float = MIN_WEIGHT) -> float:
    if value == AGREE:
        if fp.u <= 0.0:
            return max_weight if fp.m > 0 else min_weight
        return _log2_ratio(fp.m, fp.u, min_weight, max_weight)
    if value == DISAGREE:
        return _log2_ratio(1.0 - fp.m - fp.g, 1.0 - fp.u - fp.g, min_weight, max_weight)
    if value == MISSING:
        return 0.0
    raise ValueError(f"invalid agreement code {value!r}")


def weight_table(params: Sequence[FieldParams], max_weight: float = MAX_WEIGHT,
                 min_weight: float = MIN_WEIGHT) -> np.ndarray:
    """(field_count, 3) lookup indexed by ``code + 1`` (disagree, missing, agree)."""
    table = np.zeros((len(params), 3))
    for l, fp in enumerate(params):
        for code in (DISAGREE, MISSING, AGREE):
            table[l, code + 1] = cell_weight(code, fp, max_weight, min_weight)
    return table


def composite_weights(a: AgreementBlock | np.ndarray, params: Sequence[FieldParams] | None = None,
                      table: np.ndarray | None = None) -> np.ndarray:
    """(x_size, y_size) matrix of summed cell weights."""
    cells = a.cells if isinstance(a, AgreementBlock) else a
    if table is None:
        if params is None:
            raise TypeError("either params or table is required")
        if len(params) != cells.shape[2]:
            raise ValueError(f"{len(params)} params for {cells.shape[2]} fields")
        table = weight_table(params)
    W = np.zeros(cells.shape[:2])
    for l in range(cells.shape[2]):
        W += table[l][cells[:, :, l] + 1]
    return W


@dataclass(frozen=True)
class LinkSet:
    """Accepted links in acceptance order (descending weight)."""

    x: np.ndarray
    y: np.ndarray
    weight: np.ndarray
    cutoff: float
    x_size: int

    def __len__(self) -> int:
        return len(self.x)

    def pairs(self) -> set[tuple[int, int]]:
        return set(zip(self.x.tolist(), self.y.tolist()))

    def partner(self) -> np.ndarray:
        """Y partner per X index, -1 where unlinked."""
        out = np.full(self.x_size, -1, dtype=np.int64)
        out[self.x] = self.y
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, LinkSet):
            return NotImplemented
        return (self.cutoff == other.cutoff and self.x_size == other.x_size
                and np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y)
                and np.array_equal(self.weight, other.weight))


def greedy_link(W: np.ndarray, cutoff: float = 0.0) -> LinkSet:
    """Link pairs in descending weight order, discarding pairs that reuse a
    record; ties go to the smaller (x, y) index.  Only weights strictly above
    ``cutoff`` are linked."""
    W = np.asarray(W, dtype=float)
    if not np.isfinite(W).all():
        raise ValueError("weights must be finite")
    nx, ny = W.shape
    ii, jj = np.nonzero(W > cutoff)
    ww = W[ii, jj]
    order = np.lexsort((jj, ii, -ww))
    used_x = np.zeros(nx, dtype=bool)
    used_y = np.zeros(ny, dtype=bool)
    lx, ly, lw = [], [], []
    remaining = min(nx, ny)
    for k in order:
        i, j = ii[k], jj[k]
        if used_x[i] or used_y[j]:
            continue
        used_x[i] = used_y[j] = True
        lx.append(i)
        ly.append(j)
        lw.append(ww[k])
        remaining -= 1
        if remaining == 0:
            break
    return LinkSet(np.asarray(lx, dtype=np.int64), np.asarray(ly, dtype=np.int64),
                   np.asarray(lw, dtype=float), float(cutoff), nx)


def link_block(a: AgreementBlock | np.ndarray, params: Sequence[FieldParams],
               cutoff: float = 0.0) -> LinkSet:
    return greedy_link(composite_weights(a, params), cutoff)
