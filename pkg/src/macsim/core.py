"""Shared domain types and the closed-form parameter maths.

Agreement codes follow the usual ternary convention: 1 agree, -1 disagree,
0 missing.  An agreement block is stored as a dense ``int8`` array indexed
``(i, j, l)`` = (X record, Y record, linking field).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Tolerance used to decide that a field never disagrees for matched pairs.
FROZEN_EPS = 1e-12


class ParameterError(ValueError):
    """A linking field's probabilities violate m > u, m + g <= 1 or u + g <= 1."""

    def __init__(self, message: str, field: str | int | None = None):
        super().__init__(message)
        self.field = field


class TernaryAgreement(enum.IntEnum):
    AGREE = 1
    DISAGREE = -1
    MISSING = 0


AGREE = int(TernaryAgreement.AGREE)
DISAGREE = int(TernaryAgreement.DISAGREE)
MISSING = int(TernaryAgreement.MISSING)


@dataclass
class AgreementBlock:
    """Agreement array for one block plus the designated matched pairs.

    ``truth_map[i]`` is the Y index of X record ``i``'s true partner.  The
    block is mutable (the chain updates ``cells`` in place); treat it as
    single-writer.
    """

    cells: np.ndarray
    truth_map: np.ndarray
    key: tuple = ()
    fields: tuple[str, ...] = ()
    x_ids: tuple[str, ...] = ()
    y_ids: tuple[str, ...] = ()

    def __post_init__(self):
        self.cells = np.ascontiguousarray(self.cells, dtype=np.int8)
        self.truth_map = np.ascontiguousarray(self.truth_map, dtype=np.int64)
        if self.cells.ndim != 3:
            raise ValueError(f"cells must be 3-D, got shape {self.cells.shape}")
        nx, ny, nl = self.cells.shape
        if nx > ny:
            raise ValueError(f"x_size {nx} exceeds y_size {ny}")
        if self.truth_map.shape != (nx,):
            raise ValueError("truth_map must have one entry per X record")
        if nx and (self.truth_map.min() < 0 or self.truth_map.max() >= ny):
            raise ValueError("truth_map points outside the Y range")
        if len(np.unique(self.truth_map)) != nx:
            raise ValueError("truth_map is not injective")
        if not np.isin(self.cells, (AGREE, DISAGREE, MISSING)).all():
            raise ValueError("cells contain codes outside {1, -1, 0}")
        if self.fields and len(self.fields) != nl:
            raise ValueError("fields length does not match field_count")

    @property
    def x_size(self) -> int:
        return self.cells.shape[0]

    @property
    def y_size(self) -> int:
        return self.cells.shape[1]

    @property
    def field_count(self) -> int:
        return self.cells.shape[2]

    def matched_cells(self) -> np.ndarray:
        """(x_size, field_count) view of the cells on the designated diagonal."""
        return self.cells[np.arange(self.x_size), self.truth_map, :]

    def matched_mask(self) -> np.ndarray:
        mask = np.zeros(self.cells.shape[:2], dtype=bool)
        mask[np.arange(self.x_size), self.truth_map] = True
        return mask

    def copy(self) -> "AgreementBlock":
        return AgreementBlock(
            self.cells.copy(), self.truth_map.copy(), self.key, self.fields,
            self.x_ids, self.y_ids,
        )

    def select_fields(self, keep: Sequence[int]) -> "AgreementBlock":
        keep = list(keep)
        names = tuple(self.fields[k] for k in keep) if self.fields else ()
        return AgreementBlock(
            self.cells[:, :, keep], self.truth_map.copy(), self.key, names,
            self.x_ids, self.y_ids,
        )


@dataclass(frozen=True)
class FieldParams:
    m: float
    u: float
    g: float
    w: float = field(default=None)  # type: ignore[assignment]
    name: str = ""

    def __post_init__(self):
        if self.w is None:
            object.__setattr__(self, "w", w_from_g(self.g))

    @property
    def frozen(self) -> bool:
        return 1.0 - self.m - self.g <= FROZEN_EPS

    def validate(self) -> None:
        label = self.name or "?"
        for nm, v in (("m", self.m), ("u", self.u), ("g", self.g), ("w", self.w)):
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"field {label}: {nm}={v} outside [0, 1]", label)
        if self.m + self.g > 1.0 + FROZEN_EPS:
            raise ParameterError(f"field {label}: m + g = {self.m + self.g} > 1", label)
        if self.u + self.g > 1.0 + FROZEN_EPS:
            raise ParameterError(f"field {label}: u + g = {self.u + self.g} > 1", label)
        if not self.m > self.u:
            raise ParameterError(f"field {label}: m={self.m} <= u={self.u}", label)


@dataclass(frozen=True)
class TransitionParams:
    p1: float
    p2: float
    q1: float
    q2: float
    q3: float = 1.0


def w_from_g(g: float) -> float:
    """Single-file missing rate from the pair missing rate, (1 - w)**2 = 1 - g."""
    if not 0.0 <= g <= 1.0 or math.isnan(g):
        raise ValueError(f"g={g} outside [0, 1]")
    return 1.0 - math.sqrt(1.0 - g)


def _clip01(x: float) -> float:
    return min(1.0, max(0.0, x))


def _regular_branch(m: float, u: float, g: float) -> tuple[float, float]:
    return (1.0 - m - g) / m, u / (1.0 - u - g)


def _else_branch(m: float, u: float, g: float) -> float:
    return (1.0 - m - g) * (1.0 - u - g) / (m * (3.0 * u + g - 1.0))


def transition_params(fp: FieldParams) -> TransitionParams:
    """Kernel probabilities that keep the m and u agreement rates stationary.

    A frozen field (1 - m - g <= FROZEN_EPS) gets p1 = p2 = 0: its matched
    value never disagrees, so it is never flipped.  A weak field with
    m < 0.5 * (1 - g) would need p1 > 1; p1 is capped at 1 and q1 = q2 = q3
    is re-solved so both agreement rates still balance.
    """
    fp.validate()
    m, u, g = fp.m, fp.u, fp.g
    slack_m = 1.0 - m - g
    slack_u = 1.0 - u - g
    if u <= 0.5 * (1.0 - g):
        q = u / slack_u if slack_u > 0 else 1.0
        if slack_m <= FROZEN_EPS:
            return TransitionParams(0.0, 0.0, _clip01(q), _clip01(q), 1.0)
        p1 = slack_m / m
        if p1 > 1.0:
            q = 2.0 * m * u / (slack_u * (1.0 - g))
            return TransitionParams(1.0, m / slack_m, q, q, q)
        return TransitionParams(p1, 1.0, _clip01(q), _clip01(q), 1.0)
    if slack_m <= FROZEN_EPS:
        return TransitionParams(0.0, 0.0, 1.0, 1.0, 1.0)
    p1 = _else_branch(m, u, g)
    return TransitionParams(p1, p1 * m / slack_m, 1.0, 1.0, 1.0)


def matched_balance(fp: FieldParams, tp: TransitionParams) -> float:
    """One-step probability that a matched cell agrees after a kernel step."""
    return (1.0 - tp.p1) * fp.m + tp.p2 * (1.0 - fp.m - fp.g)


def nonmatched_balance(fp: FieldParams, tp: TransitionParams) -> float:
    """One-step probability that a non-matched cell agrees, assuming the
    current state has the m/u/g product-form marginals."""
    m, u, g, w = fp.m, fp.u, fp.g, fp.w
    s, t = 1.0 - m - g, 1.0 - u - g
    p1, p2, q1, q2, q3 = tp.p1, tp.p2, tp.q1, tp.q2, tp.q3
    if w >= 1.0:
        return u
    return u * w + (
        m * u * (1.0 - p1)
        + m * t * p1 * q1
        + s * t * p2 * q2
        + s * t * (1.0 - p2) * q3
        + s * u * (1.0 - p2)
    ) / (1.0 - w)


def validate_all(params: Sequence[FieldParams]) -> None:
    for fp in params:
        fp.validate()
