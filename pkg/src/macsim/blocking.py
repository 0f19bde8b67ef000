"""Blocking of the file pair and agreement-array construction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .core import AGREE, DISAGREE, MISSING, AgreementBlock
from .synthgen import ANALYSIS_FIELDS, original_values

RESIDUAL = ("<unblocked>",)


class BlockError(ValueError):
    pass


@dataclass(frozen=True)
class BlockingSpec:
    blocking_fields: tuple[str, ...]
    use_truth_values: bool = True
    linking_fields: tuple[str, ...] | None = None
    allow_overlap: bool = False

    def __post_init__(self):
        object.__setattr__(self, "blocking_fields", tuple(self.blocking_fields))
        if not self.blocking_fields:
            raise ValueError("at least one blocking field is required")
        if self.linking_fields is None:
            linking = tuple(f for f in ANALYSIS_FIELDS if f not in self.blocking_fields)
            object.__setattr__(self, "linking_fields", linking)
        else:
            object.__setattr__(self, "linking_fields", tuple(self.linking_fields))
        overlap = set(self.blocking_fields) & set(self.linking_fields)
        if overlap and not self.allow_overlap:
            raise ValueError(f"fields {sorted(overlap)} are both blocking and linking fields")


@dataclass
class BlockSet:
    """Block key -> (X row indices, Y row indices), plus the residual group
    of records whose key has a missing component."""

    blocks: dict[tuple, tuple[np.ndarray, np.ndarray]]
    residual_x: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    residual_y: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def keys(self) -> list[tuple]:
        return list(self.blocks)

    def __len__(self) -> int:
        return len(self.blocks)

    def __getitem__(self, key) -> tuple[np.ndarray, np.ndarray]:
        return self.blocks[normalise_key(key)]


def format_key(key: tuple) -> str:
    return "_".join(str(k) for k in key)


def normalise_key(key) -> tuple:
    if isinstance(key, tuple):
        return tuple(str(k) for k in key)
    return tuple(str(key).split("_"))


def _group(df: pd.DataFrame, fields: Sequence[str]):
    keys = df[list(fields)].astype("string")
    missing = keys.isna().any(axis=1).to_numpy()
    groups: dict[tuple, list[int]] = {}
    rows = np.flatnonzero(~missing)
    values = keys.to_numpy(dtype=object)
    for r in rows:
        groups.setdefault(tuple(values[r]), []).append(r)
    return groups, np.flatnonzero(missing)


def partition(x: pd.DataFrame, y: pd.DataFrame, spec: BlockingSpec,
              truth: pd.DataFrame | None = None) -> BlockSet:
    """Group both files on equality of the blocking key.

    With ``use_truth_values`` the X key is built from pre-error values so
    every true pair lands in the same block.
    """
    for f in spec.blocking_fields:
        if f not in x.columns or f not in y.columns:
            raise KeyError(f"blocking field {f!r} missing from an input file")
    if spec.use_truth_values:
        x = original_values(x, truth)
    gx, rx = _group(x, spec.blocking_fields)
    gy, ry = _group(y, spec.blocking_fields)
    empty = np.zeros(0, dtype=np.int64)
    blocks = {}
    for key in sorted(set(gx) | set(gy), key=_sort_key):
        blocks[key] = (np.asarray(gx.get(key, empty), dtype=np.int64),
                       np.asarray(gy.get(key, empty), dtype=np.int64))
    return BlockSet(blocks, rx.astype(np.int64), ry.astype(np.int64))


def _sort_key(key: tuple):
    return tuple((0, int(k), "") if k.lstrip("-").isdigit() else (1, 0, k) for k in key)


def _codes(xv: pd.Series, yv: pd.Series) -> tuple[np.ndarray, np.ndarray]:
    both = pd.concat([xv.astype("string"), yv.astype("string")], ignore_index=True)
    codes, _ = pd.factorize(both, use_na_sentinel=True)
    return codes[: len(xv)], codes[len(xv):]


def compare(cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    """Ternary comparison of integer-coded values; negative codes are missing."""
    a = cx[:, None]
    b = cy[None, :]
    out = np.where(a == b, AGREE, DISAGREE).astype(np.int8)
    out[(a < 0) | (b < 0)] = MISSING
    return out


def unmatched_x(x_block: pd.DataFrame, y_block: pd.DataFrame) -> list[str]:
    ys = set(y_block["recid"].astype(str))
    return [r for r in x_block["recid"].astype(str) if r not in ys]


def build_agreement(x_block: pd.DataFrame, y_block: pd.DataFrame,
                    linking_fields: Sequence[str], key: tuple = (),
                    strict: bool = True) -> AgreementBlock:
    """Agreement array of one block; the true pairs come from RECID equality.

    X records without a RECID counterpart in the block raise ``BlockError``
    when ``strict``; otherwise they are dropped from the block.
    """
    if len(x_block) == 0 or len(y_block) == 0:
        raise BlockError(f"block {format_key(key)} is empty on one side")
    missing = unmatched_x(x_block, y_block)
    if missing:
        if strict:
            raise BlockError(
                f"block {format_key(key)}: {len(missing)} X records have no true "
                f"match among the block's Y records (first: {missing[0]})")
        x_block = x_block[~x_block["recid"].astype(str).isin(missing)]
        if len(x_block) == 0:
            raise BlockError(f"block {format_key(key)} has no matchable X records")
    x_block = x_block.reset_index(drop=True)
    y_block = y_block.reset_index(drop=True)

    cells = np.empty((len(x_block), len(y_block), len(linking_fields)), dtype=np.int8)
    for l, f in enumerate(linking_fields):
        cx, cy = _codes(x_block[f], y_block[f])
        cells[:, :, l] = compare(cx, cy)

    y_pos = pd.Series(np.arange(len(y_block)), index=y_block["recid"].astype(str))
    truth_map = y_pos.loc[x_block["recid"].astype(str)].to_numpy()
    return AgreementBlock(
        cells, truth_map, key=tuple(key), fields=tuple(linking_fields),
        x_ids=tuple(x_block["recid"].astype(str)), y_ids=tuple(y_block["recid"].astype(str)),
    )


def block_frames(x: pd.DataFrame, y: pd.DataFrame, blocks: BlockSet, key):
    xi, yi = blocks[key]
    return x.iloc[xi], y.iloc[yi]


def block_manifest(blocks: BlockSet) -> pd.DataFrame:
    rows = [(format_key(k), len(xi), len(yi)) for k, (xi, yi) in blocks.blocks.items()]
    if len(blocks.residual_x) or len(blocks.residual_y):
        rows.append((format_key(RESIDUAL), len(blocks.residual_x), len(blocks.residual_y)))
    return pd.DataFrame(rows, columns=["block", "x_size", "y_size"])
