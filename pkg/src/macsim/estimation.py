"""Per-block m, u, g estimation from an agreement block with known pairs."""

from __future__ import annotations

import numpy as np
import pandas as pd

from .core import AGREE, MISSING, AgreementBlock, FieldParams, ParameterError


class EstimationError(ValueError):
    pass


def field_counts(a: AgreementBlock) -> dict[str, np.ndarray]:
    """Per-field agree/missing counts split by match status."""
    matched = a.matched_cells()
    agree_all = (a.cells == AGREE).sum(axis=(0, 1))
    missing_all = (a.cells == MISSING).sum(axis=(0, 1))
    agree_m = (matched == AGREE).sum(axis=0)
    return {
        "n_all": np.full(a.field_count, a.x_size * a.y_size),
        "n_matched": np.full(a.field_count, a.x_size),
        "agree_matched": agree_m,
        "agree_nonmatched": agree_all - agree_m,
        "missing_all": missing_all,
    }


def estimate_params(a: AgreementBlock, smoothing: float = 0.0,
                    validate: bool = True) -> list[FieldParams]:
    """m, u and g for every linking field of the block.

    Denominators count every pair, missing-valued ones included.  With
    ``smoothing`` > 0 the agree counts get ``smoothing`` added and the pair
    counts ``2 * smoothing``.
    """
    if a.x_size < 1:
        raise EstimationError("block has no matched pairs")
    n_nonmatched = a.x_size * (a.y_size - 1)
    if n_nonmatched < 1:
        raise EstimationError("block has no non-matched pairs (y_size == 1)")
    c = field_counts(a)
    eps = float(smoothing)
    out = []
    for l in range(a.field_count):
        m = (c["agree_matched"][l] + eps) / (a.x_size + 2 * eps)
        u = (c["agree_nonmatched"][l] + eps) / (n_nonmatched + 2 * eps)
        g = c["missing_all"][l] / c["n_all"][l]
        name = a.fields[l] if a.fields else str(l)
        fp = FieldParams(float(m), float(u), float(g), name=name)
        if validate:
            fp.validate()
        out.append(fp)
    return out


def usable_fields(params: list[FieldParams]) -> tuple[list[int], list[tuple[str, str]]]:
    """Indices of valid fields and (name, reason) for the rejected ones."""
    keep, dropped = [], []
    for l, fp in enumerate(params):
        try:
            fp.validate()
        except ParameterError as exc:
            dropped.append((fp.name or str(l), str(exc)))
        else:
            keep.append(l)
    return keep, dropped


def params_frame(block: str, params: list[FieldParams]) -> pd.DataFrame:
    return pd.DataFrame(
        [(block, fp.name, fp.m, fp.u, fp.g, fp.w) for fp in params],
        columns=["block", "field", "m", "u", "g", "w"],
    )


def read_params(path) -> dict[str, list[FieldParams]]:
    """Externally supplied parameters keyed by block ("*" applies to all)."""
    df = pd.read_csv(path, dtype={"block": str, "field": str})
    out: dict[str, list[FieldParams]] = {}
    for row in df.itertuples(index=False):
        w = getattr(row, "w", None)
        fp = FieldParams(float(row.m), float(row.u), float(row.g),
                         None if w is None or pd.isna(w) else float(w), name=row.field)
        out.setdefault(row.block, []).append(fp)
    return out
