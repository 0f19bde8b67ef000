"""Synthetic census-style population files and error injection.

File Y holds ``n_y`` randomly ordered person records; file X is a copy of
the first eighth of Y.  Errors are injected into X only, and every
perturbed field is recorded in a truth sidecar (recid, field,
original_value).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

FIELDS = ["recid", "sa1", "mb", "bday", "byear", "sex", "eye", "cob"]
ANALYSIS_FIELDS = ["sa1", "mb", "bday", "byear", "sex", "eye", "cob"]
INT_FIELDS = ["sa1", "mb", "bday", "byear", "sex", "eye"]

SA1_BASE = 10000
SA1_GROUP = 400
MB_PER_SA1 = 5
BYEAR_RANGE = (1955, 2009)
BDAY_MAX = 366
EYE_MAX = 5
AUSTRALIA = "1101"
AUSTRALIA_SHARE = 0.75
X_FRACTION = 8  # X is the first 1/8 of Y


class ConfigError(ValueError):
    pass


def country_table() -> pd.DataFrame:
    """Bundled approximate country-of-birth frequencies (Australia excluded)."""
    text = resources.files("macsim.data").joinpath("country_codes.csv").read_text()
    return pd.read_csv(io.StringIO(text), dtype={"code": str})


def _group_sizes(n_y: int, scale: float) -> tuple[int, int, int]:
    sa1_group = SA1_GROUP * scale
    mb_group = sa1_group / MB_PER_SA1
    if abs(sa1_group - round(sa1_group)) > 1e-9 or abs(mb_group - round(mb_group)) > 1e-9:
        raise ConfigError(f"scale {scale} gives non-integral SA1/MB group sizes")
    sa1_group, mb_group = int(round(sa1_group)), int(round(mb_group))
    if sa1_group <= 0 or n_y % sa1_group:
        raise ConfigError(f"n_y={n_y} is not a multiple of the SA1 group size {sa1_group}")
    if n_y % X_FRACTION or n_y % 2:
        raise ConfigError(f"n_y={n_y} must be divisible by {X_FRACTION}")
    return sa1_group, mb_group, n_y // sa1_group


def generate_population(n_y: int = 400_000, scale: float = 1.0, seed: int = 0):
    """Return ``(Y, X)`` DataFrames following the synthetic census schema.

    SA1 groups hold exactly ``400 * scale`` Y records split evenly over five
    meshblocks; sex is exactly 50/50 and 75% of records are born in
    Australia.  Other fields are independent discrete uniforms.
    """
    sa1_group, mb_group, n_sa1 = _group_sizes(n_y, scale)
    rng = np.random.default_rng(seed)

    sa1 = np.repeat(SA1_BASE + np.arange(1, n_sa1 + 1), sa1_group)
    mb_idx = np.tile(np.repeat(np.arange(1, MB_PER_SA1 + 1), mb_group), n_sa1)
    order = rng.permutation(n_y)
    sa1, mb_idx = sa1[order], mb_idx[order]
    mb = sa1 * 100 + mb_idx

    sex = np.repeat([1, 2], n_y // 2)[rng.permutation(n_y)]
    bday = rng.integers(1, BDAY_MAX + 1, size=n_y)
    byear = rng.integers(BYEAR_RANGE[0], BYEAR_RANGE[1] + 1, size=n_y)
    eye = rng.integers(1, EYE_MAX + 1, size=n_y)

    table = country_table()
    n_au = int(round(AUSTRALIA_SHARE * n_y))
    others = rng.choice(table["code"].to_numpy(), size=n_y - n_au,
                        p=table["proportion"].to_numpy())
    cob = np.concatenate([np.full(n_au, AUSTRALIA, dtype=object), others.astype(object)])
    cob = cob[rng.permutation(n_y)]

    y = pd.DataFrame({
        "recid": [f"A{k:06d}" for k in range(1, n_y + 1)],
        "sa1": sa1, "mb": mb, "bday": bday, "byear": byear,
        "sex": sex, "eye": eye, "cob": cob,
    })
    y = _normalise(y)
    x = y.iloc[: n_y // X_FRACTION].reset_index(drop=True).copy()
    return y, x


def _normalise(df: pd.DataFrame) -> pd.DataFrame:
    df = df[FIELDS].copy()
    df["recid"] = df["recid"].astype("string")
    for f in INT_FIELDS:
        df[f] = df[f].astype("Int64")
    df["cob"] = df["cob"].astype("string")
    return df


@dataclass(frozen=True)
class ErrorSpec:
    """Per-field perturbation rates, each a fraction of the X file size.

    Rules are applied in declaration order.  Rules that touch the same field
    (including the SA1 rule, which also rewrites MB) draw disjoint record
    subsets; different fields are drawn independently.
    """

    sa1_adjacent: float = 0.01
    mb_within_sa1: float = 0.03
    bday_missing: float = 0.08
    bday_altered: float = 0.01
    byear_minus2: float = 0.001
    byear_plus2: float = 0.001
    byear_minus1: float = 0.024
    byear_plus1: float = 0.024
    sex_flip: float = 0.001
    eye_missing: float = 0.10
    eye_alternative: float = 0.10
    cob_missing_australia: float = 0.015
    cob_missing_other: float = 0.005
    cob_to_australia: float = 0.0025
    cob_recode_region: float = 0.0025
    seed: int = 0
    sa1_range: tuple[int, int] | None = None

    def __post_init__(self):
        for name, rate in self.rates().items():
            if not 0.0 <= rate <= 1.0:
                raise ConfigError(f"{name}={rate} outside [0, 1]")

    def rates(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)
                if f.name not in ("seed", "sa1_range")}

    def counts(self, n: int) -> dict[str, int]:
        return {name: int(round(rate * n)) for name, rate in self.rates().items()}

    @classmethod
    def none(cls, seed: int = 0) -> "ErrorSpec":
        return cls(**{name: 0.0 for name in cls().rates()}, seed=seed)


def _pick(rng, pool: np.ndarray, k: int, rule: str, taken: np.ndarray | None = None) -> np.ndarray:
    # Rules touching the same field draw disjoint subsets so counts stay exact.
    if taken is not None:
        pool = pool[~taken[pool]]
    if k > len(pool):
        raise ConfigError(f"rule {rule} needs {k} records but only {len(pool)} are eligible")
    idx = np.sort(rng.choice(pool, size=k, replace=False))
    if taken is not None:
        taken[idx] = True
    return idx


def inject_errors(x: pd.DataFrame, spec: ErrorSpec):
    """Return ``(x_perturbed, truth)``.

    ``truth`` lists (recid, field, original_value) for every field whose
    value differs from the input.
    """
    rng = np.random.default_rng(spec.seed)
    n = len(x)
    counts = spec.counts(n)
    everyone = np.arange(n)

    sa1 = x["sa1"].to_numpy(dtype=np.int64, na_value=-1).copy()
    mb = x["mb"].to_numpy(dtype=np.int64, na_value=-1).copy()
    bday = x["bday"].to_numpy(dtype=float, na_value=np.nan).copy()
    byear = x["byear"].to_numpy(dtype=float, na_value=np.nan).copy()
    sex = x["sex"].to_numpy(dtype=np.int64, na_value=-1).copy()
    eye = x["eye"].to_numpy(dtype=float, na_value=np.nan).copy()
    cob = x["cob"].to_numpy(dtype=object, na_value=None).copy()

    if spec.sa1_range is not None:
        lo, hi = spec.sa1_range
    else:
        lo, hi = (int(sa1[sa1 > 0].min()), int(sa1.max())) if n else (0, 0)
    taken = np.zeros(n, dtype=bool)
    idx = _pick(rng, everyone, counts["sa1_adjacent"], "sa1_adjacent", taken)
    step = rng.choice([-1, 1], size=len(idx))
    new = sa1[idx] + step
    out = (new < lo) | (new > hi)
    new[out] = sa1[idx][out] - step[out]
    sa1[idx] = new
    mb[idx] = new * 100 + mb[idx] % 100

    idx = _pick(rng, everyone, counts["mb_within_sa1"], "mb_within_sa1", taken)
    shift = rng.integers(1, MB_PER_SA1, size=len(idx))
    k = (mb[idx] % 100 - 1 + shift) % MB_PER_SA1 + 1
    mb[idx] = sa1[idx] * 100 + k

    taken = np.zeros(n, dtype=bool)
    idx = _pick(rng, everyone, counts["bday_missing"], "bday_missing", taken)
    bday[idx] = np.nan
    idx = _pick(rng, everyone, counts["bday_altered"], "bday_altered", taken)
    shift = rng.integers(1, BDAY_MAX, size=len(idx))
    bday[idx] = (bday[idx] - 1 + shift) % BDAY_MAX + 1

    taken = np.zeros(n, dtype=bool)
    for rule, delta in (("byear_minus2", -2), ("byear_plus2", 2),
                        ("byear_minus1", -1), ("byear_plus1", 1)):
        idx = _pick(rng, everyone, counts[rule], rule, taken)
        byear[idx] = byear[idx] + delta

    idx = _pick(rng, everyone, counts["sex_flip"], "sex_flip")
    sex[idx] = 3 - sex[idx]

    taken = np.zeros(n, dtype=bool)
    idx = _pick(rng, everyone, counts["eye_missing"], "eye_missing", taken)
    eye[idx] = np.nan
    idx = _pick(rng, everyone, counts["eye_alternative"], "eye_alternative", taken)
    shift = rng.integers(1, EYE_MAX, size=len(idx))
    eye[idx] = (eye[idx] - 1 + shift) % EYE_MAX + 1

    orig_cob = cob.copy()
    is_au = np.array([c == AUSTRALIA for c in orig_cob])
    has_cob = np.array([c is not None for c in orig_cob])
    au_pool = everyone[is_au]
    other_pool = everyone[~is_au & has_cob]
    taken = np.zeros(n, dtype=bool)
    idx = _pick(rng, au_pool, counts["cob_missing_australia"], "cob_missing_australia", taken)
    cob[idx] = None
    idx = _pick(rng, other_pool, counts["cob_missing_other"], "cob_missing_other", taken)
    cob[idx] = None
    idx = _pick(rng, other_pool, counts["cob_to_australia"], "cob_to_australia", taken)
    cob[idx] = AUSTRALIA
    idx = _pick(rng, other_pool, counts["cob_recode_region"], "cob_recode_region", taken)
    codes = country_table()["code"].to_numpy()
    for r in idx:
        region = orig_cob[r][:2]
        choices = [c for c in codes if c[:2] == region and c != orig_cob[r]]
        if choices:
            cob[r] = choices[rng.integers(len(choices))]

    out = x.copy()
    out["sa1"] = pd.array(sa1, dtype="Int64")
    out["mb"] = pd.array(mb, dtype="Int64")
    out["bday"] = pd.array(bday, dtype="Int64")
    out["byear"] = pd.array(byear, dtype="Int64")
    out["sex"] = pd.array(sex, dtype="Int64")
    out["eye"] = pd.array(eye, dtype="Int64")
    out["cob"] = pd.array(cob, dtype="string")
    return out, truth_sidecar(x, out)


def truth_sidecar(before: pd.DataFrame, after: pd.DataFrame) -> pd.DataFrame:
    rows = []
    recids = before["recid"].to_numpy(dtype=object)
    changed = {}
    for f in ANALYSIS_FIELDS:
        a, b = before[f], after[f]
        diff = (a.isna() != b.isna()) | (a.notna() & b.notna() & (a != b)).fillna(False)
        changed[f] = np.flatnonzero(diff.to_numpy(dtype=bool))
    pairs = sorted((r, ANALYSIS_FIELDS.index(f)) for f, rs in changed.items() for r in rs)
    for r, fi in pairs:
        f = ANALYSIS_FIELDS[fi]
        v = before[f].iloc[r]
        rows.append((recids[r], f, "" if pd.isna(v) else str(v)))
    return pd.DataFrame(rows, columns=["recid", "field", "original_value"]).astype("string")


def original_values(x: pd.DataFrame, truth: pd.DataFrame | None) -> pd.DataFrame:
    """X with every perturbed field restored from the truth sidecar."""
    out = x.copy()
    if truth is None or truth.empty:
        return out
    pos = pd.Series(np.arange(len(x)), index=x["recid"].astype(str))
    for f, grp in truth.groupby("field", sort=False):
        rows = pos.loc[grp["recid"].astype(str)].to_numpy()
        vals = grp["original_value"].astype(object).to_numpy()
        vals = [None if (v is pd.NA or v == "") else v for v in vals]
        if f in INT_FIELDS:
            col = out[f].astype(object).to_numpy()
            col[rows] = [None if v is None else int(v) for v in vals]
            out[f] = pd.array(col, dtype="Int64")
        else:
            col = out[f].astype(object).to_numpy()
            col[rows] = vals
            out[f] = pd.array(col, dtype="string")
    return out


def write_file(df: pd.DataFrame, path) -> None:
    """Write a population file; missing values become empty strings."""
    df.to_csv(path, index=False, na_rep="", lineterminator="\n", quoting=csv.QUOTE_MINIMAL)


def read_file(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype=str, keep_default_na=False, na_values=[""])
    missing = [f for f in FIELDS if f not in df.columns]
    if missing:
        raise ConfigError(f"{path}: missing columns {missing}")
    return _normalise(df)


def read_truth(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    return df[["recid", "field", "original_value"]].astype("string")


def write_truth(truth: pd.DataFrame, path) -> None:
    truth.to_csv(path, index=False, lineterminator="\n")


def generate_files(out_dir, n_y=400_000, scale=1.0, seed=0, errors: ErrorSpec | None = None):
    """Generate Y, X and the truth sidecar and write them as CSV under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    y, x = generate_population(n_y, scale, seed)
    if errors is None:
        errors = ErrorSpec(seed=seed + 1)
    if errors.sa1_range is None:
        sa1 = y["sa1"].astype("int64")
        errors = ErrorSpec(**{**errors.__dict__, "sa1_range": (int(sa1.min()), int(sa1.max()))})
    x2, truth = inject_errors(x, errors)
    write_file(y, out_dir / "y.csv")
    write_file(x2, out_dir / "x.csv")
    write_truth(truth, out_dir / "truth.csv")
    return y, x2, truth
