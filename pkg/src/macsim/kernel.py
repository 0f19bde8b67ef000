"""The agreement-array Markov chain: transition kernel, thinning, diagnostics.

Random numbers come from numpy's PCG64 ``Generator``.  One step consumes,
in order: a uniform for the X record (``floor(u * x_size)``), a uniform for
the field (``floor(u * field_count)``), then, only when the matched cell
is not missing, one uniform for the flip of the matched cell, then one
uniform per disagreeing non-matched cell (ascending ``j``) for cascades
whose flip probability lies strictly between 0 and 1.  Any implementation
that follows this order reproduces the same chain from the same seed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from numba import njit

from .core import AGREE, MISSING, AgreementBlock, FieldParams, TransitionParams, transition_params


@dataclass(frozen=True)
class ChainConfig:
    total_steps: int
    thin: int = 1
    burn_in: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.total_steps < 0 or self.total_steps % self.thin:
            raise ValueError(f"total_steps={self.total_steps} is not a multiple of thin={self.thin}")
        if self.burn_in < 0 or (self.burn_in >= self.samples and self.burn_in > 0):
            raise ValueError(f"burn_in={self.burn_in} must be below the sample count {self.samples}")

    @property
    def samples(self) -> int:
        return self.total_steps // self.thin


def key_words(key) -> list[int]:
    """Stable 32-bit words derived from a block key (blake2b of its text form)."""
    text = "_".join(str(k) for k in key) if isinstance(key, tuple) else str(key)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=16).digest()
    return [int.from_bytes(digest[k:k + 4], "little") for k in range(0, 16, 4)]


def chain_rng(seed: int, key=None) -> np.random.Generator:
    """PCG64 generator for a master seed, split per block key when given."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    if key is not None:
        entropy += key_words(key)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def block_seed(seed: int, key) -> int:
    """64-bit seed recorded for a block's chain."""
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF] + key_words(key))
               .generate_state(1, np.uint64)[0])


@njit(cache=True)
def _cascade(cells, i, t, l, q, clear_agree, rng):
    ny = cells.shape[1]
    for j in range(ny):
        if j == t:
            continue
        v = cells[i, j, l]
        if v == 1:
            if clear_agree:
                cells[i, j, l] = -1
        elif v == -1:
            if q >= 1.0:
                cells[i, j, l] = 1
            elif q > 0.0:
                if rng.random() < q:
                    cells[i, j, l] = 1


@njit(cache=True)
def _advance(cells, truth, p1, p2, q1, q2, q3, rng, nsteps):
    nx, ny, nl = cells.shape
    for _ in range(nsteps):
        i = int(rng.random() * nx)
        if i >= nx:
            i = nx - 1
        l = int(rng.random() * nl)
        if l >= nl:
            l = nl - 1
        t = truth[i]
        c = cells[i, t, l]
        if c == 0:
            continue
        r = rng.random()
        if c == 1:
            if r < p1[l]:
                cells[i, t, l] = -1
                _cascade(cells, i, t, l, q1[l], True, rng)
        else:
            if r < p2[l]:
                cells[i, t, l] = 1
                _cascade(cells, i, t, l, q2[l], True, rng)
            else:
                _cascade(cells, i, t, l, q3[l], False, rng)


def _param_arrays(params: Sequence[TransitionParams]):
    return tuple(np.array([getattr(tp, k) for tp in params], dtype=np.float64)
                 for k in ("p1", "p2", "q1", "q2", "q3"))


def as_transition(params: Sequence[TransitionParams | FieldParams]) -> list[TransitionParams]:
    return [p if isinstance(p, TransitionParams) else transition_params(p) for p in params]


def kernel_step(state: AgreementBlock, params: Sequence[TransitionParams | FieldParams],
                rng: np.random.Generator) -> AgreementBlock:
    """One transition; returns a new block and leaves ``state`` untouched."""
    params = as_transition(params)
    if len(params) != state.field_count:
        raise ValueError(f"{len(params)} params for {state.field_count} fields")
    nxt = state.copy()
    if state.x_size and state.field_count:
        _advance(nxt.cells, nxt.truth_map, *_param_arrays(params), rng, 1)
    return nxt


@dataclass
class SampleStream:
    """Initial state plus every retained state of one chain.

    ``frames[0]`` is the initial array; ``frames[1:]`` are the S retained
    states, of which the first ``burn_in`` are excluded by ``usable()``.
    """

    frames: np.ndarray
    thin: int
    burn_in: int
    seed: int
    truth_map: np.ndarray | None = None
    key: tuple = field(default=())

    @property
    def samples(self) -> int:
        return self.frames.shape[0] - 1

    @property
    def initial(self) -> np.ndarray:
        return self.frames[0]

    def usable(self) -> np.ndarray:
        return self.frames[1 + self.burn_in:]

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.usable())

    def __len__(self) -> int:
        return self.samples - self.burn_in

    def __eq__(self, other) -> bool:
        if not isinstance(other, SampleStream):
            return NotImplemented
        return (self.thin == other.thin and self.burn_in == other.burn_in
                and self.seed == other.seed and np.array_equal(self.frames, other.frames))


def iter_chain(a0: AgreementBlock, params: Sequence[TransitionParams | FieldParams],
               cfg: ChainConfig, rng: np.random.Generator | None = None,
               include_burn_in: bool = False) -> Iterator[np.ndarray]:
    """Yield retained states (copies) one at a time, without storing them."""
    params = as_transition(params)
    if len(params) != a0.field_count:
        raise ValueError(f"{len(params)} params for {a0.field_count} fields")
    if rng is None:
        rng = chain_rng(cfg.seed)
    arrays = _param_arrays(params)
    cells = a0.cells.copy()
    truth = a0.truth_map
    live = a0.x_size > 0 and a0.field_count > 0
    for s in range(cfg.samples):
        if live:
            _advance(cells, truth, *arrays, rng, cfg.thin)
        if include_burn_in or s >= cfg.burn_in:
            yield cells.copy()


def run_chain(a0: AgreementBlock, params: Sequence[TransitionParams | FieldParams],
              cfg: ChainConfig, rng: np.random.Generator | None = None) -> SampleStream:
    """Run ``cfg.total_steps`` steps from ``a0`` keeping every ``thin``-th state."""
    frames = np.empty((cfg.samples + 1,) + a0.cells.shape, dtype=np.int8)
    frames[0] = a0.cells
    for s, cells in enumerate(iter_chain(a0, params, cfg, rng, include_burn_in=True), 1):
        frames[s] = cells
    return SampleStream(frames, cfg.thin, cfg.burn_in, cfg.seed, a0.truth_map.copy(), a0.key)


def _cells(x) -> np.ndarray:
    return x.cells if isinstance(x, AgreementBlock) else np.asarray(x)


def distance(sample, a0) -> float:
    """Share of cells whose value differs from the initial array."""
    s, a = _cells(sample), _cells(a0)
    if s.shape != a.shape:
        raise ValueError(f"shape mismatch {s.shape} vs {a.shape}")
    if s.size == 0:
        return 0.0
    return int(np.count_nonzero(s != a)) / s.size


def ternary_counts(sample) -> tuple[int, int, int]:
    s = _cells(sample)
    agree = int(np.count_nonzero(s == AGREE))
    missing = int(np.count_nonzero(s == MISSING))
    return agree, s.size - agree - missing, missing


def agree_frequencies(cells: np.ndarray, truth_map: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-field agree share over matched cells and over non-matched cells.

    Missing cells count as not agreeing, matching how m and u are estimated.
    """
    nx, ny, _ = cells.shape
    agree = cells == AGREE
    matched = agree[np.arange(nx), truth_map, :].sum(axis=0)
    total = agree.sum(axis=(0, 1))
    return matched / nx, (total - matched) / (nx * (ny - 1))


def batch_means_se(series: np.ndarray, n_batches: int | None = None) -> float:
    """Monte Carlo standard error of the mean of a correlated series."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 4:
        return float("nan")
    if n_batches is None:
        n_batches = max(2, int(np.sqrt(n)))
    size = n // n_batches
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))


def chain_diagnostics(frames, a0) -> dict[str, np.ndarray]:
    """Distance and agree/disagree/missing counts for each retained state."""
    a = _cells(a0)
    dist, agree, disagree, missing = [], [], [], []
    for f in frames:
        dist.append(distance(f, a))
        c = ternary_counts(f)
        agree.append(c[0])
        disagree.append(c[1])
        missing.append(c[2])
    return {"distance": np.asarray(dist), "agree": np.asarray(agree),
            "disagree": np.asarray(disagree), "missing": np.asarray(missing)}
