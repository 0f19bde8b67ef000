import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macsim.core import AgreementBlock, FieldParams, TransitionParams, transition_params
from macsim.estimation import estimate_params
from macsim.kernel import (ChainConfig, SampleStream, agree_frequencies, batch_means_se,
                           block_seed, chain_diagnostics, chain_rng, distance, iter_chain,
                           kernel_step, run_chain, ternary_counts)

from conftest import random_block
from oracles import reference_params, reference_step

PARAMS = [FieldParams(0.9, 0.1, 0.1), FieldParams(0.8, 0.6, 0.0), FieldParams(0.85, 0.3, 0.05),
          FieldParams(0.3, 0.1, 0.0)]


def _block(seed=0, nx=6, ny=9, nl=4):
    cells, truth = random_block(np.random.default_rng(seed), nx, ny, nl, p_agree=0.4)
    return AgreementBlock(cells, truth)


def test_params_match_reference():
    for fp in PARAMS:
        tp = transition_params(fp)
        assert (tp.p1, tp.p2, tp.q1, tp.q2, tp.q3) == pytest.approx(reference_params(fp.m, fp.u, fp.g))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_chain_matches_reference_kernel(seed):
    a = _block(seed)
    stream = run_chain(a, PARAMS, ChainConfig(400, thin=1, seed=seed), rng=chain_rng(seed))
    ref_rng = chain_rng(seed)
    cells = a.cells.copy()
    ref_params = [reference_params(fp.m, fp.u, fp.g) for fp in PARAMS]
    for s in range(400):
        reference_step(cells, a.truth_map, ref_params, ref_rng)
        assert np.array_equal(stream.frames[s + 1], cells), f"diverged at step {s + 1}"
    # same generator state afterwards: both consumed identical draws
    rng = chain_rng(seed)
    run_chain(a, PARAMS, ChainConfig(400, seed=seed), rng=rng)
    assert rng.random() == ref_rng.random()


def test_kernel_step_leaves_input():
    a = _block(3)
    before = a.cells.copy()
    kernel_step(a, PARAMS, chain_rng(0))
    assert np.array_equal(a.cells, before)


def test_missing_matched_cell_is_noop():
    cells = np.zeros((1, 4, 1), dtype=np.int8)
    cells[0, 1:, 0] = [1, -1, 1]
    a = AgreementBlock(cells, [0])
    rng = chain_rng(1)
    for _ in range(50):
        a = kernel_step(a, [FieldParams(0.5, 0.2, 0.4)], rng)
    assert np.array_equal(a.cells, cells)


def _instrumented(a, params, steps, seed):
    ref_params = [reference_params(fp.m, fp.u, fp.g) for fp in params]
    rng = chain_rng(seed)
    ref = chain_rng(seed)
    cells = a.cells.copy()
    cases = {"a": 0, "b": 0, "c": 0}
    for _ in range(steps):
        prev = cells.copy()
        probe = cells.copy()
        i, l, case = reference_step(probe, a.truth_map, ref_params, ref)
        cur = kernel_step(AgreementBlock(prev, a.truth_map), params, rng).cells
        assert np.array_equal(cur, probe)
        t = a.truth_map[i]
        # only the selected slice may change; missing never changes
        mask = np.ones_like(cur, dtype=bool)
        mask[i, :, l] = False
        assert np.array_equal(cur[mask], prev[mask])
        assert np.array_equal(cur == 0, prev == 0)
        others = np.arange(cur.shape[1]) != t
        if case in ("a", "b"):
            assert not (cur[i, others, l] == 1)[prev[i, others, l] == 1].any()
        if case == "a":
            assert prev[i, t, l] == 1 and cur[i, t, l] == -1
        if case == "b":
            assert prev[i, t, l] == -1 and cur[i, t, l] == 1
        if case == "c":
            assert cur[i, t, l] == -1
            assert ((cur[i, others, l] == 1) >= (prev[i, others, l] == 1)).all()
        if case in cases:
            cases[case] += 1
        cells = cur
    return cases


def test_cascade_instrumented():
    cases = _instrumented(_block(4, nx=5, ny=12, nl=4), PARAMS, 3000, seed=9)
    assert min(cases.values()) > 20


def test_else_regime_stay_disagree_fills_slice():
    fp = FieldParams(0.8, 0.6, 0.0)
    tp = transition_params(fp)
    assert tp.q3 == 1.0 and tp.p2 == pytest.approx(0.5)
    cells = np.array([[[-1], [-1], [1], [-1]]], dtype=np.int8)
    a = AgreementBlock(cells, [0])
    rng = chain_rng(0)
    seen = False
    for _ in range(200):
        nxt = kernel_step(a, [tp], rng)
        if nxt.cells[0, 0, 0] == -1:
            assert (nxt.cells[0, 1:, 0] == 1).all()
            seen = True
            break
    assert seen


def test_thinning_and_burn_in():
    a = _block(5)
    s1 = run_chain(a, PARAMS, ChainConfig(20, thin=1, seed=1))
    assert s1.samples == 20 and len(s1) == 20
    s2 = run_chain(a, PARAMS, ChainConfig(20, thin=5, burn_in=1, seed=1))
    assert s2.samples == 4 and len(s2) == 3
    assert np.array_equal(s2.frames[1:], s1.frames[5::5])
    assert np.array_equal(s2.usable(), s1.frames[10::5])
    streamed = list(iter_chain(a, PARAMS, ChainConfig(20, thin=5, burn_in=1, seed=1)))
    assert np.array_equal(np.stack(streamed), s2.usable())


def test_thousand_samples():
    a = _block(6, nx=3, ny=5, nl=2)
    s = run_chain(a, PARAMS[:2], ChainConfig(1_000_000, thin=1000, seed=2))
    assert s.samples == 1000


@pytest.mark.parametrize("kw", [dict(total_steps=10, thin=3), dict(total_steps=10, thin=0),
                                dict(total_steps=10, thin=5, burn_in=2)])
def test_chain_config_rejects(kw):
    with pytest.raises(ValueError):
        ChainConfig(**kw)


def test_determinism_and_block_seeds():
    a = _block(7)
    cfg = ChainConfig(500, thin=10, seed=42)
    assert run_chain(a, PARAMS, cfg) == run_chain(a, PARAMS, cfg)
    assert run_chain(a, PARAMS, cfg) != run_chain(a, PARAMS, ChainConfig(500, thin=10, seed=43))
    assert block_seed(1, ("10001",)) == block_seed(1, "10001")
    assert block_seed(1, ("10001",)) != block_seed(1, ("10002",))
    assert chain_rng(1, "a").random() == chain_rng(1, ("a",)).random()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_missing_set_static(seed):
    a = _block(seed % 50, nx=4, ny=6, nl=4)
    s = run_chain(a, PARAMS, ChainConfig(300, thin=3, seed=seed))
    miss = a.cells == 0
    for f in s.frames:
        assert np.array_equal(f == 0, miss)
    assert len(set(chain_diagnostics(s.frames, a)["missing"].tolist())) == 1


def test_distance_and_counts():
    cells = np.ones((59, 400, 6), dtype=np.int8)
    other = cells.copy()
    other[3, 7, 2] = -1
    assert distance(cells, cells) == 0
    assert distance(other, cells) == pytest.approx(1 / 141_600)
    assert ternary_counts(np.ones((2, 5, 1), dtype=np.int8)) == (10, 0, 0)
    assert sum(ternary_counts(other)) == 141_600
    with pytest.raises(ValueError):
        distance(cells[:1], cells)


def test_agree_frequencies_match_estimates(small_block):
    params = estimate_params(small_block, validate=False)
    m, u = agree_frequencies(small_block.cells, small_block.truth_map)
    assert m == pytest.approx([p.m for p in params])
    assert u == pytest.approx([p.u for p in params])


def test_batch_means_se():
    rng = np.random.default_rng(0)
    x = rng.normal(size=10_000)
    assert batch_means_se(x) == pytest.approx(0.01, rel=0.3)
    assert np.isnan(batch_means_se([1.0, 2.0]))


def test_sample_stream_equality():
    f = np.zeros((3, 1, 1, 1), dtype=np.int8)
    assert SampleStream(f, 1, 0, 0) == SampleStream(f.copy(), 1, 0, 0)
    assert SampleStream(f, 1, 0, 0) != SampleStream(f, 2, 0, 0)


def test_transition_params_accepted_directly():
    a = _block(8, nl=1)
    tp = TransitionParams(0.5, 1.0, 0.2, 0.2)
    assert kernel_step(a, [tp], chain_rng(0)).cells.shape == a.cells.shape
