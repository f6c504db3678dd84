from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from coopbranch.dynamics import (adjacent_pair_start, apply_branch, apply_jump, replay,
                                 replay_many, replicate_counts, simulate_direct, survival_run)
from coopbranch.graphical import augment, generate
from coopbranch.lattice import (Boundary, WindowTouchError, full_configuration,
                                new_configuration, particle_count)
from coopbranch.walks import tau2_survival_exact


def reference_step(occ, h, d):
    """Plain-Python arrow rule on a periodic ring, written from the rate description."""
    L = len(occ)
    occ = list(occ)
    if h % 2:
        i = h // 2
        src, dst = (i, (i + 1) % L) if d > 0 else ((i + 1) % L, i)
        if occ[src]:
            occ[src] = 0
            occ[dst] = 1
    else:
        m = h // 2
        if d > 0:
            a, b, tgt = (m - 1) % L, m, (m + 1) % L
        else:
            a, b, tgt = m, (m + 1) % L, (m - 1) % L
        if occ[a] and occ[b]:
            occ[tgt] = 1
    return occ


def test_jump_examples():
    c = new_configuration(10, [0, 1])
    assert apply_jump(c, 1, +1).sites().tolist() == [1]
    assert apply_jump(new_configuration(10, [0]), 1, +1).sites().tolist() == [1]
    empty = new_configuration(10, [])
    assert apply_jump(empty, 7, -1) == empty
    assert apply_jump(new_configuration(10, [1]), 1, -1).sites().tolist() == [0]


def test_branch_examples():
    assert apply_branch(new_configuration(10, [0, 1]), 2, +1).sites().tolist() == [0, 1, 2]
    assert apply_branch(new_configuration(10, [0, 1, 2]), 2, +1).sites().tolist() == [0, 1, 2]
    assert apply_branch(new_configuration(10, [0]), 2, +1).sites().tolist() == [0]
    assert apply_branch(new_configuration(10, [1, 2]), 2, -1).sites().tolist() == [0, 1, 2]


def test_location_parity_checked():
    c = new_configuration(10, [0, 1])
    with pytest.raises(ValueError):
        apply_jump(c, 2, 1)
    with pytest.raises(ValueError):
        apply_branch(c, 3, 1)
    with pytest.raises(ValueError):
        apply_jump(c, 21, 1)


def test_window_seam_arrows_are_inert():
    c = new_configuration(10, [9, 0], Boundary.WINDOW)
    assert apply_jump(c, 19, 1) == c
    assert apply_branch(c, 0, 1) == c


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 16), st.floats(0.0, 4.0), st.integers(0, 2 ** 31 - 1), st.data())
def test_replay_matches_reference_and_count_changes(L, lam, seed, data):
    bits = data.draw(st.lists(st.integers(0, 1), min_size=L, max_size=L))
    rep = generate(L, lam, 3.0, seed)
    occ = list(bits)
    cfg = new_configuration(L, [i for i, b in enumerate(bits) if b])
    for t, h, d in zip(rep.times, rep.locs, rep.dirs):
        nxt = reference_step(occ, int(h), int(d))
        delta = sum(nxt) - sum(occ)
        assert delta in (-1, 0, 1)
        if h % 2:
            assert delta in (-1, 0)
        else:
            assert delta in (0, 1)
        occ = nxt
    assert replay(cfg, rep, 0.0, rep.T).occ.tolist() == occ


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_replay_semigroup(seed, a, b):
    t1, t2 = sorted((a, b))
    rep = generate(30, 2.0, 10.0, seed)
    c = new_configuration(30, range(0, 30, 3))
    assert replay(replay(c, rep, 0, t1), rep, t1, t2) == replay(c, rep, 0, t2)


def test_event_free_interval_is_identity():
    rep = generate(20, 1.0, 5.0, seed=1)
    c = new_configuration(20, [1, 2, 5])
    t = float(rep.times[3])
    assert replay(c, rep, t, t) == c


@pytest.mark.parametrize("seed", range(5))
def test_single_particle_stays_single(seed):
    rep = generate(40, 5.0, 50.0, seed)
    states = replay_many(new_configuration(40, [7]).occ, rep, np.linspace(0, 50, 101))
    assert np.all(states.sum(axis=-1) == 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0.0, 2.0), st.floats(0.0, 3.0))
def test_monotone_coupling(seed, lam, extra):
    L = 40
    rng = np.random.default_rng(seed)
    small = (rng.random(L) < 0.4).astype(np.uint8)
    big = small | (rng.random(L) < 0.3).astype(np.uint8)
    rep = generate(L, lam, 10.0, seed)
    rep2 = augment(rep, lam + extra)
    times = np.linspace(0, 10, 21)
    x = replay_many(small, rep, times)[:, 0]
    y = replay_many(big, rep2, times)[:, 0]
    assert not np.any(x > y)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0.0, 4.0))
def test_subadditivity(seed, lam):
    L = 40
    rng = np.random.default_rng(seed)
    a = (rng.random(L) < 0.3).astype(np.uint8)
    b = (rng.random(L) < 0.3).astype(np.uint8)
    rep = generate(L, lam, 10.0, seed)
    s = replay_many(np.stack([a, b, a | b]), rep, np.linspace(0, 10, 21))
    assert not np.any((s[:, 0] | s[:, 1]) > s[:, 2])


def test_direct_and_replay_agree_in_distribution():
    L, lam, t, R = 100, 2.0, 5.0, 300
    c = full_configuration(L)
    direct = np.array([particle_count(simulate_direct(c, lam, t, seed=s).configuration(-1))
                       for s in range(R)]) / L
    rep_based = np.array([replay(c, generate(L, lam, t, 10_000 + s), 0, t).occ.mean()
                          for s in range(R)])
    assert stats.ttest_ind(direct, rep_based, equal_var=False).pvalue > 0.001
    assert stats.ks_2samp(direct, rep_based).pvalue > 0.001


def test_zero_rate_density_matches_meeting_law():
    L, R = 400, 200
    times = np.array([1.0, 4.0, 16.0])
    counts, _, _ = replicate_counts(full_configuration(L), 0.0, times, R, seed=3)
    p = counts[:, :, 0] / L
    est, se = p.mean(axis=0), p.std(axis=0, ddof=1) / np.sqrt(R)
    assert np.all(np.abs(est - tau2_survival_exact(times)) < 3 * se)


def _walker_positions(lam, t, R, seed):
    L = 200
    out = np.empty(R)
    for r in range(R):
        tr = simulate_direct(new_configuration(L, [100]), lam, t, seed=seed + r)
        out[r] = tr.configuration(-1).sites()[0] - 100
    return out


def test_single_walker_law():
    t, R = 10.0, 3000
    x = _walker_positions(3.0, t, R, seed=5)
    # independent oracle: rate-1 nearest-neighbour walk, steps drawn directly
    rng = np.random.default_rng(99)
    n = rng.poisson(t, R)
    y = 2 * rng.binomial(n, 0.5) - n
    assert abs(x.var(ddof=1) - t) < 4 * t * np.sqrt(2 / R)
    assert stats.ks_2samp(x, y).pvalue > 0.001


def test_supercritical_density_positive():
    tr = simulate_direct(full_configuration(500), 10.0, [0.0, 200.0], seed=7, snapshots=False)
    assert tr.counts[-1, 0] / 500 > 0.5


def test_direct_counts_consistent_with_snapshots():
    tr = simulate_direct(full_configuration(60), 2.5, np.linspace(0, 20, 11), seed=2)
    for k in range(11):
        occ = tr.snapshots[k].astype(bool)
        assert tr.counts[k, 0] == occ.sum()
        assert tr.counts[k, 1] == np.sum(occ & np.roll(occ, -1))
        assert tr.counts[k, 2] == np.sum(occ & np.roll(occ, -1) & np.roll(occ, -2))


def test_simulate_direct_deterministic_and_validates():
    c = full_configuration(50)
    a = simulate_direct(c, 2.0, [1.0, 2.0], seed=4)
    b = simulate_direct(c, 2.0, [1.0, 2.0], seed=4)
    assert np.array_equal(a.snapshots, b.snapshots)
    with pytest.raises(ValueError):
        simulate_direct(c, -1.0, 1.0, seed=0)
    with pytest.raises(ValueError):
        simulate_direct(c, 1.0, [2.0, 1.0], seed=0)


def test_survival_at_zero_rate_follows_meeting_law():
    R, T = 4000, 10.0
    alive = np.array([survival_run(0.0, T, 1000, s).survived for s in range(R)])
    p = tau2_survival_exact(T)
    assert abs(alive.mean() - p) < 3 * np.sqrt(p * (1 - p) / R)


def test_survival_absorbing_and_supercritical():
    out = survival_run(0.0, 1e4, 1000, seed=1)
    assert not out.survived and out.extinction_time > 0
    alive = [survival_run(5.0, 1e4, 100, s).survived for s in range(8)]
    assert any(alive)


def test_window_touch_raises():
    c = adjacent_pair_start(6, Boundary.WINDOW)
    with pytest.raises(WindowTouchError):
        for s in range(50):
            simulate_direct(c, 5.0, 50.0, seed=s)


def test_subcritical_mass_is_supermartingale():
    times = np.array([0.0, 5.0, 20.0, 80.0])
    counts, _, _ = replicate_counts(new_configuration(200, range(95, 105)), 1.0, times, 2000, seed=8)
    m = counts[:, :, 0].mean(axis=0)
    se = counts[:, :, 0].std(axis=0, ddof=1) / np.sqrt(2000)
    assert np.all(np.diff(m) <= 2 * np.hypot(se[1:], se[:-1]))
