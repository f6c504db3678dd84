from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopbranch.comparisons import (block_event_mc, block_event_probability,
                                    contact_inclusion_violations, couple_contact_dd,
                                    op_monotone_violations, op_survival, simulate_contact_dd,
                                    simulate_op, voter_density_batch, voter_interface_run)
from coopbranch.dynamics import replicate_counts
from coopbranch.graphical import generate
from coopbranch.lattice import full_configuration
from coopbranch.walks import tau2_survival_exact


# --- contact process with double deaths -------------------------------------------------


def test_contact_dd_without_infection_dies():
    snaps = simulate_contact_dd(np.ones(50, np.uint8), 0.0, [0.0, 20.0], seed=1)
    assert snaps[0].sum() == 50 and snaps[-1].sum() == 0


def test_contact_dd_supercritical_density():
    snaps = simulate_contact_dd(np.ones(500, np.uint8), 10.0, [50.0, 100.0], seed=2)
    assert snaps[-1].mean() > 0.2


def _hits(start, target, lam, t, R, L, seed):
    occ = np.zeros(L, np.uint8)
    occ[list(start)] = 1
    out = np.empty(R, bool)
    for r in range(R):
        s = simulate_contact_dd(occ, lam, [t], seed=seed + r)[-1]
        out[r] = s[list(target)].any()
    return out


def test_contact_dd_self_duality():
    L, lam, t, R = 30, 6.0, 1.5, 6000
    A, B = [10], [12, 13, 14]
    x = _hits(A, B, lam, t, R, L, seed=0)
    y = _hits(B, A, lam, t, R, L, seed=10 ** 6)
    se = np.sqrt(x.var() / R + y.var() / R)
    assert abs(x.mean() - y.mean()) < 3.3 * se


def test_contact_dd_rejects_negative_rate():
    with pytest.raises(ValueError):
        simulate_contact_dd(np.ones(5, np.uint8), -1.0, [1.0], seed=0)


def test_coupled_streams_intensities():
    rep = generate(400, 2.0, 25.0, seed=3)
    s = couple_contact_dd(rep)
    right, left, deaths = s.intensities()
    n = 400 * 25.0
    for got, want in ((right, 1.0), (left, 1.0), (deaths, 1.0)):
        assert abs(got - want) < 4 * np.sqrt(want / n)


def test_empty_zeta_stays_empty():
    rep = generate(50, 2.0, 10.0, seed=4)
    assert contact_inclusion_violations(rep, np.ones(50, np.uint8), np.zeros(50, np.uint8)) == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0.0, 5.0), st.floats(0.2, 1.0))
def test_contact_inclusion_pathwise(seed, lam, density):
    L = 60
    eta = (np.random.default_rng(seed).random(L) < density).astype(np.uint8)
    rep = generate(L, lam, 10.0, seed)
    assert contact_inclusion_violations(rep, eta) == 0


def test_zeta_must_start_inside_pairs():
    rep = generate(20, 1.0, 1.0, seed=0)
    eta = np.zeros(20, np.uint8)
    zeta = np.zeros(20, np.uint8)
    zeta[3] = 1
    with pytest.raises(ValueError):
        contact_inclusion_violations(rep, eta, zeta)


# --- oriented percolation -------------------------------------------------------------------


def test_op_full_light_cone():
    levels = simulate_op([0], 1.0, 6, seed=1)
    for n, w in enumerate(levels):
        assert w.tolist() == list(range(-n, n + 1, 2))


def test_op_closed_edges():
    levels = simulate_op([0], 0.0, 3, seed=1)
    assert levels[1].size == 0 and levels[3].size == 0


def test_op_high_p_survives():
    alive = op_survival([0], 0.95, 500, seeds=range(40))
    assert alive.mean() > 0


def test_op_parity_and_range_checks():
    with pytest.raises(ValueError):
        simulate_op([1], 0.5, 3, seed=0)
    with pytest.raises(ValueError):
        simulate_op([0], 1.5, 3, seed=0)
    with pytest.raises(ValueError):
        op_monotone_violations([0], 0.8, 0.6, 3, seed=0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_op_monotone_in_p(seed, p, q):
    lo, hi = sorted((p, q))
    assert op_monotone_violations(range(-20, 21, 2), lo, hi, 60, seed) == 0


def test_op_levels_respect_parity_and_edges():
    levels = simulate_op(range(-10, 11, 2), 0.6, 30, seed=5)
    for n, (w, nxt) in enumerate(zip(levels, levels[1:])):
        assert np.all((w + n) % 2 == 0)
        # every point of the next level has a parent in this level
        assert np.all(np.isin(nxt - 1, w) | np.isin(nxt + 1, w))


# --- block events ----------------------------------------------------------------------------


@pytest.mark.parametrize("lam,T", [(10.0, 1.0), (20.0, 2.0), (40.0, 4.0)])
def test_block_event_frequency(lam, T):
    r = block_event_mc(lam, T, n_sites=400, n_levels=400, seed=3)
    assert abs(r.estimate - r.exact) < 3.5 * r.stderr
    assert r.metadata["time_rescale"] == lam


def test_block_event_probability_shape():
    assert block_event_probability(1e9, 50.0) == pytest.approx(1.0, abs=1e-6)
    assert block_event_probability(1.0, 10.0) < 1e-10
    with pytest.raises(ValueError):
        block_event_probability(0.0, 1.0)


# --- voter interfaces -------------------------------------------------------------------------


def test_voter_starts_with_all_interfaces():
    v = voter_interface_run(50, 2.0, [0.0, 1.0], seed=1)
    assert v.interfaces[0].sum() == 50


def test_voter_zero_rate_matches_coalescing_density():
    times = np.array([1.0, 5.0, 20.0])
    d, low = voter_density_batch(300, 0.0, times, 150, seed=2)
    assert low == 0
    est, se = d.mean(axis=0), d.std(axis=0, ddof=1) / np.sqrt(150)
    assert np.all(np.abs(est - tau2_survival_exact(times)) < 3 * se)


def test_voter_matches_direct_simulation():
    lam, L, R = 7 / 3, 300, 80
    times = np.array([1.0, 5.0, 15.0])
    d, low = voter_density_batch(L, lam, times, R, seed=3)
    counts, _, _ = replicate_counts(full_configuration(L), lam, times, R, seed=4)
    p = counts[:, :, 0] / L
    se = np.sqrt(d.var(axis=0, ddof=1) / R + p.var(axis=0, ddof=1) / R)
    assert low == 0
    assert np.all(np.abs(d.mean(axis=0) - p.mean(axis=0)) < 3 * se)
