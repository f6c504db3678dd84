from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from coopbranch.graphical import (Direction, GraphicalRep, Kind, augment, dual_moves, dual_view,
                                  dump_events, event_slice, events_in, generate, kind_of,
                                  load_events)

ALPHA = 0.001


def _stream_counts(rep, parity):
    counts = []
    for h in range(parity, 2 * rep.L, 2):
        for d in (-1, 1):
            counts.append(rep.stream(h, d).size)
    return np.array(counts)


def _dispersion_pvalue(counts, mean):
    # Poisson index of dispersion against the declared intensity
    chi2 = np.sum((counts - mean) ** 2) / mean
    return stats.chi2.sf(chi2, counts.size - 1), stats.poisson.cdf(counts.sum(), mean * counts.size)


def test_zero_rate_has_no_branching():
    rep = generate(100, 0.0, 10.0, seed=1)
    assert not np.any(rep.locs % 2 == 0)
    n = len(rep)
    assert 0.001 < stats.poisson.cdf(n, 1000) < 0.999


@pytest.mark.parametrize("seed", [11, 12, 13])
def test_stream_counts_are_poisson(seed):
    rep = generate(100, 2.0, 10.0, seed)
    branch = _stream_counts(rep, 0)
    jump = _stream_counts(rep, 1)
    assert abs(branch.sum() - 2000) < 5 * np.sqrt(2000)
    for counts, mean in ((branch, 10.0), (jump, 5.0)):
        p_disp, cdf_total = _dispersion_pvalue(counts, mean)
        assert p_disp > ALPHA
        assert ALPHA / 2 < cdf_total < 1 - ALPHA / 2


def test_same_seed_identical_events():
    a = generate(50, 1.5, 5.0, seed=3)
    b = generate(50, 1.5, 5.0, seed=3)
    assert a.same_events(b)
    assert not a.same_events(generate(50, 1.5, 5.0, seed=4))


def test_times_sorted_and_tie_free():
    rep = generate(80, 3.0, 20.0, seed=9)
    assert np.all(np.diff(rep.times) > 0)
    assert rep.times[0] > 0 and rep.times[-1] <= rep.T


def test_generate_rejects_bad_parameters():
    for args in ((10, -1.0, 1.0), (10, 1.0, 0.0), (2, 1.0, 1.0)):
        with pytest.raises(ValueError):
            generate(*args, seed=0)


def test_kind_from_location_parity():
    assert kind_of(3) is Kind.JUMP and kind_of(4) is Kind.BRANCH
    rep = generate(20, 1.0, 2.0, seed=2)
    ev = list(rep.events())
    assert len(ev) == len(rep)
    assert all(e.kind is kind_of(e.location) for e in ev)
    assert {e.direction for e in ev} <= {Direction.LEFT, Direction.RIGHT}


def test_augment_same_rate_is_identity():
    rep = generate(40, 1.0, 10.0, seed=5)
    assert augment(rep, 1.0) is rep


def test_augment_superset_and_jumps_untouched():
    rep = generate(40, 1.0, 10.0, seed=5)
    big = augment(rep, 2.0)
    old = set(zip(rep.times.tolist(), rep.locs.tolist(), rep.dirs.tolist()))
    new = set(zip(big.times.tolist(), big.locs.tolist(), big.dirs.tolist()))
    assert old <= new
    added = new - old
    assert all(h % 2 == 0 for _, h, _ in added)
    jm, jm2 = rep.jump_mask(), big.jump_mask()
    assert np.array_equal(rep.times[jm], big.times[jm2])
    assert np.array_equal(rep.locs[jm], big.locs[jm2])
    assert np.array_equal(rep.dirs[jm], big.dirs[jm2])
    assert big.lam == 2.0 and big.depth == 1
    with pytest.raises(ValueError):
        augment(rep, 0.5)


def test_augment_added_intensity():
    rep = generate(200, 1.0, 10.0, seed=8)
    big = augment(rep, 3.0)
    added = np.count_nonzero(~big.jump_mask()) - np.count_nonzero(~rep.jump_mask())
    mean = 200 * 2 * 1.0 * 10.0
    assert ALPHA / 2 < stats.poisson.cdf(added, mean) < 1 - ALPHA / 2


def test_single_arrow_dual_relabeling():
    rep = GraphicalRep(10, 0.0, 1.0, 0, np.array([0.5]), np.array([5], np.int32),
                       np.array([1], np.int8))
    d = dual_view(rep)
    assert d.dual and d.times[0] == 0.5
    assert d.locs[0] == 4 and d.dirs[0] == -1
    tail, disp = dual_moves(d)
    assert tail[0] == 5 and disp[0] == -2
    left = GraphicalRep(10, 0.0, 1.0, 0, np.array([0.5]), np.array([5], np.int32),
                        np.array([-1], np.int8))
    dl = dual_view(left)
    assert dl.locs[0] == 6 and dl.dirs[0] == 1


def test_dual_view_is_an_involution():
    rep = generate(30, 2.0, 5.0, seed=21)
    back = dual_view(dual_view(rep))
    assert back.same_events(rep) and not back.dual


def test_dual_view_at_zero_rate_has_only_jumps():
    d = dual_view(generate(30, 0.0, 5.0, seed=22))
    assert np.all(d.dual_jump)


def test_dual_jump_intensity():
    rep = generate(200, 1.0, 10.0, seed=23)
    d = dual_view(rep)
    tail, _ = dual_moves(d)
    per = np.bincount(tail[d.dual_jump] // 2, minlength=200)
    # every bond receives arrows from two rate-1/2 streams
    p_disp, cdf_total = _dispersion_pvalue(per, 10.0)
    assert p_disp > ALPHA and ALPHA / 2 < cdf_total < 1 - ALPHA / 2


def test_events_in_ranges():
    rep = generate(30, 1.0, 5.0, seed=4)
    assert events_in(rep, 0, rep.T) == (0, len(rep))
    t = float(rep.times[10])
    lo, hi = events_in(rep, t, t)
    assert lo == hi
    ts, _, _ = event_slice(rep, 1.0, 2.0)
    assert np.all((ts > 1.0) & (ts <= 2.0)) and np.all(np.diff(ts) > 0)
    with pytest.raises(ValueError):
        events_in(rep, 2.0, 1.0)
    with pytest.raises(ValueError):
        events_in(rep, 0.0, rep.T + 1)


def test_dump_load_round_trip(tmp_path):
    rep = augment(generate(25, 1.0, 4.0, seed=31), 1.5)
    path = tmp_path / "ev.bin"
    dump_events(rep, path)
    back = load_events(path)
    assert back.same_events(rep)
    assert (back.L, back.lam, back.T, back.seed, back.depth) == (rep.L, rep.lam, rep.T, rep.seed, 1)
    data = path.read_bytes()
    assert data[:4] == b"CBGR"
    assert len(data) == 46 + 13 * len(rep)
    (tmp_path / "bad.bin").write_bytes(data[:-1])
    with pytest.raises(ValueError):
        load_events(tmp_path / "bad.bin")
