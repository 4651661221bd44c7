import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mecat.errors import ProbabilityError, RateBoundError
from mecat.stochastic import (
    EmpiricalMarginal,
    binomial_pmf,
    empirical_from_trajectories,
    empirical_marginal,
    rre_theta,
    ssa_path,
    tv_distance,
    write_histogram_csv,
    write_trajectory_csv,
)


# ---------------------------------------------------------------------------
# single paths


@given(st.integers(0, 2 ** 63 - 1), st.integers(1, 12))
@settings(max_examples=30, deadline=None)
def test_path_structure_invariants(seed, n):
    traj = ssa_path(math.sin, n, n // 2, 3.0, seed)
    assert traj.times[0] == 0.0
    assert traj.states[0] == n // 2
    assert len(traj.times) == len(traj.states)
    assert np.all(np.diff(traj.times) > 0)
    assert traj.times[-1] <= traj.t_end
    assert traj.states.min() >= 0 and traj.states.max() <= n
    if len(traj.states) > 1:
        steps = np.abs(np.diff(traj.states))
        assert np.all(steps == 1)


def test_path_is_right_continuous_and_queryable():
    traj = ssa_path(0.0, 6, 3, 5.0, seed=11)
    assert traj.state_at(0.0) == 3
    assert traj.state_at(traj.t_end) == traj.states[-1]
    assert len(traj.jump_times) == len(traj.times) - 1
    if len(traj.times) > 1:
        t1 = float(traj.times[1])
        assert traj.state_at(t1) == traj.states[1]  # value after the jump
    with pytest.raises(ValueError):
        traj.state_at(-0.5)
    with pytest.raises(ValueError):
        traj.state_at(traj.t_end + 1.0)


def test_path_input_validation():
    with pytest.raises(ValueError):
        ssa_path(0.0, 4, 5, 1.0, seed=1)
    with pytest.raises(ValueError):
        ssa_path(0.0, 4, 2, -1.0, seed=1)
    with pytest.raises(ValueError):
        ssa_path(0.0, 4, 2, 1.0, seed=-3)


def test_drive_at_full_strength_absorbs_at_zero():
    # f = 1 switches the growth channel off entirely
    traj = ssa_path(1.0, 1, 1, 12.0, seed=5)
    assert traj.states[-1] == 0
    # once at zero nothing fires again
    assert traj.states.min() == 0


def test_drive_at_negative_strength_saturates():
    traj = ssa_path(-1.0, 3, 0, 12.0, seed=7)
    assert traj.states[-1] == 3
    assert np.all(np.diff(traj.states) == 1)


def test_unbounded_drive_is_rejected_with_the_offending_time():
    with pytest.raises(RateBoundError) as err:
        ssa_path(2.0, 4, 2, 1.0, seed=3)
    assert "exceeds 1" in str(err.value)


def test_same_arguments_give_identical_paths():
    a = ssa_path(math.sin, 8, 4, 2.0, seed=42, path_index=9)
    b = ssa_path(math.sin, 8, 4, 2.0, seed=42, path_index=9)
    assert np.array_equal(a.times, b.times)
    assert np.array_equal(a.states, b.states)
    c = ssa_path(math.sin, 8, 4, 2.0, seed=42, path_index=10)
    assert not (len(c.times) == len(a.times) and np.array_equal(c.times, a.times))


# ---------------------------------------------------------------------------
# marginals


def test_zero_horizon_keeps_the_initial_state():
    marg = empirical_marginal(0.0, 5, 2, 0.0, n_paths=50, seed=1)
    want = np.zeros(6)
    want[2] = 50
    assert np.array_equal(marg.counts, want)


def test_single_path_marginal_is_one_hot():
    marg = empirical_marginal(0.3, 4, 4, 1.0, n_paths=1, seed=9)
    assert marg.counts.sum() == 1
    assert marg.n_paths == 1


def test_marginal_counts_are_reproducible_across_thread_splits():
    kw = dict(f=math.sin, n=6, i0=6, t=1.0, n_paths=600, seed=123)
    serial = empirical_marginal(**kw, threads=1)
    pooled = empirical_marginal(**kw, threads=3)
    assert np.array_equal(serial.counts, pooled.counts)
    assert serial.counts.sum() == 600


def test_marginal_matches_trajectory_route():
    n_paths, t = 40, 1.5
    direct = empirical_marginal(0.2, 5, 5, t, n_paths=n_paths, seed=77, threads=1)
    paths = [ssa_path(0.2, 5, 5, t, seed=77, path_index=k) for k in range(n_paths)]
    rebuilt = empirical_from_trajectories(paths, t)
    assert np.array_equal(direct.counts, rebuilt.counts)


def test_two_state_chain_equilibrates_to_a_fair_coin():
    marg = empirical_marginal(0.0, 1, 1, 6.0, n_paths=20_000, seed=2024)
    freq = marg.frequencies
    assert abs(freq[0] - 0.5) < 0.02
    assert abs(freq[1] - 0.5) < 0.02


def test_constant_drive_marginal_is_binomial():
    n, t, c = 10, 0.7, 0.3
    marg = empirical_marginal(c, n, n, t, n_paths=30_000, seed=7, threads=1)
    theta = rre_theta(c, 1.0, t)
    assert tv_distance(marg.frequencies, binomial_pmf(n, theta)) < 0.02
    assert abs(marg.mean_occupancy() - theta) < 0.005


# ---------------------------------------------------------------------------
# mean-fraction equation


def test_mean_fraction_without_drive_relaxes_to_half():
    for t in (0.25, 1.0, 3.0):
        want = (1.0 + math.exp(-2.0 * t)) / 2.0
        assert rre_theta(0.0, 1.0, t) == pytest.approx(want, abs=1e-12)


def test_mean_fraction_full_drive_is_pure_decay():
    for t in (0.5, 2.0):
        assert rre_theta(1.0, 1.0, t) == pytest.approx(math.exp(-2.0 * t), abs=1e-12)


def test_mean_fraction_half_is_stationary_without_drive():
    for t in (0.1, 1.0, 7.0):
        assert rre_theta(0.0, 0.5, t) == pytest.approx(0.5, abs=1e-12)


def test_mean_fraction_oscillating_drive_oracle_values():
    # frozen from a 50-digit integrating-factor evaluation
    assert rre_theta(math.sin, 1.0, 0.5) == pytest.approx(
        0.59411012928782604, abs=1e-12)
    assert rre_theta(math.sin, 1.0, 1.0) == pytest.approx(
        0.31207265222145315, abs=1e-12)


def test_mean_fraction_validates_inputs():
    with pytest.raises(ProbabilityError):
        rre_theta(0.0, 1.5, 1.0)
    with pytest.raises(ValueError):
        rre_theta(0.0, 0.5, -1.0)
    assert rre_theta(math.sin, 0.25, 0.0) == 0.25


# ---------------------------------------------------------------------------
# reference distributions and distances


def test_binomial_pmf_edges_and_sum():
    assert np.array_equal(binomial_pmf(3, 0.0), np.eye(4)[0])
    assert np.array_equal(binomial_pmf(3, 1.0), np.eye(4)[3])
    mid = binomial_pmf(2, 0.5)
    assert np.allclose(mid, [0.25, 0.5, 0.25])
    assert math.fsum(binomial_pmf(25, 0.37)) == pytest.approx(1.0, abs=1e-13)
    with pytest.raises(ProbabilityError):
        binomial_pmf(3, 1.2)


def test_tv_distance_basic_properties():
    p = np.array([1.0, 0.0, 0.0])
    q = np.array([0.0, 0.5, 0.5])
    assert tv_distance(p, p) == 0.0
    assert tv_distance(p, q) == 1.0
    assert tv_distance(q, p) == tv_distance(p, q)
    with pytest.raises(ValueError):
        tv_distance(p, np.array([0.5, 0.5]))


# ---------------------------------------------------------------------------
# file exports


def test_trajectory_csv_round_trip(tmp_path):
    traj = ssa_path(0.4, 5, 5, 1.0, seed=31)
    out = tmp_path / "traj.csv"
    write_trajectory_csv(out, traj)
    rows = out.read_text().strip().splitlines()
    assert rows[0] == "time,state"
    times, states = [], []
    for row in rows[1:]:
        t_str, s_str = row.split(",")
        times.append(float(t_str))
        states.append(int(s_str))
    assert np.array_equal(np.array(times), traj.times)
    assert np.array_equal(np.array(states), traj.states)


def test_histogram_csv_round_trip(tmp_path):
    marg = empirical_marginal(0.0, 4, 2, 0.5, n_paths=100, seed=3)
    out = tmp_path / "hist.csv"
    write_histogram_csv(out, marg)
    rows = out.read_text().strip().splitlines()
    assert rows[0] == "state,count,frequency"
    assert len(rows) == marg.n + 2
    total = 0
    for row in rows[1:]:
        s, cnt, freq = row.split(",")
        total += int(cnt)
        assert float(freq) == pytest.approx(int(cnt) / 100)
    assert total == 100
