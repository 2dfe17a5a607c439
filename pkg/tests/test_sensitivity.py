import csv
import io

import mpmath
import pytest

from rapidmem.sensitivity import (SWEEP_HEADER, binary_entropy, bound_monte_carlo,
                                  bound_thresholds, conflict_bound, sensitivity_sweep,
                                  sweep_csv)


def bound_mp(K, delta, t):
    mpmath.mp.dps = 50
    d = mpmath.mpf(delta)
    h2 = -d * mpmath.log(d, 2) - (1 - d) * mpmath.log(1 - d, 2)
    return mpmath.binomial(t, 2) * mpmath.power(2, -2 * (1 - h2) * K)


def test_bound_example_matches_high_precision():
    b = conflict_bound(10, 0.3, 2)
    assert binary_entropy(0.3) == pytest.approx(0.8813, abs=5e-5)
    assert b == pytest.approx(0.193, abs=5e-4)
    assert b == pytest.approx(float(bound_mp(10, 0.3, 2)), rel=1e-12)


@pytest.mark.parametrize("K,delta,t", [(10, 0.1, 2), (20, 0.25, 3), (40, 0.4, 5), (7, 0.01, 10)])
def test_bound_matches_high_precision_grid(K, delta, t):
    assert conflict_bound(K, delta, t) == pytest.approx(float(bound_mp(K, delta, t)), rel=1e-12)


def test_bound_small_delta_limit():
    assert conflict_bound(10, 1e-12, 4) == pytest.approx(6 * 2.0 ** -20, rel=1e-9)


@pytest.mark.parametrize("delta", [0.0, 0.5, -0.1, 0.7])
def test_bound_rejects_delta_out_of_range(delta):
    with pytest.raises(ValueError):
        conflict_bound(10, delta, 2)


def test_bound_rejects_small_t():
    with pytest.raises(ValueError):
        conflict_bound(10, 0.2, 1)


def test_bound_thresholds():
    assert bound_thresholds(10, 0.3) == (7, 3)
    assert bound_thresholds(40, 0.1) == (36, 4)
    with pytest.raises(ValueError):
        bound_thresholds(10, 0.25)


def test_monte_carlo_agrees_with_exact_two_subject_probability():
    # K=10, delta=0.4 is H=6, L=4, whose exact conflict probability is 1553/4199
    p, se = bound_monte_carlo(10, 0.4, 2, 50_000, seed=3)
    assert abs(p - 1553 / 4199) < 4 * se


def test_monte_carlo_under_bound():
    p, se = bound_monte_carlo(10, 0.3, 2, 20_000, seed=1)
    assert p <= conflict_bound(10, 0.3, 2) + 3 * se


def test_single_failure_never_conflicts():
    (row,) = sensitivity_sweep(200, 10, [10], [1], [1], reps=3)
    assert row.conflicts == 0 and row.no_proposal == 0 and row.processes == 3 * 199


def test_many_failures_high_gap_is_near_zero():
    (row,) = sensitivity_sweep(1000, 10, [9], [3], [16], reps=2)
    assert row.pct < 0.5


def test_sweep_skips_invalid_pairs_and_is_deterministic():
    a = sensitivity_sweep(100, 10, [6, 7], [1, 7], [2], reps=2, seed=4)
    assert [(r.H, r.L) for r in a] == [(6, 1), (7, 1), (7, 7)]
    assert a == sensitivity_sweep(100, 10, [6, 7], [1, 7], [2], reps=2, seed=4)
    with pytest.raises(ValueError):
        sensitivity_sweep(10, 10, [6], [1], [10], reps=1)


def test_sweep_csv_layout():
    rows = sensitivity_sweep(50, 10, [8], [2], [2, 4], reps=1)
    parsed = list(csv.reader(io.StringIO(sweep_csv(rows))))
    assert tuple(parsed[0]) == SWEEP_HEADER
    assert len(parsed) == 3 and all(len(r) == len(SWEEP_HEADER) for r in parsed)
