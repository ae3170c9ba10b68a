from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diagbsde.paths import (ResourceBudgetError, TimeGrid, antithetic, dump, load, simulate,
                            single_path, with_antithetic)


def test_grid():
    g = TimeGrid(2.0, 8)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 2.0
    assert np.all(np.diff(g.nodes) > 0)
    assert g.index_of(0.75) == 3
    with pytest.raises(ValueError):
        g.index_of(0.1)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 3)


def test_paths_start_at_zero():
    e = simulate(4, 100, 10, 1.0, 3)
    assert np.all(e.values[:, 0, :] == 0.0)
    assert e.values.shape == (100, 11, 3)


def test_same_seed_bit_identical():
    a, b = simulate(11, 500, 7, 1.5, 2), simulate(11, 500, 7, 1.5, 2)
    assert np.array_equal(a.values, b.values) and a == b
    assert not np.array_equal(a.values, simulate(12, 500, 7, 1.5, 2).values)


def test_terminal_variance():
    e = simulate(0, 100_000, 1, 1.0)
    v = float(np.var(e.terminal[:, 0]))
    assert 0.985 <= v <= 1.015


def test_increment_moments():
    M, N, T, d = 100_000, 4, 2.0, 2
    inc = simulate(1, M, N, T, d).increments
    dt = T / N
    sd_mean = math.sqrt(dt / M)
    assert np.all(np.abs(inc.mean(axis=0)) < 5 * sd_mean)
    sd_var = dt * math.sqrt(2.0 / M)
    assert np.all(np.abs(inc.var(axis=0) - dt) < 5 * sd_var)
    cross = (inc[:, :, 0] * inc[:, :, 1]).mean(axis=0)
    assert np.all(np.abs(cross) < 5 * dt / math.sqrt(M))


def test_increment_autocorrelation():
    M = 100_000
    inc = simulate(2, M, 6, 1.0).increments[:, :, 0]
    for lag in (1, 2):
        rho = (inc[:, :-lag] * inc[:, lag:]).mean(axis=0) / inc.var()
        assert np.all(np.abs(rho) < 5 / math.sqrt(M))


@given(st.integers(0, 2**63), st.integers(1, 40), st.integers(1, 6), st.integers(1, 3),
       st.integers(1, 4))
@settings(max_examples=30)
def test_independent_of_threads_and_reconstructible(seed, M, N, d, threads):
    a = simulate(seed, M, N, 1.0, d)
    b = simulate(seed, M, N, 1.0, d, threads=threads)
    assert np.array_equal(a.values, b.values)
    m = M // 2
    assert np.array_equal(single_path(seed, m, N, 1.0, d), a.values[m])


def test_prefix_stability():
    a, b = simulate(5, 10, 4, 1.0), simulate(5, 30, 4, 1.0)
    assert np.array_equal(a.values, b.values[:10])


def test_antithetic():
    e = simulate(3, 64, 5, 1.0, 2)
    assert antithetic(antithetic(e)) == e
    u = with_antithetic(e)
    assert u.M == 128
    # exactly rounded sums: odd moments of the union vanish exactly
    for k in range(6):
        for j in range(2):
            col = u.values[:, k, j]
            assert math.fsum(col) == 0.0 and math.fsum(col * col * col) == 0.0
    built = simulate(3, 64, 5, 1.0, 2, antithetic=True)
    assert np.array_equal(built.values[32:], -built.values[:32])
    with pytest.raises(ValueError):
        simulate(3, 63, 5, 1.0, antithetic=True)


def test_antithetic_variance_reduction():
    # estimator variance across 40 replications of E[tanh(B_1)]
    plain, paired = [], []
    for s in range(40):
        plain.append(np.tanh(simulate(s, 2000, 1, 1.0).terminal[:, 0]).mean())
        paired.append(np.tanh(simulate(s, 2000, 1, 1.0, antithetic=True).terminal[:, 0]).mean())
    assert np.var(paired) <= np.var(plain)


def test_memory_budget(monkeypatch):
    monkeypatch.setenv("DIAGBSDE_MEMORY_BUDGET", "1000")
    with pytest.raises(ResourceBudgetError):
        simulate(0, 100, 20, 1.0)
    monkeypatch.setenv("DIAGBSDE_MEMORY_BUDGET", "oops")
    with pytest.raises(ValueError):
        simulate(0, 10, 2, 1.0)


def test_dump_load_round_trip(tmp_path):
    e = simulate(9, 20, 6, 1.25, 2)
    dump(e, tmp_path / "paths.bin")
    back = load(tmp_path / "paths.bin")
    assert back == e and back.T == 1.25
    (tmp_path / "bad.bin").write_bytes(b"garbage" * 20)
    with pytest.raises(ValueError):
        load(tmp_path / "bad.bin")


def test_validation():
    for args in ((0, 0, 3, 1.0), (0, 3, 0, 1.0), (0, 3, 3, -1.0)):
        with pytest.raises(ValueError):
            simulate(*args)
