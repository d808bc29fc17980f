"""Polymers, ensembles, configurations and assembled windows."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polymerchain.errors import InsufficientConfiguration, InvalidEnsemble, InvalidPolymer
from polymerchain.model import (MINUS, PLUS, Polymer, PolymerEnsemble, assemble,
                                covering_configuration, dimer_ensemble,
                                periodic_configuration, random_window,
                                sample_configuration, sample_signs)


def test_polymer_rejects_bad_entries():
    with pytest.raises(InvalidPolymer):
        Polymer([1.0, 0.0], [0.0, 0.0])
    with pytest.raises(InvalidPolymer):
        Polymer([1.0], [0.0, 1.0])
    with pytest.raises(InvalidPolymer):
        Polymer([], [])
    with pytest.raises(InvalidPolymer):
        Polymer([1.0, np.nan], [0.0, 0.0])


def test_polymer_is_immutable():
    p = Polymer([1.0, 2.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        p.t[0] = 3.0


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.2, np.nan])
def test_ensemble_probability_range(p):
    with pytest.raises(InvalidEnsemble):
        dimer_ensemble(0.5, p)


def test_ensemble_basics():
    ens = PolymerEnsemble.from_arrays([1, 1, 1], [0, 0, 0], [2.0], [1.0], 0.25)
    assert ens.mean_length == pytest.approx(0.25 * 3 + 0.75 * 1)
    assert ens.max_hop == 2.0
    assert ens.length(PLUS) == 3 and ens.length(MINUS) == 1
    assert ens.average(4.0, 0.0) == pytest.approx(1.0)


@given(st.integers(0, 2**31), st.integers(0, 1000), st.integers(1, 20), st.integers(1, 20))
def test_configuration_prefix_stable(seed, index, a, b):
    ens = dimer_ensemble(0.3, 0.4)
    small = sample_configuration(ens, -a, b, seed, index)
    big = sample_configuration(ens, -a - 7, b + 11, seed, index)
    assert np.array_equal(small.signs, big.block(-a, b + 1))
    assert small.offset == big.offset


def test_sample_signs_matches_plain_configuration():
    ens = dimer_ensemble(0.5, 0.3)
    rows = sample_signs(ens, 50, 9, [0, 3, 17])
    for row, idx in zip(rows, [0, 3, 17]):
        c = sample_configuration(ens, 0, 49, 9, idx, stationary=False)
        assert np.array_equal(row, c.signs)


def test_stationary_origin_is_size_biased():
    # plus polymers are twice as long, so P(omega_0 = +) = 2/3 at p = 1/2
    ens = PolymerEnsemble.from_arrays([1, 1], [0, 0], [1], [0], 0.5)
    n = 6000
    hits = sum(sample_configuration(ens, 0, 0, 4, i).sign(0) == PLUS for i in range(n))
    assert abs(hits / n - 2 / 3) < 4 * np.sqrt(2 / 9 / n)


def test_configuration_range_errors():
    c = sample_configuration(dimer_ensemble(0.5), -2, 3, 0)
    with pytest.raises(InsufficientConfiguration):
        c.sign(4)
    with pytest.raises(InsufficientConfiguration):
        c.block(-3, 0)


def test_assemble_places_polymers():
    ens = PolymerEnsemble.from_arrays([1, 2, 3], [10, 20, 30], [5], [50])
    conf = periodic_configuration([PLUS, MINUS], -2, 3)
    w = assemble(conf, ens, -4, 5)
    # omega = (+, -, +, -, +, -) for k = -2..3, site 0 is the first entry of omega_0
    assert w.v.tolist() == [10, 20, 30, 50, 10, 20, 30, 50, 10, 20]
    assert w.node_positions.tolist() == [-4, -1, 0, 3, 4]
    assert w.node_polymers.tolist() == [-2, -1, 0, 1, 2]
    with pytest.raises(InsufficientConfiguration):
        assemble(conf, ens, -20, 5)


@given(st.integers(0, 10**6), st.integers(5, 40), st.integers(5, 40))
def test_random_windows_are_consistent(seed, left, right):
    ens = PolymerEnsemble.from_arrays([1, 0.5, 2], [0.1, 0.2, 0.3], [1.5, 1], [-1, 1], 0.6)
    w = random_window(ens, -left, right, seed, 2)
    wide = random_window(ens, -left - 30, right + 30, seed, 2)
    sub = wide.sub(-left, right)
    assert np.array_equal(w.t, sub.t) and np.array_equal(w.v, sub.v)
    assert np.array_equal(w.node_positions, sub.node_positions)


def test_covering_configuration_covers():
    ens = dimer_ensemble(0.5)
    for i in range(20):
        c = covering_configuration(ens, -37, 41, 3, i)
        assemble(c, ens, -37, 41)


def test_dense_matrix():
    w = random_window(dimer_ensemble(0.5), 0, 9, 1)
    h = w.dense()
    assert np.allclose(h, h.T)
    assert np.allclose(np.diag(h), w.v)
    assert np.allclose(np.diag(h, 1), -w.t[1:])
