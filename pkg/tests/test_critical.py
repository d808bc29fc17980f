"""Critical energies, rotation frames and reflection coefficients."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polymerchain.critical import (anomaly_report, build_frame, classify, commutator,
                                   complex_coefficients, critical_order, find_critical,
                                   first_order, frame_angle, frame_angle_inverse,
                                   is_critical, reflection_coefficients, require_regular,
                                   rotated_polymer, scan_critical)
from polymerchain.errors import (AnomalousAngles, NoCriticalEnergy, NotCritical)
from polymerchain.model import MINUS, PLUS, PolymerEnsemble, dimer_ensemble
from polymerchain.transfer import polymer_transfer, rotation


def test_classify():
    assert classify(np.eye(2)) == "identity"
    assert classify(-np.eye(2)) == "minus_identity"
    assert classify(rotation(0.3)) == "elliptic"
    assert classify(np.diag([2.0, 0.5])) == "hyperbolic"
    assert classify(np.array([[1.0, 1.0], [0.0, 1.0]])) == "hyperbolic"


def test_dimer_critical_energies():
    assert scan_critical(dimer_ensemble(0.5), (-2, 2)) == pytest.approx([-0.5, 0.5], abs=1e-12)
    assert scan_critical(dimer_ensemble(1.5), (-2, 2)) == []


def test_two_one_example():
    ens = PolymerEnsemble.from_arrays([1, 1], [0, 0], [1], [0.4])
    roots = scan_critical(ens, (-2, 2))
    assert roots == pytest.approx([0.0], abs=1e-12)
    assert is_critical(ens, 0.0) and not is_critical(ens, 0.1)


def test_identical_polymers_have_no_isolated_critical_energy():
    with pytest.raises(NoCriticalEnergy):
        scan_critical(dimer_ensemble(0.0), (-2, 2))


def test_commutator_vanishes_only_at_critical_energies():
    ens = dimer_ensemble(0.5)
    assert np.abs(commutator(ens, 0.5)).max() < 1e-14
    assert np.abs(commutator(ens, 0.3)).max() > 1e-3


def test_dimer_frame_angles():
    # at E = 0.5 the plus polymer is two quarter turns, the minus polymer
    # squares a rotation by 2 pi / 3
    f = build_frame(dimer_ensemble(0.5), 0.5)
    assert f.eta[PLUS] == pytest.approx(math.pi)
    assert abs(f.eta[MINUS]) == pytest.approx(2 * math.pi / 3)
    for s in (PLUS, MINUS):
        R = f.M @ polymer_transfer(f.ensemble.polymer(s), 0.5) @ np.linalg.inv(f.M)
        assert np.allclose(R, rotation(f.eta[s]), atol=1e-12)
    assert np.linalg.det(f.M) == pytest.approx(1.0)


def test_lifted_angles_are_periodic_chain_densities():
    # eta_lift / (pi L) is the integrated density of states of the periodic
    # chain of one polymer: arccos(-(E - v)/2) / pi for a constant potential
    f = build_frame(dimer_ensemble(0.5), 0.5)
    for s, v in ((PLUS, 0.5), (MINUS, -0.5)):
        assert f.eta_lift[s] / (2 * math.pi) == pytest.approx(math.acos(-(0.5 - v) / 2) / math.pi)


def test_not_critical_raises():
    with pytest.raises(NotCritical):
        build_frame(dimer_ensemble(0.5), 0.2)
    with pytest.raises(NoCriticalEnergy):
        find_critical(dimer_ensemble(1.5))


@given(st.floats(-math.pi, math.pi))
def test_frame_angle_roundtrip(theta):
    f = build_frame(dimer_ensemble(0.5), -0.5)
    m = frame_angle(f.M, theta)
    assert frame_angle_inverse(f.M, m) == pytest.approx(theta, abs=1e-12)
    w = f.M @ np.array([math.cos(theta), math.sin(theta)])
    cross = math.cos(m) * w[1] - math.sin(m) * w[0]
    assert abs(cross) < 1e-12 * np.linalg.norm(w)
    assert frame_angle(f.M, theta + math.pi) == pytest.approx(m + math.pi)


@given(st.floats(-0.2, 0.2))
def test_coefficients_unimodular(eps):
    f = build_frame(dimer_ensemble(0.3, 0.7), 0.3)
    co = reflection_coefficients(f, eps)
    for s in (PLUS, MINUS):
        assert abs(co.a[s]) ** 2 - abs(co.b[s]) ** 2 == pytest.approx(1.0, abs=1e-12)
        A = rotated_polymer(f, s, eps)
        v = np.array([1, -1j]) / math.sqrt(2)
        assert np.allclose(A @ v, co.a[s] * v + co.b[s] * v.conj())


def test_complex_coefficients_of_rotation():
    a, b = complex_coefficients(rotation(0.4))
    assert a == pytest.approx(np.exp(0.4j))
    assert abs(b) < 1e-15


@pytest.mark.parametrize("lam,energy", [(0.5, 0.5), (0.5, -0.5), (0.3, 0.3)])
def test_first_order_matches_finite_differences(lam, energy):
    f = build_frame(dimer_ensemble(lam, 0.4), energy)
    c, d = first_order(f)
    h = 1e-6
    hi, lo = reflection_coefficients(f, h), reflection_coefficients(f, -h)
    for s in (PLUS, MINUS):
        c_fd = np.exp(1j * f.eta[s]) * (hi.b[s] - lo.b[s]) / (2 * h)
        d_fd = math.remainder(np.angle(hi.a[s]) - np.angle(lo.a[s]), 2 * math.pi) / (2 * h)
        assert c[s] == pytest.approx(c_fd, abs=1e-7)
        assert d[s] == pytest.approx(d_fd, abs=1e-7)


def test_dimer_first_order_values():
    # frozen after the finite-difference check above
    c, d = first_order(build_frame(dimer_ensemble(0.5), -0.5))
    assert c[PLUS] == pytest.approx(1j / math.sqrt(3), abs=1e-12)
    assert c[MINUS] == pytest.approx(0.5 - 0.5j / math.sqrt(3), abs=1e-12)
    assert d[PLUS] == pytest.approx(2 / math.sqrt(3), abs=1e-12)
    assert d[MINUS] == pytest.approx(2 / math.sqrt(3), abs=1e-12)


def test_dimer_order_is_one():
    assert critical_order(build_frame(dimer_ensemble(0.5), 0.5)) == 1


def test_anomalous_dimer_is_flagged():
    f = build_frame(dimer_ensemble(1 / math.sqrt(2)), 1 / math.sqrt(2))
    assert anomaly_report(f).anomalous
    with pytest.raises(AnomalousAngles):
        require_regular(f)
    assert not anomaly_report(build_frame(dimer_ensemble(0.5), 0.5)).anomalous
