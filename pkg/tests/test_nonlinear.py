import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from molguide.nonlinear import (
    NonlinearParams, PhaseResponse, amplitude_transmission, differential_phase, extinction, find_peak,
    log_transmission, peaks_summary, phase_by_quadrature, phase_per_photon, scan, slot_params,
    stark_shift,
)

P = NonlinearParams()
G = P.gamma

detuning = st.floats(-5.0, 5.0).filter(lambda d: abs(d) > 1e-3)


def test_param_validation():
    with pytest.raises(ValueError):
        NonlinearParams(gamma=0.0)
    with pytest.raises(ValueError):
        NonlinearParams(eta=1.2)
    with pytest.raises(ValueError):
        NonlinearParams(photon_numbers=(0, 1))
    with pytest.raises(ValueError):
        phase_per_photon(0, G, P)


def test_stark_example():
    assert stark_shift(0.25 * G ** 2, G, G) == pytest.approx(G / 7, rel=1e-14)
    assert P.g0_sq == pytest.approx(0.25 * G ** 2, rel=1e-14)


@given(st.floats(0, 10), st.floats(-10, 10))
def test_stark_bounds(g_sq, d):
    u = stark_shift(g_sq * G ** 2, d * G, G)
    assert np.sign(u) == np.sign(d) or u == 0
    assert abs(u) <= abs(d * G) / 2 * (1 + 1e-12)


def test_zero_detuning_phase():
    assert phase_per_photon(1, 0.0, P) == 0.0
    assert differential_phase(0.0, P) == 0.0


@pytest.mark.parametrize("m", range(1, 11))
def test_closed_form_vs_quadrature(m):
    deltas = np.concatenate([-np.geomspace(3.0, 0.05, 5), np.geomspace(0.05, 3.0, 5)]) * G
    for d in deltas:
        exact = float(phase_per_photon(m, d, P))
        assert phase_by_quadrature(m, d, P) == pytest.approx(exact, rel=1e-6)


@given(st.integers(1, 6), detuning, st.floats(0.01, 1.0), st.floats(0.01, 3.0))
@settings(max_examples=40)
def test_quadrature_property(m, d, eta, frac):
    p = NonlinearParams(eta=eta, gamma_wg_fraction=frac)
    exact = float(phase_per_photon(m, d * G, p))
    assert phase_by_quadrature(m, d * G, p) == pytest.approx(exact, rel=1e-6)


@given(st.integers(1, 8), detuning)
def test_odd_phase_even_extinction(m, d):
    assert phase_per_photon(m, -d * G, P) == -phase_per_photon(m, d * G, P)
    assert extinction(m, -d * G, P) == extinction(m, d * G, P)
    assert 0 <= extinction(m, d * G, P) < 1


@given(detuning, st.floats(0.01, 1.0))
def test_saturation_ordering(d, eta):
    p = NonlinearParams(eta=eta)
    mags = [abs(float(phase_per_photon(m, d * G, p))) for m in (1, 2, 4)]
    assert mags[0] > mags[1] > mags[2]


def test_phase_sign():
    # positive detuning gives a negative phase with this sign convention
    assert phase_per_photon(1, 0.7 * G, P) < 0


def test_linear_limit():
    p = NonlinearParams(gamma_wg_fraction=1e-5, eta=1.0)
    for d in (-2.0, -0.3, 0.4, 1.5):
        p1 = float(phase_per_photon(1, d * G, p))
        assert abs(p1 - float(phase_per_photon(2, d * G, p))) / abs(p1) < 1e-3
        first_order = -d * G * p.g0_sq / G / ((d * G) ** 2 + G ** 2 / 4)
        assert p1 == pytest.approx(first_order, rel=1e-4)


def test_uncoupled_is_transparent():
    p = NonlinearParams(eta=0.0)
    d = np.linspace(-3, 3, 61) * G
    assert np.all(differential_phase(d, p) == 0)
    assert np.all(extinction(1, d, p) == 0)


def test_extinction_matches_phase_form():
    for m in (1, 2):
        for d in (-2.0, -0.5, 0.3, 1.0):
            phi = float(phase_per_photon(m, d * G, P))
            assert extinction(m, d * G, P) == pytest.approx(1 - math.exp(-abs(G / (d * G) * phi)), rel=1e-12)


def test_extinction_finite_at_resonance():
    e0 = float(extinction(1, 0.0, P))
    assert 0 < e0 < 1
    assert extinction(1, 1e-9 * G, P) == pytest.approx(e0, rel=1e-12)
    assert float(extinction(1, 1e4 * G, P)) < 1e-8


def test_amplitude_is_root_of_transmission():
    d = np.linspace(-3, 3, 13) * G
    np.testing.assert_allclose(amplitude_transmission(2, d, P) ** 2, 1 - extinction(2, d, P), rtol=1e-13)
    np.testing.assert_allclose(np.log(amplitude_transmission(1, d, P) ** 2), log_transmission(1, d, P),
                               rtol=1e-13)


def test_scan_shapes_and_symmetry():
    r = scan(NonlinearParams(photon_numbers=(1, 2, 4)), (-3, 3), 601)
    assert r.delta.size == 601
    assert set(r.phase) == {1, 2, 4}
    np.testing.assert_allclose(r.phase[1], -r.phase[1][::-1], rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(r.extinction[2], r.extinction[2][::-1], rtol=1e-12, atol=1e-15)
    with pytest.raises(ValueError):
        scan(P, samples=1)


def test_reference_peaks():
    s = peaks_summary(P)
    assert s["phi1_peak_rad"] == pytest.approx(0.180, abs=0.005)
    assert 0.5 < abs(s["phi1_peak_delta_over_gamma"]) < 0.9
    assert 0.033 <= s["differential_peak_rad"] <= 0.044
    assert 0.20 <= s["extinction1_at_differential_peak"] <= 0.35


def test_peak_refinement_small():
    r = scan(P, (-3, 3), 601)
    for col in ("phi1", "differential", "phi2"):
        pk = find_peak(r, col)
        assert not pk.degenerate
        assert pk.value >= pk.grid_value
        assert abs(pk.value - pk.grid_value) / pk.grid_value < 0.01


def test_peak_ties_break_to_smaller_detuning():
    d = np.array([-2.0, -1.0, 0.0, 0.5, 1.5]) * G
    col = np.array([0.3, 0.1, 0.0, 0.3, 0.1])
    r = PhaseResponse(P, d, {1: col, 2: col}, {1: col, 2: col}, differential=col)
    assert find_peak(r, "phi1").grid_delta == 0.5 * G


def test_degenerate_peak():
    pk = find_peak(scan(NonlinearParams(eta=0.0)), "differential")
    assert pk.degenerate and pk.delta == 0.0 and pk.value == 0.0


def test_slot_scaling():
    p = slot_params(0.14, 0.42)
    assert p.gamma_wg_fraction == pytest.approx(1.5)
    assert find_peak(scan(p), "differential").value > find_peak(scan(P), "differential").value


def test_csv_export(tmp_path):
    r = scan(NonlinearParams(photon_numbers=(1, 2, 4)), (-3, 3), 101)
    r.write_csv(tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["delta_over_gamma", "abs_phi1_rad", "abs_phi2_rad", "abs_phi4_rad",
                       "abs_phi1_minus_phi2_rad", "extinction1", "extinction2", "extinction4"]
    assert len(rows) == 102
    assert all(float(v) >= 0 for v in rows[1][1:])
