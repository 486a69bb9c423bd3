import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from molguide.circuits import (
    MZ_DETECTOR_MODES, Circuit, CircuitError, FewPhotonState, SourceSpec, apply_beamsplitter,
    apply_loss, apply_nonlinear_element, apply_phase, build_circuit, circuit_report,
    hom_coincidence, hom_coincidence_engine, hom_report, linear_transfer_matrix,
    mz_gate_closed_form, path_sum_distribution, permanent_amplitude, run_mz_gate, stark_tune,
    wavepacket_overlap,
)
from molguide.nonlinear import (
    NonlinearParams, amplitude_transmission, differential_phase, find_peak, phase_per_photon, scan,
)

P = NonlinearParams()
G = P.gamma
DELTA_PEAK = find_peak(scan(P), "differential").delta


def _close(a: dict, b: dict, tol: float) -> bool:
    keys = set(a) | set(b)
    return all(abs(a.get(k, 0.0) - b.get(k, 0.0)) <= tol for k in keys)


# -- states and single elements -------------------------------------------

def test_state_validation():
    with pytest.raises(CircuitError):
        FewPhotonState(2, {(1, 0, 0): 1.0})
    s = FewPhotonState.vacuum(3)
    assert s.norm() == 1.0 and s.photon_numbers() == {0}


def test_balanced_splitter_single_photon():
    out = apply_beamsplitter(FewPhotonState.fock(2, (1, 0)), (0, 1))
    assert out.amplitudes[(1, 0)] == pytest.approx(1 / math.sqrt(2))
    assert out.amplitudes[(0, 1)] == pytest.approx(1j / math.sqrt(2))


@pytest.mark.parametrize("t, expected", [(1.0, (1, 0)), (0.0, (0, 1))])
def test_splitter_limits(t, expected):
    out = apply_beamsplitter(FewPhotonState.fock(2, (1, 0)), (0, 1), t)
    assert out.probabilities() == pytest.approx({expected: 1.0})


def test_hong_ou_mandel_dip():
    out = apply_beamsplitter(FewPhotonState.fock(2, (1, 1)), (0, 1))
    p = out.probabilities()
    assert p.get((1, 1), 0.0) < 1e-30
    assert p[(2, 0)] == pytest.approx(0.5) and p[(0, 2)] == pytest.approx(0.5)


def test_distinguishable_photons_coincide_half():
    a, b = SourceSpec(), stark_tune(SourceSpec(), 1e6 * G)
    assert hom_coincidence(a, b) == pytest.approx(0.5, abs=1e-9)
    assert hom_coincidence_engine(a, b) == pytest.approx(0.5, abs=1e-9)


def test_element_validation():
    with pytest.raises(CircuitError):
        Circuit(2).beamsplitter(0, 0)
    with pytest.raises(CircuitError):
        Circuit(2).beamsplitter(0, 1, 1.5)
    with pytest.raises(CircuitError):
        Circuit(2).loss(0, -0.1)
    with pytest.raises(CircuitError):
        Circuit(2).phase(2, 0.1)
    with pytest.raises(CircuitError):
        Circuit(2).run(FewPhotonState.fock(2, (2, 1)))


def test_functional_loss_and_phase():
    s = apply_phase(FewPhotonState.fock(1, (1,)), 0, 0.3)
    assert s.amplitudes[(1,)] == pytest.approx(np.exp(0.3j))
    out = apply_loss(FewPhotonState.fock(2, (2, 0)), 0, 0.7)
    assert out.n_modes == 3
    assert out.norm() == pytest.approx(1.0, abs=1e-12)
    assert out.marginal([0])[(2,)] == pytest.approx(0.49)


# -- random circuits vs. the path-sum oracle ----------------------------------

element = st.one_of(
    st.tuples(st.just("bs"), st.permutations(range(3)).map(lambda p: p[:2]), st.floats(0, 1)),
    st.tuples(st.just("phase"), st.integers(0, 2), st.floats(-math.pi, math.pi)),
    st.tuples(st.just("loss"), st.integers(0, 2), st.floats(0, 1)),
    st.tuples(st.just("nl"), st.lists(st.integers(0, 2), min_size=1, max_size=2, unique=True),
              st.floats(-3, 3)),
)
inputs = st.sampled_from([(1, 0, 0), (0, 1, 0), (1, 1, 0), (2, 0, 0), (0, 1, 1), (1, 0, 1), (0, 0, 2)])


def _build(spec, params=P):
    c = Circuit(3)
    for kind, a, b in spec:
        if kind == "bs":
            c.beamsplitter(*a, b)
        elif kind == "phase":
            c.phase(a, b)
        elif kind == "loss":
            c.loss(a, b)
        else:
            c.nonlinear(a, params, b * params.gamma)
    return c


@given(st.lists(element, min_size=1, max_size=5), inputs, st.floats(0.05, 1.0))
@settings(max_examples=150)
def test_engine_matches_path_sum(spec, occ, eta):
    circ = _build(spec, NonlinearParams(eta=eta))
    state = FewPhotonState.fock(3, occ)
    out = circ.run(state)
    assert abs(out.norm() - 1) < 1e-10
    assert out.photon_numbers() == {sum(occ)}
    assert _close(out.probabilities(), path_sum_distribution(circ, state), 1e-9)


@given(st.lists(element.filter(lambda e: e[0] in ("bs", "phase")), min_size=1, max_size=5), inputs)
def test_linear_circuits_unitary_and_permanent(spec, occ):
    circ = _build(spec)
    u = linear_transfer_matrix(circ)
    np.testing.assert_allclose(u.conj().T @ u, np.eye(3), atol=1e-12)
    state = FewPhotonState.fock(3, occ)
    out = circ.run(state)
    assert out.norm() == pytest.approx(1.0, abs=1e-12)
    for occ_out, amp in out.amplitudes.items():
        assert amp == pytest.approx(permanent_amplitude(u, occ, occ_out), abs=1e-12)


@given(st.lists(element, min_size=1, max_size=5))
@settings(max_examples=50)
def test_superposition_input_conserves_probability(spec):
    circ = _build(spec)
    amp = 1 / math.sqrt(3)
    state = FewPhotonState(3, {(1, 1, 0): amp, (0, 0, 2): 1j * amp, (1, 0, 0): -amp})
    out = circ.run(state)
    assert abs(out.norm() - 1) < 1e-10
    assert _close(out.probabilities(), path_sum_distribution(circ, state), 1e-9)


def test_linear_transfer_rejects_molecule():
    with pytest.raises(CircuitError):
        linear_transfer_matrix(Circuit(2).nonlinear(0, P, G))


# -- molecule element ------------------------------------------------------

@pytest.mark.parametrize("m", [1, 2])
def test_molecule_factors_match_phase_module(m):
    d = 0.7 * G
    state = FewPhotonState.fock(1, (m,))
    out = apply_nonlinear_element(state, 0, P, d)
    tau = amplitude_transmission(m, d, P) * np.exp(1j * phase_per_photon(m, d, P))
    assert out.amplitudes[(m,) + (0,) * (out.n_modes - 1)] == pytest.approx(tau ** m, abs=1e-12)
    assert out.norm() == pytest.approx(1.0, abs=1e-12)


def test_uncoupled_molecule_is_identity():
    p = NonlinearParams(eta=0.0)
    out = apply_nonlinear_element(FewPhotonState.fock(2, (1, 1)), (0, 1), p, 0.5 * G)
    assert out.probabilities() == pytest.approx({(1, 1) + (0,) * (out.n_modes - 2): 1.0})


# -- HOM ------------------------------------------------------------------

def test_hom_matched_and_detuned():
    s = SourceSpec()
    assert hom_coincidence(s, s) == pytest.approx(0.0, abs=1e-15)
    assert hom_coincidence_engine(s, s) == pytest.approx(0.0, abs=1e-15)
    one = stark_tune(s, G)
    assert hom_coincidence(s, one) == pytest.approx(0.25, abs=1e-12)
    assert hom_coincidence_engine(s, one) == pytest.approx(0.25, abs=1e-12)


def _overlap_by_quadrature(g1, g2, delta):
    # <xi1|xi2> with xi_k(t) = sqrt(g_k) exp(-(g_k/2 + i w_k) t), w1 - w2 = delta
    f = lambda t, part: part(math.sqrt(g1 * g2) * np.exp(-(g1 + g2) / 2 * t + 1j * delta * t))
    re = quad(f, 0, np.inf, args=(np.real,), limit=400, epsabs=0, epsrel=1e-12)[0]
    im = quad(f, 0, np.inf, args=(np.imag,), limit=400, epsabs=0, epsrel=1e-12)[0]
    return re + 1j * im


@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(-3.0, 3.0))
@settings(max_examples=40)
def test_overlap_matches_quadrature(g1, g2, d):
    s1 = SourceSpec(linewidth=g1 * G, stark_offset=d * G)
    s2 = SourceSpec(linewidth=g2 * G)
    expected = _overlap_by_quadrature(g1, g2, d)
    assert wavepacket_overlap(s1, s2) == pytest.approx(expected, rel=1e-8, abs=1e-10)


@given(st.floats(0.0, 20.0), st.floats(0.0, 20.0), st.floats(0.2, 5.0))
def test_hom_bounds_and_monotone(a, b, width):
    base = SourceSpec(linewidth=width * G)
    lo, hi = sorted((a, b))
    p_lo = hom_coincidence(base, stark_tune(base, lo * G))
    p_hi = hom_coincidence(base, stark_tune(base, -hi * G))
    assert 0 <= p_lo <= p_hi <= 0.5


def test_hom_engine_tracks_formula():
    s = SourceSpec()
    for d in np.linspace(-4, 4, 17):
        t = stark_tune(s, d * G)
        assert hom_coincidence_engine(s, t) == pytest.approx(hom_coincidence(s, t), abs=1e-12)


def test_stark_tune_inverse():
    s = SourceSpec(frequency=3.0, stark_offset=1.0)
    assert stark_tune(s, 0.0) == s
    assert stark_tune(stark_tune(s, 2.5 * G), -2.5 * G).center == pytest.approx(s.center)
    a, b = SourceSpec(frequency=0.0), SourceSpec(frequency=4 * G)
    assert hom_coincidence(stark_tune(a, 4 * G), b) == pytest.approx(0.0, abs=1e-15)


def test_hom_report_per_shot():
    r = hom_report(SourceSpec(eta=0.5), stark_tune(SourceSpec(eta=0.5), G))
    assert r["coincidence_per_shot"] == pytest.approx(0.25 * 0.25)


# -- MZ gate --------------------------------------------------------------

def test_mz_routes_to_detector0_without_molecule():
    p = NonlinearParams(eta=0.0)
    for pump in (False, True):
        r = run_mz_gate(SourceSpec(), pump, p, DELTA_PEAK)
        assert r["P_detector0"] == pytest.approx(1.0, abs=1e-12)
        assert r["P_detector1"] == pytest.approx(0.0, abs=1e-12)
    assert MZ_DETECTOR_MODES == {"detector0": 1, "detector1": 0}


@pytest.mark.parametrize("pump", [False, True])
@pytest.mark.parametrize("delta", [DELTA_PEAK, -0.3 * G, 1.7 * G])
def test_mz_matches_closed_form(pump, delta):
    r = run_mz_gate(SourceSpec(), pump, P, delta)
    cf = mz_gate_closed_form(P, delta, pump)
    for k in ("P_detector0", "P_detector1", "P_lost"):
        assert r[k] == pytest.approx(cf[k], abs=1e-9)
    assert r["total_probability"] == pytest.approx(1.0, abs=1e-10)


def test_mz_pump_absent_interferometer_algebra():
    phi = float(phase_per_photon(1, DELTA_PEAK, P))
    t = math.exp(-abs(G / (2 * DELTA_PEAK) * phi))
    r = run_mz_gate(SourceSpec(), False, P, DELTA_PEAK)
    assert r["P_detector0"] == pytest.approx(abs(1 + t * np.exp(1j * phi)) ** 2 / 4, abs=1e-12)
    assert r["P_detector1"] == pytest.approx(abs(1 - t * np.exp(1j * phi)) ** 2 / 4, abs=1e-12)


def test_pump_changes_output():
    off = run_mz_gate(SourceSpec(), False, P, DELTA_PEAK)
    on = run_mz_gate(SourceSpec(), True, P, DELTA_PEAK)
    assert abs(on["P_detector1"] - off["P_detector1"]) > 1e-4
    assert 0 < on["pump_transmitted"] < 1
    assert abs(differential_phase(DELTA_PEAK, P)) > 0.03


# -- config-built circuits --------------------------------------------------

def test_build_circuit_from_mappings():
    circ = build_circuit(2, [{"type": "beamsplitter", "modes": [0, 1]},
                             {"type": "loss", "mode": 0, "transmission": 0.81},
                             {"type": "nonlinear", "modes": [1], "delta_over_gamma": 0.45}])
    rep = circuit_report(circ, FewPhotonState.fock(2, (1, 1)))
    assert rep["total_probability"] == pytest.approx(1.0, abs=1e-10)
    assert 0 < rep["P_lost"] < 1
    assert sum(rep["probabilities"].values()) + rep["P_lost"] == pytest.approx(1.0)


@pytest.mark.parametrize("bad", [
    [{"type": "mirror"}],
    [{"type": "phase", "mode": 0, "phase": 0.1, "colour": "red"}],
    ["beamsplitter"],
])
def test_build_circuit_rejects(bad):
    with pytest.raises(CircuitError):
        build_circuit(2, bad)
