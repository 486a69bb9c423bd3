"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line with the measured values, then
asserts. Run with ``pytest tests/test_acceptance.py -v`` to see the lines.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.constants import c as C0

from molguide.circuits import (
    Circuit, FewPhotonState, SourceSpec, hom_coincidence, hom_coincidence_engine,
    mz_gate_closed_form, path_sum_distribution, run_mz_gate, stark_tune,
)
from molguide.coupling import EmitterParams, evaluate_coupling, guided_fraction, mirror_enhancement
from molguide.fdtd import (
    BraggSpec, FdtdConfig, HomogeneousStructure, SlabStructure, directionality,
    guided_fraction_fdtd, run_bragg_sim, run_dipole_sim, simulate,
)
from molguide.materials import HEXADECANE, EmitterPosition, Grid2D, locate_emitter
from molguide.modes import effective_mode_area, solve_modes
from molguide.nonlinear import (
    NonlinearParams, find_peak, peaks_summary, phase_by_quadrature, phase_per_photon, scan,
    slot_params,
)

LAM = 785e-9
N_CLAD = HEXADECANE.refractive_index
P = NonlinearParams()
G = P.gamma


@pytest.fixture
def verdict(capsys):
    def report(criterion: int, checks: list):
        ok = all(c[2] for c in checks)
        parts = "; ".join(f"{label} = {value}{'' if good else ' [out of bounds]'}"
                          for label, value, good in checks)
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {parts}"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return report


def _pipeline_ratio(spec, area, vg):
    return evaluate_coupling(EmitterParams(), math.sqrt(area.permittivity_at_emitter), area.area,
                             vg.group_velocity).ratio


def test_criterion_1_strip_mode_area(strip, verdict):
    t0 = time.perf_counter()
    mode = solve_modes(strip, Grid2D.for_spec(strip, spacing=10e-9))[0]
    area = effective_mode_area(mode, locate_emitter(strip, EmitterPosition()))
    elapsed = time.perf_counter() - t0
    a = area.area_over_lambda2
    verdict(1, [
        ("A_eff/lambda^2 (strip, 20 nm above centre)", f"{a:.4f} in [0.36, 0.48]", 0.36 <= a <= 0.48),
        ("runtime at 10 nm grid", f"{elapsed:.1f} s < 60 s", elapsed < 60),
    ])


def test_criterion_2_slot_mode_area(strip, slot, strip_area, slot_area, strip_vg, slot_vg, verdict):
    a = slot_area.area_over_lambda2
    gain = _pipeline_ratio(slot, slot_area, slot_vg) / _pipeline_ratio(strip, strip_area, strip_vg)
    verdict(2, [
        ("A_eff/lambda^2 (40 nm slot, emitter in gap)", f"{a:.4f} in [0.07, 0.13]", 0.07 <= a <= 0.13),
        ("slot/strip coupling gain", f"{gain:.3f} > 3", gain > 3),
    ])


def test_criterion_3_coupling_ratio(strip, strip_area, strip_vg, verdict):
    quoted = evaluate_coupling(EmitterParams(), N_CLAD, 0.42 * LAM ** 2, C0 / N_CLAD).ratio
    pipeline = _pipeline_ratio(strip, strip_area, strip_vg)
    gf = guided_fraction(0.14, 1.0)
    mf = mirror_enhancement(0.14, 1.0)
    verdict(3, [
        ("ratio (A = 0.42 lambda^2, v_g = c/n)", f"{quoted:.5f} in 0.138 +- 0.005", abs(quoted - 0.138) <= 0.005),
        ("ratio (solver A_eff, v_g)", f"{pipeline:.5f} in [0.11, 0.17]", 0.11 <= pipeline <= 0.17),
        ("guided fraction at ratio 0.14", f"{gf!r} == 0.28", abs(gf - 0.28) < 1e-15),
        ("mirror fraction at ratio 0.14", f"{mf!r} == 0.56", abs(mf - 0.56) < 1e-15),
    ])


def test_criterion_4_phase_curves(verdict):
    t0 = time.perf_counter()
    s = peaks_summary(P)
    elapsed = time.perf_counter() - t0
    deltas = np.concatenate([-np.geomspace(3.0, 0.05, 5), np.geomspace(0.05, 3.0, 5)]) * G
    worst = max(abs(phase_by_quadrature(m, d, P) / float(phase_per_photon(m, d, P)) - 1)
                for m in range(1, 11) for d in deltas)
    phi1, diff, ext = s["phi1_peak_rad"], s["differential_peak_rad"], s["extinction1_at_differential_peak"]
    verdict(4, [
        ("max|phi(1)|", f"{1e3 * phi1:.2f} mrad in 180 +- 5", abs(phi1 - 0.180) <= 0.005),
        ("max|phi(1) - phi(2)|", f"{1e3 * diff:.2f} mrad in [33, 44]", 0.033 <= diff <= 0.044),
        ("extinction at differential peak", f"{ext:.4f} in [0.20, 0.35]", 0.20 <= ext <= 0.35),
        ("closed form vs quadrature, 10x10 lattice", f"{worst:.2e} < 1e-6", worst < 1e-6),
        ("scan runtime", f"{elapsed:.3f} s < 1 s", elapsed < 1),
    ])


def test_criterion_5_slot_nonlinearity(strip, slot, strip_area, slot_area, strip_vg, slot_vg, verdict):
    r_strip = _pipeline_ratio(strip, strip_area, strip_vg)
    r_slot = _pipeline_ratio(slot, slot_area, slot_vg)
    peak = find_peak(scan(slot_params(r_strip, r_slot)), "differential").value
    verdict(5, [
        ("slot peak differential phase", f"{1e3 * peak:.2f} mrad in [110, 160]", 0.110 <= peak <= 0.160),
    ])


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def test_criterion_6_fdtd_properties(strip, verdict):
    cfg = FdtdConfig()
    slab = SlabStructure(strip)
    times = []

    runs = {}
    for standoff in (20e-9, 60e-9, 120e-9):
        runs[standoff], t = _timed(run_dipole_sim, cfg.with_source(standoff), slab)
        times.append(t)
    near = runs[20e-9]
    fractions = [guided_fraction_fdtd(runs[s])["total"] for s in (20e-9, 60e-9, 120e-9)]
    p1, p2 = near.box_powers.values()
    box = abs(p1 - p2) / max(p1, p2)
    lr = abs(near.guided_left - near.guided_right) / max(near.guided_left, near.guided_right)

    dirs = {}
    bragg = BraggSpec.quarter_wave(strip, 4)
    for detune in (0.0, 0.3, -0.3):
        c = replace(cfg, pulse=cfg.pulse.detuned(detune)) if detune else cfg
        rep, t = _timed(run_bragg_sim, c, strip, bragg)
        times.append(t)
        dirs[detune] = directionality(rep)

    # homogeneous medium: emitter moved off the reference point sees the same total power
    homog = HomogeneousStructure(HEXADECANE.permittivity)
    ref, t = _timed(simulate, cfg, homog, guided=False)
    times.append(t)
    moved, t = _timed(simulate, cfg.with_source(-200e-9, 150e-9), homog, guided=False)
    times.append(t)
    purcell = moved.total_power / ref.total_power

    verdict(6, [
        ("two-box flux disagreement", f"{box:.2e} < 0.02", box < 0.02),
        ("left/right guided asymmetry", f"{lr:.2e} < 0.02", lr < 0.02),
        ("guided fraction at 20/60/120 nm", "/".join(f"{f:.4f}" for f in fractions) + " decreasing",
         fractions[0] > fractions[1] > fractions[2]),
        ("Bragg directionality, 4 periods", f"{dirs[0.0]:.4f} > 0.8", dirs[0.0] > 0.8),
        ("detuned +-30%", f"{dirs[0.3]:.4f}, {dirs[-0.3]:.4f} < {dirs[0.0]:.4f}",
         dirs[0.3] < dirs[0.0] and dirs[-0.3] < dirs[0.0]),
        ("homogeneous Purcell ratio", f"{purcell:.4f} in 1 +- 0.02", abs(purcell - 1) <= 0.02),
        ("slowest run", f"{max(times):.1f} s < 300 s", max(times) < 300),
    ])


_element = st.one_of(
    st.tuples(st.just("bs"), st.permutations(range(3)).map(lambda p: p[:2]), st.floats(0, 1)),
    st.tuples(st.just("phase"), st.integers(0, 2), st.floats(-math.pi, math.pi)),
    st.tuples(st.just("loss"), st.integers(0, 2), st.floats(0, 1)),
    st.tuples(st.just("nl"), st.lists(st.integers(0, 2), min_size=1, max_size=2, unique=True),
              st.floats(-3, 3)),
)
_inputs = st.sampled_from([(1, 0, 0), (0, 0, 1), (1, 1, 0), (2, 0, 0), (0, 1, 1), (1, 0, 1), (0, 0, 2)])
_worst_path_sum = []


@given(st.lists(_element, min_size=1, max_size=5), _inputs)
@settings(max_examples=300, database=None)
def _path_sum_property(spec, occ):
    c = Circuit(3)
    for kind, a, b in spec:
        if kind == "bs":
            c.beamsplitter(*a, b)
        elif kind == "phase":
            c.phase(a, b)
        elif kind == "loss":
            c.loss(a, b)
        else:
            c.nonlinear(a, P, b * G)
    state = FewPhotonState.fock(3, occ)
    engine = c.run(state).probabilities()
    oracle = path_sum_distribution(c, state)
    _worst_path_sum.append(max(abs(engine.get(k, 0.0) - oracle.get(k, 0.0)) for k in set(engine) | set(oracle)))


def test_criterion_7_devices(verdict):
    s = SourceSpec()
    matched = max(hom_coincidence(s, s), hom_coincidence_engine(s, s))
    at_gamma = hom_coincidence_engine(s, stark_tune(s, G))
    far = [hom_coincidence(s, stark_tune(s, k * G)) for k in (10, 100, 1000)]

    delta = find_peak(scan(P), "differential").delta
    mz_err, total_err = 0.0, 0.0
    for pump in (False, True):
        for d in (delta, -0.4 * G, 1.5 * G):
            r = run_mz_gate(SourceSpec(), pump, P, d)
            cf = mz_gate_closed_form(P, d, pump)
            mz_err = max(mz_err, *(abs(r[k] - cf[k]) for k in ("P_detector0", "P_detector1", "P_lost")))
            total_err = max(total_err, abs(r["total_probability"] - 1))

    _worst_path_sum.clear()
    _path_sum_property()
    path_err = max(_worst_path_sum)

    verdict(7, [
        ("HOM matched", f"{matched:.1e} == 0", abs(matched) < 1e-12),
        ("HOM at Delta = Gamma", f"{at_gamma:.12f} == 1/4", abs(at_gamma - 0.25) < 1e-12),
        ("HOM at Delta = 10/100/1000 Gamma", "/".join(f"{p:.7f}" for p in far) + " -> 1/2",
         far[0] < far[1] < far[2] < 0.5 and 0.5 - far[2] < 1e-6),
        ("MZ gate vs closed form, pump on/off", f"{mz_err:.1e} < 1e-9", mz_err < 1e-9),
        ("total probability incl. loss modes", f"|1 - P| = {total_err:.1e} < 1e-10", total_err < 1e-10),
        (f"engine vs path sum, {len(_worst_path_sum)} random circuits", f"{path_err:.1e} < 1e-9",
         path_err < 1e-9),
    ])
