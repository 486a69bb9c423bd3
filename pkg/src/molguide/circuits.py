"""Few-photon Fock-state simulator for the HOM source pair and the nonlinear MZ gate.

States are pure and live on an occupation-number basis. Loss, both linear and
the extinction that accompanies the molecular phase shift, is a unitary
dilation into extra vacuum modes that the circuit allocates up front, so the
total probability over all modes stays exactly one.

Beamsplitter convention: a_j -> t a_j + i r a_k, a_k -> i r a_j + t a_k.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from itertools import permutations, product
from typing import Optional, Sequence

import numpy as np

from .nonlinear import NonlinearParams, amplitude_transmission, phase_per_photon

MAX_PHOTONS = 2


class CircuitError(ValueError):
    pass


class FewPhotonState:
    """Complex amplitudes keyed by occupation tuples."""

    def __init__(self, n_modes: int, amplitudes: Optional[dict] = None):
        self.n_modes = n_modes
        self.amplitudes = {}
        for occ, amp in (amplitudes or {}).items():
            occ = tuple(occ)
            if len(occ) != n_modes:
                raise CircuitError(f"occupation {occ} does not match {n_modes} modes")
            if amp != 0:
                self.amplitudes[occ] = complex(amp)

    @classmethod
    def fock(cls, n_modes: int, occupation: Sequence[int]) -> "FewPhotonState":
        return cls(n_modes, {tuple(occupation): 1.0})

    @classmethod
    def vacuum(cls, n_modes: int) -> "FewPhotonState":
        return cls.fock(n_modes, (0,) * n_modes)

    def padded(self, n_modes: int) -> "FewPhotonState":
        extra = n_modes - self.n_modes
        if extra < 0:
            raise CircuitError("cannot shrink a state")
        return FewPhotonState(n_modes, {occ + (0,) * extra: a for occ, a in self.amplitudes.items()})

    def norm(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def photon_numbers(self) -> set:
        return {sum(occ) for occ in self.amplitudes}

    def probabilities(self) -> dict:
        return {occ: abs(a) ** 2 for occ, a in self.amplitudes.items() if abs(a) > 0}

    def marginal(self, modes: Sequence[int]) -> dict:
        """Occupation distribution of a subset of modes, summed over the rest."""
        out = defaultdict(float)
        for occ, a in self.amplitudes.items():
            out[tuple(occ[m] for m in modes)] += abs(a) ** 2
        return dict(out)

    def copy(self) -> "FewPhotonState":
        return FewPhotonState(self.n_modes, dict(self.amplitudes))

    def __repr__(self):
        terms = ", ".join(f"{occ}: {a:.4g}" for occ, a in sorted(self.amplitudes.items()))
        return f"FewPhotonState({self.n_modes}, {{{terms}}})"


def _occupation_to_list(occ) -> list:
    return [m for m, n in enumerate(occ) for _ in range(n)]


def _apply_linear(state: FewPhotonState, transform) -> FewPhotonState:
    """Apply a single-photon map to every creation operator.

    ``transform(occ)`` returns, for a basis state, a function mode -> list of
    (output mode, amplitude), which lets the map depend on the basis state
    (that is how the photon-number-dependent molecule enters).
    """
    out = defaultdict(complex)
    for occ, amp in state.amplitudes.items():
        photons = _occupation_to_list(occ)
        rule = transform(occ)
        norm_in = math.sqrt(math.prod(math.factorial(n) for n in occ))
        branches = [rule(m) for m in photons]
        for choice in product(*branches):
            new = [0] * state.n_modes
            coeff = amp / norm_in
            for mode, a in choice:
                new[mode] += 1
                coeff *= a
            coeff *= math.sqrt(math.prod(math.factorial(n) for n in new))
            out[tuple(new)] += coeff
    return FewPhotonState(state.n_modes, {k: v for k, v in out.items() if abs(v) > 1e-300})


@dataclass(frozen=True)
class BeamSplitter:
    modes: tuple
    transmissivity: float = 0.5

    def __post_init__(self):
        if len(set(self.modes)) != 2:
            raise CircuitError("beamsplitter needs two distinct modes")
        if not 0 <= self.transmissivity <= 1:
            raise CircuitError("transmissivity must lie in [0, 1]")

    def matrix(self) -> np.ndarray:
        t = math.sqrt(self.transmissivity)
        r = math.sqrt(1 - self.transmissivity)
        return np.array([[t, 1j * r], [1j * r, t]])

    def single_photon(self, occ):
        j, k = self.modes
        u = self.matrix()
        return lambda m: ([(j, u[0, 0]), (k, u[1, 0])] if m == j else
                          [(j, u[0, 1]), (k, u[1, 1])] if m == k else [(m, 1.0)])


@dataclass(frozen=True)
class PhaseShifter:
    mode: int
    phase: float

    def single_photon(self, occ):
        f = np.exp(1j * self.phase)
        return lambda m: [(m, f)] if m == self.mode else [(m, 1.0)]


@dataclass(frozen=True)
class LossChannel:
    mode: int
    transmission: float
    loss_mode: int

    def __post_init__(self):
        if not 0 <= self.transmission <= 1:
            raise CircuitError("loss transmission must lie in [0, 1]")

    def single_photon(self, occ):
        t = math.sqrt(self.transmission)
        r = math.sqrt(1 - self.transmission)
        return lambda m: ([(self.mode, t), (self.loss_mode, r)] if m == self.mode else [(m, 1.0)])


@dataclass(frozen=True)
class NonlinearElement:
    """A molecule side-coupled to ``modes``.

    A basis component carrying m photons in these modes gives each of them the
    factor t(m) exp(i phi(m)); the remainder r(m) goes to the loss mode
    ``loss_modes[(mode, m)]``.
    """

    modes: tuple
    params: NonlinearParams
    delta: float
    loss_modes: dict = field(hash=False, compare=False)

    def factors(self, m: int) -> tuple[complex, float]:
        t = float(amplitude_transmission(m, self.delta, self.params))
        phi = float(phase_per_photon(m, self.delta, self.params))
        return t * np.exp(1j * phi), math.sqrt(max(0.0, 1 - t * t))

    def single_photon(self, occ):
        m = sum(occ[k] for k in self.modes)
        if m == 0:
            return lambda mode: [(mode, 1.0)]
        tau, r = self.factors(m)

        def rule(mode):
            if mode in self.modes:
                return [(mode, tau), (self.loss_modes[(mode, m)], r)]
            return [(mode, 1.0)]

        return rule


class Circuit:
    """Ordered list of elements over ``n_physical`` modes plus allocated loss modes."""

    def __init__(self, n_physical: int, max_photons: int = MAX_PHOTONS):
        self.n_physical = n_physical
        self.n_modes = n_physical
        self.max_photons = max_photons
        self.elements: list = []
        self.loss_mode_labels: dict = {}

    def _new_mode(self, label: str) -> int:
        idx = self.n_modes
        self.n_modes += 1
        self.loss_mode_labels[idx] = label
        return idx

    def _check(self, *modes):
        for m in modes:
            if not 0 <= m < self.n_physical:
                raise CircuitError(f"mode {m} out of range for {self.n_physical} physical modes")

    def beamsplitter(self, j: int, k: int, transmissivity: float = 0.5) -> "Circuit":
        self._check(j, k)
        self.elements.append(BeamSplitter((j, k), transmissivity))
        return self

    def phase(self, mode: int, phase: float) -> "Circuit":
        self._check(mode)
        self.elements.append(PhaseShifter(mode, phase))
        return self

    def loss(self, mode: int, transmission: float) -> "Circuit":
        self._check(mode)
        lm = self._new_mode(f"loss[{len(self.elements)}] of mode {mode}")
        self.elements.append(LossChannel(mode, transmission, lm))
        return self

    def nonlinear(self, modes, params: NonlinearParams, delta: float) -> "Circuit":
        modes = tuple(modes) if isinstance(modes, (list, tuple)) else (modes,)
        self._check(*modes)
        loss = {}
        for mode in modes:
            for m in range(1, self.max_photons + 1):
                loss[(mode, m)] = self._new_mode(
                    f"molecule[{len(self.elements)}] scatter of mode {mode}, m={m}")
        self.elements.append(NonlinearElement(modes, params, delta, loss))
        return self

    def run(self, state: FewPhotonState) -> FewPhotonState:
        if max(state.photon_numbers(), default=0) > self.max_photons:
            raise CircuitError(f"at most {self.max_photons} photons supported")
        if state.n_modes > self.n_modes:
            raise CircuitError("state has more modes than the circuit")
        state = state.padded(self.n_modes)
        for el in self.elements:
            state = _apply_linear(state, el.single_photon)
        return state


def apply_beamsplitter(state: FewPhotonState, modes, transmissivity: float = 0.5) -> FewPhotonState:
    for m in modes:
        if not 0 <= m < state.n_modes:
            raise CircuitError(f"mode {m} out of range")
    return _apply_linear(state, BeamSplitter(tuple(modes), transmissivity).single_photon)


def apply_phase(state: FewPhotonState, mode: int, phase: float) -> FewPhotonState:
    return _apply_linear(state, PhaseShifter(mode, phase).single_photon)


def apply_loss(state: FewPhotonState, mode: int, transmission: float) -> FewPhotonState:
    """Returns a state with one extra (loss) mode appended."""
    state = state.padded(state.n_modes + 1)
    return _apply_linear(state, LossChannel(mode, transmission, state.n_modes - 1).single_photon)


def apply_nonlinear_element(state: FewPhotonState, mode, params: NonlinearParams,
                            delta: float) -> FewPhotonState:
    """Molecule on ``mode`` (an int or a tuple of modes); loss modes are appended per (mode, m)."""
    modes = tuple(mode) if isinstance(mode, (list, tuple)) else (mode,)
    m_max = max(state.photon_numbers(), default=0)
    n = state.n_modes
    loss = {}
    for k in modes:
        for m in range(1, m_max + 1):
            loss[(k, m)] = n + len(loss)
    state = state.padded(n + len(loss))
    return _apply_linear(state, NonlinearElement(modes, params, delta, loss).single_photon)


_ELEMENT_KEYS = {
    "beamsplitter": {"modes", "transmissivity"},
    "phase": {"mode", "phase"},
    "loss": {"mode", "transmission"},
    "nonlinear": {"modes", "delta_over_gamma"},
}


def build_circuit(n_modes: int, elements: Sequence[dict], params: Optional[NonlinearParams] = None) -> Circuit:
    """Circuit from a list of element mappings, e.g. ``{"type": "beamsplitter", "modes": [0, 1]}``."""
    circ = Circuit(n_modes)
    for i, el in enumerate(elements):
        if not isinstance(el, dict) or "type" not in el:
            raise CircuitError(f"element {i}: expected a mapping with a 'type' key")
        kind = el["type"]
        if kind not in _ELEMENT_KEYS:
            raise CircuitError(f"element {i}: unknown type {kind!r}")
        extra = set(el) - _ELEMENT_KEYS[kind] - {"type"}
        if extra:
            raise CircuitError(f"element {i}: unknown key(s) {sorted(extra)}")
        if kind == "beamsplitter":
            circ.beamsplitter(*el["modes"], float(el.get("transmissivity", 0.5)))
        elif kind == "phase":
            circ.phase(el["mode"], float(el["phase"]))
        elif kind == "loss":
            circ.loss(el["mode"], float(el["transmission"]))
        else:
            p = params or NonlinearParams()
            circ.nonlinear(tuple(el["modes"]), p, float(el.get("delta_over_gamma", 0.0)) * p.gamma)
    return circ


def circuit_report(circ: Circuit, state: FewPhotonState) -> dict:
    """Output distribution over the physical modes, with everything else counted as lost."""
    out = circ.run(state)
    phys = out.marginal(range(circ.n_physical))
    n_in = sum(next(iter(state.amplitudes)))
    detected = {",".join(map(str, occ)): p for occ, p in sorted(phys.items()) if sum(occ) == n_in}
    return {
        "probabilities": detected,
        "P_lost": 1.0 - sum(detected.values()),
        "total_probability": out.norm(),
        "n_modes_including_loss": circ.n_modes,
    }


# ---------------------------------------------------------------------------
# independent route: first-quantized sum over photon paths
# ---------------------------------------------------------------------------

def _single_photon_matrix(el, occ, n_modes) -> np.ndarray:
    rule = el.single_photon(occ)
    u = np.zeros((n_modes, n_modes), dtype=complex)
    for k in range(n_modes):
        for j, a in rule(k):
            u[j, k] += a
    return u


def path_sum_distribution(circuit: Circuit, state: FewPhotonState) -> dict:
    """Output occupation distribution by summing amplitudes over ordered photon paths.

    Photons are labelled; the input is symmetrized, each element moves every
    labelled photon independently (the molecule's map is chosen by the number
    of photons the path puts in its modes at that point) and probabilities are
    summed over labelled configurations.
    """
    n = circuit.n_modes
    state = state.padded(n)
    psi = defaultdict(complex)
    for occ, amp in state.amplitudes.items():
        photons = _occupation_to_list(occ)
        perms = set(permutations(photons))
        w = amp / math.sqrt(len(perms))
        for p in perms:
            psi[p] += w
    for el in circuit.elements:
        new = defaultdict(complex)
        for config, amp in psi.items():
            occ = [0] * n
            for m in config:
                occ[m] += 1
            u = _single_photon_matrix(el, tuple(occ), n)
            cols = [np.flatnonzero(u[:, k]) for k in config]
            for out in product(*cols):
                a = amp
                for j, k in zip(out, config):
                    a *= u[j, k]
                new[out] += a
        psi = new
    dist = defaultdict(float)
    for config, amp in psi.items():
        occ = [0] * n
        for m in config:
            occ[m] += 1
        dist[tuple(occ)] += abs(amp) ** 2
    return {k: v for k, v in dist.items() if v > 0}


def permanent(a: np.ndarray) -> complex:
    n = a.shape[0]
    if n == 0:
        return 1.0
    return sum(np.prod([a[i, s[i]] for i in range(n)]) for s in permutations(range(n)))


def linear_transfer_matrix(circuit: Circuit) -> np.ndarray:
    """Single-photon unitary of a circuit without molecules."""
    n = circuit.n_modes
    u = np.eye(n, dtype=complex)
    for el in circuit.elements:
        if isinstance(el, NonlinearElement):
            raise CircuitError("circuit contains a nonlinear element")
        u = _single_photon_matrix(el, (0,) * n, n) @ u
    return u


def permanent_amplitude(u: np.ndarray, occ_in, occ_out) -> complex:
    rows = _occupation_to_list(occ_out)
    cols = _occupation_to_list(occ_in)
    if len(rows) != len(cols):
        return 0.0
    sub = u[np.ix_(rows, cols)]
    norm = math.sqrt(math.prod(math.factorial(n) for n in occ_in) *
                     math.prod(math.factorial(n) for n in occ_out))
    return permanent(sub) / norm


# ---------------------------------------------------------------------------
# sources and devices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SourceSpec:
    """A Stark-tunable single-molecule photon source.

    ``frequency`` is the bare ZPL angular frequency (any common reference),
    ``stark_offset`` the electrode-induced shift, both rad/s.
    """

    frequency: float = 0.0
    linewidth: float = 2 * np.pi * 30e6
    eta: float = 0.5
    stark_offset: float = 0.0

    def __post_init__(self):
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must lie in [0, 1]")
        if not self.linewidth > 0:
            raise ValueError("linewidth must be positive")

    @property
    def center(self) -> float:
        return self.frequency + self.stark_offset


def stark_tune(source: SourceSpec, offset: float) -> SourceSpec:
    return replace(source, stark_offset=source.stark_offset + offset)


def wavepacket_overlap(s1: SourceSpec, s2: SourceSpec) -> complex:
    """<xi1|xi2> for exponentially decaying single-photon wavepackets."""
    g1, g2 = s1.linewidth, s2.linewidth
    detuning = s1.center - s2.center
    return math.sqrt(g1 * g2) / ((g1 + g2) / 2 - 1j * detuning)


def hom_visibility(s1: SourceSpec, s2: SourceSpec) -> float:
    return abs(wavepacket_overlap(s1, s2)) ** 2


def hom_coincidence(s1: SourceSpec, s2: SourceSpec) -> float:
    """Coincidence probability behind a 50:50 splitter, conditioned on both sources firing."""
    return (1 - hom_visibility(s1, s2)) / 2


def hom_circuit_state(s1: SourceSpec, s2: SourceSpec, transmissivity: float = 0.5):
    """Run the HOM experiment through the Fock engine.

    Modes: 0, 1 are the two splitter inputs in the first photon's spectral mode;
    2, 3 the same paths in the orthogonal spectral complement.
    """
    ov = wavepacket_overlap(s1, s2)
    perp = math.sqrt(max(0.0, 1 - abs(ov) ** 2))
    state = FewPhotonState(4, {(1, 1, 0, 0): ov, (1, 0, 0, 1): perp})
    circ = Circuit(4).beamsplitter(0, 1, transmissivity).beamsplitter(2, 3, transmissivity)
    return circ, circ.run(state)


def hom_coincidence_engine(s1: SourceSpec, s2: SourceSpec) -> float:
    _, out = hom_circuit_state(s1, s2)
    p = 0.0
    for occ, prob in out.probabilities().items():
        if occ[0] + occ[2] == 1 and occ[1] + occ[3] == 1:
            p += prob
    return p


def hom_report(s1: SourceSpec, s2: SourceSpec) -> dict:
    pc = hom_coincidence(s1, s2)
    return {
        "coincidence_probability": pc,
        "coincidence_probability_engine": hom_coincidence_engine(s1, s2),
        "visibility": hom_visibility(s1, s2),
        "detuning_rad_per_s": s1.center - s2.center,
        "bunching_probability": 1 - pc,
        "coincidence_per_shot": s1.eta * s2.eta * pc,
        "pair_emission_probability": s1.eta * s2.eta,
    }


# Mach-Zehnder gate: probe enters mode 0, the molecule sits on arm 0, the pump
# photon travels in its own mode 2 past the same molecule. With no phase in
# the arms the probe leaves through mode 1, which is therefore "detector 0".
MZ_DETECTOR_MODES = {"detector0": 1, "detector1": 0}


def mz_gate_circuit(params: NonlinearParams, delta: float) -> Circuit:
    return (Circuit(3)
            .beamsplitter(0, 1, 0.5)
            .nonlinear((0, 2), params, delta)
            .beamsplitter(0, 1, 0.5))


def run_mz_gate(probe: SourceSpec, pump_present: bool, params: NonlinearParams,
                delta: float) -> dict:
    circ = mz_gate_circuit(params, delta)
    state = FewPhotonState.fock(3, (1, 0, 1 if pump_present else 0))
    out = circ.run(state)
    marg = out.marginal([0, 1])
    p_det0 = marg.get((0, 1), 0.0)
    p_det1 = marg.get((1, 0), 0.0)
    p_lost = marg.get((0, 0), 0.0)
    pump_survived = out.marginal([2]).get((1,), 0.0) if pump_present else None
    return {
        "P_detector0": p_det0,
        "P_detector1": p_det1,
        "P_lost": p_lost,
        "total_probability": out.norm(),
        "pump_present": pump_present,
        "pump_transmitted": pump_survived,
        "delta_rad_per_s": delta,
        "probe_emission_probability": probe.eta,
        "P_detector0_per_shot": probe.eta * p_det0,
        "P_detector1_per_shot": probe.eta * p_det1,
    }


def mz_gate_closed_form(params: NonlinearParams, delta: float, pump_present: bool) -> dict:
    """Two-arm interferometer algebra written out by hand."""
    def tau_r(m):
        t = float(amplitude_transmission(m, delta, params))
        return t * np.exp(1j * float(phase_per_photon(m, delta, params))), math.sqrt(1 - t * t)

    tau1, r1 = tau_r(1)
    if not pump_present:
        return {
            "P_detector0": abs(1 + tau1) ** 2 / 4,
            "P_detector1": abs(1 - tau1) ** 2 / 4,
            "P_lost": r1 ** 2 / 2,
        }
    tau2, r2 = tau_r(2)
    incoherent = (abs(tau2) ** 2 * r2 ** 2 + r1 ** 2) / 4
    return {
        "P_detector0": abs(tau2 ** 2 + tau1) ** 2 / 4 + incoherent,
        "P_detector1": abs(tau2 ** 2 - tau1) ** 2 / 4 + incoherent,
        "P_lost": r2 ** 2 / 2,
    }


def report_json(d: dict) -> str:
    return json.dumps(d, indent=2, default=float)
