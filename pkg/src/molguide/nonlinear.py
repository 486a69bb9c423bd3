"""Saturable single-molecule phase shift and extinction for m simultaneous photons.

A photon emitted by a second, identical molecule drives the target with
coupling g^2(t) = m g0^2 exp(-Gamma t), g0^2 = eta Gamma_wg Gamma. The time
integral of the light shift U(t)/hbar = g^2 delta / (delta^2 + (Gamma/2)^2 + 2 g^2)
gives the phase per photon in closed form:

    phi(m) = -(delta / (2 m Gamma)) ln(1 + 2 m eta Gamma_wg Gamma / (delta^2 + (Gamma/2)^2))

Phases keep this sign everywhere; exports report magnitudes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

GAMMA_DBT = 2 * np.pi * 30e6


@dataclass(frozen=True)
class NonlinearParams:
    gamma: float = GAMMA_DBT
    eta: float = 0.5
    gamma_wg_fraction: float = 0.5
    photon_numbers: tuple = (1, 2)

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must lie in [0, 1]")
        if self.gamma_wg_fraction < 0:
            raise ValueError("gamma_wg_fraction must be >= 0")
        if any(int(m) != m or m < 1 for m in self.photon_numbers):
            raise ValueError("photon numbers must be positive integers")

    @property
    def gamma_wg(self) -> float:
        return self.gamma_wg_fraction * self.gamma

    @property
    def g0_sq(self) -> float:
        return self.eta * self.gamma_wg * self.gamma


def stark_shift(g_sq, delta, gamma):
    """Light shift U/hbar (rad/s) for instantaneous coupling g^2 and detuning delta."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return g_sq * delta / (delta ** 2 + (gamma / 2) ** 2 + 2 * g_sq)


def _saturation(m, delta, p: NonlinearParams):
    return 2 * m * p.g0_sq / (delta ** 2 + (p.gamma / 2) ** 2)


def phase_per_photon(m, delta, params: NonlinearParams):
    """phi(m) in radians; odd in delta."""
    m = np.asarray(m, dtype=float)
    if np.any(m < 1):
        raise ValueError("m must be >= 1")
    return -(delta / (2 * m * params.gamma)) * np.log1p(_saturation(m, delta, params))


def phase_by_quadrature(m: int, delta: float, params: NonlinearParams) -> float:
    """Per-photon phase from direct time integration of the light shift.

    Independent of the closed form: integrates U(t)/hbar with g^2 = m g0^2 e^{-Gamma t}
    over t in [0, inf) (in units of 1/Gamma) and divides by m, with the photon's
    sign opposite to the molecule's.
    """
    g = params.gamma
    d = delta / g
    s = m * params.g0_sq / g ** 2

    def integrand(tau):
        gs = s * np.exp(-tau)
        return gs * d / (d * d + 0.25 + 2 * gs)

    val, _ = quad(integrand, 0, np.inf, epsabs=0, epsrel=1e-13, limit=500)
    return -val / m


def differential_phase(delta, params: NonlinearParams):
    return phase_per_photon(1, delta, params) - phase_per_photon(2, delta, params)


def log_transmission(m, delta, params: NonlinearParams):
    """Natural log of the intensity transmission, -(1/2m) ln(1 + saturation); finite at delta = 0."""
    m = np.asarray(m, dtype=float)
    return -np.log1p(_saturation(m, delta, params)) / (2 * m)


def extinction(m, delta, params: NonlinearParams):
    """Fractional power loss 1 - exp(-(Gamma/delta)|phi|), continuous through delta = 0."""
    return -np.expm1(log_transmission(m, delta, params))


def amplitude_transmission(m, delta, params: NonlinearParams):
    return np.exp(0.5 * log_transmission(m, delta, params))


@dataclass
class PhaseResponse:
    params: NonlinearParams
    delta: np.ndarray
    phase: dict
    extinction: dict
    differential: np.ndarray = field(default=None)

    def column(self, name: str) -> np.ndarray:
        if name == "differential":
            return self.differential
        if name.startswith("phi"):
            return self.phase[int(name[3:])]
        if name.startswith("ext"):
            return self.extinction[int(name[3:])]
        raise KeyError(name)

    def write_csv(self, path) -> None:
        """delta/Gamma, |phi(m)| per m, |phi(1) - phi(2)|, extinction per m."""
        ms = sorted(self.phase)
        header = ["delta_over_gamma"] + [f"abs_phi{m}_rad" for m in ms]
        cols = [self.delta / self.params.gamma] + [np.abs(self.phase[m]) for m in ms]
        if self.differential is not None:
            header.append("abs_phi1_minus_phi2_rad")
            cols.append(np.abs(self.differential))
        header += [f"extinction{m}" for m in ms]
        cols += [self.extinction[m] for m in ms]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in zip(*cols):
                w.writerow([f"{v:.12g}" for v in row])


def scan(params: NonlinearParams, delta_range: tuple = (-3.0, 3.0), samples: int = 601,
         in_units_of_gamma: bool = True) -> PhaseResponse:
    if samples < 2:
        raise ValueError("samples must be >= 2")
    lo, hi = delta_range
    if in_units_of_gamma:
        lo, hi = lo * params.gamma, hi * params.gamma
    delta = np.linspace(lo, hi, samples)
    ms = sorted(set(params.photon_numbers) | {1, 2})
    phase = {m: phase_per_photon(m, delta, params) for m in ms}
    ext = {m: extinction(m, delta, params) for m in ms}
    return PhaseResponse(params, delta, phase, ext, differential=phase[1] - phase[2])


@dataclass(frozen=True)
class Peak:
    delta: float
    value: float
    grid_delta: float
    grid_value: float
    degenerate: bool = False


def _column_function(name: str, params: NonlinearParams):
    if name == "differential":
        return lambda d: differential_phase(d, params)
    if name.startswith("phi"):
        m = int(name[3:])
        return lambda d: phase_per_photon(m, d, params)
    if name.startswith("ext"):
        m = int(name[3:])
        return lambda d: extinction(m, d, params)
    raise KeyError(name)


def find_peak(response: PhaseResponse, column: str = "phi1") -> Peak:
    """Largest |column| on the grid, refined on the closed form by bounded golden-section.

    Ties go to the smaller |delta|; an all-zero column is reported as degenerate at delta = 0.
    """
    vals = np.abs(response.column(column))
    d = response.delta
    if vals.size == 0:
        raise ValueError("empty response")
    vmax = vals.max()
    if vmax == 0 or np.ptp(vals) == 0:
        return Peak(0.0, float(vmax), 0.0, float(vmax), degenerate=True)
    cand = np.flatnonzero(vals == vmax)
    i = cand[np.argmin(np.abs(d[cand]))]
    f = _column_function(column, response.params)
    lo = d[max(i - 1, 0)]
    hi = d[min(i + 1, d.size - 1)]
    best_d, best_v = d[i], vals[i]
    if hi > lo:
        res = minimize_scalar(lambda x: -abs(f(x)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10 * response.params.gamma})
        if -res.fun >= best_v:
            best_d, best_v = res.x, -res.fun
    return Peak(float(best_d), float(best_v), float(d[i]), float(vals[i]))


def extinction_at(m: int, delta: float, params: NonlinearParams) -> float:
    return float(extinction(m, delta, params))


def slot_params(ratio_strip: float, ratio_slot: float, base: NonlinearParams = NonlinearParams()) -> NonlinearParams:
    """Scale the strip's Gamma_wg/Gamma by the slot-to-strip coupling-ratio gain."""
    return replace(base, gamma_wg_fraction=base.gamma_wg_fraction * ratio_slot / ratio_strip)


def peaks_summary(params: NonlinearParams, response: PhaseResponse = None) -> dict:
    response = response or scan(params)
    p1 = find_peak(response, "phi1")
    pd = find_peak(response, "differential")
    return {
        "phi1_peak_rad": p1.value,
        "phi1_peak_delta_over_gamma": p1.delta / params.gamma,
        "differential_peak_rad": pd.value,
        "differential_peak_delta_over_gamma": pd.delta / params.gamma,
        "extinction1_at_differential_peak": extinction_at(1, pd.delta, params),
        "extinction2_at_differential_peak": extinction_at(2, pd.delta, params),
        "gamma_rad_per_s": params.gamma,
        "eta": params.eta,
        "gamma_wg_over_gamma": params.gamma_wg_fraction,
    }

