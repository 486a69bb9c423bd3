"""Golden-rule emission rates of a dipole into the guide and into the bulk matrix.

All rates are angular frequencies (rad/s). Ratio-based functions never need the
dipole magnitude; absolute rates do.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.constants import c as C0, epsilon_0 as EPS0, hbar as HBAR

DEFAULT_RATE_CORRECTION = 1.05


class MissingDipoleError(ValueError):
    pass


def local_field_factor(n: float) -> float:
    """((n^2 + 2) / 3)^2."""
    if n < 1:
        raise ValueError("refractive index must be >= 1")
    return ((n * n + 2.0) / 3.0) ** 2


@dataclass(frozen=True)
class EmitterParams:
    gamma_total: float = 2 * np.pi * 30e6
    eta: float = 0.5
    orientation: tuple = (1.0, 0.0, 0.0)
    wavelength: float = 785e-9
    dipole: Optional[float] = None

    def __post_init__(self):
        if not self.gamma_total > 0:
            raise ValueError("gamma_total must be positive")
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must lie in [0, 1]")
        if abs(np.linalg.norm(self.orientation) - 1) > 1e-12:
            raise ValueError("orientation must be a unit vector")

    @property
    def omega(self) -> float:
        return 2 * np.pi * C0 / self.wavelength

    @property
    def alignment(self) -> float:
        """d_x^2 / d^2."""
        return float(self.orientation[0] ** 2)

    def dipole_x(self) -> float:
        if self.dipole is None:
            raise MissingDipoleError(
                "dipole magnitude not set; use coupling_ratio for magnitude-free results"
            )
        return self.dipole * self.orientation[0]


def gamma_wg(params: EmitterParams, n: float, area: float, v_g: float) -> float:
    """One-direction emission rate into the guided mode.

    d_x^2 omega / (2 hbar n^2 eps0 A_eff v_g) * ((n^2+2)/3)^2
    """
    if area <= 0 or v_g <= 0:
        raise ValueError("mode area and group velocity must be positive")
    dx = params.dipole_x()
    return dx * dx * params.omega / (2 * HBAR * n * n * EPS0 * area * v_g) * local_field_factor(n)


def free_space_rate(dipole: float, omega: float) -> float:
    return dipole ** 2 * omega ** 3 / (3 * np.pi * HBAR * EPS0 * C0 ** 3)


def gamma_rad(params: EmitterParams, n: float) -> float:
    """Radiative rate in the homogeneous matrix, including the local-field factor."""
    if params.dipole is None:
        raise MissingDipoleError("dipole magnitude not set")
    return free_space_rate(params.dipole, params.omega) * n * local_field_factor(n)


def dipole_from_rate(rate: float, wavelength: float, n: float) -> float:
    """Dipole moment (C m) whose bulk radiative rate in index n equals ``rate``."""
    omega = 2 * np.pi * C0 / wavelength
    unit = free_space_rate(1.0, omega) * n * local_field_factor(n)
    return float(np.sqrt(rate / unit))


def coupling_ratio(alignment: float, wavelength: float, n: float, area: float, v_g: float) -> float:
    """Gamma_wg / Gamma_rad = (1/4) (d_x^2/d^2) (3 lambda^2 / (2 pi n^2)) (c/n) / (A_eff v_g)."""
    if area <= 0 or v_g <= 0:
        raise ValueError("mode area and group velocity must be positive")
    sigma_medium = 3 * wavelength ** 2 / (2 * np.pi * n * n)
    return 0.25 * alignment * sigma_medium * (C0 / n) / (area * v_g)


def guided_fraction(ratio: float, total_rate_correction: float = DEFAULT_RATE_CORRECTION) -> float:
    """Fraction of all emitted photons entering the guide, both directions."""
    if ratio < 0 or total_rate_correction <= 0:
        raise ValueError("ratio must be >= 0 and the correction > 0")
    return 2 * ratio / total_rate_correction


def mirror_enhancement(ratio: float, total_rate_correction: float = 1.0) -> float:
    """One-direction output with an ideal mirror at an antinode: 4 Gamma_wg / (corrected total)."""
    if ratio < 0 or total_rate_correction <= 0:
        raise ValueError("ratio must be >= 0 and the correction > 0")
    return 4 * ratio / total_rate_correction


def zpl_cross_section(wavelength: float) -> float:
    """3 lambda^2 / (2 pi)."""
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    return 3 * wavelength ** 2 / (2 * np.pi)


def density_of_states(length: float, v_g: float) -> float:
    """One-direction 1D density of guided modes, L / (2 pi v_g).

    The golden-rule product with |g|^2 (which carries 1/L) is independent of L.
    """
    if length <= 0 or v_g <= 0:
        raise ValueError("length and group velocity must be positive")
    return length / (2 * np.pi * v_g)


def coupling_sq(params: EmitterParams, n: float, area: float, length: float) -> float:
    """|g|^2 for a travelling mode quantized over length L, local-field factor included."""
    dx = params.dipole_x()
    return dx * dx * params.omega / (2 * HBAR * EPS0 * n * n * length * area) * local_field_factor(n)


def golden_rule_rate(params: EmitterParams, n: float, area: float, v_g: float, length: float) -> float:
    """2 pi |g|^2 D(omega); equals gamma_wg for any L."""
    return 2 * np.pi * coupling_sq(params, n, area, length) * density_of_states(length, v_g)


@dataclass
class CouplingResult:
    wavelength: float
    n: float
    area: float
    v_g: float
    alignment: float
    ratio: float
    local_field: float
    total_rate_correction: float
    guided_fraction: float
    guided_fraction_uncorrected: float
    mirror_enhanced_fraction: float
    one_direction_fraction: float
    zpl_cross_section: float
    gamma_wg: Optional[float] = None
    gamma_rad: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["area_over_lambda2"] = self.area / self.wavelength ** 2
        d["v_g_over_c_over_n"] = self.v_g / (C0 / self.n)
        d["area_over_zpl_cross_section"] = self.area / self.zpl_cross_section
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def evaluate_coupling(params: EmitterParams, n: float, area: float, v_g: float,
                      total_rate_correction: float = DEFAULT_RATE_CORRECTION) -> CouplingResult:
    """Every rate, ratio and fraction for one geometry, with intermediates for audit."""
    ratio = coupling_ratio(params.alignment, params.wavelength, n, area, v_g)
    res = CouplingResult(
        wavelength=params.wavelength,
        n=n,
        area=area,
        v_g=v_g,
        alignment=params.alignment,
        ratio=ratio,
        local_field=local_field_factor(n),
        total_rate_correction=total_rate_correction,
        guided_fraction=guided_fraction(ratio, total_rate_correction),
        guided_fraction_uncorrected=guided_fraction(ratio, 1.0),
        mirror_enhanced_fraction=mirror_enhancement(ratio, 1.0),
        one_direction_fraction=ratio / total_rate_correction,
        zpl_cross_section=zpl_cross_section(params.wavelength),
    )
    if params.dipole is not None:
        res.gamma_wg = gamma_wg(params, n, area, v_g)
        res.gamma_rad = gamma_rad(params, n)
    return res
