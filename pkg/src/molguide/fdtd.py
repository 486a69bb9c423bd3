"""2D FDTD of a line dipole next to a slab guide (longitudinal cut).

Fields: E along x (out of plane), H in the (y, z) plane; z runs along the
guide, y is vertical with the core top at y = 0. Internally H is scaled by the
vacuum impedance and time by c, so the updates read

    dEx/dt = (dHz/dy - dHy/dz) / eps,   dHy/dt = -dEx/dz,   dHz/dt = dEx/dy.

Yee layout: Ex at nodes (y_j, z_k), Hy at (y_j, z_k+1/2), Hz at (y_j+1/2, z_k).
All powers are per unit length in x and in units of 1/Z0; reports divide by
|J(omega)|^2 of the injected current so runs with different pulses compare.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .materials import WaveguideSpec
from .modes import CutoffError, slab_mode_fd, solve_slab_mode_1d


class FdtdConfigError(ValueError):
    pass


class InstabilityError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianPulse:
    """Gaussian-envelope current at ``wavelength``; ``fractional_bandwidth`` is spectral FWHM / f0."""

    wavelength: float = 785e-9
    fractional_bandwidth: float = 0.1
    amplitude: float = 1.0
    delay_widths: float = 5.0

    def __post_init__(self):
        if not (self.wavelength > 0 and self.fractional_bandwidth > 0):
            raise FdtdConfigError("pulse wavelength and bandwidth must be positive")

    @property
    def k0(self) -> float:
        return 2 * np.pi / self.wavelength

    @property
    def sigma_tau(self) -> float:
        """Envelope width in c*t (m)."""
        sigma_k = self.fractional_bandwidth * self.k0 / (2 * math.sqrt(2 * math.log(2)))
        return 1.0 / sigma_k

    @property
    def delay(self) -> float:
        return self.delay_widths * self.sigma_tau

    @property
    def off_time(self) -> float:
        return 2 * self.delay

    def value(self, tau):
        u = (tau - self.delay) / self.sigma_tau
        return self.amplitude * np.exp(-0.5 * u * u) * np.sin(self.k0 * (tau - self.delay))

    def detuned(self, fraction: float) -> "GaussianPulse":
        """Same pulse with its centre frequency scaled by (1 + fraction)."""
        return replace(self, wavelength=self.wavelength / (1 + fraction))


@dataclass(frozen=True)
class FdtdConfig:
    spacing: float = 10e-9
    courant: float = 0.5
    z_extent: float = 6e-6
    y_extent: float = 3e-6
    z_center: float = 0.0
    y_center: float = -60e-9
    pml_cells: int = 12
    pml_reflection: float = 1e-6
    pml_order: int = 4
    source_y: float = 20e-9
    source_z: float = 0.0
    pulse: GaussianPulse = GaussianPulse()
    decay_threshold: float = 1e-6
    max_steps: int = 400_000
    box_half_sizes: tuple = (0.5e-6, 0.9e-6)
    guided_monitor_offset: float = 2.4e-6
    analysis_wavelengths: tuple = ()
    record_every: int = 10
    subpixel: int = 8

    def __post_init__(self):
        if not self.spacing > 0:
            raise FdtdConfigError("spacing must be positive")
        if not 0 < self.courant <= 1 / math.sqrt(2):
            raise FdtdConfigError(f"Courant fraction {self.courant} exceeds the 2D bound 1/sqrt(2)")
        if self.pml_cells < 8:
            raise FdtdConfigError("PML must be at least 8 cells thick")
        if not 0 < self.pml_reflection < 1:
            raise FdtdConfigError("pml_reflection must lie in (0, 1)")
        if not 0 < self.decay_threshold < 1:
            raise FdtdConfigError("decay_threshold must lie in (0, 1)")
        if len(self.box_half_sizes) < 1:
            raise FdtdConfigError("at least one flux box is needed")
        if self.record_every < 1:
            raise FdtdConfigError("record_every must be >= 1")

    @property
    def frequencies(self) -> tuple:
        """Analysis wavenumbers k0 = omega / c; the pulse centre comes first."""
        ks = [self.pulse.k0] + [2 * np.pi / w for w in self.analysis_wavelengths]
        return tuple(ks)

    def with_source(self, y: float, z: Optional[float] = None) -> "FdtdConfig":
        return replace(self, source_y=y, source_z=self.source_z if z is None else z)


@dataclass(frozen=True)
class FluxMonitor:
    """Straight monitor line: ``normal`` 'z' is a vertical line at z = position, 'y' a horizontal one.

    ``sign`` orients the reported flux (+1 along +normal).
    """

    name: str
    normal: str
    position: float
    start: float
    end: float
    sign: int = 1

    def __post_init__(self):
        if self.normal not in ("y", "z"):
            raise FdtdConfigError("monitor normal must be 'y' or 'z'")
        if not self.end > self.start:
            raise FdtdConfigError("monitor end must exceed start")


def box_monitors(prefix: str, center: tuple, half: float) -> list:
    yc, zc = center
    return [
        FluxMonitor(f"{prefix}_right", "z", zc + half, yc - half, yc + half, +1),
        FluxMonitor(f"{prefix}_left", "z", zc - half, yc - half, yc + half, -1),
        FluxMonitor(f"{prefix}_top", "y", yc + half, zc - half, zc + half, +1),
        FluxMonitor(f"{prefix}_bottom", "y", yc - half, zc - half, zc + half, -1),
    ]


# ---------------------------------------------------------------------------
# structures
# ---------------------------------------------------------------------------

class Structure:
    """Permittivity eps(y, z) of a longitudinal cut."""

    name = "structure"
    symmetric = False

    def eps(self, y, z):
        raise NotImplementedError

    def cladding_eps(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class HomogeneousStructure(Structure):
    permittivity: float
    name: str = "homogeneous"
    symmetric = True

    def eps(self, y, z):
        return np.full(np.broadcast(y, z).shape, self.permittivity)

    def cladding_eps(self) -> float:
        return self.permittivity


@dataclass(frozen=True)
class SlabStructure(Structure):
    """Substrate below y = -t, core layer -t < y < 0, cladding above."""

    spec: WaveguideSpec
    name: str = "slab"
    symmetric = True

    def eps(self, y, z):
        y, z = np.broadcast_arrays(np.asarray(y, float), np.asarray(z, float))
        s = self.spec
        return np.where(y < -s.core_thickness, s.substrate.permittivity,
                        np.where(y < 0, s.core.permittivity, s.cladding.permittivity))

    def cladding_eps(self) -> float:
        return self.spec.cladding.permittivity


@dataclass(frozen=True)
class BraggSpec:
    """Quarter-wave stack cut into the core layer to the left of ``end_face``.

    Reading right to left from the end face: trench, block, trench, block, ...
    ``periods`` trenches in total; the continuous guide resumes left of the stack.
    Lengths default to quarter-waves at ``wavelength`` (see ``quarter_wave``).
    """

    periods: int = 6
    high_length: float = 0.0
    low_length: float = 0.0
    end_face: float = 20e-9
    emitter_gap: float = 20e-9

    def __post_init__(self):
        if self.periods < 0:
            raise FdtdConfigError("periods must be >= 0")
        if self.periods > 0 and not (self.high_length > 0 and self.low_length > 0):
            raise FdtdConfigError("block lengths must be positive")
        if self.emitter_gap < 0:
            raise FdtdConfigError("emitter_gap must be >= 0")

    @property
    def trench_width(self) -> float:
        return self.low_length

    @property
    def period(self) -> float:
        return self.high_length + self.low_length

    @property
    def length(self) -> float:
        return self.periods * self.period - (self.high_length if self.periods else 0.0)

    @classmethod
    def quarter_wave(cls, spec: WaveguideSpec, periods: int = 6, wavelength: Optional[float] = None,
                     **kw) -> "BraggSpec":
        """Blocks of lambda/(4 n): guided slab index for the core, cladding index for the trench."""
        lam = spec.wavelength if wavelength is None else wavelength
        n_hi = slab_effective_index(spec, lam)
        n_lo = spec.cladding.refractive_index
        return cls(periods, lam / (4 * n_hi), lam / (4 * n_lo), **kw)

    def emitter_position(self, spec: WaveguideSpec) -> tuple:
        """(y, z) inside the right-most trench, at core mid-height."""
        return -spec.core_thickness / 2, self.end_face - self.emitter_gap


@dataclass(frozen=True)
class BraggStructure(Structure):
    spec: WaveguideSpec
    bragg: BraggSpec
    name: str = "bragg"

    def in_trench(self, z):
        b = self.bragg
        z = np.asarray(z, float)
        if b.periods == 0:
            return np.zeros(z.shape, bool)
        u = b.end_face - z  # distance left of the end face
        k = np.floor(u / b.period)
        r = u - k * b.period
        return (u > 0) & (k < b.periods) & (r < b.low_length)

    def eps(self, y, z):
        y, z = np.broadcast_arrays(np.asarray(y, float), np.asarray(z, float))
        s = self.spec
        core = np.where(self.in_trench(z), s.cladding.permittivity, s.core.permittivity)
        return np.where(y < -s.core_thickness, s.substrate.permittivity,
                        np.where(y < 0, core, s.cladding.permittivity))

    def cladding_eps(self) -> float:
        return self.spec.cladding.permittivity


@dataclass(frozen=True)
class MirroredStructure(Structure):
    """Left-right flip about z = 0."""

    base: Structure
    name: str = "mirrored"

    def eps(self, y, z):
        return self.base.eps(y, -np.asarray(z, float))

    def cladding_eps(self) -> float:
        return self.base.cladding_eps()


def slab_effective_index(spec: WaveguideSpec, wavelength: Optional[float] = None) -> float:
    lam = spec.wavelength if wavelength is None else wavelength
    return solve_slab_mode_1d(spec.substrate.refractive_index, spec.core.refractive_index,
                              spec.cladding.refractive_index, spec.core_thickness, lam).effective_index


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

@dataclass
class YeeGrid:
    config: FdtdConfig
    y: np.ndarray
    z: np.ndarray
    eps: np.ndarray
    inner: tuple  # (j0, j1, k0, k1) inclusive bounds of the non-PML region

    @property
    def shape(self):
        return self.eps.shape

    def index_y(self, y: float) -> int:
        return int(round((y - self.y[0]) / self.config.spacing))

    def index_z(self, z: float) -> int:
        return int(round((z - self.z[0]) / self.config.spacing))

    def in_interior(self, y: float, z: float) -> bool:
        j0, j1, k0, k1 = self.inner
        h = self.config.spacing
        return (self.y[j0] - 1e-9 * h <= y <= self.y[j1] + 1e-9 * h and
                self.z[k0] - 1e-9 * h <= z <= self.z[k1] + 1e-9 * h)


def _axis(center: float, extent: float, h: float, pml: int) -> np.ndarray:
    half = int(round(extent / (2 * h)))
    n = half + pml + 1
    return center + np.arange(-n, n + 1) * h


def rasterize(structure: Structure, config: FdtdConfig) -> YeeGrid:
    """Ex-node permittivity averaged over each node's cell by sub-sampling."""
    h = config.spacing
    y = _axis(config.y_center, config.y_extent, h, config.pml_cells)
    z = _axis(config.z_center, config.z_extent, h, config.pml_cells)
    s = config.subpixel
    off = (np.arange(s) + 0.5) / s - 0.5
    eps = np.zeros((y.size, z.size))
    for dy in off:
        for dz in off:
            eps += structure.eps((y + dy * h)[:, None], (z + dz * h)[None, :])
    eps /= s * s
    p = config.pml_cells + 1
    inner = (p, y.size - 1 - p, p, z.size - 1 - p)
    return YeeGrid(config, y, z, eps, inner)


# ---------------------------------------------------------------------------
# CPML coefficients and update kernels
# ---------------------------------------------------------------------------

def _cpml_profile(n: int, pml: int, h: float, dtau: float, order: int, reflection: float,
                  k0: float, staggered: bool):
    """b, a, 1/kappa along one axis; ``staggered`` gives the values at half-integer positions."""
    thick = pml * h
    sigma_max = -(order + 1) * math.log(reflection) / (2 * thick)
    alpha_max = 0.05 * k0
    pos = np.arange(n) + (0.5 if staggered else 0.0)
    # depth into the PML, measured from its inner edge at node pml (and n-1-pml)
    depth = np.maximum.reduce([(pml + 1 - pos) * h, (pos - (n - 2 - pml)) * h, np.zeros(n)])
    depth = np.minimum(depth, thick) / thick
    sigma = sigma_max * depth ** order
    alpha = alpha_max * (1 - depth)
    kappa = np.ones(n)
    b = np.exp(-(sigma / kappa + alpha) * dtau)
    denom = sigma * kappa + kappa ** 2 * alpha
    a = np.where(sigma > 0, sigma / np.where(denom > 0, denom, 1.0) * (b - 1), 0.0)
    b = np.where(sigma > 0, b, 0.0)
    return b, a, 1.0 / kappa


@njit(cache=True, fastmath=True)
def _update_h(ex, hy, hz, psi_hy, psi_hz, s, bz, az, kz, by, ay, ky):
    ny, nz = ex.shape
    for j in range(ny):
        for k in range(nz - 1):
            d = ex[j, k + 1] - ex[j, k]
            psi_hy[j, k] = bz[k] * psi_hy[j, k] + az[k] * d
            hy[j, k] -= s * (d * kz[k] + psi_hy[j, k])
    for j in range(ny - 1):
        for k in range(nz):
            d = ex[j + 1, k] - ex[j, k]
            psi_hz[j, k] = by[j] * psi_hz[j, k] + ay[j] * d
            hz[j, k] += s * (d * ky[j] + psi_hz[j, k])


@njit(cache=True, fastmath=True)
def _update_e(ex, hy, hz, psi_ey, psi_ez, inv_eps, s, by, ay, ky, bz, az, kz):
    ny, nz = ex.shape
    for j in range(1, ny - 1):
        for k in range(1, nz - 1):
            dy = hz[j, k] - hz[j - 1, k]
            dz = hy[j, k] - hy[j, k - 1]
            psi_ey[j, k] = by[j] * psi_ey[j, k] + ay[j] * dy
            psi_ez[j, k] = bz[k] * psi_ez[j, k] + az[k] * dz
            ex[j, k] += s * inv_eps[j, k] * (dy * ky[j] + psi_ey[j, k] - dz * kz[k] - psi_ez[j, k])


@njit(cache=True)
def _energy(ex, hy, hz, eps):
    w = 0.0
    ny, nz = ex.shape
    for j in range(ny):
        for k in range(nz):
            w += eps[j, k] * ex[j, k] * ex[j, k]
    for j in range(ny):
        for k in range(nz - 1):
            w += hy[j, k] * hy[j, k]
    for j in range(ny - 1):
        for k in range(nz):
            w += hz[j, k] * hz[j, k]
    return 0.5 * w


# ---------------------------------------------------------------------------
# monitors
# ---------------------------------------------------------------------------

class _LineRecorder:
    """Running DFT of Ex and the co-located tangential H along one monitor line."""

    def __init__(self, monitor: FluxMonitor, grid: YeeGrid, ks: np.ndarray, dtau: float):
        self.monitor = monitor
        h = grid.config.spacing
        if monitor.normal == "z":
            ends = [(monitor.start, monitor.position), (monitor.end, monitor.position)]
        else:
            ends = [(monitor.position, monitor.start), (monitor.position, monitor.end)]
        for y, z in ends:
            if not grid.in_interior(y, z):
                raise FdtdConfigError(f"monitor {monitor.name!r} reaches into the PML")
        if monitor.normal == "z":
            self.k = grid.index_z(monitor.position)
            self.j0, self.j1 = grid.index_y(monitor.start), grid.index_y(monitor.end)
            coords = grid.y[self.j0:self.j1 + 1]
        else:
            self.j = grid.index_y(monitor.position)
            self.k0, self.k1 = grid.index_z(monitor.start), grid.index_z(monitor.end)
            coords = grid.z[self.k0:self.k1 + 1]
        self.coords = coords
        self.weights = np.full(coords.size, h)
        self.weights[[0, -1]] = h / 2
        self.ks = ks
        self.dtau = dtau
        self.e_dft = np.zeros((ks.size, coords.size), complex)
        self.h_dft = np.zeros((ks.size, coords.size), complex)
        self.series = []

    def fields(self, ex, hy, hz):
        if self.monitor.normal == "z":
            e = ex[self.j0:self.j1 + 1, self.k]
            hh = 0.5 * (hy[self.j0:self.j1 + 1, self.k - 1] + hy[self.j0:self.j1 + 1, self.k])
        else:
            e = ex[self.j, self.k0:self.k1 + 1]
            hh = 0.5 * (hz[self.j - 1, self.k0:self.k1 + 1] + hz[self.j, self.k0:self.k1 + 1])
        return e, hh

    def accumulate(self, n: int, ex, hy, hz, record: bool):
        e, hh = self.fields(ex, hy, hz)
        pe = np.exp(-1j * self.ks * n * self.dtau)[:, None]
        ph = np.exp(-1j * self.ks * (n + 0.5) * self.dtau)[:, None]
        self.e_dft += pe * e[None, :]
        self.h_dft += ph * hh[None, :]
        if record:
            self.series.append(self.sign_factor() * float(np.sum(e * hh * self.weights)))

    def sign_factor(self) -> float:
        # S_z = Ex Hy, S_y = -Ex Hz
        return self.monitor.sign * (1.0 if self.monitor.normal == "z" else -1.0)

    def flux(self, i: int = 0) -> float:
        return self.sign_factor() * 0.5 * float(
            np.real(np.sum(self.e_dft[i] * np.conj(self.h_dft[i]) * self.weights)))


def _mode_amplitudes(rec: _LineRecorder, grid: YeeGrid, i: int, wavelength: float):
    """Forward/backward power of the fundamental slab mode crossing a vertical monitor."""
    eps_col = grid.eps[rec.j0:rec.j1 + 1, rec.k]
    mode = slab_mode_fd(eps_col, grid.config.spacing, wavelength, rec.coords)
    e = mode.profile / math.sqrt(np.sum(mode.profile ** 2 * rec.weights))
    n = mode.effective_index
    p = np.sum(rec.e_dft[i] * e * rec.weights)
    q = np.sum(rec.h_dft[i] * e * rec.weights) / n
    a_fwd, a_bwd = (p + q) / 2, (p - q) / 2
    return 0.5 * n * abs(a_fwd) ** 2, 0.5 * n * abs(a_bwd) ** 2, n


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class PowerReport:
    structure: str
    wavelength: float
    total_power: float
    box_powers: dict
    fluxes: dict
    guided_left: Optional[float]
    guided_right: Optional[float]
    reflected_left: Optional[float] = None
    reflected_right: Optional[float] = None
    slab_index: Optional[float] = None
    homogeneous_power: Optional[float] = None
    source_spectrum: float = 1.0
    steps: int = 0
    energy_history: list = field(default_factory=list)
    spectra: dict = field(default_factory=dict)
    flux_series: dict = field(default_factory=dict)
    series_dtau: float = 0.0
    snapshot: Optional["FieldSnapshot"] = None
    bragg: Optional[BraggSpec] = None

    @property
    def purcell_ratio(self) -> float:
        return self.total_power / self.homogeneous_power

    @property
    def scattered_power(self) -> Optional[float]:
        if self.guided_left is None:
            return None
        return self.total_power - self.guided_left - self.guided_right

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("flux_series", "energy_history", "snapshot")}
        d["scattered_power"] = self.scattered_power
        if self.homogeneous_power:
            d["purcell_ratio"] = self.purcell_ratio
        d["energy_history"] = [list(map(float, e)) for e in self.energy_history]
        return d

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def write_flux_csv(self, path) -> None:
        names = sorted(self.flux_series)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ct_m"] + names)
            n = min(len(self.flux_series[k]) for k in names)
            for i in range(n):
                w.writerow([f"{i * self.series_dtau:.12g}"] +
                           [f"{self.flux_series[k][i]:.12g}" for k in names])


@dataclass
class FieldSnapshot:
    y: np.ndarray
    z: np.ndarray
    ex: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y_m", "z_m", "Ex"])
            for j, y in enumerate(self.y):
                for k, z in enumerate(self.z):
                    w.writerow([f"{y:.12g}", f"{z:.12g}", f"{self.ex[j, k]:.12g}"])


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def _monitors(config: FdtdConfig, guided: bool) -> list:
    mons = []
    for i, half in enumerate(config.box_half_sizes):
        mons += box_monitors(f"box{i}", (config.source_y, config.source_z), half)
    if guided:
        j_half = config.y_extent / 2
        lo, hi = config.y_center - j_half, config.y_center + j_half
        zc = config.source_z
        mons.append(FluxMonitor("guide_right", "z", zc + config.guided_monitor_offset, lo, hi, +1))
        mons.append(FluxMonitor("guide_left", "z", zc - config.guided_monitor_offset, lo, hi, -1))
    return mons


def simulate(config: FdtdConfig, structure: Structure, guided: bool = True,
             snapshot: bool = False) -> PowerReport:
    """One time-domain run; stops once the field energy has decayed below threshold.

    ``snapshot`` keeps Ex as it stands when the source switches off.
    """
    grid = rasterize(structure, config)
    h = config.spacing
    s = config.courant
    dtau = s * h
    ny, nz = grid.shape
    if not grid.in_interior(config.source_y, config.source_z):
        raise FdtdConfigError("source lies outside the non-PML region")
    js, ks_ = grid.index_y(config.source_y), grid.index_z(config.source_z)
    if abs(grid.y[js] - config.source_y) > 1e-6 * h or abs(grid.z[ks_] - config.source_z) > 1e-6 * h:
        raise FdtdConfigError("source must sit on a grid node")

    k_pulse = config.pulse.k0
    prof = dict(pml=config.pml_cells, h=h, dtau=dtau, order=config.pml_order,
                reflection=config.pml_reflection, k0=k_pulse)
    by_e, ay_e, ky_e = _cpml_profile(ny, staggered=False, **prof)
    bz_e, az_e, kz_e = _cpml_profile(nz, staggered=False, **prof)
    by_h, ay_h, ky_h = _cpml_profile(ny, staggered=True, **prof)
    bz_h, az_h, kz_h = _cpml_profile(nz, staggered=True, **prof)

    ex = np.zeros((ny, nz))
    hy = np.zeros((ny, nz - 1))
    hz = np.zeros((ny - 1, nz))
    psi_hy = np.zeros_like(hy)
    psi_hz = np.zeros_like(hz)
    psi_ey = np.zeros_like(ex)
    psi_ez = np.zeros_like(ex)
    inv_eps = 1.0 / grid.eps

    ks = np.array(config.frequencies)
    recorders = [_LineRecorder(m, grid, ks, dtau) for m in _monitors(config, guided)]
    src_dft = np.zeros(ks.size, complex)

    pulse = config.pulse
    off_step = int(math.ceil(pulse.off_time / dtau))
    w_max = 0.0
    w_prev = None
    history = []
    captured = None
    n = 0
    for n in range(config.max_steps):
        _update_h(ex, hy, hz, psi_hy, psi_hz, s, bz_h, az_h, kz_h, by_h, ay_h, ky_h)
        record = n % config.record_every == 0
        for r in recorders:
            r.accumulate(n, ex, hy, hz, record)
        _update_e(ex, hy, hz, psi_ey, psi_ez, inv_eps, s, by_e, ay_e, ky_e, bz_e, az_e, kz_e)
        if n <= off_step:
            j_src = pulse.value((n + 0.5) * dtau)
            ex[js, ks_] -= s * inv_eps[js, ks_] * j_src
            src_dft += j_src * np.exp(-1j * ks * (n + 0.5) * dtau)
        elif snapshot and captured is None:
            captured = ex.copy()
        if n % 100 == 0:
            w = _energy(ex, hy, hz, grid.eps)
            if not math.isfinite(w):
                raise InstabilityError(f"non-finite field energy at step {n}")
            history.append((n, w))
            w_max = max(w_max, w)
            if n > off_step:
                # growth beyond roundoff; the absolute term ignores the ~1e-15 noise floor
                if w_prev is not None and w > w_prev * (1 + 1e-9) + 1e-12 * w_max:
                    raise InstabilityError(
                        f"field energy grew from {w_prev:.6g} to {w:.6g} at step {n} after source turn-off")
                w_prev = w
                if w < config.decay_threshold * w_max:
                    break
    else:
        raise InstabilityError(f"energy did not decay below threshold within {config.max_steps} steps")

    norm = np.abs(src_dft) ** 2
    fluxes = {r.monitor.name: r.flux(0) / norm[0] for r in recorders}
    boxes = {}
    for i in range(len(config.box_half_sizes)):
        boxes[config.box_half_sizes[i]] = sum(
            v for k, v in fluxes.items() if k.startswith(f"box{i}_"))
    total = boxes[config.box_half_sizes[0]]

    spectra = {}
    for i, k in enumerate(ks):
        spectra[float(2 * np.pi / k)] = {
            "total_power": sum(r.flux(i) for r in recorders
                               if r.monitor.name.startswith("box0_")) / norm[i]}

    gl = gr = rl = rr = n_slab = None
    if guided:
        rec = {r.monitor.name: r for r in recorders}
        for i, k in enumerate(ks):
            lam = 2 * np.pi / k
            try:
                fwd_r, bwd_r, n_slab_i = _mode_amplitudes(rec["guide_right"], grid, i, lam)
                fwd_l, bwd_l, _ = _mode_amplitudes(rec["guide_left"], grid, i, lam)
            except CutoffError:
                fwd_r = bwd_r = fwd_l = bwd_l = 0.0
                n_slab_i = None
            entry = spectra[float(lam)]
            entry.update(guided_right=fwd_r / norm[i], guided_left=bwd_l / norm[i],
                         reflected_right=bwd_r / norm[i], reflected_left=fwd_l / norm[i])
            if i == 0:
                gr, gl, rr, rl, n_slab = (fwd_r / norm[0], bwd_l / norm[0], bwd_r / norm[0],
                                          fwd_l / norm[0], n_slab_i)

    report = PowerReport(
        structure=structure.name,
        wavelength=pulse.wavelength,
        total_power=total,
        box_powers=boxes,
        fluxes=fluxes,
        guided_left=gl,
        guided_right=gr,
        reflected_left=rl,
        reflected_right=rr,
        slab_index=n_slab,
        source_spectrum=float(norm[0]),
        steps=n + 1,
        energy_history=history,
        spectra=spectra,
        flux_series={r.monitor.name: r.series for r in recorders},
        series_dtau=dtau * config.record_every,
    )
    if snapshot:
        report.snapshot = FieldSnapshot(grid.y, grid.z, ex.copy() if captured is None else captured)
    return report


@lru_cache(maxsize=32)
def _homogeneous_power(config: FdtdConfig, permittivity: float) -> float:
    return simulate(config, HomogeneousStructure(permittivity), guided=False).total_power


def run_dipole_sim(config: FdtdConfig, structure: Structure, reference: bool = True,
                   snapshot: bool = False) -> PowerReport:
    """Dipole run plus, when ``reference``, the same run in homogeneous cladding (P_hom)."""
    report = simulate(config, structure, guided=not isinstance(structure, HomogeneousStructure),
                      snapshot=snapshot)
    if reference:
        report.homogeneous_power = _homogeneous_power(config, structure.cladding_eps())
    return report


def guided_fraction_fdtd(report: PowerReport) -> dict:
    if report.guided_left is None:
        raise ValueError("report has no guided-power monitors")
    out = {
        "left": report.guided_left / report.total_power,
        "right": report.guided_right / report.total_power,
    }
    out["total"] = out["left"] + out["right"]
    if report.homogeneous_power:
        ph = report.homogeneous_power
        out.update(left_vs_homogeneous=report.guided_left / ph,
                   right_vs_homogeneous=report.guided_right / ph,
                   total_vs_homogeneous=(report.guided_left + report.guided_right) / ph)
    return out


def bragg_config(config: FdtdConfig, spec: WaveguideSpec, bragg: BraggSpec) -> FdtdConfig:
    """Place the source in the right-most trench and widen the window to the left of the stack."""
    y, z = bragg.emitter_position(spec)
    left_needed = bragg.length + bragg.emitter_gap + 0.6e-6
    offset = max(config.guided_monitor_offset, left_needed)
    z_lo = z - offset - 0.3e-6
    z_hi = z + offset + 0.3e-6
    return replace(config, source_y=y, source_z=z, guided_monitor_offset=offset,
                   z_center=(z_lo + z_hi) / 2, z_extent=z_hi - z_lo)


def run_bragg_sim(config: FdtdConfig, spec: WaveguideSpec, bragg: BraggSpec,
                  reference: bool = False, snapshot: bool = False) -> PowerReport:
    cfg = bragg_config(config, spec, bragg)
    report = run_dipole_sim(cfg, BraggStructure(spec, bragg), reference=reference, snapshot=snapshot)
    report.bragg = bragg
    return report


def directionality(report: PowerReport) -> float:
    return report.guided_right / (report.guided_left + report.guided_right)


def purcell_scan(config: FdtdConfig, structure: Structure, positions: Sequence[tuple]) -> list:
    """P_tot / P_hom for each (y, z) emitter position, one run (plus reference) per row."""
    rows = []
    for y, z in positions:
        rep = run_dipole_sim(config.with_source(y, z), structure)
        rows.append({"y": y, "z": z, "total_power": rep.total_power,
                     "homogeneous_power": rep.homogeneous_power,
                     "purcell_ratio": rep.purcell_ratio})
    return rows


def write_rows_csv(rows: list, path) -> None:
    if not rows:
        raise ValueError("nothing to write")
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for r in rows:
            w.writerow([f"{r[k]:.12g}" if isinstance(r[k], float) else r[k] for k in keys])
