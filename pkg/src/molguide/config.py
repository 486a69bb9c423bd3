"""One YAML (or JSON) config format shared by every subcommand.

Top-level sections map onto dataclass constructors; any key that is not a
known field raises ``ConfigError``. Lengths are given in nanometres (keys end
in ``_nm``) and converted to metres when the physics objects are built.
Numeric strings such as ``1e3`` (which YAML 1.1 leaves as text) are accepted
for float fields.
"""

from __future__ import annotations

import hashlib
from math import pi
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import yaml

from .circuits import SourceSpec
from .coupling import DEFAULT_RATE_CORRECTION, EmitterParams
from .fdtd import BraggSpec, FdtdConfig, GaussianPulse
from .materials import EmitterPosition, Grid2D, WaveguideSpec, get_material
from .nonlinear import NonlinearParams


class ConfigError(ValueError):
    pass


NM = 1e-9


def _m(v):
    return None if v is None else v * NM


@dataclass(frozen=True)
class GeometrySection:
    core: str = "si3n4"
    substrate: str = "silica"
    cladding: str = "n-hexadecane"
    core_thickness_nm: float = 120.0
    core_width_nm: float = 600.0
    wavelength_nm: float = 785.0
    slot_gap_nm: Optional[float] = None

    def build(self) -> WaveguideSpec:
        return WaveguideSpec(get_material(self.core), get_material(self.substrate),
                             get_material(self.cladding), _m(self.core_thickness_nm),
                             _m(self.core_width_nm), _m(self.wavelength_nm), _m(self.slot_gap_nm))


@dataclass(frozen=True)
class EmitterSection:
    lateral_offset_nm: float = 0.0
    vertical_standoff_nm: float = 20.0
    in_slot: bool = False
    depth_nm: Optional[float] = None
    orientation: tuple = (1.0, 0.0, 0.0)
    gamma_total: float = 2 * pi * 30e6
    eta: float = 0.5
    dipole: Optional[float] = None

    def position(self) -> EmitterPosition:
        return EmitterPosition(_m(self.lateral_offset_nm), _m(self.vertical_standoff_nm),
                               self.in_slot, _m(self.depth_nm))

    def params(self, wavelength: float) -> EmitterParams:
        return EmitterParams(self.gamma_total, self.eta, tuple(self.orientation), wavelength, self.dipole)


@dataclass(frozen=True)
class GridSection:
    spacing_nm: float = 10.0
    x_extent_nm: float = 3000.0
    y_extent_nm: float = 2000.0

    def build(self, spec: WaveguideSpec) -> Grid2D:
        return Grid2D.for_spec(spec, _m(self.spacing_nm), _m(self.x_extent_nm), _m(self.y_extent_nm))


@dataclass(frozen=True)
class ModesSection:
    group_velocity: bool = True
    group_velocity_step: float = 5e-3


@dataclass(frozen=True)
class CouplingSection:
    """Mode area and group index used when not chained from the mode solver."""

    area_over_lambda2: float = 0.42
    group_index: Optional[float] = None  # None: the cladding index, i.e. v_g = c/n
    total_rate_correction: float = DEFAULT_RATE_CORRECTION


@dataclass(frozen=True)
class NonlinearSection:
    gamma: float = 2 * pi * 30e6
    eta: float = 0.5
    gamma_wg_fraction: float = 0.5
    photon_numbers: tuple = (1, 2)
    delta_range: tuple = (-3.0, 3.0)
    samples: int = 601

    def params(self) -> NonlinearParams:
        return NonlinearParams(self.gamma, self.eta, self.gamma_wg_fraction,
                               tuple(int(m) for m in self.photon_numbers))


@dataclass(frozen=True)
class FdtdSection:
    structure: str = "slab"
    spacing_nm: float = 10.0
    courant: float = 0.5
    z_extent_nm: float = 6000.0
    y_extent_nm: float = 3000.0
    pml_cells: int = 12
    pml_reflection: float = 1e-6
    decay_threshold: float = 1e-6
    fractional_bandwidth: float = 0.1
    source_standoff_nm: float = 20.0
    source_z_nm: float = 0.0
    detuning: float = 0.0
    box_half_sizes_nm: tuple = (500.0, 900.0)
    guided_monitor_offset_nm: float = 2400.0
    max_steps: int = 400_000

    def build(self, spec: WaveguideSpec) -> FdtdConfig:
        if self.structure not in ("slab", "homogeneous"):
            raise ConfigError("fdtd.structure must be 'slab' or 'homogeneous'")
        pulse = GaussianPulse(spec.wavelength, self.fractional_bandwidth).detuned(self.detuning)
        return FdtdConfig(
            spacing=_m(self.spacing_nm), courant=self.courant, z_extent=_m(self.z_extent_nm),
            y_extent=_m(self.y_extent_nm), y_center=-spec.core_thickness / 2,
            pml_cells=self.pml_cells, pml_reflection=self.pml_reflection,
            source_y=_m(self.source_standoff_nm), source_z=_m(self.source_z_nm), pulse=pulse,
            decay_threshold=self.decay_threshold, max_steps=self.max_steps,
            box_half_sizes=tuple(_m(v) for v in self.box_half_sizes_nm),
            guided_monitor_offset=_m(self.guided_monitor_offset_nm),
        )


@dataclass(frozen=True)
class BraggSection:
    periods: int = 6
    emitter_gap_nm: float = 20.0
    design_wavelength_nm: Optional[float] = None

    def build(self, spec: WaveguideSpec, periods: Optional[int] = None) -> BraggSpec:
        p = self.periods if periods is None else periods
        gap = _m(self.emitter_gap_nm)
        if p == 0:
            return BraggSpec(0, emitter_gap=gap)
        return BraggSpec.quarter_wave(spec, p, _m(self.design_wavelength_nm), emitter_gap=gap)


@dataclass(frozen=True)
class SourceSection:
    frequency: float = 0.0
    linewidth: float = 2 * pi * 30e6
    eta: float = 0.5
    stark_offset: float = 0.0

    def build(self) -> SourceSpec:
        return SourceSpec(self.frequency, self.linewidth, self.eta, self.stark_offset)


@dataclass(frozen=True)
class HomSection:
    source1: SourceSection = SourceSection()
    source2: SourceSection = SourceSection()
    scan_max_over_gamma: float = 5.0
    scan_samples: int = 201


@dataclass(frozen=True)
class MzgateSection:
    delta_over_gamma: float = 0.449
    pump: bool = False
    probe: SourceSection = SourceSection()
    scan_samples: int = 201


@dataclass(frozen=True)
class CircuitSection:
    """Free-form circuit: ``elements`` is a list of mappings with a ``type`` key."""

    modes: int = 2
    input: tuple = (1, 1)
    elements: tuple = ()


@dataclass(frozen=True)
class RunConfig:
    geometry: GeometrySection = GeometrySection()
    emitter: EmitterSection = EmitterSection()
    grid: GridSection = GridSection()
    modes: ModesSection = ModesSection()
    coupling: CouplingSection = CouplingSection()
    nonlinear: NonlinearSection = NonlinearSection()
    fdtd: FdtdSection = FdtdSection()
    bragg: BraggSection = BraggSection()
    hom: HomSection = HomSection()
    mzgate: MzgateSection = MzgateSection()
    circuit: CircuitSection = CircuitSection()


def _coerce(value, default, where: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or float(value) != int(float(value)):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(float(value))
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return tuple(float(v) if isinstance(v, str) else v for v in value)
    if isinstance(default, float) or default is None:
        if isinstance(value, bool):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                raise ConfigError(f"{where}: expected a number, got {value!r}") from None
    return value


def _build(cls, data, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}; allowed: {sorted(known)}")
    defaults = cls()
    kwargs = {}
    for key, value in data.items():
        default = getattr(defaults, key)
        if hasattr(default, "__dataclass_fields__"):
            kwargs[key] = _build(type(default), value, f"{where}.{key}")
        else:
            try:
                kwargs[key] = _coerce(value, default, f"{where}.{key}")
            except (TypeError, ValueError) as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"{where}.{key}: {exc}") from None
    return cls(**kwargs)


def parse_config(data) -> RunConfig:
    return _build(RunConfig, data or {}, "config")


def load_config(path) -> tuple[RunConfig, str]:
    """Parse ``path`` and return the config together with the sha256 of its bytes."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    digest = hashlib.sha256(raw).hexdigest()
    try:
        data = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return parse_config(data), digest
