"""Materials, strip/slot cross-sections, emitter placement and rasterization.

Coordinates follow one convention everywhere: the strip is centred at x = 0
and the top surface of the core sits at y = 0, so the core occupies
``-core_thickness <= y <= 0``. The substrate fills ``y < -core_thickness`` and
the cladding (the molecular matrix) fills everything else, including the slot.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np


class GeometryError(ValueError):
    """Raised for inconsistent waveguide, emitter or grid definitions."""


@dataclass(frozen=True)
class Material:
    name: str
    refractive_index: float

    def __post_init__(self):
        if not self.refractive_index > 0:
            raise GeometryError(f"refractive index of {self.name!r} must be positive")

    @property
    def permittivity(self) -> float:
        return self.refractive_index ** 2


SI3N4 = Material("Si3N4", 2.0)
SILICA = Material("silica", 1.445)
HEXADECANE = Material("n-hexadecane", 1.434)
MMA = Material("MMA", 1.42)

MATERIALS = {
    "si3n4": SI3N4,
    "silica": SILICA,
    "n-hexadecane": HEXADECANE,
    "hexadecane": HEXADECANE,
    "mma": MMA,
}


def get_material(name_or_index) -> Material:
    """Look up a built-in material by name, or wrap a bare refractive index."""
    if isinstance(name_or_index, Material):
        return name_or_index
    if isinstance(name_or_index, (int, float)):
        return Material(f"n={name_or_index:g}", float(name_or_index))
    key = str(name_or_index).strip().lower()
    try:
        return MATERIALS[key]
    except KeyError:
        raise GeometryError(
            f"unknown material {name_or_index!r}; known: {sorted(MATERIALS)}"
        ) from None


@dataclass(frozen=True)
class WaveguideSpec:
    core: Material = SI3N4
    substrate: Material = SILICA
    cladding: Material = HEXADECANE
    core_thickness: float = 120e-9
    core_width: float = 600e-9
    wavelength: float = 785e-9
    slot_gap: Optional[float] = None

    def __post_init__(self):
        for name in ("core_thickness", "core_width", "wavelength"):
            if not getattr(self, name) > 0:
                raise GeometryError(f"{name} must be positive")
        if self.slot_gap is not None:
            if not 0 < self.slot_gap < self.core_width:
                raise GeometryError("slot_gap must lie strictly between 0 and core_width")

    @property
    def is_guiding(self) -> bool:
        n = self.core.refractive_index
        return n > self.substrate.refractive_index and n > self.cladding.refractive_index

    @property
    def max_outer_index(self) -> float:
        return max(self.substrate.refractive_index, self.cladding.refractive_index)

    def with_wavelength(self, wavelength: float) -> "WaveguideSpec":
        return replace(self, wavelength=wavelength)

    def sample_permittivity(self, x, y, tol: float = 1e-15) -> np.ndarray:
        """Relative permittivity at points (x, y).

        Points on an interface (within ``tol``) take the lower-index material.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        t = self.core_thickness
        ax = np.abs(x)
        half_w = self.core_width / 2

        core_closed = (ax <= half_w + tol) & (y >= -t - tol) & (y <= tol)
        inside_w = ax < half_w - tol
        if self.slot_gap is not None:
            half_g = self.slot_gap / 2
            core_closed &= ax >= half_g - tol
            inside_w &= ax > half_g + tol
        core_open = inside_w & (y > -t + tol) & (y < -tol)
        # the core's bottom face touches only core and substrate
        bottom_face = inside_w & (np.abs(y + t) <= tol)
        sub_closed = y <= -t + tol
        clad_closed = (y >= -t - tol) & ~core_open & ~bottom_face

        eps = np.full(x.shape, np.inf)
        for region, mat in (
            (core_closed, self.core),
            (sub_closed, self.substrate),
            (clad_closed, self.cladding),
        ):
            eps = np.where(region, np.minimum(eps, mat.permittivity), eps)
        return eps


def standard_strip(slot_gap: Optional[float] = None, cladding: Material = HEXADECANE) -> WaveguideSpec:
    """The 120 nm x 600 nm Si3N4 strip on silica at 785 nm."""
    return WaveguideSpec(cladding=cladding, slot_gap=slot_gap)


def standard_slot() -> WaveguideSpec:
    return standard_strip(slot_gap=40e-9)


@dataclass(frozen=True)
class EmitterPosition:
    """Where the molecule sits.

    Above-surface emitters use ``lateral_offset`` and ``vertical_standoff``.
    With ``in_slot`` the emitter sits inside the gap at ``lateral_offset`` from
    the slot centre and ``depth`` below the core top (default: mid-height).
    """

    lateral_offset: float = 0.0
    vertical_standoff: float = 20e-9
    in_slot: bool = False
    depth: Optional[float] = None

    def __post_init__(self):
        if not self.in_slot and self.vertical_standoff < 0:
            raise GeometryError("vertical_standoff must be >= 0 for above-surface emitters")


@dataclass(frozen=True)
class EmitterLocation:
    x: float
    y: float
    permittivity: float


def locate_emitter(spec: WaveguideSpec, pos: EmitterPosition) -> EmitterLocation:
    if pos.in_slot:
        if spec.slot_gap is None:
            raise GeometryError("in_slot emitter requires a waveguide with slot_gap")
        depth = spec.core_thickness / 2 if pos.depth is None else pos.depth
        if abs(pos.lateral_offset) > spec.slot_gap / 2 or not 0 <= depth <= spec.core_thickness:
            raise GeometryError("in-slot emitter lies outside the gap")
        x, y = pos.lateral_offset, -depth
        # slot is filled with cladding, and its walls resolve to cladding too
        return EmitterLocation(x, y, spec.cladding.permittivity)
    x, y = pos.lateral_offset, pos.vertical_standoff
    return EmitterLocation(x, y, float(spec.sample_permittivity(x, y)))


@dataclass(frozen=True)
class Grid2D:
    """Cross-section window, strip centred at x = 0.

    The window is centred vertically on ``y_center``; ``Grid2D.for_spec``
    puts that at the core mid-plane so horizontal interfaces fall midway
    between sample rows.
    """

    x_extent: float = 3e-6
    y_extent: float = 2e-6
    spacing: float = 10e-9
    y_center: float = -60e-9

    def __post_init__(self):
        if not (self.spacing > 0 and self.x_extent > 0 and self.y_extent > 0):
            raise GeometryError("grid spacing and extents must be positive")

    @classmethod
    def for_spec(cls, spec: WaveguideSpec, spacing: float = 10e-9,
                 x_extent: float = 3e-6, y_extent: float = 2e-6) -> "Grid2D":
        return cls(x_extent, y_extent, spacing, -spec.core_thickness / 2)

    def scaled(self, factor: float) -> "Grid2D":
        return replace(self, x_extent=self.x_extent * factor, y_extent=self.y_extent * factor)

    def refined(self, factor: int = 2) -> "Grid2D":
        return replace(self, spacing=self.spacing / factor)

    @property
    def nx(self) -> int:
        """Number of x nodes (odd, so that x = 0 is a node)."""
        return 2 * int(round(self.x_extent / (2 * self.spacing))) + 1

    @property
    def ny(self) -> int:
        """Number of y rows (even, so that y_center falls between rows)."""
        return 2 * max(1, int(round(self.y_extent / (2 * self.spacing))))

    @property
    def x_nodes(self) -> np.ndarray:
        return (np.arange(self.nx) - (self.nx - 1) / 2) * self.spacing

    @property
    def x_half(self) -> np.ndarray:
        return self.x_nodes[:-1] + self.spacing / 2

    @property
    def y_rows(self) -> np.ndarray:
        return self.y_center + (np.arange(self.ny) - (self.ny - 1) / 2) * self.spacing

    @property
    def y_between(self) -> np.ndarray:
        return self.y_rows[:-1] + self.spacing / 2

    def check_covers(self, spec: WaveguideSpec) -> None:
        h = self.spacing
        x_lo, x_hi = self.x_nodes[0], self.x_nodes[-1]
        y_lo, y_hi = self.y_rows[0], self.y_rows[-1]
        half_w = spec.core_width / 2
        if x_lo > -half_w or x_hi < half_w or y_lo > -spec.core_thickness or y_hi < 0:
            raise GeometryError(
                f"grid window x[{x_lo:.3g}, {x_hi:.3g}] y[{y_lo:.3g}, {y_hi:.3g}] m "
                f"does not contain the {spec.core_width:.3g} x {spec.core_thickness:.3g} m core"
            )
        margin = min(x_hi - half_w, -half_w - x_lo, y_hi, -spec.core_thickness - y_lo)
        if margin < spec.wavelength - h:
            raise GeometryError(
                f"grid leaves only {margin:.3g} m around the core; need at least one "
                f"wavelength ({spec.wavelength:.3g} m)"
            )
        if spec.slot_gap is not None and spec.slot_gap < 2 * h:
            raise GeometryError("grid spacing too coarse to resolve the slot")


def permittivity_map(spec: WaveguideSpec, grid: Grid2D) -> np.ndarray:
    """Cell-centre sampled permittivity, shape (nx, ny), indexed [x, y]."""
    grid.check_covers(spec)
    X, Y = np.meshgrid(grid.x_nodes, grid.y_rows, indexing="ij")
    return spec.sample_permittivity(X, Y, tol=1e-6 * grid.spacing)
