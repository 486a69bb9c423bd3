"""Full-vector finite-difference eigenmodes of the waveguide cross-section.

The transverse electric field is sampled on a Yee-staggered grid:

* ``Ex`` at (x half-points, y rows)      shape (nx - 1, ny)
* ``Ey`` at (x nodes, y between-rows)    shape (nx, ny - 1)
* ``Ez`` at (x nodes, y rows)            shape (nx, ny)

Fields carry an implicit ``exp(i beta z)`` dependence. Lengths inside the
operator are scaled by the free-space wavenumber, so eigenvalues are n_eff^2
directly. Boundaries are zero-field (Dirichlet).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.constants import c as C0
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .materials import EmitterLocation, Grid2D, WaveguideSpec

log = logging.getLogger(__name__)


class CutoffError(RuntimeError):
    """No guided mode exists for the requested structure."""


class SolverError(RuntimeError):
    """The eigensolver failed to converge."""


@dataclass(frozen=True)
class GuidedMode:
    effective_index: float
    wavelength: float
    grid: Grid2D
    ex: np.ndarray
    ey: np.ndarray
    ez: np.ndarray
    eps_x: np.ndarray = field(repr=False)
    eps_y: np.ndarray = field(repr=False)
    eps_z: np.ndarray = field(repr=False)
    residual: float = 0.0

    @property
    def propagation_constant(self) -> float:
        return 2 * np.pi / self.wavelength * self.effective_index

    @property
    def polarization(self) -> str:
        px = np.sum(np.abs(self.ex) ** 2)
        py = np.sum(np.abs(self.ey) ** 2)
        return "quasi-TE" if px >= py else "quasi-TM"

    def colocated(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All three components averaged onto the (x node, y row) grid."""
        return _colocate_ex(self.ex), _colocate_ey(self.ey), self.ez

    def field_at(self, x: float, y: float) -> np.ndarray:
        """Bilinear interpolation of (Ex, Ey, Ez) at a point."""
        g = self.grid
        return np.array([
            _interp(g.x_half, g.y_rows, self.ex, x, y),
            _interp(g.x_nodes, g.y_between, self.ey, x, y),
            _interp(g.x_nodes, g.y_rows, self.ez, x, y),
        ])

    def boundary_ratio(self) -> float:
        """Largest |E| component on the outermost samples relative to the peak."""
        peak = max(np.abs(a).max() for a in (self.ex, self.ey, self.ez))
        edge = max(
            max(np.abs(a[[0, -1], :]).max(), np.abs(a[:, [0, -1]]).max())
            for a in (self.ex, self.ey, self.ez)
        )
        return float(edge / peak)

    def transverse_h(self) -> tuple[np.ndarray, np.ndarray]:
        """(Z0 Hx, Z0 Hy), co-located with (Ey, Ex) respectively."""
        g = self.grid
        h = g.spacing
        beta = self.effective_index * 2 * np.pi / self.wavelength
        ez = self.ez
        dez_dy = np.diff(ez, axis=1) / h
        dez_dx = np.diff(ez, axis=0) / h
        k0 = 2 * np.pi / self.wavelength
        # curl E = i k0 (Z0 H) with d/dz -> i beta
        hx = (dez_dy - 1j * beta * self.ey) / (1j * k0)
        hy = (1j * beta * self.ex - dez_dx) / (1j * k0)
        return hx, hy

    def power(self) -> float:
        """Z0 times the z-directed power, 0.5 Re int (E x H*) . z dA."""
        hx, hy = self.transverse_h()
        h2 = self.grid.spacing ** 2
        return 0.5 * float(np.real(np.sum(self.ex * np.conj(hy)) - np.sum(self.ey * np.conj(hx))) * h2)


def mode_overlap(a: GuidedMode, b: GuidedMode) -> float:
    """Normalized cross power |int E_a x H_b* . z| / sqrt(P_a P_b)."""
    hx, hy = b.transverse_h()
    h2 = a.grid.spacing ** 2
    cross = 0.5 * (np.sum(a.ex * np.conj(hy)) - np.sum(a.ey * np.conj(hx))) * h2
    return float(abs(cross) / np.sqrt(abs(a.power() * b.power())))


def _colocate_ex(ex):
    padded = np.pad(ex, ((1, 1), (0, 0)))
    return 0.5 * (padded[1:] + padded[:-1])


def _colocate_ey(ey):
    padded = np.pad(ey, ((0, 0), (1, 1)))
    return 0.5 * (padded[:, 1:] + padded[:, :-1])


def _interp(xs, ys, arr, x, y):
    i = np.searchsorted(xs, x) - 1
    j = np.searchsorted(ys, y) - 1
    if not (0 <= i < len(xs) - 1 and 0 <= j < len(ys) - 1):
        raise ValueError(f"point ({x}, {y}) outside the field grid")
    tx = (x - xs[i]) / (xs[i + 1] - xs[i])
    ty = (y - ys[j]) / (ys[j + 1] - ys[j])
    return ((1 - tx) * (1 - ty) * arr[i, j] + tx * (1 - ty) * arr[i + 1, j]
            + (1 - tx) * ty * arr[i, j + 1] + tx * ty * arr[i + 1, j + 1])


def _fwd(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr") / h


def staggered_permittivity(spec: WaveguideSpec, grid: Grid2D):
    """(eps_x, eps_y, eps_z) sampled at the Ex, Ey, Ez locations."""
    grid.check_covers(spec)
    tol = 1e-6 * grid.spacing
    sample = lambda xs, ys: spec.sample_permittivity(*np.meshgrid(xs, ys, indexing="ij"), tol=tol)
    return (
        sample(grid.x_half, grid.y_rows),
        sample(grid.x_nodes, grid.y_between),
        sample(grid.x_nodes, grid.y_rows),
    )


def build_operator(eps_x, eps_y, eps_z, h_norm: float) -> sp.csr_matrix:
    """Sparse operator A with A [Ex; Ey] = n_eff^2 [Ex; Ey] (lengths in units of 1/k0)."""
    nx, ny = eps_z.shape
    Ix, Iy = sp.identity(nx, format="csr"), sp.identity(ny, format="csr")
    Ixh, Iyh = sp.identity(nx - 1, format="csr"), sp.identity(ny - 1, format="csr")
    fx, fy = _fwd(nx, h_norm), _fwd(ny, h_norm)

    dy_ex = sp.kron(Ixh, fy)          # Ex -> Hz grid
    dx_ey = sp.kron(fx, Iyh)          # Ey -> Hz grid
    curl = sp.hstack([-dy_ex, dx_ey])
    grad = sp.vstack([sp.kron(fx, Iy), sp.kron(Ix, fy)])  # Ez grid -> (Ex, Ey)

    eps_t = sp.diags(np.concatenate([eps_x.ravel(), eps_y.ravel()]))
    inv_eps_z = sp.diags(1.0 / eps_z.ravel())
    A = eps_t - curl.T @ curl - grad @ inv_eps_z @ grad.T @ eps_t
    return A.tocsr()


def solve_modes(spec: WaveguideSpec, grid: Optional[Grid2D] = None, count: int = 1,
                extra: int = 4) -> list[GuidedMode]:
    """Guided modes sorted by descending effective index, unit peak |E|."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if not spec.is_guiding:
        raise CutoffError("core index does not exceed substrate and cladding indices")
    grid = grid or Grid2D.for_spec(spec)
    k0 = 2 * np.pi / spec.wavelength
    eps_x, eps_y, eps_z = staggered_permittivity(spec, grid)
    A = build_operator(eps_x, eps_y, eps_z, k0 * grid.spacing)

    n_core = spec.core.refractive_index
    n_floor = spec.max_outer_index
    k = min(count + extra, A.shape[0] - 2)
    try:
        # seeded start vector: ARPACK's default is random, which breaks bit-reproducibility
        v0 = np.random.default_rng(0).standard_normal(A.shape[0])
        vals, vecs = spla.eigs(A, k=k, sigma=n_core ** 2, which="LM", tol=0, maxiter=5000, v0=v0)
    except spla.ArpackNoConvergence as exc:
        raise SolverError(
            f"shift-invert eigensolve did not converge: {len(exc.eigenvalues)} of {k} "
            f"eigenpairs after maxiter=5000"
        ) from exc

    order = np.argsort(-vals.real)
    nex = eps_x.size
    modes = []
    for idx in order:
        n2 = vals[idx].real
        if n2 <= n_floor ** 2 or n2 >= n_core ** 2:
            continue
        v = vecs[:, idx]
        resid = np.linalg.norm(A @ v - vals[idx] * v) / (abs(vals[idx]) * np.linalg.norm(v))
        v = v / v[np.argmax(np.abs(v))]
        ex = v[:nex].reshape(eps_x.shape)
        ey = v[nex:].reshape(eps_y.shape)
        ez = _longitudinal(ex, ey, eps_x, eps_y, eps_z, k0 * grid.spacing, np.sqrt(n2))
        peak = _peak_magnitude(ex, ey, ez)
        modes.append(GuidedMode(
            effective_index=float(np.sqrt(n2)), wavelength=spec.wavelength, grid=grid,
            ex=ex / peak, ey=ey / peak, ez=ez / peak,
            eps_x=eps_x, eps_y=eps_y, eps_z=eps_z, residual=float(resid),
        ))
        if len(modes) == count:
            break
    if not modes:
        raise CutoffError(
            f"no guided mode above n = {n_floor} at wavelength {spec.wavelength:.4g} m"
        )
    return modes


def _longitudinal(ex, ey, eps_x, eps_y, eps_z, h_norm, n_eff):
    """Ez from div(eps E) = 0: Ez = i div_t(eps E_t) / (beta eps_z)."""
    dex = np.pad(eps_x * ex, ((1, 1), (0, 0)))
    dx = np.diff(dex, axis=0)
    dey = np.pad(eps_y * ey, ((0, 0), (1, 1)))
    dy = np.diff(dey, axis=1)
    return 1j * (dx + dy) / h_norm / (n_eff * eps_z)


def _peak_magnitude(ex, ey, ez) -> float:
    cx, cy = _colocate_ex(ex), _colocate_ey(ey)
    return float(np.sqrt(np.abs(cx) ** 2 + np.abs(cy) ** 2 + np.abs(ez) ** 2).max())


@dataclass(frozen=True)
class ModeAreaResult:
    area: float
    area_over_lambda2: float
    wavelength: float
    x: float
    y: float
    permittivity_at_emitter: float
    field_magnitude: float
    effective_index: float

    def to_dict(self) -> dict:
        return {
            "A_eff_m2": self.area,
            "A_eff_over_lambda2": self.area_over_lambda2,
            "wavelength_m": self.wavelength,
            "emitter_x_m": self.x,
            "emitter_y_m": self.y,
            "eps_at_emitter": self.permittivity_at_emitter,
            "field_magnitude_at_emitter": self.field_magnitude,
            "effective_index": self.effective_index,
        }


def mode_energy_integral(mode: GuidedMode) -> float:
    """Midpoint quadrature of eps |E|^2 over the window, each component on its own cells."""
    h2 = mode.grid.spacing ** 2
    return float(h2 * (
        np.sum(mode.eps_x * np.abs(mode.ex) ** 2)
        + np.sum(mode.eps_y * np.abs(mode.ey) ** 2)
        + np.sum(mode.eps_z * np.abs(mode.ez) ** 2)
    ))


def effective_mode_area(mode: GuidedMode, emitter: EmitterLocation,
                        min_field: float = 1e-9) -> ModeAreaResult:
    """A_eff = int eps |E|^2 dA / (eps(r0) |E(r0)|^2), all three field components."""
    e0 = mode.field_at(emitter.x, emitter.y)
    mag2 = float(np.sum(np.abs(e0) ** 2))
    peak = max(np.abs(a).max() for a in (mode.ex, mode.ey, mode.ez))
    if mag2 <= (min_field * peak) ** 2:
        raise ValueError(
            f"|E(r0)| = {np.sqrt(mag2):.3g} (peak {peak:.3g}) at ({emitter.x}, {emitter.y}); "
            "mode area undefined"
        )
    area = mode_energy_integral(mode) / (emitter.permittivity * mag2)
    return ModeAreaResult(
        area=area,
        area_over_lambda2=area / mode.wavelength ** 2,
        wavelength=mode.wavelength,
        x=emitter.x,
        y=emitter.y,
        permittivity_at_emitter=emitter.permittivity,
        field_magnitude=float(np.sqrt(mag2)),
        effective_index=mode.effective_index,
    )


@dataclass(frozen=True)
class GroupVelocityResult:
    group_velocity: float
    effective_index_low: float
    effective_index_high: float
    omega: float
    relative_step: float

    @property
    def group_index(self) -> float:
        return C0 / self.group_velocity

    def to_dict(self) -> dict:
        return {
            "v_g_m_per_s": self.group_velocity,
            "group_index": self.group_index,
            "n_eff_at_omega_minus": self.effective_index_low,
            "n_eff_at_omega_plus": self.effective_index_high,
            "omega_rad_per_s": self.omega,
            "relative_step": self.relative_step,
        }


def centered_group_velocity(beta_of_omega: Callable[[float], float], omega: float,
                            step: float = 5e-3) -> tuple[float, float, float]:
    """v_g = 2 h omega / (beta(omega(1+h)) - beta(omega(1-h))); returns (v_g, beta-, beta+)."""
    w_lo, w_hi = omega * (1 - step), omega * (1 + step)
    b_lo, b_hi = beta_of_omega(w_lo), beta_of_omega(w_hi)
    return (w_hi - w_lo) / (b_hi - b_lo), b_lo, b_hi


def group_velocity(spec: WaveguideSpec, grid: Optional[Grid2D] = None,
                   step: float = 5e-3) -> GroupVelocityResult:
    grid = grid or Grid2D.for_spec(spec)
    omega = 2 * np.pi * C0 / spec.wavelength

    def beta(w):
        lam = 2 * np.pi * C0 / w
        try:
            mode = solve_modes(spec.with_wavelength(lam), grid, count=1)[0]
        except CutoffError as exc:
            raise CutoffError(
                f"mode lost at wavelength {lam:.5g} m while differencing: too close to cutoff"
            ) from exc
        return mode.effective_index * w / C0

    vg, b_lo, b_hi = centered_group_velocity(beta, omega, step)
    return GroupVelocityResult(
        group_velocity=vg,
        effective_index_low=b_lo * C0 / (omega * (1 - step)),
        effective_index_high=b_hi * C0 / (omega * (1 + step)),
        omega=omega,
        relative_step=step,
    )


def energy_velocity(mode: GuidedMode) -> float:
    """Power flow over stored energy per unit length, P / W.

    Equals the group velocity for lossless, non-dispersive materials and is used
    as an independent check on the finite-difference route.
    """
    hx, hy = mode.transverse_h()
    g = mode.grid
    k0 = 2 * np.pi / mode.wavelength
    # Hz on the (x half, y between) grid from the transverse curl of E
    hz = (np.diff(mode.ey, axis=0) - np.diff(mode.ex, axis=1)) / g.spacing / (1j * k0)
    h2 = g.spacing ** 2
    w_e = mode_energy_integral(mode)
    w_h = h2 * (np.sum(np.abs(hx) ** 2) + np.sum(np.abs(hy) ** 2) + np.sum(np.abs(hz) ** 2))
    # W = eps0 (int eps|E|^2 + int |Z0 H|^2) / 4 and power() is Z0 P, so P / W = 4 c power / sum
    return float(C0 * 4 * mode.power() / (w_e + w_h))


# ---------------------------------------------------------------------------
# 1D slab modes (TE: field out of the plane of incidence)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SlabMode:
    effective_index: float
    wavelength: float
    y: np.ndarray
    profile: np.ndarray

    @property
    def propagation_constant(self) -> float:
        return 2 * np.pi / self.wavelength * self.effective_index


def _slab_dispersion(n_eff, k0, n_sub, n_core, n_clad, thickness):
    kappa = k0 * np.sqrt(n_core ** 2 - n_eff ** 2)
    g_s = k0 * np.sqrt(max(n_eff ** 2 - n_sub ** 2, 0.0))
    g_c = k0 * np.sqrt(max(n_eff ** 2 - n_clad ** 2, 0.0))
    return kappa * thickness - np.arctan(g_s / kappa) - np.arctan(g_c / kappa)


def solve_slab_mode_1d(n_sub: float, n_core: float, n_clad: float, thickness: float,
                       wavelength: float, y: Optional[np.ndarray] = None) -> SlabMode:
    """Fundamental TE mode of a three-layer slab, core spanning -thickness <= y <= 0.

    Solves kappa t = atan(gamma_s/kappa) + atan(gamma_c/kappa) by bisection.
    The profile is normalized to unit peak.
    """
    if thickness <= 0 or n_core <= max(n_sub, n_clad):
        raise CutoffError("slab has no high-index core")
    k0 = 2 * np.pi / wavelength
    lo = max(n_sub, n_clad)
    hi = n_core * (1 - 1e-14)
    args = (k0, n_sub, n_core, n_clad, thickness)
    if _slab_dispersion(lo * (1 + 1e-14), *args) <= 0:
        raise CutoffError(f"slab of thickness {thickness:.3g} m is below TE0 cutoff")
    n_eff = brentq(_slab_dispersion, lo * (1 + 1e-14), hi, args=args, xtol=1e-15, rtol=1e-15)

    if y is None:
        y = np.linspace(-thickness - 2 * wavelength, 2 * wavelength, 2001)
    kappa = k0 * np.sqrt(n_core ** 2 - n_eff ** 2)
    g_s = k0 * np.sqrt(n_eff ** 2 - n_sub ** 2)
    g_c = k0 * np.sqrt(n_eff ** 2 - n_clad ** 2)
    phi_s = np.arctan(g_s / kappa)
    prof = np.where(
        y < -thickness,
        np.cos(phi_s) * np.exp(g_s * (y + thickness)),
        np.where(y > 0, np.cos(kappa * thickness - phi_s) * np.exp(-g_c * y),
                 np.cos(kappa * (y + thickness) - phi_s)),
    )
    return SlabMode(float(n_eff), wavelength, np.asarray(y, float), prof / np.abs(prof).max())


def slab_mode_fd(eps: np.ndarray, spacing: float, wavelength: float,
                 y: Optional[np.ndarray] = None) -> SlabMode:
    """Fundamental TE mode of a sampled permittivity profile by direct 1D FD eigensolve.

    Zero-field boundaries; the largest eigenvalue of d2/dy2 + k0^2 eps is beta^2.
    """
    eps = np.asarray(eps, float)
    k0 = 2 * np.pi / wavelength
    n = eps.size
    h = spacing
    diag = -2.0 / h ** 2 + k0 ** 2 * eps
    off = np.ones(n - 1) / h ** 2
    vals, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(n - 1, n - 1))
    beta2 = vals[0]
    n_eff2 = beta2 / k0 ** 2
    outer = max(eps[0], eps[-1])
    if n_eff2 <= outer:
        raise CutoffError("no guided slab mode in the sampled profile")
    prof = vecs[:, 0]
    prof = prof / prof[np.argmax(np.abs(prof))]
    if y is None:
        y = np.arange(n) * h
    return SlabMode(float(np.sqrt(n_eff2)), wavelength, np.asarray(y, float), prof)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def write_mode_csv(mode: GuidedMode, path) -> None:
    ex, ey, ez = mode.colocated()
    g = mode.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_m", "y_m", "re_Ex", "im_Ex", "re_Ey", "im_Ey", "re_Ez", "im_Ez"])
        for i, x in enumerate(g.x_nodes):
            for j, y in enumerate(g.y_rows):
                w.writerow([f"{v:.12g}" for v in (
                    x, y, ex[i, j].real, ex[i, j].imag, ey[i, j].real, ey[i, j].imag,
                    ez[i, j].real, ez[i, j].imag)])


def write_mode_area_json(result: ModeAreaResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(result.to_dict(), fh, indent=2)
