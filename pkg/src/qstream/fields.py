"""Grid primitives, Madelung decomposition, and local hydrodynamic fields.

A wavefunction snapshot lives on a uniform 1D grid.  The polar (Madelung)
split Psi = rho^{1/2} exp(iS/hbar) turns it into a density rho and a
continuous, unwrapped action field S, from which the probability current,
the hydrodynamic velocity v = J/rho and the quantum potential
Q = -(hbar^2/2m) (sqrt(rho))'' / sqrt(rho) are derived.

Points where rho < eps_node * max(rho) are "nodes": v, S and Q are
singular or undefined there and get flagged invalid instead of evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AllBelowThreshold, NegativeDensity, NotNormalized

NODE_THRESHOLD = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Uniform 1D spatial grid with n_points samples on [x_min, x_max]."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be < x_max")
        if self.n_points < 8:
            raise ValueError("n_points must be >= 8")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    def wavenumbers(self) -> np.ndarray:
        """FFT wavenumbers matching the grid (treats the box as periodic)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if self.hbar <= 0 or self.mass <= 0:
            raise ValueError("hbar and mass must be strictly positive")


@dataclass(frozen=True)
class ComplexField:
    """Complex wavefunction samples on a grid at a fixed time."""

    grid: GridSpec
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (self.grid.n_points,):
            raise ValueError("values length must equal grid.n_points")
        if not np.all(np.isfinite(values)):
            raise ValueError("wavefunction contains non-finite values")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class PolarFields:
    """Madelung pair (rho, S) with S unwrapped along the grid."""

    grid: GridSpec
    rho: np.ndarray
    S: np.ndarray
    time: float = 0.0
    valid: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        S = np.asarray(self.S, dtype=float)
        if rho.shape != (self.grid.n_points,) or S.shape != (self.grid.n_points,):
            raise ValueError("rho and S must match grid.n_points")
        valid = self.valid
        if valid is None:
            valid = rho > NODE_THRESHOLD * rho.max() if rho.size else rho > 0
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "valid", np.asarray(valid, dtype=bool))


@dataclass(frozen=True)
class VelocityField:
    """Hydrodynamic velocity v = J/rho; NaN and valid=False at nodes."""

    grid: GridSpec
    v: np.ndarray
    valid: np.ndarray
    time: float = 0.0


def node_mask(rho: np.ndarray, eps_node: float = NODE_THRESHOLD) -> np.ndarray:
    """True where rho is above the node threshold eps_node * max(rho)."""
    rho = np.asarray(rho, dtype=float)
    peak = rho.max(initial=0.0)
    return rho > eps_node * peak if peak > 0 else np.zeros_like(rho, dtype=bool)


def derivative(values: np.ndarray, dx: float, order: int = 1) -> np.ndarray:
    """4th-order central finite difference, one-sided 2nd order at the edges."""
    y = np.asarray(values)
    out = np.empty_like(y)
    if order == 1:
        out[2:-2] = (-y[4:] + 8 * y[3:-1] - 8 * y[1:-3] + y[:-4]) / (12 * dx)
        out[0] = (-3 * y[0] + 4 * y[1] - y[2]) / (2 * dx)
        out[1] = (y[2] - y[0]) / (2 * dx)
        out[-2] = (y[-1] - y[-3]) / (2 * dx)
        out[-1] = (3 * y[-1] - 4 * y[-2] + y[-3]) / (2 * dx)
    elif order == 2:
        out[2:-2] = (-y[4:] + 16 * y[3:-1] - 30 * y[2:-2]
                     + 16 * y[1:-3] - y[:-4]) / (12 * dx ** 2)
        out[1] = (y[2] - 2 * y[1] + y[0]) / dx ** 2
        out[-2] = (y[-1] - 2 * y[-2] + y[-3]) / dx ** 2
        out[0] = (2 * y[0] - 5 * y[1] + 4 * y[2] - y[3]) / dx ** 2
        out[-1] = (2 * y[-1] - 5 * y[-2] + 4 * y[-3] - y[-4]) / dx ** 2
    else:
        raise ValueError("order must be 1 or 2")
    return out


def spectral_derivative(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """FFT derivative; only valid for fields negligible at the box edges."""
    k = grid.wavenumbers()
    return np.fft.ifft(1j * k * np.fft.fft(values))


def norm(psi: ComplexField) -> float:
    """Trapezoid integral of |Psi|^2 over the grid."""
    return float(np.trapezoid(np.abs(psi.values) ** 2, dx=psi.grid.dx))


def _unwrap_phase(raw: np.ndarray, valid: np.ndarray, i0: int) -> np.ndarray:
    """Sequentially unwrap raw phases outward from index i0.

    A +-2*pi*n correction accumulates only across steps joining two valid
    points; across sub-threshold gaps the accumulated offset is carried
    through unchanged.
    """
    diff = np.diff(raw)
    wrapped = np.angle(np.exp(1j * diff))
    corr = wrapped - diff
    corr[~(valid[:-1] & valid[1:])] = 0.0
    offset = np.zeros_like(raw)
    offset[i0 + 1:] = np.cumsum(corr[i0:])
    offset[:i0] = -np.cumsum(corr[:i0][::-1])[::-1]
    return raw + offset


def polar_decompose(psi: ComplexField, constants: PhysicalConstants,
                    eps_node: float = NODE_THRESHOLD) -> PolarFields:
    """Madelung split Psi = rho^{1/2} exp(iS/hbar) with unwrapped S.

    S is referenced so its value at the maximum-density point lies in
    (-pi*hbar, pi*hbar].
    """
    rho = np.abs(psi.values) ** 2
    valid = node_mask(rho, eps_node)
    if not valid.any():
        raise AllBelowThreshold("density below node threshold everywhere")
    i0 = int(np.argmax(rho))
    phase = _unwrap_phase(np.angle(psi.values), valid, i0)
    return PolarFields(psi.grid, rho, constants.hbar * phase, psi.time, valid)


def polar_compose(polar: PolarFields, constants: PhysicalConstants) -> ComplexField:
    """Inverse Madelung map: values = rho^{1/2} exp(iS/hbar)."""
    if np.any(polar.rho < 0):
        raise NegativeDensity("rho must be nonnegative")
    values = np.sqrt(polar.rho) * np.exp(1j * polar.S / constants.hbar)
    return ComplexField(polar.grid, values, polar.time)


def probability_current(psi: ComplexField, constants: PhysicalConstants,
                        method: str = "fd4") -> np.ndarray:
    """J = (hbar/m) Im(Psi* dPsi/dx)."""
    if method == "spectral":
        dpsi = spectral_derivative(psi.values, psi.grid)
    else:
        dpsi = derivative(psi.values, psi.grid.dx)
    return (constants.hbar / constants.mass) * np.imag(np.conj(psi.values) * dpsi)


def velocity_field(psi: ComplexField, constants: PhysicalConstants,
                   eps_node: float = NODE_THRESHOLD,
                   method: str = "fd4") -> VelocityField:
    """v = J/rho above the node threshold; NaN elsewhere."""
    rho = np.abs(psi.values) ** 2
    valid = node_mask(rho, eps_node)
    J = probability_current(psi, constants, method=method)
    v = np.full(psi.grid.n_points, np.nan)
    v[valid] = J[valid] / rho[valid]
    return VelocityField(psi.grid, v, valid, psi.time)


def quantum_potential(psi: ComplexField, constants: PhysicalConstants,
                      eps_node: float = NODE_THRESHOLD) -> np.ndarray:
    """Q = -(hbar^2/2m) (sqrt(rho))'' / sqrt(rho); NaN at nodes."""
    rho = np.abs(psi.values) ** 2
    valid = node_mask(rho, eps_node)
    amp = np.sqrt(rho)
    d2 = derivative(amp, psi.grid.dx, order=2)
    Q = np.full(psi.grid.n_points, np.nan)
    factor = -constants.hbar ** 2 / (2.0 * constants.mass)
    Q[valid] = factor * d2[valid] / amp[valid]
    return Q


def kinetic_energy(psi: ComplexField, constants: PhysicalConstants) -> float:
    """<T> via the spectral Laplacian."""
    k = psi.grid.wavenumbers()
    lap = np.fft.ifft(-(k ** 2) * np.fft.fft(psi.values))
    T = -constants.hbar ** 2 / (2.0 * constants.mass)
    integrand = np.conj(psi.values) * T * lap
    return float(np.real(np.trapezoid(integrand, dx=psi.grid.dx)))


def expectation_energy(psi: ComplexField, potential: np.ndarray,
                       constants: PhysicalConstants) -> float:
    """<T> + <V> for a unit-norm state."""
    if abs(norm(psi) - 1.0) > 1e-6:
        raise NotNormalized("expectation_energy requires a unit-norm state")
    V = np.trapezoid(potential * np.abs(psi.values) ** 2, dx=psi.grid.dx)
    return kinetic_energy(psi, constants) + float(V)


def expectation_position(psi: ComplexField) -> float:
    rho = np.abs(psi.values) ** 2
    n = np.trapezoid(rho, dx=psi.grid.dx)
    return float(np.trapezoid(psi.grid.x * rho, dx=psi.grid.dx) / n)


def position_spread(psi: ComplexField) -> float:
    """Standard deviation of position, sigma(t)."""
    rho = np.abs(psi.values) ** 2
    n = np.trapezoid(rho, dx=psi.grid.dx)
    x = psi.grid.x
    mean = np.trapezoid(x * rho, dx=psi.grid.dx) / n
    var = np.trapezoid((x - mean) ** 2 * rho, dx=psi.grid.dx) / n
    return float(np.sqrt(var))


def gaussian_packet(grid: GridSpec, constants: PhysicalConstants,
                    sigma0: float, x0: float = 0.0, p0: float = 0.0,
                    time: float = 0.0) -> ComplexField:
    """Normalized Gaussian (2 pi sigma0^2)^{-1/4} e^{-(x-x0)^2/4 sigma0^2 + i p0 (x-x0)/hbar}."""
    x = grid.x
    values = (2.0 * np.pi * sigma0 ** 2) ** -0.25 * np.exp(
        -((x - x0) ** 2) / (4.0 * sigma0 ** 2)
        + 1j * p0 * (x - x0) / constants.hbar)
    return ComplexField(grid, values, time)


def write_snapshot(path, psi: ComplexField, constants: PhysicalConstants,
                   model: str = "standard") -> None:
    """Columnar text snapshot: header key = value lines, then one row per
    grid point `x Re(psi) Im(psi) rho S v Q` (invalid entries as nan)."""
    try:
        polar = polar_decompose(psi, constants)
        S = np.where(polar.valid, polar.S, np.nan)
    except AllBelowThreshold:
        S = np.full(psi.grid.n_points, np.nan)
    vel = velocity_field(psi, constants)
    Q = quantum_potential(psi, constants)
    g = psi.grid
    lines = [
        f"x_min = {g.x_min!r}",
        f"x_max = {g.x_max!r}",
        f"n_points = {g.n_points}",
        f"time = {psi.time!r}",
        f"model = {model}",
        "# x re_psi im_psi rho S v Q",
    ]
    rho = np.abs(psi.values) ** 2
    for i, x in enumerate(g.x):
        row = (x, psi.values[i].real, psi.values[i].imag, rho[i], S[i],
               vel.v[i], Q[i])
        lines.append("  ".join(repr(float(c)) for c in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
