"""Periodic torus discretisation, spectral transforms and Sobolev norms.

The computational domain is the torus [-L, L)^n with M points per axis
(M a power of two), so the dual lattice is kappa_k = pi*k/L with
k = -M/2, ..., M/2 - 1 per axis.  Fourier coefficients are normalised so
that the constant field 1 has zero-mode coefficient 1; with that choice
the Sobolev norm of the constant field on (1, M, L) is sqrt(2L)
independently of the order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    """Invalid grid parameters or fields."""


def _is_power_of_two(m: int) -> bool:
    return m >= 1 and (m & (m - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid on [-L, L)^n.

    n : spatial dimension (1 or 2)
    M : points per axis, power of two, >= 8
    L : half-length of the fundamental domain
    """

    n: int
    M: int
    L: float

    def __post_init__(self):
        if self.n not in (1, 2):
            raise GridError(f"dimension must be 1 or 2, got {self.n}")
        if not _is_power_of_two(self.M) or self.M < 8:
            raise GridError(f"M must be a power of two >= 8, got {self.M}")
        if not (self.L > 0):
            raise GridError(f"L must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.M

    @property
    def shape(self) -> tuple:
        return (self.M,) * self.n

    @property
    def size(self) -> int:
        return self.M**self.n

    def x_axis(self) -> np.ndarray:
        """Nodes along one axis, ordered -L, -L+h, ..., L-h."""
        return -self.L + self.h * np.arange(self.M)

    def kappa_axis(self) -> np.ndarray:
        """Dual frequencies pi*k/L in FFT storage order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.M, d=self.h)

    def x_mesh(self) -> tuple:
        """Meshed coordinates, one array per axis."""
        ax = self.x_axis()
        return np.meshgrid(*([ax] * self.n), indexing="ij")

    def kappa_mesh(self) -> tuple:
        """Meshed dual frequencies in FFT order, one array per axis."""
        ka = self.kappa_axis()
        return np.meshgrid(*([ka] * self.n), indexing="ij")

    def x_norm_sq(self) -> np.ndarray:
        return sum(xm**2 for xm in self.x_mesh())

    def kappa_bracket(self) -> np.ndarray:
        """Japanese bracket <kappa> on the meshed dual lattice."""
        k2 = sum(km**2 for km in self.kappa_mesh())
        return np.sqrt(1.0 + k2)


@dataclass
class Field:
    """Complex-valued grid function on a GridSpec."""

    spec: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.spec.shape:
            raise GridError(
                f"field shape {self.values.shape} does not match grid {self.spec.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise GridError("field contains non-finite entries")

    def copy(self) -> "Field":
        return Field(self.spec, self.values.copy())


def make_grid(n: int, M: int, L: float) -> GridSpec:
    """Validated grid constructor."""
    return GridSpec(n, M, L)


def field_from_values(spec: GridSpec, values: np.ndarray) -> Field:
    return Field(spec, values)


def _phase(spec: GridSpec) -> np.ndarray:
    # fft indexes nodes from x = -L, so raw coefficients pick up a factor
    # exp(i*kappa_k*L) = (-1)^k per axis relative to the e^{i kappa x} basis.
    km = spec.kappa_mesh()
    total = sum(km)
    return np.exp(1j * spec.L * total)


def forward(u: Field | np.ndarray, spec: GridSpec | None = None) -> np.ndarray:
    """Fourier coefficients u_hat_k of u with respect to e^{i kappa_k x}.

    Normalised so the constant field 1 has u_hat_0 = 1.
    """
    if isinstance(u, Field):
        spec, values = u.spec, u.values
    else:
        values = u
    return np.fft.fftn(values) / spec.size * _phase(spec)


def inverse(coeffs: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Inverse of :func:`forward`, returning grid values."""
    return np.fft.ifftn(coeffs / _phase(spec) * spec.size)


def sobolev_norm(u: Field, s: float) -> float:
    """H^s norm ((2L)^n sum <kappa>^{2s} |u_hat|^2)^{1/2}.

    s = 0 reproduces the L^2 norm by Plancherel.
    """
    uh = forward(u)
    w = u.spec.kappa_bracket() ** (2.0 * s)
    return float(np.sqrt((2.0 * u.spec.L) ** u.spec.n * np.sum(w * np.abs(uh) ** 2)))


def apply_lambda(u: Field, s: float) -> Field:
    """Fourier multiplier <kappa>^s (the operator Lambda^s)."""
    uh = forward(u)
    vals = inverse(uh * u.spec.kappa_bracket() ** s, u.spec)
    return Field(u.spec, vals)


def weight_field(u: Field, p: float) -> Field:
    """Pointwise multiplication by <x>^p on the fundamental domain."""
    w = (1.0 + u.spec.x_norm_sq()) ** (p / 2.0)
    return Field(u.spec, u.values * w)


def spectral_derivative(values: np.ndarray, spec: GridSpec, axis: int) -> np.ndarray:
    """d/dx_axis computed in Fourier space."""
    coeffs = np.fft.fftn(values)
    km = spec.kappa_mesh()[axis]
    return np.fft.ifftn(1j * km * coeffs)


def plane_wave(spec: GridSpec, k: tuple | int) -> Field:
    """e^{i <kappa_k, x>} for integer mode numbers k (per axis)."""
    if np.isscalar(k):
        k = (k,)
    xm = spec.x_mesh()
    phase = sum(np.pi * ki / spec.L * x for ki, x in zip(k, xm))
    return Field(spec, np.exp(1j * phase))
