"""Mollifier families, regularising scales, and scaling-law probes.

Convolution with the periodised mollifier is computed spectrally: the
Fourier coefficients of u * phi_omega are u_hat_k * phi_hat(omega*kappa_k),
which is exact on the torus and keeps the slope fits quadrature-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Field, forward, inverse, sobolev_norm, spectral_derivative

#: clamp value returned by the loglog scale for epsilon >= e^{-e}
LOGLOG_CLAMP = 1.0 - 1e-6


class MollifyError(ValueError):
    pass


@dataclass(frozen=True)
class Mollifier:
    """Unit-mass profile with closed-form Fourier transform.

    kind "gaussian": phi >= 0, phi_hat(xi) = exp(-|xi|^2/2).
    kind "vanishing-moment": Fourier-side polynomial correction of the
    gaussian; ``order`` (even) is the approximation order, i.e. the
    moments of order 1 .. order-1 vanish and phi_hat(xi) - 1 = O(|xi|^order).
    """

    kind: str = "gaussian"
    order: int = 4

    def __post_init__(self):
        if self.kind not in ("gaussian", "vanishing-moment", "flat-band"):
            raise MollifyError(f"unknown mollifier kind {self.kind!r}")
        if self.kind == "vanishing-moment" and (self.order < 2 or self.order % 2):
            raise MollifyError("vanishing-moment order must be a positive even integer")

    def hat(self, xi_sq: np.ndarray) -> np.ndarray:
        """phi_hat as a function of |xi|^2."""
        if self.kind == "gaussian":
            return np.exp(-xi_sq / 2.0)
        if self.kind == "vanishing-moment":
            # q(t) = sum_{j<order/2} t^j / (2^j j!)  truncates the expansion of
            # e^{t/2}, so q(t) e^{-t/2} = 1 + O(t^{order/2}).
            m = self.order // 2
            q = sum(xi_sq**j / (2.0**j * math.factorial(j)) for j in range(m))
            return q * np.exp(-xi_sq / 2.0)
        # flat-band: identity on |xi| <= 1, smooth gaussian roll-off beyond;
        # test profile for band-limited consistency checks.
        t = np.maximum(xi_sq - 1.0, 0.0)
        return np.exp(-(t**2) / 2.0)


@dataclass(frozen=True)
class ScaleFn:
    """Regularising scale omega(epsilon).

    kind "loglog": (log log(1/eps))^{-1}, clamped to LOGLOG_CLAMP for
    eps >= e^{-e} where the formula leaves (0,1).
    kind "power": eps^k.
    kind "constant-test": fixed value, for degenerate-probe tests only.
    """

    kind: str = "loglog"
    k: float = 1.0
    constant: float = 0.5

    def __post_init__(self):
        if self.kind not in ("loglog", "power", "constant-test"):
            raise MollifyError(f"unknown scale kind {self.kind!r}")
        if self.kind == "power" and self.k <= 0:
            raise MollifyError("power scale needs k > 0")

    def __call__(self, eps: float) -> float:
        return scale_omega(self, eps)


def scale_omega(scale: ScaleFn, eps: float) -> float:
    """Evaluate omega(eps) in (0, 1)."""
    if not (0.0 < eps <= 1.0):
        raise MollifyError(f"epsilon must lie in (0, 1], got {eps}")
    if scale.kind == "power":
        return eps**scale.k
    if scale.kind == "constant-test":
        return scale.constant
    # loglog
    if eps >= math.exp(-math.e):
        return LOGLOG_CLAMP
    return min(1.0 / math.log(math.log(1.0 / eps)), LOGLOG_CLAMP)


def mollify(u: Field, m: Mollifier, omega: float) -> Field:
    """Exact periodic convolution with the periodised mollifier at width omega."""
    if not (0.0 < omega <= 1.0):
        raise MollifyError(f"omega must lie in (0, 1], got {omega}")
    uh = forward(u)
    k2 = sum(km**2 for km in u.spec.kappa_mesh())
    vals = inverse(uh * m.hat(omega**2 * k2), u.spec)
    return Field(u.spec, vals)


def fit_slope(xs, ys) -> tuple[float, float]:
    """Least-squares slope of ys against xs, with RMS residual."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) < 2:
        raise MollifyError("need at least two points for a slope fit")
    coef = np.polyfit(xs, ys, 1)
    resid = ys - np.polyval(coef, xs)
    return float(coef[0]), float(np.sqrt(np.mean(resid**2)))


def _omega_ladder(scale: ScaleFn, eps_list) -> np.ndarray:
    eps_list = list(eps_list)
    if len(eps_list) < 4:
        raise MollifyError("need at least 4 epsilon values")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise MollifyError("epsilon ladder must be strictly decreasing")
    return np.array([scale_omega(scale, e) for e in eps_list])


def derivative_bound_probe(u: Field, beta: tuple | int, scale: ScaleFn, eps_list):
    """Sup-norm growth of d^beta (u * phi_omega) along an omega ladder.

    Returns a dict with the per-omega sup norms, the fitted slope sigma of
    log sup vs log omega, and the predicted floors -|beta| (bounded u) and
    -|beta|+1 (Lipschitz u) from Young's inequality.
    """
    if np.isscalar(beta):
        beta = (int(beta),)
    if len(beta) != u.spec.n or any(b < 0 for b in beta):
        raise MollifyError(f"bad multi-index {beta} for dimension {u.spec.n}")
    omegas = _omega_ladder(scale, eps_list)
    moll = Mollifier("gaussian")
    sups = []
    for om in omegas:
        vals = mollify(u, moll, om).values
        for axis, b in enumerate(beta):
            for _ in range(b):
                vals = spectral_derivative(vals, u.spec, axis)
        sups.append(float(np.max(np.abs(vals))))
    sups = np.array(sups)
    if np.max(sups) <= 0 or np.max(sups) / max(np.min(sups), 1e-300) < 1.0 + 1e-12:
        slope, resid = 0.0, 0.0
    else:
        slope, resid = fit_slope(np.log(omegas), np.log(sups))
    order = int(sum(beta))
    return {
        "omegas": omegas.tolist(),
        "sup_norms": sups.tolist(),
        "slope": slope,
        "residual": resid,
        "floor_bounded": -float(order),
        "floor_lipschitz": -float(order) + 1.0,
    }


def sobolev_boost_probe(u: Field, s: float, ell: int, scale: ScaleFn, eps_list):
    """Slope of log ||u * phi_omega||_{s+ell} vs log omega; floor is -ell."""
    if ell < 1:
        raise MollifyError("ell must be >= 1")
    omegas = _omega_ladder(scale, eps_list)
    moll = Mollifier("gaussian")
    norms = np.array(
        [sobolev_norm(mollify(u, moll, om), s + ell) for om in omegas]
    )
    if np.max(norms) <= 0 or np.max(norms) / max(np.min(norms), 1e-300) < 1.0 + 1e-12:
        slope, resid = 0.0, 0.0
    else:
        slope, resid = fit_slope(np.log(omegas), np.log(norms))
    return {
        "omegas": omegas.tolist(),
        "norms": norms.tolist(),
        "slope": slope,
        "residual": resid,
        "floor": -float(ell),
    }
