"""Semiclassical collision-model coefficients.

Gas particles with momentum p and impact parameter b hit the system at the
flux density 8 pi^2 nu b p^3 f(p) db dp. Each collision contributes U0 tau = J(p, b)
to the Lamb-shift coefficient and (U0 tau)^2 to the dissipator rate:

    c1 = <U0 tau / t_free>         = int db int dp 8 pi^2 nu b p^3 f(p) J(p, b)
    c2 = <U0^2 tau^2 / t_free>     = int db int dp 8 pi^2 nu b p^3 f(p) J(p, b)^2
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .ldl import SQRT_2PI, UnsupportedPotential, check_strength
from .model import GasParameters, maxwell_boltzmann_pdf, momentum_cutoff
from .potentials import GAUSSIAN, SQUARE_WELL, RadialPotential, line_integral
from .quadrature import gauss_legendre, integrate


@dataclass(frozen=True)
class CmCoefficients:
    c1: float
    c2: float
    c1_closed: float | None = None
    c2_closed: float | None = None


def _momentum_nodes(theta: float) -> tuple[np.ndarray, np.ndarray]:
    # f(p) p^k is entire; 32 panels of 20-point Gauss-Legendre are exact to rounding
    return gauss_legendre(0.0, momentum_cutoff(theta), 32, 20)


def _flux_average(pot: RadialPotential, gas: GasParameters, power: int, rtol: float) -> float:
    check_strength(pot, gas)
    if gas.nu == 0.0:
        return 0.0
    p, w = _momentum_nodes(gas.theta)
    weight = 8.0 * math.pi**2 * gas.nu * w * p**3 * maxwell_boltzmann_pdf(p, gas.theta)

    def integrand(b):
        j = line_integral(pot, p[:, None], b[None, :])
        return b * (weight @ j**power)

    knots = pot.knots[pot.knots < pot.support]
    res = integrate(integrand, 0.0, pot.support, breakpoints=knots, rtol=rtol)
    return res.value


def cm_c1(pot: RadialPotential, gas: GasParameters, *, rtol: float = 1e-12) -> float:
    """Lamb-shift coefficient <U0 tau / t_free>; equals nu * int V d^3r for any temperature."""
    return _flux_average(pot, gas, 1, rtol)


def cm_c2(pot: RadialPotential, gas: GasParameters, *, rtol: float = 1e-12) -> float:
    """Dissipator rate <U0^2 tau^2 / t_free>."""
    return _flux_average(pot, gas, 2, rtol)


def c1_closed(pot: RadialPotential, gas: GasParameters) -> float | None:
    if pot.kind in (GAUSSIAN, SQUARE_WELL):
        return gas.nu * pot.volume_integral()
    return None


def c2_closed(pot: RadialPotential, gas: GasParameters) -> float | None:
    base = gas.nu * gas.u**2 / math.sqrt(gas.theta)
    if pot.kind == GAUSSIAN:
        return (2.0 * math.pi) ** 1.5 * base
    if pot.kind == SQUARE_WELL:
        return 2.0 * SQRT_2PI * base
    return None


def cm_coefficients(pot: RadialPotential, gas: GasParameters) -> CmCoefficients:
    return CmCoefficients(cm_c1(pot, gas), cm_c2(pot, gas), c1_closed(pot, gas), c2_closed(pot, gas))


def log_kernel_moment(pot: RadialPotential, *, rtol: float = 1e-11) -> float:
    """int_0^inf int_0^inf V(r) V(r') r r' ln((r + r') / |r - r'|) dr dr'.

    Symmetric in (r, r'), so twice the triangle r' < r. On the triangle the
    substitution r' = r (1 - e^{-s}) turns the logarithmic singularity at
    r' = r into the factor s e^{-s}; s is cut at 40.
    """
    rmax = pot.support
    knots = pot.knots[pot.knots < rmax]
    s_max = 40.0

    def inner(r: float) -> float:
        kn = knots[(knots > 0) & (knots < r)]
        s_kn = -np.log1p(-kn / r)

        def g(s):
            e = np.exp(-s)
            rp = r * (1.0 - e) if r > 0 else np.zeros_like(s)
            return pot(rp) * rp * (np.log(r + rp) - math.log(r) + s) * r * e

        return integrate(g, 0.0, s_max, breakpoints=s_kn, rtol=rtol).value

    def outer(r):
        vals = np.array([inner(x) if x > 0 else 0.0 for x in r])
        return pot(r) * r * vals

    return 2.0 * integrate(outer, 0.0, rmax, breakpoints=knots, rtol=rtol).value


def cm_c2_logkernel(pot: RadialPotential, gas: GasParameters, *, rtol: float = 1e-11) -> float:
    """c2 through the impact-parameter-free log-kernel representation.

    Independent of :func:`cm_c2`: integrates over radii instead of impact
    parameters, c2 = 16 pi^2 nu int f(p) p dp * log_kernel_moment.
    """
    check_strength(pot, gas)
    if gas.nu == 0.0:
        return 0.0
    p, w = _momentum_nodes(gas.theta)
    p_moment = np.sum(w * p * maxwell_boltzmann_pdf(p, gas.theta))
    return 16.0 * math.pi**2 * gas.nu * p_moment * log_kernel_moment(pot, rtol=rtol)


def refracted_tau(p, b, f_expect: float, u: float):
    """Effective collision time in the square well with refraction at r = 1.

    tau = 2 sqrt((1 - b^2) p^2 - 2 <F> u) / (p^2 - 2 <F> u) for b <= 1, else 0;
    reduces to the straight-line 2 sqrt(1 - b^2) / p when <F> u = 0.
    """
    p = np.asarray(p, dtype=float)
    b = np.asarray(b, dtype=float)
    shift = -2.0 * f_expect * u
    rad = np.clip((1.0 - b * b) * p * p + shift, 0.0, None)
    tau = np.where(b <= 1.0, 2.0 * np.sqrt(rad) / (p * p + shift), 0.0)
    return tau.item() if tau.ndim == 0 else tau


def cm_refracted(gas: GasParameters, f_expect: float, pot: RadialPotential | None = None,
                 *, rtol: float = 1e-12) -> tuple[float, float]:
    """(c1, c2) with refracted three-segment trajectories in an attractive square well.

    ``f_expect`` is the fixed mean-field value <F>; the effective potential
    <F> u must be attractive (<= 0).
    """
    pot = RadialPotential.square_well(gas.u) if pot is None else pot
    if pot.kind != SQUARE_WELL:
        raise UnsupportedPotential("refracted trajectories are only derived for the square well")
    check_strength(pot, gas)
    fu = f_expect * gas.u
    if fu > 0:
        raise ValueError(f"refraction model needs <F> u <= 0, got {fu!r}")
    if abs(fu) / gas.theta >= 0.5:
        warnings.warn(f"|<F> u| / theta = {abs(fu) / gas.theta:.3g} is not small", stacklevel=2)
    if gas.nu == 0.0:
        return 0.0, 0.0
    theta, u = gas.theta, gas.u
    shift = -2.0 * fu
    pmax = momentum_cutoff(theta)

    def b_integrals(p):
        def g(b):
            tau = refracted_tau(p[:, None], b[None, :], f_expect, u)
            return np.stack([b * u * tau, b * (u * tau) ** 2])

        return integrate(g, 0.0, 1.0, rtol=rtol).value  # shape (2, n_p)

    def outer(p):
        return 8.0 * math.pi**2 * gas.nu * p**3 * maxwell_boltzmann_pdf(p, theta) * b_integrals(p)

    scale = math.sqrt(shift) if shift > 0 else 1.0
    bps = np.concatenate([np.linspace(0.0, pmax, 17), scale * np.array([0.25, 0.5, 1.0, 2.0, 4.0])])
    c1, c2 = integrate(outer, 0.0, pmax, breakpoints=bps, rtol=rtol).value
    return float(c1), float(c2)
