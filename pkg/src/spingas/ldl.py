"""Low-density-limit generator coefficients in the first-order Born approximation.

The dissipator rate is

    Gamma = 32 pi^2 nu int_0^inf f(p) p dp int_0^1 (dxi / xi) B(p, xi)^2

and the Lamb shift is nu * int V d^3r * sum_i mu_i A_ii. Because B depends on
(p, xi) only through k = 2 p xi, the inner integral equals
Phi(2p) = int_0^{2p} B(k)^2 dk / k; it is accumulated panel by panel over the
sorted outer nodes so each outer evaluation costs one pass over [0, 2 p_max].
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .model import GasParameters, SpinModel, jump_operators, maxwell_boltzmann_pdf, momentum_cutoff
from .potentials import GAUSSIAN, SQUARE_WELL, TABULATED, RadialPotential, born_transfer
from .quadrature import integrate, integrate_panels

logger = logging.getLogger(__name__)

SQRT_2PI = math.sqrt(2.0 * math.pi)


class UnsupportedPotential(ValueError):
    """The requested quantity is only derived for another potential kind."""


def check_strength(pot: RadialPotential, gas: GasParameters) -> None:
    if not math.isclose(pot.u, gas.u, rel_tol=1e-12, abs_tol=1e-300):
        raise ValueError(f"potential strength u={pot.u!r} differs from gas.u={gas.u!r}")


@dataclass(frozen=True)
class LdlCoefficients:
    gamma: float
    lamb_coeff: float
    gamma_closed: float | None = None
    correction_factor: float | None = None
    gamma_error: float = 0.0


def transfer_integral(pot: RadialPotential, x, *, rtol: float = 1e-12) -> np.ndarray:
    """Phi(X) = int_0^X B(k)^2 dk / k for each X in ``x`` (the xi-integral at p = X/2)."""
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    if np.any(flat < 0):
        raise ValueError("upper limits must be non-negative")
    xs = np.unique(flat[flat > 0])
    if xs.size == 0:
        return np.zeros_like(x)
    # B^2 oscillates with half-period pi / (2 r_max) in k
    step = math.pi / (2.0 * pot.support) if pot.kind != GAUSSIAN else math.pi / 2.0
    osc = np.arange(step, xs[-1], step)
    if pot.kind == GAUSSIAN:
        osc = osc[osc < 40.0]  # integrand below 1e-300 beyond
    edges = np.unique(np.concatenate([[0.0], xs, osc]))

    def integrand(k):
        bk = np.asarray(born_transfer(pot, k))
        return np.where(k > 0, bk * bk / np.where(k > 0, k, 1.0), 0.0)

    vals, _ = integrate_panels(integrand, edges, rtol=rtol)
    cum = np.concatenate([[0.0], np.cumsum(vals)])
    at = cum[np.searchsorted(edges, flat)]
    return np.where(flat > 0, at, 0.0).reshape(x.shape)


def gamma_quadrature(pot: RadialPotential, gas: GasParameters, *, rtol: float = 1e-10,
                     return_error: bool = False):
    """Dissipator rate Gamma by quadrature over (p, xi).

    The p-integral runs over [0, 12 sqrt(theta)] (Maxwell-Boltzmann tail below
    1e-30 of the mass) with adaptive Gauss-Kronrod panels.
    """
    check_strength(pot, gas)
    if gas.nu == 0.0 or pot.u == 0.0 and pot.kind != TABULATED:
        return (0.0, 0.0) if return_error else 0.0
    theta = gas.theta
    pmax = momentum_cutoff(theta)

    def outer(p):
        return maxwell_boltzmann_pdf(p, theta) * p * transfer_integral(pot, 2.0 * p, rtol=0.1 * rtol)

    res = integrate(outer, 0.0, pmax, breakpoints=np.linspace(0.0, pmax, 17), rtol=rtol)
    gamma = 32.0 * math.pi**2 * gas.nu * res.value
    err = 32.0 * math.pi**2 * gas.nu * res.error
    if gamma < 0:
        raise ArithmeticError(f"negative dissipator rate {gamma!r}")
    return (gamma, err) if return_error else gamma


def gamma_fast(pot: RadialPotential, gas: GasParameters) -> float:
    """Fast-particle limit of Gamma for the built-in potentials."""
    check_strength(pot, gas)
    base = gas.nu * gas.u**2 / math.sqrt(gas.theta)
    if pot.kind == GAUSSIAN:
        return (2.0 * math.pi) ** 1.5 * base
    if pot.kind == SQUARE_WELL:
        return 2.0 * SQRT_2PI * base
    raise UnsupportedPotential("fast-particle closed form needs a Gaussian or square-well potential")


def gamma_gaussian(gas: GasParameters) -> float:
    """Exact first-order Born Gamma for the Gaussian potential."""
    return (2.0 * math.pi) ** 1.5 * gas.nu * gas.u**2 / (math.sqrt(gas.theta) * (1.0 + 1.0 / (8.0 * gas.theta)))


def squarewell_correction_factor(theta: float) -> float:
    return 1.0 - 9.0 / (16.0 * theta)


def gamma_squarewell_interpolated(gas: GasParameters) -> float:
    """Square-well Gamma from the interpolated xi-integral, fast form times (1 - 9/(16 theta))."""
    return 2.0 * SQRT_2PI * gas.nu * gas.u**2 / math.sqrt(gas.theta) * squarewell_correction_factor(gas.theta)


def squarewell_transfer_exact(p, u: float = 1.0):
    """Exact square-well xi-integral int_0^1 (dxi/xi) B(p, xi)^2.

    u^2 / (128 p^4) * (32 p^4 - 8 p^2 - 1 + cos 4p + 4p sin 4p), with a series
    below p = 0.05 where the bracket cancels to O(p^6).
    """
    p = np.asarray(p, dtype=float)
    small = p < 0.05
    q = np.where(small, 1.0, p)
    exact = (32 * q**4 - 8 * q**2 - 1 + np.cos(4 * q) + 4 * q * np.sin(4 * q)) / (128 * q**4)
    series = 2 * p**2 / 9 - 4 * p**4 / 45 + 32 * p**6 / 1575 - 128 * p**8 / 42525 + 1024 * p**10 / 3274425
    out = u * u * np.where(small, series, exact)
    return out.item() if out.ndim == 0 else out


def squarewell_transfer_interpolation(p, u: float = 1.0):
    """(u^2/4)(1 - exp(-8 p^2 / 9)): matches 2 p^2 u^2 / 9 at small p and u^2/4 at large p."""
    p = np.asarray(p, dtype=float)
    out = 0.25 * u * u * -np.expm1(-8.0 * p * p / 9.0)
    return out.item() if out.ndim == 0 else out


def interpolation_error_scan(p_grid) -> tuple[float, float]:
    """Location and size of the largest relative deviation of the interpolation.

    The deviation is normalised by the interpolated value.
    """
    p_grid = np.asarray(p_grid, dtype=float)
    approx = squarewell_transfer_interpolation(p_grid)
    rel = np.abs(approx - squarewell_transfer_exact(p_grid)) / approx
    i = int(np.argmax(rel))
    return float(p_grid[i]), float(rel[i])


def lamb_shift_ldl(model: SpinModel, pot: RadialPotential, gas: GasParameters, order: int = 1) -> np.ndarray:
    """Lamb-shift Hamiltonian of the LDL generator.

    order 1: nu * int V d^3r * sum_i mu_i A_ii.
    order 2 (square well only): (4 pi/3) nu u sum_i mu_i (A_ii - (2u/theta) <i|F^2|i>).
    """
    check_strength(pot, gas)
    if order == 1:
        return gas.nu * pot.volume_integral() * model.mean_field()
    if order != 2:
        raise ValueError(f"order must be 1 or 2, got {order}")
    if pot.kind != SQUARE_WELL:
        raise UnsupportedPotential("second-order Lamb shift is only available for the square well")
    if gas.theta < 10:
        warnings.warn(f"second-order Lamb shift assumes theta >> 1 (theta = {gas.theta})", stacklevel=2)
    a = jump_operators(model)
    f2 = model.f @ model.f
    h = np.zeros((model.dim_s, model.dim_s), dtype=complex)
    for i, w in enumerate(model.mu):
        h += w * (a[i, i] - (2.0 * gas.u / gas.theta) * model.f_block(i, i, f2))
    return 4.0 * math.pi / 3.0 * gas.nu * gas.u * h


def kernel_K(p: float, r: float, r_prime: float, *, rtol: float = 1e-11) -> float:
    """K(r, r') = int_0^1 (dxi/xi) sin(2 p r xi) sin(2 p r' xi).

    The integrand tends to 4 p^2 r r' xi at xi -> 0; Gauss-Kronrod nodes never
    touch xi = 0, and the value there is taken as 0. Panels are no wider than
    half a period of the faster factor.
    """
    if p <= 0 or r <= 0 or r_prime <= 0:
        raise ValueError("p, r and r' must be positive")
    if r == r_prime:
        raise ValueError("r = r' is the logarithmic singularity of the limiting kernel")
    half_period = math.pi / (2.0 * p * max(r, r_prime))

    def integrand(xi):
        safe = np.where(xi > 0, xi, 1.0)
        return np.where(xi > 0, np.sin(2 * p * r * xi) * np.sin(2 * p * r_prime * xi) / safe, 0.0)

    return integrate(integrand, 0.0, 1.0, breakpoints=np.arange(half_period, 1.0, half_period), rtol=rtol).value


def kernel_log_limit(r, r_prime):
    """Large-momentum limit (1/2) ln((r + r') / |r - r'|)."""
    r = np.asarray(r, dtype=float)
    r_prime = np.asarray(r_prime, dtype=float)
    return 0.5 * np.log((r + r_prime) / np.abs(r - r_prime))


def born_error_scale(gas: GasParameters) -> float:
    """Exponentially small Lamb-shift error scale exp(-theta)/sqrt(theta); diagnostic only."""
    return math.exp(-gas.theta) / math.sqrt(gas.theta)


def ldl_coefficients(pot: RadialPotential, gas: GasParameters, *, rtol: float = 1e-10) -> LdlCoefficients:
    gamma, err = gamma_quadrature(pot, gas, rtol=rtol, return_error=True)
    closed = factor = None
    if pot.kind == GAUSSIAN:
        closed = gamma_gaussian(gas)
        factor = 1.0 / (1.0 + 1.0 / (8.0 * gas.theta))
    elif pot.kind == SQUARE_WELL:
        closed = gamma_squarewell_interpolated(gas)
        factor = squarewell_correction_factor(gas.theta)
    return LdlCoefficients(gamma, gas.nu * pot.volume_integral(), closed, factor, err)
