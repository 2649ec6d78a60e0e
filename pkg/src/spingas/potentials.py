"""Spherically symmetric potentials and the two integrals both generators use.

* the on-shell Born amplitude  B(p, xi) = int_0^inf V(r) sin(2 p r xi) r dr
* the straight-line trajectory integral  J(p, b) = int V(sqrt(b^2 + p^2 t^2)) dt

Both depend on a single combination of their arguments: B only on the
momentum transfer k = 2 p xi, and J = S(b) / p where S is the trajectory
integral at unit momentum. The ``*_transfer`` and ``trajectory_profile``
functions expose those reduced forms; everything is in units hbar = m = d = 1.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from .quadrature import integrate

GAUSSIAN = "gaussian"
SQUARE_WELL = "square_well"
TABULATED = "tabulated"
KINDS = (GAUSSIAN, SQUARE_WELL, TABULATED)

# impact-parameter / radial cutoff for the Gaussian tail: exp(-32) ~ 1e-14
GAUSSIAN_CUTOFF = 8.0

_GL3_X, _GL3_W = np.polynomial.legendre.leggauss(3)


@dataclass(frozen=True, eq=False)
class RadialPotential:
    """V(r) = u * shape(r) for the built-ins; sampled values for ``tabulated``.

    For tabulated potentials ``u`` is only the characteristic strength used by
    regime diagnostics; the samples carry the actual values. Between samples
    the potential is a monotone cubic (PCHIP) interpolant, below the first
    sample it is held constant, and beyond the last sample it is zero.
    """

    kind: str
    u: float
    r: np.ndarray | None = None
    v: np.ndarray | None = None
    _interp: PchipInterpolator | None = field(default=None, init=False, repr=False)
    _profile_cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}; expected one of {KINDS}")
        if not math.isfinite(self.u):
            raise ValueError("strength u must be finite")
        if self.kind == TABULATED:
            r = np.array(self.r, dtype=float)
            v = np.array(self.v, dtype=float)
            if r.ndim != 1 or r.shape != v.shape or r.size < 2:
                raise ValueError("tabulated potential needs matching 1-D r and V arrays (>= 2 samples)")
            if not (np.all(np.isfinite(r)) and np.all(np.isfinite(v))):
                raise ValueError("tabulated samples must be finite")
            if r[0] < 0 or np.any(np.diff(r) <= 0):
                raise ValueError("tabulated r grid must be strictly increasing and start at r >= 0")
            r.setflags(write=False)
            v.setflags(write=False)
            object.__setattr__(self, "r", r)
            object.__setattr__(self, "v", v)
            object.__setattr__(self, "_interp", PchipInterpolator(r, v, extrapolate=False))
        elif self.r is not None or self.v is not None:
            raise ValueError(f"{self.kind} potential takes no samples")

    @classmethod
    def gaussian(cls, u: float) -> "RadialPotential":
        return cls(GAUSSIAN, float(u))

    @classmethod
    def square_well(cls, u: float) -> "RadialPotential":
        return cls(SQUARE_WELL, float(u))

    @classmethod
    def tabulated(cls, r, v, u: float | None = None) -> "RadialPotential":
        v_arr = np.asarray(v, dtype=float)
        if u is None:
            u = float(v_arr[np.argmax(np.abs(v_arr))]) if v_arr.size else 0.0
        return cls(TABULATED, float(u), np.asarray(r, dtype=float), v_arr)

    @classmethod
    def from_csv(cls, path: str | Path, u: float | None = None) -> "RadialPotential":
        """Two-column ``r, V`` CSV; a non-numeric header row and ``#`` comments are skipped."""
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0].lstrip().startswith("#"):
                    continue
                try:
                    r_val, v_val = float(rec[0]), float(rec[1])
                except (ValueError, IndexError):
                    if rows:
                        raise ValueError(f"malformed row in {path}: {rec!r}") from None
                    continue  # header
                rows.append((r_val, v_val))
        if not rows:
            raise ValueError(f"no samples in {path}")
        arr = np.array(rows)
        return cls.tabulated(arr[:, 0], arr[:, 1], u=u)

    def scaled(self, factor: float) -> "RadialPotential":
        if self.kind == TABULATED:
            return RadialPotential.tabulated(self.r, self.v * factor, u=self.u * factor)
        return RadialPotential(self.kind, self.u * factor)

    @property
    def support(self) -> float:
        """Radius beyond which V is treated as zero (also the impact-parameter cutoff)."""
        if self.kind == SQUARE_WELL:
            return 1.0
        if self.kind == GAUSSIAN:
            return GAUSSIAN_CUTOFF
        return float(self.r[-1])

    @property
    def knots(self) -> np.ndarray:
        """Radii where V is not smooth; quadrature panels start there."""
        if self.kind == SQUARE_WELL:
            return np.array([1.0])
        if self.kind == GAUSSIAN:
            return np.empty(0)
        return self.r

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind == GAUSSIAN:
            return self.u * np.exp(-0.5 * r * r)
        if self.kind == SQUARE_WELL:
            return np.where(r <= 1.0, self.u, 0.0)
        out = np.zeros_like(r)
        inside = (r >= self.r[0]) & (r <= self.r[-1])
        out[inside] = self._interp(r[inside])
        out[r < self.r[0]] = self.v[0]
        return out

    def volume_integral(self) -> float:
        """int V(r) d^3r."""
        if self.kind == GAUSSIAN:
            return (2.0 * math.pi) ** 1.5 * self.u
        if self.kind == SQUARE_WELL:
            return 4.0 * math.pi / 3.0 * self.u
        # PCHIP is cubic per interval, so r^2 V is quintic and 3-point Gauss is exact
        lo, hi = self.r[:-1], self.r[1:]
        half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)
        x = mid[:, None] + half[:, None] * _GL3_X[None, :]
        inner = np.sum(half[:, None] * _GL3_W[None, :] * x * x * self._interp(x))
        core = self.v[0] * self.r[0] ** 3 / 3.0
        return float(4.0 * math.pi * (inner + core))


# --- Born amplitude ---------------------------------------------------------

def born_transfer(pot: RadialPotential, k, *, rtol: float = 1e-11):
    """Sine transform int_0^inf V(r) sin(k r) r dr as a function of momentum transfer k >= 0."""
    k = np.asarray(k, dtype=float)
    if np.any(k < 0):
        raise ValueError("momentum transfer must be non-negative")
    if pot.kind == GAUSSIAN:
        out = math.sqrt(2.0 * math.pi) * pot.u * 0.5 * k * np.exp(-0.5 * k * k)
    elif pot.kind == SQUARE_WELL:
        out = pot.u * _sinc_moment(k)
    else:
        out = _tabulated_transfer(pot, k.ravel(), rtol).reshape(k.shape)
    return out.item() if np.ndim(out) == 0 else out


def _sinc_moment(k: np.ndarray) -> np.ndarray:
    # (sin k - k cos k) / k^2, series below k = 1e-2 to avoid cancellation
    k = np.asarray(k, dtype=float)
    small = k < 1e-2
    ks = np.where(small, 1.0, k)
    exact = (np.sin(ks) - ks * np.cos(ks)) / (ks * ks)
    series = k / 3.0 - k**3 / 30.0 + k**5 / 840.0
    return np.where(small, series, exact)


def _tabulated_transfer(pot: RadialPotential, k: np.ndarray, rtol: float, chunk: int = 32) -> np.ndarray:
    out = np.zeros(k.size)
    rmax = pot.support
    scale = integrate(lambda r: np.abs(pot(r)) * r, 0.0, rmax, breakpoints=pot.knots, rtol=1e-8).value
    if scale == 0.0:
        return out
    order = np.argsort(k)
    ks = k[order]
    nz = np.flatnonzero(ks > 0)
    for start in range(0, nz.size, chunk):
        idx = nz[start:start + chunk]
        kk = ks[idx]
        half_period = math.pi / kk.max()
        osc = np.arange(0.0, rmax, half_period)
        res = integrate(
            lambda r: pot(r)[None, :] * r[None, :] * np.sin(kk[:, None] * r[None, :]),
            0.0,
            rmax,
            breakpoints=np.concatenate([pot.knots, osc]),
            rtol=rtol,
            atol=rtol * scale * 1e-3,
        )
        out[order[idx]] = res.value
    return out


def born_amplitude(pot: RadialPotential, p, xi, *, rtol: float = 1e-11):
    """B(p, xi) = int_0^inf V(r) sin(2 p r xi) r dr, with xi = sin(scattering angle / 2).

    Closed forms for the built-in potentials; adaptive quadrature with panels
    no wider than half the sine period for tabulated ones.
    """
    p = np.asarray(p, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if np.any(p <= 0):
        raise ValueError("momentum must be positive")
    if np.any((xi < 0) | (xi > 1)):
        raise ValueError("xi must lie in [0, 1]")
    return born_transfer(pot, 2.0 * p * xi, rtol=rtol)


# --- straight-line trajectory integral --------------------------------------

def trajectory_profile(pot: RadialPotential, b, *, rtol: float = 1e-12):
    """S(b) = int V(sqrt(b^2 + z^2)) dz over the whole line, so that J(p, b) = S(b) / p."""
    b = np.asarray(b, dtype=float)
    if np.any(b < 0):
        raise ValueError("impact parameter must be non-negative")
    if pot.kind == GAUSSIAN:
        out = math.sqrt(2.0 * math.pi) * pot.u * np.exp(-0.5 * b * b)
    elif pot.kind == SQUARE_WELL:
        out = 2.0 * pot.u * np.sqrt(np.clip(1.0 - b * b, 0.0, None))
    else:
        flat = b.ravel()
        out = np.array([_tabulated_profile(pot, float(x), rtol) for x in flat]).reshape(b.shape)
    return out.item() if np.ndim(out) == 0 else out


def _tabulated_profile(pot: RadialPotential, b: float, rtol: float) -> float:
    key = (b, rtol)
    cache = pot._profile_cache
    if key in cache:
        return cache[key]
    rmax = pot.support
    if b >= rmax:
        val = 0.0
    elif b == 0.0:
        val = 2.0 * integrate(pot, 0.0, rmax, breakpoints=pot.knots, rtol=rtol).value
    else:
        # r = b cosh(s) removes the 1/sqrt(r^2 - b^2) endpoint singularity
        knots = pot.knots[pot.knots > b]
        s_knots = np.arccosh(knots / b)
        s_max = math.acosh(rmax / b)

        def integrand(s):
            rr = b * np.cosh(s)
            return pot(rr) * rr

        val = 2.0 * integrate(integrand, 0.0, s_max, breakpoints=s_knots, rtol=rtol).value
    if len(cache) < 200_000:
        cache[key] = val
    return val


def line_integral(pot: RadialPotential, p, b, *, rtol: float = 1e-12):
    """J(p, b) = int V(sqrt(b^2 + p^2 t^2)) dt = U0 tau along a straight trajectory."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ValueError("momentum must be positive")
    prof = np.asarray(trajectory_profile(pot, b, rtol=rtol))
    out = prof / p
    return out.item() if np.ndim(out) == 0 else out
