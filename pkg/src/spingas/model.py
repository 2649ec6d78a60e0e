"""Dimensionless units, spin-model and gas-parameter types, jump operators.

Internal units fix hbar = m = d = 1: time is measured in m d^2/hbar, energy in
hbar^2/(m d^2) and momentum in hbar/d. Every generator coefficient then depends
only on the three groups

    nu    = n d^3                (density)
    theta = k T m d^2 / hbar^2   (temperature)
    u     = U0 m d^2 / hbar^2    (interaction strength)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
POSITIVITY_TOL = 1e-10

HBAR_SI = 1.054571817e-34
K_B_SI = 1.380649e-23

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


def hermiticity_defect(m: np.ndarray) -> float:
    """max |M - M^dagger| entrywise."""
    m = np.asarray(m)
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


@dataclass(frozen=True)
class UnitSystem:
    """Scales that turn physical inputs into the dimensionless groups.

    ``mass``, ``length`` and ``hbar`` may be given in any consistent unit
    system (SI by default for hbar). Conversions are pure and exactly
    invertible up to rounding.
    """

    mass: float
    length: float
    hbar: float = HBAR_SI

    def __post_init__(self):
        if not (self.mass > 0 and self.length > 0 and self.hbar > 0):
            raise ValueError("mass, length and hbar must be positive")

    @property
    def time(self) -> float:
        return self.mass * self.length**2 / self.hbar

    @property
    def energy(self) -> float:
        return self.hbar**2 / (self.mass * self.length**2)

    @property
    def momentum(self) -> float:
        return self.hbar / self.length

    def gas(self, n: float, kT: float, U0: float) -> "GasParameters":
        """Dimensionless gas parameters from density, thermal energy, strength."""
        return GasParameters(nu=n * self.length**3, theta=kT / self.energy, u=U0 / self.energy)

    def physical(self, gas: "GasParameters") -> dict[str, float]:
        """Inverse of :meth:`gas`: returns ``n``, ``kT`` and ``U0``."""
        return {
            "n": gas.nu / self.length**3,
            "kT": gas.theta * self.energy,
            "U0": gas.u * self.energy,
        }

    def to_time(self, t_dimensionless):
        return np.asarray(t_dimensionless) * self.time

    def from_time(self, t_physical):
        return np.asarray(t_physical) / self.time

    def to_rate(self, rate_dimensionless):
        return np.asarray(rate_dimensionless) / self.time

    def from_rate(self, rate_physical):
        return np.asarray(rate_physical) * self.time


@dataclass(frozen=True)
class GasParameters:
    nu: float
    theta: float
    u: float = 0.0

    def __post_init__(self):
        for name in ("nu", "theta", "u"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
        if self.nu < 0:
            raise ValueError(f"density nu must be non-negative, got {self.nu}")
        if self.theta <= 0:
            raise ValueError(f"temperature theta must be positive, got {self.theta}")

    def with_theta(self, theta: float) -> "GasParameters":
        return GasParameters(self.nu, theta, self.u)

    @property
    def mean_momentum(self) -> float:
        return mean_momentum(self.theta)

    def regime(self) -> dict[str, float]:
        """Validity ratios; each should be << 1.

        dilute     nu                  rare collisions
        fast       1/theta             fast particles
        born       |u|/sqrt(theta)     first-order Born / stroboscopic
        straight   |u|/theta           straight trajectories
        """
        return {
            "dilute": self.nu,
            "fast": 1.0 / self.theta,
            "born": abs(self.u) / math.sqrt(self.theta),
            "straight": abs(self.u) / self.theta,
        }


def _as_matrix(name: str, m, shape: tuple[int, int]) -> np.ndarray:
    arr = np.array(m, dtype=complex)
    if arr.shape != shape:
        raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SpinModel:
    """System Hamiltonian, interaction operator and particle internal weights.

    ``f`` acts on system (x) particle with the system index outermost, i.e.
    ``f[k*dim_g + i, l*dim_g + j] = F_{ki,lj}``.
    """

    dim_s: int
    dim_g: int
    h_s: np.ndarray
    f: np.ndarray
    mu: np.ndarray = field(default=None)

    def __post_init__(self):
        if int(self.dim_s) != self.dim_s or self.dim_s < 2:
            raise ValueError(f"dim_s must be an integer >= 2, got {self.dim_s}")
        if int(self.dim_g) != self.dim_g or self.dim_g < 1:
            raise ValueError(f"dim_g must be an integer >= 1, got {self.dim_g}")
        ds, dg = int(self.dim_s), int(self.dim_g)
        object.__setattr__(self, "dim_s", ds)
        object.__setattr__(self, "dim_g", dg)
        h_s = _as_matrix("h_s", self.h_s, (ds, ds))
        f = _as_matrix("f", self.f, (ds * dg, ds * dg))
        mu = np.full(dg, 1.0 / dg) if self.mu is None else np.array(self.mu, dtype=float)
        if mu.shape != (dg,):
            raise ValueError(f"mu has shape {mu.shape}, expected ({dg},)")
        mu.setflags(write=False)
        if hermiticity_defect(h_s) > HERMITIAN_TOL:
            raise ValueError(f"h_s is not Hermitian (defect {hermiticity_defect(h_s):.3e})")
        if hermiticity_defect(f) > HERMITIAN_TOL:
            raise ValueError(f"f is not Hermitian (defect {hermiticity_defect(f):.3e})")
        if np.any(mu < 0):
            raise ValueError("mu must be non-negative")
        if abs(mu.sum() - 1.0) > TRACE_TOL:
            raise ValueError(f"mu must sum to 1 (sum = {mu.sum()!r})")
        object.__setattr__(self, "h_s", h_s)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "mu", mu)

    @property
    def f_norm(self) -> float:
        """Spectral norm of F."""
        return float(np.linalg.norm(self.f, 2))

    def f_block(self, i: int, j: int, op: np.ndarray | None = None) -> np.ndarray:
        """Partial matrix element <i| op |j> on the particle factor (op defaults to F)."""
        op = self.f if op is None else op
        ds, dg = self.dim_s, self.dim_g
        return np.asarray(op).reshape(ds, dg, ds, dg)[:, i, :, j]

    def mean_field(self) -> np.ndarray:
        """sum_i mu_i A_ii, the operator multiplying both Lamb-shift coefficients."""
        a = jump_operators(self)
        return np.einsum("i,ikl->kl", self.mu, a[np.arange(self.dim_g), np.arange(self.dim_g)])

    def f_expectation(self, rho: np.ndarray) -> float:
        """<F> = sum_i mu_i tr[A_ii rho]."""
        return float(np.real(np.trace(self.mean_field() @ np.asarray(rho))))


def jump_operators(model: SpinModel) -> np.ndarray:
    """Jump operators A_ij = <i|F|j>, returned with shape (dim_g, dim_g, dim_s, dim_s).

    ``a[i, j]`` is A_ij; A_ij^dagger = A_ji because F is Hermitian.
    """
    ds, dg = model.dim_s, model.dim_g
    if model.f.shape != (ds * dg, ds * dg):
        raise ValueError(f"f has shape {model.f.shape}, expected {(ds * dg, ds * dg)}")
    return np.ascontiguousarray(model.f.reshape(ds, dg, ds, dg).transpose(1, 3, 0, 2))


@dataclass(frozen=True)
class DensityMatrix:
    rho: np.ndarray
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        rho = np.array(self.rho, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {rho.shape}")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        if self.check:
            problems = density_matrix_problems(rho)
            if problems:
                raise ValueError("invalid density matrix: " + "; ".join(problems))

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    @classmethod
    def pure(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)


def density_matrix_problems(rho: np.ndarray, eig_tol: float = POSITIVITY_TOL) -> list[str]:
    problems = []
    herm = hermiticity_defect(rho)
    if herm > HERMITIAN_TOL:
        problems.append(f"Hermiticity defect {herm:.3e}")
    tr = np.trace(rho)
    if abs(tr - 1.0) > TRACE_TOL:
        problems.append(f"trace {tr:.15g}")
    if herm <= HERMITIAN_TOL:
        lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
        if lam < -eig_tol:
            problems.append(f"minimum eigenvalue {lam:.3e}")
    return problems


def trace_distance(a, b) -> float:
    """(1/2) || a - b ||_1 for Hermitian matrices."""
    a = a.rho if isinstance(a, DensityMatrix) else np.asarray(a)
    b = b.rho if isinstance(b, DensityMatrix) else np.asarray(b)
    d = a - b
    return 0.5 * float(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T))).sum())


def maxwell_boltzmann_pdf(p, theta: float):
    """Isotropic 3-D Maxwell-Boltzmann density f(p) = (2 pi theta)^(-3/2) exp(-p^2 / 2 theta).

    Normalised so that the integral of f(p) 4 pi p^2 dp over [0, inf) is one.
    """
    if theta <= 0:
        raise ValueError(f"theta must be positive, got {theta}")
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("momentum must be non-negative")
    out = (2.0 * np.pi * theta) ** -1.5 * np.exp(-0.5 * p * p / theta)
    return out.item() if out.ndim == 0 else out


def mean_momentum(theta: float) -> float:
    return math.sqrt(8.0 * theta / math.pi)


def momentum_cutoff(theta: float) -> float:
    """Upper momentum limit used by every thermal average (12 thermal widths)."""
    return 12.0 * math.sqrt(theta)
