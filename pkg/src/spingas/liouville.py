"""GKSL generators and density-matrix propagation.

Superoperators use the column-stacking convention vec(rho) = rho.ravel(order="F"),
for which vec(A rho B) = (B^T kron A) vec(rho). The generator is

    L[rho] = -i [H_eff, rho] + sum_k g_k (A_k rho A_k^+ - 1/2 {A_k^+ A_k, rho}).
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .cm import cm_c1, cm_c2, cm_refracted
from .ldl import gamma_quadrature, lamb_shift_ldl
from .model import (
    HERMITIAN_TOL,
    DensityMatrix,
    SpinModel,
    hermiticity_defect,
    jump_operators,
)
from .potentials import RadialPotential

logger = logging.getLogger(__name__)

EXPM_MAX_DIM = 16
POSITIVITY_FLOOR = -1e-8
TRACE_DRIFT_TOL = 1e-12


class PositivityError(ArithmeticError):
    """Propagated state has an eigenvalue below the positivity floor."""


class StepSizeUnderflow(ArithmeticError):
    pass


class TraceRenormalized(UserWarning):
    """The adaptive integrator rescaled the trace after drift above 1e-12."""


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).ravel(order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape(dim, dim, order="F")


@dataclass(frozen=True)
class GkslGenerator:
    h_eff: np.ndarray
    rates: tuple[float, ...]
    jumps: np.ndarray  # shape (n_channels, dim, dim)

    def __post_init__(self):
        h = np.array(self.h_eff, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError(f"h_eff must be square, got {h.shape}")
        if hermiticity_defect(h) > HERMITIAN_TOL:
            raise ValueError(f"h_eff is not Hermitian (defect {hermiticity_defect(h):.3e})")
        d = h.shape[0]
        jumps = np.array(self.jumps, dtype=complex).reshape(-1, d, d)
        rates = tuple(float(r) for r in self.rates)
        if len(rates) != jumps.shape[0]:
            raise ValueError("need one rate per jump operator")
        if any(r < 0 or not math.isfinite(r) for r in rates):
            raise ValueError("rates must be finite and non-negative")
        h.setflags(write=False)
        jumps.setflags(write=False)
        object.__setattr__(self, "h_eff", h)
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "rates", rates)

    @property
    def dim(self) -> int:
        return self.h_eff.shape[0]

    @property
    def channels(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.rates, self.jumps))

    @cached_property
    def _decay(self) -> np.ndarray:
        # sum_k g_k A_k^+ A_k
        g = np.asarray(self.rates)
        return np.einsum("k,kji,kjl->il", g, self.jumps.conj(), self.jumps) if g.size else np.zeros_like(self.h_eff)

    @cached_property
    def _scaled(self) -> tuple[np.ndarray, np.ndarray]:
        # sqrt(g_k) A_k and its adjoint, stacked for one batched sandwich
        s = np.sqrt(np.asarray(self.rates))[:, None, None] * self.jumps
        return s, np.ascontiguousarray(s.conj().transpose(0, 2, 1))

    def dissipator_apply(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        out = -0.5 * (self._decay @ rho + rho @ self._decay)
        if self.rates:
            s, s_dag = self._scaled
            out += (s @ rho @ s_dag).sum(axis=0)
        return out

    def apply(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        return -1j * (self.h_eff @ rho - rho @ self.h_eff) + self.dissipator_apply(rho)

    def norm_bound(self) -> float:
        """Cheap upper bound on the generator's operator norm."""
        bound = 2.0 * np.linalg.norm(self.h_eff, 2)
        for g, a in zip(self.rates, self.jumps):
            bound += 2.0 * g * np.linalg.norm(a, 2) ** 2
        return float(bound)

    @cached_property
    def liouvillian(self) -> np.ndarray:
        d = self.dim
        eye = np.eye(d)
        sup = -1j * (np.kron(eye, self.h_eff) - np.kron(self.h_eff.T, eye))
        sup -= 0.5 * (np.kron(eye, self._decay) + np.kron(self._decay.T, eye))
        for g, a in zip(self.rates, self.jumps):
            sup += g * np.kron(a.conj(), a)
        sup.setflags(write=False)
        return sup


def dissipator_apply(gen: GkslGenerator, rho) -> np.ndarray:
    """D[rho] alone (no commutator term)."""
    return gen.dissipator_apply(rho)


def build_generator(model: SpinModel, lamb, rate: float, *, h_s=None) -> GkslGenerator:
    """Channels (rate * mu_j, A_ij) over all (i, j); zero-weight channels are dropped."""
    if rate < 0 or not math.isfinite(rate):
        raise ValueError(f"rate must be finite and non-negative, got {rate!r}")
    h_s = model.h_s if h_s is None else np.asarray(h_s)
    a = jump_operators(model)
    rates, jumps = [], []
    for j, w in enumerate(model.mu):
        if rate * w == 0.0:
            continue
        for i in range(model.dim_g):
            rates.append(rate * w)
            jumps.append(a[i, j])
    jumps_arr = np.array(jumps).reshape(-1, model.dim_s, model.dim_s)
    return GkslGenerator(h_s + np.asarray(lamb), tuple(rates), jumps_arr)


def ldl_generator(model: SpinModel, pot: RadialPotential, gas, *, order: int = 1) -> GkslGenerator:
    return build_generator(model, lamb_shift_ldl(model, pot, gas, order), gamma_quadrature(pot, gas))


def cm_generator(model: SpinModel, pot: RadialPotential, gas, *, f_expect: float | None = None) -> GkslGenerator:
    """CM generator; with ``f_expect`` the square-well refraction correction is used."""
    if f_expect is None:
        c1, c2 = cm_c1(pot, gas), cm_c2(pot, gas)
    else:
        c1, c2 = cm_refracted(gas, f_expect, pot)
    return build_generator(model, c1 * model.mean_field(), c2)


# --- propagation ------------------------------------------------------------

def _state_problems(rho: np.ndarray, t: float) -> None:
    lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if lam < POSITIVITY_FLOOR:
        raise PositivityError(f"minimum eigenvalue {lam:.3e} at t = {t!r}")


def _as_rho(rho0) -> np.ndarray:
    return rho0.rho if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)


def _expm_grid(gen: GkslGenerator, rho: np.ndarray, times: np.ndarray) -> np.ndarray:
    if gen.dim > EXPM_MAX_DIM:
        raise ValueError(f"expm path is limited to dim <= {EXPM_MAX_DIM}; use method='rk_adaptive'")
    sup = gen.liouvillian
    v0 = vec(rho)
    out = np.empty((times.size, gen.dim, gen.dim), dtype=complex)
    for n, t in enumerate(times):
        out[n] = unvec(expm(sup * t) @ v0, gen.dim) if t > 0 else rho
    return out


# Dormand-Prince 5(4) tableau
_DP_A = np.zeros((7, 7))
_DP_A[1, :1] = [1 / 5]
_DP_A[2, :2] = [3 / 40, 9 / 40]
_DP_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_DP_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_DP_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_DP_A[6, :6] = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
_DP_B5 = _DP_A[6].copy()
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_DP_E = _DP_B5 - _DP_B4


def _rk_grid(gen: GkslGenerator, rho: np.ndarray, times: np.ndarray, rtol: float, atol: float) -> np.ndarray:
    d = gen.dim
    # integrate vec(rho); small generators use the cached Liouvillian matrix
    if d <= EXPM_MAX_DIM:
        sup = np.ascontiguousarray(gen.liouvillian)

        def rhs(v):
            return sup @ v
    else:
        def rhs(v):
            return vec(gen.apply(unvec(v, d)))

    out = np.empty((times.size, d, d), dtype=complex)
    t = 0.0
    scale = max(gen.norm_bound(), 1e-300)
    h = min(0.1 / scale, times[-1] if times.size and times[-1] > 0 else 1.0)
    v = vec(rho).astype(complex)
    k = np.empty((7, d * d), dtype=complex)
    k[0] = rhs(v)
    renormalized = False
    for n, t_target in enumerate(times):
        while t < t_target:
            step = min(h, t_target - t)
            if step <= 1e-14 * max(1.0, abs(t)):
                raise StepSizeUnderflow(f"step size underflow at t = {t!r}")
            for s in range(1, 7):
                k[s] = rhs(v + step * (_DP_A[s, :s] @ k[:s]))
            v5 = v + step * (_DP_B5 @ k)
            tol = atol + rtol * np.maximum(np.abs(v), np.abs(v5))
            err = math.sqrt(np.mean(np.abs(step * (_DP_E @ k) / tol) ** 2))
            factor = min(5.0, max(0.2, 0.9 * (err if err > 0 else 1e-10) ** -0.2))
            if err <= 1.0:
                t = t + step if t + step < t_target else t_target
                r = unvec(v5, d)
                r = 0.5 * (r + r.conj().T)
                drift = np.trace(r).real - 1.0
                if abs(drift) > TRACE_DRIFT_TOL:
                    r = r / (1.0 + drift)
                    renormalized = True
                _state_problems(r, t)
                v = vec(r)
                k[0] = rhs(v)  # FSAL is lost after re-Hermitization
                # a step shortened to land on an output time does not shrink h
                h = max(h, step * factor) if step < h else step * factor
            else:
                h = step * factor
        out[n] = unvec(v, d)
    if renormalized:
        warnings.warn("trace drift above 1e-12 was renormalised during adaptive stepping",
                      TraceRenormalized, stacklevel=3)
    return out


def evolve_grid(gen: GkslGenerator, rho0, times, method: str = "expm", *,
                rtol: float = 1e-10, atol: float = 1e-13) -> np.ndarray:
    """States at each of ``times`` (ascending, >= 0); returns shape (n_t, dim, dim)."""
    rho = _as_rho(rho0)
    if rho.shape != (gen.dim, gen.dim):
        raise ValueError(f"state has shape {rho.shape}, generator acts on dim {gen.dim}")
    times = np.asarray(times, dtype=float).ravel()
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be non-negative and ascending")
    if times.size == 0:
        return np.empty((0, gen.dim, gen.dim), dtype=complex)
    if method == "expm":
        out = _expm_grid(gen, rho, times)
        for t, r in zip(times, out):
            _state_problems(r, t)
        return out
    if method == "rk_adaptive":
        return _rk_grid(gen, rho, times, rtol, atol)
    raise ValueError(f"unknown method {method!r}; expected 'expm' or 'rk_adaptive'")


def evolve(gen: GkslGenerator, rho0, t: float, method: str = "expm", **kw) -> DensityMatrix:
    if t < 0:
        raise ValueError("t must be non-negative")
    rho = evolve_grid(gen, rho0, [t], method, **kw)[0]
    return DensityMatrix(rho, check=False)


def trajectory_header(dim: int) -> list[str]:
    cols = ["t"]
    for k in range(dim):
        for l in range(dim):
            cols += [f"rho_{k}{l}_re", f"rho_{k}{l}_im"]
    return cols


def trajectory_rows(times, states) -> list[list[str]]:
    rows = []
    for t, rho in zip(times, states):
        flat = np.asarray(rho).ravel()  # row-major
        vals = [float(t)]
        for z in flat:
            vals += [z.real, z.imag]
        rows.append([f"{v:.17g}" for v in vals])
    return rows


def write_trajectory_csv(path: str | Path, times, states) -> None:
    states = np.asarray(states)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(states.shape[-1]))
        w.writerows(trajectory_rows(times, states))
