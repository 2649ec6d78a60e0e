"""Stochastic collision simulator: an independent oracle for the CM generator.

Each trajectory sees Poissonian collisions at the total flux rate R. A
collision draws a momentum p from p^3 f(p), an impact parameter b from b db on
[0, b_max] and an internal state j from mu, then applies

    rho -> tr_gas[ W (rho x |j><j|) W^+ ],   W = exp(-i J(p, b) F),

i.e. the Kraus operators K_i = <i|W|j>. Between collisions rho evolves under
H_S. Trajectory n draws its uniforms from Philox4x32-10 with key = seed and
counter = (draw index, n), so the result does not depend on how trajectories
are split across threads.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .cm import refracted_tau
from .ldl import UnsupportedPotential
from .model import DensityMatrix, GasParameters, SpinModel, mean_momentum
from .potentials import GAUSSIAN, SQUARE_WELL, RadialPotential, line_integral, trajectory_profile

logger = logging.getLogger(__name__)

STRAIGHT = "straight"
REFRACTED = "refracted"
TAU_MODES = (STRAIGHT, REFRACTED)

MOMENTUM_GRID_SIZE = 4096
PROFILE_GRID_SIZE = 2049
DEFAULT_BATCHES = 64

_KIND_CODE = {GAUSSIAN: 0, SQUARE_WELL: 1}
_TABULATED_CODE = 2


# --- Philox4x32-10 ------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _mulhilo(a, b):
    prod = np.uint64(a) * np.uint64(b)
    return prod >> np.uint64(32), prod & np.uint64(0xFFFFFFFF)


@numba.njit(cache=True, nogil=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32 with 10 rounds; all words are uint32 values held in uint64."""
    mask = np.uint64(0xFFFFFFFF)
    c0 = np.uint64(c0)
    c1 = np.uint64(c1)
    c2 = np.uint64(c2)
    c3 = np.uint64(c3)
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    for r in range(10):
        if r > 0:
            k0 = (k0 + np.uint64(0x9E3779B9)) & mask
            k1 = (k1 + np.uint64(0xBB67AE85)) & mask
        hi0, lo0 = _mulhilo(np.uint64(0xD2511F53), c0)
        hi1, lo1 = _mulhilo(np.uint64(0xCD9E8D57), c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@numba.njit(cache=True, nogil=True)
def _to_unit(hi, lo):
    # 53-bit uniform on [0, 1)
    return ((hi >> np.uint64(5)) * np.uint64(67108864) + (lo >> np.uint64(6))) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True, nogil=True)
def _uniform4(event, traj, k0, k1):
    """Four uniforms for one event of one trajectory (two Philox blocks)."""
    mask = np.uint64(0xFFFFFFFF)
    d = np.uint64(2) * np.uint64(event)
    t_lo = np.uint64(traj) & mask
    t_hi = np.uint64(traj) >> np.uint64(32)
    a0, a1, a2, a3 = philox4x32(d & mask, d >> np.uint64(32), t_lo, t_hi, k0, k1)
    d = d + np.uint64(1)
    b0, b1, b2, b3 = philox4x32(d & mask, d >> np.uint64(32), t_lo, t_hi, k0, k1)
    return _to_unit(a0, a1), _to_unit(a2, a3), _to_unit(b0, b1), _to_unit(b2, b3)


def _split_seed(seed: int) -> tuple[np.uint64, np.uint64]:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32)


@numba.njit(cache=True)
def _stream(n, traj, k0, k1):
    out = np.empty(4 * n)
    for e in range(n):
        u0, u1, u2, u3 = _uniform4(e, traj, k0, k1)
        out[4 * e] = u0
        out[4 * e + 1] = u1
        out[4 * e + 2] = u2
        out[4 * e + 3] = u3
    return out


def uniform_stream(seed: int, trajectory: int, n_events: int) -> np.ndarray:
    """The 4 * n_events uniforms a trajectory consumes, in order."""
    k0, k1 = _split_seed(seed)
    return _stream(int(n_events), np.uint64(trajectory), k0, k1)


# --- flux-weighted momentum sampling ------------------------------------------

def flux_momentum_cdf(p, theta: float):
    """CDF of the density proportional to p^3 f(p): 1 - (1 + y) e^{-y}, y = p^2 / (2 theta)."""
    y = 0.5 * np.asarray(p, dtype=float) ** 2 / theta
    return -np.expm1(-y) - y * np.exp(-y)


def momentum_table(theta: float, n: int = MOMENTUM_GRID_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Log-spaced p grid on [1e-4, 12] sqrt(theta) and the CDF at those nodes."""
    p = np.geomspace(1e-4, 12.0, n) * math.sqrt(theta)
    y = 0.5 * p * p / theta
    # small-y series avoids the cancellation in 1 - (1 + y) e^{-y}
    cdf = np.where(y < 1e-3, y * y / 2 - y**3 / 3 + y**4 / 8, flux_momentum_cdf(p, theta))
    return p, cdf


@numba.njit(cache=True, nogil=True)
def _inverse_cdf(u, p_grid, cdf_grid, theta):
    if u <= cdf_grid[0]:
        # CDF ~ y^2 / 2 below the grid
        return math.sqrt(2.0 * theta) * (2.0 * u) ** 0.25
    n = cdf_grid.size
    if u >= cdf_grid[n - 1]:
        return p_grid[n - 1]
    i = np.searchsorted(cdf_grid, u) - 1
    w = (u - cdf_grid[i]) / (cdf_grid[i + 1] - cdf_grid[i])
    return p_grid[i] + w * (p_grid[i + 1] - p_grid[i])


@numba.njit(cache=True)
def _sample_momenta(n, k0, k1, p_grid, cdf_grid, theta):
    out = np.empty(n)
    for e in range(n):
        _, u1, _, _ = _uniform4(e, 0, k0, k1)
        out[e] = _inverse_cdf(u1, p_grid, cdf_grid, theta)
    return out


def sample_momenta(seed: int, n: int, theta: float) -> np.ndarray:
    """n flux-weighted momenta drawn exactly as trajectory 0 draws its collision momenta."""
    k0, k1 = _split_seed(seed)
    p_grid, cdf_grid = momentum_table(theta)
    return _sample_momenta(int(n), k0, k1, p_grid, cdf_grid, float(theta))


# --- configuration and results ---------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    model: SpinModel
    potential: RadialPotential
    gas: GasParameters
    trajectories: int
    t_end: float
    seed: int
    sample_times: tuple[float, ...]
    tau_mode: str = STRAIGHT
    f_expect: float = 0.0
    n_batches: int | None = None

    def __post_init__(self):
        if int(self.trajectories) != self.trajectories or self.trajectories < 1:
            raise ValueError("trajectories must be an integer >= 1")
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise ValueError("t_end must be finite and non-negative")
        times = tuple(float(t) for t in self.sample_times)
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("sample_times must be ascending")
        if times and (times[0] < 0 or times[-1] > self.t_end):
            raise ValueError("sample_times must lie in [0, t_end]")
        if self.tau_mode not in TAU_MODES:
            raise ValueError(f"tau_mode must be one of {TAU_MODES}")
        if self.tau_mode == REFRACTED:
            if self.potential.kind != SQUARE_WELL:
                raise UnsupportedPotential("refracted collisions need the square-well potential")
            if self.f_expect * self.gas.u > 0:
                raise ValueError("refracted collisions need <F> u <= 0")
        _split_seed(self.seed)
        if self.n_batches is not None and self.n_batches < 1:
            raise ValueError("n_batches must be >= 1")
        object.__setattr__(self, "trajectories", int(self.trajectories))
        object.__setattr__(self, "sample_times", times)

    @property
    def batches(self) -> int:
        n = DEFAULT_BATCHES if self.n_batches is None else int(self.n_batches)
        return min(n, self.trajectories)


@dataclass(frozen=True)
class EnsembleResult:
    times: np.ndarray
    mean: np.ndarray          # (n_t, d, d) complex
    se_re: np.ndarray         # (n_t, d, d) standard error of the real parts
    se_im: np.ndarray
    collision_counts: np.ndarray  # per trajectory, over [0, t_end]
    rate: float
    t_end: float
    trajectories: int
    n_batches: int
    seed: int
    stroboscopic: float = field(default=0.0)

    @property
    def collision_mean(self) -> float:
        return float(np.mean(self.collision_counts))

    @property
    def collision_std(self) -> float:
        return float(np.std(self.collision_counts, ddof=1)) if self.trajectories > 1 else 0.0

    def se_scalar(self) -> np.ndarray:
        """Frobenius norm of the complex standard-error matrix at each sample time."""
        return np.sqrt(np.sum(self.se_re**2 + self.se_im**2, axis=(1, 2)))

    def summary(self) -> dict:
        expected = self.rate * self.t_end
        return {
            "trajectories": self.trajectories,
            "n_batches": self.n_batches,
            "seed": self.seed,
            "t_end": self.t_end,
            "collision_rate": self.rate,
            "collisions_expected": expected,
            "collisions_mean": self.collision_mean,
            "collisions_std": self.collision_std,
            "collisions_mean_se": self.collision_std / math.sqrt(self.trajectories),
            "stroboscopic_parameter": self.stroboscopic,
            "sample_times": [float(t) for t in self.times],
            # a single batch has no spread to estimate from
            "se_scalar": [float(s) if math.isfinite(s) else None for s in self.se_scalar()],
        }


def total_collision_rate(pot: RadialPotential, gas: GasParameters) -> float:
    """R = nu pi b_max^2 <p>, the flux through a disc of radius b_max."""
    return gas.nu * math.pi * pot.support**2 * mean_momentum(gas.theta)


def effective_tau_sample(pot: RadialPotential, p, b, mode: str = STRAIGHT, f_expect: float = 0.0):
    """tau with U0 tau = J(p, b) (straight) or the refracted square-well value."""
    if mode == STRAIGHT:
        if pot.u == 0:
            raise ValueError("tau is undefined for u = 0 in straight mode")
        return np.asarray(line_integral(pot, p, b)) / pot.u if np.ndim(p) or np.ndim(b) else line_integral(pot, p, b) / pot.u
    if mode == REFRACTED:
        if pot.kind != SQUARE_WELL:
            raise UnsupportedPotential("refracted mode needs the square-well potential")
        return refracted_tau(p, b, f_expect, pot.u)
    raise ValueError(f"unknown tau mode {mode!r}")


# --- kernel -----------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _phase(p, b, kind, mode, u, f_expect, b_max, prof):
    """J(p, b) for one collision."""
    if mode == 1:
        shift = -2.0 * f_expect * u
        rad = (1.0 - b * b) * p * p + shift
        if b > 1.0 or rad <= 0.0:
            return 0.0
        return u * 2.0 * math.sqrt(rad) / (p * p + shift)
    if kind == 0:
        return math.sqrt(2.0 * math.pi) * u * math.exp(-0.5 * b * b) / p
    if kind == 1:
        return 2.0 * u * math.sqrt(max(1.0 - b * b, 0.0)) / p
    x = b / b_max * (prof.size - 1)
    i = min(int(x), prof.size - 2)
    w = x - i
    return ((1.0 - w) * prof[i] + w * prof[i + 1]) / p


@numba.njit(cache=True, nogil=True)
def _sandwich(u, rho, tmp, out):
    """out = u rho u^+ with explicit loops (tiny matrices, no temporaries)."""
    d = rho.shape[0]
    for k in range(d):
        for l in range(d):
            acc = 0j
            for m in range(d):
                acc += u[k, m] * rho[m, l]
            tmp[k, l] = acc
    for k in range(d):
        for l in range(d):
            acc = 0j
            for m in range(d):
                acc += tmp[k, m] * np.conj(u[l, m])
            out[k, l] += acc


@numba.njit(cache=True, nogil=True)
def _free(rho, dt, evecs, evals, u, tmp, out):
    d = rho.shape[0]
    for k in range(d):
        for l in range(d):
            acc = 0j
            for m in range(d):
                acc += evecs[k, m] * np.exp(-1j * evals[m] * dt) * np.conj(evecs[l, m])
            u[k, l] = acc
    out[:, :] = 0.0
    _sandwich(u, rho, tmp, out)


@numba.njit(cache=True, nogil=True)
def _collide(rho, phase, j, fvecs, fvals, ds, dg, e, kraus, tmp, out):
    """out = sum_i K_i rho K_i^+ with K_i = <i| exp(-i phase F) |j>, Hermitised."""
    for m in range(ds * dg):
        e[m] = np.exp(-1j * phase * fvals[m])
    out[:, :] = 0.0
    for i in range(dg):
        for k in range(ds):
            for l in range(ds):
                acc = 0j
                for m in range(ds * dg):
                    acc += fvecs[k * dg + i, m] * e[m] * np.conj(fvecs[l * dg + j, m])
                kraus[k, l] = acc
        _sandwich(kraus, rho, tmp, out)
    for k in range(ds):
        for l in range(k, ds):
            z = 0.5 * (out[k, l] + np.conj(out[l, k]))
            out[k, l] = z
            out[l, k] = np.conj(z)


@numba.njit(cache=True, nogil=True)
def _run_batch(start, stop, k0, k1, rate, t_end, sample_times, p_grid, cdf_grid, theta,
               b_max, mu_cum, kind, mode, u, f_expect, prof, fvecs, fvals, hvecs, hvals,
               has_h, rho0, ds, dg):
    ns = sample_times.size
    sums = np.zeros((ns, ds, ds), dtype=np.complex128)
    counts = np.zeros(stop - start, dtype=np.int64)
    rho = np.empty((ds, ds), dtype=np.complex128)
    nxt = np.empty((ds, ds), dtype=np.complex128)
    snap = np.empty((ds, ds), dtype=np.complex128)
    umat = np.empty((ds, ds), dtype=np.complex128)
    tmp = np.empty((ds, ds), dtype=np.complex128)
    e = np.empty(ds * dg, dtype=np.complex128)
    for n in range(start, stop):
        rho[:, :] = rho0
        t = 0.0
        s = 0
        event = 0
        count = 0
        while True:
            uw, up, ub, uj = _uniform4(event, n, k0, k1)
            event += 1
            t_next = t - math.log1p(-uw) / rate if rate > 0.0 else math.inf
            while s < ns and sample_times[s] < t_next:
                dt = sample_times[s] - t
                if has_h and dt > 0.0:
                    _free(rho, dt, hvecs, hvals, umat, tmp, snap)
                    sums[s] += snap
                else:
                    sums[s] += rho
                s += 1
            if t_next > t_end:
                break
            if has_h:
                _free(rho, t_next - t, hvecs, hvals, umat, tmp, nxt)
                rho, nxt = nxt, rho
            t = t_next
            count += 1
            p = _inverse_cdf(up, p_grid, cdf_grid, theta)
            b = b_max * math.sqrt(ub)
            j = 0
            while j < dg - 1 and uj >= mu_cum[j]:
                j += 1
            phase = _phase(p, b, kind, mode, u, f_expect, b_max, prof)
            if phase != 0.0:
                _collide(rho, phase, j, fvecs, fvals, ds, dg, e, umat, tmp, nxt)
                rho, nxt = nxt, rho
        counts[n - start] = count
    return sums, counts


def _batch_bounds(n: int, batches: int) -> list[tuple[int, int]]:
    edges = [n * k // batches for k in range(batches + 1)]
    return list(zip(edges[:-1], edges[1:]))


def stroboscopic_parameter(pot: RadialPotential, gas: GasParameters) -> float:
    """|J| for a head-on collision at the mean momentum; must be << 1."""
    return abs(float(trajectory_profile(pot, 0.0))) / mean_momentum(gas.theta)


def run_ensemble(cfg: SimConfig, rho0, *, threads: int | None = None) -> EnsembleResult:
    """Ensemble-averaged density matrix at ``cfg.sample_times``.

    Trajectories are split into ``cfg.batches`` fixed batches; ``threads`` only
    sets how many run at once and never changes the result.
    """
    model, pot, gas = cfg.model, cfg.potential, cfg.gas
    if not math.isclose(pot.u, gas.u, rel_tol=1e-12, abs_tol=1e-300):
        raise ValueError(f"potential strength u={pot.u!r} differs from gas.u={gas.u!r}")
    rho = rho0.rho if isinstance(rho0, DensityMatrix) else DensityMatrix(rho0).rho
    if rho.shape != (model.dim_s, model.dim_s):
        raise ValueError(f"rho0 has shape {rho.shape}, model has dim_s = {model.dim_s}")
    rho = np.ascontiguousarray(rho, dtype=np.complex128)
    rate = total_collision_rate(pot, gas)
    strob = stroboscopic_parameter(pot, gas) if gas.u != 0 else 0.0
    if strob > 0.3:
        logger.warning("stroboscopic parameter |J| = %.3g is not small", strob)

    b_max = pot.support
    if pot.kind in _KIND_CODE:
        kind, prof = _KIND_CODE[pot.kind], np.zeros(2)
    else:
        kind = _TABULATED_CODE
        prof = np.asarray(trajectory_profile(pot, np.linspace(0.0, b_max, PROFILE_GRID_SIZE)), dtype=float)
    mode = 1 if cfg.tau_mode == REFRACTED else 0
    p_grid, cdf_grid = momentum_table(gas.theta)
    mu_cum = np.cumsum(model.mu)
    fvals, fvecs = np.linalg.eigh(model.f)
    hvals, hvecs = np.linalg.eigh(model.h_s)
    has_h = bool(np.any(model.h_s != 0))
    times = np.asarray(cfg.sample_times, dtype=float)
    k0, k1 = _split_seed(cfg.seed)

    def work(bounds):
        start, stop = bounds
        return _run_batch(
            start, stop, k0, k1, rate, float(cfg.t_end), times, p_grid, cdf_grid, float(gas.theta),
            float(b_max), mu_cum, kind, mode, float(gas.u), float(cfg.f_expect), prof,
            np.ascontiguousarray(fvecs), fvals, np.ascontiguousarray(hvecs), hvals, has_h, rho,
            model.dim_s, model.dim_g,
        )

    bounds = _batch_bounds(cfg.trajectories, cfg.batches)
    workers = max(1, int(threads or 1))
    if workers == 1:
        parts = [work(bd) for bd in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, bounds))  # results come back in batch order

    batch_sums = np.stack([p[0] for p in parts])
    sizes = np.array([stop - start for start, stop in bounds], dtype=float)
    counts = np.concatenate([p[1] for p in parts])
    mean = batch_sums.sum(axis=0) / cfg.trajectories
    nb = len(bounds)
    if nb > 1:
        batch_means = batch_sums / sizes[:, None, None, None]
        # batches differ in size by at most one, so equal weighting is used
        se_re = np.std(batch_means.real, axis=0, ddof=1) / math.sqrt(nb)
        se_im = np.std(batch_means.imag, axis=0, ddof=1) / math.sqrt(nb)
    else:
        se_re = np.full(mean.shape, np.nan)
        se_im = np.full(mean.shape, np.nan)
    return EnsembleResult(times, mean, se_re, se_im, counts, rate, float(cfg.t_end),
                          cfg.trajectories, nb, int(cfg.seed), strob)


# --- export -----------------------------------------------------------------

def ensemble_rows(result: EnsembleResult) -> tuple[list[str], list[list[str]]]:
    d = result.mean.shape[-1] if result.mean.size else 0
    header = ["t"]
    for k in range(d):
        for l in range(d):
            header += [f"rho_{k}{l}_re", f"rho_{k}{l}_im"]
    for k in range(d):
        for l in range(d):
            header += [f"se_{k}{l}_re", f"se_{k}{l}_im"]
    rows = []
    for n, t in enumerate(result.times):
        vals = [float(t)]
        for z in result.mean[n].ravel():
            vals += [z.real, z.imag]
        for a, b in zip(result.se_re[n].ravel(), result.se_im[n].ravel()):
            vals += [a, b]
        rows.append([f"{v:.17g}" for v in vals])
    return header, rows


def write_ensemble_csv(path: str | Path, result: EnsembleResult) -> None:
    header, rows = ensemble_rows(result)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
