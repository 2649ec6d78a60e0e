"""LDL versus CM: temperature sweeps, the Lamb-shift equality and discrepancy scales."""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .cm import cm_c1, cm_c2
from .ldl import gamma_gaussian, gamma_quadrature, gamma_squarewell_interpolated, squarewell_correction_factor
from .model import GasParameters, SpinModel
from .potentials import GAUSSIAN, SQUARE_WELL, RadialPotential
from .quadrature import QuadratureError

logger = logging.getLogger(__name__)

SWEEP_RTOL = 1e-10


class MonotonicityError(ArithmeticError):
    """|ratio - 1| failed to decrease with theta for a built-in potential."""

    def __init__(self, message: str, records):
        super().__init__(message)
        self.records = records


@dataclass(frozen=True)
class ComparisonRecord:
    theta: float
    gamma_ldl: float
    gamma_ldl_closed: float
    c2_cm: float
    ratio: float
    lamb_ldl_coeff: float
    lamb_cm_coeff: float
    correction_factor: float
    hh_estimate: float
    dd_estimate: float
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


def discrepancy_estimates(model: SpinModel, gas: GasParameters) -> tuple[float, float]:
    """Order-of-magnitude relative discrepancies (hh, dd) between the generators.

    hh: Lamb shifts, max(|u| ||F|| / theta, exp(-theta) / sqrt(theta)).
    dd: dissipators normalised by nu u^2 ||F||^2 / sqrt(theta), max(|u| ||F||, 1) / theta.
    ||F|| is the spectral norm.
    """
    return _estimates(model.f_norm, gas)


def _estimates(f_norm: float, gas: GasParameters) -> tuple[float, float]:
    s = abs(gas.u) * f_norm
    hh = max(s / gas.theta, math.exp(-gas.theta) / math.sqrt(gas.theta))
    dd = max(s, 1.0) / gas.theta
    return hh, dd


def closed_forms(pot: RadialPotential, gas: GasParameters) -> tuple[float, float]:
    """(closed-form Gamma, finite-theta factor) for the built-ins; NaNs otherwise."""
    if pot.kind == GAUSSIAN:
        return gamma_gaussian(gas), 1.0 / (1.0 + 1.0 / (8.0 * gas.theta))
    if pot.kind == SQUARE_WELL:
        return gamma_squarewell_interpolated(gas), squarewell_correction_factor(gas.theta)
    return math.nan, math.nan


def compare_at(pot: RadialPotential, model: SpinModel, gas: GasParameters, *, rtol: float = SWEEP_RTOL) -> ComparisonRecord:
    hh, dd = discrepancy_estimates(model, gas)
    closed, factor = closed_forms(pot, gas)
    try:
        gamma = gamma_quadrature(pot, gas, rtol=rtol)
        c2 = cm_c2(pot, gas)
        lamb_cm = cm_c1(pot, gas)
    except (QuadratureError, ArithmeticError) as exc:
        logger.error("theta=%g failed: %s", gas.theta, exc)
        nan = math.nan
        return ComparisonRecord(gas.theta, nan, closed, nan, nan, gas.nu * pot.volume_integral(), nan,
                                factor, hh, dd, f"{type(exc).__name__}: {exc}")
    ratio = gamma / c2 if c2 != 0 else math.nan
    return ComparisonRecord(gas.theta, gamma, closed, c2, ratio, gas.nu * pot.volume_integral(), lamb_cm,
                            factor, hh, dd)


def monotone_violations(records, theta_min: float = 10.0) -> list[float]:
    """Thetas (>= theta_min) at which |ratio - 1| did not decrease from the previous row."""
    rows = [r for r in records if r.ok and r.theta >= theta_min]
    return [b.theta for a, b in zip(rows, rows[1:]) if abs(b.ratio - 1.0) >= abs(a.ratio - 1.0)]


def temperature_sweep(pot: RadialPotential, model: SpinModel, nu: float, u: float, theta_grid, *,
                      threads: int | None = None, check_monotone: bool = True) -> list[ComparisonRecord]:
    """One ComparisonRecord per theta, in grid order.

    Rows are independent, so they may run on ``threads`` workers; a failing row
    is kept with its error message and the sweep continues. For the built-in
    potentials a non-monotone |ratio - 1| above theta = 10 raises
    MonotonicityError (records attached); for tabulated ones it is logged.
    """
    grid = [float(t) for t in theta_grid]
    if any(t <= 0 for t in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("theta_grid must be positive and strictly ascending")
    if not math.isclose(pot.u, u, rel_tol=1e-12, abs_tol=1e-300):
        raise ValueError(f"potential strength {pot.u!r} differs from u={u!r}")

    def row(theta):
        return compare_at(pot, model, GasParameters(nu, theta, u))

    workers = max(1, int(threads or 1))
    if workers == 1 or len(grid) < 2:
        records = [row(t) for t in grid]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(row, grid))
    if check_monotone and u != 0:
        bad = monotone_violations(records)
        if bad:
            msg = f"|ratio - 1| not decreasing at theta = {bad}"
            if pot.kind in (GAUSSIAN, SQUARE_WELL):
                raise MonotonicityError(msg, records)
            logger.warning(msg)
    return records


def fit_inverse_theta(records, theta_min: float = 20.0, theta_max: float = 2000.0) -> float:
    """Least-squares C in |ratio - 1| ~ C / theta over the given window."""
    rows = [r for r in records if r.ok and theta_min <= r.theta <= theta_max]
    if not rows:
        raise ValueError("no rows in the fit window")
    x = np.array([1.0 / r.theta for r in rows])
    y = np.array([abs(r.ratio - 1.0) for r in rows])
    return float(x @ y / (x @ x))


FIELDS = [f.name for f in fields(ComparisonRecord)]


def records_to_csv(records, params: dict | None = None) -> str:
    """CSV text: '#'-prefixed parameter echo, header, one row per record (17 significant digits)."""
    buf = io.StringIO()
    for key, val in (params or {}).items():
        buf.write(f"# {key}={val}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIELDS)
    for r in records:
        w.writerow([v if isinstance(v, str) else f"{v:.17g}" for v in asdict(r).values()])
    return buf.getvalue()
