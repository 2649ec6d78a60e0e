"""Collision simulator versus the CM master equation for a dephasing spin.

    python3 scripts/mc_oracle.py --trajectories 100000 --threads 4
"""
import argparse
import time
from dataclasses import dataclass

import numpy as np

from spingas.colsim import REFRACTED, STRAIGHT, SimConfig, run_ensemble
from spingas.liouville import cm_generator, evolve_grid
from spingas.model import SIGMA_Z, GasParameters, SpinModel, trace_distance
from spingas.potentials import RadialPotential


@dataclass
class OracleConfig:
    nu: float = 0.01
    u: float = 0.05
    theta: float = 100.0
    trajectories: int = 100_000
    t_end: float = 2000.0
    samples: int = 5
    seed: int = 12345
    tau_mode: str = STRAIGHT
    f_expect: float = 0.0
    threads: int = 1


def run(cfg: OracleConfig):
    model = SpinModel(2, 2, np.zeros((2, 2)), np.kron(SIGMA_Z, SIGMA_Z), [0.5, 0.5])
    pot = RadialPotential.square_well(cfg.u)
    gas = GasParameters(cfg.nu, cfg.theta, cfg.u)
    times = tuple(np.linspace(cfg.t_end / cfg.samples, cfg.t_end, cfg.samples))
    sim = SimConfig(model, pot, gas, cfg.trajectories, cfg.t_end, cfg.seed, times,
                    tau_mode=cfg.tau_mode, f_expect=cfg.f_expect)
    rho0 = 0.5 * np.ones((2, 2), dtype=complex)
    t0 = time.perf_counter()
    res = run_ensemble(sim, rho0, threads=cfg.threads)
    elapsed = time.perf_counter() - t0
    f_expect = cfg.f_expect if cfg.tau_mode == REFRACTED else None
    ref = evolve_grid(cm_generator(model, pot, gas, f_expect=f_expect), rho0, res.times)
    print(f"{'t':>8} {'Re rho01 MC':>14} {'Re rho01 GKSL':>14} {'trace dist':>11} {'SE':>9}")
    for t, a, b, se in zip(res.times, res.mean, ref, res.se_scalar()):
        print(f"{t:8.1f} {a[0, 1].real:14.8f} {b[0, 1].real:14.8f} {trace_distance(a, b):11.2e} {se:9.1e}")
    s = res.summary()
    print(f"collisions per trajectory {s['collisions_mean']:.3f} +- {s['collisions_mean_se']:.3f}"
          f" (expected {s['collisions_expected']:.3f}); {elapsed:.1f} s")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--trajectories", type=int, default=OracleConfig.trajectories)
    ap.add_argument("--t-end", type=float, default=OracleConfig.t_end)
    ap.add_argument("--seed", type=int, default=OracleConfig.seed)
    ap.add_argument("--tau-mode", choices=[STRAIGHT, REFRACTED], default=STRAIGHT)
    ap.add_argument("--f-expect", type=float, default=0.0, help="fixed <F> for refracted mode (<F> u <= 0)")
    ap.add_argument("--threads", type=int, default=1)
    a = ap.parse_args()
    run(OracleConfig(trajectories=a.trajectories, t_end=a.t_end, seed=a.seed, tau_mode=a.tau_mode,
                     f_expect=a.f_expect, threads=a.threads))


if __name__ == "__main__":
    main()
