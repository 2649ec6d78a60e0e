import csv
import math

import numpy as np
import pytest
from scipy import stats

from spingas.cm import cm_c2
from spingas.colsim import (
    REFRACTED,
    SimConfig,
    effective_tau_sample,
    ensemble_rows,
    flux_momentum_cdf,
    momentum_table,
    philox4x32,
    run_ensemble,
    sample_momenta,
    stroboscopic_parameter,
    total_collision_rate,
    uniform_stream,
    write_ensemble_csv,
)
from spingas.ldl import UnsupportedPotential
from spingas.liouville import cm_generator, evolve_grid
from spingas.model import SIGMA_X, SIGMA_Z, GasParameters, SpinModel, trace_distance
from spingas.potentials import RadialPotential

PLUS = 0.5 * np.ones((2, 2), dtype=complex)
M32 = 0xFFFFFFFF


@pytest.mark.parametrize("ctr,key,expected", [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((M32,) * 4, (M32, M32), (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
])
def test_philox_known_answers(ctr, key, expected):
    assert tuple(int(x) for x in philox4x32(*ctr, *key)) == expected


def test_streams_are_deterministic_and_distinct():
    a = uniform_stream(12345, 7, 100)
    assert np.array_equal(a, uniform_stream(12345, 7, 100))
    assert np.array_equal(a[:40], uniform_stream(12345, 7, 10))
    assert not np.array_equal(a, uniform_stream(12345, 8, 100))
    assert not np.array_equal(a, uniform_stream(12346, 7, 100))
    assert not np.array_equal(a, uniform_stream(12345 + 2**32, 7, 100))
    assert np.all((a >= 0) & (a < 1))
    with pytest.raises(ValueError, match="64-bit"):
        uniform_stream(-1, 0, 1)


def test_uniforms_look_uniform():
    u = uniform_stream(99, 3, 25_000)
    assert stats.kstest(u, "uniform").pvalue > 0.01


def test_momentum_cdf_table():
    p, cdf = momentum_table(100.0)
    assert p.size == 4096 and p[-1] == pytest.approx(120.0)
    assert np.all(np.diff(cdf) >= 0) and np.all(np.diff(cdf[:3000]) > 0)
    assert np.allclose(cdf[-500:], flux_momentum_cdf(p[-500:], 100.0), rtol=1e-14)
    assert cdf[0] == pytest.approx(0.5 * (0.5e-8) ** 2, rel=1e-6)


def test_momentum_chi_square():
    theta = 100.0
    p = sample_momenta(2024, 100_000, theta)
    edges = np.sqrt(2 * theta * stats.gamma(2).ppf(np.linspace(0, 1, 51)))  # 50 equiprobable bins
    observed, _ = np.histogram(p, bins=edges)
    assert stats.chisquare(observed).pvalue > 0.01
    assert np.mean(p) == pytest.approx(3 * math.sqrt(math.pi * theta / 2) / 2, rel=0.01)


def test_collision_rate():
    sw = RadialPotential.square_well(0.1)
    assert total_collision_rate(sw, GasParameters(0.01, 100.0, 0.1)) == pytest.approx(0.50133, rel=1e-5)
    assert total_collision_rate(sw, GasParameters(0.0, 100.0, 0.1)) == 0.0
    assert total_collision_rate(sw, GasParameters(0.02, 100.0, 0.1)) == pytest.approx(2 * 0.50133, rel=1e-5)
    g = RadialPotential.gaussian(0.1)
    assert total_collision_rate(g, GasParameters(0.01, 1.0, 0.1)) == pytest.approx(0.01 * math.pi * 64 * math.sqrt(8 / math.pi))


def test_effective_tau():
    sw = RadialPotential.square_well(0.1)
    assert effective_tau_sample(sw, 4.0, 0.6) == pytest.approx(0.4)
    assert effective_tau_sample(sw, 4.0, 1.0) == 0.0
    assert effective_tau_sample(sw, 4.0, 0.6, REFRACTED, 0.0) == pytest.approx(0.4)
    assert effective_tau_sample(sw, 4.0, 0.6, REFRACTED, -1.0) == pytest.approx(2 * math.sqrt(10.44) / 16.2)
    with pytest.raises(UnsupportedPotential):
        effective_tau_sample(RadialPotential.gaussian(0.1), 1.0, 0.1, REFRACTED)
    with pytest.raises(ValueError):
        effective_tau_sample(RadialPotential.square_well(0.0), 1.0, 0.1)
    with pytest.raises(ValueError, match="unknown"):
        effective_tau_sample(sw, 1.0, 0.1, "curved")


def make_cfg(model, pot, gas, n=2000, t_end=200.0, seed=7, times=(0.0, 50.0, 100.0, 200.0), **kw):
    return SimConfig(model, pot, gas, n, t_end, seed, times, **kw)


def test_config_validation(dephasing_model):
    sw, gas = RadialPotential.square_well(0.05), GasParameters(0.01, 100.0, 0.05)
    with pytest.raises(ValueError, match="trajectories"):
        make_cfg(dephasing_model, sw, gas, n=0)
    with pytest.raises(ValueError, match="ascending"):
        make_cfg(dephasing_model, sw, gas, times=(2.0, 1.0))
    with pytest.raises(ValueError, match="t_end"):
        make_cfg(dephasing_model, sw, gas, times=(0.0, 300.0))
    with pytest.raises(ValueError, match="tau_mode"):
        make_cfg(dephasing_model, sw, gas, tau_mode="curved")
    with pytest.raises(UnsupportedPotential):
        make_cfg(dephasing_model, RadialPotential.gaussian(0.05), gas, tau_mode=REFRACTED)
    with pytest.raises(ValueError, match="<F>"):
        make_cfg(dephasing_model, sw, gas, tau_mode=REFRACTED, f_expect=1.0)
    with pytest.raises(ValueError, match="64-bit"):
        make_cfg(dephasing_model, sw, gas, seed=2**64)
    assert make_cfg(dephasing_model, sw, gas, n=10).batches == 10
    assert make_cfg(dephasing_model, sw, gas).batches == 64


def test_no_interaction_is_exact_unitary():
    h = 0.3 * SIGMA_X + 0.1 * SIGMA_Z
    model = SpinModel(2, 2, h, np.kron(SIGMA_Z, SIGMA_Z), [0.5, 0.5])
    gas = GasParameters(0.01, 100.0, 0.0)
    res = run_ensemble(make_cfg(model, RadialPotential.square_well(0.0), gas, n=50), PLUS)
    w, v = np.linalg.eigh(h)
    for t, rho in zip(res.times, res.mean):
        u = v @ np.diag(np.exp(-1j * w * t)) @ v.conj().T
        assert np.allclose(rho, u @ PLUS @ u.conj().T, atol=1e-13)
    assert res.collision_mean > 0  # collisions still happen, they act trivially


def check_against_gksl(res, gen, rho0):
    ref = evolve_grid(gen, rho0, res.times)
    se = res.se_scalar()
    for n in range(len(res.times)):
        assert trace_distance(res.mean[n], ref[n]) <= max(4 * se[n], 1e-12)


def test_dephasing_ensemble_matches_cm_generator(dephasing_model):
    sw, gas = RadialPotential.square_well(0.05), GasParameters(0.01, 100.0, 0.05)
    res = run_ensemble(make_cfg(dephasing_model, sw, gas, n=4000, t_end=1000.0, times=(0, 250, 500, 1000)), PLUS)
    check_against_gksl(res, cm_generator(dephasing_model, sw, gas), PLUS)
    for rho in res.mean:
        assert abs(np.trace(rho) - 1) < 1e-12
        assert np.abs(rho - rho.conj().T).max() < 1e-13


def test_noncommuting_model_matches_cm_generator():
    f = np.kron(SIGMA_X, np.diag([1.0, -0.5])) + np.kron(SIGMA_Z, SIGMA_X)
    model = SpinModel(2, 2, 0.2 * SIGMA_Z, f, [0.7, 0.3])
    pot, gas = RadialPotential.gaussian(0.03), GasParameters(0.002, 50.0, 0.03)
    rho0 = np.array([[0.8, 0.3 - 0.1j], [0.3 + 0.1j, 0.2]])
    res = run_ensemble(make_cfg(model, pot, gas, n=3000, t_end=40.0, times=(0, 10, 20, 40)), rho0)
    check_against_gksl(res, cm_generator(model, pot, gas), rho0)


def test_refracted_and_tabulated_runs(dephasing_model):
    gas = GasParameters(0.01, 100.0, 0.05)
    sw = RadialPotential.square_well(0.05)
    res = run_ensemble(make_cfg(dephasing_model, sw, gas, n=3000, t_end=600.0, times=(0, 300, 600),
                                tau_mode=REFRACTED, f_expect=-20.0), PLUS)
    check_against_gksl(res, cm_generator(dephasing_model, sw, gas, f_expect=-20.0), PLUS)
    r = np.linspace(0.0, 1.0, 200)
    tab = RadialPotential.tabulated(r, np.full_like(r, 0.05))
    res = run_ensemble(make_cfg(dephasing_model, tab, gas, n=3000, t_end=600.0, times=(0, 300, 600)), PLUS)
    expected = 0.5 * np.exp(-2 * cm_c2(sw, gas) * res.times)
    assert np.all(np.abs(res.mean[:, 0, 1] - expected) <= 4 * res.se_scalar() + 1e-12)


def test_collision_counts(dephasing_model):
    sw, gas = RadialPotential.square_well(0.05), GasParameters(0.01, 100.0, 0.05)
    res = run_ensemble(make_cfg(dephasing_model, sw, gas, n=5000), PLUS)
    expected = res.rate * res.t_end
    assert abs(res.collision_mean - expected) <= 3 * math.sqrt(expected / res.trajectories)
    assert res.collision_std == pytest.approx(math.sqrt(expected), rel=0.05)
    s = res.summary()
    assert s["collisions_expected"] == pytest.approx(expected)
    assert s["stroboscopic_parameter"] == pytest.approx(stroboscopic_parameter(sw, gas))


def test_thread_count_does_not_change_results(dephasing_model):
    sw, gas = RadialPotential.square_well(0.05), GasParameters(0.01, 100.0, 0.05)
    cfg = make_cfg(dephasing_model, sw, gas, n=700)
    a = run_ensemble(cfg, PLUS, threads=1)
    b = run_ensemble(cfg, PLUS, threads=4)
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.se_re, b.se_re)
    assert np.array_equal(a.collision_counts, b.collision_counts)


def test_single_trajectory_reproducible(dephasing_model):
    sw, gas = RadialPotential.square_well(0.05), GasParameters(0.01, 100.0, 0.05)
    cfg = make_cfg(dephasing_model, sw, gas, n=1)
    a, b = run_ensemble(cfg, PLUS), run_ensemble(cfg, PLUS)
    assert np.array_equal(a.mean, b.mean)
    assert np.all(np.isnan(a.se_re))
    # a single trajectory stays pure under unitary collisions
    for rho in a.mean:
        assert np.trace(rho @ rho).real == pytest.approx(1.0, abs=1e-12)


def test_run_rejects_bad_inputs(dephasing_model):
    sw, gas = RadialPotential.square_well(0.05), GasParameters(0.01, 100.0, 0.05)
    with pytest.raises(ValueError, match="differs"):
        run_ensemble(make_cfg(dephasing_model, RadialPotential.square_well(0.1), gas), PLUS)
    with pytest.raises(ValueError):
        run_ensemble(make_cfg(dephasing_model, sw, gas), np.eye(3) / 3)


def test_csv_export(tmp_path, dephasing_model):
    sw, gas = RadialPotential.square_well(0.05), GasParameters(0.01, 100.0, 0.05)
    res = run_ensemble(make_cfg(dephasing_model, sw, gas, n=100), PLUS)
    path = tmp_path / "ens.csv"
    write_ensemble_csv(path, res)
    rows = list(csv.reader(open(path)))
    header, body = ensemble_rows(res)
    assert rows[0] == header and rows[1:] == body
    assert len(header) == 1 + 8 + 8
    assert float(rows[2][3]) == res.mean[1][0, 1].real
