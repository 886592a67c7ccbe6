import json

import numpy as np
import pytest

from heatpara.experiments import (
    StudyConfig,
    brezis_gallouet_study,
    consistency_study,
    counting_function,
    dkw_band,
    exp_moment_study,
    nls_evolve,
    nls_study,
    renorm_drift_study,
    renorm_study,
    resolvent_convergence_study,
    tail_study,
    weyl_study,
)
from heatpara.calderon import TimeGrid
from heatpara.geometry import make_geometry, random_band_limited
from heatpara.noise import enhance


def small_cfg(**kw):
    base = dict(geometry="torus", N=16, n_t=64, seeds=(0, 1), eps_list=(0.125, 0.0625),
                workers=1)
    base.update(kw)
    return StudyConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        StudyConfig(eps_list=(0.1, 0.2))  # not decreasing
    with pytest.raises(ValueError):
        StudyConfig(seeds=(1, 1))


def test_config_hash_stable_and_sensitive():
    a, b = small_cfg(), small_cfg()
    assert a.config_hash() == b.config_hash()
    c = small_cfg(N=32)
    assert a.config_hash() != c.config_hash()


def test_counting_function_monotone():
    vals = np.array([1.0, 2.0, 2.0, 5.0])
    grid = np.array([0.0, 1.5, 2.5, 6.0])
    assert np.array_equal(counting_function(vals, grid), [0, 1, 3, 4])


def test_weyl_zero_noise_both_geometries():
    r = weyl_study(StudyConfig(geometry="torus", N=64, n_t=64), zero_noise=True)
    assert r["rel_deviation"] < 0.05
    rq = weyl_study(StudyConfig(geometry="dirichlet-square", N=64, n_t=64), zero_noise=True)
    assert rq["rel_deviation"] < 0.05


def test_weyl_window_validation():
    cfg = small_cfg()
    with pytest.raises(ValueError):
        weyl_study(cfg, zero_noise=True, window=(50.0, 10 * cfg.geometry_handle().lam_max))


def test_weyl_noisy_small():
    cfg = small_cfg(N=32, seeds=(0, 1, 2), eps_list=(2.0**-5,))
    r = weyl_study(cfg)
    assert r["rel_deviation"] < 0.10
    assert len(r["per_seed_slopes"]) == 3


def test_renorm_study_fields():
    cfg = StudyConfig(geometry="torus", N=64, n_t=96,
                      eps_list=tuple(2.0**-k for k in range(4, 11)))
    r = renorm_study(cfg)
    assert abs(r["slope_plain"] - r["target_slope"]) < 0.05 * r["target_slope"]
    assert r["oracle_max_rel_dev"] < 0.01
    assert all(w > 0 for w in r["wick_mass_engine"])


def test_renorm_drift_small():
    cfg = StudyConfig(geometry="torus", N=32, n_t=96, seeds=tuple(range(4)),
                      eps_list=tuple(2.0**-k for k in range(5, 9)))
    r = renorm_drift_study(cfg, n_track=5)
    target = abs(r["drift_slope_target"])
    assert abs(abs(r["drift_slope_mean"]) - target) < 0.25 * target
    assert r["pooled_monotone_decreasing"]


def test_dkw_band_value():
    assert abs(dkw_band(500) - np.sqrt(np.log(40.0) / 1000.0)) < 1e-12


def test_tail_study_requires_samples_for_ground_state():
    with pytest.raises(ValueError):
        tail_study(small_cfg(N=16, eps_list=(2.0**-4,), n_t=48), n_level=1, samples=60)


def test_tail_study_small():
    cfg = small_cfg(N=16, eps_list=(2.0**-4,), n_t=48)
    r = tail_study(cfg, n_level=2, samples=60)
    cdf = np.array(r["cdf"])
    assert np.all(np.diff(cdf) >= 0)
    assert 0 <= cdf[0] and cdf[-1] <= 1
    # half-sample consistency within DKW bands
    vals = np.array(r["samples_sorted"])
    half1, half2 = vals[0::2], vals[1::2]
    grid = np.array(r["lam_grid"])
    c1 = np.searchsorted(np.sort(half1), grid, side="right") / len(half1)
    c2 = np.searchsorted(np.sort(half2), grid, side="right") / len(half2)
    assert np.abs(c1 - c2).max() <= dkw_band(len(half1)) + dkw_band(len(half2))


def test_exp_moment_concavity_small():
    cfg = small_cfg(N=16, n_t=48)
    r = exp_moment_study(cfg, samples=400)
    # slopes of the log-survival must decrease (small relative slack)
    assert r["max_slope_increment"] <= 0.1 * abs(r["median_slope"])


def test_consistency_study_decreases():
    cfg = StudyConfig(geometry="torus", N=16, n_t=96, seeds=(0, 1, 2),
                      eps_list=(2.0**-3, 2.0**-4, 2.0**-6), s_policy=0.1)
    r = consistency_study(cfg, n_seeds=3)
    d = r["mean_diff"]
    assert d[-1] < d[0]


def test_brezis_gallouet_bounded():
    cfg = StudyConfig(geometry="torus", N=16, n_t=96, seeds=(0,), eps_list=(2.0**-4,),
                      s_policy=0.1)
    r = brezis_gallouet_study(cfg, bandwidths=(2, 4), n_fields=4)
    assert r["max_growth"] < 1.2


def test_nls_mass_conservation_and_phase():
    g = make_geometry("torus", 16)
    grid = TimeGrid.for_geometry(g, n_t=48)
    zero = enhance(g, 0, eps=2.0**-4, grid=grid, amplitude=0.0, depth="potential")
    # single mode, no nonlinearity: exact phase rotation e^{-i lam t}
    u0 = np.zeros((16, 16), dtype=complex)
    from heatpara.geometry import Field

    mode = Field.mode(g, (1, 0))
    out = nls_evolve(zero, mode.values().astype(complex), T=1.0, dt=0.01,
                     k_shift=0.0, nonlinear=False)
    expect = mode.values() * np.exp(-1j * 1.0 * 1.0)
    err = np.abs(out["u"] - expect).max() / np.abs(mode.values()).max()
    assert err < 1e-8
    assert out["mass_drift"] < 1e-10
    # nonlinear run still conserves mass
    noise = enhance(g, 1, eps=2.0**-4, grid=grid, depth="potential")
    u0 = random_band_limited(g, 2, band=3).values().astype(complex)
    out2 = nls_evolve(noise, u0, T=0.5, dt=0.01, k_shift=3.0)
    assert out2["mass_drift"] < 1e-8


def test_nls_cfl_guard():
    from heatpara.experiments import CflError

    g = make_geometry("torus", 16)
    grid = TimeGrid.for_geometry(g, n_t=48)
    zero = enhance(g, 0, eps=2.0**-4, grid=grid, amplitude=0.0, depth="potential")
    with pytest.raises(CflError):
        nls_evolve(zero, np.ones((16, 16), dtype=complex), T=1.0, dt=10.0, k_shift=0.0)


def test_study_reports_are_json_serializable_and_deterministic():
    cfg = small_cfg(N=32, seeds=(0,), eps_list=(2.0**-5,))
    r1 = weyl_study(cfg)
    r2 = weyl_study(cfg)
    s1 = json.dumps(r1, sort_keys=True)
    s2 = json.dumps(r2, sort_keys=True)
    assert s1 == s2
