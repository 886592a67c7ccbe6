import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatpara import Field, apply_multiplier, make_geometry, multiply, random_band_limited
from heatpara.bony import (
    PARA_FG,
    PARA_GF,
    RESONANT,
    intertwined_para,
    intertwined_para_explicit,
    para,
    para_adjoint,
    para_truncated,
    product_parts,
    redistribute,
    remainder_multiplier,
    resonant,
    resonant_weight,
    smooth_remainder,
    term_multiplier,
    undistributed_multiplier,
)
from heatpara.calderon import TimeGrid, calderon_reconstruct, poly_pb
from heatpara.geometry import inner
from heatpara.noise import sample_white


@pytest.fixture(scope="module")
def setup32():
    g = make_geometry("torus", 32)
    return g, TimeGrid.for_geometry(g, n_t=256)


# --- symbolic layer -----------------------------------------------------------


def test_redistribute_rejects_bad_b():
    for bad in (3, 1, 10, 0):
        with pytest.raises(ValueError):
            redistribute(bad)


@pytest.mark.parametrize("b", [2, 4, 6, 8])
def test_signature_bookkeeping(b):
    d = redistribute(b)
    for t in d.terms:
        a1, a2, a3 = t.signature
        assert a1 + a2 + a3 == 2 * b
        assert max(a1, a2, a3) == b


@pytest.mark.parametrize("b", [2, 4])
def test_classification_exclusive_exhaustive(b):
    d = redistribute(b)
    for t in d.terms:
        _, a2, a3 = t.signature
        buckets = [a2 < b / 2, a3 < b / 2, (a2 >= b / 2 and a3 >= b / 2)]
        assert sum(buckets) == 1
    assert set(t.bucket(b) for t in d.terms) == {PARA_FG, PARA_GF, RESONANT}


def test_b2_drained_signatures_from_g_start():
    # spec example: draining (0,0,4) gives {(2,0,2) x1, (1,1,2) x2, (0,2,2) x1}
    # before merging; after merging the x2 shows up as a single term with
    # doubled coefficient
    d = redistribute(2)
    g_started = [t for t in d.terms if t.gop.c == 1]  # slots carrying Q^(b) keep c=1
    sigs = {t.signature: t.coeff for t in g_started}
    assert set(sigs) == {(2, 0, 2), (1, 1, 2), (0, 2, 2)}
    assert abs(sigs[(1, 1, 2)]) == 2 * abs(sigs[(2, 0, 2)])


def test_term_count_bound_b4():
    # branching bound: 3 * 2^4 pre-merge, fewer after merging
    assert redistribute(4).n_terms <= 3 * 2**4


@pytest.mark.parametrize("b", [2, 4, 6, 8])
def test_multiplier_sum_identity(b):
    # the drained term sum equals the undistributed integrand at every t
    d = redistribute(b)
    rng = np.random.default_rng(1)
    for _ in range(100):
        k = rng.integers(-8, 9, size=2)
        l = rng.integers(-8, 9, size=2)
        t = rng.uniform(1e-3, 1.0, size=4)
        total = sum(term_multiplier(tm, t, k, l) for tm in d.terms)
        ref = undistributed_multiplier(b, t, k, l)
        scale = max(np.abs(ref).max(), 1e-30)
        assert np.abs(total - ref).max() < 1e-12 * max(scale, 1.0)


def test_integrated_multiplier_sums_to_one(setup32):
    # integrated over the grid plus the smooth remainder, the decomposition
    # multiplier at (k, l) reproduces 1 within quadrature tolerance
    g, grid = setup32
    d = redistribute(4)
    rng = np.random.default_rng(2)
    for _ in range(20):
        k = rng.integers(-5, 6, size=2)
        l = rng.integers(-5, 6, size=2)
        tot = sum(
            float(np.sum(grid.w * term_multiplier(tm, grid.t, k, l)))
            for tm in d.terms
        )
        tot += remainder_multiplier(4, k, l)
        assert abs(tot - 1.0) < 1e-3


def test_decomposition_json_dump():
    d = redistribute(4)
    payload = json.loads(d.to_json())
    assert payload["b"] == 4
    assert len(payload["terms"]) == d.n_terms
    item = payload["terms"][0]
    assert set(item) == {"coeff", "outer", "fop", "gop", "pairs", "signature"}


def test_resonant_weight_matches_closed_form(setup32):
    g, grid = setup32
    lam = np.unique(g.lam.ravel())
    rho = resonant_weight(redistribute(4), lam, grid)
    closed = 1.0 - poly_pb(lam, 4) ** 2 * np.exp(-2.0 * lam)
    assert np.abs(rho - closed).max() < 2e-3
    assert abs(rho[0]) < 1e-15  # lam = 0: no resonant mass


# --- numeric layer ------------------------------------------------------------


def test_para_of_one_reconstructs(setup32):
    g, grid = setup32
    one = Field.constant(g, 1.0)
    h = random_band_limited(g, 4, band=g.N // 3)
    lhs = para(one, h, grid) + resonant(one, h, grid) + smooth_remainder(one, h)
    assert (lhs - h).l2() < 1e-3 * h.l2()
    assert para(h, one, grid).l2() < 1e-12  # carrier cancellation kills constants


def test_reconstruction_identity(setup32):
    g, grid = setup32
    f = random_band_limited(g, 10, band=g.N // 3)
    h = random_band_limited(g, 11, band=g.N // 3)
    pfg, pgf, res, rem = product_parts(f, h, grid)
    total = pfg + pgf + res + rem
    prod = multiply(f, h)
    cald = (calderon_reconstruct(f, grid) - f).l2() / f.l2()
    assert (total - prod).l2() / prod.l2() < max(2 * cald, 1e-4)


def test_product_parts_matches_individual_ops(setup32):
    g, grid = setup32
    f = random_band_limited(g, 12, band=8)
    h = random_band_limited(g, 13, band=8)
    pfg, pgf, res, _ = product_parts(f, h, grid)
    assert (pfg - para(f, h, grid)).l2() < 1e-13
    assert (pgf - para(h, f, grid)).l2() < 1e-13
    assert (res - resonant(f, h, grid)).l2() < 1e-13


def test_quadrature_refinement_halves_error():
    g = make_geometry("torus", 32)
    f = random_band_limited(g, 20, band=g.N // 3)
    h = random_band_limited(g, 21, band=g.N // 3)
    errs = []
    for nt in (64, 128, 256):
        grid = TimeGrid.for_geometry(g, n_t=nt)
        pfg, pgf, res, rem = product_parts(f, h, grid)
        errs.append((pfg + pgf + res + rem - multiply(f, h)).l2())
    assert errs[1] < 0.6 * errs[0]
    assert errs[2] < 0.6 * errs[1]


def test_para_bilinearity(setup32):
    g, grid = setup32
    f1 = random_band_limited(g, 30, band=8)
    f2 = random_band_limited(g, 31, band=8)
    h = random_band_limited(g, 32, band=8)
    lhs = para(f1 + 2.5 * f2, h, grid)
    rhs = para(f1, h, grid) + 2.5 * para(f2, h, grid)
    assert (lhs - rhs).l2() < 1e-12 * max(lhs.l2(), 1.0)


def test_para_zero_mean(setup32):
    # every para bucket's outer word carries cancellation: exact zero mean
    g, grid = setup32
    f = random_band_limited(g, 33, band=8)
    h = random_band_limited(g, 34, band=8)
    assert abs(para(f, h, grid).mean()) < 1e-13
    assert abs(para(h, f, grid).mean()) < 1e-13


def test_high_low_paraproduct_dominates():
    # single modes with |l| >> |k|: P_f g captures most of the product
    g = make_geometry("torus", 64)
    grid = TimeGrid.for_geometry(g, n_t=256)
    f = Field.mode(g, (1, 0))
    h = Field.mode(g, (17, 0))
    prod = multiply(f, h)
    pf = para(f, h, grid)
    assert (prod - pf).l2() / prod.l2() < 0.1


def test_resonant_mode_pair_mean(setup32):
    g, grid = setup32
    m = Field.mode(g, (3, 1))
    r = resonant(m, m, grid)
    assert abs(r.mean()) > 1e-3  # diagonal pairing leaves output at frequency 0
    p = para(m, m, grid)
    assert abs(p.mean()) < 1e-13


def test_para_truncated_s1_bitwise(setup32):
    g, grid = setup32
    f = random_band_limited(g, 40, band=8)
    h = random_band_limited(g, 41, band=8)
    full = para(f, h, grid)
    trunc = para_truncated(f, h, grid, 1.0)
    assert np.array_equal(full.coeffs(), trunc.coeffs())


def test_para_truncated_rejects_bad_s(setup32):
    g, grid = setup32
    f = random_band_limited(g, 42, band=8)
    with pytest.raises(ValueError):
        para_truncated(f, f, grid, grid.t[0] / 10)


def test_intertwining_residual_exact(setup32):
    # L Ptilde_f g - P_f L g + e^{-L} P_f L g = 0 on the eigenbasis
    g, grid = setup32
    f = random_band_limited(g, 50, band=8)
    h = random_band_limited(g, 51, band=8)
    pt = intertwined_para(f, h, grid)
    pflg = para(f, apply_multiplier(h, lambda lam: lam), grid)
    resid = apply_multiplier(pt, lambda lam: lam) - pflg \
        + apply_multiplier(pflg, lambda lam: np.exp(-lam))
    assert resid.l2() < 1e-9 * max(pflg.l2(), 1.0)


def test_intertwined_explicit_formula_agrees(setup32):
    g, grid = setup32
    for seed in range(10):
        f = random_band_limited(g, 60 + seed, band=8)
        h = random_band_limited(g, 80 + seed, band=8)
        a = intertwined_para(f, h, grid)
        b = intertwined_para_explicit(f, h, grid)
        assert (a - b).l2() < 1e-2 * max(a.l2(), 1e-12)


def test_para_adjoint_pairing(setup32):
    g, grid = setup32
    u = random_band_limited(g, 70, band=8)
    v = random_band_limited(g, 71, band=8)
    x = random_band_limited(g, 72, band=8)
    lhs = inner(para(u, x, grid), v)
    rhs = inner(u, para_adjoint(v, x, grid))
    assert abs(lhs - rhs) < 1e-10 * max(abs(lhs), 1.0)


def test_holder_pairing_divergence_witness():
    # alpha + beta < 0: resonant of two independent noise objects grows with N
    means = []
    for N in (16, 32, 64):
        g = make_geometry("torus", N)
        grid = TimeGrid.for_geometry(g, n_t=128)
        vals = []
        for seed in range(5):
            a = sample_white(g, seed).as_field()
            b_ = sample_white(g, 1000 + seed).as_field()
            x = apply_multiplier(a, lambda lam: -np.where(lam > 0, 1.0 / np.maximum(lam, 1e-30), 0.0))
            vals.append(resonant(x, b_, grid).l2())
        means.append(np.mean(vals))
    assert means[0] < means[1] < means[2]


def test_square_reconstruction_qualitative():
    # mixed-basis square engine: loose reconstruction on low-band fields
    q = make_geometry("dirichlet-square", 32)
    grid = TimeGrid.for_geometry(q, n_t=128)
    f = random_band_limited(q, 1, band=4)
    h = random_band_limited(q, 2, band=4)
    pfg, pgf, res, rem = product_parts(f, h, grid)
    total = pfg + pgf + res + rem
    prod = multiply(f, h)
    assert (total - prod).l2() / prod.l2() < 5e-2


@settings(max_examples=10, deadline=None)
@given(b=st.sampled_from([2, 4, 6]), kx=st.integers(-6, 6), ky=st.integers(-6, 6),
       lx=st.integers(-6, 6), ly=st.integers(-6, 6))
def test_multiplier_identity_property(b, kx, ky, lx, ly):
    d = redistribute(b)
    t = np.array([0.003, 0.1, 0.9])
    total = sum(term_multiplier(tm, t, (kx, ky), (lx, ly)) for tm in d.terms)
    ref = undistributed_multiplier(b, t, (kx, ky), (lx, ly))
    assert np.abs(total - ref).max() < 1e-12 * max(np.abs(ref).max(), 1.0)
