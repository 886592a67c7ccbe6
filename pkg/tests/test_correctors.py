import numpy as np
import pytest

from heatpara import Field, inner, make_geometry, multiply, random_band_limited
from heatpara.bony import para, resonant
from heatpara.calderon import TimeGrid, sobolev_norm
from heatpara.correctors import (
    canonical_pair,
    commutator_D,
    corrector_C,
    duality_A,
    duality_A_canonical,
    operator_norm,
    scaling_probe,
    swap_S,
)
from heatpara.noise import enhance, linear_object, regularize, sample_white


@pytest.fixture(scope="module")
def setup32():
    g = make_geometry("torus", 32)
    return g, TimeGrid.for_geometry(g, n_t=192)


def test_canonical_duality_vanishes(setup32):
    g, grid = setup32
    for seed in range(6):
        a = random_band_limited(g, seed, band=8)
        b = random_band_limited(g, 100 + seed, band=8)
        c = random_band_limited(g, 200 + seed, band=8)
        lhs, _ = canonical_pair(a, b, c, grid)
        val = duality_A_canonical(a, b, c, grid)
        assert abs(val) < 1e-8 * max(abs(lhs), 1e-6)


def test_full_duality_zero_and_trilinear(setup32):
    g, grid = setup32
    b = random_band_limited(g, 1, band=8)
    c = random_band_limited(g, 2, band=8)
    assert duality_A(Field.zero(g), b, c, grid) == 0.0
    a = random_band_limited(g, 3, band=8)
    s1 = duality_A(a, b, c, grid)
    s2 = duality_A(2.0 * a, b, c, grid)
    s3 = duality_A(a, 3.0 * b, c, grid)
    assert abs(s2 - 2 * s1) < 1e-10 * max(abs(s1), 1.0)
    assert abs(s3 - 3 * s1) < 1e-10 * max(abs(s1), 1.0)


def test_full_duality_bounded_on_noise(setup32):
    # |A(u, xi, u#)| <= C ||u||_H^b ||xi||_C^(a-2) ||u#||_H^b, stable in eps
    g, grid = setup32
    beta = 0.78
    ratios = []
    for eps in (2.0**-4, 2.0**-5, 2.0**-6):
        for seed in range(4):
            noise = enhance(g, seed, eps, grid, depth="potential")
            u = random_band_limited(g, 300 + seed, band=8, decay=2.0)
            us = random_band_limited(g, 400 + seed, band=8, decay=3.0)
            val = abs(duality_A(u, noise.xi_eps, us, grid))
            denom = (sobolev_norm(u, beta) * noise.norms["xi_eps"]
                     * sobolev_norm(us, beta))
            ratios.append(val / denom)
    ratios = np.asarray(ratios).reshape(3, 4).mean(axis=1)
    assert ratios.max() < 3.0 * ratios.min() + 1e-12


def _band_pass(g, seed, lo_lam=16.0, band=8):
    # Ptilde_1 = Id holds up to the e^{-L}-smooth part, so the smallness
    # examples probe fields without low-frequency content
    f = random_band_limited(g, seed, band=band)
    c = f.coeffs().copy()
    c[g.lam < lo_lam] = 0.0
    return Field(g, coeffs=c)


def test_corrector_constant_first_slot(setup32):
    # C(1, a2, b) = Pi(Ptilde_1 a2 - a2, b), small since Ptilde_1 ~ Id
    # away from the e^{-L}-regularized low modes
    g, grid = setup32
    one = Field.constant(g, 1.0)
    a2 = _band_pass(g, 5)
    b3 = _band_pass(g, 6)
    cf = corrector_C(one, a2, b3, grid)
    assert sobolev_norm(cf, 1.0) < 1e-2 * a2.l2() * b3.l2()


def test_commutator_constant_first_slot(setup32):
    # D(1,..) keeps the low-frequency defect Pi - P_1 Pi (the resonant
    # output is low-frequency even for band-passed inputs): small, not tiny
    g, grid = setup32
    one = Field.constant(g, 1.0)
    a2 = _band_pass(g, 7)
    b3 = _band_pass(g, 8)
    df = commutator_D(one, a2, b3, grid)
    assert sobolev_norm(df, 1.0) < 5e-2 * a2.l2() * b3.l2()


def test_swap_constant_third_slot(setup32):
    g, grid = setup32
    one = Field.constant(g, 1.0)
    a1 = random_band_limited(g, 9, band=6, decay=2.0)
    a2 = random_band_limited(g, 10, band=6, decay=2.0)
    sf = swap_S(a1, a2, one, grid)
    assert sf.l2() < 0.1 * a1.l2() * a2.l2()


def test_c_d_difference_identity(setup32):
    # D - C = a1 Pi(a2,b) - P_a1 Pi(a2,b) as computed fields
    g, grid = setup32
    a1 = random_band_limited(g, 11, band=8)
    a2 = random_band_limited(g, 12, band=8)
    b3 = random_band_limited(g, 13, band=8)
    cf = corrector_C(a1, a2, b3, grid)
    df = commutator_D(a1, a2, b3, grid)
    pi = resonant(a2, b3, grid)
    ident = multiply(a1, pi) - para(a1, pi, grid)
    assert ((df - cf) - ident).l2() < 1e-10 * max(ident.l2(), 1.0)


def test_correctors_vanish_on_zero_arguments(setup32):
    g, grid = setup32
    z = Field.zero(g)
    f = random_band_limited(g, 14, band=8)
    h = random_band_limited(g, 15, band=8)
    for op in (corrector_C, commutator_D, swap_S):
        assert op(z, f, h, grid).l2() == 0.0
        assert op(f, z, h, grid).l2() == 0.0
        assert op(f, h, z, grid).l2() == 0.0


def test_corrector_bilinearity(setup32):
    g, grid = setup32
    a1 = random_band_limited(g, 16, band=8)
    a2a = random_band_limited(g, 17, band=8)
    a2b = random_band_limited(g, 18, band=8)
    b3 = random_band_limited(g, 19, band=8)
    lhs = corrector_C(a1, a2a + 2.0 * a2b, b3, grid)
    rhs = corrector_C(a1, a2a, b3, grid) + 2.0 * corrector_C(a1, a2b, b3, grid)
    assert (lhs - rhs).l2() < 1e-10 * max(lhs.l2(), 1.0)


def test_corrector_cancellation_vs_resampled_divergence():
    # the corrector combination cancels the Wick diagonal shared by its two
    # terms; resampling the noise in one slot removes the cancellation and
    # that combination diverges away from C as eps shrinks
    from heatpara.bony import intertwined_para

    g = make_geometry("torus", 32)
    grid = TimeGrid.for_geometry(g, n_t=96)
    alpha = 0.9
    sob = alpha + alpha + (alpha - 2.0)  # H^(a1+a2+beta) target
    u = random_band_limited(g, 600, band=6, decay=2.0)
    corrected, resampled, cancel = [], [], []
    for eps in (2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7, 2.0**-8):
        vc, vn, vr = [], [], []
        for seed in range(5):
            noise = enhance(g, seed, eps, grid, alpha, depth="potential")
            pt = intertwined_para(u, noise.X1, grid)
            piece = multiply(u, resonant(noise.X1, noise.xi_eps, grid))
            cf = resonant(pt, noise.xi_eps, grid) - piece
            other = regularize(sample_white(g, 9000 + seed).as_field(), eps)
            nv = resonant(pt, other, grid) - piece
            vc.append(sobolev_norm(cf, sob))
            vn.append(sobolev_norm(nv, sob))
            vr.append(sobolev_norm(cf, sob) / sobolev_norm(piece, sob))
        corrected.append(np.mean(vc))
        resampled.append(np.mean(vn))
        cancel.append(np.mean(vr))
    # cancellation fraction improves monotonically under eps-halving
    assert all(cancel[i + 1] < cancel[i] for i in range(len(cancel) - 1))
    # the resampled combination diverges away from the corrected one
    assert resampled[-1] / corrected[-1] > 1.25 * resampled[0] / corrected[0]
    assert corrected[-1] < 0.8 * resampled[-1]


def test_scaling_probe_registry(setup32):
    g, grid = setup32
    with pytest.raises(KeyError):
        scaling_probe("no_such_probe", [1.0], geom=g)
    rep = scaling_probe("identity", [1.0, 0.5, 0.25], geom=g)
    assert abs(rep.exponent) < 1e-3


def test_operator_norm_on_known_multiplier(setup32):
    # operator norm of the heat semigroup at t: max multiplier = 1 (lam=0)
    g, grid = setup32
    from heatpara.geometry import apply_multiplier

    def ap(u):
        return apply_multiplier(u, lambda lam: np.exp(-0.1 * lam))

    n = operator_norm(ap, ap, g, iters=30)
    assert abs(n - 1.0) < 1e-2


def test_para_truncated_probe_exponent():
    g = make_geometry("torus", 64)
    grid = TimeGrid.for_geometry(g, n_t=96)
    noise = enhance(g, 3, eps=2.0**-6, grid=grid)
    scales = [4.0 ** (-k) for k in range(1, 5)]
    rep = scaling_probe("para_truncated", scales, geom=g, x_field=noise.X1,
                        grid=grid, iters=8)
    assert rep.exponent >= noise.alpha / 4 - 0.1
    assert np.all(np.diff(rep.norms) < 0)  # smaller s, smaller operator
