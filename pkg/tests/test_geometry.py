import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatpara import (
    Field,
    GeometryError,
    apply_multiplier,
    derivative,
    inner,
    make_geometry,
    multiply,
    random_band_limited,
)


def test_make_geometry_eigenvalue_tables():
    g = make_geometry("torus", 16)
    assert np.allclose(np.sort(g.lam.ravel())[:10], [0, 1, 1, 1, 1, 2, 2, 2, 2, 4])
    q = make_geometry("dirichlet-square", 16)
    assert np.allclose(np.sort(q.lam.ravel())[:6], [2, 5, 5, 8, 10, 10])


def test_make_geometry_rejects_bad_input():
    with pytest.raises(GeometryError):
        make_geometry("torus", 7)
    with pytest.raises(GeometryError):
        make_geometry("torus", 24)  # not a power of two
    with pytest.raises(GeometryError):
        make_geometry("sphere", 16)
    with pytest.raises(GeometryError):
        make_geometry("dirichlet-square", 4)


def test_volume_exact():
    assert make_geometry("torus", 16).volume == (2 * np.pi) ** 2
    assert make_geometry("dirichlet-square", 16).volume == np.pi**2


@pytest.mark.parametrize("kind", ["torus", "dirichlet-square"])
def test_transform_roundtrip_and_parseval(kind):
    g = make_geometry(kind, 32)
    rng = np.random.default_rng(7)
    v = rng.standard_normal((32, 32))
    f = Field.from_values(g, v)
    back = Field.from_coeffs(g, f.coeffs()).values()
    assert np.abs(back - v).max() < 1e-12
    assert abs(f.l2() - f.coeff_l2()) < 1e-10 * f.l2()


def test_torus_reality_hermitian_coeffs():
    g = make_geometry("torus", 16)
    f = random_band_limited(g, 3)
    c = f.coeffs()
    idx = np.arange(16)
    flipped = np.conj(c[(-idx) % 16][:, (-idx) % 16])
    assert np.abs(c - flipped).max() < 1e-12


def test_multiply_constant_torus_bitwise():
    g = make_geometry("torus", 16)
    f = random_band_limited(g, 11)
    out = multiply(Field.constant(g, 1.0), f)
    assert np.abs(out.coeffs() - f.coeffs()).max() < 1e-12


def test_multiply_single_modes_character_identity():
    g = make_geometry("torus", 16)
    p = multiply(Field.mode(g, (3, -1)), Field.mode(g, (2, 2)))
    c = p.coeffs().copy()
    for kk in [(5, 1), (-5, -1), (1, -3), (-1, 3)]:
        assert abs(c[kk[0] % 16, kk[1] % 16] - 1 / (2 * np.pi)) < 1e-14
        c[kk[0] % 16, kk[1] % 16] = 0
    assert np.abs(c).max() < 1e-14


def test_multiply_matches_direct_convolution():
    # O(N^4) coefficient convolution oracle on band-limited fields
    g = make_geometry("torus", 16)
    N = g.N
    f = random_band_limited(g, 21, band=N // 3)
    h = random_band_limited(g, 22, band=N // 3)
    cf, ch = f.coeffs(), h.coeffs()
    k = np.fft.fftfreq(N, 1.0 / N).astype(int)
    conv = np.zeros((N, N), dtype=complex)
    for i1, k1 in enumerate(k):
        for j1, l1 in enumerate(k):
            if cf[i1, j1] == 0:
                continue
            for i2, k2 in enumerate(k):
                for j2, l2 in enumerate(k):
                    if ch[i2, j2] == 0:
                        continue
                    ks, ls = k1 + k2, l1 + l2
                    # resolved space: the Nyquist lines -N/2 are excluded
                    if -N // 2 < ks < N // 2 and -N // 2 < ls < N // 2:
                        conv[ks % N, ls % N] += cf[i1, j1] * ch[i2, j2] / (2 * np.pi)
    got = multiply(f, h).coeffs()
    assert np.abs(got - conv).max() < 1e-10 * np.abs(conv).max()


def test_multiply_geometry_mismatch():
    g1 = make_geometry("torus", 16)
    g2 = make_geometry("torus", 32)
    with pytest.raises(GeometryError):
        multiply(random_band_limited(g1, 0), random_band_limited(g2, 0))


def test_apply_multiplier_identity_and_heat():
    g = make_geometry("torus", 16)
    f = random_band_limited(g, 4)
    assert np.abs(apply_multiplier(f, lambda l: np.ones_like(l)).coeffs() - f.coeffs()).max() == 0
    m = Field.mode(g, (1, 0))
    out = apply_multiplier(m, lambda l: np.exp(-l))
    ratio = out.coeffs()[1, 0] / m.coeffs()[1, 0]
    assert abs(ratio - 0.3678794) < 1e-6


def test_apply_multiplier_rejects_nonfinite():
    g = make_geometry("torus", 16)
    f = random_band_limited(g, 4)
    with pytest.raises(GeometryError):
        apply_multiplier(f, lambda l: 1.0 / l)  # infinite at lam = 0


def test_multiplier_lambda_is_minus_laplacian():
    # phi(lam) = lam equals -(d1^2 + d2^2) through the derivative op
    g = make_geometry("torus", 64)
    f = random_band_limited(g, 5, band=6)
    lf = apply_multiplier(f, lambda l: l)
    lap = derivative(derivative(f, 0), 0) + derivative(derivative(f, 1), 1)
    assert (lf + lap).l2() < 1e-9 * lf.l2()


def test_derivative_against_finite_differences():
    # independent high-N finite-difference oracle for the derivative op
    g = make_geometry("torus", 128)
    f = random_band_limited(g, 5, band=2)
    d = derivative(f, 0).values()
    v = f.values()
    h = g.side / g.N
    fd1 = (np.roll(v, -1, 0) - np.roll(v, 1, 0)) / (2 * h)
    fd2 = (np.roll(v, -2, 0) - np.roll(v, 2, 0)) / (4 * h)
    fd = (4 * fd1 - fd2) / 3.0  # 4th-order Richardson stencil
    assert np.abs(d - fd).max() < 1e-5 * np.abs(d).max()


def test_derivative_constant_and_single_mode():
    g = make_geometry("torus", 16)
    assert derivative(Field.constant(g, 2.5), 0).l2() < 1e-14
    m = Field.mode(g, (3, 0))
    d = derivative(m, 0)
    assert abs(d.coeffs()[3, 0] - 3j * m.coeffs()[3, 0]) < 1e-14


def test_leibniz_residual_band_limited():
    g = make_geometry("torus", 32)
    f = random_band_limited(g, 2, band=6)
    h = random_band_limited(g, 3, band=6)
    for ax in (0, 1):
        lhs = derivative(multiply(f, h), ax)
        rhs = multiply(derivative(f, ax), h) + multiply(f, derivative(h, ax))
        assert (lhs - rhs).l2() < 1e-9 * max(lhs.l2(), 1.0)


def test_square_derivative_mixed_basis_exact():
    q = make_geometry("dirichlet-square", 16)
    f = Field.mode(q, (3, 2))
    d = derivative(f, 0)
    assert d.basis == ("c", "s")
    x, y = q.grid()
    expect = 3 * (2 / np.pi) * np.cos(3 * x)[:, None] * np.sin(2 * y)[None, :]
    assert np.abs(d.values() - expect).max() < 1e-12
    dd = derivative(d, 0)
    assert dd.basis == ("s", "s")
    assert np.abs(dd.coeffs() + 9 * f.coeffs()).max() < 1e-12


def test_square_multiply_converges_to_exact_product():
    # products of sines are not band-limited in the sine basis; the
    # collocation projection must converge to the exact product values
    errs = []
    for N in (16, 32, 64):
        q = make_geometry("dirichlet-square", N)
        got = multiply(Field.mode(q, (2, 1)), Field.mode(q, (3, 2)))
        x, y = q.grid()
        pv = (2 / np.pi) ** 2 * (np.sin(2 * x) * np.sin(3 * x))[:, None] \
            * (np.sin(y) * np.sin(2 * y))[None, :]
        errs.append(np.abs(got.values() - pv).max() / np.abs(pv).max())
    assert errs[1] < 0.5 * errs[0] and errs[2] < 0.5 * errs[1]
    assert errs[1] < 2e-3


def test_dirichlet_boundary_vanishing():
    q = make_geometry("dirichlet-square", 16)
    f = random_band_limited(q, 9)
    # synthesize on boundary points: sine basis vanishes identically there
    n = np.arange(1, q.N + 1)
    bdry = np.sin(n * 0.0)
    assert np.abs(bdry).max() == 0.0
    # first interior line of a smooth field is O(grid spacing) small
    smooth = apply_multiplier(f, lambda l: np.exp(-l))
    v = smooth.values()
    assert np.abs(v[0]).max() < 0.6 * np.abs(v).max()


@pytest.mark.parametrize("kind", ["torus", "dirichlet-square"])
def test_L_self_adjoint(kind):
    g = make_geometry(kind, 16)
    f1 = random_band_limited(g, 11)
    f2 = random_band_limited(g, 12)
    L1 = apply_multiplier(f1, lambda l: l)
    L2 = apply_multiplier(f2, lambda l: l)
    scale = f1.l2() * f2.l2()
    assert abs(inner(f1, L2) - inner(L1, f2)) < 1e-10 * scale


@pytest.mark.parametrize("kind", ["torus", "dirichlet-square"])
def test_heat_semigroup_contraction(kind):
    g = make_geometry(kind, 16)
    f = random_band_limited(g, 13)
    for t in np.geomspace(1e-4, 1.0, 9):
        ht = apply_multiplier(f, lambda l: np.exp(-t * l))
        assert ht.l2() <= f.l2() * (1 + 1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), band=st.integers(2, 5))
def test_multiply_bilinear_and_commutative(seed, band):
    g = make_geometry("torus", 16)
    f = random_band_limited(g, seed, band=band)
    h = random_band_limited(g, seed + 1, band=band)
    w = random_band_limited(g, seed + 2, band=band)
    lhs = multiply(f + 2.0 * h, w)
    rhs = multiply(f, w) + 2.0 * multiply(h, w)
    assert (lhs - rhs).l2() < 1e-10 * max(lhs.l2(), 1.0)
    assert (multiply(f, h) - multiply(h, f)).l2() < 1e-12 * max(1.0, multiply(f, h).l2())


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_field_ops_pure(seed):
    g = make_geometry("torus", 16)
    f = random_band_limited(g, seed)
    c0 = f.coeffs().copy()
    _ = multiply(f, f)
    _ = derivative(f, 0)
    _ = apply_multiplier(f, lambda l: np.exp(-l))
    assert np.array_equal(f.coeffs(), c0)
