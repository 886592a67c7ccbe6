"""Fast trivial-tier invariant checks behind the `selftest` subcommand.

One line per check; returns the list of failures.  Sized to finish well
under a minute at N = 32.
"""

from __future__ import annotations

import numpy as np

from .bony import (
    para,
    redistribute,
    resonant,
    smooth_remainder,
    term_multiplier,
    undistributed_multiplier,
)
from .calderon import TimeGrid, calderon_reconstruct, localizer, propagator
from .correctors import duality_A, duality_A_canonical
from .geometry import (
    Field,
    apply_multiplier,
    derivative,
    inner,
    make_geometry,
    multiply,
    random_band_limited,
)
from .hamiltonian import apply_H_eps, spectrum
from .noise import enhance, sample_white


def run(n: int = 32, n_t: int = 128, b: int = 4) -> list[str]:
    failures: list[str] = []

    def check(name, ok, detail=""):
        line = f"  {name:<42s} {'ok' if ok else 'FAIL'} {detail}"
        print(line)
        if not ok:
            failures.append(name)

    g = make_geometry("torus", n)
    grid = TimeGrid.for_geometry(g, n_t=n_t)
    f = random_band_limited(g, 1, band=n // 4)
    h = random_band_limited(g, 2, band=n // 4)

    check("transform round trip",
          np.abs(Field(g, coeffs=f.coeffs()).values() - f.values()).max() < 1e-12)
    check("parseval", abs(f.l2() - f.coeff_l2()) < 1e-10 * f.l2())
    one = Field.constant(g, 1.0)
    check("multiply by constant",
          np.abs(multiply(one, h).coeffs() - h.coeffs()).max() < 1e-12)
    check("derivative of constant", derivative(one, 0).l2() < 1e-14)
    lf = apply_multiplier(f, lambda lam: lam)
    check("L self-adjoint", abs(inner(f, apply_multiplier(h, lambda lam: lam))
                                - inner(lf, h)) < 1e-9 * f.l2() * h.l2())
    check("heat contraction",
          all(apply_multiplier(f, lambda lam, t=t: np.exp(-t * lam)).l2()
              <= f.l2() * (1 + 1e-12) for t in (1e-3, 0.1, 1.0)))
    check("P_t identity limit", (propagator(f, grid.t[0], b) - f).l2() < 1e-5 * f.l2())
    check("Q_t kills constants", localizer(one, 0.3, b).l2() == 0.0)
    check("calderon at n_t",
          (calderon_reconstruct(f, grid) - f).l2() < 1e-3 * f.l2())
    d = redistribute(b)
    k, l = np.array([3, -1]), np.array([5, 2])
    t = np.array([0.01, 0.3])
    ident = abs(sum(term_multiplier(tm, t, k, l) for tm in d.terms)
                - undistributed_multiplier(b, t, k, l)).max()
    check("redistribution identity", ident < 1e-12)
    pfg = para(one, h, grid, b)
    res = resonant(one, h, grid, b)
    check("P_1 g + Pi(1,g) + remainder = g",
          (pfg + res + smooth_remainder(one, h, b) - h).l2() < 2e-3 * h.l2())
    check("P_g 1 = 0", para(h, one, grid, b).l2() < 1e-12)
    a3 = random_band_limited(g, 3, band=8)
    check("canonical duality zero",
          abs(duality_A_canonical(f, h, a3, grid, b)) < 1e-8 * f.l2() * h.l2() * a3.l2())
    check("A trilinear zero slot",
          duality_A(Field.zero(g), h, a3, grid, b) == 0.0)
    w = sample_white(g, 0)
    w2 = sample_white(g, 0)
    check("white noise deterministic", np.array_equal(w.coeffs, w2.coeffs))
    zero = enhance(g, 0, eps=2.0**-5, grid=grid, amplitude=0.0)
    if n <= 48:
        spec = spectrum(zero, 6, method="dense")
        check("zero-noise spectrum", np.allclose(spec.eigenvalues, [0, 1, 1, 1, 1, 2],
                                                 atol=1e-9))
    noise = enhance(g, 1, eps=2.0**-5, grid=grid, depth="potential")
    hu = apply_H_eps(noise, f)
    check("H symmetric", abs(inner(hu, h) - inner(f, apply_H_eps(noise, h)))
          < 1e-9 * f.l2() * h.l2())
    return failures
