"""Correctors, commutators, almost-duality and operator-norm scaling probes.

The corrector C, commutator D and paraproduct swap S are computed
literally from their definitions on top of the redistribution engine:

    C(a1, a2, b) = Pi(Ptilde_{a1} a2, b) - a1 . Pi(a2, b)
    D(a1, a2, b) = Pi(Ptilde_{a1} a2, b) - P_{a1} Pi(a2, b)
    S(a1, a2, b) = P_b Ptilde_{a1} a2 - P_{a1} P_b a2

The almost-duality scalar A(a, b, c) = <a, Pi(b,c)> - <P_a b, c> comes in
two flavours: the full-engine version (bounded, not zero) and the
canonical-pair version built only from the self-adjoint triples
(P^(b), Q^(b/2), Q^(b/2)) and (Q^(b/2), P^(b), Q^(b/2)).  With L
self-adjoint the two canonical pairings cancel t-pointwise, so A0
vanishes to roundoff; both sides are nevertheless assembled through
independent operator routes.

Continuity propositions are probed empirically: operator norms by power
iteration on the normal map in spectral Sobolev metrics across a scale
list, reported as a fitted exponent.
"""

from __future__ import annotations

import numpy as np

from .bony import (
    intertwined_para,
    intertwined_para_truncated,
    para,
    para_adjoint,
    resonant,
)
from .calderon import (
    ScalingReport,
    TimeGrid,
    inverse_l,
    localizer_multiplier,
    propagator_multiplier,
)
from .geometry import Field, apply_multiplier, inner, multiply, random_band_limited


def corrector_C(a1: Field, a2: Field, b_field: Field, grid: TimeGrid, b: int = 4) -> Field:
    """C(a1,a2,b) = Pi(Ptilde_{a1} a2, b) - a1 . Pi(a2, b)."""
    pt = intertwined_para(a1, a2, grid, b)
    return resonant(pt, b_field, grid, b) - multiply(a1, resonant(a2, b_field, grid, b))


def commutator_D(a1: Field, a2: Field, b_field: Field, grid: TimeGrid, b: int = 4) -> Field:
    """D(a1,a2,b) = Pi(Ptilde_{a1} a2, b) - P_{a1} Pi(a2, b)."""
    pt = intertwined_para(a1, a2, grid, b)
    return resonant(pt, b_field, grid, b) - para(a1, resonant(a2, b_field, grid, b), grid, b)


def swap_S(a1: Field, a2: Field, b_field: Field, grid: TimeGrid, b: int = 4) -> Field:
    """S(a1,a2,b) = P_b Ptilde_{a1} a2 - P_{a1} P_b a2."""
    pt = intertwined_para(a1, a2, grid, b)
    return para(b_field, pt, grid, b) - para(a1, para(b_field, a2, grid, b), grid, b)


def duality_A(a: Field, b_field: Field, c: Field, grid: TimeGrid, b: int = 4) -> float:
    """A(a,b,c) = <a, Pi(b,c)> - <P_a b, c> with the full engine."""
    return inner(a, resonant(b_field, c, grid, b)) - inner(para(a, b_field, grid, b), c)


def canonical_pair(a: Field, b_field: Field, c: Field, grid: TimeGrid,
                   b: int = 4) -> tuple[float, float]:
    """The two canonical pairings <a, Pi0(b,c)> and <P0_a b, c>.

    Pi0(b,c) = int P_t^(b)(Q_t^(b/2) b . Q_t^(b/2) c) dt/t,
    P0_a b   = int Q_t^(b/2)(P_t^(b) a . Q_t^(b/2) b) dt/t,
    each assembled as a field before pairing.  Truncated products are
    L2-orthogonal to the band-limited mates, so the pairings are exact.
    """
    if b % 2:
        raise ValueError("b must be even")
    geom = a.geom
    half = b // 2
    lam = geom.lam
    lhs = rhs = 0.0
    for t, w in zip(grid.t, grid.w):
        qb = localizer_multiplier(t * lam, half)
        pb = propagator_multiplier(t * lam, b)
        qb_bf = Field(geom, coeffs=qb * b_field.coeffs(), basis=b_field.basis)
        qb_cf = Field(geom, coeffs=qb * c.coeffs(), basis=c.basis)
        pb_af = Field(geom, coeffs=pb * a.coeffs(), basis=a.basis)
        pi0 = apply_multiplier(multiply(qb_bf, qb_cf),
                               lambda l, _t=t: propagator_multiplier(_t * l, b))
        p0 = apply_multiplier(multiply(pb_af, qb_bf),
                              lambda l, _t=t: localizer_multiplier(_t * l, half))
        lhs += w * inner(a, pi0)
        rhs += w * inner(p0, c)
    return float(lhs), float(rhs)


def duality_A_canonical(a: Field, b_field: Field, c: Field, grid: TimeGrid,
                        b: int = 4) -> float:
    """A0(a,b,c): zero to roundoff when L is self-adjoint."""
    lhs, rhs = canonical_pair(a, b_field, c, grid, b)
    return lhs - rhs


# --- scaling harness ----------------------------------------------------------


def _sobolev_weight(f: Field, beta: float) -> Field:
    if beta == 0.0:
        return f
    return apply_multiplier(f, lambda lam: (1.0 + lam) ** (beta / 2.0))


def operator_norm(apply_fn, adjoint_fn, geom, source_beta: float = 0.0,
                  target_beta: float = 0.0, iters: int = 12, seed: int = 0) -> float:
    """||A||_{H^source -> H^target} by power iteration on the normal map.

    B = M_target o A o M_source^-1 with the spectral weights
    M_beta = (1+lam)^(beta/2); iterate u <- B* B u.  ``adjoint_fn`` is the
    plain L2 adjoint of ``apply_fn``.
    """
    u = random_band_limited(geom, seed, band=geom.N // 2 - 1)
    u = u * (1.0 / max(u.l2(), 1e-300))
    sigma = 0.0
    for _ in range(iters):
        bu = _sobolev_weight(apply_fn(_sobolev_weight(u, -source_beta)), target_beta)
        sigma = bu.l2()
        if sigma < 1e-300:
            return 0.0
        w = _sobolev_weight(adjoint_fn(_sobolev_weight(bu, target_beta)), -source_beta)
        n = w.l2()
        if n < 1e-300:
            return sigma
        u = w * (1.0 / n)
    return sigma


_PROBE_REGISTRY: dict = {}


def register_probe(name: str):
    def wrap(fn):
        _PROBE_REGISTRY[name] = fn
        return fn
    return wrap


def scaling_probe(name: str, scales, **kwargs) -> ScalingReport:
    """Run a registered operator-norm probe over a scale list."""
    if name not in _PROBE_REGISTRY:
        raise KeyError(f"unregistered probe {name!r}; known: {sorted(_PROBE_REGISTRY)}")
    return _PROBE_REGISTRY[name](np.asarray(scales, dtype=float), **kwargs)


def _tail_grid(grid: TimeGrid, s: float) -> TimeGrid:
    mask = grid.t > s
    t = grid.t[mask]
    return TimeGrid(t=t, w=TimeGrid._log_trapezoid(t))


@register_probe("identity")
def _probe_identity(scales, geom=None, **_):
    def ap(u):
        return u

    norms = [operator_norm(ap, ap, geom, 0.0, 0.0, iters=4, seed=i)
             for i, _ in enumerate(scales)]
    return ScalingReport("identity", ("L2", "L2"), scales, np.asarray(norms))


@register_probe("para_truncated")
def _probe_para_truncated(scales, geom=None, x_field=None, grid=None, b=4,
                          target_beta=0.0, iters=10):
    """||u -> Ptilde^s_u X||_{L2 -> H^target} across truncation scales s."""
    lx = apply_multiplier(x_field, lambda lam: lam)
    norms = []
    for s in scales:
        sub = grid.restricted(float(s))

        def ap(u, _s=float(s)):
            return intertwined_para_truncated(u, x_field, grid, _s, b)

        def adj(v, _sub=sub):
            return para_adjoint(inverse_l(v), lx, _sub, b)

        norms.append(operator_norm(ap, adj, geom, 0.0, target_beta, iters=iters))
    return ScalingReport("para_truncated", ("L2", f"H^{target_beta:g}"),
                         np.asarray(scales, float), np.asarray(norms))


@register_probe("para_tail")
def _probe_para_tail(scales, geom=None, x_field=None, grid=None, b=4, iters=10):
    """||u -> (Ptilde_u - Ptilde^s_u) X||_{L2 -> H^2} across s."""
    lx = apply_multiplier(x_field, lambda lam: lam)
    norms = []
    for s in scales:
        tail = _tail_grid(grid, float(s))

        def ap(u, _tail=tail):
            return inverse_l(para(u, lx, _tail, b))

        def adj(v, _tail=tail):
            return para_adjoint(inverse_l(v), lx, _tail, b)

        norms.append(operator_norm(ap, adj, geom, 0.0, 2.0, iters=iters))
    return ScalingReport("para_tail", ("L2", "H^2"),
                         np.asarray(scales, float), np.asarray(norms))
