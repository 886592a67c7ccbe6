"""Symbolic Leibniz redistribution and numeric paraproduct evaluation.

The product of two fields decomposes over the time grid as

    f g = sum_terms b_Q int_0^1 Q^1.(Q^2 f . Q^3 g) dt/t + P_1(P_1 f . P_1 g)

where each Q is an operator word built from sqrt(t)*d_i factors, (tL)
powers and a propagator P_t^(c).  The three exact starting integrands
(outer-localized, f-localized, g-localized) each carry one Q^(b) of
cancellation order 2b; the engine drains that excess one derivative unit
at a time through the Leibniz rule, branching over the two recipient
slots, until every slot has order <= b.  Draining alternates between
peeling a derivative pair out of a (tL) factor (which creates an
axis-contracted derivative pair shared by two slots, with a sign from
tL = -sum_i (sqrt(t) d_i)^2) and moving the leftover bare derivative.

Words commute on the torus, so a merged term is fully described by the
(tL)-power and propagator index of each slot plus the number of
contracted derivative pairs joining each pair of slots.  Every term's
scalar multiplier at a frequency pair is exact, which gives the
redistribution identity test its 1e-12 tolerance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import product as iproduct

import numpy as np
import scipy.fft as sfft

from .calderon import TimeGrid, inverse_l, propagator_multiplier
from .geometry import (
    SQUARE,
    TORUS,
    Field,
    GeometryError,
    apply_multiplier,
    multiply,
    pad_values,
    unpad_coeffs,
)

OUTER, FSLOT, GSLOT = 0, 1, 2
PARA_FG, PARA_GF, RESONANT = "para_fg", "para_gf", "resonant"


@dataclass(frozen=True)
class OperatorWord:
    """Commuting word: n_d contracted-derivative factors, (tL)^p, P_t^(c)."""

    n_d: int
    p: int
    c: int

    @property
    def order(self) -> int:
        return self.n_d + 2 * self.p

    def describe(self) -> dict:
        return {"derivs": self.n_d, "lap_power": self.p, "prop": self.c}


@dataclass(frozen=True)
class TermTriple:
    """One redistributed integrand with contracted derivative pairs.

    n_of / n_og / n_fg count the axis-contracted derivative pairs joining
    (outer, f), (outer, g) and (f, g).  coeff carries the sign pattern of
    the drains and the 1/(b-1)! of the consumed localizer.
    """

    coeff: Fraction
    outer: OperatorWord
    fop: OperatorWord
    gop: OperatorWord
    n_of: int
    n_og: int
    n_fg: int

    @property
    def signature(self) -> tuple[int, int, int]:
        return (self.outer.order, self.fop.order, self.gop.order)

    @property
    def n_pairs(self) -> int:
        return self.n_of + self.n_og + self.n_fg

    def bucket(self, b: int) -> str:
        _, a2, a3 = self.signature
        if a2 < b / 2:
            return PARA_FG
        if a3 < b / 2:
            return PARA_GF
        return RESONANT

    def swapped(self) -> "TermTriple":
        """Same term with the roles of f and g interchanged."""
        return TermTriple(self.coeff, self.outer, self.gop, self.fop,
                          n_of=self.n_og, n_og=self.n_of, n_fg=self.n_fg)

    def adjoint(self) -> "TermTriple":
        """Adjoint in the f argument: <T(f, X), v> = <f, T'(v, X)>.

        Multiplier parts are self-adjoint; each derivative flips sign, and
        only the outer/f words are transposed, so the sign is
        (-1)^(n_og + n_fg).
        """
        sign = -1 if (self.n_og + self.n_fg) % 2 else 1
        return TermTriple(self.coeff * sign, self.fop, self.outer, self.gop,
                          n_of=self.n_of, n_og=self.n_fg, n_fg=self.n_og)

    def to_dict(self) -> dict:
        return {
            "coeff": str(self.coeff),
            "outer": self.outer.describe(),
            "fop": self.fop.describe(),
            "gop": self.gop.describe(),
            "pairs": {"outer_f": self.n_of, "outer_g": self.n_og, "f_g": self.n_fg},
            "signature": list(self.signature),
        }


class _DrainState:
    """Mutable generation state: per-slot label stacks and word data."""

    __slots__ = ("sign", "stacks", "p", "c", "partner")

    def __init__(self, sign, stacks, p, c, partner):
        self.sign = sign
        self.stacks = stacks      # per-slot list of label ids, top = last
        self.p = p                # per-slot (tL) power
        self.c = c                # per-slot propagator index
        self.partner = partner    # label -> {slot_a, slot_b}

    def clone(self):
        return _DrainState(self.sign, [list(s) for s in self.stacks],
                           list(self.p), list(self.c),
                           {k: set(v) for k, v in self.partner.items()})

    def order(self, slot):
        return len(self.stacks[slot]) + 2 * self.p[slot]

    def deposit(self, slot, label):
        st = self.stacks[slot]
        if st and st[-1] == label:
            # contracted pair landed next to its mate: sum_i d_i d_i = -tL
            st.pop()
            self.p[slot] += 1
            self.sign = -self.sign
            del self.partner[label]
        else:
            st.append(label)
            self.partner[label].add(slot)


def _drain_all(state: _DrainState, b: int, next_label: int, out: list):
    over = next((s for s in range(3) if state.order(s) > b), None)
    if over is None:
        out.append(state)
        return
    recipients = [s for s in range(3) if s != over]
    if state.stacks[over]:
        # move the bare outermost derivative; Leibniz gives +/- per recipient
        label = state.stacks[over][-1]
        for rec in recipients:
            ns = state.clone()
            ns.stacks[over].pop()
            ns.partner[label].discard(over)
            if over == OUTER or rec == OUTER:
                pass  # derivative moved across the product boundary: +1
            else:
                ns.sign = -ns.sign  # input -> other input carries the minus
            ns.deposit(rec, label)
            _drain_all(ns, b, next_label, out)
    else:
        # peel one derivative pair out of the leading (tL) factor
        assert state.p[over] >= 1
        label = next_label
        for rec in recipients:
            ns = state.clone()
            ns.p[over] -= 1
            ns.stacks[over].append(label)
            ns.partner[label] = {over}
            # tL = -sum_i d_i d_i contributes one minus; moving the outer
            # derivative of the pair off an *input* slot into the other
            # input flips once more
            ns.sign = -ns.sign
            if over != OUTER and rec != OUTER:
                ns.sign = -ns.sign
            ns.deposit(rec, label)
            _drain_all(ns, b, next_label + 1, out)


@dataclass(frozen=True)
class BonyDecomposition:
    """Merged redistribution terms for one cancellation parameter b."""

    b: int
    terms: tuple[TermTriple, ...]

    def bucket_terms(self, bucket: str) -> tuple[TermTriple, ...]:
        return tuple(t for t in self.terms if t.bucket(self.b) == bucket)

    def to_json(self) -> str:
        payload = {"b": self.b, "terms": [t.to_dict() for t in self.terms]}
        return json.dumps(payload, indent=2, sort_keys=True)

    @property
    def n_terms(self) -> int:
        return len(self.terms)


@lru_cache(maxsize=None)
def redistribute(b: int) -> BonyDecomposition:
    """Drain the three exact starting integrands down to A_b signatures.

    Raises on odd or out-of-range b.  The result is cached; term lists are
    immutable.
    """
    if b % 2 or not (2 <= b <= 8):
        raise ValueError(f"b must be even with 2 <= b <= 8, got {b}")
    finished: list[tuple[int, _DrainState]] = []
    for start in range(3):
        p = [0, 0, 0]
        c = [b, b, b]
        p[start] = b
        c[start] = 1  # Q^(b) = (tL)^b e^{-tL} / (b-1)!
        st = _DrainState(1, [[], [], []], p, c, {})
        acc: list[_DrainState] = []
        _drain_all(st, b, 0, acc)
        finished.extend((start, s) for s in acc)
    merged: dict[tuple, Fraction] = {}
    base = Fraction(1, math.factorial(b - 1))
    for _, s in finished:
        counts = {frozenset(v): 0 for v in ({OUTER, FSLOT}, {OUTER, GSLOT}, {FSLOT, GSLOT})}
        for label, slots in s.partner.items():
            assert len(slots) == 2, "unpaired derivative label"
            counts[frozenset(slots)] += 1
        key = (counts[frozenset({OUTER, FSLOT})], counts[frozenset({OUTER, GSLOT})],
               counts[frozenset({FSLOT, GSLOT})],
               s.p[OUTER], s.c[OUTER], s.p[FSLOT], s.c[FSLOT], s.p[GSLOT], s.c[GSLOT])
        merged[key] = merged.get(key, Fraction(0)) + base * s.sign
    terms = []
    for key, coeff in sorted(merged.items()):
        if coeff == 0:
            continue
        n_of, n_og, n_fg, po, co, pf, cf, pg, cg = key
        t = TermTriple(coeff,
                       OperatorWord(n_of + n_og, po, co),
                       OperatorWord(n_of + n_fg, pf, cf),
                       OperatorWord(n_og + n_fg, pg, cg),
                       n_of=n_of, n_og=n_og, n_fg=n_fg)
        assert sum(t.signature) == 2 * b and max(t.signature) == b
        terms.append(t)
    return BonyDecomposition(b=b, terms=tuple(terms))


# --- exact scalar multipliers -------------------------------------------------


def _base_multiplier(word: OperatorWord, tl: np.ndarray) -> np.ndarray:
    return tl**word.p * propagator_multiplier(tl, word.c)


def term_multiplier(term: TermTriple, t, k, l) -> np.ndarray:
    """Exact scalar multiplier of one term at torus frequency pair (k, l).

    Contracted pairs joining slots at frequencies u, v contribute
    sum_i (i sqrt(t) u_i)(i sqrt(t) v_i) = -t (u . v).
    """
    k = np.asarray(k, dtype=float)
    l = np.asarray(l, dtype=float)
    kl = k + l
    lam1, lam2, lam3 = kl @ kl, k @ k, l @ l
    t = np.asarray(t, dtype=float)
    val = (float(term.coeff)
           * (-t * (kl @ k)) ** term.n_of
           * (-t * (kl @ l)) ** term.n_og
           * (-t * (k @ l)) ** term.n_fg)
    return (val * _base_multiplier(term.outer, t * lam1)
            * _base_multiplier(term.fop, t * lam2)
            * _base_multiplier(term.gop, t * lam3))


def undistributed_multiplier(b: int, t, k, l) -> np.ndarray:
    """Multiplier of Q(PfPg) + P(QfPg) + P(PfQg) at (k, l), t-pointwise."""
    k = np.asarray(k, dtype=float)
    l = np.asarray(l, dtype=float)
    kl = k + l
    t = np.asarray(t, dtype=float)
    lam1, lam2, lam3 = kl @ kl, k @ k, l @ l
    p1 = propagator_multiplier(t * lam1, b)
    p2 = propagator_multiplier(t * lam2, b)
    p3 = propagator_multiplier(t * lam3, b)
    fact = math.factorial(b - 1)
    q1 = (t * lam1) ** b * np.exp(-t * lam1) / fact
    q2 = (t * lam2) ** b * np.exp(-t * lam2) / fact
    q3 = (t * lam3) ** b * np.exp(-t * lam3) / fact
    return q1 * p2 * p3 + p1 * q2 * p3 + p1 * p2 * q3


def remainder_multiplier(b: int, k, l) -> float:
    """Multiplier of the smooth remainder P_1(P_1 f . P_1 g) at (k, l)."""
    k = np.asarray(k, dtype=float)
    l = np.asarray(l, dtype=float)
    kl = k + l
    return float(propagator_multiplier(np.asarray(kl @ kl), b)
                 * propagator_multiplier(np.asarray(k @ k), b)
                 * propagator_multiplier(np.asarray(l @ l), b))


def resonant_weight(decomp: BonyDecomposition, lam: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Resonant multiplier sum at output frequency zero, rho(lam).

    Only pairs joining the two input slots survive (outer derivatives
    vanish at frequency zero); at the pair (k, -k) they contribute
    +t*lam each.  By the redistribution identity this equals
    1 - p_b(lam)^2 e^(-2 lam) up to quadrature error.
    """
    lam = np.asarray(lam, dtype=float)
    out = np.zeros_like(lam)
    for term in decomp.bucket_terms(RESONANT):
        if term.n_of or term.n_og or term.outer.n_d:
            continue
        if term.outer.p:
            continue
        acc = np.zeros_like(lam)
        for t, w in zip(grid.t, grid.w):
            tl = t * lam
            acc += w * ((t * lam) ** term.n_fg
                        * _base_multiplier(term.fop, tl)
                        * _base_multiplier(term.gop, tl))
        out += float(term.coeff) * acc
    return out


# --- numeric evaluation -------------------------------------------------------


def _chunked(n: int, size: int):
    for i in range(0, n, size):
        yield slice(i, min(i + size, n))


class _TorusEval:
    """Batched torus evaluation of a list of terms over the time grid."""

    def __init__(self, geom, grid: TimeGrid):
        self.geom = geom
        self.grid = grid
        n2 = (2 * geom.N) ** 2
        self.chunk = max(8, int(2**21 / (n2 * 8)))

    def run(self, fh, gh, groups):
        """groups: list of (bucket, term, axes_of, axes_og, axes_fg) tuples
        pre-expanded over axis assignments."""
        geom, grid = self.geom, self.grid
        lam = geom.lam
        out = {}
        for sl in _chunked(grid.n_t, self.chunk):
            t = grid.t[sl][:, None, None]
            w = grid.w[sl]
            tl = t * lam[None]
            e = np.exp(-tl)
            base_cache: dict[OperatorWord, np.ndarray] = {}

            def base(word):
                m = base_cache.get(word)
                if m is None:
                    m = tl**word.p * _poly(tl, word.c) * e
                    base_cache[word] = m
                return m

            comp_cache: dict = {}

            def component(which, word, axes, coeffs):
                key = (which, word, axes)
                v = comp_cache.get(key)
                if v is None:
                    mult = base(word).astype(np.complex128)
                    for ax in axes:
                        kk = geom.kx if ax == 0 else geom.ky
                        mult = mult * (1j * np.sqrt(t) * kk[None])
                    v = pad_values(geom, mult * coeffs[None])
                    comp_cache[key] = v
                return v

            acc: dict = {}
            for bucket, term, ax_of, ax_og, ax_fg in groups:
                fcomp = component("f", term.fop, tuple(sorted(ax_of + ax_fg)), fh)
                gcomp = component("g", term.gop, tuple(sorted(ax_og + ax_fg)), gh)
                okey = (bucket, term.outer, tuple(sorted(ax_of + ax_og)))
                buf = acc.get(okey)
                prod = fcomp * gcomp
                if buf is None:
                    acc[okey] = float(term.coeff) * prod
                else:
                    buf += float(term.coeff) * prod
            for (bucket, oword, oaxes), buf in acc.items():
                truncated = unpad_coeffs(geom, buf)
                mult = base(oword).astype(np.complex128)
                for ax in oaxes:
                    kk = geom.kx if ax == 0 else geom.ky
                    mult = mult * (1j * np.sqrt(t) * kk[None])
                contrib = np.einsum("t,tnm->nm", w, mult * truncated, optimize=True)
                if bucket in out:
                    out[bucket] += contrib
                else:
                    out[bucket] = contrib
        return out


def _poly(tl, c):
    out = np.ones_like(tl)
    term = np.ones_like(tl)
    for j in range(1, c):
        term = term * tl / j
        out = out + term
    return out


@lru_cache(maxsize=4)
def _square_aux(N: int):
    """Mixed-basis matrices on the fine interior grid of the square.

    Sine modes are n = 1..; cosine modes n = 0.. (n = 0 arises in even
    products, not from derivatives).  Analysis in the sine family is
    exact by discrete orthogonality; the cosine family is inverted
    numerically (well conditioned, near (M+1)/2 x identity).
    """
    m = 2 * N
    xf = np.arange(1, m + 1) * (np.pi / (m + 1))
    n_all = np.arange(0, m)
    sin_f = np.sin(np.outer(n_all + 1, xf))      # (M, M): n = 1..M
    cos_f = np.cos(np.outer(n_all, xf))          # (M, M): n = 0..M-1
    sin_analysis = (2.0 / (m + 1)) * sin_f       # c = sin_analysis @ v, exact
    cos_analysis = np.linalg.inv(cos_f.T)        # solves v = cos_f.T @ c
    # synthesis of (N+1)-mode slot arrays on the fine grid
    j = np.arange(0, N + 1)
    sin_syn = np.sin(np.outer(j + 1, xf))        # slot j <-> n = j+1
    cos_syn = np.cos(np.outer(j, xf))            # slot j <-> n = j
    return {"sin_f": sin_f, "cos_f": cos_f, "sin_an": sin_analysis,
            "cos_an": cos_analysis, "sin_syn": sin_syn, "cos_syn": cos_syn}


class _SquareEval:
    """Square-geometry evaluation via the parity-tracked mixed calculus.

    Slot and outer words act on per-axis modal arrays with basis tags:
    derivatives toggle sin <-> cos with the index shift n stays fixed
    (sin slot j holds n = j+1, cos slot j holds n = j), and spectral
    multipliers are diagonal with lam = nx^2 + ny^2 of the current mixed
    basis, i.e. the Neumann realization along a cosine axis.  Any
    multiplier applied off the pure sine basis is flagged.
    """

    def __init__(self, geom, grid: TimeGrid):
        self.geom = geom
        self.grid = grid
        self.aux = _square_aux(geom.N)
        self.chunk = max(8, int(2**21 / ((2 * geom.N) ** 2 * 8)))
        self.mixed_basis_used = False

    # modal helpers on (ct, N+1, N+1) arrays -------------------------------

    def _modes(self, basis_ax):
        j = np.arange(0, self.geom.N + 1, dtype=float)
        return j + 1.0 if basis_ax == "s" else j

    def _lam(self, basis):
        mx = self._modes(basis[0])
        my = self._modes(basis[1])
        return mx[:, None] ** 2 + my[None, :] ** 2

    def _deriv(self, c, basis, ax, t):
        """sqrt(t) d_ax on a modal array; returns (new array, new basis)."""
        nb = list(basis)
        out = np.zeros_like(c)
        if basis[ax] == "s":
            nb[ax] = "c"
            n = np.arange(1, self.geom.N + 2, dtype=float)  # target cos n = j
            if ax == 0:
                out[:, 1:, :] = c[:, :-1, :] * n[:-1, None]
            else:
                out[:, :, 1:] = c[:, :, :-1] * n[None, :-1]
        else:
            nb[ax] = "s"
            n = np.arange(0, self.geom.N + 1, dtype=float)   # source cos n = j
            if ax == 0:
                out[:, :-1, :] = -c[:, 1:, :] * n[1:, None]
            else:
                out[:, :, :-1] = -c[:, :, 1:] * n[None, 1:]
        return out * np.sqrt(t), tuple(nb)

    def _apply_word(self, c, basis, word, axes, t):
        """Derivatives first (innermost), then the spectral multiplier."""
        for ax in axes:
            c, basis = self._deriv(c, basis, ax, t)
        if word.p or word.c:
            if basis != ("s", "s"):
                self.mixed_basis_used = True
            tl = t * self._lam(basis)[None]
            c = c * (tl**word.p * _poly(tl, word.c) * np.exp(-tl))
        return c, basis

    def _slot_component(self, word, axes, coeffs, t):
        """Slot words: multiplier on the sine input, derivatives outermost."""
        geom = self.geom
        tl = t * geom.lam[None]
        c0 = (tl**word.p * _poly(tl, word.c) * np.exp(-tl)) * coeffs[None]
        c = np.zeros((c0.shape[0], geom.N + 1, geom.N + 1))
        c[:, : geom.N, : geom.N] = c0
        basis = ("s", "s")
        for ax in axes:
            c, basis = self._deriv(c, basis, ax, t)
        return self._synthesize(c, basis)

    def _synthesize(self, c, basis):
        mx = self.aux["sin_syn"] if basis[0] == "s" else self.aux["cos_syn"]
        my = self.aux["sin_syn"] if basis[1] == "s" else self.aux["cos_syn"]
        return (2.0 / self.geom.side) * np.einsum("tnm,ni,mj->tij", c, mx, my,
                                                  optimize=True)

    def _analyze_product(self, vals, parity):
        """Fine-grid values -> (N+1)-mode parity-basis modal array."""
        geom = self.geom
        keep = geom.N + 1
        ax_an = (self.aux["sin_an"] if parity[0] == "s" else self.aux["cos_an"])[:keep]
        ay_an = (self.aux["sin_an"] if parity[1] == "s" else self.aux["cos_an"])[:keep]
        return (geom.side / 2.0) * np.einsum("ni,tij,mj->tnm", ax_an, vals, ay_an,
                                             optimize=True)

    def run(self, fh, gh, groups):
        geom, grid = self.geom, self.grid
        out_vals = {}
        for sl in _chunked(grid.n_t, self.chunk):
            t = grid.t[sl][:, None, None]
            w = grid.w[sl]
            comp_cache: dict = {}

            def component(which, word, axes, coeffs):
                key = (which, word, axes)
                if key not in comp_cache:
                    odd = [True, True]  # sine start on both axes
                    for ax in axes:
                        odd[ax] = not odd[ax]
                    vals = self._slot_component(word, axes, coeffs, t)
                    comp_cache[key] = (vals, tuple(odd))
                return comp_cache[key]

            acc: dict = {}
            for bucket, term, ax_of, ax_og, ax_fg in groups:
                fvals, fodd = component("f", term.fop, tuple(sorted(ax_of + ax_fg)), fh)
                gvals, godd = component("g", term.gop, tuple(sorted(ax_og + ax_fg)), gh)
                parity = tuple("s" if (a != b_) else "c" for a, b_ in zip(fodd, godd))
                okey = (bucket, term.outer, tuple(sorted(ax_of + ax_og)), parity)
                prod = fvals * gvals
                if okey in acc:
                    acc[okey] += float(term.coeff) * prod
                else:
                    acc[okey] = float(term.coeff) * prod
            for (bucket, oword, oaxes, parity), buf in acc.items():
                modal = self._analyze_product(buf, parity)
                modal, basis = self._apply_word(modal, parity, oword, oaxes, t)
                vals = self._synthesize(modal, basis)
                contrib = np.einsum("t,tij->ij", w, vals, optimize=True)
                if bucket in out_vals:
                    out_vals[bucket] += contrib
                else:
                    out_vals[bucket] = contrib
        # final projection of fine-grid values onto the N-mode sine basis
        return {k: unpad_coeffs(geom, v[None])[0] for k, v in out_vals.items()}


def _expand_groups(terms, b):
    """Expand contracted pairs over axis assignments {0,1}^n_pairs."""
    groups = []
    for term in terms:
        bucket = term.bucket(b)
        pair_slots = ([("of")] * term.n_of + [("og")] * term.n_og + [("fg")] * term.n_fg)
        for axes in iproduct((0, 1), repeat=len(pair_slots)):
            ax_of = tuple(a for p, a in zip(pair_slots, axes) if p == "of")
            ax_og = tuple(a for p, a in zip(pair_slots, axes) if p == "og")
            ax_fg = tuple(a for p, a in zip(pair_slots, axes) if p == "fg")
            groups.append((bucket, term, ax_of, ax_og, ax_fg))
    return groups


def _evaluate(f: Field, g: Field, grid: TimeGrid, b: int, terms) -> tuple[dict, dict]:
    geom = f.geom
    if geom.kind == TORUS:
        ev = _TorusEval(geom, grid)
        res = ev.run(f.coeffs(), g.coeffs(), _expand_groups(terms, b))
        meta = {"geometry": TORUS, "mixed_basis": False}
    else:
        if f.basis != ("s", "s") or g.basis != ("s", "s"):
            raise GeometryError("square paraproducts take sine-basis inputs")
        ev = _SquareEval(geom, grid)
        res = ev.run(f.coeffs(), g.coeffs(), _expand_groups(terms, b))
        meta = {"geometry": SQUARE, "mixed_basis": ev.mixed_basis_used,
                "note": "dirichlet words evaluated in the mixed sine/cosine calculus"}
    fields = {k: Field(geom, coeffs=v) for k, v in res.items()}
    return fields, meta


def _zero(geom):
    return Field.zero(geom)


def product_parts(f: Field, g: Field, grid: TimeGrid, b: int = 4):
    """One engine sweep returning (P_f g, P_g f, resonant, remainder)."""
    f._check_mate(g)
    decomp = redistribute(b)
    fields, _ = _evaluate(f, g, grid, b, decomp.terms)
    rem = smooth_remainder(f, g, b)
    return (fields.get(PARA_FG, _zero(f.geom)), fields.get(PARA_GF, _zero(f.geom)),
            fields.get(RESONANT, _zero(f.geom)), rem)


def smooth_remainder(f: Field, g: Field, b: int = 4) -> Field:
    """P_1^(b)(P_1^(b) f . P_1^(b) g)."""
    pf = apply_multiplier(f, lambda lam: propagator_multiplier(lam, b))
    pg = apply_multiplier(g, lambda lam: propagator_multiplier(lam, b))
    return apply_multiplier(multiply(pf, pg), lambda lam: propagator_multiplier(lam, b))


def para(f: Field, g: Field, grid: TimeGrid, b: int = 4) -> Field:
    """Paraproduct P_f g: f modulates, the frequencies of g dominate."""
    f._check_mate(g)
    decomp = redistribute(b)
    fields, _ = _evaluate(f, g, grid, b, decomp.bucket_terms(PARA_FG))
    return fields.get(PARA_FG, _zero(f.geom))


def resonant(f: Field, g: Field, grid: TimeGrid, b: int = 4) -> Field:
    """Resonant part Pi(f, g): both inputs carry cancellation >= b/2."""
    f._check_mate(g)
    decomp = redistribute(b)
    fields, _ = _evaluate(f, g, grid, b, decomp.bucket_terms(RESONANT))
    return fields.get(RESONANT, _zero(f.geom))


def para_truncated(f: Field, g: Field, grid: TimeGrid, s: float, b: int = 4) -> Field:
    """P^s_f g: the paraproduct quadrature restricted to t <= s."""
    return para(f, g, grid.restricted(s), b)


def intertwined_para(f: Field, g: Field, grid: TimeGrid, b: int = 4) -> Field:
    """Ptilde_f g := L^-1 P_f (L g); satisfies L Ptilde = (Id - e^-L) P L."""
    lg = apply_multiplier(g, lambda lam: lam)
    return inverse_l(para(f, lg, grid, b))


def intertwined_para_truncated(f: Field, g: Field, grid: TimeGrid, s: float,
                               b: int = 4) -> Field:
    """Ptilde^s_f g = L^-1 P^s_f (L g), preserving the intertwining."""
    lg = apply_multiplier(g, lambda lam: lam)
    return inverse_l(para_truncated(f, lg, grid, s, b))


def intertwined_para_explicit(f: Field, g: Field, grid: TimeGrid, b: int = 4) -> Field:
    """Cross-check route: per-t quadrature of Qtilde^1.(Q^2 f . Qtilde^3 g)
    with Qtilde^1 = Q^1 (tL)^-1 and Qtilde^3 = Q^3 (tL).

    The per-t inverse is the regularized (tL)^-1 = t^-1 L^-1, so the g
    slots gain one (tL) power, the quadrature measure gains 1/t, and
    L^-1 acts on the output.  Exercises different words and weights than
    intertwined_para; the two agree up to roundoff on the eigenbasis.
    """
    geom = f.geom
    if geom.kind != TORUS:
        raise GeometryError("explicit intertwined cross-check is torus-only")
    decomp = redistribute(b)
    terms = tuple(
        TermTriple(t.coeff, t.outer, t.fop,
                   OperatorWord(t.gop.n_d, t.gop.p + 1, t.gop.c),
                   n_of=t.n_of, n_og=t.n_og, n_fg=t.n_fg)
        for t in decomp.bucket_terms(PARA_FG))
    tilted = TimeGrid(t=grid.t, w=grid.w / grid.t)
    fields, _ = _evaluate(f, g, tilted, b, terms)
    total = _zero(geom)
    for fld in fields.values():
        total = total + fld
    return inverse_l(total)


def para_adjoint(v: Field, g: Field, grid: TimeGrid, b: int = 4) -> Field:
    """Adjoint of u -> P_u g in the u argument: <P_u g, v> = <u, para_adjoint(v, g)>."""
    v._check_mate(g)
    decomp = redistribute(b)
    terms = tuple(t.adjoint() for t in decomp.bucket_terms(PARA_FG))
    fields, _ = _evaluate(v, g, grid, b, terms)
    # adjoint terms all live in one synthetic bucket; sum whatever came back
    total = _zero(v.geom)
    for fld in fields.values():
        total = total + fld
    return total
