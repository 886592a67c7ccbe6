"""The Anderson operator H = L + xi_eps - c_eps and its machinery.

The primary spectral object is the grid operator (exact symmetric matrix
assembled from the matrix-free apply); the paracontrolled representation
Hu = L u# + P_xi u# + Pi(u#, xi) + R(u) is used for consistency checks
and for the explicit eigenvalue-bound constants, never for the solve.

Domain machinery: Phi^s(u) = u - Ptilde^s_u(X1 + X2) and its fixed-point
inverse Gamma, contraction measured; the truncation scale s is chosen
against s_beta(Xi) computed from the measured enhanced-noise size x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.linalg

from .bony import (
    intertwined_para,
    intertwined_para_truncated,
    para,
    product_parts,
    resonant,
    smooth_remainder,
)
from .calderon import TimeGrid, inverse_l, sobolev_norm
from .correctors import commutator_D, corrector_C, swap_S
from .geometry import (
    TORUS,
    Field,
    GeometryError,
    apply_multiplier,
    inner,
    multiply,
    pad_values,
    unpad_coeffs,
)
from .noise import EnhancedNoise


class ConvergenceError(RuntimeError):
    pass


class NonContractionError(RuntimeError):
    def __init__(self, q):
        super().__init__(f"fixed point is not a contraction (measured ratio q = {q:.3f})")
        self.q = q


# --- grid operator ------------------------------------------------------------


def apply_H_eps(noise: EnhancedNoise, u: Field) -> Field:
    """H_eps u = L u + xi_eps . u - c_eps . u, matrix-free."""
    if u.geom.kind != noise.geom.kind or u.geom.N != noise.geom.N:
        raise GeometryError("geometry mismatch")
    lu = apply_multiplier(u, lambda lam: lam)
    pot = multiply(noise.xi_eps - noise.c_eps, u)
    return lu + pot


def dense_hamiltonian(noise: EnhancedNoise) -> np.ndarray:
    """Exact symmetric matrix of H_eps on the grid-value basis.

    Assembled by applying the operator to identity batches; symmetrized
    to kill transform roundoff (~1e-15 relative).
    """
    geom = noise.geom
    N = geom.N
    dim = N * N
    pot = noise.xi_eps - noise.c_eps
    xi_pad = pad_values(geom, pot.coeffs(), pot.basis)
    cols = np.empty((dim, dim))
    chunk = max(1, 2**22 // (dim * 8))
    eye = np.eye(dim)
    for start in range(0, dim, chunk):
        stop = min(start + chunk, dim)
        batch = eye[start:stop].reshape(stop - start, N, N)
        coeffs = _values_to_coeffs_batch(geom, batch)
        lpart = geom.lam[None] * coeffs
        prod = pad_values(geom, coeffs) * xi_pad[None]
        coeffs_out = lpart + unpad_coeffs(geom, prod)
        cols[:, start:stop] = _coeffs_to_values_batch(geom, coeffs_out).reshape(stop - start, dim).T
    return 0.5 * (cols + cols.T)


def _values_to_coeffs_batch(geom, batch_values):
    if geom.kind == TORUS:
        return (geom.side / geom.N**2) * sfft.fft2(batch_values, workers=-1)
    s = geom.sin_c
    scale = (2.0 / geom.side) * geom.dA
    return scale * np.einsum("ni,tij,mj->tnm", s, batch_values, s, optimize=True)


def _coeffs_to_values_batch(geom, batch_coeffs):
    if geom.kind == TORUS:
        vals = (geom.N**2 / geom.side) * sfft.ifft2(batch_coeffs, workers=-1)
        return vals.real
    s = geom.sin_c
    return (2.0 / geom.side) * np.einsum("tnm,ni,mj->tij", batch_coeffs, s, s,
                                         optimize=True)


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    method: str
    shift: float
    residuals: np.ndarray
    eps: float
    seed: int
    geometry: str = ""
    N: int = 0
    calibration: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "geometry": self.geometry,
            "N": self.N,
            "seed": self.seed,
            "eps": self.eps,
            "shift": self.shift,
            "eigenvalues": self.eigenvalues.tolist(),
            "residuals": self.residuals.tolist(),
            "method": self.method,
            "calibration": self.calibration,
        }


def spectrum(noise: EnhancedNoise, m_lowest: int, method: str = "dense",
             shift: float | None = None, max_iter: int = 2000) -> SpectrumResult:
    """Lowest eigenvalues of H_eps with residuals.

    dense: full symmetric solve (N <= 48); lanczos: shifted Lanczos with
    full reorthogonalization on H_eps + shift, matrix-free.
    """
    geom = noise.geom
    dim = geom.N**2
    if m_lowest > dim:
        raise ValueError("m_lowest exceeds the grid dimension")
    if method == "dense":
        if geom.N > 48:
            raise ValueError("dense solve limited to N <= 48")
        h = dense_hamiltonian(noise)
        w, v = scipy.linalg.eigh(h)
        lam = w[:m_lowest]
        vecs = v[:, :m_lowest]
        resid = np.linalg.norm(h @ vecs - vecs * lam[None, :], axis=0)
        return SpectrumResult(eigenvalues=lam, method="dense", shift=0.0,
                              residuals=resid, eps=noise.eps, seed=noise.seed,
                              geometry=geom.kind, N=geom.N)
    if method != "lanczos":
        raise ValueError(f"unknown method {method!r}")
    if shift is None:
        shift = max(0.0, -_gershgorin_floor(noise)) + 1.0
    lam, resid = _lanczos_lowest(noise, m_lowest, shift, max_iter)
    return SpectrumResult(eigenvalues=lam, method="lanczos", shift=shift,
                          residuals=resid, eps=noise.eps, seed=noise.seed,
                          geometry=geom.kind, N=geom.N)


def _gershgorin_floor(noise) -> float:
    return float(-np.abs(noise.xi_eps.values()).max() - np.abs(noise.c_eps.values()).max())


def _lanczos_lowest(noise, m_lowest, shift, max_iter, tol=1e-10):
    """Lanczos with full reorthogonalization on H_eps + shift."""
    geom = noise.geom
    dim = geom.N**2

    def av(vec):
        f = Field(geom, values=vec.reshape(geom.N, geom.N))
        out = apply_H_eps(noise, f)
        return out.values().ravel() + shift * vec

    rng = np.random.default_rng(12345)
    q = rng.standard_normal(dim)
    q /= np.linalg.norm(q)
    Q = [q]
    alphas, betas = [], []
    k_max = min(dim, max_iter)
    converged = None
    for j in range(k_max):
        w = av(Q[-1])
        a = float(Q[-1] @ w)
        alphas.append(a)
        w = w - a * Q[-1] - (betas[-1] * Q[-2] if betas else 0.0)
        # full reorthogonalization against the stored basis
        basis = np.asarray(Q)
        w = w - basis.T @ (basis @ w)
        w = w - basis.T @ (basis @ w)
        b = float(np.linalg.norm(w))
        if j >= max(2 * m_lowest, 20):
            t = scipy.linalg.eigh_tridiagonal(alphas, betas, eigvals_only=False, lapack_driver='stev')
            ritz = t[0][:m_lowest]
            bottom = np.abs(t[1][-1, :m_lowest]) * b
            if np.all(bottom < tol * (1.0 + np.abs(ritz))):
                converged = (t, j + 1)
                break
        if b < 1e-14:
            t = scipy.linalg.eigh_tridiagonal(alphas, betas, eigvals_only=False, lapack_driver='stev')
            converged = (t, j + 1)
            break
        betas.append(b)
        Q.append(w / b)
    if converged is None:
        raise ConvergenceError(f"Lanczos did not converge in {k_max} iterations")
    (w_t, v_t), used = converged
    lam = w_t[:m_lowest] - shift
    basis = np.asarray(Q[: len(alphas)])
    resid = []
    for i in range(m_lowest):
        vec = basis.T @ v_t[:, i]
        vec /= np.linalg.norm(vec)
        r = av(vec) - (lam[i] + shift) * vec
        resid.append(np.linalg.norm(r))
    return lam, np.asarray(resid)


# --- domain machinery -----------------------------------------------------------


def s_beta(x: float, alpha: float, beta: float, m_const: float) -> float:
    """Largest admissible truncation scale at regularity beta."""
    if x <= 0:
        return 1.0
    return float(((alpha - beta) / (m_const * x * (1.0 + x))) ** (4.0 / (alpha - beta)))


def s_for_delta(x: float, alpha: float, delta: float, m_const: float) -> float:
    """Canonical choice making (m/alpha) s^(alpha/4) x(1+x) = delta."""
    if x <= 0:
        return 1.0
    return float((alpha * delta / (m_const * x * (1.0 + x))) ** (4.0 / alpha))


@dataclass
class DomainMap:
    """Phi^s and its fixed-point inverse Gamma for one noise realization."""

    noise: EnhancedNoise
    grid: TimeGrid
    s: float
    fp_tol: float = 1e-10
    max_iter: int = 200
    q_measured: float = field(default=np.nan)

    def __post_init__(self):
        if not self.noise.is_full:
            raise ValueError("DomainMap needs a full-depth enhanced noise")
        self._x12 = self.noise.X1 + self.noise.X2

    def _ptilde_s(self, u: Field) -> Field:
        if self.noise.amplitude == 0.0:
            return Field.zero(u.geom)
        return intertwined_para_truncated(u, self._x12, self.grid, self.s, self.noise.b)

    def phi_s(self, u: Field) -> Field:
        """Phi^s(u) = u - Ptilde^s_u (X1 + X2)."""
        return u - self._ptilde_s(u)

    def phi(self, u: Field) -> Field:
        """Full Phi(u) = u - Ptilde_u (X1 + X2) (s = 1 grid)."""
        if self.noise.amplitude == 0.0:
            return u
        return u - intertwined_para(u, self._x12, self.grid, self.noise.b)

    def gamma(self, u_sharp: Field, return_history: bool = False):
        """Fixed point u = u# + Ptilde^s_u (X1 + X2) by iteration.

        Raises NonContractionError when the measured ratio reaches 1.
        """
        u = u_sharp
        prev_delta = None
        ratios = []
        for it in range(self.max_iter):
            nxt = u_sharp + self._ptilde_s(u)
            delta = (nxt - u).l2()
            if prev_delta is not None and prev_delta > 0:
                r = delta / prev_delta
                ratios.append(r)
                if len(ratios) >= 3 and min(ratios[-3:]) >= 1.0:
                    raise NonContractionError(float(np.median(ratios)))
            u = nxt
            if delta < self.fp_tol * max(1.0, u_sharp.l2()):
                self.q_measured = float(np.median(ratios)) if ratios else 0.0
                return (u, ratios) if return_history else u
            prev_delta = delta
        raise ConvergenceError(
            f"Gamma fixed point not converged in {self.max_iter} iterations "
            f"(last ratio {ratios[-1] if ratios else float('nan'):.3f})")


def apply_H_paracontrolled(noise: EnhancedNoise, u: Field, grid: TimeGrid,
                           s: float | None = None) -> Field:
    """Paracontrolled representation of H_eps u.

    With u# = u - Ptilde_u(X1+X2), assembling every term of
    Hu = L u# + P_xi u# + Pi(u#, xi) + R(u) reproduces the grid apply
    exactly (up to engine quadrature roundoff): the renormalization
    cancellation u Pi(X1,xi) = u Xi2 + c_eps u is used literally.  With a
    truncation scale ``s`` the equivalent representation through
    Phi^s(u) and the tail correction Psi^s(u) is used instead.
    """
    geom = u.geom
    b = noise.b
    xi, xi2, x1, x2 = noise.xi_eps, noise.Xi2, noise.X1, noise.X2
    if noise.amplitude == 0.0:
        return apply_multiplier(u, lambda lam: lam)
    x12 = x1 + x2
    pt_u = intertwined_para(u, x12, grid, b)
    u_sharp = u - pt_u
    # R(u): second-order terms plus the smooth e^{-L} corrections
    pi_x2_xi = resonant(x2, xi, grid, b)
    r = resonant(u, xi2, grid, b) + para(xi2, u, grid, b) \
        + corrector_C(u, x1, xi, grid, b) \
        + para(u, pi_x2_xi, grid, b) + commutator_D(u, x2, xi, grid, b) \
        + swap_S(u, x1, xi, grid, b) \
        + para(xi, intertwined_para(u, x2, grid, b), grid, b)
    # exact product remainders of the two Bony splits used above
    r = r + _product_remainder(u, xi, grid, b) + _product_remainder(u, xi2, grid, b)
    z = xi + xi2 + para(xi, x1, grid, b)
    z_smooth = apply_multiplier(z, lambda lam: np.exp(-lam))
    r = r + para(u, z_smooth, grid, b) \
        + apply_multiplier(para(u, z - z_smooth, grid, b), lambda lam: np.exp(-lam))
    if s is None:
        core = u_sharp
        tail = Field.zero(geom)
    else:
        pt_u_s = intertwined_para_truncated(u, x12, grid, s, b)
        core = u - pt_u_s
        delta = pt_u_s - pt_u
        tail = apply_multiplier(delta, lambda lam: lam) + para(xi, delta, grid, b) \
            + resonant(delta, xi, grid, b)
    head = apply_multiplier(core, lambda lam: lam) + para(xi, core, grid, b) \
        + resonant(core, xi, grid, b)
    return head + r + tail


def _product_remainder(f: Field, g: Field, grid: TimeGrid, b: int) -> Field:
    """REM(f,g) = f.g - P_f g - P_g f - Pi(f,g): the smooth P_1 remainder
    plus the engine's actual quadrature defect, so the Bony splits used in
    the paracontrolled assembly are exact identities."""
    pfg, pgf, res, _ = product_parts(f, g, grid, b)
    return multiply(f, g) - pfg - pgf - res


# --- constants -----------------------------------------------------------------


@dataclass(frozen=True)
class BoundConstants:
    """The paper-form constants evaluated at measured noise size x."""

    delta: float
    s: float
    alpha: float
    x: float
    k_const: float
    m_const: float
    m1: float
    m2: float
    m_plus: float
    m_minus: float
    k_xi: float
    upper_offset: float

    def to_dict(self):
        return {
            "delta": self.delta, "s": self.s, "alpha": self.alpha, "x": self.x,
            "k": self.k_const, "m": self.m_const, "m1": self.m1, "m2": self.m2,
            "m_plus": self.m_plus, "m_minus": self.m_minus, "k_xi": self.k_xi,
            "upper_offset": self.upper_offset,
        }


def bound_constants(x: float, delta: float, s: float, alpha: float = 0.9,
                    k_const: float = 1.0, m_const: float = 1.0) -> BoundConstants:
    """Closed-form constants from the eigenvalue-bound machinery.

    beta is pinned at (2/3 + alpha)/2.  k and m are the calibrated
    absolute constants; everything is polynomial in x and diverges as s
    or delta go to zero.
    """
    if not (0 < delta < 1) or not (0 < s <= 1):
        raise ValueError("need delta in (0,1) and s in (0,1]")
    beta = 0.5 * (2.0 / 3.0 + alpha)
    contr = (m_const / alpha) * s ** (alpha / 4.0) * x * (1.0 + x)
    m2 = k_const * (
        s ** ((alpha - 2.0) / 2.0) * x * (1.0 + x**2)
        + s ** ((alpha - beta) / 4.0) * x**2 * (1.0 + x**3)
        + delta**-3.0 * (1.0 + s ** (alpha / 4.0) * x * (1.0 + x)) * x**4 * (1.0 + x**8)
    )
    expo = beta / (1.0 - beta)
    m1 = k_const * (
        x * (1.0 + x**2)
        + s ** ((alpha - beta) / 4.0) * x**2 * (1.0 + x**3)
        + s ** ((alpha - 2.0) / 2.0) * x * (1.0 + x**2)
        + s ** ((alpha - 4.0) / 2.0) * x
        + delta**-expo * (x * (1.0 + x**2) + s ** ((alpha - beta) / 4.0) * x**2 * (1.0 + x)) ** expo
        * (1.0 + s ** (alpha / 4.0) * x * (1.0 + x))
    )
    m_plus = (1.0 + delta) * (1.0 + contr)
    m_minus = (1.0 - delta) / (1.0 - contr) if contr < 1.0 else np.inf
    return BoundConstants(delta=delta, s=s, alpha=alpha, x=x, k_const=k_const,
                          m_const=m_const, m1=m1, m2=m2, m_plus=m_plus,
                          m_minus=m_minus, k_xi=m1 + 1.0,
                          upper_offset=1.0 + contr + m2)


# --- calibration ------------------------------------------------------------------


def calibrate_m(noises, grid: TimeGrid, s_list, iters: int = 8) -> float:
    """Smallest m with ||u -> Ptilde^s_u(X1+X2)|| <= (m/alpha) s^(a/4) x(1+x).

    Measured by power iteration over realizations and scales; returns the
    max required value (with a 10% margin).
    """
    from .correctors import operator_norm
    from .bony import para_adjoint

    worst = 0.0
    for noise in noises:
        x12 = noise.X1 + noise.X2
        lx = apply_multiplier(x12, lambda lam: lam)
        alpha, x = noise.alpha, noise.x
        for s in s_list:
            sub = grid.restricted(float(s))

            def ap(u, _s=float(s), _n=noise, _x12=x12):
                return intertwined_para_truncated(u, _x12, grid, _s, _n.b)

            def adj(v, _sub=sub, _lx=lx, _n=noise):
                return para_adjoint(inverse_l(v), _lx, _sub, _n.b)

            q = operator_norm(ap, adj, noise.geom, iters=iters)
            req = q * alpha / (s ** (alpha / 4.0) * x * (1.0 + x))
            worst = max(worst, req)
    return 1.1 * worst


def calibrate_k(noises, grid: TimeGrid, m_const: float, delta: float = 0.5,
                n_probe: int = 10, n_modes: int = 30, seed: int = 777) -> float:
    """Smallest k making the H2-type inequality and the eigenvalue bounds
    hold on a probe ensemble (with a 50% margin).

    Uses the same canonical truncation scale s_delta as the bound studies,
    so the calibrated k transfers.  Scans random u in the domain for the
    H2 inequality and the dense spectrum for both eigenvalue bounds.
    """
    from .geometry import random_band_limited

    need = 0.0
    for noise in noises:
        alpha, x = noise.alpha, noise.x
        s = min(s_for_delta(x, alpha, delta, m_const), 1.0)
        s = max(s, grid.t[0] * 2)
        dm = DomainMap(noise, grid, s=s)
        base = bound_constants(x, delta, s, alpha, k_const=1.0, m_const=m_const)
        for i in range(n_probe):
            w = random_band_limited(noise.geom, seed + i, band=noise.geom.N // 4, decay=3.0)
            w = w * (1.0 / w.l2())
            u = dm.gamma(w)
            us = dm.phi_s(u)
            lhs = (1.0 - delta) * sobolev_norm(us, 2.0)
            rhs0 = apply_H_eps(noise, u).l2()
            # (lhs - rhs0) <= k * m2_unit * ||u||
            if base.m2 > 0:
                need = max(need, (lhs - rhs0) / (base.m2 * u.l2()))
        lam_table = np.sort(noise.geom.lam.ravel())
        spec = spectrum(noise, n_modes, method="dense")
        for n in range(n_modes):
            if np.isfinite(base.m_minus):  # lower bound needs s < s_0(Xi)
                lo_gap = base.m_minus * lam_table[n] - spec.eigenvalues[n]
                if base.m1 > 0:
                    need = max(need, lo_gap / base.m1)
            hi_gap = spec.eigenvalues[n] - base.m_plus * lam_table[n] \
                - (base.upper_offset - base.m2)
            if base.m2 > 0:
                need = max(need, hi_gap / base.m2)
    # generous margin: the binding gap (the ground state of the lower
    # bound at the smallest noise size) fluctuates by tens of percent
    # between realizations, and the paper only asks for k "large enough"
    return 3.0 * max(need, 1e-6)
