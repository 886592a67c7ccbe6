"""White noise, Wick renormalization and the enhanced noise realization.

A white-noise sample has iid standard-normal coefficients in the
orthonormal eigenbasis; sampling grid values with variance 1/dA realizes
this exactly through the unitary transforms.  The regularization is the
heat kernel, xi_eps = e^(-eps L) xi, and

    X1 = -L^(-1) xi_eps,
    c_eps = E[Pi(X1, xi_eps)]          (negative, ~ -(1/4pi) log(1/eps)),
    Xi2 = Pi(X1, xi_eps) - c_eps,
    X2 = -L^(-1)(Xi2 + P_xi X1).

Signs follow the operator convention H = L + xi with L = -Laplace >= 0:
subtracting the (negative, diverging) c_eps pushes the spectrum back up.
The renormalization slope tests fit the positive Wick mass -c_eps.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .bony import para, redistribute, resonant, resonant_weight
from .calderon import (
    BesovParams,
    TimeGrid,
    besov_norm,
    inverse_l_multiplier,
)
from .geometry import (
    SQUARE,
    TORUS,
    Field,
    Geometry,
    apply_multiplier,
    make_geometry,
    resolved_mask,
)
from .util import parallel_map

_KIND_CODE = {TORUS: 0, SQUARE: 1}
_KIND_FROM_CODE = {v: k for k, v in _KIND_CODE.items()}

_MAGIC = b"HPARA1"
_VERSION = 1


@dataclass(frozen=True)
class WhiteNoise:
    """A white-noise sample: iid N(0,1) coefficients per eigenmode."""

    seed: int
    geom: Geometry
    coeffs: np.ndarray

    def as_field(self) -> Field:
        return Field(self.geom, coeffs=self.coeffs.copy())


def sample_white(geom: Geometry, seed: int) -> WhiteNoise:
    """Deterministic white noise for (seed, N, kind).

    Grid values are iid N(0, 1/dA); the discrete orthonormality of the
    eigenbasis makes the coefficients exactly iid standard normal.  On
    the torus the sample lives in the resolved space (Nyquist lines
    zeroed), matching every operator of the calculus.
    """
    rng = np.random.default_rng([_KIND_CODE[geom.kind], geom.N, seed & 0x7FFFFFFF, seed >> 31 & 0x7FFFFFFF])
    vals = rng.standard_normal((geom.N, geom.N)) / np.sqrt(geom.dA)
    f = Field(geom, values=vals)
    c = f.coeffs()
    if geom.kind == TORUS:
        c = c * resolved_mask(geom.N)
    return WhiteNoise(seed=seed, geom=geom, coeffs=c)


def n_resolved_modes(geom: Geometry) -> int:
    """Dimension of the resolved mode space carrying the white noise."""
    if geom.kind == TORUS:
        return int(resolved_mask(geom.N).sum())
    return geom.N * geom.N


def regularize(xi: Field, eps: float) -> Field:
    """xi_eps = e^(-eps L) xi (decaying heat-kernel convention)."""
    return apply_multiplier(xi, lambda lam: np.exp(-eps * lam))


def linear_object(xi_eps: Field) -> Field:
    """X1 = -L^(-1) xi_eps."""
    return apply_multiplier(xi_eps, lambda lam: -inverse_l_multiplier(lam))


def wick_weights(geom: Geometry, eps: float, grid: TimeGrid, b: int = 4,
                 kernel: str = "resonant") -> np.ndarray:
    """Per-mode Wick weight e^(-2 eps lam) ell(lam) rho(lam).

    kernel = "resonant" carries the engine's resonant weight at output
    frequency zero (quadrature on the grid); "plain" uses rho = 1, the
    bare product E[xi_eps X_eps].
    """
    lam_flat = np.unique(geom.lam.ravel())
    w = np.exp(-2.0 * eps * lam_flat) * inverse_l_multiplier(lam_flat)
    if kernel == "resonant":
        rho = resonant_weight(redistribute(b), lam_flat, grid)
    elif kernel == "plain":
        rho = np.ones_like(lam_flat)
    else:
        raise ValueError(f"unknown Wick kernel {kernel!r}")
    full = (w * rho)[np.searchsorted(lam_flat, geom.lam)]
    if geom.kind == TORUS:
        full = full * resolved_mask(geom.N)
    return full


def renorm_constant_exact(geom: Geometry, eps: float, grid: TimeGrid, b: int = 4,
                          kernel: str | None = None, amplitude: float = 1.0) -> Field:
    """c_eps = E[Pi(X_eps, xi_eps)] by exact Gaussian mode sum.

    On the torus every mode pair (k, -k) lands at output frequency zero,
    so c_eps is the constant -(1/vol) sum_k e^(-2 eps lam) ell(lam)
    rho(lam); the engine's resonant weight rho is the fast path.  On the
    square the default is the plain product kernel E[xi_eps X_eps](x)
    (a convergent correction away from E[Pi]; recorded in metadata) and
    c_eps is a genuine function vanishing at the boundary.
    """
    if eps < 1.0 / geom.lam_max:
        raise ValueError(f"eps = {eps} below the grid-scale floor 1/lam_max = {1.0 / geom.lam_max:.3g}")
    if kernel is None:
        kernel = "resonant" if geom.kind == TORUS else "plain"
    weights = wick_weights(geom, eps, grid, b, kernel) * amplitude**2
    if geom.kind == TORUS:
        value = -weights.sum() / geom.volume
        return Field(geom, values=np.full((geom.N, geom.N), value))
    # sum_n w_n e_n(x)^2 with e_n = (2/pi) sin sin, via separable sin^2 sums
    s2 = geom.sin_c**2
    vals = -(2.0 / geom.side) ** 2 * np.einsum("nm,ni,mj->ij", weights, s2, s2,
                                               optimize=True)
    return Field(geom, values=vals)


def renorm_oracle_torus(geom: Geometry, eps: float, b: int = 4) -> float:
    """Independent lattice-sum oracle for the positive Wick mass -c_eps.

    Scalar sum over the integer lattice with the closed-form resonant
    weight 1 - p_b(lam)^2 e^(-2 lam); no field machinery involved.
    """
    from .calderon import poly_pb

    lam = geom.lam[resolved_mask(geom.N)].ravel()
    rho = 1.0 - poly_pb(lam, b) ** 2 * np.exp(-2.0 * lam)
    w = np.exp(-2.0 * eps * lam) * inverse_l_multiplier(lam) * rho
    return float(w.sum() / geom.volume)


def renorm_constant_mc(geom: Geometry, eps: float, grid: TimeGrid, samples: int,
                       b: int = 4, base_seed: int = 10_000, workers: int | None = None):
    """Monte Carlo c_eps: average of Pi(X1, xi_eps) over independent seeds.

    Returns (mean field, pointwise standard-error field, per-seed spatial
    means).  Seeds run on a bounded worker pool with a deterministic
    order-preserving reduction.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples")

    def one(i):
        xi = sample_white(geom, base_seed + i).as_field()
        xi_eps = regularize(xi, eps)
        x1 = linear_object(xi_eps)
        return resonant(x1, xi_eps, grid, b).values()

    acc = np.zeros((geom.N, geom.N))
    acc2 = np.zeros((geom.N, geom.N))
    spatial_means = np.empty(samples)
    for i, pi in enumerate(parallel_map(one, range(samples), workers)):
        acc += pi
        acc2 += pi * pi
        spatial_means[i] = pi.mean()
    mean = acc / samples
    var = np.maximum(acc2 / samples - mean**2, 0.0)
    stderr = np.sqrt(var / samples)
    return Field(geom, values=mean), Field(geom, values=stderr), spatial_means


@dataclass
class EnhancedNoise:
    """One realization of the enhanced noise Xi_eps with measured norms."""

    geom: Geometry
    seed: int
    eps: float
    alpha: float
    b: int
    n_t: int
    amplitude: float
    xi: Field
    xi_eps: Field
    X1: Field
    c_eps: Field
    Xi2: Field | None
    X2: Field | None
    norms: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def x(self) -> float:
        """||Xi||_{X^alpha} = ||xi_eps||_{C^(alpha-2)} + ||Xi2||_{C^(2alpha-2)}."""
        return self.norms["xi_eps"] + self.norms.get("Xi2", 0.0)

    @property
    def is_full(self) -> bool:
        return self.Xi2 is not None


def enhance(geom: Geometry, seed: int, eps: float, grid: TimeGrid, alpha: float = 0.9,
            b: int = 4, amplitude: float = 1.0, depth: str = "full") -> EnhancedNoise:
    """Build the enhanced noise (xi_eps, X1, c_eps, Xi2, X2) with norms.

    depth = "potential" skips the second-order objects (Xi2, X2) and
    their norms; enough for grid spectra.  The second-order pipeline is
    torus-only; square realizations are always depth = "potential".
    """
    if not (2.0 / 3.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (2/3, 1), got {alpha}")
    if geom.kind == SQUARE and depth == "full":
        depth = "potential"
    white = sample_white(geom, seed)
    xi = white.as_field() * amplitude
    xi_eps = regularize(xi, eps)
    x1 = linear_object(xi_eps)
    c_eps = renorm_constant_exact(geom, eps, grid, b, amplitude=amplitude)
    norms: dict[str, float] = {}
    meta = {"kernel": "resonant" if geom.kind == TORUS else "plain", "depth": depth}
    norms["xi_eps"] = besov_norm(xi_eps, BesovParams(alpha=alpha - 2.0, b=b), grid).norm
    if depth == "potential":
        return EnhancedNoise(geom=geom, seed=seed, eps=eps, alpha=alpha, b=b,
                             n_t=grid.n_t, amplitude=amplitude, xi=xi, xi_eps=xi_eps,
                             X1=x1, c_eps=c_eps, Xi2=None, X2=None,
                             norms=norms, metadata=meta)
    xi2 = resonant(x1, xi_eps, grid, b) - c_eps
    x2 = apply_multiplier(xi2 + para(xi_eps, x1, grid, b),
                          lambda lam: -inverse_l_multiplier(lam))
    norms["Xi2"] = besov_norm(xi2, BesovParams(alpha=2 * alpha - 2.0, b=b), grid).norm
    norms["X1"] = besov_norm(x1, BesovParams(alpha=alpha, b=b), grid).norm
    norms["X2"] = besov_norm(x2, BesovParams(alpha=2 * alpha, b=b), grid).norm
    return EnhancedNoise(geom=geom, seed=seed, eps=eps, alpha=alpha, b=b,
                         n_t=grid.n_t, amplitude=amplitude, xi=xi, xi_eps=xi_eps,
                         X1=x1, c_eps=c_eps, Xi2=xi2, X2=x2,
                         norms=norms, metadata=meta)


def noise_distance(a: EnhancedNoise, b_: EnhancedNoise, grid: TimeGrid) -> float:
    """||Xi_a - Xi_b||_{X^alpha} for two realizations of the same seed."""
    alpha, b = a.alpha, a.b
    d1 = besov_norm(a.xi_eps - b_.xi_eps, BesovParams(alpha=alpha - 2.0, b=b), grid).norm
    d2 = besov_norm(a.Xi2 - b_.Xi2, BesovParams(alpha=2 * alpha - 2.0, b=b), grid).norm
    return d1 + d2


# --- exponential moments ------------------------------------------------------


def exp_moment_probe(geom: Geometry, grid: TimeGrid, h_grid, samples: int = 100,
                     alpha: float = 0.9, b: int = 4, base_seed: int = 30_000,
                     second_order: bool = True, n_boot: int = 200):
    """Empirical E[exp(h ||xi||^2_{C^(alpha-2)} + h ||Xi2||_{C^(2alpha-2)})].

    Returns a table per h with bootstrap confidence intervals and the
    largest h whose estimate is finite and stable (upper CI within 3x the
    point estimate).
    """
    if samples < 2:
        raise ValueError("need at least 2 samples")
    stats = []
    for i in range(samples):
        if second_order:
            xi_n = enhance(geom, base_seed + i, eps=4.0 / geom.lam_max, grid=grid,
                           alpha=alpha, b=b, depth="full")
            stats.append(xi_n.norms["xi_eps"] ** 2 + xi_n.norms["Xi2"])
        else:
            xi = sample_white(geom, base_seed + i).as_field()
            n = besov_norm(xi, BesovParams(alpha=alpha - 2.0, b=b), grid).norm
            stats.append(n**2)
    stats = np.asarray(stats)
    rng = np.random.default_rng(0)
    table = []
    h_stable = 0.0
    for h in h_grid:
        vals = np.exp(h * stats)
        est = float(vals.mean())
        boots = np.array([vals[rng.integers(0, samples, samples)].mean()
                          for _ in range(n_boot)])
        lo, hi = np.percentile(boots, [2.5, 97.5])
        stable = np.isfinite(est) and hi <= 3.0 * est
        if stable:
            h_stable = max(h_stable, float(h))
        table.append({"h": float(h), "estimate": est, "ci_low": float(lo),
                      "ci_high": float(hi), "stable": bool(stable)})
    return {"table": table, "h_stable": h_stable, "samples": samples}


def norm_samples(geom: Geometry, grid: TimeGrid, samples: int, alpha: float = 0.9,
                 b: int = 4, base_seed: int = 40_000) -> np.ndarray:
    """||xi||_{C^(alpha-2)} over independent seeds (for tail diagnostics)."""
    out = np.empty(samples)
    for i in range(samples):
        xi = sample_white(geom, base_seed + i).as_field()
        out[i] = besov_norm(xi, BesovParams(alpha=alpha - 2.0, b=b), grid).norm
    return out


# --- archive ------------------------------------------------------------------


class ArchiveError(IOError):
    pass


def archive_write(noise: EnhancedNoise, path) -> None:
    """Binary archive: header, six little-endian f64 value blocks
    (xi, xi_eps, X1, X2, Xi2, c_eps), measured norms, CRC32 trailer."""
    if not noise.is_full:
        raise ArchiveError("only full-depth realizations are archived (Xi2/X2 present)")
    head = _MAGIC + struct.pack(
        "<IBIqdddII",
        _VERSION,
        _KIND_CODE[noise.geom.kind],
        noise.geom.N,
        noise.seed,
        noise.eps,
        noise.alpha,
        noise.amplitude,
        noise.b,
        noise.n_t,
    )
    blocks = b"".join(
        np.ascontiguousarray(f.values(), dtype="<f8").tobytes()
        for f in (noise.xi, noise.xi_eps, noise.X1, noise.X2, noise.Xi2, noise.c_eps)
    )
    norms = struct.pack("<5d", noise.norms["xi_eps"], noise.norms["Xi2"],
                        noise.norms["X1"], noise.norms["X2"], noise.x)
    payload = head + blocks + norms
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def archive_read(path) -> EnhancedNoise:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(_MAGIC) + 4:
        raise ArchiveError("truncated archive")
    payload, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(payload) != crc:
        raise ArchiveError("checksum mismatch")
    if payload[: len(_MAGIC)] != _MAGIC:
        raise ArchiveError("bad magic")
    off = len(_MAGIC)
    version, kind_code, N, seed, eps, alpha, amplitude, b, n_t = struct.unpack_from(
        "<IBIqdddII", payload, off)
    if version != _VERSION:
        raise ArchiveError(f"unsupported archive version {version}")
    off += struct.calcsize("<IBIqdddII")
    geom = make_geometry(_KIND_FROM_CODE[kind_code], N)
    fields = []
    for _ in range(6):
        block = np.frombuffer(payload, dtype="<f8", count=N * N, offset=off)
        fields.append(Field(geom, values=block.reshape(N, N).copy()))
        off += N * N * 8
    n_xi, n_xi2, n_x1, n_x2, _x = struct.unpack_from("<5d", payload, off)
    xi, xi_eps, x1, x2, xi2, c_eps = fields
    return EnhancedNoise(geom=geom, seed=seed, eps=eps, alpha=alpha, b=b, n_t=n_t,
                         amplitude=amplitude, xi=xi, xi_eps=xi_eps, X1=x1,
                         c_eps=c_eps, Xi2=xi2, X2=x2,
                         norms={"xi_eps": n_xi, "Xi2": n_xi2, "X1": n_x1, "X2": n_x2},
                         metadata={"kernel": "resonant" if kind_code == 0 else "plain",
                                   "depth": "full", "from_archive": True})
