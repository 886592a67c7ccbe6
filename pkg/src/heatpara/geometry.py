"""Explicit 2D geometries with Laplacian eigenbases and dealiased products.

Two geometries are supported:

* ``torus``: periodic square of side 2*pi, eigenfunctions exp(i k.x)/(2*pi)
  for k in {-N/2, ..., N/2-1}^2, eigenvalues |k|^2.  Transforms are FFTs.
* ``dirichlet-square``: square of side pi with Dirichlet boundary
  conditions, eigenfunctions (2/pi) sin(n x) sin(m y) for n, m in
  {1, ..., N}, eigenvalues n^2 + m^2.  Transforms are sine-matrix products
  on the interior grid x_i = i*pi/(N+1).

Every linear operator used downstream is diagonal on these bases, so a
field is a pair (grid values, basis coefficients) kept lazily in sync.
On the square, first derivatives leave the sine basis; the per-axis basis
('s' or 'c') is tracked on the field and spectral multipliers applied to a
cosine axis are the Neumann-in-that-axis realization (callers that need a
strict Dirichlet operator must keep fields in the pure sine basis).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

TORUS = "torus"
SQUARE = "dirichlet-square"

_FFT_WORKERS = -1


class GeometryError(ValueError):
    pass


def _sine_matrix(n_modes: int, points: np.ndarray) -> np.ndarray:
    n = np.arange(1, n_modes + 1)
    return np.sin(np.outer(n, points))


def _cosine_matrix(n_modes: int, points: np.ndarray) -> np.ndarray:
    n = np.arange(1, n_modes + 1)
    return np.cos(np.outer(n, points))


@dataclass(frozen=True)
class Geometry:
    """Immutable geometry handle: eigenvalue table plus planned transforms."""

    kind: str
    N: int
    side: float
    volume: float
    lam: np.ndarray          # (N, N) eigenvalue table in coefficient layout
    dA: float                # grid cell area of the coarse grid

    # torus only: integer wavenumbers along each axis in fft layout
    kx: np.ndarray | None = None
    ky: np.ndarray | None = None

    # square only: synthesis matrices on coarse and 2x-refined interior grids
    sin_c: np.ndarray | None = field(default=None, repr=False)
    cos_c: np.ndarray | None = field(default=None, repr=False)
    sin_f: np.ndarray | None = field(default=None, repr=False)
    cos_f: np.ndarray | None = field(default=None, repr=False)
    dA_fine: float = 0.0

    @property
    def lam_max(self) -> float:
        return float(self.lam.max())

    @property
    def n_modes(self) -> int:
        return self.N * self.N

    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Coarse grid coordinates (1d arrays per axis)."""
        if self.kind == TORUS:
            x = np.arange(self.N) * (self.side / self.N)
            return x, x
        x = np.arange(1, self.N + 1) * (self.side / (self.N + 1))
        return x, x

    # --- transforms -------------------------------------------------------

    def coeffs_from_values(self, values: np.ndarray, basis=None) -> np.ndarray:
        if self.kind == TORUS:
            return (self.side / self.N**2) * sfft.fft2(values, workers=_FFT_WORKERS)
        return self._square_analysis(values, basis or ("s", "s"))

    def values_from_coeffs(self, coeffs: np.ndarray, basis=None) -> np.ndarray:
        if self.kind == TORUS:
            vals = (self.N**2 / self.side) * sfft.ifft2(coeffs, workers=_FFT_WORKERS)
            return np.ascontiguousarray(vals.real)
        return self._square_synthesis(coeffs, basis or ("s", "s"), fine=False)

    def _axis_matrices(self, basis, fine: bool):
        out = []
        for ax_basis in basis:
            if fine:
                out.append(self.sin_f if ax_basis == "s" else self.cos_f)
            else:
                out.append(self.sin_c if ax_basis == "s" else self.cos_c)
        return out

    def _square_synthesis(self, coeffs, basis, fine: bool):
        mx, my = self._axis_matrices(basis, fine)
        scale = 2.0 / self.side
        # f(x_i, y_j) = scale * sum_nm c_nm mx[n, i] my[m, j]
        return scale * np.einsum("nm,ni,mj->ij", coeffs, mx, my, optimize=True)

    def _square_analysis(self, values, basis):
        if basis != ("s", "s"):
            raise GeometryError("square analysis defined on the sine basis only")
        # exact inverse of the sine synthesis on the interior grid
        s = self.sin_c
        scale = (2.0 / self.side) * self.dA
        return scale * (s @ values @ s.T)


def make_geometry(kind: str, N: int) -> Geometry:
    """Build a geometry with its eigenvalue table and transform plans.

    Parameters
    ----------
    kind : {"torus", "dirichlet-square"}
    N : int
        Modes per axis; N >= 8, and a power of two for the torus.
    """
    if kind not in (TORUS, SQUARE):
        raise GeometryError(f"unsupported geometry kind: {kind!r}")
    if N < 8:
        raise GeometryError(f"N must be >= 8, got {N}")
    if kind == TORUS:
        if N & (N - 1) != 0:
            raise GeometryError(f"torus requires N a power of two, got {N}")
        side = 2.0 * np.pi
        k = sfft.fftfreq(N, d=1.0 / N).astype(np.int64)
        kx = k[:, None] * np.ones(N, dtype=np.int64)[None, :]
        ky = np.ones(N, dtype=np.int64)[:, None] * k[None, :]
        lam = (kx**2 + ky**2).astype(np.float64)
        return Geometry(kind=TORUS, N=N, side=side, volume=side**2,
                        lam=lam, dA=(side / N) ** 2, kx=kx, ky=ky)
    side = np.pi
    n = np.arange(1, N + 1)
    lam = (n[:, None] ** 2 + n[None, :] ** 2).astype(np.float64)
    x = np.arange(1, N + 1) * (side / (N + 1))
    m = 2 * N
    xf = np.arange(1, m + 1) * (side / (m + 1))
    return Geometry(kind=SQUARE, N=N, side=side, volume=side**2,
                    lam=lam, dA=(side / (N + 1)) ** 2,
                    sin_c=_sine_matrix(N, x), cos_c=_cosine_matrix(N, x),
                    sin_f=_sine_matrix(m, xf), cos_f=_cosine_matrix(m, xf),
                    dA_fine=(side / (m + 1)) ** 2)


class Field:
    """Real scalar function on the grid with lazily synced coefficients.

    Operations never mutate their inputs; each returns a fresh field.
    ``basis`` is a per-axis tag on the square ('s' or 'c'); torus fields
    carry ``basis=None``.
    """

    __slots__ = ("geom", "_values", "_coeffs", "basis")

    def __init__(self, geom: Geometry, values=None, coeffs=None, basis=None):
        if values is None and coeffs is None:
            raise GeometryError("Field needs values or coeffs")
        self.geom = geom
        self._values = None if values is None else np.asarray(values, dtype=np.float64)
        if coeffs is None:
            self._coeffs = None
        else:
            dtype = np.complex128 if geom.kind == TORUS else np.float64
            self._coeffs = np.asarray(coeffs, dtype=dtype)
        if geom.kind == SQUARE:
            self.basis = basis or ("s", "s")
        else:
            self.basis = None

    # --- constructors ----------------------------------------------------

    @classmethod
    def from_values(cls, geom, values):
        return cls(geom, values=values)

    @classmethod
    def from_coeffs(cls, geom, coeffs, basis=None):
        return cls(geom, coeffs=coeffs, basis=basis)

    @classmethod
    def zero(cls, geom):
        return cls(geom, values=np.zeros((geom.N, geom.N)))

    @classmethod
    def constant(cls, geom, value: float):
        if geom.kind == SQUARE:
            # projection of the constant onto the sine span
            vals = np.full((geom.N, geom.N), float(value))
            return cls(geom, values=vals)
        return cls(geom, values=np.full((geom.N, geom.N), float(value)))

    @classmethod
    def mode(cls, geom, mode: tuple[int, int], amplitude: float = 1.0):
        """Single eigenmode: torus real combination of e_k + e_{-k} unless
        k = 0; square single sine mode (n, m)."""
        c = np.zeros((geom.N, geom.N), dtype=np.complex128 if geom.kind == TORUS else np.float64)
        if geom.kind == TORUS:
            i, j = mode[0] % geom.N, mode[1] % geom.N
            c[i, j] = amplitude
            if (mode[0] % geom.N, mode[1] % geom.N) != ((-mode[0]) % geom.N, (-mode[1]) % geom.N):
                c[(-mode[0]) % geom.N, (-mode[1]) % geom.N] = np.conj(amplitude)
            return cls(geom, coeffs=c)
        n, m = mode
        if not (1 <= n <= geom.N and 1 <= m <= geom.N):
            raise GeometryError(f"square mode out of range: {mode}")
        c[n - 1, m - 1] = amplitude
        return cls(geom, coeffs=c)

    # --- lazily synced views ---------------------------------------------

    def values(self) -> np.ndarray:
        if self._values is None:
            self._values = self.geom.values_from_coeffs(self._coeffs, self.basis)
        return self._values

    def coeffs(self) -> np.ndarray:
        if self._coeffs is None:
            self._coeffs = self.geom.coeffs_from_values(self._values, self.basis)
        return self._coeffs

    # --- algebra ----------------------------------------------------------

    def _check_mate(self, other: "Field", same_basis: bool = True):
        if self.geom is not other.geom and (
                self.geom.kind != other.geom.kind or self.geom.N != other.geom.N):
            raise GeometryError("geometry mismatch")
        if same_basis and self.basis != other.basis:
            raise GeometryError(f"basis mismatch: {self.basis} vs {other.basis}")

    def __add__(self, other):
        self._check_mate(other)
        return Field(self.geom, coeffs=self.coeffs() + other.coeffs(), basis=self.basis)

    def __sub__(self, other):
        self._check_mate(other)
        return Field(self.geom, coeffs=self.coeffs() - other.coeffs(), basis=self.basis)

    def __mul__(self, scalar):
        return Field(self.geom, coeffs=self.coeffs() * float(scalar), basis=self.basis)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    # --- measurements ------------------------------------------------------

    def l2(self) -> float:
        """L2(mu) norm via grid quadrature."""
        v = self.values()
        return float(np.sqrt(self.geom.dA * np.sum(v * v)))

    def linf(self) -> float:
        return float(np.max(np.abs(self.values())))

    def mean(self) -> float:
        return float(self.geom.dA * np.sum(self.values()) / self.geom.volume)

    def coeff_l2(self) -> float:
        c = self.coeffs()
        return float(np.sqrt(np.sum(np.abs(c) ** 2)))


def inner(f: Field, g: Field) -> float:
    """L2(mu) inner product on the grid."""
    f._check_mate(g)
    return float(f.geom.dA * np.sum(f.values() * g.values()))


def random_band_limited(geom: Geometry, seed, band: int | None = None,
                        decay: float = 0.0) -> Field:
    """Gaussian field with coefficients supported on modes |k|_inf <= band.

    ``decay`` > 0 damps mode (with eigenvalue lam) by (1 + lam)^(-decay/2),
    which produces samples of Sobolev/Hoelder regularity ~ decay - 1.
    """
    rng = np.random.default_rng(seed)
    band = band if band is not None else geom.N // 3
    vals = rng.standard_normal((geom.N, geom.N)) / np.sqrt(geom.dA)
    f = Field(geom, values=vals)
    c = f.coeffs().copy()
    if geom.kind == TORUS:
        mask = (np.abs(geom.kx) <= band) & (np.abs(geom.ky) <= band)
    else:
        n = np.arange(1, geom.N + 1)
        mask = (n[:, None] <= band) & (n[None, :] <= band)
    c[~mask] = 0.0
    if decay > 0:
        c = c * (1.0 + geom.lam) ** (-decay / 2.0)
    return Field(geom, coeffs=c)


# --- spectral calculus ------------------------------------------------------


def apply_multiplier(f: Field, phi) -> Field:
    """Scale the coefficient at eigenvalue lam by phi(lam).

    ``phi`` is either a callable on the eigenvalue table or a precomputed
    (N, N) array.  Raises on non-finite multiplier values.
    """
    lam = f.geom.lam
    m = phi(lam) if callable(phi) else np.asarray(phi)
    if not np.all(np.isfinite(m)):
        raise GeometryError("non-finite multiplier value on the eigenvalue table")
    return Field(f.geom, coeffs=f.coeffs() * m, basis=f.basis)


def derivative(f: Field, axis: int) -> Field:
    """First derivative along an axis.

    Torus: multiplies coefficient k by i*k_axis (the Nyquist line is
    annihilated so the output stays real).  Square: toggles the basis tag
    along the axis, sin(n.) -> n cos(n.), cos(n.) -> -n sin(n.).
    """
    geom = f.geom
    if geom.kind == TORUS:
        k = geom.kx if axis == 0 else geom.ky
        mult = 1j * k.astype(np.float64)
        mult = np.where(k == -geom.N // 2, 0.0, mult)  # keep output Hermitian
        return Field(geom, coeffs=f.coeffs() * mult)
    n = np.arange(1, geom.N + 1, dtype=np.float64)
    scale = n[:, None] if axis == 0 else n[None, :]
    new_basis = list(f.basis)
    if f.basis[axis] == "s":
        new_basis[axis] = "c"
        c = f.coeffs() * scale
    else:
        new_basis[axis] = "s"
        c = -f.coeffs() * scale
    return Field(geom, coeffs=c, basis=tuple(new_basis))


# --- dealiased products -----------------------------------------------------


@lru_cache(maxsize=None)
def _pad_index_cache(N: int):
    half = N // 2
    return np.concatenate([np.arange(half), np.arange(2 * N - half, 2 * N)])


@lru_cache(maxsize=None)
def resolved_mask(N: int) -> np.ndarray:
    """Torus modes kept by the calculus: the Nyquist lines k_i = -N/2 are
    excluded so real multiplication operators are exactly symmetric and
    preserve constants (H block-decouples there, acting as pure L)."""
    k = sfft.fftfreq(N, d=1.0 / N).astype(np.int64)
    return (k[:, None] != -N // 2) & (k[None, :] != -N // 2)


def pad_values(geom: Geometry, coeffs: np.ndarray, basis=None) -> np.ndarray:
    """Synthesize values of a coefficient array on the 2x refined grid."""
    N = geom.N
    if geom.kind == TORUS:
        rows = _pad_index_cache(N)
        cp = np.zeros(coeffs.shape[:-2] + (2 * N, 2 * N), dtype=np.complex128)
        cp[..., rows[:, None], rows[None, :]] = coeffs * resolved_mask(N)
        vals = ((2 * N) ** 2 / geom.side) * sfft.ifft2(cp, workers=_FFT_WORKERS)
        return np.ascontiguousarray(vals.real)
    mx, my = geom._axis_matrices(basis or ("s", "s"), fine=True)
    scale = 2.0 / geom.side
    return scale * np.einsum("...nm,ni,mj->...ij", coeffs, mx[:N], my[:N],
                             optimize=True)


def unpad_coeffs(geom: Geometry, values_fine: np.ndarray) -> np.ndarray:
    """Analyze fine-grid values and truncate back to N modes (sine basis
    on the square)."""
    N = geom.N
    if geom.kind == TORUS:
        cf = (geom.side / (2 * N) ** 2) * sfft.fft2(values_fine, workers=_FFT_WORKERS)
        rows = _pad_index_cache(N)
        return np.ascontiguousarray(cf[..., rows[:, None], rows[None, :]] * resolved_mask(N))
    s = geom.sin_f
    scale = (2.0 / geom.side) * geom.dA_fine
    full = scale * np.einsum("ni,...ij,mj->...nm", s, values_fine, s, optimize=True)
    return np.ascontiguousarray(full[..., :N, :N])


def multiply(f: Field, g: Field) -> Field:
    """Pointwise product with 2x zero-padding anti-aliasing.

    On the torus this is the exact truncated coefficient convolution for
    band-limited inputs.  On the square the product of sine polynomials is
    not band-limited; the result is the fine-grid collocation projection
    onto the first N sine modes (tail aliasing O(N^-3)).  Mixed-basis
    factors are allowed on the square; the product always lands in the
    sine basis.
    """
    f._check_mate(g, same_basis=False)
    geom = f.geom
    vf = pad_values(geom, f.coeffs(), f.basis)
    vg = pad_values(geom, g.coeffs(), g.basis)
    return Field(geom, coeffs=unpad_coeffs(geom, vf * vg))
