"""Heat-semigroup paracontrolled calculus on two flat 2D geometries.

Builds the renormalized Anderson Hamiltonian H = L + xi with white-noise
potential and reproduces its spectral behaviour (eigenvalue bounds, Weyl
law, resolvent convergence) at desk scale.
"""

from .geometry import (
    Field,
    Geometry,
    GeometryError,
    SQUARE,
    TORUS,
    apply_multiplier,
    derivative,
    inner,
    make_geometry,
    multiply,
    random_band_limited,
)

__all__ = [
    "Field",
    "Geometry",
    "GeometryError",
    "SQUARE",
    "TORUS",
    "apply_multiplier",
    "derivative",
    "inner",
    "make_geometry",
    "multiply",
    "random_band_limited",
]

__version__ = "0.1.0"
