"""Fundamental value types: grids, scaled states, parameter vectors.

A solution vector is stored as a ScaledState: a real scale factor paired with a
unit-norm complex amplitude vector of length 2**n.  All state algebra in the
package goes through the few exact primitives defined here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NORM_TOL = 1e-12


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid with 2**n points on [x0, x0 + L).

    Gridpoints are x_k = x0 + k*h, h = L/2**n (left-closed, right-open, so the
    periodic wraparound of the shift operator introduces no duplicated endpoint).
    ``reflected`` marks grids that encode a doubled mirror-image domain.
    """

    n: int
    L: float
    x0: float = 0.0
    reflected: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("qubit count must be >= 1")
        if not self.L > 0:
            raise ValueError("domain length must be > 0")

    @property
    def size(self) -> int:
        return 2**self.n

    @property
    def h(self) -> float:
        return self.L / self.size

    def points(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.size)


@dataclass(frozen=True)
class Grid2D:
    """Tensor grid; the flattened index treats x as the more significant axis.

    k = kx * 2**ny + ky, so ky = k mod 2**ny and kx = k // 2**ny.
    """

    nx: int
    ny: int
    Lx: float
    Ly: float
    x0: float = 0.0
    y0: float = 0.0
    reflected_x: bool = False
    reflected_y: bool = False

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("qubit counts must be >= 1")
        if not (self.Lx > 0 and self.Ly > 0):
            raise ValueError("domain lengths must be > 0")

    @property
    def size(self) -> int:
        return 2 ** (self.nx + self.ny)

    @property
    def shape(self) -> tuple[int, int]:
        return (2**self.nx, 2**self.ny)

    @property
    def hx(self) -> float:
        return self.Lx / 2**self.nx

    @property
    def hy(self) -> float:
        return self.Ly / 2**self.ny

    def x_axis(self) -> Grid1D:
        return Grid1D(self.nx, self.Lx, self.x0, self.reflected_x)

    def y_axis(self) -> Grid1D:
        return Grid1D(self.ny, self.Ly, self.y0, self.reflected_y)

    def flatten_index(self, kx: int, ky: int) -> int:
        return kx * 2**self.ny + ky

    def unflatten_index(self, k: int) -> tuple[int, int]:
        return k // 2**self.ny, k % 2**self.ny

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (x, y) coordinate arrays of length 2**(nx+ny)."""
        x = self.x0 + self.hx * np.arange(2**self.nx)
        y = self.y0 + self.hy * np.arange(2**self.ny)
        xx, yy = np.meshgrid(x, y, indexing="ij")
        return xx.ravel(), yy.ravel()


@dataclass(frozen=True)
class ScaledState:
    """scale * psi with psi unit-norm; represents an unnormalized solution."""

    scale: float
    psi: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=np.complex128)
        object.__setattr__(self, "psi", psi)
        if self.scale != 0.0:
            nrm = np.linalg.norm(psi)
            if abs(nrm - 1.0) > 1e-9:
                raise ValueError(f"psi must be unit norm, got {nrm}")

    @property
    def dim(self) -> int:
        return self.psi.shape[0]

    def vector(self) -> np.ndarray:
        """The represented (unnormalized) vector scale * psi."""
        return self.scale * self.psi


@dataclass(frozen=True)
class ParamVector:
    """Flat real parameters of one ansatz instance: scale plus rotation angles."""

    scale: float
    angles: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "angles", np.asarray(self.angles, dtype=np.float64))

    def flat(self) -> np.ndarray:
        return np.concatenate(([self.scale], self.angles))

    @staticmethod
    def from_flat(v: np.ndarray) -> "ParamVector":
        v = np.asarray(v, dtype=np.float64)
        return ParamVector(float(v[0]), v[1:].copy())


def inner(a: ScaledState, b: ScaledState) -> complex:
    """<a|b> including both scale factors; conjugation on the left argument."""
    if a.dim != b.dim:
        raise DimensionError(f"length mismatch: {a.dim} vs {b.dim}")
    return complex(a.scale * b.scale * np.vdot(a.psi, b.psi))


def sq_distance(a: ScaledState, b: ScaledState) -> float:
    """Squared L2 distance between the represented vectors."""
    if a.dim != b.dim:
        raise DimensionError(f"length mismatch: {a.dim} vs {b.dim}")
    return float(np.linalg.norm(a.vector() - b.vector()) ** 2)


def normalize(v: np.ndarray) -> ScaledState:
    """Split a raw vector into (norm, unit vector).

    The zero vector maps to scale 0 with psi = e0 so degenerate optimizer
    probes cannot crash downstream code.
    """
    v = np.asarray(v, dtype=np.complex128)
    nrm = float(np.linalg.norm(v))
    if nrm == 0.0:
        psi = np.zeros_like(v)
        psi[0] = 1.0
        return ScaledState(0.0, psi)
    return ScaledState(nrm, v / nrm)


def sample_function(f, grid) -> np.ndarray:
    """Evaluate a scalar function at every gridpoint.

    1D grids call f(x); 2D grids call f(x, y) and flatten with x as the more
    significant index.  Non-finite samples raise.
    """
    if isinstance(grid, Grid1D):
        vals = np.asarray(f(grid.points()), dtype=np.float64) + np.zeros(grid.size)
    elif isinstance(grid, Grid2D):
        x, y = grid.points()
        vals = np.asarray(f(x, y), dtype=np.float64) + np.zeros(grid.size)
    else:
        raise TypeError(f"unsupported grid type {type(grid)}")
    if not np.all(np.isfinite(vals)):
        raise ValueError("function produced non-finite samples")
    return vals
