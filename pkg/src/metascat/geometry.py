"""Codec between normalized design vectors and physical sphere placements.

A square substrate is divided into an n x n grid of square cells, one
dielectric sphere per cell. Each sphere is described by the normalized
triplet (p_x, p_y, p_r) in [0,1]^3; the full design vector concatenates
the triplets in row-major cell order from the minimum corner, giving
3*n^2 entries.

The decoding couples center position to radius: the admissible center box
shrinks by the radius, so *every* vector in the unit cube maps to a sphere
fully contained in its cell. Containment per cell also rules out
inter-sphere overlap, which makes the unit cube a constraint-free search
and generation space.

All lengths are in units of the illumination wavelength. Sphere centers
lie in the z = 0 plane.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

# Radius bounds as fractions of the cell length. The lower bound avoids
# zero-radius degeneracy; the upper bound keeps the center box nonempty
# (r_max < cell_length / 2).
RADIUS_MIN_FRACTION = 0.05
RADIUS_MAX_FRACTION = 0.45

# Slack for containment / overlap checks, absolute in wavelength units.
GEOMETRY_TOL = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Grid layout and material of the sphere array.

    n: spheres per side; cell_length: cell edge in wavelengths;
    refractive_index: relative index of every sphere (lossless, > 1).
    """

    n: int = 2
    cell_length: float = 5.0
    refractive_index: float = 2.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"grid order must be >= 1, got {self.n}")
        if self.cell_length <= 0:
            raise ValueError(f"cell_length must be > 0, got {self.cell_length}")
        if self.refractive_index <= 1:
            raise ValueError(
                f"refractive_index must be > 1, got {self.refractive_index}"
            )

    @property
    def num_spheres(self) -> int:
        return self.n * self.n

    @property
    def vector_length(self) -> int:
        return 3 * self.n * self.n

    @property
    def substrate_length(self) -> float:
        return self.n * self.cell_length

    @property
    def radius_min(self) -> float:
        return RADIUS_MIN_FRACTION * self.cell_length

    @property
    def radius_max(self) -> float:
        return RADIUS_MAX_FRACTION * self.cell_length

    def cell_origin(self, index: int) -> tuple[float, float]:
        """Minimum corner (x, y) of cell ``index`` in row-major order."""
        row, col = divmod(index, self.n)
        return col * self.cell_length, row * self.cell_length

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "cell_length": self.cell_length,
            "refractive_index": self.refractive_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(
            n=int(d["n"]),
            cell_length=float(d["cell_length"]),
            refractive_index=float(d["refractive_index"]),
        )


@dataclass(frozen=True)
class Sphere:
    """One sphere: center (x, y) and radius, wavelength units."""

    x: float
    y: float
    r: float


@dataclass(frozen=True)
class Metasurface:
    """Decoded physical structure: one sphere per cell, row-major order."""

    spheres: tuple[Sphere, ...]
    grid: GridSpec

    def positions(self) -> np.ndarray:
        """Sphere centers as an (num_spheres, 3) array; all z = 0."""
        return np.array([[s.x, s.y, 0.0] for s in self.spheres])

    def radii(self) -> np.ndarray:
        return np.array([s.r for s in self.spheres])


def _check_vector(vector: np.ndarray, grid: GridSpec) -> np.ndarray:
    v = np.asarray(vector, dtype=float)
    if v.shape != (grid.vector_length,):
        raise ValueError(
            f"expected vector of shape ({grid.vector_length},), got {v.shape}"
        )
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains non-finite entries")
    if v.min() < 0.0 or v.max() > 1.0:
        raise ValueError(
            f"vector entries must lie in [0, 1]; range is [{v.min()}, {v.max()}]"
        )
    return v


def decode(vector: np.ndarray, grid: GridSpec) -> Metasurface:
    """Map a normalized vector in [0,1]^{3n^2} to a valid sphere arrangement.

    Per cell: r = r_min + p_r * (r_max - r_min), then the center moves in
    the radius-shrunk box, center = origin + r + p * (cell_length - 2r)
    per axis. Deterministic and continuous in the input.
    """
    v = _check_vector(vector, grid)
    low, high = grid.radius_min, grid.radius_max
    spheres = []
    for i in range(grid.num_spheres):
        px, py, pr = v[3 * i : 3 * i + 3]
        r = low + pr * (high - low)
        ox, oy = grid.cell_origin(i)
        span = grid.cell_length - 2.0 * r
        spheres.append(Sphere(x=ox + r + px * span, y=oy + r + py * span, r=r))
    return Metasurface(spheres=tuple(spheres), grid=grid)


def encode(surface: Metasurface) -> np.ndarray:
    """Invert :func:`decode`; raises ValueError on unencodable structures."""
    grid = surface.grid
    if len(surface.spheres) != grid.num_spheres:
        raise ValueError(
            f"expected {grid.num_spheres} spheres, got {len(surface.spheres)}"
        )
    low, high = grid.radius_min, grid.radius_max
    v = np.empty(grid.vector_length)
    for i, s in enumerate(surface.spheres):
        if not (low - GEOMETRY_TOL <= s.r <= high + GEOMETRY_TOL):
            raise ValueError(
                f"sphere {i}: radius {s.r} outside [{low}, {high}]"
            )
        ox, oy = grid.cell_origin(i)
        span = grid.cell_length - 2.0 * s.r
        px = (s.x - ox - s.r) / span
        py = (s.y - oy - s.r) / span
        for name, p in (("p_x", px), ("p_y", py)):
            if not (-GEOMETRY_TOL <= p <= 1.0 + GEOMETRY_TOL):
                raise ValueError(
                    f"sphere {i}: center outside its cell ({name} = {p})"
                )
        pr = (s.r - low) / (high - low)
        v[3 * i : 3 * i + 3] = (
            min(max(px, 0.0), 1.0),
            min(max(py, 0.0), 1.0),
            min(max(pr, 0.0), 1.0),
        )
    return v


def validate(surface: Metasurface) -> list[str]:
    """Return one message per violated invariant; empty means valid.

    Checks radius bounds, containment of each sphere in its own cell
    (touching the cell wall is allowed), and pairwise non-overlap
    (touching spheres are allowed). Checks carry a 1e-9 slack so decoded
    boundary cases pass exactly.
    """
    grid = surface.grid
    violations = []
    if len(surface.spheres) != grid.num_spheres:
        violations.append(
            f"sphere count {len(surface.spheres)} != {grid.num_spheres}"
        )
        return violations
    L = grid.cell_length
    for i, s in enumerate(surface.spheres):
        if not (grid.radius_min - GEOMETRY_TOL <= s.r <= grid.radius_max + GEOMETRY_TOL):
            violations.append(
                f"sphere {i}: radius {s.r} outside "
                f"[{grid.radius_min}, {grid.radius_max}]"
            )
        ox, oy = grid.cell_origin(i)
        if (
            s.x - s.r < ox - GEOMETRY_TOL
            or s.x + s.r > ox + L + GEOMETRY_TOL
            or s.y - s.r < oy - GEOMETRY_TOL
            or s.y + s.r > oy + L + GEOMETRY_TOL
        ):
            violations.append(f"sphere {i}: extends beyond cell {i}")
    for i in range(len(surface.spheres)):
        for j in range(i + 1, len(surface.spheres)):
            a, b = surface.spheres[i], surface.spheres[j]
            dist = float(np.hypot(a.x - b.x, a.y - b.y))
            if dist < a.r + b.r - GEOMETRY_TOL:
                violations.append(
                    f"spheres {i} and {j} overlap "
                    f"(distance {dist:.6g} < {a.r + b.r:.6g})"
                )
    return violations


def mirror_x(vector: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Vector of the structure mirrored about the substrate's vertical midline.

    Swaps cell columns left/right and replaces p_x with 1 - p_x; p_y and
    p_r are untouched. decode(mirror_x(v)) is the exact mirror image of
    decode(v) under x -> substrate_length - x.
    """
    v = _check_vector(vector, grid)
    out = np.empty_like(v)
    n = grid.n
    for row in range(n):
        for col in range(n):
            src = 3 * (row * n + col)
            dst = 3 * (row * n + (n - 1 - col))
            out[dst : dst + 3] = (1.0 - v[src], v[src + 1], v[src + 2])
    return out


def mirror_y(vector: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Same as :func:`mirror_x` for the horizontal midline (y axis flip)."""
    v = _check_vector(vector, grid)
    out = np.empty_like(v)
    n = grid.n
    for row in range(n):
        for col in range(n):
            src = 3 * (row * n + col)
            dst = 3 * ((n - 1 - row) * n + col)
            out[dst : dst + 3] = (v[src], 1.0 - v[src + 1], v[src + 2])
    return out


def geometry_to_json(vector: np.ndarray, grid: GridSpec) -> str:
    """Canonical interchange form: grid metadata plus the raw vector."""
    v = _check_vector(vector, grid)
    return json.dumps({"grid": grid.to_dict(), "vector": v.tolist()})


def geometry_from_json(text: str) -> tuple[np.ndarray, GridSpec]:
    obj = json.loads(text)
    grid = GridSpec.from_dict(obj["grid"])
    return _check_vector(np.array(obj["vector"], dtype=float), grid), grid
