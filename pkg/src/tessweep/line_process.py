"""Poisson line and point processes inside a disk observation window.

A line is parametrized by its inclination phi in [0, pi) and the signed
offset p of the foot of perpendicular from the origin: with unit normal
n(phi) = (-sin phi, cos phi) the line is {x : x . n(phi) = p}.  A process
with direction law F produces lines with parameter intensity F(phi) dphi dp,
so the lines hitting a disk of radius R arrive with Poisson count of mean
2 R * integral(F) and offsets uniform on [-R, R].

Sampling is pure given (inputs, seed); batches of replicas draw their seeds
with :func:`replica_seed` so parallel runs are reproducible regardless of
scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .direction_law import DirectionLaw
from .errors import DomainError


def replica_seed(master_seed: int, k: int) -> np.random.SeedSequence:
    """Counter-based seed for replica k of a batch run."""
    return np.random.SeedSequence((int(master_seed), int(k)))


def make_rng(seed) -> np.random.Generator:
    """Build a Generator from an int seed, a tuple of ints, or a SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    if isinstance(seed, (tuple, list)):
        return np.random.default_rng(np.random.SeedSequence(tuple(int(s) for s in seed)))
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


@dataclass(frozen=True)
class Window:
    """Disk observation window centered at the origin."""

    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise DomainError("window radius must be positive")

    def boundary_polygon(self, n_vertices: int = 4096) -> np.ndarray:
        """Inscribed regular polygon approximating the disk boundary.

        At 4096 vertices the area deficit is below 4e-7 relative, inside the
        1e-6 tiling tolerance used by the tessellation checks.
        """
        th = np.linspace(0.0, 2.0 * np.pi, n_vertices, endpoint=False)
        return self.radius * np.column_stack((np.cos(th), np.sin(th)))

    @property
    def area(self) -> float:
        return np.pi * self.radius**2


@dataclass(frozen=True)
class LineSet:
    """Lines of one realization: parallel arrays of inclination and offset."""

    phi: np.ndarray
    p: np.ndarray

    def __len__(self):
        return self.phi.size

    def normals(self) -> np.ndarray:
        return np.column_stack((-np.sin(self.phi), np.cos(self.phi)))

    def directions(self) -> np.ndarray:
        return np.column_stack((np.cos(self.phi), np.sin(self.phi)))

    def records(self):
        return [{"phi": float(f), "p": float(o)} for f, o in zip(self.phi, self.p)]

    @classmethod
    def from_records(cls, records):
        return cls(
            phi=np.array([r["phi"] for r in records], dtype=float),
            p=np.array([r["p"] for r in records], dtype=float),
        )


@dataclass(frozen=True)
class PointSet:
    """Planar points inside the window."""

    xy: np.ndarray
    window: Window = field(compare=False, default=None)

    def __len__(self):
        return self.xy.shape[0]

    def records(self):
        return [{"x": float(x), "y": float(y)} for x, y in self.xy]

    @classmethod
    def from_records(cls, records, window=None):
        xy = np.array([[r["x"], r["y"]] for r in records], dtype=float)
        return cls(xy=xy.reshape(-1, 2), window=window)


def sample_lines(law: DirectionLaw, window: Window, seed) -> LineSet:
    """Sample one realization of the line process restricted to the window.

    Every returned line meets the window closure (|p| <= R); the count is
    Poisson with mean 2 R * integral of F over (0, pi).  Deterministic given
    the seed.
    """
    rng = make_rng(seed)
    mean = 2.0 * window.radius * law.total_intensity
    n = rng.poisson(mean)
    if n == 0:
        return LineSet(phi=np.empty(0), p=np.empty(0))
    phi = law.sample_inclination(n, rng)
    p = rng.uniform(-window.radius, window.radius, n)
    return LineSet(phi=phi, p=p)


def sample_points(rho: float, window: Window, seed) -> PointSet:
    """Sample a homogeneous Poisson point set of intensity rho in the disk."""
    if rho < 0:
        raise DomainError("point intensity must be >= 0")
    rng = make_rng(seed)
    n = rng.poisson(rho * window.area)
    r = window.radius * np.sqrt(rng.random(n))
    th = rng.uniform(0.0, 2.0 * np.pi, n)
    return PointSet(xy=np.column_stack((r * np.cos(th), r * np.sin(th))), window=window)


def secant_crossings(lines: LineSet, y: float = 0.0, x_limit: float = None):
    """Crossing positions and angles of the lines with the horizontal secant
    at height y, sorted by x.

    Returns (x, alpha) where alpha in (0, pi) is the line inclination, i.e.
    the angle the line makes with the secant.  Lines parallel to the secant
    (sin phi = 0) never occur for continuous laws and are skipped.
    """
    s = np.sin(lines.phi)
    ok = np.abs(s) > 1e-12
    # x . n = p with n = (-sin, cos); on the secant x = (x, y)
    x = (lines.p[ok] - y * np.cos(lines.phi[ok])) / (-s[ok])
    alpha = lines.phi[ok]
    if x_limit is not None:
        keep = np.abs(x) <= x_limit
        x, alpha = x[keep], alpha[keep]
    order = np.argsort(x)
    return x[order], alpha[order]
