"""Irregular 2D/3D domains and candidate point generation."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq


class PointClass(str, enum.Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    EXTERIOR = "exterior"


class GeometryError(RuntimeError):
    pass


def polar_radius(theta):
    """Radius of the flower-shaped 2D boundary, ``0.8 + 0.1 (sin 6t + sin 3t)``."""
    theta = np.asarray(theta, dtype=float)
    return 0.8 + 0.1 * (np.sin(6 * theta) + np.sin(3 * theta))


def polar_boundary_2d(theta):
    """Point(s) on the 2D boundary curve at angle(s) ``theta``."""
    r = polar_radius(theta)
    out = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)
    return out


def implicit_3d(p):
    """Level function of the 3D body; negative inside, zero on the surface."""
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    s = (np.sin(2 * x) * np.sin(2 * y) * np.sin(2 * z)) ** 2
    out = x * x + y * y + z * z - s - 1.0
    return out if out.ndim else float(out)


class Domain:
    """Star-shaped (with respect to the origin) domain described by a level function.

    Subclasses implement :meth:`level`, negative strictly inside and zero on
    the boundary, plus boundary sampling.
    """

    name: str
    dim: int
    bounding_box: tuple[tuple[float, float], ...]

    def level(self, p) -> np.ndarray:
        raise NotImplementedError

    def boundary_points(self, count: int) -> np.ndarray:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        return math.sqrt(sum((hi - lo) ** 2 for lo, hi in self.bounding_box))

    @property
    def default_tol(self) -> float:
        return 1e-10 * self.diameter

    def classify(self, p, tol: float | None = None):
        """Classify one point (returns a :class:`PointClass`) or an array of points."""
        tol = self.default_tol if tol is None else tol
        if not tol > 0:
            raise ValueError("tol must be positive")
        p = np.asarray(p, dtype=float)
        lv = np.asarray(self.level(p))
        labels = np.where(lv < -tol, 0, np.where(np.abs(lv) <= tol, 1, 2))
        members = [PointClass.INTERIOR, PointClass.BOUNDARY, PointClass.EXTERIOR]
        if labels.ndim == 0:
            return members[int(labels)]
        return np.array([members[i] for i in labels.ravel()], dtype=object).reshape(labels.shape)

    def interior_mask(self, p, tol: float | None = None) -> np.ndarray:
        tol = self.default_tol if tol is None else tol
        return np.asarray(self.level(p)) < -tol

    def grid(self, spacing: float) -> np.ndarray:
        """Uniform axis-aligned grid through the origin covering the bounding box."""
        axes = []
        for lo, hi in self.bounding_box:
            i0 = math.ceil(lo / spacing - 1e-9)
            i1 = math.floor(hi / spacing + 1e-9)
            axes.append(spacing * np.arange(i0, i1 + 1))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def volume(self) -> float:
        raise NotImplementedError

    def generate_candidates(self, target_interior: int, target_boundary: int) -> "CandidateSet":
        """Interior grid nodes (at least ``target_interior``) plus ``target_boundary`` boundary points."""
        if target_interior < 1 or target_boundary < 1:
            raise ValueError("candidate targets must be at least 1")
        h = (self.volume() / target_interior) ** (1.0 / self.dim)
        while True:
            pts = self.grid(h)
            inside = pts[self.interior_mask(pts)]
            if len(inside) >= target_interior:
                break
            h *= 0.99
        boundary = self.boundary_points(target_boundary)
        return CandidateSet(inside, boundary, spacing=h, domain=self.name)


class Flower2D(Domain):
    """2D domain bounded by the polar curve ``r(t) = 0.8 + 0.1 (sin 6t + sin 3t)``."""

    name = "flower2d"
    dim = 2
    bounding_box = ((-1.0, 1.0), (-1.0, 1.0))

    def level(self, p):
        p = np.asarray(p, dtype=float)
        theta = np.arctan2(p[..., 1], p[..., 0])
        return np.hypot(p[..., 0], p[..., 1]) - polar_radius(theta)

    def boundary_points(self, count: int) -> np.ndarray:
        theta = 2.0 * np.pi * np.arange(count) / count
        return polar_boundary_2d(theta)

    def volume(self) -> float:
        # area = 1/2 int r^2 dt; trapezoid rule is exact for trigonometric polynomials
        t = 2.0 * np.pi * np.arange(64) / 64
        return float(0.5 * (polar_radius(t) ** 2).mean() * 2.0 * np.pi)


def fibonacci_sphere(count: int) -> np.ndarray:
    """Nearly uniform unit directions on the sphere."""
    k = np.arange(count) + 0.5
    z = 1.0 - 2.0 * k / count
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = np.pi * (3.0 - math.sqrt(5.0)) * k
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


class Blob3D(Domain):
    """3D body ``x^2 + y^2 + z^2 - sin^2(2x) sin^2(2y) sin^2(2z) <= 1``."""

    name = "blob3d"
    dim = 3
    bounding_box = ((-1.5, 1.5), (-1.5, 1.5), (-1.5, 1.5))
    _ray_max = 1.5  # F(1.5 d) >= 0.25 for every unit d
    _scan = 400

    def level(self, p):
        return implicit_3d(p)

    def surface_radius(self, direction) -> float:
        """Distance from the origin to the surface along a unit direction."""
        d = np.asarray(direction, dtype=float)
        f = lambda t: implicit_3d(t * d)
        ts = np.linspace(0.0, self._ray_max, self._scan + 1)
        sign = np.sign(implicit_3d(ts[:, None] * d))
        changes = np.count_nonzero(np.diff(sign) != 0)
        if changes != 1:
            raise GeometryError(f"ray {d} crosses the surface {changes} times; domain is not star-shaped there")
        t = brentq(f, 0.0, self._ray_max, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        if abs(f(t)) > 1e-12:
            raise GeometryError(f"root finding along {d} did not reach the surface")
        return t

    def boundary_points(self, count: int) -> np.ndarray:
        dirs = fibonacci_sphere(count)
        radii = np.array([self.surface_radius(d) for d in dirs])
        return dirs * radii[:, None]

    def volume(self) -> float:
        # Monte Carlo-free estimate: integrate r(d)^3 / 3 over the Fibonacci directions
        dirs = fibonacci_sphere(400)
        radii = np.array([self.surface_radius(d) for d in dirs])
        return float(4.0 * np.pi * (radii**3).mean() / 3.0)


DOMAINS = {"flower2d": Flower2D, "blob3d": Blob3D}


def get_domain(name: str) -> Domain:
    try:
        return DOMAINS[name]()
    except KeyError:
        raise KeyError(f"unknown domain {name!r}; choose from {sorted(DOMAINS)}") from None


@dataclass(frozen=True)
class CandidateSet:
    """Candidate centers split into interior and boundary points."""

    interior: np.ndarray
    boundary: np.ndarray
    spacing: float = float("nan")
    domain: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def points(self) -> np.ndarray:
        return np.vstack([self.interior, self.boundary])

    def __len__(self) -> int:
        return len(self.interior) + len(self.boundary)

    def to_csv(self, path) -> None:
        dim = self.interior.shape[1]
        with open(path, "w", newline="") as fh:
            fh.write(f"# domain={self.domain} spacing={self.spacing!r} "
                     f"n_interior={len(self.interior)} n_boundary={len(self.boundary)}\n")
            w = csv.writer(fh)
            w.writerow(list("xyz"[:dim]) + ["class"])
            for p in self.interior:
                w.writerow([repr(float(v)) for v in p] + ["interior"])
            for p in self.boundary:
                w.writerow([repr(float(v)) for v in p] + ["boundary"])
