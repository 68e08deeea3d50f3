"""Core geometry types: points, tangent vectors, regions, budgets.

A backend bundles the metric operations of one concrete manifold
(distance, exponential and logarithm maps, parallel transport) together
with per-region geometry budgets.  Points and tangent vectors are
immutable; a tangent vector remembers its base point and every
operation checks that bases match, so tangent spaces can never be mixed
silently.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, StructuralError

#: slack applied to radius preconditions so exact-radius inputs
#: (e.g. a quarter great circle on the unit sphere) remain valid
_RADIUS_SLACK = 1.0 + 1e-9

#: two points closer than this (ambient 2-norm) count as the same base
SAME_POINT_TOL = 1e-9


def _freeze(a):
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Point:
    """A point on a manifold, in the backend's working coordinates."""

    backend: "ManifoldBackend"
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", _freeze(self.coords))

    def __repr__(self):
        return f"Point({self.backend.key[0]}, {np.array2string(self.coords, precision=6)})"


@dataclass(frozen=True)
class Tangent:
    """A tangent vector tagged with its base point."""

    base: Point
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "components", _freeze(self.components))

    @property
    def backend(self):
        return self.base.backend

    def norm(self):
        return self.backend.norm(self.base, self.components)

    def inner(self, other: "Tangent") -> float:
        check_same_base(self, other.base)
        return self.backend.inner(self.base, self.components, other.components)

    def scaled(self, alpha: float) -> "Tangent":
        return Tangent(self.base, alpha * self.components)

    def __add__(self, other: "Tangent") -> "Tangent":
        check_same_base(self, other.base)
        return Tangent(self.base, self.components + other.components)

    def __sub__(self, other: "Tangent") -> "Tangent":
        check_same_base(self, other.base)
        return Tangent(self.base, self.components - other.components)

    def __repr__(self):
        return f"Tangent(at={self.base!r}, {np.array2string(self.components, precision=6)})"


@dataclass(frozen=True)
class Region:
    """A geodesic-ball region descriptor: center point plus radius."""

    center: Point
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise StructuralError("region radius must be positive")


@dataclass(frozen=True)
class GeometryBudget:
    """Validated working constants for one region of a manifold.

    ``rho`` is the safe radius within which exp/log/transport are
    single-valued and the curvature-dependent estimates hold:
    min(injectivity radius, convexity radius, pi/(2*sqrt(|K|))).
    The remaining bounds (Hessian of the squared distance, smoothness
    of exp, Lipschitz modulus of log) are existence constants; for
    sampled backends they are estimates and flagged as such.
    """

    region: Region | None
    rho: float
    curvature_bound: float
    hessian_bound: float
    exp_smoothness: float
    log_lipschitz: float
    is_estimate: bool = False

    def __post_init__(self):
        if not self.rho > 0:
            raise StructuralError("budget rho must be positive")
        if self.curvature_bound < 0:
            raise StructuralError("curvature bound must be nonnegative")
        for name in ("hessian_bound", "exp_smoothness", "log_lipschitz"):
            if not getattr(self, name) > 0:
                raise StructuralError(f"{name} must be strictly positive")

    def admits_radius(self, r: float) -> bool:
        return r <= self.rho * _RADIUS_SLACK


def check_same_backend(a, b):
    if a.backend.key != b.backend.key:
        raise StructuralError(
            f"backend mismatch: {a.backend.key} vs {b.backend.key}"
        )


def check_same_base(v: Tangent, x: Point):
    check_same_backend(v.base, x)
    delta = float(np.max(np.abs(v.base.coords - x.coords)))
    if delta > SAME_POINT_TOL:
        raise StructuralError(
            f"tangent vector based at a different point (coordinate gap {delta:.3e}); "
            "transport it explicitly instead of mixing tangent spaces"
        )


class ManifoldBackend(abc.ABC):
    """Metric operations of one concrete finite-dimensional manifold.

    All values are immutable after construction and every operation is
    a pure function of its inputs, safe to call concurrently.
    """

    #: hashable identifier; two backends with equal keys are interchangeable
    key: tuple

    #: intrinsic dimension
    dim: int

    #: ambient coordinate dimension
    ambient_dim: int

    #: |constraint residual| below this counts as on-manifold
    feasibility_tol: float

    # -- required primitive operations ---------------------------------

    @abc.abstractmethod
    def _distance(self, xc: np.ndarray, yc: np.ndarray) -> float: ...

    @abc.abstractmethod
    def _exp(self, xc: np.ndarray, vc: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def _log(self, xc: np.ndarray, yc: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def _transport(self, xc: np.ndarray, yc: np.ndarray, vc: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def _project_point(self, amb: np.ndarray) -> np.ndarray:
        """Pull an ambient vector back onto the manifold."""

    @abc.abstractmethod
    def _project_tangent(self, xc: np.ndarray, amb: np.ndarray) -> np.ndarray:
        """Project an ambient vector onto the tangent space at ``xc``."""

    @abc.abstractmethod
    def tangent_basis(self, x: Point) -> np.ndarray:
        """Orthonormal basis of T_x, shape (dim, ambient_dim)."""

    @abc.abstractmethod
    def feasibility_residual(self, coords: np.ndarray) -> float:
        """How far ``coords`` is from satisfying the manifold's defining equations."""

    @abc.abstractmethod
    def budget(self, region: Region | None = None) -> GeometryBudget: ...

    # -- metric ----------------------------------------------------------

    def inner(self, x: Point, u: np.ndarray, v: np.ndarray) -> float:
        """Riemannian inner product at x; Euclidean unless overridden."""
        return float(np.dot(u, v))

    def norm(self, x: Point, u: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(x, u, u), 0.0)))

    # -- public wrapped operations ----------------------------------------

    def point(self, coords) -> Point:
        coords = np.asarray(coords, dtype=float)
        if coords.shape != (self.ambient_dim,):
            raise StructuralError(
                f"expected {self.ambient_dim} coordinates, got shape {coords.shape}"
            )
        resid = self.feasibility_residual(coords)
        if resid > self.feasibility_tol:
            raise StructuralError(
                f"coordinates violate the manifold equations (residual {resid:.3e})"
            )
        return Point(self, coords)

    def tangent(self, x: Point, components) -> Tangent:
        components = np.asarray(components, dtype=float)
        proj = self._project_tangent(x.coords, components)
        gap = self.norm(x, components - proj)
        scale = max(1.0, self.norm(x, components))
        if gap > 1e-7 * scale:
            raise StructuralError(
                f"components are not tangent at the base point (normal part {gap:.3e})"
            )
        return Tangent(x, proj)

    def distance(self, x: Point, y: Point) -> float:
        check_same_backend(x, y)
        return self._distance(x.coords, y.coords)

    def exp_map(self, x: Point, v: Tangent, budget: GeometryBudget | None = None) -> Point:
        check_same_base(v, x)
        b = budget if budget is not None else self.budget()
        speed = v.norm()
        if not b.admits_radius(speed):
            raise DomainError(
                f"|v| = {speed:.6g} exceeds the validated radius rho = {b.rho:.6g}"
            )
        if speed == 0.0:
            return x
        return Point(self, self._exp(x.coords, v.components))

    def log_map(self, x: Point, y: Point, budget: GeometryBudget | None = None) -> Tangent:
        check_same_backend(x, y)
        b = budget if budget is not None else self.budget()
        d = self._distance(x.coords, y.coords)
        if not b.admits_radius(d):
            raise DomainError(
                f"d(x, y) = {d:.6g} exceeds the validated radius rho = {b.rho:.6g}"
            )
        if d == 0.0:
            return Tangent(x, np.zeros(self.ambient_dim))
        return Tangent(x, self._log(x.coords, y.coords))

    def parallel_transport(
        self, x: Point, y: Point, v: Tangent, budget: GeometryBudget | None = None
    ) -> Tangent:
        check_same_base(v, x)
        check_same_backend(x, y)
        b = budget if budget is not None else self.budget()
        d = self._distance(x.coords, y.coords)
        if not b.admits_radius(d):
            raise DomainError(
                f"d(x, y) = {d:.6g} exceeds the validated radius rho = {b.rho:.6g}"
            )
        if d == 0.0:
            return Tangent(y, v.components.copy())
        return Tangent(y, self._transport(x.coords, y.coords, v.components))

    def grad_sq_distance(self, x: Point, y: Point, budget: GeometryBudget | None = None) -> Tangent:
        """Riemannian gradient at x of p -> d(p, y)^2, equal to -2 log_x(y)."""
        return self.log_map(x, y, budget).scaled(-2.0)

    # -- sampling helpers (seeded, for tests and diagnostics) -------------

    def random_tangent(self, rng: np.random.Generator, x: Point, max_norm: float) -> Tangent:
        """Uniform direction, radius ~ U^(1/dim) * max_norm."""
        basis = self.tangent_basis(x)
        u = rng.standard_normal(self.dim)
        nu = np.linalg.norm(u)
        if nu == 0.0:
            u[0] = 1.0
            nu = 1.0
        r = max_norm * rng.uniform() ** (1.0 / self.dim)
        return Tangent(x, (r / nu) * (u @ basis))

    def random_point(self, rng: np.random.Generator, center: Point, radius: float) -> Point:
        v = self.random_tangent(rng, center, radius)
        return self.exp_map(center, v)
