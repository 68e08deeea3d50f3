"""Manifold backends and the shared metric operations.

Free functions mirror the backend methods, dispatching on the point's
backend, so call sites can read ``exp_map(x, v)`` instead of
``x.backend.exp_map(x, v)``.
"""

from .base import (
    GeometryBudget,
    ManifoldBackend,
    Point,
    Region,
    Tangent,
    check_same_backend,
    check_same_base,
)
from .euclidean import EuclideanBackend
from .hyperbolic import HyperbolicBackend
from .implicit import ImplicitBackend
from .sphere import SphereBackend


def distance(x: Point, y: Point) -> float:
    return x.backend.distance(x, y)


def exp_map(x: Point, v: Tangent, budget: GeometryBudget | None = None) -> Point:
    return x.backend.exp_map(x, v, budget)


def log_map(x: Point, y: Point, budget: GeometryBudget | None = None) -> Tangent:
    return x.backend.log_map(x, y, budget)


def parallel_transport(
    x: Point, y: Point, v: Tangent, budget: GeometryBudget | None = None
) -> Tangent:
    return x.backend.parallel_transport(x, y, v, budget)


def grad_sq_distance(x: Point, y: Point, budget: GeometryBudget | None = None) -> Tangent:
    return x.backend.grad_sq_distance(x, y, budget)


def geometry_budget(backend: ManifoldBackend, region: Region | None = None) -> GeometryBudget:
    return backend.budget(region)


def make_backend(kind: str, dim: int, equalities=None, **options) -> ManifoldBackend:
    """Construct a backend from a scenario-style descriptor."""
    if kind == "euclidean":
        return EuclideanBackend(dim, **options)
    if kind == "sphere":
        return SphereBackend(dim, **options)
    if kind == "hyperbolic":
        return HyperbolicBackend(dim, **options)
    if kind == "implicit":
        if not equalities:
            raise ValueError("implicit backend needs at least one equality")
        return ImplicitBackend(dim, equalities, **options)
    raise ValueError(f"unknown manifold kind {kind!r}")


__all__ = [
    "EuclideanBackend",
    "GeometryBudget",
    "HyperbolicBackend",
    "ImplicitBackend",
    "ManifoldBackend",
    "Point",
    "Region",
    "SphereBackend",
    "Tangent",
    "check_same_backend",
    "check_same_base",
    "distance",
    "exp_map",
    "geometry_budget",
    "grad_sq_distance",
    "log_map",
    "make_backend",
    "parallel_transport",
]
