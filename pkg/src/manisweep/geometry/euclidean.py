"""Flat R^n backend."""

from __future__ import annotations

import numpy as np

from .base import GeometryBudget, ManifoldBackend, Point, Region

#: stand-in for the infinite flat working radius, so preconditions stay checkable
DEFAULT_RADIUS_CEILING = 1e6


class EuclideanBackend(ManifoldBackend):
    def __init__(self, dim: int, *, radius_ceiling: float = DEFAULT_RADIUS_CEILING):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.ambient_dim = dim
        self.feasibility_tol = 1e-10
        self.radius_ceiling = float(radius_ceiling)
        self.key = ("euclidean", dim)

    def _distance(self, xc, yc):
        return float(np.linalg.norm(yc - xc))

    def _exp(self, xc, vc):
        return xc + vc

    def _log(self, xc, yc):
        return yc - xc

    def _transport(self, xc, yc, vc):
        return vc.copy()

    def _project_point(self, amb):
        return np.asarray(amb, dtype=float)

    def _project_tangent(self, xc, amb):
        return np.asarray(amb, dtype=float)

    def tangent_basis(self, x: Point):
        return np.eye(self.dim)

    def feasibility_residual(self, coords):
        return 0.0

    def budget(self, region: Region | None = None) -> GeometryBudget:
        # curvature 0; rho would be infinite, capped at the configured ceiling
        return GeometryBudget(
            region=region,
            rho=self.radius_ceiling,
            curvature_bound=0.0,
            hessian_bound=2.0,
            exp_smoothness=1.0,
            log_lipschitz=1.0,
        )
