"""Time-indexed constraint sets C(t) on a manifold.

A moving set is described by scalar inequality constraints
g_i(t, x) >= 0 whose ambient gradients are available; membership,
distance-to-set, metric projection and proximal-normal-cone generators
are derived from them.  A catalog of analytic sets (half-line,
half-space, geodesic ball, ball complement, spherical cap) additionally
carries closed-form projections which anchor the tests; the generic
solver — Riemannian projected gradient on c -> d(y, c)^2 with damped
feasibility restoration and Armijo backtracking — covers everything
else and powers multi-start uniqueness probes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import nnls

from . import expressions as ex
from .errors import DomainError, NumericsError, StructuralError
from .geometry import (
    ManifoldBackend,
    Point,
    Tangent,
    distance,
    exp_map,
    grad_sq_distance,
    log_map,
)

#: |g_i| below this marks the constraint active
ACTIVITY_TOL = 1e-7
#: gradients smaller than this violate the qualification assumption
QUALIFICATION_TOL = 1e-8

PROJECTOR_STEP_TOL = 1e-10
PROJECTOR_KKT_TOL = 1e-9


@dataclass(frozen=True)
class ProjectionResult:
    point: Point
    dist: float
    active_set: tuple
    iterations: int
    converged: bool
    warning: Optional[str] = None


@dataclass
class Constraint:
    """One scalar inequality g(t, x) >= 0 with its ambient spatial gradient."""

    value: Callable[[float, np.ndarray], float]
    ambient_gradient: Callable[[float, np.ndarray], np.ndarray]
    label: str = ""


class MovingSet:
    """Constraint set C(t) = {x : g_i(t, x) >= 0 for all i} on one backend."""

    def __init__(
        self,
        backend: ManifoldBackend,
        constraints: Sequence[Constraint],
        *,
        lipschitz_const: float = 0.0,
        prox_radius_hint: float = 1.0,
        closed_project: Optional[Callable[[float, Point], tuple]] = None,
        feasibility_tol: Optional[float] = None,
        descriptor: Optional[dict] = None,
    ):
        if lipschitz_const < 0:
            raise StructuralError("lipschitz_const must be nonnegative")
        if not prox_radius_hint > 0:
            raise StructuralError("prox_radius_hint must be positive")
        self.backend = backend
        self.constraints = list(constraints)
        self.lipschitz_const = float(lipschitz_const)
        self.prox_radius_hint = float(prox_radius_hint)
        self.closed_project = closed_project
        self.feasibility_tol = (
            backend.feasibility_tol if feasibility_tol is None else float(feasibility_tol)
        )
        self.descriptor = descriptor or {}

    # -- pointwise queries -------------------------------------------------

    def constraint_values(self, t: float, x: Point) -> np.ndarray:
        return np.array([c.value(t, x.coords) for c in self.constraints])

    def member(self, t: float, x: Point) -> bool:
        return bool(np.all(self.constraint_values(t, x) >= -self.feasibility_tol))

    def active_set(self, t: float, x: Point) -> tuple:
        vals = self.constraint_values(t, x)
        return tuple(int(i) for i in np.flatnonzero(np.abs(vals) <= ACTIVITY_TOL))

    def constraint_gradient(self, t: float, x: Point, i: int) -> Tangent:
        """Riemannian gradient of g_i at x (ambient gradient projected to T_x)."""
        amb = self.constraints[i].ambient_gradient(t, x.coords)
        return Tangent(x, self.backend._project_tangent(x.coords, amb))

    def proximal_normal_generators(self, t: float, x: Point) -> list:
        """Generators {-grad g_i : i active}; empty in the interior."""
        if not self.member(t, x):
            raise StructuralError("normal-cone generators are defined for members only")
        gens = []
        for i in self.active_set(t, x):
            g = self.constraint_gradient(t, x, i)
            if g.norm() < QUALIFICATION_TOL:
                raise NumericsError(
                    f"degenerate active gradient for constraint {i}; "
                    "the qualification assumption fails at this point"
                )
            gens.append(g.scaled(-1.0))
        return gens

    # -- projection ----------------------------------------------------------

    def project(
        self,
        t: float,
        y: Point,
        *,
        method: str = "auto",
        initial: Optional[Point] = None,
        max_iter: int = 500,
        step_tol: float = PROJECTOR_STEP_TOL,
        kkt_tol: float = PROJECTOR_KKT_TOL,
    ) -> ProjectionResult:
        if method not in ("auto", "closed", "iterative"):
            raise StructuralError(f"unknown projection method {method!r}")
        if self.member(t, y):
            return ProjectionResult(y, 0.0, self.active_set(t, y), 0, True)
        if method != "iterative" and self.closed_project is not None:
            point, warning = self.closed_project(t, y)
            d = distance(y, point)
            warning = warning or self._radius_warning(d)
            return ProjectionResult(point, d, self.active_set(t, point), 0, True, warning)
        if method == "closed":
            raise StructuralError("this set carries no closed-form projection")
        return self._project_iterative(
            t, y, initial, max_iter=max_iter, step_tol=step_tol, kkt_tol=kkt_tol
        )

    def dist_to_set(self, t: float, y: Point) -> float:
        if self.member(t, y):
            return 0.0
        return self.project(t, y).dist

    def _radius_warning(self, d: float) -> Optional[str]:
        working = 0.5 * self.prox_radius_hint
        if d > working:
            return (
                f"query at distance {d:.3g} exceeds the working radius "
                f"{working:.3g} implied by the prox-regularity hint; the result "
                "may be one of several local projections"
            )
        return None

    def _project_iterative(self, t, y, initial, *, max_iter, step_tol, kkt_tol):
        backend = self.backend
        rho = backend.budget().rho
        c = self.restore_feasibility(t, initial if initial is not None else y)
        iterations = 0
        warning = None
        for iterations in range(1, max_iter + 1):
            try:
                grad = grad_sq_distance(c, y)
            except DomainError:
                raise NumericsError(
                    "projection iterate left the validated region around the query",
                    best=c,
                )
            kkt = self._kkt_residual(t, c, grad)
            if kkt <= kkt_tol:
                break
            descent = grad.scaled(-1.0)
            dn = descent.norm()
            fc = distance(c, y) ** 2
            alpha = min(0.5, 0.45 * rho / dn)
            moved = None
            for _ in range(40):
                cand = self.restore_feasibility(t, exp_map(c, descent.scaled(alpha)))
                fcand = distance(cand, y) ** 2
                # sufficient decrease against the achieved projected step:
                # restoration may cancel most of the raw gradient near the
                # boundary, so the raw norm would stall the search
                achieved = distance(c, cand)
                if fcand <= fc - 1e-4 * achieved * achieved / max(alpha, 1e-300):
                    moved = cand
                    break
                alpha *= 0.5
            if moved is None:
                break  # no feasible descent: stationary within line-search resolution
            step = distance(c, moved)
            c = moved
            if step <= step_tol:
                break
        else:
            d = distance(y, c)
            raise NumericsError(
                f"projection did not converge in {max_iter} iterations",
                residual=self._kkt_residual(t, c, grad_sq_distance(c, y)),
                best=ProjectionResult(c, d, self.active_set(t, c), max_iter, False),
            )
        d = distance(y, c)
        warning = warning or self._radius_warning(d)
        return ProjectionResult(c, d, self.active_set(t, c), iterations, True, warning)

    def _kkt_residual(self, t, c, grad):
        """min over nonnegative multipliers of |grad F - sum mu_i grad g_i|."""
        basis = self.backend.tangent_basis(c)
        b = np.array([self.backend.inner(c, grad.components, e) for e in basis])
        active = self.active_set(t, c)
        if not active:
            return float(np.linalg.norm(b))
        cols = []
        for i in active:
            gi = self.constraint_gradient(t, c, i)
            cols.append([self.backend.inner(c, gi.components, e) for e in basis])
        A = np.array(cols).T
        _, resid = nnls(A, b)
        return float(resid)

    def restore_feasibility(self, t: float, x: Point, max_iter: int = 60) -> Point:
        """Damped descent on the squared constraint violation.

        The damped Newton steps can overshoot into the interior by
        O(step^2); constraints that were actually violated on the way are
        polished back onto their boundary so the projector's alternating
        iteration has a clean fixed point.
        """
        backend = self.backend
        rho = backend.budget().rho
        c = x
        touched: set = set()
        for _ in range(max_iter):
            vals = self.constraint_values(t, c)
            viol = np.flatnonzero(vals < -0.1 * self.feasibility_tol)
            if viol.size == 0:
                break
            touched.update(int(i) for i in viol)
            merit = float(np.sum(np.minimum(vals, 0.0) ** 2))
            direction = None
            for i in viol:
                g = self.constraint_gradient(t, c, int(i))
                gn2 = g.norm() ** 2
                if gn2 < QUALIFICATION_TOL**2:
                    raise NumericsError(
                        f"degenerate gradient while restoring constraint {i}"
                    )
                part = g.scaled(-vals[i] / gn2)
                direction = part if direction is None else direction + part
            alpha = min(1.0, 0.45 * rho / max(direction.norm(), 1e-300))
            improved = False
            for _ in range(40):
                cand = exp_map(c, direction.scaled(alpha))
                cvals = self.constraint_values(t, cand)
                cmerit = float(np.sum(np.minimum(cvals, 0.0) ** 2))
                if cmerit < merit * (1.0 - 1e-4 * alpha):
                    c = cand
                    improved = True
                    break
                alpha *= 0.5
            if not improved:
                break
        vals = self.constraint_values(t, c)
        if not np.all(vals >= -self.feasibility_tol):
            raise NumericsError(
                "could not restore feasibility; the set may be empty near this point",
                residual=float(-np.min(vals)),
                best=c,
            )
        if touched:
            c = self._polish_onto_boundary(t, c, sorted(touched))
        return c

    def _polish_onto_boundary(self, t, c, indices, tol=1e-12, rounds=6):
        """Newton steps driving g_i(t, c) to zero for the given constraints.

        Intermediate iterates may dip microscopically onto the infeasible
        side; the last iterate that is still a member is returned.
        """
        best_member = c
        for _ in range(rounds):
            vals = np.array([self.constraints[i].value(t, c.coords) for i in indices])
            if float(np.max(np.abs(vals))) <= tol:
                break
            grads = [self.constraint_gradient(t, c, i) for i in indices]
            gram = np.array(
                [[self.backend.inner(c, a.components, b.components) for b in grads] for a in grads]
            )
            try:
                lam = np.linalg.solve(gram, vals)
            except np.linalg.LinAlgError:
                break
            step = grads[0].scaled(-float(lam[0]))
            for l, g in zip(lam[1:], grads[1:]):
                step = step + g.scaled(-float(l))
            cand = exp_map(c, step)
            cvals = np.array([self.constraints[i].value(t, cand.coords) for i in indices])
            if float(np.max(np.abs(cvals))) >= float(np.max(np.abs(vals))):
                break
            c = cand
            if self.member(t, c):
                best_member = c
        return c if self.member(t, c) else best_member

    def find_member(
        self, t: float, near: Point, rng: np.random.Generator, radius: float, tries: int = 64
    ) -> Point:
        """Some member of C(t) near ``near``; raises if none is found."""
        if self.member(t, near):
            return near
        if self.closed_project is not None:
            point, _ = self.closed_project(t, near)
            return point
        try:
            return self.restore_feasibility(t, near)
        except NumericsError:
            pass
        for _ in range(tries):
            cand = self.backend.random_point(rng, near, radius)
            try:
                return self.restore_feasibility(t, cand)
            except NumericsError:
                continue
        raise StructuralError(
            f"no member of the set found near {near!r} at t={t}; "
            "the set may be empty there"
        )


# -- catalog ----------------------------------------------------------------


def _rotate(vec, axis, angle):
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0:
        raise StructuralError("rotation axis must be nonzero")
    k = axis / n
    return (
        vec * math.cos(angle)
        + np.cross(k, vec) * math.sin(angle)
        + k * np.dot(k, vec) * (1.0 - math.cos(angle))
    )


def halfline(backend, offset=0.0, speed=0.0, **kw):
    """C(t) = {x >= offset + speed*t} on the Euclidean line."""
    if backend.key[0] != "euclidean" or backend.dim != 1:
        raise StructuralError("halfline requires the 1-d Euclidean backend")

    def bound(t):
        return offset + speed * t

    con = Constraint(
        value=lambda t, x: float(x[0] - bound(t)),
        ambient_gradient=lambda t, x: np.array([1.0]),
        label="x1 >= moving bound",
    )

    def proj(t, y):
        return backend.point([max(y.coords[0], bound(t))]), None

    kw.setdefault("lipschitz_const", abs(speed))
    return MovingSet(
        backend,
        [con],
        closed_project=proj,
        descriptor={"kind": "halfline", "offset": offset, "speed": speed},
        **kw,
    )


def ball(backend, center, radius, velocity=None, **kw):
    """Geodesic ball {d(x, c(t)) <= r}; a moving center is Euclidean-only."""
    center = np.asarray(center, dtype=float)
    if velocity is not None and backend.key[0] != "euclidean":
        raise StructuralError("moving ball centers are supported on the Euclidean backend")
    vel = np.zeros_like(center) if velocity is None else np.asarray(velocity, dtype=float)

    def center_at(t):
        return backend.point(center + t * vel if velocity is not None else center)

    def value(t, xc):
        return radius - backend._distance(xc, center_at(t).coords)

    def amb_grad(t, xc):
        c = center_at(t)
        x = Point(backend, xc)
        d = backend._distance(xc, c.coords)
        if d < 1e-14:
            raise NumericsError("ball constraint gradient undefined at the center")
        return log_map(x, c).components / d

    def proj(t, y):
        c = center_at(t)
        gam = log_map(c, y)
        return exp_map(c, gam.scaled(radius / gam.norm())), None

    kw.setdefault("lipschitz_const", float(np.linalg.norm(vel)))
    return MovingSet(
        backend,
        [Constraint(value, amb_grad, "inside geodesic ball")],
        closed_project=proj,
        descriptor={
            "kind": "ball",
            "center": center.tolist(),
            "radius": radius,
            **({"velocity": vel.tolist()} if velocity is not None else {}),
        },
        **kw,
    )


def ball_complement(backend, center, radius, **kw):
    """Complement of an open geodesic ball: {d(x, c) >= r}."""
    center_pt = backend.point(np.asarray(center, dtype=float))

    def value(t, xc):
        return backend._distance(xc, center_pt.coords) - radius

    def amb_grad(t, xc):
        x = Point(backend, xc)
        d = backend._distance(xc, center_pt.coords)
        if d < 1e-14:
            raise NumericsError("complement constraint gradient undefined at the center")
        return -log_map(x, center_pt).components / d

    def proj(t, y):
        d = distance(center_pt, y)
        if d < 1e-14:
            # every boundary point is equidistant; pick one deterministically
            basis = backend.tangent_basis(center_pt)
            v = Tangent(center_pt, basis[0] * radius)
            return exp_map(center_pt, v), "projection is multivalued at the ball center"
        gam = log_map(center_pt, y)
        return exp_map(center_pt, gam.scaled(radius / gam.norm())), None

    return MovingSet(
        backend,
        [Constraint(value, amb_grad, "outside geodesic ball")],
        closed_project=proj,
        descriptor={"kind": "ball_complement", "center": list(center), "radius": radius},
        **kw,
    )


def half_space(backend, normal, offset=0.0, speed=0.0, **kw):
    """Euclidean half-space {<a, x> >= offset + speed*t}."""
    if backend.key[0] != "euclidean":
        raise StructuralError("half_space requires a Euclidean backend")
    a = np.asarray(normal, dtype=float)
    na2 = float(np.dot(a, a))
    if na2 == 0:
        raise StructuralError("half-space normal must be nonzero")

    def bound(t):
        return offset + speed * t

    def proj(t, y):
        gap = bound(t) - float(np.dot(a, y.coords))
        return backend.point(y.coords + (gap / na2) * a), None

    kw.setdefault("lipschitz_const", abs(speed) / math.sqrt(na2))
    return MovingSet(
        backend,
        [
            Constraint(
                lambda t, x: float(np.dot(a, x) - bound(t)),
                lambda t, x: a.copy(),
                "half-space",
            )
        ],
        closed_project=proj,
        descriptor={
            "kind": "half_space",
            "normal": a.tolist(),
            "offset": offset,
            "speed": speed,
        },
        **kw,
    )


def sphere_cap(backend, axis, height=0.0, omega=0.0, rotation_axis=(0.0, 1.0, 0.0), **kw):
    """Cap {<x, a(t)> >= height} on S^2 with the axis rotating at rate omega.

    a(t) is axis rotated by omega*t about rotation_axis; the default
    rotation of the pole (0,0,1) about the y-axis gives
    a(t) = (sin(omega t), 0, cos(omega t)).
    """
    if backend.key[0] != "sphere":
        raise StructuralError("sphere_cap requires the sphere backend")
    if not -1.0 < height < 1.0:
        raise StructuralError("cap height must lie in (-1, 1)")
    axis0 = np.asarray(axis, dtype=float)
    axis0 = axis0 / np.linalg.norm(axis0)

    def axis_at(t):
        if omega == 0.0:
            return axis0
        return _rotate(axis0, np.asarray(rotation_axis, dtype=float), omega * t)

    def value(t, xc):
        return float(np.dot(xc, axis_at(t)) - height)

    def amb_grad(t, xc):
        return axis_at(t).copy()

    sin_cap = math.sqrt(1.0 - height * height)

    def proj(t, y):
        a = axis_at(t)
        s = float(np.dot(y.coords, a))
        perp = y.coords - s * a
        n = float(np.linalg.norm(perp))
        if n < 1e-12:
            basis = backend.tangent_basis(backend.point(a))
            w = basis[0]
            return (
                backend.point(height * a + sin_cap * w),
                "projection is multivalued at the cap antipode",
            )
        return backend.point(height * a + sin_cap * (perp / n)), None

    kw.setdefault("lipschitz_const", abs(omega))
    return MovingSet(
        backend,
        [Constraint(value, amb_grad, "spherical cap")],
        closed_project=proj,
        descriptor={
            "kind": "sphere_cap",
            "axis": axis0.tolist(),
            "height": height,
            "omega": omega,
            "rotation_axis": list(rotation_axis),
        },
        **kw,
    )


def inequalities(backend, exprs, **kw):
    """General inequality set from expression strings over x1..xn and t."""
    n = backend.ambient_dim
    names = [f"x{i}" for i in range(1, n + 1)]
    allowed = set(names) | {"t"}
    cons = []
    for s in exprs:
        tree = ex.parse(s, allowed_vars=allowed)
        fn = ex.compile_tree(tree, ["t"] + names)
        grads = [ex.compile_tree(tree.diff(v), ["t"] + names) for v in names]

        def value(t, xc, fn=fn):
            return float(fn(t, *xc))

        def amb_grad(t, xc, grads=grads):
            return np.array([g(t, *xc) for g in grads])

        cons.append(Constraint(value, amb_grad, s))
    return MovingSet(
        backend,
        cons,
        descriptor={"kind": "inequalities", "exprs": list(exprs)},
        **kw,
    )


CATALOG = {
    "halfline": halfline,
    "ball": ball,
    "ball_complement": ball_complement,
    "half_space": half_space,
    "sphere_cap": sphere_cap,
    "inequalities": inequalities,
}


def make_moving_set(backend, descriptor: dict, **kw) -> MovingSet:
    """Construct a moving set from a scenario-style descriptor."""
    spec = dict(descriptor)
    kind = spec.pop("kind", None)
    if kind not in CATALOG:
        raise StructuralError(
            f"unknown set kind {kind!r}; available: {sorted(CATALOG)}"
        )
    return CATALOG[kind](backend, **spec, **kw)
