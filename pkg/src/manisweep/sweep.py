"""The catching-up integrator for perturbed sweeping on a manifold.

One step from node x_i at time t_i: flow the geodesic of the
perturbation field for one step, then metrically project onto the moved
set,

    x_{i+1} = P_{C(t_{i+1})}( exp_{x_i}( h f(t_i, x_i) ) ).

The discrete trajectory interpolates between nodes along geodesics; the
discrete velocity |log_{x_i}(x_{i+1})| / h is bounded by
2 ||f||_inf + K_L whenever the projections return true nearest points,
and the inclusion residual measures how far the discrete velocity is
from the normal-cone inclusion the scheme approximates.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, NumericsError, StructuralError
from .geometry import Point, Region, Tangent, distance, exp_map, log_map, parallel_transport
from .moving_sets import MovingSet

logger = logging.getLogger(__name__)

#: slack on the discrete velocity bound 2||f|| + K_L
VELOCITY_MARGIN = 1e-6


class Perturbation:
    """Tangent field f(t, x) with declared bound and Lipschitz modulus.

    Declared constants are trusted; evaluations are checked against the
    declared bound opportunistically and violations are logged, not
    raised.
    """

    def __init__(self, func, sup_norm: float, lipschitz: float, descriptor=None):
        if sup_norm < 0 or lipschitz < 0:
            raise StructuralError("perturbation constants must be nonnegative")
        self._func = func
        self.sup_norm = float(sup_norm)
        self.lipschitz = float(lipschitz)
        self.descriptor = descriptor or {}
        self.bound_violations = 0

    def __call__(self, t: float, x: Point) -> Tangent:
        v = self._func(t, x)
        if v.base is not x:
            raise StructuralError("perturbation field must return tangents at the query point")
        n = v.norm()
        if n > self.sup_norm + 1e-9:
            self.bound_violations += 1
            if self.bound_violations <= 3:
                logger.warning(
                    "perturbation exceeded its declared bound: |f| = %.6g > %.6g",
                    n,
                    self.sup_norm,
                )
        return v


def zero_perturbation() -> Perturbation:
    def f(t, x):
        return Tangent(x, np.zeros(x.backend.ambient_dim))

    return Perturbation(f, 0.0, 0.0, {"kind": "zero"})


def expression_perturbation(backend, components, sup_norm, lipschitz) -> Perturbation:
    """Ambient components from expression strings, projected onto T_x."""
    from . import expressions as ex

    n = backend.ambient_dim
    if len(components) != n:
        raise StructuralError(
            f"perturbation needs {n} ambient components, got {len(components)}"
        )
    names = [f"x{i}" for i in range(1, n + 1)]
    fns = [
        ex.compile_tree(ex.parse(s, allowed_vars=set(names) | {"t"}), ["t"] + names)
        for s in components
    ]

    def f(t, x):
        amb = np.array([fn(t, *x.coords) for fn in fns])
        return Tangent(x, backend._project_tangent(x.coords, amb))

    return Perturbation(
        f,
        sup_norm,
        lipschitz,
        {"kind": "expression", "components": list(components),
         "sup_norm": sup_norm, "lipschitz": lipschitz},
    )


@dataclass
class AdmissibleStep:
    h_max: float
    sub_horizon: Optional[float]
    details: dict


def admissible_step(
    set_: MovingSet,
    perturbation: Perturbation,
    horizon: float,
    x0: Point,
    empirical_uniqueness_radius: Optional[float] = None,
    ceiling: float = 1e6,
) -> AdmissibleStep:
    """Largest step (and sub-horizon, if needed) for a certified run.

    Enforces h ||f|| <= rho/2 on the reachable ball, keeps each drifted
    point within the projection working radius, and shortens the horizon
    so that 2 T ||f|| + K_L T stays below min(eta/2, ell); integration
    then chains sub-horizons seamlessly.  With no empirical estimate the
    working radius ell falls back to eta/2.
    """
    F = perturbation.sup_norm
    KL = set_.lipschitz_const
    eta = set_.prox_radius_hint
    reach = 2.0 * horizon * F + KL * horizon
    region = Region(x0, max(reach, 1e-3))
    rho = set_.backend.budget(region).rho
    ell = (
        empirical_uniqueness_radius
        if empirical_uniqueness_radius is not None
        else eta / 2.0
    )
    h_rho = (rho / 2.0) / F if F > 0 else math.inf
    h_proj = ell / (F + KL) if F + KL > 0 else math.inf
    h_max = min(h_rho, h_proj, ceiling)
    denom = 2.0 * F + KL
    tbar = min(eta / 2.0, ell) / denom * (1.0 - 1e-9) if denom > 0 else math.inf
    sub_horizon = tbar if tbar < horizon else None
    return AdmissibleStep(
        h_max=h_max,
        sub_horizon=sub_horizon,
        details={
            "rho": rho,
            "ell": ell,
            "eta": eta,
            "sup_norm": F,
            "lipschitz_const": KL,
            "h_rho": h_rho,
            "h_projection": h_proj,
            "reach_radius": reach,
        },
    )


@dataclass
class Trajectory:
    """Discrete nodes with their geodesic interpolant."""

    set_: MovingSet
    perturbation: Perturbation
    times: np.ndarray
    nodes: list
    step: float
    discrete_velocities: np.ndarray
    metadata: dict
    certified: bool
    warnings: list
    _segment_logs: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self._segment_logs:
            self._segment_logs = [None] * (len(self.nodes) - 1)

    @property
    def horizon(self):
        return float(self.times[-1])

    def locate(self, t: float) -> int:
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise DomainError(f"t = {t} outside the horizon [0, {self.horizon}]")
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return min(max(i, 0), len(self.nodes) - 2)

    def segment_log(self, i: int) -> Tangent:
        if self._segment_logs[i] is None:
            self._segment_logs[i] = log_map(self.nodes[i], self.nodes[i + 1])
        return self._segment_logs[i]

    def interpolate(self, t: float) -> Point:
        i = self.locate(t)
        hi = self.times[i + 1] - self.times[i]
        s = (t - self.times[i]) / hi
        if s <= 0.0:
            return self.nodes[i]
        if s >= 1.0:
            return self.nodes[i + 1]
        return exp_map(self.nodes[i], self.segment_log(i).scaled(s))

    def velocity_at(self, t: float) -> Tangent:
        """Discrete velocity transported to the interpolant point at t."""
        i = self.locate(t)
        hi = self.times[i + 1] - self.times[i]
        gam = self.segment_log(i)
        p = self.interpolate(t)
        v = gam.scaled(1.0 / hi)
        if distance(self.nodes[i], p) < 1e-14:
            return v
        return parallel_transport(self.nodes[i], p, v)

    def max_velocity(self) -> float:
        return float(np.max(self.discrete_velocities)) if len(self.discrete_velocities) else 0.0

    # -- serialization ------------------------------------------------------

    def to_csv(self, path, metadata_path=None):
        n = self.set_.backend.ambient_dim
        cols = ["t"] + [f"x{i}" for i in range(1, n + 1)] + [
            "v_discrete",
            "dist_to_set",
            "active_set",
        ]
        lines = [",".join(cols)]
        for i, (t, x) in enumerate(zip(self.times, self.nodes)):
            v = self.discrete_velocities[i] if i < len(self.discrete_velocities) else 0.0
            active = ";".join(str(j) for j in self.set_.active_set(t, x))
            vals = [repr(float(t))] + [repr(float(c)) for c in x.coords]
            vals += [repr(float(v)), repr(self.set_.dist_to_set(t, x)), active]
            lines.append(",".join(vals))
        text = "\n".join(lines) + "\n"
        with open(path, "w") as fh:
            fh.write(text)
        if metadata_path is not None:
            with open(metadata_path, "w") as fh:
                json.dump(self.metadata_document(), fh, indent=2, sort_keys=True)
                fh.write("\n")
        return text

    def metadata_document(self):
        return {
            "certified": self.certified,
            "warnings": list(self.warnings),
            "step": self.step,
            "n_nodes": len(self.nodes),
            "max_velocity": self.max_velocity(),
            **self.metadata,
        }


def catching_up(scenario, h: float, *, strict_velocity: bool = False) -> Trajectory:
    """Integrate the sweeping process over the scenario horizon.

    ``scenario`` provides moving_set, perturbation, x0, horizon,
    tolerances, seed and hash.  Oversized steps are allowed (rate studies
    probe them) but drop the certification flag via projection warnings.
    """
    set_: MovingSet = scenario.moving_set
    pert: Perturbation = scenario.perturbation
    x0: Point = scenario.x0
    horizon = float(scenario.horizon)
    if not h > 0:
        raise StructuralError("step must be positive")
    if not set_.member(0.0, x0):
        vals = set_.constraint_values(0.0, x0)
        bad = int(np.argmin(vals))
        raise StructuralError(
            f"x0 is not in C(0): constraint {bad} evaluates to {vals[bad]:.3e}"
        )

    n = max(1, math.ceil(horizon / h - 1e-12))
    times = np.minimum(np.arange(n + 1) * h, horizon)
    times[-1] = horizon

    adm = admissible_step(set_, pert, horizon, x0)
    warnings = []
    certified = True
    if h > adm.h_max * (1 + 1e-12):
        warnings.append(
            f"step {h:.3g} exceeds the admissible bound {adm.h_max:.3g}; "
            "run continues uncertified"
        )
        certified = False

    nodes = [x0]
    velocities = np.zeros(n)
    projector_iterations = 0
    for i in range(n):
        t_next = float(times[i + 1])
        hi = float(times[i + 1] - times[i])
        f = pert(float(times[i]), nodes[i])
        try:
            drifted = exp_map(nodes[i], f.scaled(hi))
            res = set_.project(t_next, drifted)
        except (NumericsError, DomainError) as err:
            partial = Trajectory(
                set_, pert, times[: i + 1], nodes, h, velocities[:i],
                _metadata(scenario, h, adm, projector_iterations),
                False, warnings + [f"failed at step {i}: {err}"],
            )
            raise NumericsError(
                f"catching-up step {i} (t = {t_next:.6g}) failed: {err}",
                best=partial,
            ) from err
        projector_iterations += res.iterations
        if res.warning is not None:
            certified = False
            warnings.append(f"step {i}: {res.warning}")
        nodes.append(res.point)
        velocities[i] = distance(nodes[i], nodes[i + 1]) / hi

    bound = 2.0 * pert.sup_norm + set_.lipschitz_const + VELOCITY_MARGIN
    vmax = float(np.max(velocities)) if n else 0.0
    if vmax > bound:
        msg = (
            f"discrete velocity {vmax:.6g} exceeds the bound "
            f"2||f|| + K_L = {bound:.6g}"
        )
        if strict_velocity:
            raise NumericsError(msg)
        certified = False
        warnings.append(msg)

    return Trajectory(
        set_,
        pert,
        times,
        nodes,
        h,
        velocities,
        _metadata(scenario, h, adm, projector_iterations),
        certified,
        warnings,
    )


def _metadata(scenario, h, adm, projector_iterations):
    return {
        "scenario": getattr(scenario, "name", ""),
        "scenario_hash": getattr(scenario, "hash", ""),
        "seed": getattr(scenario, "seed", 0),
        "h": h,
        "admissible_h": adm.h_max,
        "sub_horizons": adm.sub_horizon,
        "projector_iterations": projector_iterations,
        "tolerances": getattr(scenario, "tolerances_dict", lambda: {})(),
    }


def interpolate(traj: Trajectory, t: float) -> Point:
    return traj.interpolate(t)


@dataclass
class ResidualSample:
    value: float
    conclusive: bool
    n_members: int


def inclusion_residual(
    traj: Trajectory,
    t: float,
    fitted_E: float,
    n_members: int = 150,
    sample_radius: Optional[float] = None,
    seed: int = 0,
) -> ResidualSample:
    """Empirical defect of the discrete normal-cone inclusion at time t.

    With w = -dx/dt + f(t, x(t)) (discrete velocity transported to the
    interpolant point), returns
    max(0, sup_c [ <w, log_x(c)> - fitted_E |w| d(x, c)^2 ]) over sampled
    members c of C(t) near x(t); zero means the inclusion holds within
    the empirical hypomonotonicity certificate.
    """
    set_ = traj.set_
    backend = set_.backend
    i = traj.locate(t)
    if abs(t - traj.times[i]) < 1e-12 or abs(t - traj.times[i + 1]) < 1e-12:
        raise DomainError("t must lie strictly inside a step interval")
    p = traj.interpolate(t)
    xdot = traj.velocity_at(t)
    w = traj.perturbation(t, p) - xdot
    wn = w.norm()
    rho = backend.budget().rho
    radius = (
        sample_radius
        if sample_radius is not None
        else min(0.3 * rho, 0.5 * set_.prox_radius_hint)
    )
    rng = np.random.default_rng([seed, int(round(t * 1e9)) & 0x7FFFFFFF])
    worst = 0.0
    found = 0
    tries = 0
    while found < n_members and tries < 20 * n_members:
        tries += 1
        cand = backend.random_point(rng, p, radius)
        if not set_.member(t, cand):
            continue
        found += 1
        d = distance(p, cand)
        if d < 1e-9:
            continue
        gap = w.inner(log_map(p, cand)) - fitted_E * wn * d * d
        worst = max(worst, gap)
    return ResidualSample(value=worst, conclusive=found >= 10, n_members=found)


@dataclass
class SeparationCurve:
    times: np.ndarray
    separation: np.ndarray
    fitted_rate: Optional[float]

    def to_dict(self):
        return {
            "times": self.times.tolist(),
            "separation": self.separation.tolist(),
            "fitted_rate": self.fitted_rate,
        }


def gronwall_separation(scenario, x0_prime: Point, h: float) -> SeparationCurve:
    """Distance between two runs started at x0 and x0_prime.

    The fitted rate is the least-squares slope of log separation against
    time, for comparison against the stability bound 2 (E F + L_f).
    """
    base = catching_up(scenario, h)
    other = catching_up(_Restarted(scenario, x0_prime), h)
    sep = np.array([distance(a, b) for a, b in zip(base.nodes, other.nodes)])
    mask = sep > 1e-14
    rate = None
    if int(np.count_nonzero(mask)) >= 2:
        tt = base.times[mask]
        rate = float(np.polyfit(tt, np.log(sep[mask]), 1)[0])
    return SeparationCurve(base.times, sep, rate)


class _Restarted:
    """Scenario view with a replaced initial point."""

    def __init__(self, scenario, x0):
        self._scenario = scenario
        self.x0 = x0

    def __getattr__(self, name):
        return getattr(self._scenario, name)
