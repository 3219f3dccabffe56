"""Derivative-free optimizers and anchor-based model calibration.

Calibration runs a particle swarm over the normalized parameter box, then
polishes the swarm's best point with Nelder-Mead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Sequence

import numpy as np

from .channel import friis_received_power, offset_penalty
from .errors import ConfigError, DomainError, EvaluationError
from .link_eval import (
    ModelBundle,
    downlink_ber_estimate,
    downlink_eb_n0,
    uplink_ber_estimate,
    uplink_eb_n0,
)
from .regen_frontend import amp_gain, rectifier_sensitivity
from .signal_core import RandomSource


@dataclass
class FitResult:
    params: np.ndarray
    loss: float
    n_evaluations: int
    converged: bool
    n_iterations: int = 0
    history: list = field(default_factory=list, repr=False)  # best loss after each iteration


def _checked(objective, x, counter):
    val = float(objective(x))
    counter[0] += 1
    if not math.isfinite(val):
        raise EvaluationError(f"objective returned {val} at {list(x)}", point=np.array(x))
    return val


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    x0,
    max_iter: int = 1000,
    x_tol: float = 1e-10,
    f_tol: float = 1e-14,
    reflection: float = 1.0,
    expansion: float = 2.0,
    contraction: float = 0.5,
    shrink: float = 0.5,
    initial_step: float | Sequence[float] = 0.05,
    bounds=None,
) -> FitResult:
    """Downhill simplex minimization.

    The starting simplex offsets each coordinate of ``x0`` by
    ``initial_step`` times its magnitude (or by ``initial_step`` itself for
    zero coordinates). With ``bounds=(lower, upper)`` every trial point is
    clipped into the box. Stops when the simplex diameter drops below
    ``x_tol`` or the spread of vertex losses below ``f_tol``.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    if bounds is not None:
        lo, hi = (np.asarray(b, dtype=float) for b in bounds)
        clip = lambda p: np.clip(p, lo, hi)  # noqa: E731
    else:
        clip = lambda p: p  # noqa: E731
    evals = [0]
    f = lambda p: _checked(objective, p, evals)  # noqa: E731

    steps = np.broadcast_to(np.asarray(initial_step, dtype=float), (n,))
    simplex = [clip(x0.copy())]
    for i in range(n):
        v = x0.copy()
        v[i] = v[i] + (steps[i] * v[i] if v[i] != 0 else steps[i])
        v = clip(v)
        if np.array_equal(v, simplex[0]):
            # clipped onto x0; step the other way
            v = x0.copy()
            v[i] = v[i] - (steps[i] * abs(v[i]) if v[i] != 0 else steps[i])
            v = clip(v)
        simplex.append(v)
    simplex = np.array(simplex)
    fvals = np.array([f(v) for v in simplex])

    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        diam = np.max(np.abs(simplex[1:] - simplex[0]))
        if diam < x_tol or fvals[-1] - fvals[0] < f_tol:
            converged = True
            it -= 1
            break

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = clip(centroid + reflection * (centroid - worst))
        fr = f(xr)
        if fr < fvals[0]:
            xe = clip(centroid + expansion * (xr - centroid))
            fe = f(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:
                xc = clip(centroid + contraction * (xr - centroid))
                fc = f(xc)
                accept = fc <= fr
            else:
                xc = clip(centroid + contraction * (worst - centroid))
                fc = f(xc)
                accept = fc < fvals[-1]
            if accept:
                simplex[-1], fvals[-1] = xc, fc
            else:
                for j in range(1, n + 1):
                    simplex[j] = clip(simplex[0] + shrink * (simplex[j] - simplex[0]))
                    fvals[j] = f(simplex[j])
        history.append(float(np.min(fvals)))

    best = int(np.argmin(fvals))
    return FitResult(simplex[best].copy(), float(fvals[best]), evals[0], converged, it, history)


@dataclass(frozen=True)
class ParamSpace:
    names: tuple
    lower: tuple
    upper: tuple
    log_scale: tuple = ()

    def __post_init__(self):
        names = tuple(self.names)
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        logs = tuple(bool(v) for v in self.log_scale) or (False,) * len(names)
        if not (len(names) == len(lo) == len(hi) == len(logs)):
            raise ConfigError("parameter names, bounds and scales must have equal length")
        if len(set(names)) != len(names):
            raise ConfigError("parameter names must be unique")
        for nm, a, b, lg in zip(names, lo, hi, logs):
            if not a < b:
                raise ConfigError(f"{nm}: lower bound must be below upper bound")
            if lg and a <= 0:
                raise ConfigError(f"{nm}: log-scaled bounds must be positive")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "log_scale", logs)

    def __len__(self):
        return len(self.names)

    def to_unit(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi, lg = np.array(self.lower), np.array(self.upper), np.array(self.log_scale)
        with np.errstate(divide="ignore", invalid="ignore"):
            u_lin = (x - lo) / (hi - lo)
            u_log = np.log(x / lo) / np.log(hi / lo)
        return np.clip(np.where(lg, u_log, u_lin), 0.0, 1.0)

    def from_unit(self, u) -> np.ndarray:
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        lo, hi, lg = np.array(self.lower), np.array(self.upper), np.array(self.log_scale)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_log = lo * (hi / lo) ** u
        x = np.where(lg, x_log, lo + u * (hi - lo))
        return np.clip(x, lo, hi)


def particle_swarm(
    objective: Callable[[np.ndarray], float],
    space: ParamSpace,
    rng: RandomSource,
    n_particles: int = 40,
    n_iters: int = 200,
    inertia: float = 0.729,
    cognitive: float = 1.49445,
    social: float = 1.49445,
    init_points=None,
    x_tol: float = 1e-8,
) -> FitResult:
    """Global-best particle swarm over the box of ``space``.

    The swarm is evaluated synchronously each iteration and positions are
    clamped to the bounds, so the result depends only on ``rng``.
    ``init_points`` overrides the first particles' starting positions.
    """
    if n_particles < 1 or n_iters < 0:
        raise ConfigError("n_particles must be >= 1 and n_iters >= 0")
    gen = rng.generator()
    lo, hi = np.array(space.lower), np.array(space.upper)
    span = hi - lo
    d = len(space)
    pos = lo + gen.random((n_particles, d)) * span
    if init_points is not None:
        pts = np.atleast_2d(np.asarray(init_points, dtype=float))[:n_particles]
        pos[: len(pts)] = np.clip(pts, lo, hi)
    vel = (gen.random((n_particles, d)) - 0.5) * 0.2 * span
    evals = [0]
    f = lambda p: _checked(objective, p, evals)  # noqa: E731

    fit = np.array([f(p) for p in pos])
    pbest, pbest_f = pos.copy(), fit.copy()
    g = int(np.argmin(pbest_f))
    gbest, gbest_f = pbest[g].copy(), float(pbest_f[g])
    history = [gbest_f]
    for _ in range(n_iters):
        r1 = gen.random((n_particles, d))
        r2 = gen.random((n_particles, d))
        vel = inertia * vel + cognitive * r1 * (pbest - pos) + social * r2 * (gbest - pos)
        vel = np.clip(vel, -span, span)
        pos = np.clip(pos + vel, lo, hi)
        fit = np.array([f(p) for p in pos])
        better = fit < pbest_f
        pbest[better], pbest_f[better] = pos[better], fit[better]
        g = int(np.argmin(pbest_f))
        if pbest_f[g] < gbest_f:
            gbest, gbest_f = pbest[g].copy(), float(pbest_f[g])
        history.append(gbest_f)
    spread = float(np.max(np.abs(pbest - gbest) / span)) if d else 0.0
    return FitResult(gbest, gbest_f, evals[0], spread < x_tol, n_iters, history)


# -- anchors ---------------------------------------------------------------


def _log10_ber(ber: float) -> float:
    return math.log10(max(ber, 1e-300))


def _saturation_margin(m: ModelBundle, distance_m: float) -> float:
    p_in = friis_received_power(m.carrier_geometry.at(distance_m))
    return p_in + amp_gain(m.uplink_amp, p_in) - m.uplink_amp.p_sat_out


OBSERVABLES: dict[str, Callable] = {
    "amp_gain_db": lambda m, p_in_dbm, offset_hz=0.0: amp_gain(m.uplink_amp, p_in_dbm, m.uplink_amp.f0 + offset_hz),
    "amp_half_power_bandwidth_hz": lambda m: m.uplink_amp.half_power_bandwidth,
    "rectifier_sensitivity_dbm": lambda m: rectifier_sensitivity(m.rectifier),
    "passive_rectifier_sensitivity_dbm": lambda m: rectifier_sensitivity(m.passive_rectifier),
    "uplink_penalty_db": lambda m, offset_hz: offset_penalty(m.uplink_penalty, m.uplink_amp, offset_hz),
    "downlink_penalty_db": lambda m, offset_hz: offset_penalty(m.downlink_penalty, m.downlink_amp, offset_hz),
    "downlink_eb_n0_db": lambda m, distance_m, bit_rate_bps: downlink_eb_n0(m, distance_m, bit_rate_bps),
    "uplink_eb_n0_db": lambda m, distance_m, bit_rate_bps: uplink_eb_n0(m, distance_m, bit_rate_bps),
    "downlink_log10_ber": lambda m, distance_m, bit_rate_bps: _log10_ber(
        downlink_ber_estimate(m, distance_m, bit_rate_bps)
    ),
    "uplink_log10_ber": lambda m, distance_m, bit_rate_bps: _log10_ber(
        uplink_ber_estimate(m, distance_m, bit_rate_bps)
    ),
    "uplink_saturation_margin_db": _saturation_margin,
}


@dataclass(frozen=True)
class Anchor:
    """Target for one model observable.

    ``kind`` is ``eq`` (hit ``target``), ``ge`` or ``le`` (one-sided bound).
    An anchor is met when it is within ``tolerance`` of its target (on the
    wrong side, for bounds).
    """

    observable: str
    target: float
    tolerance: float
    weight: float = 1.0
    kind: str = "eq"
    args: dict = field(default_factory=dict)
    source: str = ""

    def __post_init__(self):
        if self.observable not in OBSERVABLES:
            raise ConfigError(f"unknown observable {self.observable!r}")
        if not self.tolerance > 0 or not self.weight > 0:
            raise ConfigError(f"{self.observable}: tolerance and weight must be positive")
        if self.kind not in ("eq", "ge", "le"):
            raise ConfigError(f"{self.observable}: kind must be eq, ge or le")

    def __hash__(self):
        return hash((self.observable, self.target, self.kind, tuple(sorted(self.args.items()))))

    def observe(self, models: ModelBundle) -> float:
        try:
            return float(OBSERVABLES[self.observable](models, **self.args))
        except TypeError as exc:
            raise ConfigError(f"{self.observable}: bad arguments {self.args}: {exc}") from exc

    def residual(self, value: float) -> float:
        r = (value - self.target) / self.tolerance
        if self.kind == "ge":
            return min(r, 0.0)
        if self.kind == "le":
            return max(r, 0.0)
        return r

    def met(self, value: float) -> bool:
        return abs(self.residual(value)) <= 1.0


AnchorSet = tuple


def anchors_from_config(items) -> AnchorSet:
    out = []
    for i, a in enumerate(items):
        if not isinstance(a, dict):
            raise ConfigError(f"anchors[{i}]: expected an object")
        try:
            out.append(Anchor(**a))
        except TypeError as exc:
            raise ConfigError(f"anchors[{i}]: {exc}") from exc
        except ConfigError as exc:
            raise ConfigError(f"anchors[{i}]: {exc}") from exc
    return tuple(out)


def space_from_config(items) -> ParamSpace:
    try:
        return ParamSpace(
            tuple(p["name"] for p in items),
            tuple(p["lower"] for p in items),
            tuple(p["upper"] for p in items),
            tuple(p.get("log", False) for p in items),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"parameters: {exc}") from exc


def anchor_loss(anchors: AnchorSet, models: ModelBundle) -> float:
    return float(sum(a.weight * a.residual(a.observe(models)) ** 2 for a in anchors))


def residual_table(anchors: AnchorSet, models: ModelBundle) -> list[dict]:
    rows = []
    for a in anchors:
        v = a.observe(models)
        rows.append(
            {
                "observable": a.observable,
                "args": dict(a.args),
                "kind": a.kind,
                "target": a.target,
                "tolerance": a.tolerance,
                "value": v,
                "residual": a.residual(v),
                "met": a.met(v),
            }
        )
    return rows


@dataclass
class Calibration:
    models: ModelBundle
    fit: FitResult
    residuals: list
    space: ParamSpace

    @property
    def converged(self) -> bool:
        return self.fit.converged


def fit_models(
    anchors: AnchorSet,
    space: ParamSpace,
    rng: RandomSource,
    base: ModelBundle | None = None,
    pso_options: dict | None = None,
    nm_options: dict | None = None,
) -> Calibration:
    """Fit the free parameters of ``base`` to the anchors.

    Loss is the weighted sum of squared tolerance-normalized residuals. The
    swarm starts with one particle at the current parameter values.
    """
    anchors = tuple(anchors)
    if not anchors:
        raise ConfigError("anchor set is empty")
    base = ModelBundle() if base is None else base
    for nm in space.names:
        base.get_param(nm)
    for a in anchors:
        a.observe(base)

    def bundle_at(u) -> ModelBundle:
        return base.with_params(dict(zip(space.names, space.from_unit(u).tolist())))

    def loss(u) -> float:
        try:
            return anchor_loss(anchors, bundle_at(u))
        except DomainError:
            return math.inf

    unit = ParamSpace(space.names, (0.0,) * len(space), (1.0,) * len(space))
    u0 = space.to_unit([base.get_param(nm) for nm in space.names])
    pso = particle_swarm(loss, unit, rng, init_points=[u0], **(pso_options or {}))
    nm_opts = {"max_iter": 4000, "x_tol": 1e-9, "f_tol": 1e-16, "initial_step": 0.02}
    nm_opts.update(nm_options or {})
    polish = nelder_mead(loss, pso.params, bounds=([0.0] * len(space), [1.0] * len(space)), **nm_opts)
    best = polish if polish.loss <= pso.loss else pso
    models = bundle_at(best.params)
    table = residual_table(anchors, models)
    fit = FitResult(
        space.from_unit(best.params),
        best.loss,
        pso.n_evaluations + polish.n_evaluations,
        all(r["met"] for r in table),
        pso.n_iterations + polish.n_iterations,
        pso.history + polish.history,
    )
    return Calibration(models, fit, table, space)


def default_calibration_config() -> dict:
    """The shipped anchor set and parameter space."""
    ref = resources.files("regenscatter.data").joinpath("default_config.json")
    return json.loads(ref.read_text(encoding="utf-8"))


def default_anchors() -> AnchorSet:
    return anchors_from_config(default_calibration_config()["calibration"]["anchors"])


def default_space() -> ParamSpace:
    return space_from_config(default_calibration_config()["calibration"]["parameters"])
