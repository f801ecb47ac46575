"""Iterated Euler scheme with big-jump interlacing, and its drivers.

One step of the base scheme advances every path by

    ``x <- x + dt b(x, mu) + sum_{U-events} f(x, mu, z) - dt nu(f(x, mu, .); U)``

with ``x`` and ``mu`` frozen at the step start: the drift, the small-jump
coefficient, and the compensator all see the state as it was when the
step began, and the measure argument as it was at the last uniform grid
time.  Big-band events are interlaced: their arrival times are real
numbers, inserted as extra grid points for the path they drive; the
small-jump dynamics are solved up to each arrival, the jump
``x <- x + g(x-, mu, z)`` is spliced in, and the state (not the measure)
is re-frozen from the post-jump value.

Measure sources are the only difference between the drivers: a decoupled
path reads a fixed :class:`~levyfield.measures.MeasureFlow`, the
interacting system re-forms the cloud of current states at every uniform
grid time (snapshot semantics: all particles read the same cloud no
matter how the work is scheduled), and the fixed-point driver alternates
the two, re-simulating the same noise against the previous iterate's
flow until the discounted flow distance stalls below tolerance.

Randomness discipline: each particle owns one stream per noise layer
(initial draw, small band, big band), addressed by particle id.  Small
events are drawn per uniform step, big events are drawn upfront for the
whole horizon, and neither schedule nor particle count ever reorders
another particle's draws.  Consequences tested elsewhere: deleting a
zero-rate band changes nothing bit for bit, a one-particle system equals
a decoupled run against its own delta flow, and permuting particle ids
permutes the output paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .coefficients import CoefficientSet
from .errors import ConfigurationError, DivergenceError, NonConvergenceError
from .measures import EmpiricalMeasure, MeasureFlow
from .noise import LevyModel, _draw_poisson_events
from .streams import MAX_PARTICLE, Layer, StreamContext
from .wasserstein import flow_distance

__all__ = [
    "TimeGrid",
    "SolverConfig",
    "PathSolution",
    "AppliedJump",
    "SimResult",
    "PicardResult",
    "CoupledResult",
    "integrate_decoupled",
    "picard_fixed_point",
    "simulate_particle_system",
    "simulate_coupled",
    "resolve_gamma",
]

# stream address reserved for the Monte Carlo compensator fallback batch
_COMPENSATOR_PARTICLE = MAX_PARTICLE


@dataclass(frozen=True)
class TimeGrid:
    """Uniform base grid on ``[0, horizon]`` with step ``step``.

    Big-jump arrival times are not part of this object; they are inserted
    per path at simulation time.  ``step`` must divide ``horizon``.
    """

    horizon: float
    step: float
    times: np.ndarray

    @staticmethod
    def regular(horizon: float, step: float) -> "TimeGrid":
        if not (horizon > 0 and step > 0):
            raise ConfigurationError(f"need horizon > 0 and step > 0, got {horizon}, {step}")
        count = round(horizon / step)
        if count < 1 or abs(count * step - horizon) > 1e-9 * max(1.0, horizon):
            raise ConfigurationError(f"step {step} does not divide horizon {horizon}")
        times = np.linspace(0.0, horizon, count + 1)
        times.flags.writeable = False
        return TimeGrid(horizon=float(horizon), step=float(step), times=times)

    @property
    def n_steps(self) -> int:
        return self.times.size - 1


@dataclass(frozen=True)
class SolverConfig:
    """Knobs shared by all drivers.

    ``paths`` is the cloud size of fixed-point iterates, ``gamma`` the
    flow-distance discount (``None`` resolves to ten times the declared
    one-sided constant), ``crn`` re-uses the same noise streams across
    fixed-point iterations so the contraction factor is visible instead
    of drowned in resampling noise.
    """

    paths: int = 1000
    gamma: Optional[float] = None
    tol: float = 1e-3
    max_iter: int = 20
    crn: bool = True
    divergence_threshold: float = 1e12
    compensator_samples: int = 2048
    flow_metric: str = "exact"

    def __post_init__(self):
        problems = []
        if self.paths < 1:
            problems.append(f"paths must be >= 1, got {self.paths}")
        if self.tol <= 0:
            problems.append(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            problems.append(f"max_iter must be >= 1, got {self.max_iter}")
        if self.divergence_threshold <= 0:
            problems.append("divergence_threshold must be > 0")
        if self.gamma is not None and self.gamma < 0:
            problems.append(f"gamma must be >= 0, got {self.gamma}")
        if problems:
            raise ConfigurationError(problems)


def resolve_gamma(config: SolverConfig, coeffs: CoefficientSet) -> float:
    """Discount for the fixed-point metric: explicit, else ``10 L1``."""
    if config.gamma is not None:
        return config.gamma
    if coeffs.declared_one_sided is None:
        raise ConfigurationError(
            "no gamma configured and the coefficient set declares no one-sided constant; "
            "set SolverConfig.gamma explicitly"
        )
    return 10.0 * max(coeffs.declared_one_sided, 0.0)


@dataclass(frozen=True)
class AppliedJump:
    """One spliced big jump: arrival, mark, band ('V' idio, 'V0' common), increment."""

    time: float
    mark: np.ndarray
    band: str
    increment: np.ndarray


@dataclass
class PathSolution:
    """One path on its realized grid (uniform points plus its V-event times).

    States are post-jump at jump times.  With an empty jump log the path
    is the plain compensated small-jump Euler polygon.
    """

    times: np.ndarray
    states: np.ndarray
    jumps: list[AppliedJump]


class _Recorder:
    """Per-particle realized-grid records, built only when asked for."""

    __slots__ = ("times", "states", "jumps")

    def __init__(self, t0, x0):
        self.times = [float(t0)]
        self.states = [np.array(x0)]
        self.jumps = []

    def point(self, t, x):
        self.times.append(float(t))
        self.states.append(np.array(x))

    def jump(self, t, mark, band, incr):
        self.jumps.append(AppliedJump(float(t), np.array(mark), band, np.array(incr)))

    def solution(self):
        return PathSolution(np.array(self.times), np.vstack(self.states), self.jumps)


@dataclass
class SimResult:
    """Everything one ensemble run can hand back (fields None unless requested)."""

    final: np.ndarray
    flow: Optional[MeasureFlow] = None
    states: Optional[np.ndarray] = None  # (n_times, n, d) at uniform grid times
    paths: Optional[list[PathSolution]] = None


# ---------------------------------------------------------------------------
# the engine
# ---------------------------------------------------------------------------


def _bucket_by_step(times, grid_times):
    """Map event times to the uniform step (t_k, t_{k+1}] containing them."""
    if times.size == 0:
        return {}
    steps = np.searchsorted(grid_times, times, side="left") - 1
    out = {}
    for idx, s in enumerate(steps):
        out.setdefault(int(s), []).append(idx)
    return out


def _mc_compensator(coeffs_fn, rate, batch, measure_free):
    """Fallback ``integral f(x, mu, z) nu(dz)`` from a pinned mark batch."""

    def comp(X, ctx):
        out = np.empty_like(X)
        k = batch.shape[0]
        for j in range(X.shape[0]):
            tiled = np.broadcast_to(X[j], (k, X.shape[1]))
            vals = coeffs_fn(tiled, batch) if measure_free else coeffs_fn(tiled, batch, ctx)
            out[j] = rate * vals.mean(axis=0)
        return out

    return comp


def _substep_scalar(
    coeffs,
    ctx,
    x,
    t0,
    t1,
    u_times,
    u_marks,
    v_times,
    v_marks,
    cu_times,
    cu_marks,
    cv_times,
    cv_marks,
    comp,
    comp0,
    recorder,
):
    """One particle across one uniform step containing big-jump breakpoints.

    Breakpoints are the idiosyncratic and common V-event times in
    ``(t0, t1]``; the state re-freezes at each.  Simultaneous events
    apply idiosyncratic first, then common.
    """
    d = x.shape[0]
    # (time, order, band, mark): order 0 = idio before order 1 = common
    breaks = [(float(t), 0, "V", v_marks[i]) for i, t in enumerate(v_times)]
    breaks += [(float(t), 1, "V0", cv_marks[i]) for i, t in enumerate(cv_times)]
    breaks.sort(key=lambda e: (e[0], e[1]))

    def advance(x, s_a, s_b):
        delta = s_b - s_a
        row = x[None, :]
        incr = delta * coeffs.drift(row, ctx)[0]
        if comp is not None:
            incr = incr - delta * comp(row, ctx)[0]
        if comp0 is not None:
            incr = incr - delta * comp0(row, ctx)[0]
        if u_times is not None and u_times.size:
            sel = (u_times > s_a) & (u_times <= s_b)
            if sel.any():
                marks = u_marks[sel]
                vals = coeffs.small_jump(np.broadcast_to(x, (marks.shape[0], d)), marks, ctx)
                incr = incr + vals.sum(axis=0)
        if cu_times is not None and cu_times.size:
            sel = (cu_times > s_a) & (cu_times <= s_b)
            if sel.any():
                marks = cu_marks[sel]
                vals = coeffs.common_small(np.broadcast_to(x, (marks.shape[0], d)), marks)
                incr = incr + vals.sum(axis=0)
        return x + incr

    s = t0
    for bt, _, band, mark in breaks:
        if bt > s:
            x = advance(x, s, bt)
            s = bt
        if band == "V":
            incr = coeffs.big_jump(x[None, :], mark[None, :], ctx)[0]
        else:
            incr = coeffs.common_big(x[None, :], mark[None, :], ctx)[0]
        x = x + incr
        if recorder is not None:
            recorder.jump(bt, mark, band, incr)
            recorder.point(bt, x)
    if t1 > s:
        x = advance(x, s, t1)
    return x


def _simulate_system(
    coeffs: CoefficientSet,
    levy: LevyModel,
    grid: TimeGrid,
    stream_ctx: StreamContext,
    n: int,
    initial,
    config: SolverConfig,
    *,
    flow: Optional[MeasureFlow] = None,
    interacting: bool = False,
    common=None,
    particle_ids: Optional[Sequence[int]] = None,
    collect_clouds: bool = False,
    collect_states: bool = False,
    record_paths: bool = False,
    observer: Optional[Callable] = None,
) -> SimResult:
    d = coeffs.dim
    if levy.dim != d:
        raise ConfigurationError(f"noise dim {levy.dim} != coefficient dim {d}")
    if not interacting and flow is None:
        raise ConfigurationError("decoupled runs need a measure flow")
    times = grid.times
    ids = list(particle_ids) if particle_ids is not None else list(range(n))
    if len(ids) != n:
        raise ConfigurationError(f"{n} particles but {len(ids)} particle ids")

    X = np.empty((n, d))
    if callable(initial):
        for j, pid in enumerate(ids):
            X[j] = initial(stream_ctx.generator(pid, Layer.INIT))
    else:
        X[:] = np.asarray(initial, dtype=float).reshape(n, d)

    small_active = levy.small is not None and levy.small.rate > 0.0 and coeffs.small_jump is not None
    big_active = levy.big is not None and levy.big.rate > 0.0 and coeffs.big_jump is not None

    u_gens = [stream_ctx.generator(pid, Layer.SMALL) for pid in ids] if small_active else None

    # idiosyncratic big jumps: whole horizon upfront, bucketed by step
    v_step_map: dict[int, list[tuple[int, float, np.ndarray]]] = {}
    if big_active:
        for j, pid in enumerate(ids):
            vt, vm = _draw_poisson_events(
                stream_ctx.generator(pid, Layer.BIG), 0.0, grid.horizon, levy.big, require_interior=True
            )
            if vt.size:
                buckets = _bucket_by_step(vt, times)
                for step, idxs in buckets.items():
                    v_step_map.setdefault(step, []).extend((j, float(vt[i]), vm[i]) for i in idxs)

    # common layer: events shared across particles, presampled by the caller
    cu_step_map: dict[int, np.ndarray] = {}
    cv_step_map: dict[int, np.ndarray] = {}
    c_small_active = c_big_active = False
    if common is not None:
        c_small_active = coeffs.common_small is not None and common.model.small_rate > 0.0
        c_big_active = coeffs.common_big is not None and common.model.big_rate > 0.0
        if c_small_active:
            cu_step_map = _bucket_by_step(common.u_times, times)
        if c_big_active:
            cv_step_map = _bucket_by_step(common.v_times, times)

    comp = None
    if small_active:
        if coeffs.small_compensator is not None:
            comp = lambda X_, ctx_: coeffs.small_compensator(X_, ctx_, levy)
        else:
            batch = levy.small.sampler.draw(
                stream_ctx.generator(_COMPENSATOR_PARTICLE, Layer.AUX), config.compensator_samples
            )
            # small_jump always takes the measure context positionally
            comp = _mc_compensator(coeffs.small_jump, levy.small.rate, batch, measure_free=False)

    comp0 = None
    if c_small_active:
        if coeffs.common_small_compensator is not None:
            comp0 = lambda X_, ctx_: coeffs.common_small_compensator(X_, ctx_, common.model)
        else:
            batch0 = common.model.small.sampler.draw(
                stream_ctx.generator(_COMPENSATOR_PARTICLE, Layer.COMMON_SMALL),
                config.compensator_samples,
            )
            comp0 = _mc_compensator(coeffs.common_small, common.model.small.rate, batch0, measure_free=True)

    clouds = [EmpiricalMeasure(X.copy())] if collect_clouds else None
    states_hist = [X.copy()] if collect_states else None
    recorders = [_Recorder(times[0], X[j]) for j in range(n)] if record_paths else None
    if observer is not None:
        observer(0, float(times[0]), X)

    for k in range(grid.n_steps):
        t0 = float(times[k])
        t1 = float(times[k + 1])
        dt = t1 - t0
        mu = EmpiricalMeasure(X.copy()) if interacting else flow.at(t0)
        ctx = coeffs.prepare(mu)

        base = X + dt * coeffs.drift(X, ctx)
        if comp is not None:
            base -= dt * comp(X, ctx)
        if comp0 is not None:
            base -= dt * comp0(X, ctx)

        # small-band draws: one count per particle per step, marks only when needed
        u_events: list[tuple[int, np.ndarray, np.ndarray]] = []
        if small_active:
            for j in range(n):
                ut, um = _draw_poisson_events(u_gens[j], t0, t1, levy.small, require_interior=True)
                if ut.size:
                    u_events.append((j, ut, um))

        cu_idx = cu_step_map.get(k)
        cv_idx = cv_step_map.get(k)
        v_list = v_step_map.get(k)

        if cv_idx is None and v_list is None:
            # no big jumps anywhere this step: single frozen segment
            if cu_idx is not None:
                for i in cu_idx:
                    zc = common.u_marks[i]
                    base += coeffs.common_small(X, np.broadcast_to(zc, (n, d)))
            for j, ut, um in u_events:
                vals = coeffs.small_jump(np.broadcast_to(X[j], (um.shape[0], d)), um, ctx)
                base[j] += vals.sum(axis=0)
            X = base
        else:
            affected = set(range(n)) if cv_idx is not None else {j for j, _, _ in v_list}
            u_map = {j: (ut, um) for j, ut, um in u_events}
            if cv_idx is None and cu_idx is not None:
                for i in cu_idx:
                    zc = common.u_marks[i]
                    base += coeffs.common_small(X, np.broadcast_to(zc, (n, d)))
            for j, (ut, um) in u_map.items():
                if j not in affected:
                    vals = coeffs.small_jump(np.broadcast_to(X[j], (um.shape[0], d)), um, ctx)
                    base[j] += vals.sum(axis=0)
            v_map: dict[int, list[tuple[float, np.ndarray]]] = {}
            if v_list is not None:
                for j, vt, vm in v_list:
                    v_map.setdefault(j, []).append((vt, vm))
            empty_t = np.empty(0)
            empty_m = np.empty((0, d))
            if cv_idx is not None:
                cvt = common.v_times[cv_idx]
                cvm = common.v_marks[cv_idx]
            else:
                cvt, cvm = empty_t, empty_m
            for j in sorted(affected):
                own = v_map.get(j, [])
                vt = np.array([t for t, _ in own])
                vm = np.vstack([m for _, m in own]) if own else empty_m
                ut, um = u_map.get(j, (None, None))
                base[j] = _substep_scalar(
                    coeffs,
                    ctx,
                    X[j],
                    t0,
                    t1,
                    ut,
                    um,
                    vt,
                    vm,
                    common.u_times[cu_idx] if cu_idx is not None else empty_t,
                    common.u_marks[cu_idx] if cu_idx is not None else empty_m,
                    cvt,
                    cvm,
                    comp,
                    comp0,
                    recorders[j] if recorders is not None else None,
                )
            X = base

        amax = float(np.max(np.abs(X))) if X.size else 0.0
        if not math.isfinite(amax) or amax > config.divergence_threshold:
            flat = np.abs(X)
            flat = np.where(np.isfinite(flat), flat, np.inf)
            worst = int(np.unravel_index(np.argmax(flat), flat.shape)[0])
            raise DivergenceError(t1, worst, amax)

        if observer is not None:
            observer(k + 1, t1, X)
        if collect_clouds:
            clouds.append(EmpiricalMeasure(X.copy()))
        if collect_states:
            states_hist.append(X.copy())
        if recorders is not None:
            for j in range(n):
                recorders[j].point(t1, X[j])

    out_flow = MeasureFlow(times, clouds) if collect_clouds else None
    out_states = np.stack(states_hist) if collect_states else None
    out_paths = [r.solution() for r in recorders] if recorders is not None else None
    return SimResult(final=X, flow=out_flow, states=out_states, paths=out_paths)


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------


def integrate_decoupled(
    coeffs: CoefficientSet,
    flow: MeasureFlow,
    initial,
    stream_ctx: StreamContext,
    grid: TimeGrid,
    levy: LevyModel,
    config: Optional[SolverConfig] = None,
    *,
    particle_id: int = 0,
) -> PathSolution:
    """One path of the decoupled equation driven by a frozen measure flow.

    ``initial`` is a point or a sampler (drawn from the particle's
    INIT-layer stream).  The returned solution lives on the realized
    grid: uniform points plus this stream's big-jump times, with
    post-jump values stored at jump times and every spliced jump logged.
    """
    config = config or SolverConfig()
    res = _simulate_system(
        coeffs,
        levy,
        grid,
        stream_ctx,
        1,
        initial if callable(initial) else np.asarray(initial, dtype=float).reshape(1, -1),
        config,
        flow=flow,
        particle_ids=[particle_id],
        record_paths=True,
    )
    return res.paths[0]


@dataclass
class PicardResult:
    """Fixed-point outcome: final flow, distance trace, initial cloud."""

    flow: MeasureFlow
    trace: list[float]
    iterations: int
    initial_cloud: EmpiricalMeasure


def picard_fixed_point(
    coeffs: CoefficientSet,
    initial_sampler,
    levy: LevyModel,
    grid: TimeGrid,
    config: SolverConfig,
    stream_ctx: StreamContext,
    *,
    initial_flow: Optional[MeasureFlow] = None,
) -> PicardResult:
    """Iterate the law-to-path map on empirical flows until it stalls.

    Each iteration re-simulates ``config.paths`` decoupled paths against
    the previous flow and takes their empirical clouds as the next flow.
    Initial draws are made once and shared by every iteration; with
    ``config.crn`` the noise streams are also identical across
    iterations, making the map deterministic and its contraction factor
    directly observable.  The starting flow is the constant-in-time
    initial cloud unless ``initial_flow`` overrides it (same grid
    required).  Raises :class:`NonConvergenceError` with the distance
    trace when the budget runs out.
    """
    m = config.paths
    gamma = resolve_gamma(config, coeffs)
    x0 = np.empty((m, coeffs.dim))
    for i in range(m):
        x0[i] = initial_sampler(stream_ctx.generator(i, Layer.INIT))
    initial_cloud = EmpiricalMeasure(x0)
    if initial_flow is None:
        flow = MeasureFlow.constant(grid.times, initial_cloud)
    else:
        if not np.array_equal(initial_flow.times, grid.times):
            raise ConfigurationError("initial flow grid must match the solver grid")
        flow = initial_flow

    trace: list[float] = []
    for it in range(config.max_iter):
        ctx_it = stream_ctx if config.crn else stream_ctx.with_(replica=stream_ctx.replica + it)
        res = _simulate_system(
            coeffs, levy, grid, ctx_it, m, x0, config, flow=flow, collect_clouds=True
        )
        new_flow = res.flow
        dist = flow_distance(new_flow, flow, coeffs.beta, gamma, metric=config.flow_metric)
        trace.append(dist)
        flow = new_flow
        if dist < config.tol:
            return PicardResult(flow=flow, trace=trace, iterations=it + 1, initial_cloud=initial_cloud)
    raise NonConvergenceError(trace, config.tol)


def simulate_particle_system(
    coeffs: CoefficientSet,
    n: int,
    initial_sampler,
    levy: LevyModel,
    grid: TimeGrid,
    stream_ctx: StreamContext,
    config: Optional[SolverConfig] = None,
    *,
    particle_ids: Optional[Sequence[int]] = None,
    record_paths: bool = False,
    collect_clouds: bool = True,
    observer: Optional[Callable] = None,
) -> SimResult:
    """Interacting system: every particle reads the cloud of current states.

    The cloud is re-formed from all ``n`` states at each uniform grid
    time and frozen for the following step (snapshot semantics).  Paths
    are returned on request; the empirical flow is collected by default.
    """
    config = config or SolverConfig()
    return _simulate_system(
        coeffs,
        levy,
        grid,
        stream_ctx,
        n,
        initial_sampler,
        config,
        interacting=True,
        particle_ids=particle_ids,
        collect_clouds=collect_clouds,
        record_paths=record_paths,
        observer=observer,
    )


@dataclass
class CoupledResult:
    """Synchronously coupled pair: interacting system vs limit copies."""

    interacting: SimResult
    limit: SimResult
    sup_errors: np.ndarray  # (n,) sup over the evaluation grid of |X_i - Y_i|
    final_errors: np.ndarray  # (n,) |X_i(T) - Y_i(T)|


def simulate_coupled(
    coeffs: CoefficientSet,
    n: int,
    initial_sampler,
    levy: LevyModel,
    grid: TimeGrid,
    stream_ctx: StreamContext,
    reference_flow: MeasureFlow,
    config: Optional[SolverConfig] = None,
    *,
    record_paths: bool = False,
) -> CoupledResult:
    """Couple the n-particle system to n limit copies on identical noise.

    Both systems draw from the same per-particle streams (same initial
    draws, same events band by band); the limit copies read
    ``reference_flow`` while the particles read their own cloud, so the
    per-particle gaps isolate the measure-argument error.  Sup errors are
    taken over the realized grid (shared by construction) when
    ``record_paths`` is set, over uniform grid times otherwise.
    """
    config = config or SolverConfig()
    inter = _simulate_system(
        coeffs,
        levy,
        grid,
        stream_ctx,
        n,
        initial_sampler,
        config,
        interacting=True,
        collect_states=not record_paths,
        record_paths=record_paths,
    )
    limit = _simulate_system(
        coeffs,
        levy,
        grid,
        stream_ctx,
        n,
        initial_sampler,
        config,
        flow=reference_flow,
        collect_states=not record_paths,
        record_paths=record_paths,
    )
    if record_paths:
        sups = np.empty(n)
        finals = np.empty(n)
        for j in range(n):
            pa, pb = inter.paths[j], limit.paths[j]
            if not np.array_equal(pa.times, pb.times):
                raise ConfigurationError("coupled pair realized different grids; stream mismatch")
            gaps = np.sqrt(((pa.states - pb.states) ** 2).sum(axis=1))
            sups[j] = float(gaps.max())
            finals[j] = float(gaps[-1])
    else:
        diffs = np.sqrt(((inter.states - limit.states) ** 2).sum(axis=2))  # (times, n)
        sups = diffs.max(axis=0)
        finals = diffs[-1]
    return CoupledResult(interacting=inter, limit=limit, sup_errors=sups, final_errors=finals)
