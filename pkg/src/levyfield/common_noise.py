"""A second jump layer shared by every particle.

Each particle keeps its own idiosyncratic streams, and the whole system
additionally reacts to one common two-band realization: small common
jumps enter compensated through ``common_small``, big ones uncompensated
through ``common_big``, interlaced with the idiosyncratic events (ties
broken idiosyncratic-first).  Conditioning on the common event history
turns the limit law into a random measure; its surrogate here is nested
Monte Carlo: k outer common paths, each carrying an m-particle cloud.

Degeneracy is structural: a zero-rate common layer leaves the engine on
the exact code path of the single-layer system, so the reductions to
``simulate_particle_system``, ``picard_fixed_point`` and ``run_weak_poc``
are bit-identical, not merely close.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .chaos import (
    PoCConfig,
    RateReport,
    coupling_rate_report,
    coupling_terms,
    _eval_index,
)
from .coefficients import CoefficientSet
from .errors import ConfigurationError, NonConvergenceError
from .initial import InitialSampler
from .measures import EmpiricalMeasure, MeasureFlow
from .noise import LevyModel, _draw_poisson_events, no_noise
from .solver import (
    SimResult,
    SolverConfig,
    TimeGrid,
    _simulate_system,
    resolve_gamma,
)
from .streams import EXP_MAIN, EXP_REFERENCE, Layer, StreamContext
from .wasserstein import _w_auto

__all__ = [
    "TwoLayerNoise",
    "CommonRealization",
    "sample_common_realization",
    "ConditionalCloud",
    "pool_conditional_clouds",
    "CommonSimResult",
    "simulate_common_system",
    "ConditionalPicardResult",
    "conditional_distance",
    "conditional_picard",
    "conditional_reference",
    "conditional_poc_replication",
    "run_conditional_poc",
]


@dataclass(frozen=True)
class TwoLayerNoise:
    """Idiosyncratic noise model plus the model of the shared layer.

    Independence of the layers is by stream-id construction: common draws
    come from the dedicated common layers at particle id 0, which no
    idiosyncratic stream ever touches.
    """

    idio: LevyModel
    common: LevyModel

    def __post_init__(self):
        if self.idio.dim != self.common.dim:
            raise ConfigurationError(
                f"layer dims differ: idiosyncratic {self.idio.dim}, common {self.common.dim}"
            )

    @property
    def dim(self) -> int:
        return self.idio.dim

    @staticmethod
    def single_layer(idio: LevyModel) -> "TwoLayerNoise":
        """Degenerate pairing with an event-free common layer."""
        return TwoLayerNoise(idio=idio, common=no_noise(idio.dim))


@dataclass(frozen=True)
class CommonRealization:
    """One realized common path: all its events over the horizon.

    ``u_*`` hold the small-band events, ``v_*`` the big-band ones, times
    sorted ascending with marks row-aligned.  The realization is the
    whole conditioning history: every simulation handed the same object
    sees identical common events.
    """

    model: LevyModel
    u_times: np.ndarray
    u_marks: np.ndarray
    v_times: np.ndarray
    v_marks: np.ndarray

    @property
    def n_events(self) -> int:
        return int(self.u_times.size + self.v_times.size)

    @property
    def empty(self) -> bool:
        return self.n_events == 0


def sample_common_realization(
    model: LevyModel, stream_ctx: StreamContext, horizon: float
) -> CommonRealization:
    """Draw one common path from the context's dedicated common streams.

    Both bands are sampled over the full horizon up front (count, then
    sorted uniform arrival times, then marks), from the common layers at
    particle id 0.  A zero-rate band draws nothing, so deleting a band
    and zeroing its rate produce the same realization.
    """
    if horizon < 0:
        raise ConfigurationError(f"horizon must be >= 0, got {horizon}")
    d = model.dim
    u_times, u_marks = np.empty(0), np.empty((0, d))
    v_times, v_marks = np.empty(0), np.empty((0, d))
    if model.small is not None and model.small.rate > 0.0:
        gen = stream_ctx.generator(0, Layer.COMMON_SMALL)
        u_times, u_marks = _draw_poisson_events(gen, 0.0, horizon, model.small, require_interior=True)
    if model.big is not None and model.big.rate > 0.0:
        gen = stream_ctx.generator(0, Layer.COMMON_BIG)
        v_times, v_marks = _draw_poisson_events(gen, 0.0, horizon, model.big, require_interior=True)
    return CommonRealization(
        model=model, u_times=u_times, u_marks=u_marks, v_times=v_times, v_marks=v_marks
    )


@dataclass(frozen=True)
class ConditionalCloud:
    """An m-particle cloud tagged with the common path that drove it."""

    path_id: int
    cloud: EmpiricalMeasure


def pool_conditional_clouds(clouds: Sequence[ConditionalCloud]) -> EmpiricalMeasure:
    """Forget the conditioning: stack all member particles into one cloud.

    Requires equal cloud sizes so every common path carries the same
    weight; the pooled moment of order beta is then exactly the average
    of the per-path moments (tower property at estimator level).
    """
    sizes = {len(c.cloud) for c in clouds}
    if not clouds or len(sizes) != 1:
        raise ConfigurationError("pooling needs >= 1 clouds of one common size")
    return EmpiricalMeasure(np.vstack([c.cloud.points for c in clouds]))


@dataclass
class CommonSimResult:
    """Particle-system output plus the single shared-event log."""

    sim: SimResult
    realization: CommonRealization

    @property
    def flow(self) -> Optional[MeasureFlow]:
        return self.sim.flow

    @property
    def final(self) -> np.ndarray:
        return self.sim.final


def simulate_common_system(
    coeffs: CoefficientSet,
    n: int,
    initial_sampler: InitialSampler,
    noise: TwoLayerNoise,
    grid: TimeGrid,
    stream_ctx: StreamContext,
    config: Optional[SolverConfig] = None,
    *,
    realization: Optional[CommonRealization] = None,
    particle_ids: Optional[Sequence[int]] = None,
    record_paths: bool = False,
    collect_clouds: bool = True,
    observer=None,
) -> CommonSimResult:
    """Interacting system with every particle fed the same common events.

    The realization is sampled from the context's common streams unless
    one is passed in (pass one to drive several systems by the same
    conditioning path).  Common jumps show up in the per-particle jump
    logs with band tag ``V0``; simultaneous idiosyncratic and common
    events apply idiosyncratic-first.
    """
    config = config or SolverConfig()
    if realization is None:
        realization = sample_common_realization(noise.common, stream_ctx, grid.horizon)
    sim = _simulate_system(
        coeffs,
        noise.idio,
        grid,
        stream_ctx,
        n,
        initial_sampler,
        config,
        interacting=True,
        common=realization,
        particle_ids=particle_ids,
        record_paths=record_paths,
        collect_clouds=collect_clouds,
        observer=observer,
    )
    return CommonSimResult(sim=sim, realization=realization)


def conditional_distance(
    new_flows: Sequence[MeasureFlow],
    old_flows: Sequence[MeasureFlow],
    beta: float,
    eta: float,
    *,
    metric: str = "exact",
) -> float:
    """Discounted sup of the across-path power mean of flow distances.

    ``sup_t e^(-eta t) (mean_j W_beta^beta(new_j_t, old_j_t))^(1/beta)``
    over the common grid.  The power mean of equal values is returned
    exactly (no round trip through the beta-th power), so a family of
    identical paths reduces bit-exactly to the single-flow distance.
    """
    if len(new_flows) != len(old_flows) or not new_flows:
        raise ConfigurationError("need equally many (>=1) new and old flows")
    if eta < 0:
        raise ConfigurationError(f"eta must be >= 0, got {eta}")
    times = new_flows[0].times
    profiles = []
    for new, old in zip(new_flows, old_flows):
        if not (np.array_equal(new.times, times) and np.array_equal(old.times, times)):
            raise ConfigurationError("flow grids differ; distances need a common grid")
        profiles.append([_w_auto(a, b, beta, metric, None) for a, b in zip(new.clouds, old.clouds)])
    k = len(profiles)
    best = 0.0
    for idx, t in enumerate(times):
        vals = [pr[idx] for pr in profiles]
        if k == 1 or all(v == vals[0] for v in vals):
            avg = vals[0]
        else:
            avg = (math.fsum(v**beta for v in vals) / k) ** (1.0 / beta)
        val = math.exp(-eta * t) * avg
        if val > best:
            best = val
    return best


@dataclass
class ConditionalPicardResult:
    """Fixed point of the conditional law map: one flow per common path."""

    flows: list[MeasureFlow]
    realizations: list[CommonRealization]
    trace: list[float]
    iterations: int
    initial_cloud: EmpiricalMeasure

    def clouds_at(self, t: float) -> list[ConditionalCloud]:
        return [ConditionalCloud(j, flow.at(t)) for j, flow in enumerate(self.flows)]


def conditional_picard(
    coeffs: CoefficientSet,
    initial_sampler: InitialSampler,
    noise: TwoLayerNoise,
    grid: TimeGrid,
    config: SolverConfig,
    stream_ctx: StreamContext,
    *,
    realizations: Optional[Sequence[CommonRealization]] = None,
    k: Optional[int] = None,
    eta: Optional[float] = None,
    initial_flows: Optional[Sequence[MeasureFlow]] = None,
) -> ConditionalPicardResult:
    """Iterate the conditional law map over k frozen common paths at once.

    Pass ``realizations`` to pin the common paths, or ``k`` to sample
    that many from replica offsets of ``stream_ctx``.  All paths share
    one block of inner streams (initial draws and idiosyncratic noise),
    which is common-random-numbers across paths: cross-path spread then
    isolates the common layer's effect, and an event-free common layer
    collapses every path onto the single-layer fixed point bit-exactly.
    Stops when the across-path distance drops below ``config.tol``;
    raises :class:`NonConvergenceError` with the trace otherwise.
    """
    if realizations is None:
        if k is None:
            raise ConfigurationError("pass realizations or a path count k")
        realizations = [
            sample_common_realization(
                noise.common, stream_ctx.with_(replica=stream_ctx.replica + j), grid.horizon
            )
            for j in range(k)
        ]
    realizations = list(realizations)
    k = len(realizations)
    if k < 1:
        raise ConfigurationError("need at least one common path")
    m = config.paths
    if m < 2:
        raise ConfigurationError(f"conditional clouds need >= 2 member particles, got {m}")
    eta_val = float(eta) if eta is not None else resolve_gamma(config, coeffs)
    x0 = np.empty((m, coeffs.dim))
    for i in range(m):
        x0[i] = initial_sampler(stream_ctx.generator(i, Layer.INIT))
    initial_cloud = EmpiricalMeasure(x0)
    if initial_flows is None:
        flows = [MeasureFlow.constant(grid.times, initial_cloud) for _ in range(k)]
    else:
        flows = list(initial_flows)
        if len(flows) != k:
            raise ConfigurationError(f"{k} common paths but {len(flows)} starting flows")
        for fl in flows:
            if not np.array_equal(fl.times, grid.times):
                raise ConfigurationError("initial flow grid must match the solver grid")

    trace: list[float] = []
    for it in range(config.max_iter):
        ctx_it = stream_ctx if config.crn else stream_ctx.with_(replica=stream_ctx.replica + it)
        new_flows = []
        for j in range(k):
            res = _simulate_system(
                coeffs, noise.idio, grid, ctx_it, m, x0, config,
                flow=flows[j], common=realizations[j], collect_clouds=True,
            )
            new_flows.append(res.flow)
        dist = conditional_distance(new_flows, flows, coeffs.beta, eta_val, metric=config.flow_metric)
        trace.append(dist)
        flows = new_flows
        if dist < config.tol:
            return ConditionalPicardResult(
                flows=flows,
                realizations=realizations,
                trace=trace,
                iterations=it + 1,
                initial_cloud=initial_cloud,
            )
    raise NonConvergenceError(trace, config.tol)


def conditional_reference(
    coeffs: CoefficientSet,
    noise: TwoLayerNoise,
    grid: TimeGrid,
    initial_sampler: InitialSampler,
    poc_cfg: PoCConfig,
    solver_cfg: SolverConfig,
    seed: int,
) -> ConditionalPicardResult:
    """Common paths plus their conditional fixed points for a chaos run.

    Path j's events come from the main block at replica j, so the
    replication that measures path j later reuses exactly this
    realization; the inner reference particles live in the reserved
    reference block.
    """
    realizations = [
        sample_common_realization(
            noise.common, StreamContext(seed=seed, experiment=EXP_MAIN, replica=j), grid.horizon
        )
        for j in range(poc_cfg.replications)
    ]
    m_ref = poc_cfg.reference_paths or 4 * max(poc_cfg.n_grid)
    ref_cfg = replace(solver_cfg, paths=m_ref)
    return conditional_picard(
        coeffs, initial_sampler, noise, grid, ref_cfg,
        StreamContext(seed=seed, experiment=EXP_REFERENCE, replica=0),
        realizations=realizations,
    )


def conditional_poc_replication(
    coeffs: CoefficientSet,
    noise: TwoLayerNoise,
    grid: TimeGrid,
    initial_sampler: InitialSampler,
    poc_cfg: PoCConfig,
    solver_cfg: SolverConfig,
    seed: int,
    path_idx: int,
    reference_flow: MeasureFlow,
    realization: CommonRealization,
) -> dict[int, tuple[float, float]]:
    """Coupling and conditional-iid terms along the n-grid for one common path."""
    t_idx = _eval_index(grid, poc_cfg.eval_time)
    return {
        n: coupling_terms(
            coeffs, noise.idio, grid, initial_sampler, n, seed, path_idx,
            reference_flow, solver_cfg, poc_cfg.p, t_idx, common=realization,
        )
        for n in poc_cfg.n_grid
    }


def run_conditional_poc(
    coeffs: CoefficientSet,
    noise: TwoLayerNoise,
    grid: TimeGrid,
    initial_sampler: InitialSampler,
    poc_cfg: PoCConfig,
    solver_cfg: SolverConfig,
    seed: int,
    *,
    replication_results: Optional[list] = None,
    reference: Optional[ConditionalPicardResult] = None,
) -> RateReport:
    """Chaos slope with the limit taken conditionally on the common path.

    One common path per replication: the interacting system, the coupled
    limit copies, and the fresh conditional-iid copies all share that
    path's events, and the reference flow is the conditional fixed point
    for the same path.  With the common layer zeroed this is term for
    term the plain weak experiment.
    """
    poc_cfg.check_against(coeffs)
    k = poc_cfg.replications
    ref = reference or conditional_reference(
        coeffs, noise, grid, initial_sampler, poc_cfg, solver_cfg, seed
    )
    if len(ref.flows) != k:
        raise ConfigurationError(f"{k} replications but reference has {len(ref.flows)} paths")
    realizations = ref.realizations
    if replication_results is None:
        replication_results = [
            conditional_poc_replication(
                coeffs, noise, grid, initial_sampler, poc_cfg, solver_cfg, seed,
                j, ref.flows[j], realizations[j],
            )
            for j in range(k)
        ]
    return coupling_rate_report(
        "conditional_poc",
        poc_cfg,
        coeffs,
        replication_results,
        extra_details={
            "common_small_rate": noise.common.small_rate,
            "common_big_rate": noise.common.big_rate,
            "common_events": [r.n_events for r in realizations],
            "reference_paths": len(ref.initial_cloud),
            "reference_trace": ref.trace,
        },
    )
