"""Two-band jump noise: finite-activity samplers and nu-integrals.

The driving noise is a Poisson random measure N on ``(0, T] x (R^d \\ {0})``
whose intensity ``dt x nu`` is split at a radius ``r`` into two disjoint
bands:

* the small band ``U = {0 < |z| <= r}``, integrated in compensated form
  (``N~ = N - dt nu``) so its increments are martingales;
* the big band ``V = {|z| > r}``, kept uncompensated and applied as
  explicit state-dependent jumps.

Both bands are finite activity here: events on ``[0, T]`` arrive as a
Poisson process with rate ``nu(band)`` and carry i.i.d. marks from the
normalized restriction ``nu|_band / nu(band)``.  A small band may also be
declared as the truncation of an infinite-activity measure, in which case
the discarded inner region ``{0 < |z| <= eps}`` is recorded so reports can
carry the truncation bias note; the simulated object is still the
finite-activity remainder.

Well-posedness of the dynamics requires, for the integrability exponent
``beta`` in ``[1, 2]``, that ``nu(|z|^2 ; U)`` and ``nu(1 v |z|^beta ; V)``
are finite; :func:`v_beta_moment` and :func:`nu_expectation` evaluate such
integrals, exactly when the sampler admits a closed form and by plain
Monte Carlo otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, IntegrabilityError
from .streams import EXP_AUX, Layer, NoiseStream

__all__ = [
    "MarkSampler",
    "AnnulusUniform",
    "RadialExponential",
    "FixedMark",
    "MARK_SAMPLERS",
    "register_mark_sampler",
    "LevyBand",
    "LevyModel",
    "JumpEvent",
    "SmallJumpSample",
    "NuEstimate",
    "sample_big_jumps",
    "sample_small_jumps",
    "nu_expectation",
    "v_beta_moment",
]


# ---------------------------------------------------------------------------
# mark samplers
# ---------------------------------------------------------------------------


class MarkSampler:
    """Law of one jump mark, i.e. the normalized restriction of nu to a band.

    Subclasses must set ``dim``, the radial support ``(r_lo, r_hi)``, the
    mean vector ``mean`` under the normalized law, and implement
    ``draw(gen, size)`` returning a ``(size, dim)`` array.  ``radial_cdf``
    and ``abs_moment`` are optional closed forms used by statistical tests
    and exact integrals; leave them as None / NotImplemented when absent.
    """

    dim: int
    r_lo: float
    r_hi: float
    mean: np.ndarray

    def draw(self, gen: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def radial_cdf(self, r):
        """CDF of |Z| if known in closed form, else None."""
        return None

    def abs_moment(self, q: float) -> Optional[float]:
        """E|Z|^q under the normalized law if known in closed form."""
        return None


def _uniform_directions(gen, size, dim):
    # isotropic unit vectors; in 1D a fair sign
    if dim == 1:
        return np.where(gen.random(size) < 0.5, -1.0, 1.0)[:, None]
    v = gen.standard_normal((size, dim))
    norms = np.sqrt((v * v).sum(axis=1, keepdims=True))
    # a zero normal vector has probability zero; nudge defensively
    norms[norms == 0.0] = 1.0
    return v / norms


class AnnulusUniform(MarkSampler):
    """Marks uniform on the annulus ``{r_lo < |z| <= r_hi}``.

    Radius has density proportional to ``r^(dim-1)`` on ``(r_lo, r_hi]``
    (the uniform volume measure), direction is isotropic.  In one
    dimension this is the uniform law on the two intervals
    ``[-r_hi, -r_lo) u (r_lo, r_hi]``.
    """

    def __init__(self, dim: int, r_lo: float, r_hi: float):
        if not (0.0 <= r_lo < r_hi):
            raise ConfigurationError(f"annulus needs 0 <= r_lo < r_hi, got [{r_lo}, {r_hi}]")
        self.dim = int(dim)
        self.r_lo = float(r_lo)
        self.r_hi = float(r_hi)
        self.mean = np.zeros(self.dim)

    def draw(self, gen, size):
        d = self.dim
        u = gen.random(size)
        radius = (self.r_lo**d + u * (self.r_hi**d - self.r_lo**d)) ** (1.0 / d)
        # the band never contains the origin
        np.maximum(radius, np.nextafter(0.0, 1.0), out=radius)
        return _uniform_directions(gen, size, d) * radius[:, None]

    def radial_cdf(self, r):
        d = self.dim
        r = np.clip(np.asarray(r, dtype=float), self.r_lo, self.r_hi)
        return (r**d - self.r_lo**d) / (self.r_hi**d - self.r_lo**d)

    def abs_moment(self, q):
        d = self.dim
        num = d * (self.r_hi ** (d + q) - self.r_lo ** (d + q))
        return num / ((d + q) * (self.r_hi**d - self.r_lo**d))


class RadialExponential(MarkSampler):
    """Isotropic marks with exponentially decaying radius.

    ``|Z| = r_lo + E`` with ``E ~ Exp(decay)``; direction isotropic.
    Unbounded support, so only valid as a big-band law when every
    ``|z|^beta`` moment required by the dynamics is finite, which holds
    for all ``beta`` here since the radius has exponential tails.
    """

    def __init__(self, dim: int, r_lo: float, decay: float):
        if r_lo < 0 or decay <= 0:
            raise ConfigurationError(f"radial_exponential needs r_lo >= 0, decay > 0, got ({r_lo}, {decay})")
        self.dim = int(dim)
        self.r_lo = float(r_lo)
        self.r_hi = math.inf
        self.decay = float(decay)
        self.mean = np.zeros(self.dim)

    def draw(self, gen, size):
        radius = self.r_lo + gen.exponential(1.0 / self.decay, size)
        return _uniform_directions(gen, size, self.dim) * radius[:, None]

    def radial_cdf(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r < self.r_lo, 0.0, 1.0 - np.exp(-self.decay * (r - self.r_lo)))

    def abs_moment(self, q):
        if q == 1.0:
            return self.r_lo + 1.0 / self.decay
        if q == 2.0:
            return self.r_lo**2 + 2.0 * self.r_lo / self.decay + 2.0 / self.decay**2
        return None


class FixedMark(MarkSampler):
    """Degenerate mark law: every jump carries the same mark.

    Useful for forcing asymmetric compensators and for hand-checkable
    jump arithmetic in tests.
    """

    def __init__(self, mark):
        z = np.atleast_1d(np.asarray(mark, dtype=float))
        if z.ndim != 1 or not np.all(np.isfinite(z)):
            raise ConfigurationError(f"fixed mark must be a finite vector, got {mark!r}")
        norm = float(np.sqrt((z * z).sum()))
        if norm == 0.0:
            raise ConfigurationError("fixed mark may not be the origin")
        self.dim = z.size
        self.r_lo = norm
        self.r_hi = norm
        self.mean = z
        self._mark = z

    def draw(self, gen, size):
        return np.broadcast_to(self._mark, (size, self.dim)).copy()

    def abs_moment(self, q):
        return self.r_lo**q


MARK_SAMPLERS: dict[str, Callable[..., MarkSampler]] = {
    "annulus_uniform": AnnulusUniform,
    "radial_exponential": RadialExponential,
    "fixed_mark": lambda dim, mark: FixedMark(mark),
}


def register_mark_sampler(name: str, factory: Callable[..., MarkSampler]) -> None:
    """Register a mark-law factory under ``name`` for config files."""
    MARK_SAMPLERS[name] = factory


# ---------------------------------------------------------------------------
# bands and the two-band model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LevyBand:
    """One finite-activity band of the jump measure.

    ``rate`` is the total mass ``nu(band)``; marks follow ``sampler``.
    ``inner_cutoff`` marks a truncated small band: the original measure on
    ``{0 < |z| <= inner_cutoff}`` was discarded, and ``truncation_note``
    records the declared bias statement for reports.
    """

    rate: float
    sampler: MarkSampler
    inner_cutoff: Optional[float] = None
    truncation_note: str = ""

    def __post_init__(self):
        problems = []
        if self.rate < 0 or not math.isfinite(self.rate):
            problems.append(f"band rate must be finite and >= 0, got {self.rate}")
        if self.inner_cutoff is not None and not self.inner_cutoff > 0:
            problems.append(
                f"truncated band needs a positive declared cutoff, got {self.inner_cutoff}"
            )
        if problems:
            raise ConfigurationError(problems)

    @property
    def truncated(self) -> bool:
        return self.inner_cutoff is not None

    def mean_measure(self) -> np.ndarray:
        """Un-normalized first moment ``integral z nu(dz)`` over the band."""
        return self.rate * self.sampler.mean


@dataclass(frozen=True)
class LevyModel:
    """Jump noise split at ``split_radius`` into small and big bands.

    Either band may be absent (None), meaning zero intensity there.  Band
    supports must respect the split: small marks in ``(0, split_radius]``,
    big marks in ``(split_radius, inf)``, and neither contains the origin.
    ``beta_moment_v`` optionally declares ``nu(1 v |z|^beta ; V)`` when the
    caller has it in closed form; see :func:`v_beta_moment`.
    """

    dim: int
    split_radius: float
    small: Optional[LevyBand] = None
    big: Optional[LevyBand] = None
    beta_moment_v: Optional[float] = None

    def __post_init__(self):
        problems = []
        if self.dim < 1:
            problems.append(f"dim must be >= 1, got {self.dim}")
        if not (self.split_radius > 0 and math.isfinite(self.split_radius)):
            problems.append(f"split radius must be finite and > 0, got {self.split_radius}")
        tol = 1e-12
        if self.small is not None and self.small.rate > 0:
            s = self.small.sampler
            if s.dim != self.dim:
                problems.append(f"small-band sampler dim {s.dim} != model dim {self.dim}")
            if s.r_hi > self.split_radius * (1 + tol):
                problems.append(
                    f"small-band support [{s.r_lo}, {s.r_hi}] exceeds split radius {self.split_radius}"
                )
        if self.big is not None and self.big.rate > 0:
            s = self.big.sampler
            if s.dim != self.dim:
                problems.append(f"big-band sampler dim {s.dim} != model dim {self.dim}")
            if s.r_lo < self.split_radius * (1 - tol):
                problems.append(
                    f"big-band support starts at {s.r_lo}, inside split radius {self.split_radius}"
                )
        if problems:
            raise ConfigurationError(problems)

    @property
    def small_rate(self) -> float:
        return self.small.rate if self.small is not None else 0.0

    @property
    def big_rate(self) -> float:
        return self.big.rate if self.big is not None else 0.0

    def small_mean_measure(self) -> np.ndarray:
        """``integral z nu(dz)`` over the small band (zero if absent)."""
        if self.small is None:
            return np.zeros(self.dim)
        return self.small.mean_measure()

    def band(self, name: str) -> Optional[LevyBand]:
        if name == "U":
            return self.small
        if name == "V":
            return self.big
        raise ConfigurationError(f"band must be 'U' or 'V', got {name!r}")


def no_noise(dim: int) -> LevyModel:
    """Jump-free model placeholder (both bands absent)."""
    return LevyModel(dim=dim, split_radius=1.0)


# ---------------------------------------------------------------------------
# event sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JumpEvent:
    """One realized jump: arrival time, mark, and band tag ('U' or 'V')."""

    time: float
    mark: np.ndarray
    band: str


def _draw_poisson_events(gen, t0, t1, band, require_interior=False):
    """Events of one band on ``(t0, t1]`` from a live generator.

    Count is Poisson(rate * (t1 - t0)); given the count, arrival times are
    uniform order statistics on the interval, which realizes exactly the
    homogeneous Poisson process with exponential gaps.  Draw order is
    fixed (count, times, marks) so replaying the generator replays the
    events.  Returns (times, marks) arrays, possibly empty.
    """
    dt = t1 - t0
    if band is None or band.rate == 0.0 or dt <= 0.0:
        return np.empty(0), np.empty((0, 0))
    count = int(gen.poisson(band.rate * dt))
    if count == 0:
        return np.empty(0), np.empty((0, band.sampler.dim))
    times = np.sort(gen.uniform(t0, t1, count))
    if require_interior:
        # open interval on the left: shift a (probability-zero) tie off t0
        times[times == t0] = np.nextafter(t0, t1)
    # distinct arrival times, also a probability-zero event under ties
    for i in range(1, count):
        if times[i] <= times[i - 1]:
            times[i] = np.nextafter(times[i - 1], math.inf)
    marks = band.sampler.draw(gen, count)
    return times, marks


def sample_big_jumps(stream: NoiseStream, horizon: float, model: LevyModel) -> list[JumpEvent]:
    """Big-band events on ``(0, horizon]`` for one stream.

    Deterministic in the stream address: repeated calls return the same
    list.  With an absent or zero-rate big band the list is empty and the
    stream is left untouched.
    """
    if horizon < 0:
        raise ConfigurationError(f"horizon must be >= 0, got {horizon}")
    if model.big is None or model.big.rate == 0.0:
        return []
    gen = stream.generator()
    times, marks = _draw_poisson_events(gen, 0.0, horizon, model.big, require_interior=True)
    return [JumpEvent(float(t), m, "V") for t, m in zip(times, marks)]


@dataclass(frozen=True)
class SmallJumpSample:
    """Small-band events on an interval plus the raw mark compensator.

    ``compensator`` is ``(t1 - t0) * integral z nu(dz; U)``, the quantity a
    linear-in-z integrand subtracts; nonlinear integrands instead
    compensate with ``dt * nu(f(x, mu, .); U)`` via :func:`nu_expectation`.
    """

    events: list[JumpEvent]
    compensator: np.ndarray


def sample_small_jumps(stream: NoiseStream, interval, model: LevyModel) -> SmallJumpSample:
    """Small-band events and the mark compensator on ``(t0, t1]``."""
    t0, t1 = float(interval[0]), float(interval[1])
    if t1 < t0:
        raise ConfigurationError(f"interval must have t1 >= t0, got ({t0}, {t1})")
    comp = (t1 - t0) * model.small_mean_measure()
    if model.small is None or model.small.rate == 0.0:
        return SmallJumpSample([], comp)
    gen = stream.generator()
    times, marks = _draw_poisson_events(gen, t0, t1, model.small, require_interior=True)
    events = [JumpEvent(float(t), m, "U") for t, m in zip(times, marks)]
    return SmallJumpSample(events, comp)


# ---------------------------------------------------------------------------
# nu-integrals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NuEstimate:
    """Value and standard error of a band integral ``nu(h ; band)``."""

    value: float
    se: float


_DEFAULT_NU_STREAM = NoiseStream(seed=0, experiment=EXP_AUX, replica=0, particle=0, layer=Layer.AUX)


def nu_expectation(
    model: LevyModel,
    band: str,
    integrand: Callable[[np.ndarray], np.ndarray],
    *,
    exact: Optional[float] = None,
    samples: int = 10**6,
    stream: Optional[NoiseStream] = None,
) -> NuEstimate:
    """Evaluate ``nu(integrand ; band) = rate * E[integrand(Z)]``.

    Parameters
    ----------
    band : str
        'U' (small) or 'V' (big).
    integrand : callable
        Vectorized map from a ``(k, dim)`` mark array to ``(k,)`` values.
    exact : float, optional
        A registered closed form for the whole integral; when given it is
        returned with zero standard error and nothing is sampled.
    samples, stream
        Monte Carlo sample count and stream; the default stream is a
        pinned auxiliary address so repeated calls agree bit for bit.

    Raises
    ------
    IntegrabilityError
        If the estimate (or the declared exact value) is non-finite.
    """
    if exact is not None:
        if not math.isfinite(exact):
            raise IntegrabilityError(f"declared integral over band {band} is non-finite: {exact}")
        return NuEstimate(float(exact), 0.0)
    b = model.band(band)
    if b is None or b.rate == 0.0:
        return NuEstimate(0.0, 0.0)
    gen = (stream or _DEFAULT_NU_STREAM).generator()
    marks = b.sampler.draw(gen, samples)
    vals = np.asarray(integrand(marks), dtype=float)
    if vals.shape != (samples,):
        raise ConfigurationError(
            f"integrand must map (k, {model.dim}) marks to (k,) values, got shape {vals.shape}"
        )
    value = b.rate * float(vals.mean())
    if not math.isfinite(value):
        raise IntegrabilityError(f"nu-integral over band {band} is non-finite")
    se = float(b.rate * vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf
    return NuEstimate(value, se)


def v_beta_moment(model: LevyModel, beta: float, *, samples: int = 200_000) -> float:
    """``nu(1 v |z|^beta ; V)``, the big-band integrability functional.

    Uses the declared ``model.beta_moment_v`` when present, a sampler
    closed form when the big band lies outside the unit ball (there
    ``1 v |z|^beta = |z|^beta``), and pinned-stream Monte Carlo otherwise.
    """
    if not 1.0 <= beta <= 2.0:
        raise ConfigurationError(f"beta must lie in [1, 2], got {beta}")
    if model.beta_moment_v is not None:
        if not math.isfinite(model.beta_moment_v):
            raise IntegrabilityError("declared big-band beta moment is non-finite")
        return float(model.beta_moment_v)
    if model.big is None or model.big.rate == 0.0:
        return 0.0
    s = model.big.sampler
    if s.r_lo >= 1.0:
        closed = s.abs_moment(beta)
        if closed is not None:
            return model.big.rate * float(closed)
    est = nu_expectation(
        model, "V", lambda z: np.maximum(1.0, np.sqrt((z * z).sum(axis=1)) ** beta), samples=samples
    )
    return est.value
