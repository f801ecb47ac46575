"""Initial-condition samplers.

A sampler is a callable ``(generator) -> (d,) point``; every particle
draws once from its own INIT-layer stream, so initial conditions inherit
the package-wide stream discipline (exchangeable, schedule-independent).
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ConfigurationError

InitialSampler = Callable[[np.random.Generator], np.ndarray]


def normal_initial(dim: int, mean=0.0, std: float = 1.0) -> InitialSampler:
    mean_vec = np.broadcast_to(np.asarray(mean, dtype=float), (dim,)).copy()
    if std < 0:
        raise ConfigurationError(f"std must be >= 0, got {std}")

    def draw(gen):
        return mean_vec + std * gen.standard_normal(dim)

    return draw


def point_initial(value) -> InitialSampler:
    point = np.atleast_1d(np.asarray(value, dtype=float)).copy()

    def draw(gen):
        return point.copy()

    return draw


def uniform_box_initial(dim: int, lo=-1.0, hi=1.0) -> InitialSampler:
    lo_vec = np.broadcast_to(np.asarray(lo, dtype=float), (dim,)).copy()
    hi_vec = np.broadcast_to(np.asarray(hi, dtype=float), (dim,)).copy()
    if np.any(hi_vec <= lo_vec):
        raise ConfigurationError(f"uniform box needs lo < hi per coordinate, got {lo}, {hi}")

    def draw(gen):
        return lo_vec + (hi_vec - lo_vec) * gen.random(dim)

    return draw


INITIAL_SAMPLERS: dict[str, Callable[..., InitialSampler]] = {
    "normal": normal_initial,
    "point": lambda dim, value=0.0: point_initial(np.broadcast_to(np.asarray(value, dtype=float), (dim,))),
    "uniform_box": uniform_box_initial,
}
