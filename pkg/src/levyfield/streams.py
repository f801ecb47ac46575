"""Counter-based random streams.

Every random draw in the package is made from a stream addressed by
``(seed, experiment, replica, particle, layer)``.  The address is packed
into the 128-bit Philox key (seed in one word, the remaining ids
bit-packed into the other), so distinct addresses get provably disjoint
streams: no draw order, thread count, or job schedule can make two
streams collide or interleave.  Reproducing a run only requires the seed
and the address scheme, never the execution order.

Field widths (bits): experiment 16, replica 16, particle 28, layer 4.
Addresses outside those bounds are configuration errors.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ConfigurationError

_EXPERIMENT_BITS = 16
_REPLICA_BITS = 16
_PARTICLE_BITS = 28
_LAYER_BITS = 4

MAX_EXPERIMENT = (1 << _EXPERIMENT_BITS) - 1
MAX_REPLICA = (1 << _REPLICA_BITS) - 1
MAX_PARTICLE = (1 << _PARTICLE_BITS) - 1


class Layer(IntEnum):
    """Independent noise roles a single particle can consume."""

    INIT = 0          # initial condition draw
    SMALL = 1         # compensated small-jump band of the idiosyncratic noise
    BIG = 2           # big-jump band of the idiosyncratic noise
    COMMON_SMALL = 3  # compensated small-jump band of the common noise
    COMMON_BIG = 4    # big-jump band of the common noise
    AUX = 5           # everything else: checker trials, projections, MC integrals


# Reserved experiment ids.  Orchestrators use these so that e.g. the
# reference fixed-point run can never share a stream with the systems
# that later consume its flow.
EXP_MAIN = 0
EXP_REFERENCE = 1
EXP_FRESH_COPIES = 2
EXP_AUX = 3


@dataclass(frozen=True)
class NoiseStream:
    """Address of one independent random stream.

    Parameters
    ----------
    seed : int
        Experiment master seed, any value in ``[0, 2**64)``.
    experiment, replica, particle : int
        Stream coordinates; bounds are 2**16, 2**16, 2**28.
    layer : Layer
        Which noise role this stream feeds.
    """

    seed: int
    experiment: int = 0
    replica: int = 0
    particle: int = 0
    layer: Layer = Layer.AUX

    def __post_init__(self):
        problems = []
        if not 0 <= self.seed < 1 << 64:
            problems.append(f"seed {self.seed} outside [0, 2**64)")
        if not 0 <= self.experiment <= MAX_EXPERIMENT:
            problems.append(f"experiment {self.experiment} outside [0, {MAX_EXPERIMENT}]")
        if not 0 <= self.replica <= MAX_REPLICA:
            problems.append(f"replica {self.replica} outside [0, {MAX_REPLICA}]")
        if not 0 <= self.particle <= MAX_PARTICLE:
            problems.append(f"particle {self.particle} outside [0, {MAX_PARTICLE}]")
        if not 0 <= int(self.layer) < 1 << _LAYER_BITS:
            problems.append(f"layer {self.layer} outside [0, {1 << _LAYER_BITS})")
        if problems:
            raise ConfigurationError(problems)

    def packed_id(self) -> int:
        """Bit-pack (experiment, replica, particle, layer) into one word."""
        word = self.experiment
        word = (word << _REPLICA_BITS) | self.replica
        word = (word << _PARTICLE_BITS) | self.particle
        word = (word << _LAYER_BITS) | int(self.layer)
        return word

    def generator(self) -> np.random.Generator:
        """Fresh generator for this address; same address, same draws."""
        key = np.array([self.seed, self.packed_id()], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def with_(self, **kwargs) -> "NoiseStream":
        """Copy with some coordinates replaced."""
        fields = {
            "seed": self.seed,
            "experiment": self.experiment,
            "replica": self.replica,
            "particle": self.particle,
            "layer": self.layer,
        }
        fields.update(kwargs)
        return NoiseStream(**fields)


@dataclass(frozen=True)
class StreamContext:
    """Partial address shared by all particles of one run.

    Drivers hold one of these and mint per-particle streams with
    :meth:`stream`; the (experiment, replica) block identifies the run.
    """

    seed: int
    experiment: int = EXP_MAIN
    replica: int = 0

    def stream(self, particle: int, layer: Layer) -> NoiseStream:
        return NoiseStream(self.seed, self.experiment, self.replica, particle, layer)

    def generator(self, particle: int, layer: Layer) -> np.random.Generator:
        return self.stream(particle, layer).generator()

    def with_(self, **kwargs) -> "StreamContext":
        fields = {"seed": self.seed, "experiment": self.experiment, "replica": self.replica}
        fields.update(kwargs)
        return StreamContext(**fields)
