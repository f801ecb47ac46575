"""Exception types shared across the package."""

from __future__ import annotations


class ConfigurationError(ValueError):
    """Raised on invalid model/experiment configuration.

    Carries ``violations``, the full list of problems found, so callers can
    report every issue at once instead of fixing them one by one.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class IntegrabilityError(ArithmeticError):
    """A jump-measure integral came back non-finite."""


class DivergenceError(RuntimeError):
    """A simulated state left the admissible region.

    Attributes
    ----------
    time : float
        First grid time at which the blow-up was detected.
    particle : int
        Index of the offending particle (0 for single-path runs).
    """

    def __init__(self, time, particle, magnitude):
        self.time = float(time)
        self.particle = int(particle)
        self.magnitude = float(magnitude)
        super().__init__(
            f"state diverged at t={self.time:.6g} "
            f"(particle {self.particle}, |x|={self.magnitude:.3e})"
        )


class NonConvergenceError(RuntimeError):
    """Fixed-point iteration exhausted its iteration budget.

    The ``trace`` attribute holds the successive-iterate distances observed
    before giving up.
    """

    def __init__(self, trace, tol):
        self.trace = list(trace)
        self.tol = float(tol)
        super().__init__(
            f"no fixed point within {len(self.trace)} iterations "
            f"(last distance {self.trace[-1]:.3e}, tol {self.tol:.3e})"
        )
