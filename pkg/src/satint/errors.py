"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class SatIntError(Exception):
    """Base class for domain errors (CLI exit status 1)."""


class InvalidArgument(SatIntError, ValueError):
    pass


class Diverged(SatIntError):
    """A simulated trajectory exceeded the blow-up guard."""

    def __init__(self, escape_time: float, message: str | None = None):
        self.escape_time = float(escape_time)
        super().__init__(message or f"trajectory diverged near t={self.escape_time:.6g}")


class EquilibriumNotFound(SatIntError):
    def __init__(self, u0: float, residual: float):
        self.u0 = float(u0)
        self.residual = float(residual)
        super().__init__(
            f"no equilibrium found for u0={self.u0:.6g} (residual {self.residual:.3g}); "
            "consider narrowing [u_min, u_max]"
        )


class Assumption2Violated(SatIntError):
    """The steady-state map G is not strictly increasing on the grid."""

    def __init__(self, interval: tuple[float, float], delta_g: float):
        self.interval = (float(interval[0]), float(interval[1]))
        self.delta_g = float(delta_g)
        super().__init__(
            f"steady-state map not increasing on [{self.interval[0]:.6g}, {self.interval[1]:.6g}] "
            f"(dG={self.delta_g:.3g})"
        )


class ReferenceOutOfRange(SatIntError, ValueError):
    def __init__(self, r: float, y_min: float, y_max: float):
        self.r, self.y_min, self.y_max = float(r), float(y_min), float(y_max)
        super().__init__(
            f"reference r={self.r:.6g} outside the open interval ({self.y_min:.6g}, {self.y_max:.6g})"
        )


class NotExponentiallyStable(SatIntError):
    def __init__(self, u0: float, abscissa: float):
        self.u0 = float(u0)
        self.abscissa = float(abscissa)
        super().__init__(
            f"linearization at u0={self.u0:.6g} has spectral abscissa {self.abscissa:.6g} >= 0"
        )


class CertificationFailed(SatIntError):
    def __init__(self, message: str, worst_probe=None):
        self.worst_probe = worst_probe
        super().__init__(message)


class SelectionFailed(SatIntError):
    def __init__(self, message: str, failing_sample=None):
        self.failing_sample = failing_sample
        super().__init__(message)


class UsageError(Exception):
    """Bad command-line input (CLI exit status 2)."""

    def __init__(self, flag: str, message: str):
        self.flag = flag
        super().__init__(f"{flag}: {message}")
