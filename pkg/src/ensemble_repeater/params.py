"""Shared parameter and state-weight types.

Units are fixed throughout the package: distances in km, times in seconds,
rates in Hz. The readout weight is stored as ``alpha2`` (the quoted quantity);
``beta2`` is always derived so that ``alpha2 + beta2 == 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

#: Upper bound on alpha2 * eta; keeps 1 - alpha2*eta away from cancellation.
MAX_ALPHA2_ETA = 0.99

#: Tolerance used for the normalization / stationarity invariants.
WEIGHT_TOL = 1e-12


class ParameterError(ValueError):
    """A parameter is outside its physical range.

    The offending field name is available as ``field``.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _check_open_unit(name, value):
    if not (0.0 < value < 1.0):
        raise ParameterError(name, f"must lie in (0, 1), got {value!r}")


def _check_efficiency(name, value):
    # zero efficiency is rejected: nothing downstream is finite
    if not (0.0 < value <= 1.0):
        raise ParameterError(name, f"must lie in (0, 1], got {value!r}")


def _check_positive(name, value):
    if not (value > 0.0 and math.isfinite(value)):
        raise ParameterError(name, f"must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class RepeaterParams:
    """Physical and protocol parameters for one repeater configuration.

    Construction validates every field and raises :class:`ParameterError`
    naming the first field found out of range.

    Parameters
    ----------
    alpha2 : float
        Fraction of each stored spin excitation converted to a photon by the
        partial read pulse, in (0, 1).
    eta_m, eta_d : float
        Memory recall and (photon-number resolving) detector efficiencies.
    p : float
        Stokes emission probability per write attempt.
    r : float
        Write-attempt repetition rate in Hz.
    L_total : float
        End-to-end distance in km.
    n : int
        Nesting level; the chain has ``2**n`` elementary links.
    L_att : float
        Fiber attenuation length in km (22 km is 0.2 dB/km).
    c_fiber : float
        Photon velocity in fiber, m/s.
    include_source_prep : bool
        Add the local pair preparation time to every link attempt cycle.
    """

    alpha2: float = 0.2
    eta_m: float = 0.9
    eta_d: float = 0.9
    p: float = 6e-3
    r: float = 60e6
    L_total: float = 1000.0
    n: int = 4
    L_att: float = 22.0
    c_fiber: float = 2e8
    include_source_prep: bool = False

    def __post_init__(self):
        _check_open_unit("alpha2", self.alpha2)
        _check_efficiency("eta_m", self.eta_m)
        _check_efficiency("eta_d", self.eta_d)
        _check_open_unit("p", self.p)
        _check_positive("r", self.r)
        _check_positive("L_total", self.L_total)
        _check_positive("L_att", self.L_att)
        _check_positive("c_fiber", self.c_fiber)
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 0:
            raise ParameterError("n", f"must be a non-negative integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if not self.L0 > 0.0:
            raise ParameterError("n", f"elementary link length vanishes for n={self.n}")
        if self.alpha2 * self.eta > MAX_ALPHA2_ETA:
            raise ParameterError(
                "alpha2", f"alpha2*eta must not exceed {MAX_ALPHA2_ETA}, got {self.alpha2 * self.eta!r}"
            )

    @property
    def beta2(self) -> float:
        return 1.0 - self.alpha2

    @property
    def eta(self) -> float:
        """Combined memory and detector efficiency."""
        return self.eta_m * self.eta_d

    @property
    def links(self) -> int:
        return 2**self.n

    @property
    def L0(self) -> float:
        """Elementary link length in km."""
        return math.ldexp(self.L_total, -self.n)

    @property
    def eta_t(self) -> float:
        """Fiber transmission over half an elementary link."""
        return math.exp(-self.L0 / (2.0 * self.L_att))

    @property
    def link_delay(self) -> float:
        """One-way light travel time over an elementary link, seconds."""
        return self.L0 * 1e3 / self.c_fiber

    def replace(self, **changes) -> "RepeaterParams":
        """Return a validated copy with some fields changed."""
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return RepeaterParams(**values)


def validate(**fields) -> RepeaterParams:
    """Build a :class:`RepeaterParams` from raw values, raising on bad input."""
    return RepeaterParams(**fields)


@dataclass(frozen=True)
class StateWeights:
    """Weights of the conditionally prepared mixed state.

    ``c2`` multiplies the entangled two-excitation projector, ``c1`` each of
    the four single-spin-wave projectors and ``c0`` the vacuum, so that
    ``c2 + 4*c1 + c0 == 1``. Weights flagged ``source=True`` came from the
    pair-source formulas and must also satisfy ``c0*c2 == 4*c1**2``.
    """

    c2: float
    c1: float
    c0: float
    source: bool = field(default=False, compare=False)

    def __post_init__(self):
        for name in ("c2", "c1", "c0"):
            value = getattr(self, name)
            if not (value >= 0.0 and math.isfinite(value)):
                raise ValueError(f"weight {name} must be non-negative, got {value!r}")
        if abs(self.total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights not normalized: c2 + 4*c1 + c0 = {self.total!r}")
        if self.source and abs(self.stationarity_defect) > WEIGHT_TOL:
            raise ValueError(f"source weights not stationary: c0*c2 - 4*c1^2 = {self.stationarity_defect!r}")

    @classmethod
    def normalized(cls, c2, c1, c0) -> "StateWeights":
        """Rescale arbitrary non-negative weights onto ``c2 + 4*c1 + c0 = 1``."""
        total = c2 + 4.0 * c1 + c0
        if total <= 0.0:
            raise ValueError("at least one weight must be positive")
        return cls(c2 / total, c1 / total, c0 / total)

    @property
    def total(self) -> float:
        return self.c2 + 4.0 * self.c1 + self.c0

    @property
    def stationarity_defect(self) -> float:
        return self.c0 * self.c2 - 4.0 * self.c1**2

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.c2, self.c1, self.c0)


IDEAL_WEIGHTS = StateWeights(1.0, 0.0, 0.0, source=True)


@dataclass(frozen=True)
class RateBreakdown:
    """Every intermediate result of the closed-form rate model for one parameter set."""

    T_charge: float
    T_source: float
    P_s_eta: float
    weights: StateWeights
    P0: float
    Pi: float
    Ppr: float
    T_tot_product: float
    T_tot_closed: float
    F_final: float | None = None
