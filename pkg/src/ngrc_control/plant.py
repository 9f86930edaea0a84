"""Controlled Henon map: stepping, invariant sets, and escape detection.

The map iterates

    x' = 1 - a*x^2 + y + g*u + d_x
    y' = b*x + d_y

with additive control u on the x variable and optional per-step Gaussian
noise (d_x, d_y). The classic chaotic regime is a=1.4, b=0.3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Protocol, runtime_checkable

import numpy as np

from .errors import ConfigurationError, DomainError, EscapedStateError

# States beyond this box are treated as diverging: the attractor fits well
# inside |x| <= 1.5, |y| <= 0.45, so the margin is generous.
ESCAPE_BOUND = 3.0


class PlantState(NamedTuple):
    """One (x, y) point of the map."""

    x: float
    y: float

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y)


@dataclass(frozen=True)
class HenonParams:
    """Map coefficients; g scales the control input."""

    a: float = 1.4
    b: float = 0.3
    g: float = 1.0

    def __post_init__(self):
        if self.a <= 0:
            raise DomainError(f"map coefficient a must be positive, got {self.a}")


@dataclass(frozen=True)
class NoiseSpec:
    """Per-step additive noise, applied independently to both variables."""

    sigma_d: float = 0.0

    def __post_init__(self):
        if self.sigma_d < 0:
            raise DomainError(f"noise level must be non-negative, got {self.sigma_d}")


def has_escaped(s: PlantState) -> bool:
    """True when the state is non-finite or outside the bounded region."""
    return (not s.is_finite()) or abs(s.x) > ESCAPE_BOUND or abs(s.y) > ESCAPE_BOUND


def henon_step(
    s: PlantState,
    u: float,
    params: HenonParams,
    noise: NoiseSpec | None = None,
    rng: np.random.Generator | None = None,
) -> PlantState:
    """Advance the map one iteration under control input u.

    Noise draws (d_x first, then d_y) are taken from ``rng`` only when
    sigma_d > 0, so the noiseless map consumes no random state and is
    bit-exact for equal inputs.
    """
    if not s.is_finite():
        raise EscapedStateError(f"cannot step non-finite state {s}")
    d_x = d_y = 0.0
    if noise is not None and noise.sigma_d > 0.0:
        if rng is None:
            raise ConfigurationError("a seeded rng is required when sigma_d > 0")
        d_x = rng.normal(0.0, noise.sigma_d)
        d_y = rng.normal(0.0, noise.sigma_d)
    x, y = s.x, s.y
    return PlantState(
        1.0 - params.a * x * x + y + params.g * u + d_x,
        params.b * x + d_y,
    )


def fixed_points(params: HenonParams) -> tuple[PlantState, PlantState]:
    """Both unstable fixed points, ordered by descending x.

    They are the roots of a*x^2 + (1-b)*x - 1 = 0 with y = b*x. For the
    canonical coefficients the first lies inside the trapping region and
    the second outside it.
    """
    disc = (1.0 - params.b) ** 2 + 4.0 * params.a
    if disc <= 0:
        raise DomainError("fixed points are not real for these coefficients")
    root = math.sqrt(disc)
    x_hi = (-(1.0 - params.b) + root) / (2.0 * params.a)
    x_lo = (-(1.0 - params.b) - root) / (2.0 * params.a)
    return (
        PlantState(x_hi, params.b * x_hi),
        PlantState(x_lo, params.b * x_lo),
    )


def period4_orbit() -> tuple[PlantState, PlantState, PlantState, PlantState]:
    """The 4-cycle P1 -> P2 -> P3 -> P4 of the canonical map (a=1.4, b=0.3)."""
    return (
        PlantState(0.638194, -0.21203),
        PlantState(0.217762, 0.191458),
        PlantState(1.12507, 0.0653285),
        PlantState(-0.706767, 0.337521),
    )


@runtime_checkable
class DiscretePlant(Protocol):
    """Minimal contract a discrete-time plant offers the controller.

    ``step`` must be deterministic given (state, u, rng draw); the
    controlled output is the first entry of ``observe``.
    """

    def step(
        self, state: PlantState, u: float, rng: np.random.Generator | None
    ) -> PlantState: ...

    def observe(self, state: PlantState) -> np.ndarray: ...

    def escaped(self, state: PlantState) -> bool: ...


@dataclass(frozen=True)
class HenonPlant:
    """Henon map bound to fixed coefficients and a noise level."""

    params: HenonParams = field(default_factory=HenonParams)
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def step(
        self, state: PlantState, u: float, rng: np.random.Generator | None = None
    ) -> PlantState:
        return henon_step(state, u, self.params, self.noise, rng)

    def observe(self, state: PlantState) -> np.ndarray:
        return np.array([state.x, state.y])

    def escaped(self, state: PlantState) -> bool:
        return has_escaped(state)
