"""Feedback-linearizing control loop around a trained readout model.

The control law cancels the learned unforced dynamics and applies
proportional feedback on the tracking error:

    u_i = w_u^-1 [ x_des_{i+1} - Fhat(X_i) + K * e_i ],   e_i = x_i - x_des_i

With a perfect model and no disturbance the closed-loop error obeys
e_{i+1} = K e_i, stable for |K| < 1.
"""

from __future__ import annotations

import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ControlError
from .ngrc import MIN_CONTROL_EFFECTIVENESS, NgrcModel, predict_unforced
from .plant import DiscretePlant, PlantState


class TargetTrajectory(ABC):
    """Desired controlled-output value for every iteration index i >= 0."""

    @abstractmethod
    def value(self, i: int) -> float: ...


@dataclass(frozen=True)
class ConstantTarget(TargetTrajectory):
    x_des: float

    def value(self, i: int) -> float:
        return self.x_des


@dataclass(frozen=True)
class PeriodicTarget(TargetTrajectory):
    """Cycles through ``values`` one entry per iteration, offset by ``phase``."""

    values: tuple[float, ...]
    phase: int = 0

    def __post_init__(self):
        if len(self.values) == 0:
            raise ConfigurationError("periodic target needs at least one value")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def value(self, i: int) -> float:
        return self.values[(i + self.phase) % len(self.values)]


@dataclass(frozen=True)
class PiecewiseTarget(TargetTrajectory):
    """Holds each level from its start iteration until the next breakpoint.

    ``points`` is a list of (start_iteration, level); the first start must
    be 0 so the target is defined everywhere.
    """

    points: tuple[tuple[int, float], ...]

    def __post_init__(self):
        pts = tuple((int(i), float(v)) for i, v in self.points)
        if not pts or pts[0][0] != 0:
            raise ConfigurationError("piecewise target must start at iteration 0")
        starts = [i for i, _ in pts]
        if starts != sorted(set(starts)):
            raise ConfigurationError("piecewise breakpoints must strictly increase")
        object.__setattr__(self, "points", pts)

    def value(self, i: int) -> float:
        level = self.points[0][1]
        for start, v in self.points:
            if start > i:
                break
            level = v
        return level


@dataclass(frozen=True)
class ControllerConfig:
    """Closed-loop gain, target trajectory, and the model driving the law.

    The loop is stable for |K| < 1; larger gains are allowed but flagged
    with a warning since the tracking error then grows geometrically.
    """

    k: float
    target: TargetTrajectory
    model: NgrcModel

    def __post_init__(self):
        if abs(self.k) >= 1.0:
            warnings.warn(
                f"closed-loop gain |K|={abs(self.k):g} >= 1 is outside the "
                "stable range",
                stacklevel=2,
            )


def tracking_error(y: float, y_des: float) -> float:
    """Difference between actual and desired output."""
    return y - y_des


def control_signal(
    model: NgrcModel, x_obs, y_des_next: float, e: float, k: float
) -> float:
    """Control input canceling the learned dynamics and feeding back K*e.

    Returns a scalar for single-input models; multi-input models get the
    general matrix solve.
    """
    fhat = predict_unforced(model, x_obs)
    if model.config.d == 1:
        w = float(model.w_u[0, 0])
        if not abs(w) > MIN_CONTROL_EFFECTIVENESS:
            raise ControlError(
                f"control effectiveness {w:g} is below the invertibility threshold"
            )
        return (float(y_des_next) - float(fhat[0]) + k * e) / w
    rhs = np.atleast_1d(y_des_next) - fhat + np.asarray(k) @ np.atleast_1d(e)
    if np.linalg.cond(model.w_u) > 1.0 / MIN_CONTROL_EFFECTIVENESS:
        raise ControlError("control effectiveness matrix is not invertible")
    return np.linalg.solve(model.w_u, rhs)


@dataclass
class ControlTrace:
    """Per-iteration record of one closed-loop run.

    Row i holds the state at iteration i, the control computed there, the
    target and the tracking error; the final row's control is computed but
    never applied. Escaped runs are truncated at the escape row (whose
    control is undefined).
    """

    iteration: np.ndarray
    observables: np.ndarray
    u: np.ndarray
    x_des: np.ndarray
    e: np.ndarray
    escaped: bool = False
    escaped_at: int | None = None
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.iteration.size

    @property
    def x(self) -> np.ndarray:
        return self.observables[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.observables[:, 1]

    def to_csv(self) -> str:
        """Rows as ``iter,x,y,u,x_des,e`` at full double precision."""
        lines = ["iter,x,y,u,x_des,e"]
        for i in range(len(self)):
            lines.append(
                "%d,%s,%s,%s,%s,%s"
                % (
                    self.iteration[i],
                    format(self.x[i], ".17g"),
                    format(self.y[i], ".17g"),
                    format(self.u[i], ".17g"),
                    format(self.x_des[i], ".17g"),
                    format(self.e[i], ".17g"),
                )
            )
        return "\n".join(lines) + "\n"


def run_closed_loop(
    plant: DiscretePlant,
    controller: ControllerConfig,
    s0: PlantState,
    n_iters: int,
    rng: np.random.Generator | None = None,
) -> ControlTrace:
    """Drive the plant for ``n_iters`` steps under the control law.

    Control is active from iteration 0; there is no waiting for a close
    approach to the target. The trace gains one row per visited state
    (n_iters + 1 rows for a full run). If the plant escapes, the trace is
    truncated at the escape row and marked.
    """
    if n_iters < 1:
        raise ConfigurationError(f"n_iters must be >= 1, got {n_iters}")
    model, target, k = controller.model, controller.target, controller.k
    rows_i: list[int] = []
    rows_obs: list[np.ndarray] = []
    rows_u: list[float] = []
    rows_xd: list[float] = []
    rows_e: list[float] = []
    escaped = False
    escaped_at: int | None = None
    s = s0
    for i in range(n_iters + 1):
        obs = plant.observe(s)
        x_des_i = target.value(i)
        e_i = tracking_error(float(obs[0]), x_des_i)
        if plant.escaped(s):
            rows_i.append(i)
            rows_obs.append(obs)
            rows_u.append(float("nan"))
            rows_xd.append(x_des_i)
            rows_e.append(e_i)
            escaped = True
            escaped_at = i
            break
        u_i = control_signal(model, obs, target.value(i + 1), e_i, k)
        rows_i.append(i)
        rows_obs.append(obs)
        rows_u.append(float(u_i))
        rows_xd.append(x_des_i)
        rows_e.append(e_i)
        if i < n_iters:
            s = plant.step(s, float(u_i), rng)
    return ControlTrace(
        iteration=np.array(rows_i, dtype=int),
        observables=np.array(rows_obs),
        u=np.array(rows_u),
        x_des=np.array(rows_xd),
        e=np.array(rows_e),
        escaped=escaped,
        escaped_at=escaped_at,
        metadata={"k": k},
    )
