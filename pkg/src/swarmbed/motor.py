"""Per-wheel PID velocity loop around a first-order motor model."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import InvalidInputError, InvalidIntervalError


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.1
    ki: float = 1.0
    kd: float = 0.0
    integral_limit: float = 1.0
    output_limit: float = 1.0

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0:
            raise InvalidInputError("PID gains must be non-negative")
        if not (self.integral_limit > 0 and 0 < self.output_limit <= 1):
            raise InvalidInputError("integral_limit must be > 0 and output_limit in (0, 1]")


@dataclass(frozen=True)
class MotorPlantParams:
    """First-order wheel model: tau * dw/dt = duty * max_speed - w."""

    time_constant_s: float = 0.1
    max_speed_radps: float = 17.5
    discretization: str = "exact"  # or "euler"

    def __post_init__(self):
        if not self.time_constant_s > 0:
            raise InvalidInputError("time_constant_s must be positive")
        if not self.max_speed_radps > 0:
            raise InvalidInputError("max_speed_radps must be positive")
        if self.discretization not in ("exact", "euler"):
            raise InvalidInputError(f"unknown discretization {self.discretization!r}")


@dataclass(frozen=True)
class MotorState:
    wheel_speed_radps: float = 0.0
    duty: float = 0.0
    integral_term: float = 0.0
    # previous measurement, for derivative-on-measurement
    last_measured_radps: float | None = None


def _clamp(value: float, limit: float) -> float:
    return max(-limit, min(limit, value))


def pid_step(state: MotorState, setpoint_radps: float, measured_radps: float,
             dt: float, gains: PidGains) -> MotorState:
    """One positional PID update; returns the state with the new duty.

    The integral is clamped to +-integral_limit and the derivative acts on
    the measurement so setpoint steps do not kick the output.
    """
    if not dt > 0:
        raise InvalidIntervalError(f"dt must be positive, got {dt!r}")
    error = setpoint_radps - measured_radps
    integral = _clamp(state.integral_term + error * dt, gains.integral_limit)
    if state.last_measured_radps is None:
        derivative = 0.0
    else:
        derivative = -(measured_radps - state.last_measured_radps) / dt
    raw = gains.kp * error + gains.ki * integral + gains.kd * derivative
    duty = _clamp(raw, gains.output_limit)
    return replace(state, duty=duty, integral_term=integral, last_measured_radps=measured_radps)


def motor_plant_step(state: MotorState, duty: float, dt: float,
                     plant: MotorPlantParams) -> MotorState:
    """Advance the wheel speed by ``dt`` under a constant ``duty``."""
    if not dt > 0:
        raise InvalidIntervalError(f"dt must be positive, got {dt!r}")
    duty = _clamp(duty, 1.0)
    target = duty * plant.max_speed_radps
    w = state.wheel_speed_radps
    if plant.discretization == "exact":
        w_next = target + (w - target) * math.exp(-dt / plant.time_constant_s)
    else:
        w_next = w + dt / plant.time_constant_s * (target - w)
    return replace(state, wheel_speed_radps=w_next, duty=duty)


def plant_rotation(speed_radps: float, duty: float, dt: float, plant: MotorPlantParams) -> float:
    """Wheel angle turned during one plant step starting at ``speed_radps``.

    Matches the discretization of :func:`motor_plant_step`: the exact form
    integrates the exponential response, Euler holds the start speed.
    """
    duty = _clamp(duty, 1.0)
    if plant.discretization == "euler":
        return speed_radps * dt
    target = duty * plant.max_speed_radps
    tau = plant.time_constant_s
    return target * dt + (speed_radps - target) * tau * -math.expm1(-dt / tau)
