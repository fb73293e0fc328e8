"""Continuous-time vector fields for every agent model.

Headings and steering angles are stored as angles and turned into unit
vectors on demand, so integration preserves unit norm exactly.  Saturation
is applied to the commanded inputs before they enter these fields, never to
the internal velocity states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigurationError, DimensionError


@dataclass(frozen=True)
class ActuatorParams:
    """First-order actuator model v' = -a v + b s, w' = -c w + d r."""

    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    d: float = 1.0


def heading_vector(theta: float) -> NDArray[np.float64]:
    return np.array([math.cos(theta), math.sin(theta)])


def deriv_single_integrator(u) -> NDArray[np.float64]:
    """q' = u."""
    return np.asarray(u, dtype=np.float64)


def deriv_chain(state: NDArray[np.floating], u, m: int) -> NDArray[np.float64]:
    """Chain of integrators: each derivative feeds the one below, u at the top.

    ``state`` stacks (q, q(1), ..., q(m)) as a flat vector of 2(m+1) entries.
    """
    state = np.asarray(state, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if state.size != 2 * (m + 1):
        raise DimensionError(
            f"chain state length {state.size} does not match order m={m}"
        )
    out = np.empty_like(state)
    out[:-2] = state[2:]
    out[-2:] = u
    return out


def deriv_unicycle(
    state: NDArray[np.floating],
    inputs: tuple[float, float],
    params: ActuatorParams | None = None,
    kinematic_only: bool = True,
) -> NDArray[np.float64]:
    """Unicycle field.  Kinematic state (x, y, theta) with inputs (v, omega);
    dynamic state (x, y, theta, v, omega) with inputs (s, r)."""
    state = np.asarray(state, dtype=np.float64)
    if kinematic_only:
        x, y, theta = state
        v, omega = inputs
        return np.array([v * math.cos(theta), v * math.sin(theta), omega])
    if params is None:
        raise ConfigurationError("actuator params required for the dynamic unicycle")
    x, y, theta, v, omega = state
    s, r = inputs
    return np.array(
        [
            v * math.cos(theta),
            v * math.sin(theta),
            omega,
            -params.a * v + params.b * s,
            -params.c * omega + params.d * r,
        ]
    )


def deriv_car(
    state: NDArray[np.floating],
    inputs: tuple[float, float],
    wheelbase: float,
    params: ActuatorParams | None = None,
    kinematic_only: bool = True,
    phi_max: float | None = None,
) -> NDArray[np.float64]:
    """Front-axle car field.  Kinematic state (x, y, theta, phi) with inputs
    (v, omega); dynamic state (x, y, theta, phi, v, omega) with inputs (s, r).

    When a steering bound is active, the steering rate is zeroed at the bound
    whenever it pushes outward (hard clamp semantics).
    """
    if wheelbase <= 0:
        raise ConfigurationError("wheelbase must be positive")
    state = np.asarray(state, dtype=np.float64)
    if kinematic_only:
        x, y, theta, phi = state
        v, omega = inputs
        phidot = omega
    else:
        if params is None:
            raise ConfigurationError("actuator params required for the dynamic car")
        x, y, theta, phi, v, omega = state
        s, r = inputs
        phidot = omega
    if phi_max is not None and abs(phi) >= phi_max and phi * phidot > 0:
        phidot = 0.0
    delta = theta + phi
    base = [
        v * math.cos(delta),
        v * math.sin(delta),
        (v / wheelbase) * math.sin(phi),
        phidot,
    ]
    if kinematic_only:
        return np.array(base)
    return np.array(
        base + [-params.a * v + params.b * s, -params.c * omega + params.d * r]
    )


def rear_to_front_speed(v_rear: float, phi: float) -> float:
    """Front-axle speed from a commanded rear-wheel speed; pinned to zero at
    phi = +-pi/2 where the rear wheels cannot move the front axle."""
    c = math.cos(phi)
    if abs(c) < 1e-12:
        return 0.0
    return v_rear / c
