"""Deterministic fixed-step closed-loop simulation of formation scenarios.

One engine covers all dynamics classes: per step it selects the active
topology, evaluates each agent's control from neighbor-relative positions
(optionally in a rotated per-agent frame), applies avoidance and saturation,
and advances the state with classical RK4 under zero-order-hold commands.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import controllers as ctl
from .collision import AvoidanceConfig, adjust_control, build_cones
from .controllers import ControllerConfig, IntegralState
from .dynamics import (
    ActuatorParams,
    deriv_car,
    deriv_chain,
    deriv_single_integrator,
    deriv_unicycle,
    heading_vector,
)
from .errors import ConfigurationError, DimensionError, GuaranteeViolationError
from .gains import GainMatrix, verify_gains
from .geometry import (
    FormationSpec,
    SensingGraph,
    build_kernel_basis,
    formation_error,
    lyapunov_value,
    min_pairwise_distance,
)

DYNAMICS_CLASSES = ("single_integrator", "chain", "unicycle", "car")

CONVERGENCE_THRESHOLD = 1e-3
CONVERGENCE_SUSTAIN = 1.0  # seconds below threshold before declaring success


@dataclass(frozen=True)
class AgentModel:
    """Dynamics class and physical parameters shared by the team."""

    dynamics: str = "single_integrator"
    chain_order: int = 3
    kinematic_only: bool = True
    actuators: tuple[ActuatorParams, ...] | None = None
    wheelbase: float = 1.0
    drive: str = "front"

    def __post_init__(self):
        if self.dynamics not in DYNAMICS_CLASSES:
            raise ConfigurationError(f"unknown dynamics class {self.dynamics!r}")

    def state_dim(self) -> int:
        if self.dynamics == "single_integrator":
            return 2
        if self.dynamics == "chain":
            return 2 * (self.chain_order + 1)
        if self.dynamics == "unicycle":
            return 3 if self.kinematic_only else 5
        return 4 if self.kinematic_only else 6


@dataclass(frozen=True)
class InitSpec:
    """Initial condition: explicit states or a seeded uniform position box."""

    kind: str = "box"  # "box" or "explicit"
    low: tuple[float, float] = (-5.0, -5.0)
    high: tuple[float, float] = (5.0, 5.0)
    states: NDArray[np.float64] | None = None


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    t_final: float = 60.0
    seed: int = 42
    init: InitSpec = field(default_factory=InitSpec)
    convergence_threshold: float = CONVERGENCE_THRESHOLD
    measurement_noise: float = 0.0

    def __post_init__(self):
        if self.dt <= 0 or self.t_final <= self.dt:
            raise ConfigurationError("need dt > 0 and t_final > dt")


@dataclass(frozen=True)
class Scenario:
    """Everything that determines a reproducible closed-loop run."""

    formation: FormationSpec
    topologies: tuple[SensingGraph, ...]
    schedule: tuple[tuple[float, int], ...]
    agents: AgentModel = field(default_factory=AgentModel)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    avoidance: AvoidanceConfig | None = None
    sim: SimConfig = field(default_factory=SimConfig)
    frame_angles: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.topologies:
            raise ConfigurationError("scenario needs at least one topology")
        times = [t for t, _ in self.schedule]
        if not self.schedule or times[0] != 0.0 or sorted(set(times)) != times:
            raise ConfigurationError(
                "schedule times must be strictly increasing and start at 0"
            )
        for _, idx in self.schedule:
            if not (0 <= idx < len(self.topologies)):
                raise ConfigurationError(f"schedule topology index {idx} out of range")


def active_topology(schedule, t: float) -> int:
    """Index of the topology active at time ``t`` (closed on the left)."""
    if t < 0:
        raise DimensionError("time must be nonnegative")
    idx = schedule[0][1]
    for t_k, k in schedule:
        if t_k <= t:
            idx = k
        else:
            break
    return idx


@dataclass
class RunSummary:
    final_subspace_error: float
    min_distance: float
    lyapunov_violations: int
    converged: bool
    convergence_time: float | None
    wall_clock: float
    seed: int


@dataclass
class TrajectoryLog:
    """Complete record of one run: states, commands, metrics per step."""

    t: NDArray[np.float64]
    states: NDArray[np.float64]  # (steps, n, state_dim)
    commands: NDArray[np.float64]  # (steps, n, 2)
    subspace_error: NDArray[np.float64]
    lyapunov: NDArray[np.float64]
    min_distance: NDArray[np.float64]
    topology_index: NDArray[np.int64]
    agents: AgentModel
    summary: RunSummary

    def positions(self) -> NDArray[np.float64]:
        return self.states[:, :, :2]


def _initial_states(scenario: Scenario, rng: np.random.Generator) -> NDArray[np.float64]:
    n = scenario.formation.n
    model = scenario.agents
    dim = model.state_dim()
    init = scenario.sim.init
    states = np.zeros((n, dim))
    if init.kind == "explicit":
        given = np.asarray(init.states, dtype=np.float64)
        if given.shape == (n, 2):
            states[:, :2] = given
        elif given.shape == (n, dim):
            states = given.copy()
        else:
            raise ConfigurationError(
                f"explicit init shape {given.shape} matches neither (n,2) nor (n,{dim})"
            )
    elif init.kind == "box":
        low = np.asarray(init.low, dtype=np.float64)
        high = np.asarray(init.high, dtype=np.float64)
        states[:, :2] = rng.uniform(low, high, size=(n, 2))
    else:
        raise ConfigurationError(f"unknown init kind {init.kind!r}")
    if model.dynamics in ("unicycle", "car") and init.kind != "explicit":
        states[:, 2] = rng.uniform(0.0, 2.0 * math.pi, size=n)
    return states


class _ControlContext:
    """Precomputed per-topology data reused every step."""

    def __init__(self, scenario: Scenario, gains: list[GainMatrix]):
        self.scenario = scenario
        self.gains = gains
        self.block_rows = [
            [gm.block_row(i) for i in range(1, scenario.formation.n + 1)]
            for gm in gains
        ]
        self.neighbor_sets = [
            [sorted(g.neighbors(i)) for i in range(1, g.n + 1)]
            for g in scenario.topologies
        ]


def _chain_blocks(states: NDArray[np.float64], order: int):
    """Split (n, 2(m+1)) chain states into per-derivative (n, 2) views."""
    return [states[:, 2 * j : 2 * j + 2] for j in range(order + 1)]


def _compute_commands(
    ctx: _ControlContext,
    topo_idx: int,
    states: NDArray[np.float64],
    integral_states: list[IntegralState] | None,
    dt: float,
    rng: np.random.Generator,
    noise: float,
):
    """Commanded planar control vector u_i per agent, before projection."""
    sc = ctx.scenario
    n = sc.formation.n
    cfg = sc.controller
    positions = states[:, :2]
    blocks = ctx.block_rows[topo_idx]
    neighbors = ctx.neighbor_sets[topo_idx]
    us = np.zeros((n, 2))
    new_integrals = None
    if integral_states is not None:
        new_integrals = list(integral_states)

    chain_parts = None
    if sc.agents.dynamics == "chain":
        chain_parts = _chain_blocks(states, sc.agents.chain_order)

    for i in range(1, n + 1):
        frame = None
        if sc.frame_angles is not None:
            frame = ctl.rotation(sc.frame_angles[i - 1])

        def measure(vec):
            v = np.asarray(vec, dtype=np.float64)
            if noise > 0.0:
                v = v + rng.uniform(-noise, noise, size=2)
            return frame.T @ v if frame is not None else v

        rel = [
            (j, measure(positions[j - 1] - positions[i - 1])) for j in neighbors[i - 1]
        ]
        gain_blocks = blocks[i - 1]

        if sc.agents.dynamics == "chain":
            term = ctl.consensus_term(rel, gain_blocks)
            m = sc.agents.chain_order
            if cfg.chain_variant == "full_A":
                rel_terms = []
                for orderidx in range(1, m + 1):
                    part = chain_parts[orderidx]
                    rel_d = [
                        (j, measure(part[j - 1] - part[i - 1]))
                        for j in neighbors[i - 1]
                    ]
                    rel_terms.append(ctl.consensus_term(rel_d, gain_blocks))
                u = ctl.higher_order_control(term, rel_terms, [], cfg.k_chain, "full_A")
            else:
                own = [
                    (frame.T @ chain_parts[j][i - 1]) if frame is not None
                    else chain_parts[j][i - 1]
                    for j in range(1, m + 1)
                ]
                u = ctl.higher_order_control(
                    term, None, own, cfg.k_chain, "identity_derivatives"
                )
        elif cfg.scale is not None:
            u = ctl.scale_augmented_control(i, rel, gain_blocks, cfg.scale)
        elif cfg.k0_int is not None and cfg.k1_int is not None:
            u, new_state = ctl.integral_control(
                rel, gain_blocks, integral_states[i - 1], dt, cfg.k0_int, cfg.k1_int
            )
            new_integrals[i - 1] = new_state
        else:
            u = ctl.single_integrator_control(rel, gain_blocks)

        if frame is not None:
            u = frame @ u
        if cfg.perturbation is not None:
            u = ctl.perturb_control(
                u, cfg.perturbation.c[i - 1], cfg.perturbation.alpha[i - 1]
            )
        us[i - 1] = u

    # Collision avoidance sees every other agent's position, not just
    # sensing-graph neighbors.
    if sc.avoidance is not None:
        adjusted = np.empty_like(us)
        for i in range(n):
            others = np.delete(positions, i, axis=0)
            cones = build_cones(positions[i], others, sc.avoidance)
            adjusted[i] = adjust_control(us[i], cones, sc.avoidance)
        us = adjusted
    return us, new_integrals


def _project_commands(
    scenario: Scenario, states: NDArray[np.float64], us: NDArray[np.float64]
):
    """Per-dynamics-class projection/saturation of the planar commands."""
    cfg = scenario.controller
    model = scenario.agents
    n = us.shape[0]
    cmds = np.zeros((n, 2))
    if model.dynamics in ("single_integrator", "chain"):
        for i in range(n):
            u = us[i]
            if cfg.u_max is not None:
                u = ctl.saturate_norm(u, cfg.u_max)
            cmds[i] = u
        return cmds
    for i in range(n):
        u = us[i]
        theta = states[i, 2]
        if model.dynamics == "unicycle":
            h = heading_vector(theta)
            if model.kinematic_only:
                v, omega = ctl.unicycle_control(h, u)
            else:
                v, omega = ctl.unicycle_actuator_control(
                    h, u, states[i, 3], cfg.actuator_mode, cfg.k_s
                )
        else:
            phi = states[i, 3]
            g = heading_vector(theta + phi)
            if model.kinematic_only:
                v, omega = ctl.car_control(g, u, model.drive, phi)
            else:
                if model.drive == "rear":
                    # Rear-wheel masking: the commanded front-equivalent speed
                    # vanishes at |phi| = pi/2 where the rear wheels cannot
                    # produce motion along the steering direction.
                    v_raw, omega = ctl.car_control(g, u, "front", phi)
                    v_des = 0.0 if abs(math.cos(phi)) < 1e-12 else v_raw
                    if cfg.actuator_mode == "velocity_feedback":
                        if cfg.k_s is None:
                            raise ConfigurationError(
                                "velocity_feedback mode requires k_s"
                            )
                        v = -cfg.k_s * (states[i, 4] - v_des)
                    else:
                        v = v_des
                else:
                    v, omega = ctl.car_actuator_control(
                        g, u, states[i, 4], cfg.actuator_mode, cfg.k_s
                    )
        v = ctl.saturate_scalar(v, cfg.v_max)
        omega = ctl.saturate_scalar(omega, cfg.omega_max)
        cmds[i] = (v, omega)
    return cmds


def _rk4_step(deriv, state: NDArray[np.float64], dt: float) -> NDArray[np.float64]:
    k1 = deriv(state)
    k2 = deriv(state + 0.5 * dt * k1)
    k3 = deriv(state + 0.5 * dt * k2)
    k4 = deriv(state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _advance(
    scenario: Scenario, states: NDArray[np.float64], cmds: NDArray[np.float64], dt: float
) -> NDArray[np.float64]:
    model = scenario.agents
    out = np.empty_like(states)
    for i in range(states.shape[0]):
        cmd = cmds[i]
        if model.dynamics == "single_integrator":
            out[i] = _rk4_step(lambda s: deriv_single_integrator(cmd), states[i], dt)
        elif model.dynamics == "chain":
            m = model.chain_order
            out[i] = _rk4_step(lambda s: deriv_chain(s, cmd, m), states[i], dt)
        elif model.dynamics == "unicycle":
            params = model.actuators[i] if model.actuators else None
            out[i] = _rk4_step(
                lambda s: deriv_unicycle(
                    s, tuple(cmd), params, model.kinematic_only
                ),
                states[i],
                dt,
            )
        else:
            params = model.actuators[i] if model.actuators else None
            out[i] = _rk4_step(
                lambda s: deriv_car(
                    s,
                    tuple(cmd),
                    model.wheelbase,
                    params,
                    model.kinematic_only,
                    scenario.controller.phi_max,
                ),
                states[i],
                dt,
            )
            if scenario.controller.phi_max is not None:
                out[i, 3] = float(
                    np.clip(out[i, 3], -scenario.controller.phi_max,
                            scenario.controller.phi_max)
                )
    return out


def run(scenario: Scenario, gains: list[GainMatrix]) -> TrajectoryLog:
    """Simulate the scenario; deterministic for fixed (scenario, gains)."""
    start = _time.perf_counter()
    n = scenario.formation.n
    if len(gains) != len(scenario.topologies):
        raise ConfigurationError(
            f"{len(gains)} gain matrices for {len(scenario.topologies)} topologies"
        )
    basis = build_kernel_basis(scenario.formation)
    for k, gm in enumerate(gains):
        report = verify_gains(gm, basis)
        if not report.passed:
            raise GuaranteeViolationError(
                f"gain matrix for topology {k} fails spectrum verification "
                f"(zero_count={report.zero_count}, "
                f"kernel_residual={report.kernel_residual:.2e})"
            )

    rng = np.random.default_rng(scenario.sim.seed)
    states = _initial_states(scenario, rng)
    dt = scenario.sim.dt
    steps = int(math.floor(scenario.sim.t_final / dt)) + 1
    ctx = _ControlContext(scenario, gains)
    uses_integral = (
        scenario.controller.k0_int is not None
        and scenario.controller.k1_int is not None
        and scenario.agents.dynamics == "single_integrator"
    )
    integral_states = [IntegralState() for _ in range(n)] if uses_integral else None

    t_arr = np.arange(steps) * dt
    states_log = np.zeros((steps, n, states.shape[1]))
    cmds_log = np.zeros((steps, n, 2))
    err_log = np.zeros(steps)
    lyap_log = np.zeros(steps)
    dist_log = np.zeros(steps)
    topo_log = np.zeros(steps, dtype=np.int64)

    converged_since = None
    convergence_time = None
    threshold = scenario.sim.convergence_threshold

    for k in range(steps):
        t = t_arr[k]
        topo_idx = active_topology(scenario.schedule, t)
        us, integral_states_new = _compute_commands(
            ctx, topo_idx, states, integral_states, dt, rng,
            scenario.sim.measurement_noise,
        )
        cmds = _project_commands(scenario, states, us)

        positions = states[:, :2]
        q = positions.reshape(-1)
        err = formation_error(q, basis) if np.linalg.norm(q) > 0 else 1.0
        states_log[k] = states
        cmds_log[k] = cmds
        err_log[k] = err
        lyap_log[k] = lyapunov_value(q, gains[topo_idx].assembled)
        dist_log[k] = min_pairwise_distance(positions)
        topo_log[k] = topo_idx

        if err < threshold:
            if converged_since is None:
                converged_since = t
            if convergence_time is None and t - converged_since >= CONVERGENCE_SUSTAIN:
                convergence_time = converged_since
        else:
            converged_since = None

        if k + 1 < steps:
            states = _advance(scenario, states, cmds, dt)
            if integral_states_new is not None:
                integral_states = integral_states_new

    monitor = lyapunov_monitor_arrays(
        states_log, topo_log, gains, scenario.agents, dt
    )
    summary = RunSummary(
        final_subspace_error=float(err_log[-1]),
        min_distance=float(dist_log.min()),
        lyapunov_violations=int(monitor.violations),
        converged=convergence_time is not None,
        convergence_time=convergence_time,
        wall_clock=_time.perf_counter() - start,
        seed=scenario.sim.seed,
    )
    return TrajectoryLog(
        t=t_arr,
        states=states_log,
        commands=cmds_log,
        subspace_error=err_log,
        lyapunov=lyap_log,
        min_distance=dist_log,
        topology_index=topo_log,
        agents=scenario.agents,
        summary=summary,
    )


@dataclass
class MonitorReport:
    violations: int
    worst_increment: float
    flagged_steps: list[int]


def lyapunov_monitor_arrays(
    states_log: NDArray[np.float64],
    topo_log: NDArray[np.int64],
    gains: list[GainMatrix],
    model: AgentModel,
    dt: float,
    tol_scale: float = 1e-7,
) -> MonitorReport:
    """Flag steps where the active theorem's Lyapunov candidate increases.

    Within each integration interval the comparison uses the topology active
    during that interval, so switches do not create spurious flags.  Dynamic
    unicycle/car runs use the composite candidate with the true actuator
    gains; everything else uses the quadratic formation candidate.
    """
    steps, n, _ = states_log.shape
    use_composite = (
        model.dynamics in ("unicycle", "car")
        and not model.kinematic_only
        and model.actuators is not None
    )
    v_index = 3 if model.dynamics == "unicycle" else 4

    def candidate(states, A):
        q = states[:, :2].reshape(-1)
        val = lyapunov_value(q, A)
        if use_composite:
            vs = states[:, v_index]
            bs = np.array([p.b for p in model.actuators])
            val += 0.5 * float(np.sum(vs**2 / bs))
        return val

    v0n = candidate(states_log[0], gains[topo_log[0]].assembled)
    # Integrator-order slack grows with dt^4 truncation plus command-hold error.
    tol = tol_scale * max(v0n, 1.0) + 1e-9
    violations = 0
    worst = -np.inf
    flagged = []
    for k in range(steps - 1):
        A = gains[topo_log[k]].assembled
        inc = candidate(states_log[k + 1], A) - candidate(states_log[k], A)
        worst = max(worst, inc)
        if inc > tol:
            violations += 1
            flagged.append(k)
    return MonitorReport(
        violations=violations, worst_increment=float(worst), flagged_steps=flagged
    )


def lyapunov_monitor(
    log: TrajectoryLog, gains: list[GainMatrix], tol_scale: float = 1e-7
) -> MonitorReport:
    """Post-hoc Lyapunov descent check over a finished trajectory log."""
    return lyapunov_monitor_arrays(
        log.states, log.topology_index, gains, log.agents, float(log.t[1] - log.t[0]),
        tol_scale,
    )


STATE_COLUMNS = {
    "single_integrator": ("x", "y"),
    "unicycle_kin": ("x", "y", "theta"),
    "unicycle_dyn": ("x", "y", "theta", "v", "omega"),
    "car_kin": ("x", "y", "theta", "phi"),
    "car_dyn": ("x", "y", "theta", "phi", "v", "omega"),
}


def state_column_names(model: AgentModel) -> tuple[str, ...]:
    if model.dynamics == "single_integrator":
        return STATE_COLUMNS["single_integrator"]
    if model.dynamics == "chain":
        names = ["x", "y"]
        for j in range(1, model.chain_order + 1):
            names += [f"x_d{j}", f"y_d{j}"]
        return tuple(names)
    key = f"{model.dynamics}_{'kin' if model.kinematic_only else 'dyn'}"
    return STATE_COLUMNS[key]


def write_csv(log: TrajectoryLog, path: str) -> None:
    """Stable CSV schema: t, per-agent state columns, then the three metrics."""
    n = log.states.shape[1]
    cols = state_column_names(log.agents)
    header = ["t"]
    for i in range(1, n + 1):
        header += [f"{c}_{i}" for c in cols]
    header += ["subspace_error", "lyapunov_value", "min_pairwise_distance"]
    steps = log.t.size
    flat_states = log.states.reshape(steps, -1)
    data = np.column_stack(
        [log.t, flat_states, log.subspace_error, log.lyapunov, log.min_distance]
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
