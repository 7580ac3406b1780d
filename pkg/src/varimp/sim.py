"""Quasi-static contact world: wall, door-arc, slot, and free environments.

The model is a static force balance between two springs. The robot is a
spring of stiffness ``K`` pulling the end-effector toward the commanded
pose; each environment constrains a set of directions with a scalar
spring per direction. Along every violated constraint direction the
penetration settles at the scalar equilibrium of the two springs; in
unconstrained directions the end-effector tracks the command exactly.
There is no friction, gravity, or inertia, so every step is an
equilibrium and trajectories are exactly reproducible from a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .spd import Spd3

__all__ = [
    "Environment",
    "DemoRecord",
    "WorldState",
    "World",
    "step",
    "scripted_demo",
    "ground_truth_stiffness",
    "RIGID_STIFFNESS",
    "BACKGROUND_STIFFNESS",
    "DEMO_RATE_HZ",
    "DEMO_ROBOT_STIFFNESS",
    "WAYPOINT_NOISE_STD",
]

# Large but finite spring used to model an effectively rigid surface.
RIGID_STIFFNESS = 1e9
# Isotropic floor of the analytic environment stiffness (N/m).
BACKGROUND_STIFFNESS = 1.0

DEMO_RATE_HZ = 10.0
DEMO_ROBOT_STIFFNESS = 3000.0
WAYPOINT_NOISE_STD = 0.003  # meters, per scripted waypoint
CAM_NOISE_DEG = 15.0

_UNIT_TOL = 1e-9


def _unit(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0 or not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be a nonzero finite vector")
    return v / n


def _orthonormal_tangents(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic right-handed completion (t1, t2) of a unit vector n."""
    e = np.zeros(3)
    e[int(np.argmin(np.abs(n)))] = 1.0
    t1 = np.cross(n, e)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    return t1, t2


@dataclass(frozen=True)
class Environment:
    """One task environment; build through the factory classmethods."""

    kind: str
    env_stiffness: float = RIGID_STIFFNESS
    # wall
    normal: Optional[np.ndarray] = None  # unit, points into free space
    offset: float = 0.0  # surface is normal . x == offset
    # door
    hinge: Optional[np.ndarray] = None
    axis: Optional[np.ndarray] = None  # unit hinge axis
    radius: float = 0.0
    # slot
    center: Optional[np.ndarray] = None
    slot_axis: Optional[np.ndarray] = None  # unit channel direction
    half_width: float = 0.0

    @classmethod
    def wall(cls, normal=(1.0, 0.0, 0.0), offset: float = 0.0,
             env_stiffness: float = 1e5) -> "Environment":
        if env_stiffness <= 0:
            raise ValueError("env_stiffness must be > 0")
        return cls(kind="wall", normal=_unit(normal, "normal"), offset=float(offset),
                   env_stiffness=float(env_stiffness))

    @classmethod
    def door(cls, hinge=(0.0, 0.0, 0.0), axis=(0.0, 0.0, 1.0), radius: float = 0.3,
             env_stiffness: float = 1e5) -> "Environment":
        if radius <= 0:
            raise ValueError("radius must be > 0")
        if env_stiffness <= 0:
            raise ValueError("env_stiffness must be > 0")
        return cls(kind="door", hinge=np.asarray(hinge, dtype=float),
                   axis=_unit(axis, "axis"), radius=float(radius),
                   env_stiffness=float(env_stiffness))

    @classmethod
    def slot(cls, center=(0.0, 0.0, 0.0), slot_axis=(0.0, 0.0, -1.0),
             half_width: float = 0.002, env_stiffness: float = 1e5) -> "Environment":
        if half_width <= 0:
            raise ValueError("half_width must be > 0")
        if env_stiffness <= 0:
            raise ValueError("env_stiffness must be > 0")
        return cls(kind="slot", center=np.asarray(center, dtype=float),
                   slot_axis=_unit(slot_axis, "slot_axis"), half_width=float(half_width),
                   env_stiffness=float(env_stiffness))

    @classmethod
    def free(cls) -> "Environment":
        return cls(kind="free", env_stiffness=1.0)

    # -- geometry helpers ------------------------------------------------

    def wall_tangents(self) -> tuple[np.ndarray, np.ndarray]:
        return _orthonormal_tangents(self.normal)

    def door_plane(self) -> tuple[np.ndarray, np.ndarray]:
        return _orthonormal_tangents(self.axis)

    def door_radial(self, angle: float) -> np.ndarray:
        e1, e2 = self.door_plane()
        return math.cos(angle) * e1 + math.sin(angle) * e2

    def door_handle(self, angle: float) -> np.ndarray:
        return self.hinge + self.radius * self.door_radial(angle)

    def slot_laterals(self) -> tuple[np.ndarray, np.ndarray]:
        return _orthonormal_tangents(self.slot_axis)

    def task_state(self, pos) -> np.ndarray:
        """Task-specific state vector at a world position (privileged)."""
        pos = np.asarray(pos, dtype=float)
        if self.kind == "wall":
            t1, t2 = self.wall_tangents()
            rel = pos - self.offset * self.normal
            return np.array([t1 @ rel, t2 @ rel, self.normal @ pos - self.offset])
        if self.kind == "door":
            e1, e2 = self.door_plane()
            rel = pos - self.hinge
            return np.array([math.atan2(rel @ e2, rel @ e1)])
        if self.kind == "slot":
            e1, e2 = self.slot_laterals()
            rel = pos - self.center
            return np.array([self.slot_axis @ rel, e1 @ rel, e2 @ rel])
        return pos.copy()

    def home_position(self) -> np.ndarray:
        if self.kind == "wall":
            return self.offset * self.normal + 0.05 * self.normal
        if self.kind == "door":
            return self.door_handle(0.0)
        if self.kind == "slot":
            return self.center - 0.05 * self.slot_axis
        return np.zeros(3)

    def tool_orientation(self, pos) -> np.ndarray:
        """Wrist/camera orientation at a position: z faces the work surface.

        A pure function of (environment, position), so the runtime can
        reconstruct the frame a state-conditioned prediction refers to.
        Demonstrations add noise on top of this.
        """
        pos = np.asarray(pos, dtype=float)
        if self.kind == "wall":
            z = -self.normal
        elif self.kind == "door":
            rho = pos - self.hinge - (self.axis @ (pos - self.hinge)) * self.axis
            dist = np.linalg.norm(rho)
            z = -rho / dist if dist > _UNIT_TOL else -self.door_radial(0.0)
        elif self.kind == "slot":
            z = self.slot_axis
        else:
            z = np.array([0.0, 0.0, -1.0])
        x, y = _orthonormal_tangents(z)
        return np.column_stack([x, y, z])

    def _constraints(self, pos: np.ndarray) -> list[tuple[np.ndarray, float]]:
        """Violated constraints at ``pos`` as (move-out unit direction, depth)."""
        out: list[tuple[np.ndarray, float]] = []
        if self.kind == "wall":
            depth = self.offset - self.normal @ pos
            if depth > 0.0:
                out.append((self.normal, depth))
        elif self.kind == "door":
            rho = pos - self.hinge - (self.axis @ (pos - self.hinge)) * self.axis
            dist = np.linalg.norm(rho)
            if dist > _UNIT_TOL:
                err = dist - self.radius  # signed radial error, two-sided
                if err != 0.0:
                    out.append((-math.copysign(1.0, err) * rho / dist, abs(err)))
        elif self.kind == "slot":
            for e in self.slot_laterals():
                u = e @ (pos - self.center)
                depth = abs(u) - self.half_width
                if depth > 0.0:
                    out.append((-math.copysign(1.0, u) * e, depth))
        return out


def step(env: Environment, cmd_pos, k_robot) -> tuple[np.ndarray, np.ndarray]:
    """Static equilibrium for one commanded pose.

    Returns (act_pos, force) where force = K_robot (cmd - act) is the
    contact force the end-effector transmits to the environment.
    """
    cmd = np.asarray(cmd_pos, dtype=float)
    if cmd.shape != (3,) or not np.all(np.isfinite(cmd)):
        raise ValueError("cmd_pos must be a finite 3-vector")
    k = Spd3.from_matrix(k_robot) if not isinstance(k_robot, Spd3) else k_robot
    km = k.mat()
    act = cmd.copy()
    for direction, depth in env._constraints(cmd):
        k_dir = float(direction @ km @ direction)
        settled = depth * k_dir / (k_dir + env.env_stiffness)
        act = act + (depth - settled) * direction
    force = km @ (cmd - act)
    return act, force


@dataclass(frozen=True)
class DemoRecord:
    """One demonstration timestep (force is the transmitted contact force)."""

    episode: int
    t: float
    state: np.ndarray
    force: np.ndarray
    cam_rot: np.ndarray
    cmd_pos: np.ndarray
    act_pos: np.ndarray


@dataclass(frozen=True)
class WorldState:
    act_pos: np.ndarray
    contact_force: np.ndarray
    env_state: np.ndarray
    tick: int


class World:
    """Live world stepped by the runtime loop.

    Single writer: only one task may call :meth:`step`. The snapshot is
    replaced wholesale each tick, so concurrent readers never observe a
    torn state.
    """

    def __init__(self, env: Environment):
        self.env = env
        self._snapshot = WorldState(
            act_pos=env.home_position(),
            contact_force=np.zeros(3),
            env_state=env.task_state(env.home_position()),
            tick=0,
        )

    @property
    def snapshot(self) -> WorldState:
        return self._snapshot

    def reset(self) -> WorldState:
        self._snapshot = WorldState(
            act_pos=self.env.home_position(),
            contact_force=np.zeros(3),
            env_state=self.env.task_state(self.env.home_position()),
            tick=0,
        )
        return self._snapshot

    def step(self, cmd_pos, k_robot) -> WorldState:
        act, force = step(self.env, cmd_pos, k_robot)
        self._snapshot = WorldState(
            act_pos=act,
            contact_force=force,
            env_state=self.env.task_state(act),
            tick=self._snapshot.tick + 1,
        )
        return self._snapshot


def ground_truth_stiffness(env: Environment, state) -> Spd3:
    """Analytic environment stiffness, used only as a validation oracle."""
    state = np.asarray(state, dtype=float)
    bg = BACKGROUND_STIFFNESS * np.eye(3)
    if env.kind == "wall":
        n = env.normal
        return Spd3.from_matrix(env.env_stiffness * np.outer(n, n) + bg)
    if env.kind == "door":
        r = env.door_radial(float(state[0]))
        return Spd3.from_matrix(env.env_stiffness * np.outer(r, r) + bg)
    if env.kind == "slot":
        e1, e2 = env.slot_laterals()
        return Spd3.from_matrix(
            env.env_stiffness * (np.outer(e1, e1) + np.outer(e2, e2)) + bg
        )
    return Spd3.from_matrix(bg)


# -- scripted demonstrations ---------------------------------------------


def _axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    c, s = math.cos(angle), math.sin(angle)
    x, y, z = axis
    cross = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return c * np.eye(3) + s * cross + (1 - c) * np.outer(axis, axis)


def _camera_rotation(base: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-math.radians(CAM_NOISE_DEG), math.radians(CAM_NOISE_DEG))
    return _axis_angle(axis, angle) @ base


def _randomized_placement(env: Environment, rng: np.random.Generator) -> Environment:
    """Translate the object by up to ±2 cm; directions stay fixed so task
    states remain comparable across episodes."""
    if env.kind == "wall":
        return replace(env, offset=env.offset + rng.uniform(-0.02, 0.02))
    if env.kind == "door":
        e1, e2 = env.door_plane()
        shift = rng.uniform(-0.02, 0.02) * e1 + rng.uniform(-0.02, 0.02) * e2
        return replace(env, hinge=env.hinge + shift)
    if env.kind == "slot":
        return replace(env, center=env.center + rng.uniform(-0.02, 0.02, size=3))
    return env


def _episode_waypoints(env: Environment, rng: np.random.Generator
                       ) -> list[tuple[float, np.ndarray]]:
    """(time, position) waypoints for one scripted episode, before jitter."""
    if env.kind == "wall":
        t1, t2 = env.wall_tangents()
        n = env.normal
        u0 = rng.uniform(-0.05, 0.05)
        v0 = rng.uniform(-0.05, 0.05)
        surface = env.offset * n

        def p(u, v, gap):
            return surface + u * t1 + v * t2 + gap * n

        press = -0.006
        pts = [
            (0.0, p(u0, v0, 0.05)),
            (1.5, p(u0, v0, press)),
        ]
        # wipe across the surface with one intermediate waypoint per second
        for i in range(1, 6):
            pts.append((1.5 + i, p(u0 + 0.03 * i, v0, press)))
        pts.append((8.0, p(u0 + 0.15, v0, 0.05)))
        return pts
    if env.kind == "door":
        # start holding the handle near closed, swing to ~90 degrees
        theta0 = rng.uniform(-0.05, 0.05)
        pts = []
        for i in range(11):
            theta = theta0 + (math.pi / 2) * i / 10
            pts.append((float(i), env.door_handle(theta)))
        return pts
    if env.kind == "slot":
        a = env.slot_axis
        pts = [(0.0, env.center - 0.05 * a)]
        for i in range(1, 9):
            pts.append((float(i), env.center + (-0.05 + 0.02 * i) * a))
        return pts
    # free: a wandering polyline
    pts = [(float(i), rng.uniform(-0.1, 0.1, size=3)) for i in range(9)]
    return pts


def scripted_demo(env: Environment, episodes: int = 16, seed: int = 0, *,
                  rate_hz: float = DEMO_RATE_HZ,
                  noise_std: float = WAYPOINT_NOISE_STD,
                  robot_stiffness: float = DEMO_ROBOT_STIFFNESS) -> list[DemoRecord]:
    """Generate scripted demonstrations with a stiff robot.

    Each episode randomizes the object placement, jitters every waypoint
    with Gaussian noise, and records state/force/camera at ``rate_hz``.
    Deterministic for a fixed (env, episodes, seed).
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if rate_hz <= 0:
        raise ValueError("rate_hz must be > 0")
    k_robot = Spd3.from_matrix(robot_stiffness * np.eye(3))
    records: list[DemoRecord] = []
    for ep in range(episodes):
        rng = np.random.default_rng([seed, ep])
        ep_env = _randomized_placement(env, rng)
        waypoints = _episode_waypoints(ep_env, rng)
        times = np.array([t for t, _ in waypoints])
        points = np.array(
            [p + rng.normal(0.0, noise_std, size=3) for _, p in waypoints]
        )
        duration = times[-1]
        n_samples = int(round(duration * rate_hz)) + 1
        for i in range(n_samples):
            t = i / rate_hz
            cmd = np.array(
                [np.interp(t, times, points[:, j]) for j in range(3)]
            )
            act, force = step(ep_env, cmd, k_robot)
            cam_rot = _camera_rotation(ep_env.tool_orientation(act), rng)
            records.append(
                DemoRecord(
                    episode=ep,
                    t=t,
                    state=ep_env.task_state(act),
                    force=force,
                    cam_rot=cam_rot,
                    cmd_pos=cmd,
                    act_pos=act,
                )
            )
    return records
