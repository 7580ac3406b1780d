"""Deployment loop: scale normalized profiles to N/m, derive damping,
smooth on the SPD manifold, and drive the simulated world.

Three modes. ``low`` and ``high`` hold fixed isotropic impedance and
never touch the policy; ``copilot`` scales the policy's normalized
eigenvalues into [k_min, k_max], smooths the result with a log-domain
exponential moving average, and derives damping as 1.4 * sqrt(k) per
eigenvalue in the stiffness eigenbasis. Rotational impedance is a fixed
per-mode constant that is logged but not simulated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .policy import PolicyModel, predict
from .sim import Environment, World, WorldState
from .spd import Spd3, spd_ema, sym_eig

__all__ = [
    "ImpedanceConfig",
    "ImpedanceCommand",
    "TrajectoryTick",
    "ROTATIONAL_SETTINGS",
    "DAMPING_COEFF",
    "scale_stiffness",
    "damping_from_stiffness",
    "copilot_profile",
    "tick",
    "rollout",
    "press_command_source",
]

MODES = ("low", "high", "copilot")

# Translational damping law for copilot mode (N s/m per N/m eigenvalue).
DAMPING_COEFF = 1.4

# Fixed rotational (stiffness N m/rad, damping N m s/rad) per mode;
# carried in logs only, the simulated world is translational.
ROTATIONAL_SETTINGS = {
    "low": (10.0, 3.0),
    "high": (100.0, 8.0),
    "copilot": (40.0, 5.5),
}

_EIG_SLACK = 1e-9  # accepted overshoot of normalized eigenvalues


@dataclass(frozen=True)
class ImpedanceConfig:
    """Runtime constants; defaults reproduce the deployed values."""

    k_min: float = 300.0
    k_max: float = 3000.0
    alpha: float = 0.2
    eps_ema: float = 1e-6
    rate_hz: float = 90.0
    mode: str = "copilot"
    k_low: float = 300.0
    d_low: float = 20.0
    k_high: float = 3000.0
    d_high: float = 70.0
    stop_force: float = 100.0  # protective-stop threshold (N), log flag only

    def __post_init__(self) -> None:
        if not 0 < self.k_min < self.k_max:
            raise ValueError("need 0 < k_min < k_max")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be > 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class ImpedanceCommand:
    """Stiffness/damping pair emitted each tick, with its eigensystem."""

    k: Spd3  # N/m
    d: Spd3  # N s/m
    q: np.ndarray  # shared eigenvectors of k and d
    k_eigs: np.ndarray  # descending
    d_eigs: np.ndarray
    tick: int


def scale_stiffness(k_norm, k_min: float, k_max: float) -> Spd3:
    """Affinely map normalized eigenvalues from [0, 1] to [k_min, k_max].

    Eigenvectors are preserved. Inputs whose eigenvalues stray outside
    [-1e-9, 1 + 1e-9] violate the normalization contract and are
    rejected.
    """
    pair = sym_eig(k_norm)
    if pair.lam.min() < -_EIG_SLACK or pair.lam.max() > 1.0 + _EIG_SLACK:
        raise ValueError(
            f"normalized eigenvalues {pair.lam} outside [0, 1]"
        )
    lam = k_min + np.clip(pair.lam, 0.0, 1.0) * (k_max - k_min)
    return Spd3.from_matrix((pair.q * lam) @ pair.q.T)


def damping_from_stiffness(k) -> Spd3:
    """D = Q diag(1.4 sqrt(k_i)) Q^T in the stiffness eigenbasis."""
    pair = sym_eig(k if isinstance(k, Spd3) else Spd3.from_matrix(k))
    d = DAMPING_COEFF * np.sqrt(pair.lam)
    return Spd3.from_matrix((pair.q * d) @ pair.q.T)


def _command_from_stiffness(k: Spd3, tick_index: int) -> ImpedanceCommand:
    pair = sym_eig(k)
    d_eigs = DAMPING_COEFF * np.sqrt(pair.lam)
    d = Spd3.from_matrix((pair.q * d_eigs) @ pair.q.T)
    return ImpedanceCommand(k=k, d=d, q=pair.q, k_eigs=pair.lam,
                            d_eigs=d_eigs, tick=tick_index)


def _constant_command(k_value: float, d_value: float, tick_index: int
                      ) -> ImpedanceCommand:
    return ImpedanceCommand(
        k=Spd3.from_matrix(k_value * np.eye(3)),
        d=Spd3.from_matrix(d_value * np.eye(3)),
        q=np.eye(3),
        k_eigs=np.full(3, k_value),
        d_eigs=np.full(3, d_value),
        tick=tick_index,
    )


def copilot_profile(model: PolicyModel, env: Environment, snap: WorldState) -> Spd3:
    """World-frame normalized profile for the current world state.

    Predictions live in the wrist-camera frame; the runtime knows the
    wrist orientation exactly (no demonstration noise) and conjugates the
    prediction back into the world frame before scaling and smoothing.
    """
    profile = predict(model, snap.env_state)
    r = env.tool_orientation(snap.act_pos)
    return Spd3.from_matrix(r @ profile.mat() @ r.T)


def tick(cfg: ImpedanceConfig, prev_cmd: Optional[ImpedanceCommand],
         model_output) -> ImpedanceCommand:
    """One copilot smoothing step.

    The first tick adopts the scaled output directly; afterwards the
    stiffness moves toward it along the log-Euclidean geodesic with
    step ``alpha``.
    """
    k_raw = scale_stiffness(model_output, cfg.k_min, cfg.k_max)
    if prev_cmd is None:
        return _command_from_stiffness(k_raw, 0)
    k_t = spd_ema(prev_cmd.k, k_raw, cfg.alpha, cfg.eps_ema)
    return _command_from_stiffness(k_t, prev_cmd.tick + 1)


@dataclass(frozen=True)
class TrajectoryTick:
    """One logged runtime tick."""

    tick: int
    t: float
    mode: str
    cmd_pos: np.ndarray
    act_pos: np.ndarray
    force: np.ndarray
    k: Spd3
    d: Spd3
    stop: bool
    rot_stiffness: float
    rot_damping: float


CommandSource = Callable[[int, WorldState], np.ndarray]


def rollout(cfg: ImpedanceConfig, env: Environment, command_source: CommandSource,
            model: Optional[PolicyModel] = None, ticks: int = 900
            ) -> list[TrajectoryTick]:
    """Run the loop for ``ticks`` steps of sim time at ``cfg.rate_hz``.

    The command source supplies a pose per tick. low/high modes bypass
    the policy entirely; copilot requires a fitted model and feeds it the
    world's task state from the previous tick. Deterministic for
    scripted sources.
    """
    if cfg.mode == "copilot" and model is None:
        raise ValueError("copilot mode requires a model")
    if ticks < 1:
        raise ValueError("ticks must be >= 1")
    rot_k, rot_d = ROTATIONAL_SETTINGS[cfg.mode]
    world = World(env)
    prev: Optional[ImpedanceCommand] = None
    log: list[TrajectoryTick] = []
    for i in range(ticks):
        snap = world.snapshot
        if cfg.mode == "low":
            cmd = _constant_command(cfg.k_low, cfg.d_low, i)
        elif cfg.mode == "high":
            cmd = _constant_command(cfg.k_high, cfg.d_high, i)
        else:
            profile = copilot_profile(model, env, snap)
            cmd = tick(cfg, prev, profile)
            prev = cmd
        pose = np.asarray(command_source(i, snap), dtype=float)
        state = world.step(pose, cmd.k)
        force_mag = float(np.linalg.norm(state.contact_force))
        log.append(
            TrajectoryTick(
                tick=i,
                t=i / cfg.rate_hz,
                mode=cfg.mode,
                cmd_pos=pose,
                act_pos=state.act_pos,
                force=state.contact_force,
                k=cmd.k,
                d=cmd.d,
                stop=force_mag > cfg.stop_force,
                rot_stiffness=rot_k,
                rot_damping=rot_d,
            )
        )
    return log


def press_command_source(env: Environment, rate_hz: float, *,
                         depth: float = 0.01, noise_std: float = 0.003,
                         seed: int = 0, approach_s: float = 2.0,
                         lateral: float = 0.075) -> CommandSource:
    """Scripted operator: approach the surface, then press and hold.

    Moves from the home pose to a target ``depth`` past the contact
    surface over ``approach_s`` seconds and holds there, adding Gaussian
    command noise each tick. Only meaningful for wall and free
    environments; the pose sequence is deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    home = env.home_position()
    if env.kind == "wall":
        t1, _ = env.wall_tangents()
        target = env.offset * env.normal + lateral * t1 - depth * env.normal
    else:
        target = home
    n_approach = max(1, int(round(approach_s * rate_hz)))

    def source(tick_index: int, _state: WorldState) -> np.ndarray:
        frac = min(1.0, tick_index / n_approach)
        pose = home + frac * (target - home)
        return pose + rng.normal(0.0, noise_std, size=3)

    return source
