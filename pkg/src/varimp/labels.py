"""Turn environment stiffness into complementary robot-stiffness labels.

The robot should be soft where the environment is stiff. Each
environment eigenvalue runs through the decreasing map 1/(lambda + eps),
the results are normalized against global dataset percentiles and
clamped to [0, 1], and the eigenvectors are re-expressed in the wrist
camera frame. Labels are stored as unconstrained Cholesky parameters so
a regressor can predict them directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .inference import InferredStiffness
from .sim import DemoRecord
from .spd import CholeskyParams, Spd3, cholesky_encode, sym_eig

__all__ = [
    "HMapConfig",
    "StiffnessLabel",
    "LabelSet",
    "robot_eigs",
    "camera_frame_label",
    "kappa_bounds",
    "build_labels",
    "ZERO_LIFT",
]

# Exact-zero normalized eigenvalues are lifted here so the Cholesky
# factorization stays defined; physically irrelevant after scaling.
ZERO_LIFT = 1e-9

_ROTATION_ATOL = 1e-8


@dataclass(frozen=True)
class HMapConfig:
    """Settings for the complementary eigenvalue mapping."""

    eps_h: float = 1e-6  # regularizer inside 1/(lambda + eps_h)
    p_low: float = 5.0  # percentile defining kappa_min
    p_high: float = 95.0  # percentile defining kappa_max

    def __post_init__(self) -> None:
        if self.eps_h < 0:
            raise ValueError("eps_h must be >= 0")
        if not 0 <= self.p_low < self.p_high <= 100:
            raise ValueError("need 0 <= p_low < p_high <= 100")


@dataclass(frozen=True)
class StiffnessLabel:
    """One training pair: raw task state -> camera-frame stiffness profile."""

    episode: int
    t: float
    state: np.ndarray
    frame: str  # always "camera"
    params: CholeskyParams


@dataclass(frozen=True)
class LabelSet:
    """Labels plus the normalization bounds they were built with."""

    labels: list[StiffnessLabel]
    kappa_min: float
    kappa_max: float
    cfg: HMapConfig


def _check_rotation(r, name: str) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise ValueError(f"{name} must be 3x3")
    if np.abs(r.T @ r - np.eye(3)).max() > _ROTATION_ATOL or np.linalg.det(r) < 0:
        raise ValueError(f"{name} is not a rotation matrix")
    return r


def robot_eigs(lambda_e, cfg: HMapConfig, kappa_min: float, kappa_max: float
               ) -> np.ndarray:
    """Map environment eigenvalues to normalized robot eigenvalues in [0, 1].

    kappa_min/kappa_max are the global dataset percentiles of all
    1/(lambda + eps_h) values; see :func:`kappa_bounds`.
    """
    if not kappa_min < kappa_max:
        raise ValueError(f"kappa_min ({kappa_min}) must be < kappa_max ({kappa_max})")
    lam = np.asarray(lambda_e, dtype=float)
    kappa = 1.0 / (lam + cfg.eps_h)
    return np.clip((kappa - kappa_min) / (kappa_max - kappa_min), 0.0, 1.0)


def camera_frame_label(q_e, lambdas_r, r_cam) -> Spd3:
    """Rotate the eigenbasis into the camera frame and rebuild the profile.

    Exact-zero normalized eigenvalues are lifted by ZERO_LIFT so the
    result is strictly positive definite.
    """
    q_e = _check_rotation(q_e, "q_e")
    r_cam = _check_rotation(r_cam, "r_cam")
    lam = np.maximum(np.asarray(lambdas_r, dtype=float), ZERO_LIFT)
    if lam.shape != (3,):
        raise ValueError("lambdas_r must have 3 entries")
    q = r_cam.T @ q_e
    return Spd3.from_matrix((q * lam) @ q.T)


def kappa_bounds(inferred: Mapping[int, InferredStiffness] | Sequence[Spd3],
                 cfg: HMapConfig) -> tuple[float, float]:
    """Global (kappa_min, kappa_max) percentiles over the pooled dataset."""
    if isinstance(inferred, Mapping):
        mats = [v.k_e for v in inferred.values()]
    else:
        mats = list(inferred)
    if not mats:
        raise ValueError("no inferred stiffness to pool")
    kappas = np.concatenate(
        [1.0 / (sym_eig(m).lam + cfg.eps_h) for m in mats]
    )
    lo, hi = np.percentile(kappas, [cfg.p_low, cfg.p_high])
    if not lo < hi:
        raise ValueError(
            f"degenerate kappa percentiles ({lo} >= {hi}); dataset has no spread"
        )
    return float(lo), float(hi)


def build_labels(records: Sequence[DemoRecord],
                 inferred: Mapping[int, InferredStiffness],
                 cfg: HMapConfig | None = None) -> LabelSet:
    """One camera-frame label per record, normalized with pooled bounds."""
    cfg = cfg or HMapConfig()
    if not records:
        raise ValueError("no records")
    if len(inferred) != len(records):
        raise ValueError(
            f"{len(inferred)} inferred stiffnesses for {len(records)} records"
        )
    lo, hi = kappa_bounds(inferred, cfg)
    labels: list[StiffnessLabel] = []
    for i, rec in enumerate(records):
        pair = sym_eig(inferred[i].k_e)
        lam_r = robot_eigs(pair.lam, cfg, lo, hi)
        profile = camera_frame_label(pair.q, lam_r, rec.cam_rot)
        labels.append(
            StiffnessLabel(
                episode=rec.episode,
                t=rec.t,
                state=np.asarray(rec.state, dtype=float),
                frame="camera",
                params=cholesky_encode(profile),
            )
        )
    return LabelSet(labels=labels, kappa_min=lo, kappa_max=hi, cfg=cfg)
