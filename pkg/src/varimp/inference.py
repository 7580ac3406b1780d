"""Infer direction-dependent environment stiffness from contact forces.

For every recorded state the estimator gathers the contact forces of its
k nearest neighbors (Euclidean, in z-scored state space), reduces them to
one representative force per unit-sphere sector, and aggregates the
per-sector outer products with a log-Euclidean mean. Using a fixed
percentile per sector makes the estimate invariant to how often a
direction happens to be sampled, which is exactly what the covariance of
raw forces is not.

The returned stiffness is unscaled (force units); the label stage's
percentile normalization absorbs the missing proportionality constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .sim import DemoRecord
from .spd import Spd3, spd_exp, spd_log

__all__ = [
    "NormStats",
    "NormalizedDataset",
    "SectorGrid",
    "SectorRepresentative",
    "InferredStiffness",
    "normalize_states",
    "knn",
    "sectorize",
    "env_stiffness",
    "covariance_stiffness",
    "infer_all",
    "K_NEIGHBORS",
    "EPS_REG",
    "EPS_FREE",
]

K_NEIGHBORS = 32  # default neighborhood size, well above task-space dim
EPS_REG = 1e-4  # isotropic regularizer on sector outer products (N^2)
EPS_FREE = 1e-6  # free-space stiffness convention (no valid sectors)

_CONST_TOL = 1e-12


@dataclass(frozen=True)
class NormStats:
    """Per-dimension z-score statistics (population std)."""

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # bool mask of zero-variance dimensions

    def apply(self, raw) -> np.ndarray:
        """Normalize raw states; constant dimensions map to 0."""
        raw = np.atleast_2d(np.asarray(raw, dtype=float))
        if raw.shape[1] != self.mean.shape[0]:
            raise ValueError(
                f"state dimension {raw.shape[1]} != dataset dimension {self.mean.shape[0]}"
            )
        safe = np.where(self.constant, 1.0, self.std)
        out = (raw - self.mean) / safe
        out[:, self.constant] = 0.0
        return out


def normalize_states(raw_states) -> tuple[np.ndarray, NormStats]:
    """Z-score each state dimension over the dataset.

    Zero-variance dimensions are flagged and mapped to constant 0 so
    neighbor distances ignore them.
    """
    raw = np.asarray(raw_states, dtype=float)
    if raw.ndim != 2 or raw.shape[0] < 2:
        raise ValueError("need an N x d state matrix with N >= 2")
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)  # population std: two points map to -1, +1
    constant = std <= _CONST_TOL * np.maximum(1.0, np.abs(mean))
    stats = NormStats(mean=mean, std=std, constant=constant)
    return stats.apply(raw), stats


@dataclass(frozen=True)
class NormalizedDataset:
    """Pooled demonstration data in normalized state space."""

    states: np.ndarray  # (N, d), z-scored
    forces: np.ndarray  # (N, 3)
    cam_rots: np.ndarray  # (N, 3, 3)
    stats: NormStats

    def __len__(self) -> int:
        return self.states.shape[0]

    @classmethod
    def from_records(cls, records: Sequence[DemoRecord]) -> "NormalizedDataset":
        if len(records) < 2:
            raise ValueError("need at least 2 records")
        raw = np.array([r.state for r in records])
        states, stats = normalize_states(raw)
        return cls(
            states=states,
            forces=np.array([r.force for r in records]),
            cam_rots=np.array([r.cam_rot for r in records]),
            stats=stats,
        )


def knn(query, dataset: NormalizedDataset, k: int) -> np.ndarray:
    """Indices of the k nearest records (ties go to the lower index)."""
    n = len(dataset)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    q = np.asarray(query, dtype=float).reshape(-1)
    if q.shape[0] != dataset.states.shape[1]:
        raise ValueError("query dimension mismatch")
    d2 = ((dataset.states - q) ** 2).sum(axis=1)
    return np.argsort(d2, kind="stable")[:k]


@dataclass(frozen=True)
class SectorGrid:
    """Equal-angle partition of the unit sphere in spherical coordinates."""

    m_az: int = 8
    m_incl: int = 4
    f_min: float = 0.5  # N; forces below this are treated as no contact

    def __post_init__(self) -> None:
        if self.m_az < 2 or self.m_incl < 2:
            raise ValueError("need at least 2 azimuth and 2 inclination bins")
        if self.f_min < 0:
            raise ValueError("f_min must be >= 0")

    def sector_index(self, units: np.ndarray) -> np.ndarray:
        az = np.arctan2(units[:, 1], units[:, 0])
        incl = np.arccos(np.clip(units[:, 2], -1.0, 1.0))
        i_az = np.minimum(
            ((az + math.pi) / (2 * math.pi) * self.m_az).astype(int), self.m_az - 1
        )
        i_incl = np.minimum(
            (incl / math.pi * self.m_incl).astype(int), self.m_incl - 1
        )
        return i_incl * self.m_az + i_az


@dataclass(frozen=True)
class SectorRepresentative:
    """Surrogate force for one non-empty sector."""

    direction: np.ndarray  # unit
    magnitude: float  # 95th percentile of member magnitudes (N)
    count: int


def sectorize(forces, grid: SectorGrid) -> list[SectorRepresentative]:
    """Reduce a set of forces to one representative per non-empty sector.

    The representative points along the mean member direction and carries
    the 95th-percentile magnitude (linear interpolation between order
    statistics), so uniform resampling of a sector changes nothing.
    """
    f = np.asarray(forces, dtype=float).reshape(-1, 3)
    if f.size == 0:
        return []
    mags = np.linalg.norm(f, axis=1)
    keep = (mags >= grid.f_min) & (mags > 0.0)
    if not keep.any():
        return []
    f, mags = f[keep], mags[keep]
    units = f / mags[:, None]
    sectors = grid.sector_index(units)
    reps = []
    for s in np.unique(sectors):
        member = sectors == s
        mean_dir = units[member].mean(axis=0)
        mean_dir /= np.linalg.norm(mean_dir)
        reps.append(
            SectorRepresentative(
                direction=mean_dir,
                magnitude=float(np.percentile(mags[member], 95)),
                count=int(member.sum()),
            )
        )
    return reps


def env_stiffness(reps: Sequence[SectorRepresentative], eps_reg: float = EPS_REG) -> Spd3:
    """Aggregate sector representatives into an environment stiffness.

    Averages log(f f^T + eps_reg I) over non-empty sectors and returns
    exp of half that mean (the square root folds the squared force units
    back to a stiffness-like quantity, still unscaled). With no sectors
    at all the free-space convention EPS_FREE * I applies, which the
    downstream complementary mapping turns into maximal robot stiffness.
    """
    if eps_reg <= 0:
        raise ValueError("eps_reg must be > 0")
    if not reps:
        return Spd3.from_matrix(EPS_FREE * np.eye(3))
    logs = [
        spd_log(rep.magnitude**2 * np.outer(rep.direction, rep.direction)
                + eps_reg * np.eye(3)).mat()
        for rep in reps
    ]
    return spd_exp(0.5 * np.mean(logs, axis=0))


def covariance_stiffness(forces, eps_reg: float = EPS_REG) -> Spd3:
    """Baseline estimator: K^2 = mean(f f^T) + eps_reg I.

    Kept for comparison only; frequently sampled directions pull this
    estimate toward themselves, which the sector estimator avoids.
    """
    f = np.asarray(forces, dtype=float).reshape(-1, 3)
    if f.shape[0] == 0:
        return Spd3.from_matrix(EPS_FREE * np.eye(3))
    second_moment = (f[:, :, None] * f[:, None, :]).mean(axis=0)
    return spd_exp(0.5 * spd_log(second_moment + eps_reg * np.eye(3)).mat())


@dataclass(frozen=True)
class InferredStiffness:
    """Environment stiffness for one record plus how many sectors fed it."""

    k_e: Spd3
    m_valid: int


def infer_all(dataset: NormalizedDataset, k: int = K_NEIGHBORS,
              grid: SectorGrid | None = None,
              eps_reg: float = EPS_REG) -> dict[int, InferredStiffness]:
    """Environment stiffness for every record in the dataset.

    Neighborhoods pool across demonstrations; nothing is excluded by
    episode. Pure and deterministic.
    """
    grid = grid or SectorGrid()
    n = len(dataset)
    if k < 4:
        raise ValueError("k must be at least 4 (task-space dimension + 1)")
    if k > n:
        raise ValueError(f"k={k} exceeds dataset size {n}")
    out: dict[int, InferredStiffness] = {}
    for i in range(n):
        idx = knn(dataset.states[i], dataset, k)
        reps = sectorize(dataset.forces[idx], grid)
        out[i] = InferredStiffness(k_e=env_stiffness(reps, eps_reg), m_valid=len(reps))
    return out
