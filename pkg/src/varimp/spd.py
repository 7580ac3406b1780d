"""Geometry of 3x3 symmetric positive definite matrices.

Everything here treats an SPD matrix through its eigendecomposition:
log/exp maps, log-Euclidean means, the Cholesky log-diagonal encoding
used as an unconstrained 6-parameter representation, and log-domain
exponential smoothing. All functions are pure; the value types are
immutable and safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = [
    "NotSpdError",
    "Sym3",
    "Spd3",
    "EigenPair3",
    "CholeskyParams",
    "sym_eig",
    "spd_log",
    "spd_exp",
    "log_euclidean_mean",
    "cholesky_encode",
    "cholesky_decode",
    "cholesky_lower",
    "spd_ema",
]

# Relative tolerance certifying positive definiteness at construction.
SPD_EIG_RTOL = 1e-12

# Cyclic Jacobi: off-diagonal norm below this (relative to the Frobenius
# norm) counts as diagonalized.
_JACOBI_TOL = 1e-12
_JACOBI_MAX_SWEEPS = 64

MatrixLike = Union["Sym3", np.ndarray, Sequence[Sequence[float]]]


class NotSpdError(ValueError):
    """Raised when a matrix required to be SPD is not."""


@dataclass(frozen=True)
class Sym3:
    """A 3x3 real symmetric matrix stored as its 6 independent entries."""

    xx: float
    yy: float
    zz: float
    xy: float
    xz: float
    yz: float

    def __post_init__(self) -> None:
        for name in ("xx", "yy", "zz", "xy", "xz", "yz"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"non-finite entry {name}={v!r}")
            object.__setattr__(self, name, v)

    @classmethod
    def from_matrix(cls, m: MatrixLike, rtol: float = 1e-8) -> "Sym3":
        """Build from a 3x3 array, requiring symmetry within ``rtol``."""
        if isinstance(m, Sym3):
            return cls(m.xx, m.yy, m.zz, m.xy, m.xz, m.yz)
        a = np.asarray(m, dtype=float)
        if a.shape != (3, 3):
            raise ValueError(f"expected a 3x3 matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite matrix entries")
        scale = max(1.0, float(np.abs(a).max()))
        if float(np.abs(a - a.T).max()) > rtol * scale:
            raise ValueError("matrix is not symmetric")
        return cls(
            a[0, 0], a[1, 1], a[2, 2],
            0.5 * (a[0, 1] + a[1, 0]),
            0.5 * (a[0, 2] + a[2, 0]),
            0.5 * (a[1, 2] + a[2, 1]),
        )

    @classmethod
    def from_six(cls, six: Sequence[float]) -> "Sym3":
        """Build from ``[xx, yy, zz, xy, xz, yz]``."""
        v = [float(x) for x in six]
        if len(v) != 6:
            raise ValueError(f"expected 6 entries, got {len(v)}")
        return cls(*v)

    def mat(self) -> np.ndarray:
        """Dense 3x3 ndarray (always exactly symmetric)."""
        return np.array(
            [
                [self.xx, self.xy, self.xz],
                [self.xy, self.yy, self.yz],
                [self.xz, self.yz, self.zz],
            ]
        )

    def six(self) -> np.ndarray:
        """Entries in the fixed order ``[xx, yy, zz, xy, xz, yz]``."""
        return np.array([self.xx, self.yy, self.zz, self.xy, self.xz, self.yz])


class Spd3(Sym3):
    """A :class:`Sym3` certified positive definite at construction."""

    def __post_init__(self) -> None:
        super().__post_init__()
        lam, _ = _jacobi_eig(*self._entries())
        largest = max(abs(lam[0]), abs(lam[1]), abs(lam[2]))
        if largest == 0.0 or min(lam) <= SPD_EIG_RTOL * largest:
            raise NotSpdError(f"matrix is not positive definite (eigenvalues {lam})")

    def _entries(self) -> tuple[float, float, float, float, float, float]:
        return (self.xx, self.yy, self.zz, self.xy, self.xz, self.yz)

    @classmethod
    def from_matrix(cls, m: MatrixLike, rtol: float = 1e-8) -> "Spd3":
        s = Sym3.from_matrix(m, rtol=rtol)
        return cls(s.xx, s.yy, s.zz, s.xy, s.xz, s.yz)


@dataclass(frozen=True)
class EigenPair3:
    """Eigendecomposition M = Q diag(lam) Q^T of a symmetric 3x3 matrix.

    ``q`` is a proper rotation (orthonormal columns, det +1) and ``lam``
    is sorted descending.
    """

    q: np.ndarray
    lam: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))
        self.q.setflags(write=False)
        self.lam.setflags(write=False)

    def reconstruct(self) -> np.ndarray:
        return self.q @ np.diag(self.lam) @ self.q.T


@dataclass(frozen=True)
class CholeskyParams:
    """Six unconstrained scalars encoding an SPD matrix.

    The lower-triangular factor is rebuilt with exp(a_i) on the diagonal,
    so any finite parameter vector decodes to a valid SPD matrix.
    """

    a1: float
    a2: float
    a3: float
    l21: float
    l31: float
    l32: float

    def as_array(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3, self.l21, self.l31, self.l32])

    @classmethod
    def from_array(cls, v: Sequence[float]) -> "CholeskyParams":
        vals = [float(x) for x in v]
        if len(vals) != 6:
            raise ValueError(f"expected 6 parameters, got {len(vals)}")
        if not all(math.isfinite(x) for x in vals):
            raise ValueError("non-finite Cholesky parameters")
        return cls(*vals)


def _coerce_sym(m: MatrixLike) -> tuple[float, float, float, float, float, float]:
    if isinstance(m, Sym3):
        return (m.xx, m.yy, m.zz, m.xy, m.xz, m.yz)
    s = Sym3.from_matrix(m)
    return (s.xx, s.yy, s.zz, s.xy, s.xz, s.yz)


def _jacobi_eig(
    xx: float, yy: float, zz: float, xy: float, xz: float, yz: float
) -> tuple[tuple[float, float, float], list[list[float]]]:
    """Cyclic Jacobi diagonalization of a symmetric 3x3 matrix.

    Returns (unsorted eigenvalues, eigenvector columns) once the
    off-diagonal norm drops below ``_JACOBI_TOL`` relative to the
    Frobenius norm (at most ``_JACOBI_MAX_SWEEPS`` sweeps).
    """
    a = [[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]]
    v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    fro = math.sqrt(
        xx * xx + yy * yy + zz * zz + 2.0 * (xy * xy + xz * xz + yz * yz)
    )
    stop = _JACOBI_TOL * max(fro, 1e-300)
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = math.sqrt(
            a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2]
        )
        if off <= stop:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[p][q]
            if apq == 0.0:
                continue
            theta = 0.5 * (a[q][q] - a[p][p]) / apq
            t = math.copysign(1.0, theta) / (
                abs(theta) + math.sqrt(1.0 + theta * theta)
            )
            c = 1.0 / math.sqrt(1.0 + t * t)
            s = t * c
            app, aqq = a[p][p], a[q][q]
            a[p][p] = app - t * apq
            a[q][q] = aqq + t * apq
            a[p][q] = a[q][p] = 0.0
            r = 3 - p - q  # the remaining index
            arp, arq = a[r][p], a[r][q]
            a[r][p] = a[p][r] = c * arp - s * arq
            a[r][q] = a[q][r] = s * arp + c * arq
            for k in range(3):
                vkp, vkq = v[k][p], v[k][q]
                v[k][p] = c * vkp - s * vkq
                v[k][q] = s * vkp + c * vkq
    return (a[0][0], a[1][1], a[2][2]), v


def sym_eig(m: MatrixLike) -> EigenPair3:
    """Eigendecompose a symmetric 3x3 matrix.

    Eigenvalues come out descending. Column signs are fixed by making each
    column's largest-magnitude component positive, after which the last
    column is flipped if needed to force det(Q) = +1, so the output is
    deterministic (up to basis choice inside degenerate eigenspaces).
    """
    entries = _coerce_sym(m)
    lam_raw, v = _jacobi_eig(*entries)
    order = sorted(range(3), key=lambda i: -lam_raw[i])
    lam = np.array([lam_raw[i] for i in order])
    q = np.array([[v[r][i] for i in order] for r in range(3)])
    for j in range(3):
        col = q[:, j]
        k = int(np.argmax(np.abs(col)))
        if col[k] < 0.0:
            q[:, j] = -col
    if np.linalg.det(q) < 0.0:
        q[:, 2] = -q[:, 2]
    return EigenPair3(q=q, lam=lam)


def _rebuild(q: np.ndarray, lam: np.ndarray) -> Sym3:
    m = (q * lam) @ q.T
    return Sym3(
        m[0, 0], m[1, 1], m[2, 2],
        0.5 * (m[0, 1] + m[1, 0]),
        0.5 * (m[0, 2] + m[2, 0]),
        0.5 * (m[1, 2] + m[2, 1]),
    )


def _rebuild_spd(q: np.ndarray, lam: np.ndarray) -> Spd3:
    s = _rebuild(q, lam)
    return Spd3(s.xx, s.yy, s.zz, s.xy, s.xz, s.yz)


def spd_log(k: MatrixLike) -> Sym3:
    """Matrix logarithm of an SPD matrix (log of eigenvalues)."""
    pair = sym_eig(k)
    largest = float(np.abs(pair.lam).max())
    if largest == 0.0 or float(pair.lam.min()) <= SPD_EIG_RTOL * largest:
        raise NotSpdError(f"matrix logarithm needs SPD input (eigenvalues {pair.lam})")
    return _rebuild(pair.q, np.log(pair.lam))


def spd_exp(s: MatrixLike) -> Spd3:
    """Matrix exponential of a symmetric matrix; always lands on SPD."""
    pair = sym_eig(s)
    return _rebuild_spd(pair.q, np.exp(pair.lam))


def log_euclidean_mean(mats: Iterable[MatrixLike]) -> Spd3:
    """exp of the arithmetic mean of matrix logs.

    Unlike entrywise averaging this cannot inflate the determinant: the
    result's determinant is exactly the geometric mean of the inputs'.
    """
    logs = [spd_log(m).mat() for m in mats]
    if not logs:
        raise ValueError("log_euclidean_mean of an empty list")
    mean = np.mean(logs, axis=0)
    return spd_exp(mean)


def cholesky_encode(k: MatrixLike) -> CholeskyParams:
    """Encode an SPD matrix as (log-diagonal, sub-diagonal) of its Cholesky factor."""
    a = Sym3.from_matrix(k).mat() if not isinstance(k, Sym3) else k.mat()
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as e:
        raise NotSpdError(f"Cholesky factorization failed: {e}") from e
    return CholeskyParams(
        a1=math.log(low[0, 0]),
        a2=math.log(low[1, 1]),
        a3=math.log(low[2, 2]),
        l21=float(low[1, 0]),
        l31=float(low[2, 0]),
        l32=float(low[2, 1]),
    )


def cholesky_lower(p: CholeskyParams) -> np.ndarray:
    """The lower-triangular factor L with exp(a_i) on the diagonal."""
    return np.array(
        [
            [math.exp(p.a1), 0.0, 0.0],
            [p.l21, math.exp(p.a2), 0.0],
            [p.l31, p.l32, math.exp(p.a3)],
        ]
    )


def cholesky_decode(p: CholeskyParams) -> Spd3:
    """Rebuild L with exp(a_i) on the diagonal and return L L^T.

    L L^T is positive definite for any finite parameters; construction
    still certifies the eigenvalues, so decodes conditioned worse than
    the certification tolerance (~1e12) are rejected rather than
    returned silently denormal.
    """
    low = cholesky_lower(p)
    return Spd3.from_matrix(low @ low.T)


def spd_ema(prev: MatrixLike, raw: MatrixLike, alpha: float, eps: float = 0.0) -> Spd3:
    """Log-domain exponential moving average of SPD matrices.

    Computes exp((1-alpha) log(prev + eps I) + alpha log(raw + eps I)).
    ``eps`` keeps the logs finite for near-singular inputs; ``alpha`` must
    lie in (0, 1] (alpha = 1 passes ``raw`` through).
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    if eps < 0.0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    reg = eps * np.eye(3)
    log_prev = spd_log(Sym3.from_matrix(prev).mat() + reg).mat()
    log_raw = spd_log(Sym3.from_matrix(raw).mat() + reg).mat()
    return spd_exp((1.0 - alpha) * log_prev + alpha * log_raw)
