"""Point clouds, Frobenius algebra, rotations and the 2D orientation
parameters of the perturbation.

Rows are points; group actions act on the right (X R^T), translations add a
row-broadcast vector.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class GroupKind(enum.Enum):
    TRANSLATION = "T"
    ROTATION = "SO"
    ORTHOGONAL = "O"
    ROTO_TRANSLATION = "SE"
    PERMUTATION = "S"
    PERMUTATION_ROTO_TRANSLATION = "SxSE"


@dataclass(frozen=True)
class GroupSpec:
    """Invariance group targeted by a certificate."""

    kind: GroupKind
    dim: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("GroupSpec: dim must be 2 or 3")


@dataclass(frozen=True)
class PointCloud:
    """N x D matrix of point coordinates, one row per point."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        object.__setattr__(self, "data", data)
        if data.ndim != 2 or data.shape[0] < 1:
            raise ValueError("PointCloud: data must be a nonempty N x D matrix")
        if data.shape[1] not in (2, 3):
            raise ValueError("PointCloud: dim must be 2 or 3")
        if not np.all(np.isfinite(data)):
            raise ValueError("PointCloud: entries must be finite")

    @property
    def n_points(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def norm(self) -> float:
        """Frobenius norm of the coordinate matrix."""
        return float(np.linalg.norm(self.data))


@dataclass(frozen=True)
class Perturbation:
    """Additive perturbation Delta = X' - X."""

    delta: np.ndarray

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=float)
        object.__setattr__(self, "delta", delta)
        if delta.ndim != 2:
            raise ValueError("Perturbation: delta must be an N x D matrix")

    @classmethod
    def between(cls, x: PointCloud, x_prime: PointCloud) -> "Perturbation":
        if x.data.shape != x_prime.data.shape:
            raise ValueError("Perturbation: shapes of x and x' differ")
        return cls(x_prime.data - x.data)

    def norm(self) -> float:
        return float(np.linalg.norm(self.delta))


def frobenius_inner(a, b) -> float:
    """Frobenius inner product sum_{n,d} A_nd * B_nd."""
    a = a.data if isinstance(a, PointCloud) else np.asarray(a, dtype=float)
    b = b.data if isinstance(b, PointCloud) else np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("frobenius_inner: shape mismatch")
    return float(np.sum(a * b))


def center_matrix(data: np.ndarray) -> np.ndarray:
    return data - data.mean(axis=0, keepdims=True)


def center(x: PointCloud) -> PointCloud:
    """Subtract the column-wise averages; output columns sum to zero."""
    return PointCloud(center_matrix(x.data))


def rot2(theta: float) -> np.ndarray:
    """Counter-clockwise 2D rotation matrix."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def rot3_zyx(omega) -> np.ndarray:
    """Intrinsic z-y-x rotation: R_z(w1) @ R_y(w2) @ R_x(w3)."""
    w1, w2, w3 = float(omega[0]), float(omega[1]), float(omega[2])
    c1, s1 = math.cos(w1), math.sin(w1)
    c2, s2 = math.cos(w2), math.sin(w2)
    c3, s3 = math.cos(w3), math.sin(w3)
    rz = np.array([[c1, -s1, 0.0], [s1, c1, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[c2, 0.0, s2], [0.0, 1.0, 0.0], [-s2, 0.0, c2]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, c3, -s3], [0.0, s3, c3]])
    return rz @ ry @ rx


def rot3_zyx_angles(r: np.ndarray) -> tuple[float, float, float]:
    """Extract (w1, w2, w3) with w2 in [-pi/2, pi/2] from a z-y-x rotation.

    Ill-conditioned near gimbal lock |w2| = pi/2.
    """
    w2 = math.asin(-max(-1.0, min(1.0, float(r[2, 0]))))
    w1 = math.atan2(float(r[1, 0]), float(r[0, 0]))
    w3 = math.atan2(float(r[2, 1]), float(r[2, 2]))
    return w1, w2, w3


def rotate_rows(data: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Apply rotation r to every row: X -> X R^T."""
    return data @ r.T


@dataclass(frozen=True)
class EpsilonParams:
    """Orientation coordinates of a 2D perturbation relative to the clean input.

    eps1 = <X, Delta>_F and eps2 = <X R(-pi/2)^T, Delta>_F; they satisfy
    sqrt(eps1^2 + eps2^2) <= |X| * |Delta|.
    """

    eps1: float
    eps2: float
    norm_x: float
    norm_delta: float

    def __post_init__(self):
        bound = self.norm_x * self.norm_delta
        if math.hypot(self.eps1, self.eps2) > bound + 1e-9:
            raise ValueError("EpsilonParams: orientation parameters exceed |X||Delta|")

    @property
    def eps1_normalized(self) -> float:
        denom = self.norm_x * self.norm_delta
        return self.eps1 / denom if denom > 0 else 0.0

    @property
    def eps2_normalized(self) -> float:
        denom = self.norm_x * self.norm_delta
        return self.eps2 / denom if denom > 0 else 0.0


def rotate_quarter_turn_back(data: np.ndarray) -> np.ndarray:
    """X R(-pi/2)^T: each row (x, y) becomes (y, -x)."""
    return np.column_stack([data[:, 1], -data[:, 0]])


def epsilon_params(x: PointCloud, delta) -> EpsilonParams:
    """Orientation parameters of a perturbation of a 2D point cloud."""
    if x.dim != 2:
        raise ValueError("epsilon_params: defined for D = 2 only")
    d = delta.delta if isinstance(delta, Perturbation) else np.asarray(delta, dtype=float)
    if d.shape != x.data.shape:
        raise ValueError("epsilon_params: shape mismatch")
    eps1 = float(np.sum(x.data * d))
    eps2 = float(np.sum(rotate_quarter_turn_back(x.data) * d))
    return EpsilonParams(eps1=eps1, eps2=eps2, norm_x=x.norm(), norm_delta=float(np.linalg.norm(d)))


def adversarial_rotation_locus(norm_x: float, norm_delta: float) -> list[EpsilonParams]:
    """(eps1, eps2) pairs reachable by pure rotations X' = X R^T of given norms.

    Empty when |Delta| > 2|X| (no rotation moves X that far); a single point
    at the half-turn boundary; otherwise the symmetric pair (eps1, +-eps2).
    """
    if norm_x < 0 or norm_delta < 0:
        raise ValueError("adversarial_rotation_locus: norms must be >= 0")
    if norm_delta > 2.0 * norm_x:
        return []
    eps1 = -0.5 * norm_delta**2
    disc = norm_delta**2 * (4.0 * norm_x**2 - norm_delta**2)
    eps2 = 0.5 * math.sqrt(max(disc, 0.0))
    if eps2 == 0.0:
        return [EpsilonParams(eps1, 0.0, norm_x, norm_delta)]
    return [
        EpsilonParams(eps1, eps2, norm_x, norm_delta),
        EpsilonParams(eps1, -eps2, norm_x, norm_delta),
    ]


def load_points_csv(path) -> PointCloud:
    """Read the shared CSV point format: one row per point, no header."""
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise ValueError(f"{path}: ragged row at line {lineno}")
            try:
                rows.append([float(f) for f in fields])
            except ValueError as exc:
                raise ValueError(f"{path}: non-numeric field at line {lineno}") from exc
    if not rows:
        raise ValueError(f"{path}: no points")
    return PointCloud(np.array(rows))


def save_points_csv(path, x: PointCloud) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in x.data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
