"""
Weighted proper orthogonal decomposition of intensity snapshot databases.

The weight is the diagonal quadrature-times-volume operator of the
phase-space grid, so W-orthonormal basis vectors are orthonormal in the
discrete L2 norm over space and angle, summed over groups.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.linalg as la

from src.discretization import PhaseSpaceGrid
from src.errors import ConfigError, FingerprintMismatchError, LayoutError, NumericalError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightOperator:
    """Diagonal of W: w_m dx_i / 2 for every (group, angle, cell, corner) entry."""

    diagonal: np.ndarray

    def __post_init__(self):
        if self.diagonal.ndim != 1 or np.any(self.diagonal <= 0):
            raise LayoutError("Weight diagonal must be a 1D array of positive entries")

    @classmethod
    def from_grid(cls, grid: PhaseSpaceGrid) -> "WeightOperator":
        corner = grid.quadrature.w[:, None] * grid.mesh.dx[None, :] / 2.0
        field_ = np.broadcast_to(corner[None, :, :, None], grid.layout.shape)
        return cls(grid.layout.as_vector(np.array(field_)))

    @property
    def size(self) -> int:
        return self.diagonal.size

    def sqrt(self) -> np.ndarray:
        return np.sqrt(self.diagonal)

    def inv_sqrt(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.diagonal)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """W @ values for a vector or a (D, k) matrix."""
        if values.ndim == 1:
            return self.diagonal * values
        return self.diagonal[:, None] * values

    def inner(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """<a, b>_W; matrices give the matrix of column inner products."""
        return a.T @ self.apply(b)

    def norm(self, a: np.ndarray) -> float:
        return float(np.sqrt(self.inner(a, a)))


@dataclass(frozen=True)
class SnapshotDatabase:
    """Converged end-of-step intensities of one stage, one column per step."""

    matrix: np.ndarray  # (D, n)
    dt: np.ndarray  # (n,)
    stage: int
    fingerprint: int

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[1] == 0:
            raise LayoutError(f"Snapshot matrix must be (D, n) with n > 0, got {self.matrix.shape}")
        if self.dt.shape != (self.matrix.shape[1],) or np.any(self.dt <= 0):
            raise LayoutError("Snapshot time steps must be positive, one per column")

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class PodBasis:
    vectors: np.ndarray  # (D, d)
    singular_values: np.ndarray  # (d,)
    stage: int
    fingerprint: int
    window: Tuple[float, float] = (float("nan"), float("nan"))

    @property
    def rank(self) -> int:
        return self.singular_values.size

    def truncated(self, r: int) -> "PodBasis":
        if not 1 <= r <= self.rank:
            raise LayoutError(f"Rank {r} outside 1..{self.rank} for stage {self.stage}")
        return PodBasis(
            vectors=self.vectors[:, :r],
            singular_values=self.singular_values[:r],
            stage=self.stage,
            fingerprint=self.fingerprint,
            window=self.window,
        )

    def check_grid(self, grid: PhaseSpaceGrid) -> None:
        if self.fingerprint != grid.fingerprint:
            raise FingerprintMismatchError(
                f"Basis of stage {self.stage} was built on grid {self.fingerprint:#018x}, "
                f"current grid is {grid.fingerprint:#018x}"
            )


@dataclass(frozen=True)
class ReducedCoefficients:
    values: np.ndarray
    stage: int
    rank: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "rank", int(self.values.size))


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry of each is positive."""
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def compute_pod_basis(
    db: SnapshotDatabase,
    weights: WeightOperator,
    window: Tuple[float, float] = (float("nan"), float("nan")),
) -> PodBasis:
    """
    Weighted POD basis of a snapshot database.

    Args:
        db: Snapshot columns and their time steps
        weights: Phase-space weight operator of the same grid

    Returns:
        PodBasis with the numerically nonzero singular triplets only
    """
    n_rows, n_cols = db.matrix.shape
    if weights.size != n_rows:
        raise LayoutError(f"Weight size {weights.size} does not match snapshot length {n_rows}")
    scaled = weights.sqrt()[:, None] * db.matrix * np.sqrt(db.dt)[None, :]
    try:
        u_hat, sigma, _ = la.svd(scaled, full_matrices=False, lapack_driver="gesdd")
    except la.LinAlgError:
        logger.warning(f"gesdd failed for stage {db.stage}, retrying with gesvd")
        try:
            u_hat, sigma, _ = la.svd(scaled, full_matrices=False, lapack_driver="gesvd")
        except la.LinAlgError as exc:
            raise NumericalError(f"SVD of stage {db.stage} database failed: {exc}") from exc

    if sigma.size == 0 or sigma[0] == 0:
        raise NumericalError(f"Stage {db.stage} database has no nonzero singular values")
    threshold = max(n_rows, n_cols) * np.finfo(float).eps * sigma[0]
    rank = int(np.count_nonzero(sigma > threshold))
    vectors = _fix_signs(weights.inv_sqrt()[:, None] * u_hat[:, :rank])
    logger.info(
        f"Stage {db.stage}: {n_cols} snapshots, numerical rank {rank}, "
        f"sigma range {sigma[0]:.3e}..{sigma[rank - 1]:.3e}"
    )
    return PodBasis(
        vectors=vectors,
        singular_values=sigma[:rank].copy(),
        stage=db.stage,
        fingerprint=db.fingerprint,
        window=window,
    )


def tail_ratios(singular_values: np.ndarray) -> np.ndarray:
    """sqrt(sum_{l>r} s_l^2 / sum_l s_l^2) for r = 0..d."""
    energy = np.asarray(singular_values, dtype=float) ** 2
    total = energy.sum()
    if total <= 0:
        raise NumericalError("Singular values carry no energy")
    tails = np.concatenate([np.cumsum(energy[::-1])[::-1], [0.0]])
    return np.sqrt(tails / total)


def select_rank(singular_values: np.ndarray, eps: float) -> int:
    """Smallest rank r >= 1 whose tail ratio drops below ``eps``; the full rank otherwise."""
    if not 0.0 < eps < 1.0:
        raise ConfigError(f"rom.eps must lie in (0, 1), got {eps}")
    ratios = tail_ratios(singular_values)
    below = np.flatnonzero(ratios[1:] < eps)
    return int(below[0]) + 1 if below.size else int(np.asarray(singular_values).size)


def project(
    intensity: np.ndarray, basis: PodBasis, weights: WeightOperator, r: Optional[int] = None
) -> ReducedCoefficients:
    r = basis.rank if r is None else r
    if not 1 <= r <= basis.rank:
        raise LayoutError(f"Rank {r} outside 1..{basis.rank} for stage {basis.stage}")
    values = basis.vectors[:, :r].T @ weights.apply(intensity)
    return ReducedCoefficients(values=values, stage=basis.stage)


def reconstruct(coefficients: ReducedCoefficients, basis: PodBasis) -> np.ndarray:
    if coefficients.rank > basis.rank:
        raise LayoutError(
            f"{coefficients.rank} coefficients exceed the rank {basis.rank} of stage {basis.stage}"
        )
    return basis.vectors[:, : coefficients.rank] @ coefficients.values


def projection_error(
    db: SnapshotDatabase, basis: PodBasis, weights: WeightOperator, r: int
) -> float:
    """sqrt(sum_n dt_n ||I_n - P_r I_n||_W^2), the optimality functional of the POD."""
    u = basis.vectors[:, :r]
    coeffs = u.T @ weights.apply(db.matrix)
    residual = db.matrix - u @ coeffs
    per_column = np.einsum("ij,i,ij->j", residual, weights.diagonal, residual)
    return float(np.sqrt(np.sum(db.dt * per_column)))


def rank_table(singular_values: np.ndarray, eps_values) -> np.ndarray:
    """Rank selected for each threshold in ``eps_values``."""
    return np.array([select_rank(singular_values, float(eps)) for eps in eps_values], dtype=int)
