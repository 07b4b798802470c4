"""Dense small-matrix kernels: eigenvalues, guarded solves, P-matrix test, Perron vectors."""

import itertools
import logging
from dataclasses import dataclass
from typing import Iterator

import numpy as np
import scipy.linalg

from ltnet import config
from ltnet.errors import CapExceededError, DimensionError, EigenSolverError, InputError, PerronError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray  # complex
    abscissa: float          # max real part
    radius: float            # max modulus


@dataclass(frozen=True)
class SingularReport:
    condition: float


@dataclass(frozen=True)
class Factorization:
    lu: tuple
    condition: float

    def solve(self, b: np.ndarray) -> np.ndarray:
        return scipy.linalg.lu_solve(self.lu, b, check_finite=False)


def _as_square(A, what: str) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise DimensionError(f"{what}: expected a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError(f"{what}: matrix has non-finite entries")
    return A


def inf_norm(A) -> float:
    A = np.asarray(A, dtype=float)
    return float(np.abs(A).sum(axis=1).max()) if A.size else 0.0


def tolerance(A) -> float:
    """Scaled absolute tolerance REL_TOL * max(1, ||A||_inf) for sign decisions."""
    return config.REL_TOL * max(1.0, inf_norm(A))


def eigen(A) -> Spectrum:
    A = _as_square(A, "eigen")
    n = A.shape[0]
    if n > config.EIG_DIM_CAP:
        raise CapExceededError("eigen", n, config.EIG_DIM_CAP)

    if not np.any(np.tril(A, -1)) or not np.any(np.triu(A, 1)):
        values = np.diag(A).astype(complex)
    else:
        try:
            values = scipy.linalg.eigvals(A, check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise EigenSolverError(f"eigenvalue iteration failed on {n}x{n} matrix: {e}") from e
        if not np.all(np.isfinite(values)):
            raise EigenSolverError(f"eigenvalue iteration returned non-finite values on {n}x{n} matrix")

    return Spectrum(
        eigenvalues=values,
        abscissa=float(values.real.max()),
        radius=float(np.abs(values).max()),
    )


def condition_number(A) -> float:
    with np.errstate(all="ignore"):
        cond = float(np.linalg.cond(A))
    return cond if np.isfinite(cond) else float("inf")


def factorize(A) -> Factorization | SingularReport:
    """LU factorization, or a SingularReport when cond(A) exceeds SINGULAR_COND."""
    A = _as_square(A, "factorize")
    cond = condition_number(A)
    if cond > config.SINGULAR_COND:
        return SingularReport(condition=cond)
    return Factorization(lu=scipy.linalg.lu_factor(A, check_finite=False), condition=cond)


def solve(A, b) -> np.ndarray | SingularReport:
    """Solve A x = b; b may hold several right-hand sides as columns."""
    A = _as_square(A, "solve")
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise DimensionError(f"solve: A is {A.shape[0]}x{A.shape[0]} but b has {b.shape[0]} rows")
    factor = factorize(A)
    if isinstance(factor, SingularReport):
        return factor
    return factor.solve(b)


def principal_minors(A, order: int | None = None) -> Iterator[tuple[tuple[int, ...], float]]:
    """Yield (index set, determinant) for every principal minor, smallest order first."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    orders = [order] if order is not None else range(1, n + 1)
    for k in orders:
        for idx in itertools.combinations(range(n), k):
            yield idx, float(np.linalg.det(A[np.ix_(idx, idx)]))


def is_p_matrix(A) -> bool:
    """True iff every principal minor is positive (beyond MINOR_TOL * max(1, ||A||_inf)^k)."""
    A = _as_square(A, "is_p_matrix")
    n = A.shape[0]
    if n > config.PMATRIX_DIM_CAP:
        raise CapExceededError("is_p_matrix", n, config.PMATRIX_DIM_CAP)
    scale = max(1.0, inf_norm(A))
    for idx, det in principal_minors(A):
        if not det > config.MINOR_TOL * scale ** len(idx):
            logger.debug("Principal minor %s = %g is not positive", idx, det)
            return False
    return True


def perron_vector(A) -> tuple[float, np.ndarray]:
    """Spectral radius and positive unit eigenvector of an irreducible nonnegative matrix."""
    A = _as_square(A, "perron_vector")
    if np.any(A < 0):
        raise PerronError("matrix has negative entries")
    try:
        values, vectors = scipy.linalg.eig(A, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise PerronError(f"eigendecomposition failed: {e}") from e

    k = int(np.argmax(values.real))
    rho = float(values[k].real)
    v = vectors[:, k]
    v = v / v[np.argmax(np.abs(v))]
    v = v.real
    if rho <= 0 or np.any(v <= 1e-12 * np.abs(v).max()):
        raise PerronError("no positive eigenvector for the spectral radius (matrix reducible?)")
    return rho, v / np.linalg.norm(v)
