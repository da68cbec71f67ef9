"""Standard-form conic problems and symmetric-matrix vectorization.

Problems are stored in the canonical operator-splitting form

    minimize   (1/2) z'Pz + c'z
    subject to A z + s = b,   s in K,

where K is a product of a zero cone, a nonnegative orthant and a list of
positive-semidefinite cones.  PSD blocks are stored in scaled
lower-triangular vectorization (off-diagonals multiplied by sqrt(2)) so the
trace inner product of two symmetric matrices equals the Euclidean dot
product of their vectorizations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

SQRT2 = float(np.sqrt(2.0))


def vec_dim(side: int) -> int:
    """Length of the scaled vectorization of a ``side x side`` symmetric matrix."""
    return side * (side + 1) // 2


def vec_index(row: int, col: int) -> int:
    """Position of lower-triangular entry (row, col), row >= col, in the vectorization."""
    if col > row:
        row, col = col, row
    return row * (row + 1) // 2 + col


def sym_to_vec(mat: np.ndarray) -> np.ndarray:
    """Scaled lower-triangular vectorization of a symmetric matrix."""
    mat = np.asarray(mat, dtype=float)
    side = mat.shape[0]
    rows, cols = np.tril_indices(side)
    scale = np.where(rows == cols, 1.0, SQRT2)
    return mat[rows, cols] * scale


def vec_to_sym(vec: np.ndarray) -> np.ndarray:
    """Inverse of :func:`sym_to_vec`."""
    vec = np.asarray(vec, dtype=float)
    side = int((np.sqrt(8 * vec.size + 1) - 1) / 2 + 0.5)
    if vec_dim(side) != vec.size:
        raise ValueError(f"vector of length {vec.size} is not a packed symmetric matrix")
    rows, cols = np.tril_indices(side)
    scale = np.where(rows == cols, 1.0, SQRT2)
    mat = np.zeros((side, side))
    mat[rows, cols] = vec / scale
    mat[cols, rows] = mat[rows, cols]
    return mat


@dataclass(frozen=True)
class ConeDims:
    """Dimensions of the product cone, in the fixed order zero / nonneg / PSD."""

    zero: int = 0
    nonneg: int = 0
    psd: tuple[int, ...] = ()

    def __post_init__(self):
        if self.zero < 0 or self.nonneg < 0 or any(s <= 0 for s in self.psd):
            raise ValueError("cone dimensions must be nonnegative (PSD sides positive)")
        object.__setattr__(self, "psd", tuple(int(s) for s in self.psd))

    @property
    def psd_vec_dims(self) -> tuple[int, ...]:
        return tuple(vec_dim(s) for s in self.psd)

    @property
    def total(self) -> int:
        return self.zero + self.nonneg + sum(self.psd_vec_dims)


@dataclass
class ConicProblem:
    """A quadratic-objective conic program in slack form.

    ``P`` may be None for a linear objective.  ``objective_constant`` is the
    constant dropped when the objective was put in standard form; it is added
    back when reporting objective values.
    """

    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: ConeDims
    P: sp.csc_matrix | None = None
    objective_constant: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if not sp.issparse(self.A) or self.A.format != "csc":
            self.A = sp.csc_matrix(self.A)
        if self.P is not None:
            if not sp.issparse(self.P) or self.P.format != "csc":
                self.P = sp.csc_matrix(self.P)
            if self.P.shape != (self.c.size, self.c.size):
                raise ValueError("P must be square with the dimension of c")
        if self.A.shape != (self.b.size, self.c.size):
            raise ValueError(
                f"A has shape {self.A.shape}, expected ({self.b.size}, {self.c.size})"
            )
        if self.cones.total != self.b.size:
            raise ValueError(
                f"cone dimensions sum to {self.cones.total}, but b has length {self.b.size}"
            )

    @property
    def num_vars(self) -> int:
        return self.c.size

    @property
    def num_rows(self) -> int:
        return self.b.size

    def with_rhs(self, b: np.ndarray) -> "ConicProblem":
        """Same problem with a new right-hand side (matrices shared, not copied)."""
        b = np.asarray(b, dtype=float)
        if b.size != self.b.size:
            raise ValueError("right-hand side has the wrong length")
        return replace(self, b=b)

    def objective_value(self, z: np.ndarray) -> float:
        val = float(self.c @ z) + self.objective_constant
        if self.P is not None:
            val += 0.5 * float(z @ (self.P @ z))
        return val
