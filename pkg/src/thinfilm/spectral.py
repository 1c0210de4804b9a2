"""FFT-diagonalized solves for the periodic staggered Laplacian.

The periodic 2*dim+1 point Laplacian is diagonal in the discrete Fourier
basis with the exact stencil eigenvalues

    lambda_k = sum_d (4 / h^2) sin^2(pi k_d / n),

not the continuous symbol |2 pi k / L|^2.  Using the stencil eigenvalues
makes the transform-space division the exact inverse of the grid operator,
so inverting and re-applying the stencil round-trips to rounding error.

The zero mode is handled by explicit projection: inputs must be mean-zero
(within tolerance), the actual mean is subtracted before the transform, and
the mode-0 output coefficient is pinned to zero, which fixes the additive
constant of every solve.
"""

from __future__ import annotations

import numpy as np

from .errors import GridTooLargeError, InvalidCoefficientsError, NonZeroMeanError
from .grid import Grid, inner, norm_inf

_DENSE_CELL_CAP = 12**3


class SpectralSolver:
    """Inverse Laplacian, H^-1 products, and preconditioner solves.

    Eigenvalue tables are precomputed once per grid, so instances should be
    created once and reused across time steps.
    """

    def __init__(self, grid: Grid, mean_tol: float = 1e-10):
        self.grid = grid
        self.mean_tol = mean_tol
        lam_line = (4.0 / grid.h**2) * np.sin(np.pi * np.arange(grid.n) / grid.n) ** 2
        lam_half = lam_line[: grid.n // 2 + 1]
        # Broadcast per-axis eigenvalue lines to the rfftn output shape;
        # the last array axis is the half-spectrum axis.
        eig = np.zeros(grid.shape[:-1] + (grid.n // 2 + 1,))
        for ax in range(grid.dim):
            line = lam_half if ax == grid.dim - 1 else lam_line
            shape = [1] * grid.dim
            shape[ax] = line.size
            eig = eig + line.reshape(shape)
        self._eig = eig
        # Safe divisor: mode 0 is never used (pinned to zero after division).
        self._eig_safe = eig.copy()
        self._eig_safe.flat[0] = 1.0
        self._axes = tuple(range(grid.dim))

    def _check_mean(self, f: np.ndarray) -> float:
        m = float(np.mean(f))
        tol = self.mean_tol * norm_inf(f) * self.grid.volume
        if abs(m) > tol:
            raise NonZeroMeanError(
                f"field mean {m:.3e} exceeds tolerance {tol:.3e}; subtract it first"
            )
        return m

    def inv_neg_lap(self, f: np.ndarray) -> np.ndarray:
        """Solve -lap(psi) = f for the mean-zero psi.

        ``f`` must be mean-zero within tolerance (NonZeroMeanError otherwise).
        """
        self.grid.validate_field(f)
        m = self._check_mean(f)
        fhat = np.fft.rfftn(f - m, axes=self._axes)
        fhat /= self._eig_safe
        fhat.flat[0] = 0.0
        return np.fft.irfftn(fhat, s=self.grid.shape, axes=self._axes)

    def hminus1_inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """H^-1 inner product <f, (-lap)^{-1} g> of two mean-zero fields."""
        return inner(self.grid, f, self.inv_neg_lap(g))

    def hminus1_norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(max(self.hminus1_inner(f, f), 0.0)))

    def solve_preconditioner(
        self, r: np.ndarray, a0: float, a1: float, a2: float
    ) -> np.ndarray:
        """Solve L d = r with L = a0 (-lap)^{-1} + a1 I + a2 (-lap).

        Requires a0 > 0 and a1, a2 >= 0 so L is positive definite on the
        mean-zero subspace; ``r`` must be mean-zero within tolerance.
        Returns the mean-zero solution.
        """
        if not (a0 > 0.0 and a1 >= 0.0 and a2 >= 0.0):
            raise InvalidCoefficientsError(
                f"need a0 > 0, a1 >= 0, a2 >= 0, got ({a0}, {a1}, {a2})"
            )
        self.grid.validate_field(r)
        m = self._check_mean(r)
        rhat = np.fft.rfftn(r - m, axes=self._axes)
        rhat /= a0 / self._eig_safe + a1 + a2 * self._eig_safe
        rhat.flat[0] = 0.0
        return np.fft.irfftn(rhat, s=self.grid.shape, axes=self._axes)

    def solve_preconditioner_with_poisson(
        self, r: np.ndarray, a0: float, a1: float, a2: float
    ) -> tuple:
        """Solve L d = r and -lap(psi) = d sharing one forward transform.

        Returns (d, psi) with d identical to :meth:`solve_preconditioner`
        and psi equal to inv_neg_lap(d) up to rounding (the composed solve
        avoids the intermediate round trip through grid space).  The descent
        loop needs both fields per iteration, so fusing them saves a
        transform in the hottest path.
        """
        if not (a0 > 0.0 and a1 >= 0.0 and a2 >= 0.0):
            raise InvalidCoefficientsError(
                f"need a0 > 0, a1 >= 0, a2 >= 0, got ({a0}, {a1}, {a2})"
            )
        self.grid.validate_field(r)
        m = self._check_mean(r)
        rhat = np.fft.rfftn(r - m, axes=self._axes)
        rhat /= a0 / self._eig_safe + a1 + a2 * self._eig_safe
        rhat.flat[0] = 0.0
        d = np.fft.irfftn(rhat, s=self.grid.shape, axes=self._axes)
        rhat /= self._eig_safe
        rhat.flat[0] = 0.0
        psi = np.fft.irfftn(rhat, s=self.grid.shape, axes=self._axes)
        return d, psi


def _check_dense_cap(grid: Grid) -> None:
    if grid.n > 12 or grid.num_cells > _DENSE_CELL_CAP:
        raise GridTooLargeError(
            f"dense oracle capped at n <= 12 and {_DENSE_CELL_CAP} cells, "
            f"got n={grid.n} ({grid.num_cells} cells)"
        )


def dense_neg_lap_matrix(grid: Grid) -> np.ndarray:
    """Explicit matrix of -lap on tiny grids, assembled by index arithmetic.

    Deliberately shares no code with the stencil or FFT paths so it can act
    as an independent oracle in tests and self-checks.
    """
    _check_dense_cap(grid)
    n, dim = grid.n, grid.dim
    inv_h2 = 1.0 / grid.h**2
    size = grid.num_cells
    mat = np.zeros((size, size))
    for flat in range(size):
        coords = []
        rem = flat
        for ax in range(dim):
            stride = n ** (dim - 1 - ax)
            coords.append(rem // stride)
            rem %= stride
        mat[flat, flat] += 2.0 * dim * inv_h2
        for ax in range(dim):
            for step in (-1, 1):
                shifted = list(coords)
                shifted[ax] = (shifted[ax] + step) % n
                other = 0
                for a, c in enumerate(shifted):
                    other = other * n + c
                mat[flat, other] -= inv_h2
    return mat


def dense_preconditioner_matrix(
    grid: Grid, a0: float, a1: float, a2: float
) -> np.ndarray:
    """Explicit matrix of a0 (-lap)^{-1} + a1 I + a2 (-lap) on tiny grids.

    The inverse-Laplacian block uses the pseudoinverse, whose action on
    mean-zero vectors coincides with the mean-zero spectral solve.
    """
    _check_dense_cap(grid)
    neg_lap = dense_neg_lap_matrix(grid)
    eye = np.eye(grid.num_cells)
    return a0 * np.linalg.pinv(neg_lap) + a1 * eye + a2 * neg_lap
