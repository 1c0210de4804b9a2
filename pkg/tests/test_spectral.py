"""Spectral solves checked against eigenmode closed forms and pseudoinverses.

The Fourier path must invert the 2*dim+1 point stencil exactly, so single
trigonometric modes (eigenvectors of any periodic circulant) give closed-form
expected values with the stencil eigenvalue (4/h^2) sin^2(pi k/n), and dense
pseudoinverse solves assembled in the test give matrix-level oracles.
"""

import math

import numpy as np
import pytest

from thinfilm import (
    Grid,
    GridTooLargeError,
    InvalidCoefficientsError,
    NonZeroMeanError,
    SpectralSolver,
    dense_neg_lap_matrix,
    dense_preconditioner_matrix,
    inner,
    lap,
    norm_2,
    norm_inf,
)


def reference_neg_lap_matrix(grid):
    """Dense -lap assembled with roll-based columns, unlike the index walk
    used by the library's dense oracle."""
    size = grid.num_cells
    mat = np.zeros((size, size))
    basis = np.zeros(grid.shape)
    for col in range(size):
        basis.flat[col] = 1.0
        mat[:, col] = -lap(grid, basis).ravel()
        basis.flat[col] = 0.0
    return mat


def stencil_eigenvalue(grid, k):
    return (4.0 / grid.h**2) * math.sin(math.pi * k / grid.n) ** 2


def mode_1d(grid, k, kind="cos"):
    (x,) = grid.coordinates()
    fn = np.cos if kind == "cos" else np.sin
    return fn(2.0 * np.pi * k * x / grid.length)


def random_mean_zero(grid, seed):
    u = np.random.default_rng(seed).standard_normal(grid.shape)
    return u - np.mean(u)


class TestEigenmodes:
    def test_eigenvalue_hand_values(self):
        grid = Grid(1, 4, 1.0)
        # 4/h^2 = 64: lambda_1 = 64 sin^2(pi/4) = 32, lambda_2 = 64.
        assert stencil_eigenvalue(grid, 1) == pytest.approx(32.0, rel=1e-15)
        assert stencil_eigenvalue(grid, 2) == pytest.approx(64.0, rel=1e-15)
        # The continuous symbol (2 pi k / L)^2 would give ~39.48 for k=1;
        # the exact-inverse property below distinguishes the two.
        assert abs(stencil_eigenvalue(grid, 1) - (2.0 * math.pi) ** 2) > 7.0

    def test_inv_neg_lap_single_mode_n4(self):
        grid = Grid(1, 4, 1.0)
        solver = SpectralSolver(grid)
        f = mode_1d(grid, 1)
        assert np.allclose(solver.inv_neg_lap(f), f / 32.0, atol=1e-15)
        g = np.array([1.0, -1.0, 1.0, -1.0])  # sin mode at k = n/2
        assert np.allclose(solver.inv_neg_lap(g), g / 64.0, atol=1e-15)

    @pytest.mark.parametrize("k", [1, 2, 5, 8])
    def test_inv_neg_lap_modes_1d(self, k):
        grid = Grid(1, 16, 2.5)
        solver = SpectralSolver(grid)
        lam = stencil_eigenvalue(grid, k)
        for kind in ("cos", "sin"):
            f = mode_1d(grid, k, kind)
            if norm_inf(f) < 0.5:
                continue  # cos mode vanishes at centers for k = n/2
            assert np.max(np.abs(solver.inv_neg_lap(f) - f / lam)) <= 1e-13

    def test_inv_neg_lap_product_mode_2d(self):
        grid = Grid(2, 8, 1.0)
        solver = SpectralSolver(grid)
        x, y = grid.coordinates()
        f = np.cos(2.0 * np.pi * 3 * x) * np.sin(2.0 * np.pi * 1 * y)
        lam = stencil_eigenvalue(grid, 3) + stencil_eigenvalue(grid, 1)
        assert np.max(np.abs(solver.inv_neg_lap(f) - f / lam)) <= 1e-13

    @pytest.mark.parametrize("dim,n", [(1, 32), (2, 16), (3, 8)])
    def test_stencil_roundtrip(self, dim, n):
        grid = Grid(dim, n, 1.8)
        solver = SpectralSolver(grid)
        f = random_mean_zero(grid, 7 * dim)
        back = -lap(grid, solver.inv_neg_lap(f))
        assert np.max(np.abs(back - f)) <= 1e-11 * norm_inf(f)

    def test_output_mean_zero(self):
        grid = Grid(2, 16, 1.0)
        solver = SpectralSolver(grid)
        psi = solver.inv_neg_lap(random_mean_zero(grid, 3))
        assert abs(float(np.mean(psi))) <= 1e-14


class TestHminus1:
    def test_single_mode_norm_closed_form(self):
        grid = Grid(1, 16, 2.0)
        solver = SpectralSolver(grid)
        c, k = 3.0, 2
        f = c * mode_1d(grid, k)
        # ||f||_2^2 = c^2 L / 2, so ||f||_{H^-1}^2 = c^2 L / (2 lambda_k).
        expected = math.sqrt(c**2 * grid.length / (2.0 * stencil_eigenvalue(grid, k)))
        assert solver.hminus1_norm(f) == pytest.approx(expected, rel=1e-13)

    def test_inner_matches_pinv_oracle(self):
        grid = Grid(2, 6, 1.3)
        solver = SpectralSolver(grid)
        f = random_mean_zero(grid, 21)
        g = random_mean_zero(grid, 22)
        pinv = np.linalg.pinv(reference_neg_lap_matrix(grid))
        expected = grid.cell_volume * float(f.ravel() @ pinv @ g.ravel())
        assert solver.hminus1_inner(f, g) == pytest.approx(expected, rel=1e-11)
        assert solver.hminus1_inner(f, g) == pytest.approx(
            solver.hminus1_inner(g, f), rel=1e-11
        )

    def test_norm_positive_definite(self):
        grid = Grid(2, 8, 1.0)
        solver = SpectralSolver(grid)
        f = random_mean_zero(grid, 5)
        assert solver.hminus1_norm(f) > 0.0
        assert solver.hminus1_norm(np.zeros(grid.shape)) == 0.0


class TestPreconditionerSolve:
    def test_pure_inverse_laplacian_coefficients(self):
        # L = (-lap)^{-1} alone, so L d = r means d = -lap(r).
        grid = Grid(2, 8, 1.0)
        solver = SpectralSolver(grid)
        r = random_mean_zero(grid, 9)
        d = solver.solve_preconditioner(r, 1.0, 0.0, 0.0)
        assert np.max(np.abs(d + lap(grid, r))) <= 1e-11 * norm_inf(d)

    def test_single_mode_closed_form(self):
        grid = Grid(1, 16, 1.0)
        solver = SpectralSolver(grid)
        a0, a1, a2 = 10.0, 1.0, 0.04
        k = 3
        f = mode_1d(grid, k, "sin")
        lam = stencil_eigenvalue(grid, k)
        d = solver.solve_preconditioner(f, a0, a1, a2)
        assert np.max(np.abs(d - f / (a0 / lam + a1 + a2 * lam))) <= 1e-14

    @pytest.mark.parametrize("coeffs", [(10.0, 1.0, 0.04), (0.5, 0.0, 1.0)])
    def test_matches_dense_pseudoinverse(self, coeffs):
        grid = Grid(2, 6, 1.3)
        solver = SpectralSolver(grid)
        r = random_mean_zero(grid, 47)
        neg_lap = reference_neg_lap_matrix(grid)
        a0, a1, a2 = coeffs
        mat = a0 * np.linalg.pinv(neg_lap) + a1 * np.eye(grid.num_cells) + a2 * neg_lap
        expected = (np.linalg.pinv(mat) @ r.ravel()).reshape(grid.shape)
        d = solver.solve_preconditioner(r, a0, a1, a2)
        assert np.max(np.abs(d - expected)) <= 1e-11

    def test_grid_space_roundtrip(self):
        # Verify a0 (-lap)^{-1} d + a1 d - a2 lap(d) reproduces r.
        grid = Grid(2, 16, 1.0)
        solver = SpectralSolver(grid)
        r = random_mean_zero(grid, 13)
        a0, a1, a2 = 100.0, 1.0, 0.01
        d = solver.solve_preconditioner(r, a0, a1, a2)
        back = a0 * solver.inv_neg_lap(d) + a1 * d - a2 * lap(grid, d)
        assert np.max(np.abs(back - r)) <= 1e-11 * norm_inf(r)

    def test_solution_is_mean_zero_and_deterministic(self):
        grid = Grid(2, 8, 1.0)
        solver = SpectralSolver(grid)
        r = random_mean_zero(grid, 2)
        d1 = solver.solve_preconditioner(r, 3.0, 1.0, 0.2)
        d2 = solver.solve_preconditioner(r, 3.0, 1.0, 0.2)
        assert np.array_equal(d1, d2)
        assert abs(float(np.mean(d1))) <= 1e-14

    @pytest.mark.parametrize("coeffs", [(0.0, 1.0, 1.0), (-1.0, 0.0, 0.0), (1.0, -1.0, 0.0), (1.0, 0.0, -0.5)])
    def test_rejects_indefinite_coefficients(self, coeffs):
        grid = Grid(1, 8, 1.0)
        solver = SpectralSolver(grid)
        r = random_mean_zero(grid, 1)
        with pytest.raises(InvalidCoefficientsError):
            solver.solve_preconditioner(r, *coeffs)
        with pytest.raises(InvalidCoefficientsError):
            solver.solve_preconditioner_with_poisson(r, *coeffs)


class TestFusedPoissonSolve:
    def test_first_output_bitwise_matches_plain_solve(self):
        grid = Grid(2, 16, 1.0)
        solver = SpectralSolver(grid)
        r = random_mean_zero(grid, 31)
        a0, a1, a2 = 1500.0, 2.2528, 0.0104
        d_fused, _ = solver.solve_preconditioner_with_poisson(r, a0, a1, a2)
        assert np.array_equal(d_fused, solver.solve_preconditioner(r, a0, a1, a2))

    def test_second_output_is_poisson_solve_of_first(self):
        grid = Grid(2, 16, 1.0)
        solver = SpectralSolver(grid)
        r = random_mean_zero(grid, 32)
        d, psi = solver.solve_preconditioner_with_poisson(r, 100.0, 1.0, 0.25)
        assert np.max(np.abs(psi - solver.inv_neg_lap(d))) <= 1e-12 * max(
            norm_inf(psi), 1e-300
        )
        assert abs(float(np.mean(psi))) <= 1e-14


class TestZeroModeHandling:
    def test_rejects_nonzero_mean(self):
        grid = Grid(2, 8, 1.0)
        solver = SpectralSolver(grid)
        with pytest.raises(NonZeroMeanError):
            solver.inv_neg_lap(np.ones(grid.shape))
        with pytest.raises(NonZeroMeanError):
            solver.solve_preconditioner(
                random_mean_zero(grid, 4) + 0.01, 1.0, 1.0, 1.0
            )

    def test_tolerates_and_removes_roundoff_mean(self):
        grid = Grid(2, 8, 1.0)
        solver = SpectralSolver(grid)
        f = random_mean_zero(grid, 6)
        f += 1e-12 * norm_inf(f)  # below the relative mean tolerance
        psi = solver.inv_neg_lap(f)
        assert abs(float(np.mean(psi))) <= 1e-14

    def test_mean_tolerance_is_configurable(self):
        grid = Grid(1, 8, 1.0)
        strict = SpectralSolver(grid, mean_tol=1e-16)
        loose = SpectralSolver(grid, mean_tol=1e-2)
        f = random_mean_zero(grid, 8)
        f += 1e-6 * norm_inf(f)
        with pytest.raises(NonZeroMeanError):
            strict.inv_neg_lap(f)
        loose.inv_neg_lap(f)


class TestDenseOracles:
    @pytest.mark.parametrize("dim,n", [(1, 8), (2, 6), (3, 4)])
    def test_dense_neg_lap_matches_stencil_columns(self, dim, n):
        grid = Grid(dim, n, 1.1)
        assert np.max(
            np.abs(dense_neg_lap_matrix(grid) - reference_neg_lap_matrix(grid))
        ) <= 1e-12 / grid.h**2

    def test_dense_preconditioner_assembly(self):
        grid = Grid(2, 4, 1.0)
        a0, a1, a2 = 2.0, 3.0, 0.5
        neg_lap = dense_neg_lap_matrix(grid)
        expected = (
            a0 * np.linalg.pinv(neg_lap) + a1 * np.eye(grid.num_cells) + a2 * neg_lap
        )
        assert np.allclose(
            dense_preconditioner_matrix(grid, a0, a1, a2), expected, atol=1e-12
        )

    def test_dense_cap_enforced(self):
        with pytest.raises(GridTooLargeError):
            dense_neg_lap_matrix(Grid(1, 13, 1.0))
        with pytest.raises(GridTooLargeError):
            dense_preconditioner_matrix(Grid(1, 16, 1.0), 1.0, 0.0, 0.0)
        dense_neg_lap_matrix(Grid(1, 12, 1.0))  # boundary case allowed

    def test_dense_matrix_is_symmetric_psd(self):
        grid = Grid(2, 5, 1.0)
        mat = dense_neg_lap_matrix(grid)
        assert np.allclose(mat, mat.T)
        eigs = np.linalg.eigvalsh(mat)
        assert eigs[0] >= -1e-10
        assert abs(eigs[0]) <= 1e-10  # constant null vector
        assert eigs[1] > 0.1
