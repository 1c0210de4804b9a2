"""Stencil calculus checked against independently assembled dense matrices.

The oracles below build explicit matrices for the difference operators with
nothing but integer index arithmetic, sharing no code with the library, and
the quadrature oracle uses compensated summation.  Agreement tolerances are
absolute on unit-scale random fields.
"""

import math

import numpy as np
import pytest

from thinfilm import (
    Grid,
    cell_average,
    div,
    face_average,
    grad,
    grad_norm_2,
    inner,
    inner_face,
    lap,
    mean,
    norm_h1,
    norm_inf,
    norm_p,
    norm_2,
)


def flat_index(coords, n, dim):
    """C-order flat index of integer cell coordinates (array axis order)."""
    out = 0
    for c in coords:
        out = out * n + c
    return out


def cells(n, dim):
    return [
        tuple((flat // n ** (dim - 1 - ax)) % n for ax in range(dim))
        for flat in range(n**dim)
    ]


def forward_diff_matrix(grid, direction):
    """Matrix of the center-to-face difference along a physical direction."""
    n, dim = grid.n, grid.dim
    ax = grid.dim - 1 - direction
    size = n**dim
    mat = np.zeros((size, size))
    for coords in cells(n, dim):
        row = flat_index(coords, n, dim)
        nxt = list(coords)
        nxt[ax] = (nxt[ax] + 1) % n
        mat[row, flat_index(nxt, n, dim)] += 1.0 / grid.h
        mat[row, row] -= 1.0 / grid.h
    return mat


def backward_diff_matrix(grid, direction):
    """Matrix of the face-to-center difference along a physical direction."""
    n, dim = grid.n, grid.dim
    ax = grid.dim - 1 - direction
    size = n**dim
    mat = np.zeros((size, size))
    for coords in cells(n, dim):
        row = flat_index(coords, n, dim)
        prv = list(coords)
        prv[ax] = (prv[ax] - 1) % n
        mat[row, row] += 1.0 / grid.h
        mat[row, flat_index(prv, n, dim)] -= 1.0 / grid.h
    return mat


def laplacian_matrix(grid):
    n, dim = grid.n, grid.dim
    size = n**dim
    mat = np.zeros((size, size))
    inv_h2 = 1.0 / grid.h**2
    for coords in cells(n, dim):
        row = flat_index(coords, n, dim)
        mat[row, row] -= 2.0 * dim * inv_h2
        for ax in range(dim):
            for step in (1, -1):
                other = list(coords)
                other[ax] = (other[ax] + step) % n
                mat[row, flat_index(other, n, dim)] += inv_h2
    return mat


def random_field(grid, seed):
    return np.random.default_rng(seed).standard_normal(grid.shape)


class TestGridGeometry:
    def test_spacing_and_volumes(self):
        grid = Grid(2, 8, 2.0)
        assert grid.h == 0.25
        assert grid.shape == (8, 8)
        assert grid.num_cells == 64
        assert grid.cell_volume == 0.0625
        assert grid.volume == 4.0

    def test_validation(self):
        with pytest.raises(ValueError):
            Grid(0, 8, 1.0)
        with pytest.raises(ValueError):
            Grid(4, 8, 1.0)
        with pytest.raises(ValueError):
            Grid(2, 1, 1.0)
        with pytest.raises(ValueError):
            Grid(2, 8, 0.0)
        with pytest.raises(ValueError):
            Grid(2, 8, 1.0).validate_field(np.zeros((8, 4)))

    def test_cell_centers_offset_half(self):
        grid = Grid(1, 4, 1.0)
        (x,) = grid.coordinates()
        assert np.allclose(x, [0.125, 0.375, 0.625, 0.875])

    def test_x_varies_along_last_axis(self):
        grid = Grid(2, 4, 1.0)
        x, y = grid.coordinates()
        # rows share y, columns share x
        assert np.allclose(x[0], x[3])
        assert np.allclose(y[:, 0], y[:, 3])
        assert x[0, 1] - x[0, 0] == pytest.approx(grid.h)
        assert y[1, 0] - y[0, 0] == pytest.approx(grid.h)
        assert grid.axis_of(0) == 1
        assert grid.axis_of(1) == 0

    def test_coordinates_3d_orientation(self):
        grid = Grid(3, 3, 3.0)
        x, y, z = grid.coordinates()
        assert x[0, 0, 1] - x[0, 0, 0] == pytest.approx(1.0)
        assert y[0, 1, 0] - y[0, 0, 0] == pytest.approx(1.0)
        assert z[1, 0, 0] - z[0, 0, 0] == pytest.approx(1.0)


class TestDifferenceOperators:
    def test_grad_1d_hand_example(self):
        grid = Grid(1, 4, 1.0)
        u = np.array([1.0, 2.0, 4.0, 8.0])
        (gx,) = grad(grid, u)
        assert np.allclose(gx, [4.0, 8.0, 16.0, -28.0])

    def test_div_1d_hand_example(self):
        grid = Grid(1, 4, 1.0)
        f = np.array([1.0, 2.0, 4.0, 8.0])
        assert np.allclose(div(grid, (f,)), [-28.0, 4.0, 8.0, 16.0])

    def test_lap_1d_hand_example(self):
        grid = Grid(1, 4, 2.0)
        u = np.array([0.0, 1.0, 0.0, 0.0])
        # h = 1/2, stencil (1, -2, 1)/h^2
        assert np.allclose(lap(grid, u), [4.0, -8.0, 4.0, 0.0])

    @pytest.mark.parametrize("dim,n", [(1, 16), (2, 8), (3, 5)])
    def test_grad_matches_dense_oracle(self, dim, n):
        grid = Grid(dim, n, 1.7)
        u = random_field(grid, 11 + dim)
        g = grad(grid, u)
        for d in range(dim):
            expected = forward_diff_matrix(grid, d) @ u.ravel()
            assert np.max(np.abs(g[d].ravel() - expected)) <= 1e-11

    @pytest.mark.parametrize("dim,n", [(1, 16), (2, 8), (3, 5)])
    def test_div_matches_dense_oracle(self, dim, n):
        grid = Grid(dim, n, 0.9)
        f = tuple(random_field(grid, 23 + d) for d in range(dim))
        expected = np.zeros(grid.num_cells)
        for d in range(dim):
            expected += backward_diff_matrix(grid, d) @ f[d].ravel()
        assert np.max(np.abs(div(grid, f).ravel() - expected)) <= 1e-11

    @pytest.mark.parametrize("dim,n", [(1, 16), (2, 8), (3, 6)])
    def test_lap_matches_dense_oracle(self, dim, n):
        grid = Grid(dim, n, 2.3)
        u = random_field(grid, 37 + dim)
        expected = laplacian_matrix(grid) @ u.ravel()
        assert np.max(np.abs(lap(grid, u).ravel() - expected)) <= 1e-11

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_div_grad_equals_lap(self, dim):
        grid = Grid(dim, 6, 1.3)
        u = random_field(grid, 5 + dim)
        assert np.max(np.abs(div(grid, grad(grid, u)) - lap(grid, u))) <= 1e-12

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_translation_equivariance(self, dim):
        grid = Grid(dim, 6, 1.0)
        u = random_field(grid, 77 + dim)
        shift = {"shift": 2, "axis": grid.axis_of(0)}
        assert np.allclose(
            lap(grid, np.roll(u, **shift)), np.roll(lap(grid, u), **shift)
        )
        g_shifted = grad(grid, np.roll(u, **shift))
        for d in range(dim):
            assert np.allclose(g_shifted[d], np.roll(grad(grid, u)[d], **shift))

    def test_constants_annihilated(self):
        grid = Grid(2, 9, 3.0)
        u = np.full(grid.shape, 4.2)
        assert norm_inf(lap(grid, u)) <= 1e-14 / grid.h**2
        assert all(norm_inf(c) == 0.0 for c in grad(grid, u))

    def test_lap_output_mean_zero(self):
        grid = Grid(2, 16, 1.0)
        u = random_field(grid, 3)
        assert abs(mean(grid, lap(grid, u))) <= 1e-12 * norm_inf(u) / grid.h**2


class TestAverages:
    def test_face_average_hand_example(self):
        grid = Grid(1, 4, 1.0)
        u = np.array([1.0, 3.0, 5.0, 7.0])
        (ax,) = face_average(grid, u)
        assert np.allclose(ax, [2.0, 4.0, 6.0, 4.0])

    def test_cell_average_inverts_shift(self):
        grid = Grid(2, 8, 1.0)
        f = tuple(random_field(grid, 61 + d) for d in range(2))
        back = cell_average(grid, f)
        for d in range(2):
            expected = 0.5 * (f[d] + np.roll(f[d], 1, axis=grid.axis_of(d)))
            assert np.allclose(back[d], expected)


class TestInnerProductsAndNorms:
    def test_inner_matches_fsum_oracle(self):
        grid = Grid(2, 12, 1.9)
        u = random_field(grid, 101)
        v = random_field(grid, 102)
        expected = grid.cell_volume * math.fsum(
            float(a) * float(b) for a, b in zip(u.ravel(), v.ravel())
        )
        assert inner(grid, u, v) == pytest.approx(expected, abs=1e-13, rel=1e-13)

    def test_inner_face_reduces_to_plain_sum(self):
        grid = Grid(2, 10, 1.0)
        f = tuple(random_field(grid, 71 + d) for d in range(2))
        g = tuple(random_field(grid, 81 + d) for d in range(2))
        plain = grid.cell_volume * sum(float(np.sum(f[d] * g[d])) for d in range(2))
        assert inner_face(grid, f, g) == pytest.approx(plain, rel=1e-13, abs=1e-13)

    @pytest.mark.parametrize("case", range(100))
    def test_summation_by_parts(self, case):
        rng = np.random.default_rng(1000 + case)
        dim = int(rng.integers(1, 4))
        n = int(rng.integers(3, 9))
        grid = Grid(dim, n, float(rng.uniform(0.5, 3.0)))
        psi = rng.standard_normal(grid.shape)
        f = tuple(rng.standard_normal(grid.shape) for _ in range(dim))
        lhs = inner(grid, psi, div(grid, f))
        rhs = -inner_face(grid, grad(grid, psi), f)
        scale = max(1.0, abs(lhs))
        assert abs(lhs - rhs) <= 1e-12 * scale

    def test_lap_is_symmetric_negative(self):
        grid = Grid(2, 7, 1.0)
        u = random_field(grid, 31)
        v = random_field(grid, 32)
        assert inner(grid, u, lap(grid, v)) == pytest.approx(
            inner(grid, lap(grid, u), v), rel=1e-12, abs=1e-12
        )
        assert inner(grid, u, lap(grid, u)) <= 1e-12

    def test_mean_is_volume_average(self):
        grid = Grid(2, 6, 2.0)
        u = random_field(grid, 55)
        assert mean(grid, u) == pytest.approx(
            inner(grid, u, np.ones(grid.shape)) / grid.volume, rel=1e-13
        )

    def test_norm_p_hand_values(self):
        grid = Grid(1, 4, 2.0)
        u = np.array([1.0, -2.0, 2.0, -1.0])
        # h = 1/2: ||u||_1 = 3, ||u||_2 = sqrt(5), ||u||_inf = 2
        assert norm_p(grid, u, 1) == pytest.approx(3.0, rel=1e-15)
        assert norm_2(grid, u) == pytest.approx(math.sqrt(5.0), rel=1e-15)
        assert norm_p(grid, u, 2) == pytest.approx(norm_2(grid, u), rel=1e-14)
        assert norm_inf(u) == 2.0
        with pytest.raises(ValueError):
            norm_p(grid, u, 0.5)

    def test_grad_norm_agrees_with_face_inner(self):
        grid = Grid(2, 9, 1.4)
        u = random_field(grid, 91)
        g = grad(grid, u)
        expected = math.sqrt(inner_face(grid, g, g))
        assert grad_norm_2(grid, u) == pytest.approx(expected, rel=1e-13)

    def test_norm_h1_combines_value_and_slope(self):
        grid = Grid(2, 9, 1.4)
        u = random_field(grid, 92)
        expected = math.sqrt(norm_2(grid, u) ** 2 + grad_norm_2(grid, u) ** 2)
        assert norm_h1(grid, u) == pytest.approx(expected, rel=1e-13)

    def test_norms_scale_with_volume(self):
        # Doubling the box at fixed n scales ||1||_2 by 2^(dim/2).
        u4 = np.ones((4, 4))
        assert norm_2(Grid(2, 4, 2.0), u4) == pytest.approx(
            2.0 * norm_2(Grid(2, 4, 1.0), u4), rel=1e-14
        )
