"""Free energy and chemical potentials of the droplet film model.

The film height phi > 0 carries the singular two-term potential

    U(x) = (1/3) x^-8 - (4/3) x^-2,

and the discrete free energy on a periodic staggered grid is

    F(phi) = <U(phi), 1> + (eps^2 / 2) ||grad phi||_2^2.

Two convex/concave splittings of F drive the time schemes: the plain one,
F = [<(1/3) phi^-8, 1> + (eps^2/2)||grad phi||^2] - [<(4/3) phi^-2, 1>],
and a stabilized one that adds (4/3) a0 <phi^2, 1> to both halves so the
non-gradient part f(x) = U(x) + (4/3) a0 x^2 is convex on (0, inf).  The
smallest constant achieving that convexity is returned by :func:`a0_star`.

Negative powers are formed by explicit repeated multiplication of the
reciprocal, never through transcendental ``pow``, so results are bitwise
reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveFieldError
from .grid import Grid, grad_norm_2, inner, lap, norm_2
from .spectral import SpectralSolver


def a0_star() -> float:
    """Smallest a0 making U(x) + (4/3) a0 x^2 convex on (0, inf).

    Equals (9/5) (2/15)^(2/3): the curvature 24 x^-10 - 8 x^-4 attains its
    minimum -(8/3) a0_star at x = (2/15)^(-1/6).
    """
    return (9.0 / 5.0) * (2.0 / 15.0) ** (2.0 / 3.0)


def potential_curvature(x, a0: float):
    """Second derivative (8/3)(9 x^-10 - 3 x^-4 + a0) of the stabilized core.

    Accepts scalars or arrays of strictly positive x.
    """
    x = np.asarray(x, dtype=float)
    inv = 1.0 / x
    inv2 = inv * inv
    inv4 = inv2 * inv2
    inv10 = inv4 * inv4 * inv2
    return (8.0 / 3.0) * (9.0 * inv10 - 3.0 * inv4 + a0)


@dataclass(frozen=True)
class PhysParams:
    """Model and stabilization parameters shared by the time steppers.

    a0 defaults to the sharp convexity constant :func:`a0_star`; the
    second-difference coefficient a_stab defaults to its admissible floor
    (4/9) a0^2.
    """

    eps: float
    a0: float = None
    a_stab: float = None

    def __post_init__(self):
        if not (self.eps > 0.0):
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.a0 is None:
            object.__setattr__(self, "a0", a0_star())
        if self.a_stab is None:
            object.__setattr__(self, "a_stab", (4.0 / 9.0) * self.a0**2)
        if not (self.a0 > 0.0):
            raise ValueError(f"a0 must be positive, got {self.a0}")
        if not (self.a_stab >= 0.0):
            raise ValueError(f"a_stab must be >= 0, got {self.a_stab}")


def check_positive(phi: np.ndarray, what: str = "field") -> None:
    """Raise NonPositiveFieldError unless every entry of phi is > 0."""
    if not np.all(phi > 0.0):
        bad = float(np.min(phi))
        raise NonPositiveFieldError(f"{what} must be strictly positive, min = {bad}")


def _recip_powers_2_8(phi: np.ndarray):
    """(phi^-2, phi^-8) by repeated multiplication."""
    inv = 1.0 / phi
    inv2 = inv * inv
    inv4 = inv2 * inv2
    return inv2, inv4 * inv4


def _recip_powers_3_9(phi: np.ndarray):
    """(phi^-3, phi^-9) by repeated multiplication."""
    inv = 1.0 / phi
    inv3 = inv * inv * inv
    return inv3, inv3 * inv3 * inv3


def discrete_energy(grid: Grid, phi: np.ndarray, eps: float) -> float:
    """Total discrete free energy F(phi)."""
    check_positive(phi)
    inv2, inv8 = _recip_powers_2_8(phi)
    bulk = inner(grid, inv8 / 3.0 - (4.0 / 3.0) * inv2, np.ones(grid.shape))
    return bulk + 0.5 * eps**2 * grad_norm_2(grid, phi) ** 2


def splitting_first_order(grid: Grid, phi: np.ndarray, eps: float):
    """Convex/concave halves (Fc, Fe) with F = Fc - Fe, plain splitting."""
    check_positive(phi)
    inv2, inv8 = _recip_powers_2_8(phi)
    one = np.ones(grid.shape)
    fc = inner(grid, inv8, one) / 3.0 + 0.5 * eps**2 * grad_norm_2(grid, phi) ** 2
    fe = (4.0 / 3.0) * inner(grid, inv2, one)
    return fc, fe


def splitting_stabilized(grid: Grid, phi: np.ndarray, eps: float, a0: float):
    """Convex/concave halves (Fc, Fe) of the quadratically stabilized split.

    Fc = <U(phi) + (4/3) a0 phi^2, 1> + (eps^2/2)||grad phi||^2 and
    Fe = (4/3) a0 <phi^2, 1>, so again F = Fc - Fe.
    """
    check_positive(phi)
    quad = (4.0 / 3.0) * a0 * inner(grid, phi, phi)
    return discrete_energy(grid, phi, eps) + quad, quad


def modified_energy(
    grid: Grid,
    solver: SpectralSolver,
    phi_new: np.ndarray,
    phi_old: np.ndarray,
    eps: float,
    a0: float,
    dt: float,
) -> float:
    """Two-level Lyapunov functional of the stabilized two-step scheme.

    F(phi_new) + (1/(4 dt)) ||phi_new - phi_old||_{-1}^2
               + (4/3) a0 ||phi_new - phi_old||_2^2.
    """
    diff = phi_new - phi_old
    # The increment is mean-free up to rounding on the scale of phi; finish
    # the cancellation so the H^-1 solve accepts near-stationary steps.
    return (
        discrete_energy(grid, phi_new, eps)
        + solver.hminus1_norm(diff - np.mean(diff)) ** 2 / (4.0 * dt)
        + (4.0 / 3.0) * a0 * norm_2(grid, diff) ** 2
    )


def mu_exact(grid: Grid, phi: np.ndarray, eps: float) -> np.ndarray:
    """Chemical potential -(8/3)(phi^-9 - phi^-3) - eps^2 lap(phi)."""
    check_positive(phi)
    inv3, inv9 = _recip_powers_3_9(phi)
    return -(8.0 / 3.0) * (inv9 - inv3) - eps**2 * lap(grid, phi)


def mu_first_order(
    grid: Grid, phi_new: np.ndarray, phi_old: np.ndarray, eps: float
) -> np.ndarray:
    """Splitting potential: implicit convex part at phi_new, concave at phi_old.

    -(8/3) phi_new^-9 + (8/3) phi_old^-3 - eps^2 lap(phi_new).
    """
    check_positive(phi_new, "phi_new")
    check_positive(phi_old, "phi_old")
    _, inv9 = _recip_powers_3_9(phi_new)
    inv3_old, _ = _recip_powers_3_9(phi_old)
    return (
        -(8.0 / 3.0) * inv9 + (8.0 / 3.0) * inv3_old - eps**2 * lap(grid, phi_new)
    )


def mu_bdf2(
    grid: Grid,
    phi_new: np.ndarray,
    phi_check: np.ndarray,
    phi_old: np.ndarray,
    params: PhysParams,
    dt: float,
) -> np.ndarray:
    """Stabilized two-step potential.

    -(8/3)(phi_new^-9 - phi_new^-3) + (8/3) a0 (phi_new - phi_check)
      - a_stab dt lap(phi_new - phi_old) - eps^2 lap(phi_new),
    where phi_check is the extrapolated history 2 phi^n - phi^{n-1}.
    """
    check_positive(phi_new, "phi_new")
    inv3, inv9 = _recip_powers_3_9(phi_new)
    return (
        -(8.0 / 3.0) * (inv9 - inv3)
        + (8.0 / 3.0) * params.a0 * (phi_new - phi_check)
        - params.a_stab * dt * lap(grid, phi_new - phi_old)
        - params.eps**2 * lap(grid, phi_new)
    )
