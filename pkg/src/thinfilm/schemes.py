"""Positivity-preserving implicit time steppers for the film equation.

The evolution is the mass-conserving gradient flow

    d phi / dt = lap(mu),    mu = -(8/3)(phi^-9 - phi^-3) - eps^2 lap(phi),

discretized on a periodic staggered grid.  Two steppers are provided.

FirstOrderScheme treats the convex potential term phi^-9 and the surface
term implicitly and the concave term phi^-3 explicitly:

    (phi' - phi) / dt = lap[ -(8/3) phi'^-9 + (8/3) phi^-3 - eps^2 lap phi' ].

Bdf2Scheme is the stabilized two-step variant, second order in time:

    (3/2 phi' - 2 phi + 1/2 phi_prev) / dt = lap(mu'),
    mu' = -(8/3)(phi'^-9 - phi'^-3) + (8/3) a0 (phi' - phi_hat)
          - a_stab dt lap(phi' - phi) - eps^2 lap(phi'),

with phi_hat = 2 phi - phi_prev, a0 at least the convexity constant
a0_star() and a_stab >= (4/9) a0^2.

Every step is posed as the Euler-Lagrange equation of a strictly convex
functional on the fixed-mean slice and solved by preconditioned steepest
descent; iterates stay strictly positive through the line-search barrier,
so the singular potential is never evaluated at a non-positive height.  An
optional source field S (mean-zero) turns the mass balance into
d phi / dt = lap(mu) + S; its lifted contribution (-lap)^{-1}(S - mean S)
enters the residual additively and is assembled once per step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import energy as _energy
from .energy import PhysParams, a0_star, check_positive
from .errors import (
    InvalidCoefficientsError,
    MaxItersExceededError,
    MissingHistoryError,
    NonPositiveFieldError,
    NonZeroMeanError,
    PositivityLostError,
    SolverDivergedError,
)
from .grid import Grid, grad_norm_2, inner, lap, mean, norm_inf
from .psd import SolverConfig, barrier_alpha, psd_solve
from .spectral import SpectralSolver

_STEP_MASS_TOL = 1e-12
_FORCING_MEAN_TOL = 1e-12


def _deflate(u: np.ndarray) -> np.ndarray:
    """Project out the mean of a field that is mean-free in exact arithmetic.

    The time-increment combinations fed to the inverse Laplacian cancel to
    rounding error in the mean (mass conservation), but on the scale of phi
    rather than of the increment, so the cancellation must be finished
    explicitly before the spectral solve.
    """
    return u - np.mean(u)


@dataclass
class StepState:
    """Trajectory point: current field, optional history, time bookkeeping.

    beta0 is the conserved volume average fixed by the initial data; every
    produced state must match it to relative 1e-10.
    """

    phi: np.ndarray
    phi_prev: Optional[np.ndarray]
    t: float
    beta0: float
    step_index: int = 0


@dataclass
class StepReport:
    """Per-step diagnostics returned alongside the new state."""

    psd_iters: int
    final_residual: float
    energy: float
    modified_energy: Optional[float]
    min_phi: float
    mass_drift: float


@dataclass
class StepSystem:
    """Closures defining one implicit step, exposed for solver diagnostics.

    ``directional`` factors the line-search derivative: the residual is
    affine in the iterate apart from the pointwise inverse-power term, so
    g(alpha) = -<r(phi + alpha d), d> splits into one precomputed spectral
    solve plus a cheap pointwise part per trial alpha.  It agrees with the
    naive evaluation through ``residual`` to rounding error.
    """

    residual: Callable
    functional: Callable
    precondition: Callable
    phi_init: np.ndarray
    directional: Optional[Callable] = None


def initial_state(grid: Grid, phi0: np.ndarray, t: float = 0.0) -> StepState:
    """One-level starting state for the first-order scheme."""
    grid.validate_field(phi0)
    check_positive(phi0, "initial data")
    return StepState(phi0.copy(), None, t, mean(grid, phi0), 0)


def restart_state(grid: Grid, phi0: np.ndarray, t: float = 0.0) -> StepState:
    """Two-level state with duplicated history, phi_prev = phi0.

    Used when (re)starting the two-step scheme without usable history, e.g.
    after a time-step-size change; the first step taken from it degrades to
    first order locally without disturbing the energy decay.
    """
    grid.validate_field(phi0)
    check_positive(phi0, "restart data")
    return StepState(phi0.copy(), phi0.copy(), t, mean(grid, phi0), 0)


def ghost_init(
    grid: Grid,
    phi0: np.ndarray,
    params: PhysParams,
    dt: float,
    forcing: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Synthesize history one step before t=0 by explicit backward Euler.

    Returns phi_prev = phi0 - dt (lap(mu(phi0)) + S0) where S0 is the
    optional mean-adjusted source at t=0.  Raises PositivityLostError when
    the synthesized field is not strictly positive, in which case the
    caller should shrink dt or fall back to :func:`restart_state`.
    """
    check_positive(phi0, "initial data")
    rate = lap(grid, _energy.mu_exact(grid, phi0, params.eps))
    if forcing is not None:
        rate = rate + (forcing - mean(grid, forcing))
    phi_prev = phi0 - dt * rate
    if not np.all(phi_prev > 0.0):
        raise PositivityLostError(
            "synthesized history lost positivity; reduce dt or use restart_state"
        )
    return phi_prev


class _SchemeBase:
    def __init__(
        self,
        grid: Grid,
        params: PhysParams,
        solver: Optional[SpectralSolver] = None,
        psd_config: Optional[SolverConfig] = None,
    ):
        self.grid = grid
        self.params = params
        self.solver = solver if solver is not None else SpectralSolver(grid)
        self.psd_config = psd_config if psd_config is not None else SolverConfig()

    def _lift_forcing(self, forcing: Optional[np.ndarray]) -> Optional[np.ndarray]:
        """(-lap)^{-1} of the mean-adjusted source, or None."""
        if forcing is None:
            return None
        m = mean(self.grid, forcing)
        if abs(m) > _FORCING_MEAN_TOL * max(1.0, norm_inf(forcing)):
            raise NonZeroMeanError(
                f"source field must be mean-zero, got mean {m:.3e}"
            )
        return self.solver.inv_neg_lap(forcing - m)

    def _finish_step(self, state: StepState, phi_new: np.ndarray, trace, dt: float,
                     modified: Optional[float]) -> tuple:
        min_phi = float(np.min(phi_new))
        if not min_phi > 0.0:
            raise PositivityLostError(f"step produced min phi = {min_phi}")
        # Consistency is judged per step (a broken solve shifts the mean far
        # beyond rounding in a single update); the cumulative drift against
        # the conserved mean is reported for monitoring.
        step_drift = abs(mean(self.grid, phi_new) - mean(self.grid, state.phi))
        if step_drift > _STEP_MASS_TOL * max(1.0, abs(state.beta0)):
            raise SolverDivergedError(
                f"mass drifted by {step_drift:.3e} in one step; solve is inconsistent"
            )
        drift = abs(mean(self.grid, phi_new) - state.beta0)
        report = StepReport(
            psd_iters=trace.iterations,
            final_residual=trace.residual_norms[-1],
            energy=_energy.discrete_energy(self.grid, phi_new, self.params.eps),
            modified_energy=modified,
            min_phi=min_phi,
            mass_drift=drift,
        )
        new_state = StepState(
            phi=phi_new,
            phi_prev=state.phi,
            t=state.t + dt,
            beta0=state.beta0,
            step_index=state.step_index + 1,
        )
        return new_state, report

    def _solve(self, system: StepSystem, phi_init: Optional[np.ndarray] = None):
        try:
            return psd_solve(
                self.grid,
                system.residual,
                system.precondition,
                system.phi_init if phi_init is None else phi_init,
                self.psd_config,
                directional=system.directional,
            )
        except MaxItersExceededError as exc:
            raise SolverDivergedError(str(exc)) from exc

    def _warm_start(self, state: StepState) -> Optional[np.ndarray]:
        """Extrapolated initial iterate, or None without usable history.

        Starting from phi + theta (phi - phi_prev) with theta capped at half
        the positivity barrier cuts the descent iteration count on smooth
        trajectories; the increment is mean-free, so the conserved mean is
        untouched, and the solution of the convex step problem is the same.
        """
        if state.phi_prev is None:
            return None
        delta = state.phi - state.phi_prev
        if not np.any(delta):
            return None
        theta = min(1.0, barrier_alpha(state.phi, delta, 0.5))
        return state.phi + theta * delta


class FirstOrderScheme(_SchemeBase):
    """Unconditionally energy-stable convex-splitting stepper."""

    def preconditioner_coefficients(self, dt: float) -> tuple:
        """(a0, a1, a2) of L = a0 (-lap)^{-1} + a1 I + a2 (-lap)."""
        if not (dt > 0.0):
            raise InvalidCoefficientsError(f"dt must be positive, got {dt}")
        return (1.0 / dt, 1.0, self.params.eps**2)

    def residual(
        self,
        phi: np.ndarray,
        phi_old: np.ndarray,
        dt: float,
        forcing: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """Residual field whose mean-zero projection vanishes at the step."""
        system = self.step_system_from(phi_old, dt, forcing)
        return system.residual(phi)

    def functional(
        self,
        phi: np.ndarray,
        phi_old: np.ndarray,
        dt: float,
        forcing: Optional[np.ndarray] = None,
    ) -> float:
        """Strictly convex per-step functional minimized by the solve."""
        system = self.step_system_from(phi_old, dt, forcing)
        return system.functional(phi)

    def step_system_from(
        self, phi_old: np.ndarray, dt: float, forcing: Optional[np.ndarray] = None
    ) -> StepSystem:
        if not (dt > 0.0):
            raise InvalidCoefficientsError(f"dt must be positive, got {dt}")
        grid, solver = self.grid, self.solver
        eps2 = self.params.eps**2
        check_positive(phi_old, "previous state")
        inv_old = 1.0 / phi_old
        inv3_old = inv_old * inv_old * inv_old
        explicit = (8.0 / 3.0) * inv3_old
        lift = self._lift_forcing(forcing)
        ones = np.ones(grid.shape)

        def residual(phi: np.ndarray) -> np.ndarray:
            check_positive(phi, "iterate")
            inv = 1.0 / phi
            inv3 = inv * inv * inv
            r = (8.0 / 3.0) * (inv3 * inv3 * inv3) - explicit
            r += eps2 * lap(grid, phi)
            r -= solver.inv_neg_lap(_deflate(phi - phi_old)) / dt
            if lift is not None:
                r += lift
            return r

        def functional(phi: np.ndarray) -> float:
            check_positive(phi, "iterate")
            inv = 1.0 / phi
            inv2 = inv * inv
            inv8 = (inv2 * inv2) * (inv2 * inv2)
            value = solver.hminus1_norm(_deflate(phi - phi_old)) ** 2 / (2.0 * dt)
            value += inner(grid, inv8, ones) / 3.0
            value += 0.5 * eps2 * grad_norm_2(grid, phi) ** 2
            value += inner(grid, phi, explicit)
            if lift is not None:
                value -= inner(grid, phi, lift)
            return value

        a0c, a1c, a2c = self.preconditioner_coefficients(dt)
        # precondition caches the Poisson companion of its last result so
        # the directional factory can reuse the shared forward transform.
        poisson_cache = {}

        def precondition(rp: np.ndarray) -> np.ndarray:
            d, ild = solver.solve_preconditioner_with_poisson(rp, a0c, a1c, a2c)
            poisson_cache["d"] = d
            poisson_cache["ild"] = ild
            return d

        def directional(phi: np.ndarray, d: np.ndarray, r_phi: np.ndarray):
            inv = 1.0 / phi
            inv3 = inv * inv * inv
            bulk_phi = (8.0 / 3.0) * (inv3 * inv3 * inv3)
            affine = r_phi - bulk_phi
            if poisson_cache.get("d") is d:
                ild = poisson_cache["ild"]
            else:
                ild = solver.inv_neg_lap(_deflate(d))
            kd = eps2 * lap(grid, d) - ild / dt
            s0 = inner(grid, affine, d)
            s1 = inner(grid, kd, d)
            psi = np.empty_like(phi)
            work = np.empty_like(phi)
            bulk = np.empty_like(phi)
            dflat = d.ravel()
            scale = grid.cell_volume

            def bulk_at(alpha: float) -> np.ndarray:
                np.multiply(d, alpha, out=psi)
                np.add(psi, phi, out=psi)
                if not np.all(psi > 0.0):
                    raise NonPositiveFieldError(
                        "line trial point is not strictly positive"
                    )
                np.divide(1.0, psi, out=work)
                np.multiply(work, work, out=bulk)
                np.multiply(bulk, work, out=bulk)
                np.multiply(bulk, bulk, out=work)
                np.multiply(work, bulk, out=work)
                np.multiply(work, 8.0 / 3.0, out=bulk)
                return bulk

            def g(alpha: float) -> float:
                b = bulk_at(alpha)
                return -(scale * float(np.dot(b.ravel(), dflat)) + s0 + alpha * s1)

            def residual_at(alpha: float) -> np.ndarray:
                out = bulk_at(alpha) + affine
                np.multiply(kd, alpha, out=psi)
                np.add(out, psi, out=out)
                return out

            return g, residual_at

        return StepSystem(residual, functional, precondition, phi_old, directional)

    def step(
        self, state: StepState, dt: float, forcing: Optional[np.ndarray] = None
    ) -> tuple:
        """Advance one step; returns (new_state, report)."""
        system = self.step_system_from(state.phi, dt, forcing)
        phi_new, trace = self._solve(system, self._warm_start(state))
        return self._finish_step(state, phi_new, trace, dt, None)


class Bdf2Scheme(_SchemeBase):
    """Stabilized two-step stepper, second-order accurate in time.

    Requires params.a0 >= a0_star() and params.a_stab >= (4/9) a0^2 so the
    implicit part is convex and the modified energy decays.
    """

    def __init__(self, grid, params, solver=None, psd_config=None):
        super().__init__(grid, params, solver, psd_config)
        slack = 1e-12
        if params.a0 < a0_star() - slack:
            raise InvalidCoefficientsError(
                f"a0 = {params.a0} below the convexity constant {a0_star()}"
            )
        if params.a_stab < (4.0 / 9.0) * params.a0**2 - slack:
            raise InvalidCoefficientsError(
                f"a_stab = {params.a_stab} below the floor {(4.0 / 9.0) * params.a0 ** 2}"
            )

    def preconditioner_coefficients(self, dt: float) -> tuple:
        """(a0, a1, a2) of L = a0 (-lap)^{-1} + a1 I + a2 (-lap)."""
        if not (dt > 0.0):
            raise InvalidCoefficientsError(f"dt must be positive, got {dt}")
        p = self.params
        return (1.5 / dt, (8.0 / 3.0) * p.a0 + 1.0, p.eps**2 + p.a_stab * dt)

    def residual(
        self,
        phi: np.ndarray,
        phi_old: np.ndarray,
        phi_older: np.ndarray,
        dt: float,
        forcing: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        system = self.step_system_from(phi_old, phi_older, dt, forcing)
        return system.residual(phi)

    def functional(
        self,
        phi: np.ndarray,
        phi_old: np.ndarray,
        phi_older: np.ndarray,
        dt: float,
        forcing: Optional[np.ndarray] = None,
    ) -> float:
        system = self.step_system_from(phi_old, phi_older, dt, forcing)
        return system.functional(phi)

    def step_system_from(
        self,
        phi_old: np.ndarray,
        phi_older: np.ndarray,
        dt: float,
        forcing: Optional[np.ndarray] = None,
    ) -> StepSystem:
        if not (dt > 0.0):
            raise InvalidCoefficientsError(f"dt must be positive, got {dt}")
        grid, solver = self.grid, self.solver
        p = self.params
        eps2_eff = p.eps**2 + p.a_stab * dt
        check_positive(phi_old, "previous state")
        check_positive(phi_older, "second-previous state")
        history = 2.0 * phi_old - 0.5 * phi_older
        phi_hat = 2.0 * phi_old - phi_older
        lap_old = lap(grid, phi_old)
        lift = self._lift_forcing(forcing)
        # Terms independent of the iterate, assembled once per step.
        constant = (8.0 / 3.0) * p.a0 * phi_hat - p.a_stab * dt * lap_old
        if lift is not None:
            constant = constant + lift
        linear_coeff = (8.0 / 3.0) * p.a0
        ones = np.ones(grid.shape)

        def residual(phi: np.ndarray) -> np.ndarray:
            check_positive(phi, "iterate")
            inv = 1.0 / phi
            inv3 = inv * inv * inv
            inv9 = inv3 * inv3 * inv3
            r = (8.0 / 3.0) * (inv9 - inv3) - linear_coeff * phi
            r += eps2_eff * lap(grid, phi)
            r -= solver.inv_neg_lap(_deflate(1.5 * phi - history)) / dt
            r += constant
            return r

        def functional(phi: np.ndarray) -> float:
            check_positive(phi, "iterate")
            inv = 1.0 / phi
            inv2 = inv * inv
            inv8 = (inv2 * inv2) * (inv2 * inv2)
            value = solver.hminus1_norm(_deflate(1.5 * phi - history)) ** 2 / (3.0 * dt)
            value += inner(grid, inv8 / 3.0 - (4.0 / 3.0) * inv2, ones)
            value += (4.0 / 3.0) * p.a0 * inner(grid, phi, phi)
            value += 0.5 * eps2_eff * grad_norm_2(grid, phi) ** 2
            value -= inner(grid, phi, constant)
            return value

        a0c, a1c, a2c = self.preconditioner_coefficients(dt)
        # precondition caches the Poisson companion of its last result so
        # the directional factory can reuse the shared forward transform.
        poisson_cache = {}

        def precondition(rp: np.ndarray) -> np.ndarray:
            d, ild = solver.solve_preconditioner_with_poisson(rp, a0c, a1c, a2c)
            poisson_cache["d"] = d
            poisson_cache["ild"] = ild
            return d

        def directional(phi: np.ndarray, d: np.ndarray, r_phi: np.ndarray):
            inv = 1.0 / phi
            inv3 = inv * inv * inv
            bulk_phi = (8.0 / 3.0) * (inv3 * inv3 * inv3 - inv3)
            affine = r_phi - bulk_phi
            if poisson_cache.get("d") is d:
                ild = poisson_cache["ild"]
            else:
                ild = solver.inv_neg_lap(_deflate(d))
            kd = eps2_eff * lap(grid, d) - linear_coeff * d - 1.5 * ild / dt
            s0 = inner(grid, affine, d)
            s1 = inner(grid, kd, d)
            psi = np.empty_like(phi)
            work = np.empty_like(phi)
            bulk = np.empty_like(phi)
            dflat = d.ravel()
            scale = grid.cell_volume

            def bulk_at(alpha: float) -> np.ndarray:
                np.multiply(d, alpha, out=psi)
                np.add(psi, phi, out=psi)
                if not np.all(psi > 0.0):
                    raise NonPositiveFieldError(
                        "line trial point is not strictly positive"
                    )
                np.divide(1.0, psi, out=work)
                np.multiply(work, work, out=bulk)
                np.multiply(bulk, work, out=bulk)
                np.multiply(bulk, bulk, out=work)
                np.multiply(work, bulk, out=work)
                np.subtract(work, bulk, out=bulk)
                np.multiply(bulk, 8.0 / 3.0, out=bulk)
                return bulk

            def g(alpha: float) -> float:
                b = bulk_at(alpha)
                return -(scale * float(np.dot(b.ravel(), dflat)) + s0 + alpha * s1)

            def residual_at(alpha: float) -> np.ndarray:
                out = bulk_at(alpha) + affine
                np.multiply(kd, alpha, out=psi)
                np.add(out, psi, out=out)
                return out

            return g, residual_at

        return StepSystem(residual, functional, precondition, phi_old, directional)

    def cold_start(
        self,
        phi0: np.ndarray,
        dt: float,
        t: float = 0.0,
        forcing: Optional[np.ndarray] = None,
    ) -> StepState:
        """Two-level state at t with history synthesized by :func:`ghost_init`."""
        phi_prev = ghost_init(self.grid, phi0, self.params, dt, forcing)
        state = restart_state(self.grid, phi0, t)
        state.phi_prev = phi_prev
        return state

    def step(
        self, state: StepState, dt: float, forcing: Optional[np.ndarray] = None
    ) -> tuple:
        """Advance one step; returns (new_state, report)."""
        if state.phi_prev is None:
            raise MissingHistoryError(
                "two-step scheme needs phi_prev; use cold_start or restart_state"
            )
        system = self.step_system_from(state.phi, state.phi_prev, dt, forcing)
        phi_new, trace = self._solve(system, self._warm_start(state))
        modified = _energy.modified_energy(
            self.grid, self.solver, phi_new, state.phi,
            self.params.eps, self.params.a0, dt,
        )
        return self._finish_step(state, phi_new, trace, dt, modified)
