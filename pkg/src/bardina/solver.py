"""Bardina-alpha dynamics: nonlinear term, pressure, integrating-factor RK4, energy audit.

The model evolved here is

    d_t u + bar(div(u (x) u)) - nu Lap u + grad p = 0,   div u = 0,

with the bar the Helmholtz filter.  Velocities are carried as spectral
coefficients; the viscous part is integrated exactly through the factor
``exp(-nu |k|^2 t)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_simpson

from . import fields
from .fields import Grid
from .filter import filter_spectral, filter_symbol

log = logging.getLogger(__name__)

BLOWUP_FACTOR = 10.0


class InstabilityError(RuntimeError):
    """Raised when the energy grows past ``BLOWUP_FACTOR * E_alpha0``."""

    def __init__(self, t_stable: float, energy: float, energy0: float):
        super().__init__(f"energy {energy:.6g} exceeded {BLOWUP_FACTOR} x E0={energy0:.6g}; "
                         f"last stable time t={t_stable:.6g}")
        self.t_stable = t_stable


@dataclass(frozen=True)
class SolverParams:
    nu: float
    alpha: float
    dt: float = 1e-3
    t_end: float = 1.0
    dealias: bool = True
    nonlinear: bool = True  # False freezes the transport term to zero (linear test mode)

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be non-negative, got {self.t_end}")


def energy_parts(grid: Grid, U: np.ndarray) -> tuple[float, float, float]:
    """``(W, J^2, ||Lap u||^2)`` of a spectral velocity."""
    W = fields.norm2_hat(grid, U)
    J2 = fields.norm2_hat(grid, np.sqrt(grid.k2) * U)
    lap2 = fields.norm2_hat(grid, grid.k2 * U)
    return W, J2, lap2


def energy_alpha(grid: Grid, u: np.ndarray, alpha: float) -> float:
    """``E_alpha = ||u||^2 + alpha^2 ||grad u||^2`` of a physical velocity."""
    W, J2, _ = energy_parts(grid, fields.forward(grid, u))
    return W + alpha**2 * J2


@dataclass(frozen=True)
class SolverState:
    grid: Grid
    U: np.ndarray  # spectral velocity
    t: float
    alpha: float

    @classmethod
    def from_velocity(cls, grid: Grid, u: np.ndarray, alpha: float, t: float = 0.0) -> "SolverState":
        if not fields.is_divergence_free(grid, u):
            raise ValueError("initial velocity is not divergence-free")
        return cls(grid, fields.forward(grid, u), t, alpha)

    @cached_property
    def u(self) -> np.ndarray:
        return fields.inverse(self.grid, self.U)

    @cached_property
    def _parts(self) -> tuple[float, float, float]:
        return energy_parts(self.grid, self.U)

    @property
    def W(self) -> float:
        return self._parts[0]

    @property
    def J(self) -> float:
        return float(np.sqrt(self._parts[1]))

    @property
    def E_alpha(self) -> float:
        return self.W + self.alpha**2 * self._parts[1]


# -- nonlinear term and pressure ----------------------------------------------


def _filtered_flux_hat(grid: Grid, U: np.ndarray, alpha: float, dealias: bool) -> np.ndarray:
    """Spectral ``bar(u (x) u)``, shape ``(3, 3, ...)``."""
    if dealias:
        U = U * grid.dealias_mask
    u = fields.inverse(grid, U)
    T = fields.forward(grid, u[:, None] * u[None, :])
    return T * filter_symbol(grid, alpha)


def nonlinear_hat(grid: Grid, U: np.ndarray, alpha: float, dealias: bool = True) -> np.ndarray:
    """Spectral ``B(u, u) = bar(div(u (x) u))``; truncated to the 2/3 band when dealiasing."""
    B = fields.divergence_hat(grid, _filtered_flux_hat(grid, U, alpha, dealias))
    return B * grid.dealias_mask if dealias else B


def _check_solenoidal(grid: Grid, u: np.ndarray) -> None:
    if not fields.is_divergence_free(grid, u):
        raise ValueError(f"velocity is not divergence-free (max |div u| = {fields.max_divergence(grid, u):.3e})")


def nonlinear_term(grid: Grid, u: np.ndarray, alpha: float, dealias: bool = True) -> np.ndarray:
    _check_solenoidal(grid, u)
    return fields.inverse(grid, nonlinear_hat(grid, fields.forward(grid, u), alpha, dealias))


def pressure_hat(grid: Grid, U: np.ndarray, alpha: float, dealias: bool = True) -> np.ndarray:
    # Lap p = -div div bar(u (x) u); the k = 0 mode is set to zero (zero-mean gauge)
    T = _filtered_flux_hat(grid, U, alpha, dealias)
    k = grid.k_odd
    ddT = -np.einsum("i...,j...,ij...->...", k, k, T)
    k2 = np.where(grid.k2 > 0, grid.k2, 1.0)
    P = ddT / k2
    P[0, 0, 0] = 0.0
    # same truncation as the transport term, so grad p is exactly its gradient part
    return P * grid.dealias_mask if dealias else P


def pressure_solve(grid: Grid, u: np.ndarray, alpha: float, dealias: bool = True) -> np.ndarray:
    _check_solenoidal(grid, u)
    return fields.inverse(grid, pressure_hat(grid, fields.forward(grid, u), alpha, dealias))


def rhs_hat(grid: Grid, U: np.ndarray, alpha: float, dealias: bool = True, nonlinear: bool = True) -> np.ndarray:
    """Projected transport forcing ``-P B(u, u)`` in spectral space."""
    if not nonlinear:
        return np.zeros_like(U)
    return -fields.leray_project_hat(grid, nonlinear_hat(grid, U, alpha, dealias))


def transport_orthogonality(grid: Grid, u: np.ndarray, alpha: float, dealias: bool = True) -> float:
    """``|(bar(div(u (x) u)), -alpha^2 Lap u + u)|``; zero for the exact model."""
    U = fields.forward(grid, u)
    B = nonlinear_hat(grid, U, alpha, dealias)
    return abs(fields.inner_hat(grid, B, (1 + alpha**2 * grid.k2) * U))


# -- time stepping --------------------------------------------------------------


def step_integrating_factor(state: SolverState, params: SolverParams, energy0: float | None = None) -> SolverState:
    """One Lawson RK4 step: exact viscous factor, classical RK4 on ``-P B``."""
    grid, U, dt = state.grid, state.U, params.dt
    half = np.exp(-params.nu * grid.k2 * dt / 2)

    def N(V):
        return rhs_hat(grid, V, params.alpha, params.dealias, params.nonlinear)

    k1 = N(U)
    k2 = N(half * (U + dt / 2 * k1))
    k3 = N(half * U + dt / 2 * k2)
    k4 = N(half * half * U + dt * half * k3)
    U_new = half * half * U + dt / 6 * (half * half * k1 + 2 * half * (k2 + k3) + k4)
    new = SolverState(grid, U_new, state.t + dt, state.alpha)
    if energy0 is not None and new.E_alpha > BLOWUP_FACTOR * energy0:
        raise InstabilityError(state.t, new.E_alpha, energy0)
    return new


@dataclass
class Trajectory:
    """Per-step diagnostics plus velocity snapshots every ``sample_every`` steps."""

    grid: Grid
    params: SolverParams
    times: np.ndarray
    E_alpha: np.ndarray
    rate_lap: np.ndarray  # nu alpha^2 ||Lap u||^2
    rate_grad: np.ndarray  # nu ||grad u||^2
    snapshots: list[SolverState] = field(default_factory=list)

    @property
    def final(self) -> SolverState:
        return self.snapshots[-1]


def integrate(grid: Grid, u_init: np.ndarray, params: SolverParams, sample_every: int = 0) -> Trajectory:
    """Advance the (already filtered) ``u_init`` from ``t = 0`` to ``params.t_end``.

    ``sample_every = 0`` keeps only the initial and final states.
    """
    state = SolverState.from_velocity(grid, u_init, params.alpha)
    n_steps = int(round(params.t_end / params.dt))
    if n_steps and abs(n_steps * params.dt - params.t_end) > 1e-9 * max(params.t_end, 1.0):
        raise ValueError(f"t_end={params.t_end} is not a multiple of dt={params.dt}")
    energy0 = state.E_alpha
    times, E, r_lap, r_grad = [], [], [], []
    snaps = [state]

    def record(s: SolverState):
        W, J2, lap2 = s._parts
        times.append(s.t)
        E.append(W + params.alpha**2 * J2)
        r_lap.append(params.nu * params.alpha**2 * lap2)
        r_grad.append(params.nu * J2)

    record(state)
    for n in range(1, n_steps + 1):
        state = step_integrating_factor(state, params, energy0)
        record(state)
        if (sample_every and n % sample_every == 0) or n == n_steps:
            snaps.append(state)
    log.debug("integrated %d steps to t=%.6g", n_steps, state.t)
    return Trajectory(grid, params, np.array(times), np.array(E), np.array(r_lap), np.array(r_grad), snaps)


# -- energy audit -----------------------------------------------------------------


@dataclass
class EnergyLedger:
    t: np.ndarray
    E_alpha: np.ndarray
    diss_lap: np.ndarray  # cumulative nu alpha^2 int ||Lap u||^2
    diss_grad: np.ndarray  # cumulative nu int ||grad u||^2
    residual: np.ndarray

    HEADER = ["t", "E_alpha", "diss_lap", "diss_grad", "residual"]

    @property
    def E0(self) -> float:
        return float(self.E_alpha[0])

    def max_residual(self) -> float:
        return float(np.abs(self.residual).max())

    def rows(self):
        return zip(self.t, self.E_alpha, self.diss_lap, self.diss_grad, self.residual)


def energy_audit(traj: Trajectory) -> EnergyLedger:
    """Residual ``E/2 + int(nu alpha^2 |Lap u|^2 + nu |grad u|^2) - E0/2`` at every step.

    The time integrals use cumulative Simpson, fourth order like the stepper.
    """
    t = traj.times
    if len(t) < 3:
        c_lap = np.concatenate([[0.0], np.cumsum(np.diff(t) * (traj.rate_lap[1:] + traj.rate_lap[:-1]) / 2)])
        c_grad = np.concatenate([[0.0], np.cumsum(np.diff(t) * (traj.rate_grad[1:] + traj.rate_grad[:-1]) / 2)])
    else:
        c_lap = cumulative_simpson(traj.rate_lap, x=t, initial=0.0)
        c_grad = cumulative_simpson(traj.rate_grad, x=t, initial=0.0)
    residual = 0.5 * traj.E_alpha + c_lap + c_grad - 0.5 * traj.E_alpha[0]
    return EnergyLedger(t.copy(), traj.E_alpha.copy(), c_lap, c_grad, residual)


@dataclass(frozen=True)
class EnergyBounds:
    monotone: bool
    max_increase: float
    E0: float
    bound: float  # 5 ||u0||^2

    @property
    def passed(self) -> bool:
        return self.monotone and self.E0 <= self.bound


def check_energy_bounds(ledger: EnergyLedger, grid: Grid, u0: np.ndarray, tol: float = 1e-10) -> EnergyBounds:
    """Monotone decay of ``E_alpha`` (per-sample increase <= tol E0) and ``E0 <= 5 ||u0||^2``.

    ``u0`` is the unfiltered initial velocity.
    """
    E = ledger.E_alpha
    inc = float(np.max(np.diff(E), initial=0.0))
    monotone = inc <= tol * max(ledger.E0, np.finfo(float).tiny) or ledger.E0 == 0.0
    return EnergyBounds(monotone, inc, ledger.E0, 5 * fields.norm_lp(grid, u0, 2) ** 2)


def filtered_initial(grid: Grid, u0: np.ndarray, alpha: float) -> np.ndarray:
    """Initial velocity of the model: the filtered datum."""
    return filter_spectral(grid, u0, alpha)
