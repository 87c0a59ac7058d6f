"""Constraint (slow-manifold) evaluation and reduced models.

Once the two fast dissipative modes are exhausted, the immune
populations are enslaved to the slow variables through two algebraic
constraints — NK-cell influx balancing tumor-driven inactivation, and
effector-cell recruitment balancing inactivation:

    N_hat = e C / (p T)          L_hat = r2 C T / (q T + m)

This module tracks how well full-model trajectories respect those
constraints (relative errors RE_N, RE_L), and builds the reduced
models: the leading-order system of two ODEs for (T, C) plus the two
algebraic equations above (10 effective parameters), and the
higher-order four-component right-hand side kept for diagnostics.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .integrator import (
    IntegrationError,
    IntegratorConfig,
    SolverStats,
    Trajectory,
    _clip_undershoot,
    stable_equilibria,
)
from .kinetics import DomainError, State, _saturation
from .params import ParameterSet

__all__ = [
    "ConstraintValues", "ConstraintErrorSeries", "EffectiveParameters",
    "ReducedComparison", "constraint_values", "constraint_errors",
    "reduced_rhs_leading", "reduced_rhs_higher", "simulate_reduced",
    "compare_reduced",
]


@dataclass(frozen=True)
class ConstraintValues:
    """Immune populations implied by the slow-manifold constraints."""

    N_hat: float    # cells
    L_hat: float    # cells


@dataclass(frozen=True)
class EffectiveParameters:
    """The 10 constants the leading-order reduced model references:
    7 for the (T, C) differential equations and 3 ratios for the
    algebraic immune-population equations."""

    a: float
    b: float
    d: float
    l: float
    s: float
    alpha: float
    beta: float
    e_over_p: float
    q_over_r2: float
    m_over_r2: float

    @classmethod
    def from_full(cls, p: ParameterSet) -> "EffectiveParameters":
        return cls(a=p.a, b=p.b, d=p.d, l=p.l, s=p.s, alpha=p.alpha,
                   beta=p.beta, e_over_p=p.e / p.p, q_over_r2=p.q / p.r2,
                   m_over_r2=p.m / p.r2)

    @property
    def count(self) -> int:
        return len(fields(self))


def _constraint_arrays(T, C, p: ParameterSet):
    """Vectorized N_hat, L_hat (no domain checks)."""
    N_hat = p.e * C / (p.p * T)
    L_hat = p.r2 * C * T / (p.q * T + p.m)
    return N_hat, L_hat


def constraint_values(state: State, p: ParameterSet) -> ConstraintValues:
    """Constraint-implied immune populations at one state (requires T > 0)."""
    if not state.T > 0.0:
        raise DomainError(f"T = {state.T!r}: constraints require T > 0")
    N_hat, L_hat = _constraint_arrays(state.T, state.C, p)
    return ConstraintValues(N_hat=float(N_hat), L_hat=float(L_hat))


@dataclass(frozen=True)
class ConstraintErrorSeries:
    """Relative constraint errors along a full-model trajectory.

    RE_N = (N - N_hat)/N and RE_L = (L - L_hat)/L at every output grid
    time (NaN where a population is zero).  When the trajectory has an
    explosive stage, summary statistics cover the window
    t/t_exp in [0.2, 0.95].
    """

    t: np.ndarray
    re_n: np.ndarray
    re_l: np.ndarray
    t_exp: Optional[float]
    window: Optional[tuple[float, float]]
    max_re_n: Optional[float] = None
    max_re_l: Optional[float] = None
    mean_re_n: Optional[float] = None
    mean_re_l: Optional[float] = None


def constraint_errors(traj: Trajectory, p: ParameterSet) -> ConstraintErrorSeries:
    """Constraint errors on the output grid, with explosive-window summary."""
    from .csp import explosive_stage  # deferred: csp imports integrator

    T, N, L, C = (traj.y[:, i] for i in range(4))
    with np.errstate(divide="ignore", invalid="ignore"):
        N_hat, L_hat = _constraint_arrays(np.where(T > 0, T, np.nan), C, p)
        re_n = (N - N_hat) / np.where(N > 0, N, np.nan)
        re_l = (L - L_hat) / np.where(L > 0, L, np.nan)

    stage = explosive_stage(traj, p)
    if stage is None:
        return ConstraintErrorSeries(t=traj.t, re_n=re_n, re_l=re_l,
                                     t_exp=None, window=None)
    lo, hi = 0.2 * stage.end, 0.95 * stage.end
    sel = (traj.t >= lo) & (traj.t <= hi) & np.isfinite(re_n) & np.isfinite(re_l)
    if not np.any(sel):
        return ConstraintErrorSeries(t=traj.t, re_n=re_n, re_l=re_l,
                                     t_exp=stage.end, window=(lo, hi))
    return ConstraintErrorSeries(
        t=traj.t, re_n=re_n, re_l=re_l, t_exp=stage.end, window=(lo, hi),
        max_re_n=float(np.max(np.abs(re_n[sel]))),
        max_re_l=float(np.max(np.abs(re_l[sel]))),
        mean_re_n=float(np.mean(np.abs(re_n[sel]))),
        mean_re_l=float(np.mean(np.abs(re_l[sel]))),
    )


# ---------------------------------------------------------------------------
# Reduced right-hand sides

def _reduced_saturation(T: float, C: float, p: ParameterSet):
    """Tumor-lysis saturation evaluated at the constraint value of L."""
    L_hat = p.r2 * C * T / (p.q * T + p.m)
    return _saturation(T, L_hat, p), L_hat


def reduced_rhs_leading(T: float, C: float, p: ParameterSet) -> tuple[float, float]:
    """Leading-order reduced model: logistic growth minus saturated lysis
    for the tumor, and the decoupled lymphocyte-pool relaxation."""
    if not (T > 0.0 and C > 0.0):
        raise DomainError(f"reduced model requires T, C > 0, got ({T!r}, {C!r})")
    (D, _, _), _ = _reduced_saturation(T, C, p)
    return p.a * T * (1.0 - p.b * T) - D * T, p.alpha - p.beta * C


def reduced_rhs_higher(state: State, p: ParameterSet) -> np.ndarray:
    """Higher-order reduced right-hand side (diagnostic only).

    The tumor equation carries the net effector recruitment/inactivation
    correction, and the enslaved populations get explicit drift terms;
    the saturated-lysis factor uses the instantaneous (L, T).
    """
    T, N, L, C = state.T, state.N, state.L, state.C
    if not T > 0.0:
        raise DomainError(f"T = {T!r}: dynamics require T > 0")
    D, _, _ = _saturation(T, L, p)
    growth = p.a * T * (1.0 - p.b * T)
    lysis = D * T
    pool = p.alpha - p.beta * C
    net_recruit = p.r2 * C * T - p.q * L * T
    return np.array([
        growth - lysis - net_recruit,
        -growth + lysis + pool + net_recruit,
        growth - lysis + pool + net_recruit,
        pool,
    ])


# ---------------------------------------------------------------------------
# Reduced-model simulation

def _reduced_rhs_arr(z: np.ndarray, p: ParameterSet) -> np.ndarray:
    T = z[0] if z[0] > 0 else 1e-300
    C = z[1] if z[1] > 0 else 1e-300
    (D, _, _), _ = _reduced_saturation(T, C, p)
    return np.array([p.a * T * (1.0 - p.b * T) - D * T,
                     p.alpha - p.beta * C])


def _reduced_jac_arr(z: np.ndarray, p: ParameterSet) -> np.ndarray:
    T = z[0] if z[0] > 0 else 1e-300
    C = z[1] if z[1] > 0 else 1e-300
    (D, _, sigma), _ = _reduced_saturation(T, C, p)
    qT_m = p.q * T + p.m
    # x = L_hat/T = r2*C/(q*T + m);  dD/dx = l*D*sigma/x
    dD_dT = -p.l * D * sigma * p.q / qT_m          # (l D sigma / x) * dx/dT
    dD_dC = p.l * D * sigma / C                    # (l D sigma / x) * dx/dC
    j11 = p.a * (1.0 - 2.0 * p.b * T) - D - T * dD_dT
    j12 = -T * dD_dC
    return np.array([[j11, j12], [0.0, -p.beta]])


def _expand_factory(p: ParameterSet):
    ep, Q, Mr = p.e / p.p, p.q / p.r2, p.m / p.r2

    def expand(z: np.ndarray) -> np.ndarray:
        T = max(float(z[0]), 0.0)
        C = max(float(z[1]), 0.0)
        T_safe = T if T > 0.0 else 1e-300
        return np.array([T, ep * C / T_safe, C * T / (Q * T + Mr), C])

    return expand


def simulate_reduced(T0: float, C0: float, p: ParameterSet,
                     config: IntegratorConfig | None = None) -> Trajectory:
    """Integrate the leading-order (T, C) system and reconstruct N, L.

    The returned trajectory carries full 4-vectors on the grid (immune
    populations from the constraints at every output time), a dense
    interpolant over (T, C) with the expansion hook, and the
    10-constant effective parameter set in `effective`.
    """
    cfg = config or IntegratorConfig()
    if not (T0 > 0.0 and C0 > 0.0):
        raise DomainError(f"reduced model requires T0, C0 > 0, got ({T0!r}, {C0!r})")

    sol = solve_ivp(
        lambda t, z: _reduced_rhs_arr(z, p),
        (0.0, cfg.t_end),
        np.array([float(T0), float(C0)]),
        method="Radau",
        jac=lambda t, z: _reduced_jac_arr(z, p),
        rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step,
        dense_output=True, t_eval=cfg.grid(),
    )
    if sol.status not in (0, -1):
        raise IntegrationError(f"unexpected solver status {sol.status}: {sol.message}")

    z = _clip_undershoot(sol.y.T.copy(), cfg.atol, "simulate_reduced")
    expand = _expand_factory(p)
    y = np.array([expand(row) for row in z])
    stats = SolverStats(
        steps=max(len(sol.sol.ts) - 1, 0) if sol.sol is not None else 0,
        nfev=sol.nfev, njev=sol.njev, nlu=sol.nlu,
        status=sol.status, message=sol.message.strip(),
    )
    return Trajectory(
        model="reduced-leading", params=p, t=sol.t.copy(), y=y,
        dense=sol.sol, stats=stats, complete=(sol.status == 0),
        atol=cfg.atol, expand=expand,
        effective=EffectiveParameters.from_full(p),
    )


# ---------------------------------------------------------------------------
# Full vs reduced comparison

@dataclass(frozen=True)
class ReducedComparison:
    """Relative-error report of a reduced run against the full model."""

    t: np.ndarray
    rel_err: np.ndarray              # (n, 4) per-variable relative errors
    window: Optional[tuple[float, float]]
    max_err: Optional[np.ndarray]    # (4,) over window
    mean_err: Optional[np.ndarray]   # (4,) over window
    full_attractor: Optional[str]
    reduced_attractor: Optional[str]

    @property
    def attractor_agreement(self) -> bool:
        return (self.full_attractor is not None
                and self.full_attractor == self.reduced_attractor)


def _nearest_attractor_tc(y: np.ndarray, targets) -> Optional[str]:
    """Nearest stable equilibrium judged on the slow variables (T, C) only:
    the reconstructed immune populations diverge at the tumor-free state."""
    best, dist = None, np.inf
    for eq in targets:
        e = eq.y[[0, 3]]
        d = float(np.max(np.abs(y[[0, 3]] - e) / np.maximum(1.0, np.abs(e))))
        if d < dist:
            best, dist = eq.kind, d
    return best


def compare_reduced(full: Trajectory, red: Trajectory) -> ReducedComparison:
    """Per-variable relative errors of the reduced run, summarized over the
    explosive-stage window of the full trajectory."""
    from .csp import explosive_stage

    p = full.params
    lo = max(full.t[0], red.t[0])
    hi = min(full.t[-1], red.t[-1])
    sel = (full.t >= lo) & (full.t <= hi)
    t = full.t[sel]
    yf = full.y[sel]
    if red.t.shape == full.t.shape and np.array_equal(red.t, full.t):
        yr = red.y[sel]
    else:
        yr = np.array([red.expand(red.dense(tt)) if red.expand is not None
                       else red.dense(tt) for tt in t])
    rel = np.abs(yr - yf) / np.maximum(np.abs(yf), 1.0)

    stage = explosive_stage(full, p)
    window = max_err = mean_err = None
    if stage is not None:
        wlo, whi = 0.2 * stage.end, 0.95 * stage.end
        wsel = (t >= wlo) & (t <= whi)
        if np.any(wsel):
            window = (wlo, whi)
            max_err = rel[wsel].max(axis=0)
            mean_err = rel[wsel].mean(axis=0)

    targets = stable_equilibria(p)
    return ReducedComparison(
        t=t, rel_err=rel, window=window, max_err=max_err, mean_err=mean_err,
        full_attractor=_nearest_attractor_tc(full.final, targets),
        reduced_attractor=_nearest_attractor_tc(red.final, targets),
    )
