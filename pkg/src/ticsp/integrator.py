"""Stiff initial-value integration with dense output and event location.

The model's timescales span five orders of magnitude, so integration
uses an implicit adaptive method (Radau IIA via scipy) with the analytic
Jacobian.  Output is reported on a grid mirroring the usual presentation
of these runs: log-spaced times up to day 5, linear spacing thereafter;
the continuous (dense) solution is kept for event location and
diagnostics at arbitrary times.

Also provides the basin-of-attraction bisection on the initial tumor
burden: runs are classified by which stable equilibrium they settle to.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .equilibria import Equilibrium, find_hte, tfe
from .kinetics import DomainError, State, jacobian_array, rhs_array
from .params import ParameterSet

__all__ = [
    "IntegratorConfig", "SolverStats", "Trajectory", "IntegrationError",
    "integrate", "evaluate_dense", "locate_event", "basin_threshold",
    "stable_equilibria", "classify_attractor", "settle_attractor",
]

_TINY_T = 1e-300  # evaluation guard; T decays exponentially, never to 0 in finite time


class IntegrationError(RuntimeError):
    """Integration produced an unusable result (beyond-tolerance undershoot)."""


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-8
    atol: float = 1e-6          # cells/day scale of each population
    max_step: float = np.inf
    t_end: float = 200.0        # days
    # output grid: log-spaced up to `log_until`, then linear to t_end
    log_start: float = 1e-4
    log_until: float = 5.0
    n_log: int = 61
    n_linear: int = 196

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")

    def grid(self) -> np.ndarray:
        """Strictly increasing output times from 0 to t_end."""
        if self.t_end <= self.log_start:
            return np.array([0.0, self.t_end])
        log_hi = min(self.log_until, self.t_end)
        times = [np.array([0.0]), np.geomspace(self.log_start, log_hi, self.n_log)]
        if self.t_end > self.log_until:
            times.append(np.linspace(self.log_until, self.t_end, self.n_linear)[1:])
        return np.concatenate(times)


@dataclass(frozen=True)
class SolverStats:
    steps: int
    nfev: int
    njev: int
    nlu: int
    status: int
    message: str


@dataclass
class Trajectory:
    """Solution on the output grid plus the continuous dense interpolant.

    For reduced models `y` always holds the full reconstructed 4-vector
    per grid time while `dense` interpolates the model's own (smaller)
    state; `expand` maps a dense vector to the full 4-vector.
    """

    model: str                  # "full" | "reduced-leading"
    params: ParameterSet
    t: np.ndarray               # (n,)
    y: np.ndarray               # (n, 4)
    dense: object               # scipy OdeSolution
    stats: SolverStats
    complete: bool
    atol: float = 1e-6
    expand: Optional[Callable[[np.ndarray], np.ndarray]] = None
    effective: object = None    # reduced models: the effective parameter set

    def __len__(self) -> int:
        return len(self.t)

    @property
    def span(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    def state(self, i: int) -> State:
        return State.from_array(self.t[i], self.y[i])

    @property
    def final(self) -> np.ndarray:
        return self.y[-1]


def _shield(y: np.ndarray) -> np.ndarray:
    """Make solver-probed vectors evaluable: the implicit stages may step
    slightly outside the feasible domain."""
    out = np.asarray(y, dtype=float).copy()
    if out[0] < _TINY_T:
        out[0] = _TINY_T
    out[1:] = np.maximum(out[1:], 0.0)
    return out


def _clip_undershoot(y: np.ndarray, atol: float, where: str) -> np.ndarray:
    """Clip tiny negative populations to 0; larger undershoot is an error.

    The allowance is 10x the solver's absolute tolerance: atol controls the
    local per-step error, so the accumulated excursion below zero on a long
    collapse can legitimately exceed it by a small factor.
    """
    bad = y < -10.0 * atol
    if np.any(bad):
        raise IntegrationError(
            f"{where}: population undershoot beyond the absolute tolerance "
            f"(min value {y.min():.3e})"
        )
    return np.maximum(y, 0.0)


def integrate(y0: State, params: ParameterSet, config: IntegratorConfig | None = None) -> Trajectory:
    """Solve the full model from y0 over [0, t_end].

    Local error is controlled by (rtol, atol); populations are clipped
    at 0 only when the undershoot is below atol.  On step-size collapse
    a partial trajectory is returned with `complete=False` and the
    solver message in `stats`.
    """
    cfg = config or IntegratorConfig()
    if not isinstance(y0, State):
        y0 = State.from_array(0.0, np.asarray(y0, dtype=float))
    if not y0.T > 0.0:
        raise DomainError("initial state requires T > 0")
    y0a = y0.array()

    sol = solve_ivp(
        lambda t, y: rhs_array(_shield(y), params),
        (0.0, cfg.t_end),
        y0a,
        method="Radau",
        jac=lambda t, y: jacobian_array(_shield(y), params),
        rtol=cfg.rtol,
        atol=cfg.atol,
        max_step=cfg.max_step,
        dense_output=True,
        t_eval=cfg.grid(),
    )
    if sol.status not in (0, -1):
        raise IntegrationError(f"unexpected solver status {sol.status}: {sol.message}")

    y = _clip_undershoot(sol.y.T.copy(), cfg.atol, "integrate")
    stats = SolverStats(
        steps=max(len(sol.sol.ts) - 1, 0) if sol.sol is not None else 0,
        nfev=sol.nfev, njev=sol.njev, nlu=sol.nlu,
        status=sol.status, message=sol.message.strip(),
    )
    return Trajectory(
        model="full", params=params, t=sol.t.copy(), y=y,
        dense=sol.sol, stats=stats, complete=(sol.status == 0), atol=cfg.atol,
    )


def _dense_vector(traj: Trajectory, t: float) -> np.ndarray:
    lo, hi = traj.span
    if not lo <= t <= hi:
        raise ValueError(f"t = {t} outside trajectory span [{lo}, {hi}]")
    z = np.asarray(traj.dense(t), dtype=float)
    if traj.expand is not None:
        z = traj.expand(z)
    return _clip_undershoot(z, traj.atol, "evaluate_dense")


def evaluate_dense(traj: Trajectory, t: float) -> State:
    """State at any time inside the trajectory span (dense interpolant)."""
    return State.from_array(t, _dense_vector(traj, float(t)))


def locate_event(
    traj: Trajectory,
    event_fn: Callable[[State], float],
    tol: float = 1e-6,
    t_span: Optional[tuple[float, float]] = None,
    grid: Optional[np.ndarray] = None,
) -> Optional[float]:
    """First root of a continuous event function along the trajectory.

    Scans the output grid (or a caller-supplied time grid) for a sign
    change, then bisects the dense solution down to `tol` days.  Returns
    None when the event keeps one sign throughout.
    """
    times = traj.t if grid is None else np.asarray(grid, dtype=float)
    if t_span is not None:
        lo, hi = t_span
        times = times[(times >= lo) & (times <= hi)]
        if len(times) == 0 or times[0] > lo:
            times = np.concatenate([[lo], times])
        if times[-1] < hi:
            times = np.concatenate([times, [hi]])
    if len(times) < 2:
        return None

    f = lambda t: float(event_fn(evaluate_dense(traj, t)))
    prev_t, prev_v = times[0], f(times[0])
    if prev_v == 0.0:
        return float(prev_t)
    for t in times[1:]:
        v = f(t)
        if v == 0.0:
            return float(t)
        if (prev_v > 0.0) != (v > 0.0):
            a, b = prev_t, t
            while b - a > tol:
                mid = 0.5 * (a + b)
                vm = f(mid)
                if vm == 0.0:
                    return float(mid)
                if (vm > 0.0) == (prev_v > 0.0):
                    a = mid
                else:
                    b = mid
            return float(0.5 * (a + b))
        prev_t, prev_v = t, v
    return None


# ---------------------------------------------------------------------------
# Attractor classification and the basin threshold

def stable_equilibria(params: ParameterSet,
                      t_range: tuple[float, float] = (1.0, 1e10),
                      grid_points: int = 400) -> list[Equilibrium]:
    """All stable attracting points: the TFE (if stable) plus stable HTE."""
    out = []
    main, _ = tfe(params)
    if main.stable:
        out.append(main)
    out.extend(e for e in find_hte(params, t_range, grid_points) if e.stable)
    return out


def classify_attractor(y: np.ndarray, targets: list[Equilibrium],
                       tol: float = 1e-2) -> Optional[str]:
    """Nearest stable equilibrium by componentwise relative distance.

    Returns the equilibrium kind when within `tol`, else None.
    """
    best_kind, best_dist = None, np.inf
    for eq in targets:
        dist = float(np.max(np.abs(y - eq.y) / np.maximum(1.0, np.abs(eq.y))))
        if dist < best_dist:
            best_kind, best_dist = eq.kind, dist
    return best_kind if best_dist < tol else None


def _final_state(y0: np.ndarray, t_end: float, params: ParameterSet,
                 cfg: IntegratorConfig) -> np.ndarray:
    """Endpoint-only integration (no dense output), for classification runs."""
    sol = solve_ivp(
        lambda t, y: rhs_array(_shield(y), params),
        (0.0, t_end), y0, method="Radau",
        jac=lambda t, y: jacobian_array(_shield(y), params),
        rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step,
    )
    if sol.status != 0:
        raise IntegrationError(f"classification run failed: {sol.message}")
    return _clip_undershoot(sol.y[:, -1].copy(), cfg.atol, "settle")


def settle_attractor(y0: State | np.ndarray, params: ParameterSet,
                     config: IntegratorConfig | None = None,
                     targets: Optional[list[Equilibrium]] = None) -> str:
    """Integrate until the run settles onto a stable equilibrium.

    Classifies at t_end; if undecided (the slow lymphocyte pool relaxes
    on the 1/beta ~ 80 day scale), extends once by 2x t_end.
    """
    cfg = config or IntegratorConfig()
    if targets is None:
        targets = stable_equilibria(params)
    if not targets:
        raise RuntimeError("no stable equilibria to classify against")
    y = y0.array() if isinstance(y0, State) else np.asarray(y0, dtype=float)
    y = _final_state(y, cfg.t_end, params, cfg)
    label = classify_attractor(y, targets)
    if label is None:
        y = _final_state(y, 2.0 * cfg.t_end, params, cfg)
        label = classify_attractor(y, targets)
    if label is None:
        raise RuntimeError(f"trajectory did not settle within 3x t_end; final {y}")
    return label


def basin_threshold(N0: float, L0: float, C0: float, params: ParameterSet,
                    T_bracket: tuple[float, float],
                    config: IntegratorConfig | None = None) -> float:
    """Bisect the initial tumor burden separating the two basins.

    Returns the high side of a <= 1 cell bracket: re-simulating at the
    returned value reaches the high-tumor attractor; one cell below
    falls to the tumor-free side (the basin boundary is monotone in
    T(0) at fixed immune initial conditions).
    """
    cfg = config or IntegratorConfig()
    targets = stable_equilibria(params)
    lo, hi = (float(v) for v in T_bracket)
    if not 0.0 < lo < hi:
        raise ValueError(f"invalid T bracket {T_bracket}")

    def run(T0: float) -> str:
        return settle_attractor(np.array([T0, N0, L0, C0]), params, cfg, targets)

    lab_lo, lab_hi = run(lo), run(hi)
    if lab_lo == lab_hi:
        raise ValueError(
            f"bracket endpoints classify to the same attractor ({lab_lo}); "
            "widen the bracket"
        )
    while hi - lo > 1.0:
        mid = 0.5 * (lo + hi)
        if run(mid) == lab_lo:
            lo = mid
        else:
            hi = mid
    return hi
