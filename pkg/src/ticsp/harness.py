"""Scenario library, perturbation experiments, and checkpointed reporting.

Bundles the full pipeline for one named case — integrate, detect the
explosive stage, evaluate diagnostics at checkpoints, track constraint
errors, classify the reached attractor — and compares baseline vs.
perturbed runs with directional verdicts recomputed from the trajectories.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .csp import (
    DiagnosticsRecord,
    ExplosiveStage,
    boundary_state,
    decompose,
    diagnostics_record,
    explosive_stage,
)
from .equilibria import Equilibrium, find_hte, tfe
from .integrator import (
    IntegratorConfig,
    Trajectory,
    classify_attractor,
    evaluate_dense,
    integrate,
    settle_attractor,
    stable_equilibria,
)
from .kinetics import State
from .params import DEFAULT_PARAMETERS, ParameterSet
from .reduction import ConstraintErrorSeries, constraint_errors

VARIABLES = ("T", "N", "L", "C")

#: t/t_exp sampling points for the standard diagnostics checkpoints.
CHECKPOINTS = (0.0, 0.2, 0.5, 0.8)

#: Interior samples used to decide which processes act persistently
#: across the explosive stage (densely covers 0.1 < t/t_exp < 0.95).
PERSISTENCE_FRACTIONS = tuple(np.arange(0.125, 0.95, 0.025))


# ---------------------------------------------------------------------------
# Scenario library


@dataclass(frozen=True)
class Scenario:
    """A named initial-condition case with an optional expected attractor."""

    name: str
    T0: float
    N0: float
    L0: float
    C0: float
    t_end: float = 200.0
    expect: Optional[str] = None          # "TFE" | "HTE" | None
    params: Optional[ParameterSet] = None  # overrides the run-time default

    def __post_init__(self):
        if not self.t_end > 0.0:
            raise ValueError(f"scenario {self.name!r}: t_end must be positive")
        if self.expect not in (None, "TFE", "HTE"):
            raise ValueError(f"scenario {self.name!r}: expect must be TFE, HTE or None")

    @property
    def state(self) -> State:
        return State(0.0, self.T0, self.N0, self.L0, self.C0)


SCENARIOS: dict[str, Scenario] = {
    "TP": Scenario("TP", 1e6, 1e3, 1e1, 6e8, expect="HTE"),
    "TR": Scenario("TR", 1e7, 2e5, 1e2, 4e10, expect="TFE"),
    "TP1": Scenario("TP1", 319393.0, 1e3, 1e1, 6e8, expect="HTE"),
    "TR1": Scenario("TR1", 319392.0, 1e3, 1e1, 6e8, expect="TFE"),
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        known = ", ".join(sorted(SCENARIOS))
        raise ValueError(f"unknown scenario {name!r} (built-ins: {known})") from None


def scenario_from_json(path) -> Scenario:
    """Load a scenario file: {name, T0, N0, L0, C0, t_end?, params_file?, expect?}."""
    path = Path(path)
    data = json.loads(path.read_text())
    params = None
    if data.get("params_file"):
        params = ParameterSet.from_json(path.parent / data["params_file"])
    return Scenario(
        name=str(data["name"]),
        T0=float(data["T0"]), N0=float(data["N0"]),
        L0=float(data["L0"]), C0=float(data["C0"]),
        t_end=float(data.get("t_end", 200.0)),
        expect=data.get("expect"),
        params=params,
    )


# ---------------------------------------------------------------------------
# Scenario runs


@dataclass(frozen=True)
class TimescaleTable:
    """Per-grid-point timescales and eigenvalue real parts."""

    t: np.ndarray          # (n,)
    tau: np.ndarray        # (n, 4), ascending per row
    re_lambda: np.ndarray  # (n, 4)
    explosive: np.ndarray  # (n,) bool: any amplifying mode at that time


@dataclass(frozen=True)
class ScenarioResult:
    """Everything one scenario run produces."""

    scenario: Scenario
    params: ParameterSet
    trajectory: Trajectory
    stage: Optional[ExplosiveStage]
    records: tuple[DiagnosticsRecord, ...]
    errors: ConstraintErrorSeries
    equilibria: tuple[Equilibrium, ...]
    attractor: Optional[str]
    timescales: TimescaleTable

    @property
    def t_exp(self) -> Optional[float]:
        return None if self.stage is None else self.stage.t_exp

    def checkpoint(self, frac: float) -> DiagnosticsRecord:
        for rec in self.records:
            if abs(rec.t_over_texp - frac) < 1e-12:
                return rec
        raise KeyError(f"no diagnostics record at t/t_exp = {frac}")


def timescale_table(traj: Trajectory, params: ParameterSet) -> TimescaleTable:
    n = len(traj)
    tau = np.empty((n, 4))
    re = np.empty((n, 4))
    flag = np.zeros(n, dtype=bool)
    for i in range(n):
        dec = decompose(boundary_state(traj.state(i)), params)
        tau[i] = dec.timescales
        re[i] = dec.eigenvalues.real
        flag[i] = bool(dec.explosive.any())
    return TimescaleTable(t=traj.t.copy(), tau=tau, re_lambda=re, explosive=flag)


def run_scenario(scenario: Scenario | str,
                 params: Optional[ParameterSet] = None,
                 config: Optional[IntegratorConfig] = None,
                 checkpoints: Sequence[float] = CHECKPOINTS,
                 fixed_M: Optional[int] = None,
                 settle: bool = True) -> ScenarioResult:
    """Integrate one scenario and derive the full diagnostic bundle.

    Diagnostics records are evaluated at t/t_exp in `checkpoints` (skipped
    entirely when no explosive stage exists).  M for the importance index is
    adaptive unless `fixed_M` pins it.  With `settle=False` the attractor is
    classified only from the final state and may come back None on horizons
    too short to approach an equilibrium; otherwise an unclassified run is
    integrated further until it settles (and raises if it never does).
    """
    if isinstance(scenario, str):
        scenario = get_scenario(scenario)
    p = params if params is not None else (scenario.params or DEFAULT_PARAMETERS)
    cfg = config or IntegratorConfig(t_end=scenario.t_end)

    traj = integrate(scenario.state, p, cfg)
    stage = explosive_stage(traj, p)
    records = []
    if stage is not None:
        for frac in checkpoints:
            s = evaluate_dense(traj, frac * stage.t_exp)
            records.append(diagnostics_record(s, p, t_over_texp=frac, fixed_M=fixed_M))

    targets = stable_equilibria(p)
    attractor = classify_attractor(traj.y[-1], targets)
    if attractor is None and settle:
        attractor = settle_attractor(traj.y[-1], p, cfg, targets)

    equilibria = (tfe(p)[0], *find_hte(p))
    return ScenarioResult(
        scenario=scenario,
        params=p,
        trajectory=traj,
        stage=stage,
        records=tuple(records),
        errors=constraint_errors(traj, p),
        equilibria=equilibria,
        attractor=attractor,
        timescales=timescale_table(traj, p),
    )


def run_scenarios(scenarios: Sequence[Scenario | str],
                  params: Optional[ParameterSet] = None,
                  config: Optional[IntegratorConfig] = None,
                  jobs: int = 1,
                  **kwargs) -> list[ScenarioResult]:
    """Run independent scenarios, optionally in a thread pool.

    Results are merged in input order regardless of completion order.
    """
    if jobs <= 1 or len(scenarios) <= 1:
        return [run_scenario(s, params, config, **kwargs) for s in scenarios]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_scenario, s, params, config, **kwargs)
                   for s in scenarios]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# Perturbation experiments


@dataclass(frozen=True)
class PerturbationSpec:
    """One multiplicative parameter change applied to a baseline scenario."""

    parameter: str
    multiplier: float
    baseline: str = "TP"

    def __post_init__(self):
        if not self.multiplier > 0.0:
            raise ValueError("perturbation multiplier must be positive")
        if self.parameter not in DEFAULT_PARAMETERS.to_dict():
            raise ValueError(f"unknown parameter {self.parameter!r}")


@dataclass(frozen=True)
class PerturbationReport:
    """Baseline-vs-perturbed comparison over the shared stage window."""

    spec: PerturbationSpec
    base: ScenarioResult
    perturbed: ScenarioResult
    window: tuple[float, float]      # [0.2, 0.95] x min(t_exp)
    late_window: tuple[float, float]  # [0.5, 0.95] x min(t_exp)
    mean_ratio: np.ndarray           # (4,) perturbed/baseline window means
    late_ratio: np.ndarray           # (4,) same over the late window
    max_rel_change: np.ndarray       # (4,) max |delta|/max(|base|, 1) in window
    verdicts: dict[str, str] = field(default_factory=dict)

    @property
    def t_exp_base(self) -> float:
        return self.base.t_exp

    @property
    def t_exp_perturbed(self) -> float:
        return self.perturbed.t_exp

    @property
    def rel_delta_t_exp(self) -> float:
        return (self.t_exp_perturbed - self.t_exp_base) / self.t_exp_base


def _window_samples(traj: Trajectory, lo: float, hi: float, n: int = 151) -> np.ndarray:
    ts = np.linspace(lo, hi, n)
    return np.array([evaluate_dense(traj, t).array() for t in ts])


def _direction(ratio: float, band: float = 0.05) -> str:
    if ratio > 1.0 + band:
        return "increase"
    if ratio < 1.0 - band:
        return "decrease"
    return "negligible"


def run_perturbation(spec: PerturbationSpec,
                     params: Optional[ParameterSet] = None,
                     config: Optional[IntegratorConfig] = None) -> PerturbationReport:
    """Run baseline and perturbed copies of the scenario and compare them.

    All verdicts are recomputed from the two trajectories.  Comparison
    windows are normalized by the shorter of the two stage durations so both
    runs are sampled strictly inside their exponential-growth phases.
    """
    base_p = params if params is not None else DEFAULT_PARAMETERS
    pert_p = base_p.scaled(spec.parameter, spec.multiplier)
    scn = get_scenario(spec.baseline)

    base = run_scenario(scn, base_p, config)
    pert = run_scenario(scn, pert_p, config)
    if base.stage is None or pert.stage is None:
        raise RuntimeError(
            f"perturbation {spec.parameter} x {spec.multiplier}: both runs must "
            "exhibit an explosive stage to be compared"
        )

    t_min = min(base.t_exp, pert.t_exp)
    window = (0.2 * t_min, 0.95 * t_min)
    late_window = (0.5 * t_min, 0.95 * t_min)

    yb = _window_samples(base.trajectory, *window)
    yp = _window_samples(pert.trajectory, *window)
    mean_ratio = yp.mean(axis=0) / yb.mean(axis=0)
    max_rel_change = np.max(np.abs(yp - yb) / np.maximum(np.abs(yb), 1.0), axis=0)

    lb = _window_samples(base.trajectory, *late_window)
    lp = _window_samples(pert.trajectory, *late_window)
    late_ratio = lp.mean(axis=0) / lb.mean(axis=0)

    rel_dt = (pert.t_exp - base.t_exp) / base.t_exp
    verdicts = {"t_exp": _direction(1.0 + rel_dt)}
    for i, var in enumerate(VARIABLES):
        verdicts[var] = _direction(float(late_ratio[i]))

    return PerturbationReport(
        spec=spec, base=base, perturbed=pert,
        window=window, late_window=late_window,
        mean_ratio=mean_ratio, late_ratio=late_ratio,
        max_rel_change=max_rel_change, verdicts=verdicts,
    )


# ---------------------------------------------------------------------------
# Table-style reporting


@dataclass(frozen=True)
class IndexTable:
    """One reported row: the dominant entries of one index at one checkpoint."""

    t_over_texp: float
    kind: str                        # "API" | "TPI" | "Po" | "II"
    row: str                         # "mode 1".."mode 4" or a variable name
    M: int
    entries: tuple[tuple[object, float], ...]  # (process number or variable, value)


@dataclass(frozen=True)
class ScenarioReport:
    """Structured tables plus the persistent-process summary for one run."""

    name: str
    t_exp: Optional[float]
    attractor: str
    tables: tuple[IndexTable, ...]
    persistent: dict[str, tuple[int, ...]]


def ranked_entries(values: np.ndarray, labels: Sequence,
                   cutoff: float = 0.95) -> tuple[tuple[object, float], ...]:
    """Entries in descending |value| until their cumulative |value| reaches
    the cutoff (ties broken by original position).  The input rows are
    normalized, so the cumulative sum of a full row is 1."""
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        return ()
    order = np.lexsort((np.arange(v.size), -np.abs(v)))
    out, cum = [], 0.0
    for idx in order:
        if cum >= cutoff:
            break
        out.append((labels[idx], float(v[idx])))
        cum += abs(v[idx])
    return tuple(out)


def _record_tables(rec: DiagnosticsRecord) -> list[IndexTable]:
    processes = tuple(range(1, 16))
    tables = []
    for n in range(4):
        row = f"mode {n + 1}"
        tables.append(IndexTable(rec.t_over_texp, "API", row, rec.M,
                                 ranked_entries(rec.api[n], processes)))
        tables.append(IndexTable(rec.t_over_texp, "TPI", row, rec.M,
                                 ranked_entries(rec.tpi[n], processes)))
        tables.append(IndexTable(rec.t_over_texp, "Po", row, rec.M,
                                 ranked_entries(rec.pointer[n], VARIABLES)))
    for i, var in enumerate(VARIABLES):
        tables.append(IndexTable(rec.t_over_texp, "II", var, rec.M,
                                 ranked_entries(rec.importance[i], processes)))
    return tables


def ii_persistence(result: ScenarioResult,
                   threshold: float = 0.02,
                   min_fraction: float = 0.5,
                   fracs: Sequence[float] = PERSISTENCE_FRACTIONS) -> dict[str, tuple[int, ...]]:
    """Processes whose importance stays above `threshold` persistently.

    A process is persistent for a variable when |II| > threshold at more than
    `min_fraction` of the interior stage samples (adaptive M at each).
    Processes significant only in the initial transient or in the final
    approach to t_exp are excluded by construction.
    """
    if result.stage is None:
        return {var: () for var in VARIABLES}
    counts = np.zeros((4, 15), dtype=int)
    for frac in fracs:
        s = evaluate_dense(result.trajectory, frac * result.stage.t_exp)
        rec = diagnostics_record(s, result.params, t_over_texp=frac)
        counts += np.abs(rec.importance) > threshold
    need = min_fraction * len(fracs)
    return {
        var: tuple(int(k + 1) for k in range(15) if counts[i, k] > need)
        for i, var in enumerate(VARIABLES)
    }


def joint_ii_persistence(results: Sequence[ScenarioResult],
                         threshold: float = 0.02,
                         min_fraction: float = 0.5) -> dict[str, tuple[int, ...]]:
    """Union of per-scenario persistent processes over several runs."""
    joint: dict[str, set[int]] = {var: set() for var in VARIABLES}
    for res in results:
        for var, procs in ii_persistence(res, threshold, min_fraction).items():
            joint[var].update(procs)
    return {var: tuple(sorted(procs)) for var, procs in joint.items()}


def report_tables(result: ScenarioResult) -> ScenarioReport:
    """Dominant-entry tables at every checkpoint plus the persistence summary."""
    tables: list[IndexTable] = []
    for rec in result.records:
        tables.extend(_record_tables(rec))
    return ScenarioReport(
        name=result.scenario.name,
        t_exp=result.t_exp,
        attractor=result.attractor,
        tables=tuple(tables),
        persistent=ii_persistence(result),
    )
