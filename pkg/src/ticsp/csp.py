"""Timescale decomposition and mode-projection diagnostics.

Each state's Jacobian is split into dynamical modes (leading-order
basis: right eigenvectors as columns, left basis by matrix inversion so
biorthonormality is exact).  Modes are sorted fastest-first by
timescale tau = 1/|lambda|; complex-conjugate eigenpairs become two
real basis vectors (real and imaginary parts) sharing one timescale.

Four per-mode projection tables quantify how the 15 kinetic processes
and 4 populations participate in each mode:

* amplitude participation: share of process k in mode n's amplitude,
  P[n,k] = (beta^n . S_k) R_k / sum_i |(beta^n . S_i) R_i|
* timescale participation: share of process k in the eigenvalue,
  c[n,k] = beta^n . (S_k outer grad R_k) . alpha_n, row-normalized
* pointer: diagonal projector weight of variable i in mode m,
  Po[m,i] = alpha[i,m] * beta[m,i]
* slow importance: share of process k in the slow (modes > M) part of
  each variable's time derivative.

Also: exhausted-mode counting (how many fast dissipative modes have
damped out at the local tolerance), detection of the explosive stage
(the interval where the Jacobian has an eigenvalue with positive real
part), and mode tracking along a trajectory by basis-overlap matching.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .integrator import Trajectory, evaluate_dense, locate_event
from .kinetics import (
    N_PROCESSES,
    STOICHIOMETRY,
    State,
    jacobian_array,
    process_rates,
    rhs_array,
)
from .params import ParameterSet

__all__ = [
    "DecompositionError", "ModeDecomposition", "DiagnosticsRecord",
    "ExplosiveStage", "decompose", "api", "tpi", "pointer", "importance",
    "exhausted_count", "explosive_stage", "track_modes", "diagnostics_record",
]

_COND_LIMIT = 1e12


class DecompositionError(RuntimeError):
    """Jacobian eigenbasis unusable (near-defective) or inconsistent."""


@dataclass(frozen=True)
class ModeDecomposition:
    """Eigenmode split of the dynamics at one state, fastest mode first.

    Invariants: beta @ alpha = I to 1e-10; alpha @ amplitudes
    reconstructs the full time derivative to 1e-8 relative.  Complex
    pairs occupy two adjacent slots (real and imaginary part vectors)
    sharing a timescale; `complex_pair[n]` is the partner's index, or
    None for real modes.
    """

    state: State
    eigenvalues: np.ndarray          # (4,) complex, sorted by descending |lambda|
    alpha: np.ndarray                # (4, 4) right basis, columns
    beta: np.ndarray                 # (4, 4) left basis, rows
    timescales: np.ndarray           # (4,) days, ascending
    amplitudes: np.ndarray           # (4,) cells/day, f = beta @ g
    explosive: np.ndarray            # (4,) bool, Re lambda > 0
    complex_pair: tuple              # per-mode partner index or None
    tracked: bool = False            # True if reordered by track_modes
    ambiguous: bool = False          # True if overlap matching was ambiguous

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    def mode_sign_flipped(self, n: int) -> "ModeDecomposition":
        """Copy with mode n's (alpha_n, beta^n, f^n) all negated.

        Index tables are invariant except for the row sign of API/TPI;
        biorthonormality is preserved exactly.
        """
        alpha = self.alpha.copy(); alpha[:, n] *= -1.0
        beta = self.beta.copy(); beta[n, :] *= -1.0
        amp = self.amplitudes.copy(); amp[n] *= -1.0
        return dataclasses.replace(self, alpha=alpha, beta=beta, amplitudes=amp)


@dataclass(frozen=True)
class ExplosiveStage:
    """Interval where the Jacobian carries a positive-Re-eigenvalue mode."""

    start: float                     # day
    end: float                       # day; the explosive-timescale end time
    mode_index: int                  # 1-based position in tau-sorted order

    @property
    def t_exp(self) -> float:
        return self.end

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class DiagnosticsRecord:
    """All four index tables at one trajectory time."""

    time: float
    t_over_texp: float               # nan when no explosive stage exists
    M: int                           # exhausted-mode count used for II
    api: np.ndarray                  # (4, 15)
    tpi: np.ndarray                  # (4, 15)
    pointer: np.ndarray              # (4 modes, 4 variables)
    importance: np.ndarray           # (4 variables, 15)
    decomposition: ModeDecomposition


def _pair_up(w: np.ndarray, V: np.ndarray):
    """Sort modes fastest-first and convert conjugate pairs to real vectors."""
    # descending |lambda| (ascending tau); ties: dissipative before explosive
    order = np.lexsort((w.real >= 0.0, -np.abs(w)))
    w, V = w[order], V[:, order]

    alpha = np.empty((4, 4))
    lam = np.empty(4, dtype=complex)
    partner: list = [None] * 4
    i = 0
    while i < 4:
        if abs(w[i].imag) > 0.0:
            if i == 3 or abs(w[i + 1] - np.conj(w[i])) > 1e-8 * abs(w[i]):
                raise DecompositionError(
                    "complex eigenvalue without an adjacent conjugate partner"
                )
            lead = i if w[i].imag > 0 else i + 1
            v = V[:, lead]
            alpha[:, i] = v.real
            alpha[:, i + 1] = v.imag
            lam[i], lam[i + 1] = w[lead], np.conj(w[lead])
            partner[i], partner[i + 1] = i + 1, i
            i += 2
        else:
            alpha[:, i] = V[:, i].real
            lam[i] = w[i].real
            i += 1
    return lam, alpha, tuple(partner)


def decompose(state: State, params: ParameterSet, canonicalize: bool = True) -> ModeDecomposition:
    """Eigenmode decomposition of the Jacobian at one state.

    The left basis is the matrix inverse of the right-eigenvector
    column matrix, making biorthonormality exact by construction.  With
    `canonicalize` the sign of each mode (alpha_n, beta^n, f^n jointly)
    is fixed so the mode's largest-magnitude amplitude-participation
    entry is positive.
    """
    y = state.array()
    J = jacobian_array(y, params)
    w, V = np.linalg.eig(J)
    lam, alpha, partner = _pair_up(w, V)

    if np.linalg.cond(alpha) > _COND_LIMIT:
        raise DecompositionError(
            f"near-defective Jacobian: eigenbasis condition number "
            f"{np.linalg.cond(alpha):.3e} exceeds {_COND_LIMIT:.0e}"
        )
    beta = np.linalg.inv(alpha)
    amplitudes = beta @ rhs_array(y, params)

    dec = ModeDecomposition(
        state=state,
        eigenvalues=lam,
        alpha=alpha,
        beta=beta,
        timescales=1.0 / np.abs(lam),
        amplitudes=amplitudes,
        explosive=lam.real > 0.0,
        complex_pair=partner,
    )
    if canonicalize:
        terms = (beta @ STOICHIOMETRY) * process_rates(state, params).rates[None, :]
        for n in range(4):
            k_dom = int(np.argmax(np.abs(terms[n])))
            if terms[n, k_dom] < 0.0:
                dec = dec.mode_sign_flipped(n)
    return dec


def _normalize_rows(num: np.ndarray) -> np.ndarray:
    """Row-normalize by the sum of absolute values; all-zero row -> NaN."""
    denom = np.sum(np.abs(num), axis=1, keepdims=True)
    out = np.full_like(num, np.nan)
    ok = denom[:, 0] > 0.0
    out[ok] = num[ok] / denom[ok]
    return out


def api(decomp: ModeDecomposition, processes) -> np.ndarray:
    """Amplitude participation: share of each process in each mode's f^n.

    Rows sum to 1 in absolute value; a row is NaN (undefined) only if
    every projected rate vanishes.
    """
    num = (decomp.beta @ STOICHIOMETRY) * processes.rates[None, :]
    return _normalize_rows(num)


def tpi(decomp: ModeDecomposition, state: State, params: ParameterSet) -> np.ndarray:
    """Timescale participation: share of each process in each eigenvalue.

    c[n,k] = beta^n . (d(S_k R_k)/dy) . alpha_n; the row sum equals the
    mode's eigenvalue (real part for complex pairs), verified to 1e-8
    relative before normalizing.
    """
    ps = process_rates(state, params)
    B = decomp.beta @ STOICHIOMETRY              # (4, 15)
    GA = ps.gradients @ decomp.alpha             # (15, 4)
    c = B * GA.T                                 # c[n, k]

    sums = c.sum(axis=1)
    lam_re = decomp.eigenvalues.real
    scale = np.maximum(np.abs(lam_re), 1e-12 * np.max(np.abs(decomp.eigenvalues)))
    bad = np.abs(sums - lam_re) > 1e-8 * scale
    if np.any(bad):
        n = int(np.argmax(bad))
        raise DecompositionError(
            f"timescale-participation row {n + 1} sums to {sums[n]:.12e}, "
            f"eigenvalue real part is {lam_re[n]:.12e}"
        )
    return _normalize_rows(c)


def pointer(decomp: ModeDecomposition) -> np.ndarray:
    """Diagonal projector weights: Po[m, i] = alpha[i, m] * beta[m, i].

    Each row sums to exactly 1 (biorthonormality); entries near 1 pin
    mode m to variable i.
    """
    return decomp.beta * decomp.alpha.T


def importance(decomp: ModeDecomposition, M: int, processes) -> np.ndarray:
    """Slow importance: share of process k in the slow part of dy_i/dt.

    Projects each process contribution onto modes M+1..4 and normalizes
    per variable.  M = 0 reduces to the signed shares of the raw
    equation terms.
    """
    if not 0 <= M < 4:
        raise ValueError(f"M must be in [0, 4), got {M}")
    B = decomp.beta @ STOICHIOMETRY
    num = decomp.alpha[:, M:] @ (B[M:, :] * processes.rates[None, :])
    return _normalize_rows(num)


def exhausted_count(decomp: ModeDecomposition, state: State,
                    rtol: float = 1e-3, atol: float = 1.0,
                    fixed: Optional[int] = None) -> int:
    """Number of fast dissipative modes already damped to local tolerance.

    Largest M such that modes 1..M are dissipative and each of their
    contributions to every variable, integrated over the next-slowest
    timescale, stays under rtol*|y_i| + atol.  A complex pair is never
    split across the fast/slow boundary.  `fixed` overrides the count.
    """
    if fixed is not None:
        if not 0 <= fixed < 4:
            raise ValueError(f"fixed M must be in [0, 4), got {fixed}")
        return int(fixed)
    y_abs = np.abs(state.array())
    contrib = np.abs(decomp.alpha * decomp.amplitudes[None, :])  # [i, r]
    for M in (3, 2, 1):
        if np.any(decomp.explosive[:M]):
            continue
        if decomp.complex_pair[M - 1] == M:
            continue  # boundary would split a conjugate pair
        tau_next = decomp.timescales[M]
        if np.all(contrib[:, :M] * tau_next < (rtol * y_abs + atol)[:, None]):
            return M
    return 0


def boundary_state(state: State) -> State:
    """A copy safe for linearization: boundary states (tumor clipped to
    zero by the integrator) are evaluated in the attracting limit T -> 0+."""
    if state.T > 0.0:
        return state
    return State(state.t, 1e-300, state.N, state.L, state.C)


def _max_growth_rate(y: np.ndarray, params: ParameterSet) -> float:
    """Largest Re(lambda) of the Jacobian; boundary states (tumor clipped
    to zero) are evaluated in the attracting limit T -> 0+."""
    z = np.maximum(np.asarray(y, dtype=float), 0.0)
    if z[0] == 0.0:
        z[0] = 1e-300
    return float(np.linalg.eigvals(jacobian_array(z, params)).real.max())


def explosive_stage(traj: Trajectory, params: ParameterSet,
                    refine_tol: float = 1e-4, subdivide: int = 4) -> Optional[ExplosiveStage]:
    """First interval where the Jacobian has a positive-growth eigenvalue.

    Scans the dense output (grid refined `subdivide`-fold), locates the
    sign changes of max Re lambda to `refine_tol` days, and reports the
    first interval; its end is the explosive-timescale end time t_exp.
    Returns None when every scanned state is dissipative.
    """
    base = traj.t
    if len(base) < 2:
        return None
    times = np.unique(np.concatenate(
        [np.linspace(base[i], base[i + 1], subdivide + 1) for i in range(len(base) - 1)]
    ))
    vals = np.array([_max_growth_rate(evaluate_dense(traj, t).array(), params)
                     for t in times])
    inside = vals > 0.0
    if not np.any(inside):
        return None

    first = int(np.argmax(inside))
    event = lambda s: _max_growth_rate(s.array(), params)
    if first == 0:
        start = float(times[0])
    else:
        start = locate_event(traj, event, tol=refine_tol,
                             t_span=(times[first - 1], times[first]))
        if start is None:  # sign change narrower than the scan spacing
            start = float(times[first])

    after = np.nonzero(~inside[first:])[0]
    if len(after) == 0:
        end = float(times[-1])  # stage still open at the end of the run
    else:
        j = first + int(after[0])
        end = locate_event(traj, event, tol=refine_tol,
                           t_span=(times[j - 1], times[j]))
        if end is None:
            end = float(times[j])

    mid = evaluate_dense(traj, 0.5 * (start + end))
    dec = decompose(mid, params)
    mode_index = int(np.argmax(dec.explosive)) + 1
    return ExplosiveStage(start=start, end=end, mode_index=mode_index)


def track_modes(prev: ModeDecomposition, cur: ModeDecomposition) -> ModeDecomposition:
    """Reorder/re-sign cur's modes for continuity with prev.

    Matches modes by maximizing |beta^n_prev . alpha_n_cur| (optimal
    assignment) and flips signs so each overlap is positive.  If the
    best and runner-up overlaps for some previous mode are within 1% of
    each other the matching is ambiguous: cur is returned in its
    tau-sorted order with the `ambiguous` flag set.
    """
    overlap = prev.beta @ cur.alpha              # [prev mode, cur mode]
    mag = np.abs(overlap)
    for n in range(4):
        top2 = np.sort(mag[n])[-2:]
        if top2[1] > 0.0 and top2[0] >= 0.99 * top2[1]:
            return dataclasses.replace(cur, ambiguous=True)
    _, order = linear_sum_assignment(-mag)

    inv = np.empty(4, dtype=int)
    inv[order] = np.arange(4)
    partner = tuple(
        None if cur.complex_pair[j] is None else int(inv[cur.complex_pair[j]])
        for j in order
    )
    alpha = cur.alpha[:, order].copy()
    beta = cur.beta[order, :].copy()
    amplitudes = cur.amplitudes[order].copy()
    for n in range(4):
        if overlap[n, order[n]] < 0.0:
            alpha[:, n] *= -1.0
            beta[n, :] *= -1.0
            amplitudes[n] *= -1.0
    return dataclasses.replace(
        cur,
        eigenvalues=cur.eigenvalues[order],
        alpha=alpha,
        beta=beta,
        timescales=cur.timescales[order],
        amplitudes=amplitudes,
        explosive=cur.explosive[order],
        complex_pair=partner,
        tracked=True,
    )


def diagnostics_record(state: State, params: ParameterSet,
                       t_over_texp: float = np.nan,
                       fixed_M: Optional[int] = None,
                       rtol: float = 1e-3, atol: float = 1.0) -> DiagnosticsRecord:
    """All four index tables at one state, with M from the exhausted-mode
    count unless overridden."""
    dec = decompose(state, params)
    ps = process_rates(state, params)
    M = exhausted_count(dec, state, rtol=rtol, atol=atol, fixed=fixed_M)
    return DiagnosticsRecord(
        time=state.t,
        t_over_texp=float(t_over_texp),
        M=M,
        api=api(dec, ps),
        tpi=tpi(dec, state, params),
        pointer=pointer(dec),
        importance=importance(dec, M, ps),
        decomposition=dec,
    )
