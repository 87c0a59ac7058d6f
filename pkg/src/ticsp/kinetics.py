"""Process rates, stoichiometry, and Jacobian of the tumor-immune model.

The state vector is y = (T, N, L, C): tumor cells, NK cells, CD8+ T
cells, and circulating lymphocytes.  The dynamics are assembled from 15
elementary processes with constant stoichiometry,

    dy/dt = S @ R(y),

where column k-1 of ``STOICHIOMETRY`` is the stoichiometric vector of
process k and R(y) the vector of nonnegative process rates:

     1  tumor logistic growth            a T (1 - b T)
     2  NK production                    e C
     3  lymphocyte production            alpha
     4  NK turnover                      f N
     5  CD8+ turnover                    m L
     6  lymphocyte turnover              beta C
     7  tumor kill by NK                 c N T
     8  tumor kill by CD8+               D T      (saturating, see below)
     9  NK recruitment by tumor          g N T^2 / (h + T^2)
    10  CD8+ recruitment by kill         j L (D T)^2 / (k + (D T)^2)
    11  CD8+ priming by NK debris        r1 N T
    12  CD8+ priming from lymphocytes    r2 C T
    13  NK inactivation by tumor         p N T
    14  CD8+ inactivation by tumor       q L T
    15  CD8+ self-limitation             u N L^2

The fractional-kill factor D = d (L/T)^l / (s + (L/T)^l) saturates at d
for L >> T and vanishes for L = 0 (the limit is handled exactly).

All rate indices are 1-based in the public API, matching the process
numbering above; the same numbering is used in reports and CSV files.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import ParameterSet

__all__ = [
    "VARIABLES", "N_PROCESSES", "STOICHIOMETRY", "PROCESS_LABELS",
    "DomainError", "State", "ProcessSet",
    "d_saturation", "process_rates", "rhs", "jacobian", "rate_jacobian_term",
]

VARIABLES = ("T", "N", "L", "C")
N_PROCESSES = 15

# Column k-1 = stoichiometric vector of process k (rows T, N, L, C).
STOICHIOMETRY = np.array([
    #  1   2   3   4   5   6   7   8   9  10  11  12  13  14  15
    [  1,  0,  0,  0,  0,  0, -1, -1,  0,  0,  0,  0,  0,  0,  0],  # T
    [  0,  1,  0, -1,  0,  0,  0,  0,  1,  0,  0,  0, -1,  0,  0],  # N
    [  0,  0,  0,  0, -1,  0,  0,  0,  0,  1,  1,  1,  0, -1, -1],  # L
    [  0,  0,  1,  0,  0, -1,  0,  0,  0,  0,  0,  0,  0,  0,  0],  # C
], dtype=float)
STOICHIOMETRY.setflags(write=False)

PROCESS_LABELS = {
    1: "tumor logistic growth",
    2: "NK production from lymphocytes",
    3: "lymphocyte production",
    4: "NK turnover",
    5: "CD8+ turnover",
    6: "lymphocyte turnover",
    7: "tumor kill by NK",
    8: "tumor kill by CD8+ (saturating)",
    9: "NK recruitment by tumor",
    10: "CD8+ recruitment by tumor kill",
    11: "CD8+ priming by NK debris",
    12: "CD8+ priming from lymphocytes",
    13: "NK inactivation by tumor",
    14: "CD8+ inactivation by tumor",
    15: "CD8+ self-limitation",
}


class DomainError(ValueError):
    """State outside the feasible domain of the kinetics."""


@dataclass(frozen=True)
class State:
    """Phase-space point with its time tag.

    T must be positive for dynamics evaluation; the tumor-free boundary
    T = 0 is representable as data (equilibrium records) but rates and
    Jacobians cannot be evaluated there.
    """

    t: float
    T: float
    N: float
    L: float
    C: float

    def __post_init__(self):
        for name in ("T", "N", "L", "C"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise DomainError(f"{name} = {v!r} is outside the feasible domain")

    def array(self) -> np.ndarray:
        return np.array([self.T, self.N, self.L, self.C])

    @classmethod
    def from_array(cls, t: float, y) -> "State":
        return cls(float(t), float(y[0]), float(y[1]), float(y[2]), float(y[3]))


@dataclass(frozen=True)
class ProcessSet:
    """Rates and analytic rate gradients at one state.

    `rates` has shape (15,) and `gradients` shape (15, 4); row k-1 of
    `gradients` is the gradient of process k w.r.t. (T, N, L, C).  Use
    the 1-based accessors `rate(k)` / `gradient(k)` to avoid off-by-one
    mistakes against the process table.
    """

    rates: np.ndarray
    gradients: np.ndarray
    D: float

    def rate(self, k: int) -> float:
        _check_index(k)
        return float(self.rates[k - 1])

    def gradient(self, k: int) -> np.ndarray:
        _check_index(k)
        return self.gradients[k - 1]


def _check_index(k: int) -> None:
    if not 1 <= int(k) <= N_PROCESSES:
        raise IndexError(f"process index must be in 1..{N_PROCESSES}, got {k}")


def _require_dynamic(T: float, N: float, L: float, C: float) -> None:
    if not (T > 0.0):
        raise DomainError(f"T = {T!r}: dynamics require T > 0")
    if N < 0.0 or L < 0.0 or C < 0.0:
        raise DomainError(f"negative population in (N, L, C) = ({N!r}, {L!r}, {C!r})")


def _saturation(T: float, L: float, p: ParameterSet):
    """Return (D, phi, sigma) for the fractional-kill factor.

    With x = (L/T)^l:  phi = x / (s + x),  sigma = s / (s + x) = 1 - phi,
    D = d * phi.  Evaluated on the branch that avoids overflow of x when
    L >> T (x is replaced by its reciprocal there), so the factor is
    usable over the full dynamic range of the populations.
    """
    if L == 0.0:
        return 0.0, 0.0, 1.0
    if L >= T:
        z = (T / L) ** p.l            # = 1/x <= 1
        denom = 1.0 + p.s * z
        phi = 1.0 / denom
        sigma = p.s * z / denom
    else:
        x = (L / T) ** p.l            # < 1; underflow to 0 gives D = 0 exactly
        denom = p.s + x
        phi = x / denom
        sigma = p.s / denom
    return p.d * phi, phi, sigma


def _rates_grads(T, N, L, C, p: ParameterSet, want_grads: bool):
    """Core evaluation: rates R (15,), gradients G (15,4) or None, and D."""
    D, phi, sigma = _saturation(T, L, p)

    T2 = T * T
    rec9 = T2 / (p.h + T2)            # NK recruitment saturation
    V = D * T
    W = V * V
    rec10 = W / (p.k + W)             # CD8+ recruitment saturation

    R = np.empty(N_PROCESSES)
    R[0] = p.a * T * (1.0 - p.b * T)
    R[1] = p.e * C
    R[2] = p.alpha
    R[3] = p.f * N
    R[4] = p.m * L
    R[5] = p.beta * C
    R[6] = p.c * N * T
    R[7] = V
    R[8] = p.g * rec9 * N
    R[9] = p.j * rec10 * L
    R[10] = p.r1 * N * T
    R[11] = p.r2 * C * T
    R[12] = p.p * N * T
    R[13] = p.q * L * T
    R[14] = p.u * N * L * L

    if not want_grads:
        return R, None, D

    # d/dT and d/dL of D, written to stay finite in both saturation branches:
    #   dD/dT = -(l/T) D sigma,   dD/dL = +(l/L) D sigma.
    dV_dT = D * (1.0 - p.l * sigma)           # = D + T dD/dT
    dV_dL = p.l * D * sigma * T / L if L > 0.0 else 0.0   # = T dD/dL

    G = np.zeros((N_PROCESSES, 4))
    G[0, 0] = p.a * (1.0 - 2.0 * p.b * T)
    G[1, 3] = p.e
    # G[2] = 0 (constant source)
    G[3, 1] = p.f
    G[4, 2] = p.m
    G[5, 3] = p.beta
    G[6, 0] = p.c * N
    G[6, 1] = p.c * T
    G[7, 0] = dV_dT
    G[7, 2] = dV_dL
    G[8, 0] = p.g * N * 2.0 * T * p.h / (p.h + T2) ** 2
    G[8, 1] = p.g * rec9
    dR10_dV = p.j * L * 2.0 * V * p.k / (p.k + W) ** 2
    G[9, 0] = dR10_dV * dV_dT
    G[9, 2] = p.j * rec10 + dR10_dV * dV_dL
    G[10, 0] = p.r1 * N
    G[10, 1] = p.r1 * T
    G[11, 0] = p.r2 * C
    G[11, 3] = p.r2 * T
    G[12, 0] = p.p * N
    G[12, 1] = p.p * T
    G[13, 0] = p.q * L
    G[13, 2] = p.q * T
    G[14, 1] = p.u * L * L
    G[14, 2] = 2.0 * p.u * N * L
    return R, G, D


# -- array-based entry points (hot path for the integrator and CSP) ----------

def rates_array(y, p: ParameterSet) -> np.ndarray:
    T, N, L, C = (float(v) for v in y)
    _require_dynamic(T, N, L, C)
    R, _, _ = _rates_grads(T, N, L, C, p, want_grads=False)
    return R


def rhs_array(y, p: ParameterSet) -> np.ndarray:
    return STOICHIOMETRY @ rates_array(y, p)


def jacobian_array(y, p: ParameterSet) -> np.ndarray:
    T, N, L, C = (float(v) for v in y)
    _require_dynamic(T, N, L, C)
    _, G, _ = _rates_grads(T, N, L, C, p, want_grads=True)
    return STOICHIOMETRY @ G


# -- State-based public API ---------------------------------------------------

def d_saturation(state: State, p: ParameterSet) -> float:
    """Fractional-kill factor D at a state; D in [0, d), with D(L=0) = 0."""
    if not (state.T > 0.0):
        raise DomainError("d_saturation requires T > 0")
    D, _, _ = _saturation(state.T, state.L, p)
    return D


def process_rates(state: State, p: ParameterSet) -> ProcessSet:
    """Evaluate all 15 process rates and their analytic gradients."""
    _require_dynamic(state.T, state.N, state.L, state.C)
    R, G, D = _rates_grads(state.T, state.N, state.L, state.C, p, want_grads=True)
    return ProcessSet(rates=R, gradients=G, D=D)


def rhs(state: State, p: ParameterSet) -> np.ndarray:
    """Time derivative (dT, dN, dL, dC)/dt = S @ R."""
    return rhs_array(state.array(), p)


def jacobian(state: State, p: ParameterSet) -> np.ndarray:
    """Analytic 4x4 Jacobian of the right-hand side, J = S @ dR/dy."""
    return jacobian_array(state.array(), p)


def rate_jacobian_term(k: int, state: State, p: ParameterSet) -> np.ndarray:
    """Contribution of process k to the Jacobian: S_k (outer) grad R^k.

    The fifteen terms sum to `jacobian(state, p)`.
    """
    _check_index(k)
    ps = process_rates(state, p)
    return np.outer(STOICHIOMETRY[:, k - 1], ps.gradients[k - 1])
