"""The explosive stage: when growth outruns dissipation, and for how long.

Along a trajectory the Jacobian usually damps perturbations everywhere.
During tumor escape (or collapse) one mode turns amplifying: the interval
where that happens is the explosive stage, and its end time t_exp is the
natural clock against which all the diagnostics are normalized.  The same
machinery also finds the knife-edge initial tumor burden that separates
escape from remission.
"""
import numpy as np

from ticsp import DEFAULT_PARAMETERS
from ticsp.csp import decompose
from ticsp.integrator import basin_threshold, evaluate_dense
from ticsp.harness import SCENARIOS, run_scenario

P = DEFAULT_PARAMETERS

print("=== The four reference cases ===")
print(f"{'case':>4} {'T(0)':>10} {'t_exp [d]':>10} {'reaches':>8}")
results = {}
for name in ("TP", "TR", "TP1", "TR1"):
    res = run_scenario(name)
    results[name] = res
    print(f"{name:>4} {SCENARIOS[name].T0:10.6g} {res.t_exp:10.4f} {res.attractor:>8}")

print("\nTP1 and TR1 start one tumor cell apart and end in different basins.")
print("Bisecting the initial burden between them (same N, L, C start):")
thr = basin_threshold(1e3, 1e1, 6e8, P, (3.1e5, 3.3e5))
print(f"  escape threshold: T(0) = {thr:.1f} cells")

print("\n=== Timescale spectrum along the TP run ===")
tp = results["TP"]
print(f"{'t/t_exp':>8} {'tau1':>10} {'tau2':>10} {'tau3':>10} {'tau4':>10}  amplifying")
for frac in (0.0, 0.2, 0.5, 0.8, 1.0):
    s = evaluate_dense(tp.trajectory, frac * tp.t_exp)
    dec = decompose(s, P)
    marks = ",".join(str(i + 1) for i in np.flatnonzero(dec.explosive)) or "-"
    taus = " ".join(f"{v:10.3g}" for v in dec.timescales)
    print(f"{frac:8.1f} {taus}  mode {marks}")

print("\nThe two fastest modes stay dissipative and orders of magnitude")
print(f"faster than the amplifying third mode (stage mode: {tp.stage.mode_index}),")
print("which is what makes a reduced slow model possible (see demo 04).")
