"""What actually moves the outcome?  Single-parameter what-if experiments.

Each experiment multiplies one rate constant, reruns the escape case TP,
and compares against the baseline over the shared stage window.  The
directional verdicts are computed from the trajectories, never assumed:
tumor growth `a` controls both the clock and the burden, NK lysis `c` is
too weak to matter at the fitted value, and lymphocyte influx `e` moves
only the NK population riding its constraint.
"""
from ticsp.harness import PerturbationSpec, run_perturbation

EXPERIMENTS = [
    PerturbationSpec("a", 0.8),
    PerturbationSpec("a", 1.2),
    PerturbationSpec("c", 0.6),
    PerturbationSpec("e", 0.6),
]

print(f"{'change':>10} {'t_exp [d]':>16} {'T late-ratio':>12} "
      f"{'N ratio':>8}  verdicts")
for spec in EXPERIMENTS:
    rep = run_perturbation(spec)
    label = f"{spec.parameter} x {spec.multiplier}"
    t_cmp = f"{rep.t_exp_base:.2f} -> {rep.t_exp_perturbed:.2f}"
    v = ", ".join(f"{k}:{s}" for k, s in rep.verdicts.items()
                  if s != "negligible") or "all negligible"
    print(f"{label:>10} {t_cmp:>16} {rep.late_ratio[0]:12.3f} "
          f"{rep.mean_ratio[1]:8.3f}  {v}")

print("""
Reading the table:
  a x 0.8  slower growth stretches the stage and shrinks the late burden;
           the NK pool, enslaved to C/T, rises as T falls.
  a x 1.2  the exact opposite, as a control.
  c x 0.6  NK lysis is ~9 orders below tumor growth at these populations;
           nothing changes measurably.
  e x 0.6  the NK constraint N_hat = e C / (p T) is linear in e: the window
           average of N scales by 0.6 while the tumor clock stays put.""")
