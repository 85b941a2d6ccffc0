"""
Classical versus robust projections under contamination
=======================================================

A short run of scenario I: for each contamination level the median test
accuracy of classical and robust FDA/TR is printed next to the benchmark
that uses the true parameters. A full study uses 200 replications (see the
``simulate`` subcommand); 20 are enough to see the classical estimates
break down while the robust ones hold.
"""
import os

from robust_tr import StudyConfig, run_study, summarize

cfg = StudyConfig(
    scenario="I",
    epsilons=(0.0, 0.1, 0.2, 0.3),
    replications=20,
    methods=("cTR", "cFDA", "rTR", "rFDA", "tTR", "tFDA"),
    seed=11,
    threads=os.cpu_count() or 1,
)
rows = summarize(run_study(cfg))

table = {(r["method"], r["epsilon"]): r for r in rows}
print("method " + " ".join(f"eps={e:<5}" for e in cfg.epsilons))
for m in cfg.methods:
    cells = " ".join(f"{table[m, e]['accuracy_median']:9.3f}" for e in cfg.epsilons)
    print(f"{m:6s} {cells}")

print("\nmedian sin of the largest angle to the population TR subspace")
for m in ("cTR", "rTR"):
    cells = " ".join(f"{table[m, e]['angle_median']:9.3f}" for e in cfg.epsilons)
    print(f"{m:6s} {cells}")
