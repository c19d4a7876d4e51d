"""A small Monte Carlo benchmark study
=======================================

Runs a few replicates of the proposed estimator against the oracle
(true adjustment set, no lasso penalty) at desk scale and prints the
aggregated table.  The full benchmark configuration (n up to 1000,
s = 5000, 20 replicates) lives in the acceptance suite; this demo keeps
the dimensions small so it finishes in about two minutes.
"""

from slrs import ScenarioConfig, StudySpec, coverage_study, run_study

spec = StudySpec(
    scenario=ScenarioConfig(n=100, s=400, p=32, q=32, seed=0),
    methods=("joint:proposed", "joint:oracle", "joint:no_lasso"),
    replicates=5,
    base_seed=42,
    grid_n1=5,
    grid_n2=5,
)

report = run_study(spec, threads=2)
print(f"{'method':<18} {'MSE(beta)':>12} {'MSE(B)':>12} {'sens':>6} {'spec':>6}")
for name, summary in sorted(report.summary.items()):
    mb, sb = summary["mse_beta"]
    mB, sB = summary["mse_B"]
    print(f"{name:<18} {mb:8.3f} ({sb:.3f}) {mB:7.3f} ({sB:.3f}) "
          f"{summary['sensitivity'][0]:6.2f} {summary['specificity'][0]:6.3f}")
if report.failures:
    print("failures:", report.failures)

curves = coverage_study(spec, methods=("joint", "outcome", "intersection"),
                        sizes=range(1, 31), threads=2)
print("\ncoverage of the true adjustment set at |set| = 10, 20, 30:")
for method, cc in curves.items():
    picks = [cc.overall[i] for i in (9, 19, 29)]
    print(f"  {method:<13} " + "  ".join(f"{v:.2f}" for v in picks))
