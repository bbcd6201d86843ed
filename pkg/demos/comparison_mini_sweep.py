"""A small comparison sweep: every family at one measure and one Robin parameter.

Half-planes meet the half-space value within their error bars; every other
shape sits strictly below it. Run with ``python demos/comparison_mini_sweep.py``
(set GT_THREADS to cap the worker pool).
"""

from gausstorsion.sweep import SweepConfig, run_sweep

cfg = SweepConfig(measures=(0.5,), betas=(1.0,), mesh_sizes=(0.16, 0.08, 0.04))
report = run_sweep(cfg)
print(f"{'family':>20s} {'T(domain)':>12s} {'T(half-space)':>14s} {'margin':>10s} {'bar':>9s}  status")
for r in report.rows:
    status = "PASS" if r["passed"] else "FAIL " + r["failure"]
    print(f"{r['family']:>20s} {r['T_domain']:12.8f} {r['T_halfspace']:14.8f} "
          f"{r['comparison_margin']:10.2e} {r['T_error_bar']:9.1e}  {status}")
print("content hash", report.content_hash()[:16])
