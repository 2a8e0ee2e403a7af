"""
Running the check harness
=========================

The harness evaluates every identity at seeded sample points and writes a
JSON report.  A mutation flag corrupts one formula on purpose: the run must
then fail, which shows the check is actually sensitive.
"""

from ckforms.harness import SuiteConfig, list_checks, run_suite

print(len(list_checks()), "checks registered")

report = run_suite(SuiteConfig(metric="schwarzschild(1)", points=3, suites=("prolong",)))
for r in report.results:
    print(f"{'PASS' if r.passed else 'FAIL'} {r.id:34s} {r.max_residual:.2e}")

# flip the sign of the curvature correction in the prolongation connection
bad = run_suite(SuiteConfig(metric="schwarzschild(1)", points=3, suites=("prolong",), mutate="main.parallel_iff_cke"))
hit = next(r for r in bad.results if r.id == "main.parallel_iff_cke")
print("mutated run passes?", bad.passed, f"(residual {hit.max_residual:.2f})")
