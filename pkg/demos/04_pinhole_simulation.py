"""
Full multi-seed simulation
==========================

Runs the default experiment (original plus two systems under both mapping
modes, five seeds) and prints the markdown report with its trend checks.
"""
import time

from pinhole import SimulationConfig, render_markdown, run_simulation, trend_check

t0 = time.perf_counter()
report = run_simulation(SimulationConfig())
print(render_markdown(report, trend_check(report)))
print(f"({time.perf_counter() - t0:.1f}s)")
