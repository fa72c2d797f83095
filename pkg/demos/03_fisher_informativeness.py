"""
Where does a tilt sensor actually look?
=======================================

Per-element Fisher information of single rotation sensors in the rigidity
parameterization.  On a simply supported span the curve kinks at the sensor
and peaks to its right (near x/L = 1/3 for sensors left of 1/3).  On a
two-span beam, sensors on span 1 keep a rapidly diminishing grip on span 2
as they move away from the interior support.
"""

from pathlib import Path

import numpy as np

import tiltbeam as tb

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

# single span, several sensor locations
system = tb.BeamSystem.simply_supported(1.0)
mesh = tb.build_mesh(system, 200)
ei = tb.RigidityField.uniform(mesh, 1.0)
sweep = np.linspace(0.0025, 0.9975, 200)
positions = [0.15, 0.25, 0.5, 0.75]
curves = {}
for p in positions:
    x, c = tb.informativeness_curve(system, ei, tb.SensorStation(f"r={p}", p), sweep, 1.0)
    curves[p] = c
    print(f"sensor at x/L = {p}: curve peaks at x/L = {x[np.argmax(c)]:.3f}")
np.savetxt(
    out / "informativeness_single_span.csv",
    np.column_stack([x] + [curves[p] for p in positions]),
    delimiter=",", header="x," + ",".join(f"r{p}" for p in positions), comments="",
)

# two spans: span-2 information of span-1 sensors
frame = tb.BeamSystem(
    spans=(1.0, 1.0), supports=(tb.Support(0.0), tb.Support(0.0), tb.Support(0.0))
)
mesh2 = tb.build_mesh(frame, 40)
ei2 = tb.RigidityField.uniform(mesh2, 1.0)
sweep2 = np.linspace(0.01, 1.99, 120)
span2 = mesh2.midpoints > 1.0
sensor_grid = np.round(np.arange(0.1, 1.01, 0.1), 2)
totals = []
two_span_curves = []
for p in sensor_grid:
    x2, c2 = tb.informativeness_curve(frame, ei2, tb.SensorStation(f"p{p}", p), sweep2, 1.0)
    totals.append(np.sum(c2[span2]))
    two_span_curves.append(c2)
print("span-2 information by sensor position:")
for p, t in zip(sensor_grid, totals):
    print(f"  x/L = {p:3.1f}: {t:9.3e}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(2, 1, figsize=(8, 7))
    for p in positions:
        axes[0].plot(x, curves[p], label=f"sensor at {p}")
    axes[0].set_yscale("log")
    axes[0].set_xlabel("x / L")
    axes[0].set_ylabel("per-element information")
    axes[0].legend(fontsize=8)
    for p, c2 in zip(sensor_grid, two_span_curves):
        axes[1].plot(x2, c2, lw=0.9, label=f"{p:.1f}")
    axes[1].axvline(1.0, color="k", ls="--", lw=0.8)
    axes[1].set_yscale("log")
    axes[1].set_xlabel("x / L (interior support at 1.0)")
    axes[1].set_ylabel("per-element information")
    axes[1].legend(fontsize=7, ncol=5, title="sensor x/L")
    fig.tight_layout()
    fig.savefig(out / "informativeness.png", dpi=130)
    print("wrote", out / "informativeness.png")
except ImportError:
    print("matplotlib unavailable; CSV outputs only")
