"""
Forward model anatomy
=====================

The rotation measured at a station r under a point load at z is a weighted
integral of the compliance 1/EI along the span.  This script walks through
the three ingredients: the unit-couple moment influence m_r, the load moment
M, and their product (the kernel), then assembles the design matrix and
checks it against the closed-form uniform-beam rotation.

Outputs land in demos/out/.
"""

from pathlib import Path

import numpy as np

import tiltbeam as tb

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

L = 10.0
r, z = 2.5, 6.0
s = np.linspace(0.0, L, 501)

m_r = tb.moment_influence(L, r, s)
M = tb.load_moment(L, z, 1.0, s)
K = tb.kernel(L, r, z, s)

# the kernel is piecewise quadratic with visible breakpoints at r and z
np.savetxt(
    out / "kernel_anatomy.csv",
    np.column_stack([s, m_r, M, K]),
    delimiter=",",
    header="s,m_r,M,kernel",
    comments="",
)

# element integrals assemble the design matrix; A @ v reproduces the exact
# closed-form rotation for uniform compliance
system = tb.BeamSystem.simply_supported(L)
mesh = tb.build_mesh(system, 40)
sensors = [tb.SensorStation("demo", r)]
sweep = np.linspace(0.25, 9.75, 39)
A = tb.build_design_matrix(system, sensors, sweep, mesh)
v = np.full(mesh.n_elements, 5e-10)  # EI = 2e9 N m^2
theta = A @ v
exact = np.array([tb.rotation_uniform_ss(L, r, zz, 1.0, 5e-10) for zz in sweep])
print("design matrix shape:", A.shape)
print("max |A v - exact| :", np.max(np.abs(theta - exact)))

# column norms dip toward the supports: no bending moment, no information
norms = np.linalg.norm(A, axis=0)
np.savetxt(
    out / "column_norms.csv",
    np.column_stack([mesh.midpoints, norms]),
    delimiter=",",
    header="x_mid,column_norm",
    comments="",
)
print("weakest columns sit at the supports:", np.argsort(norms)[:2])

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    axes[0].plot(s, m_r, label="m_r (unit couple at r)")
    axes[0].plot(s, M, label="M (unit load at z)")
    axes[0].plot(s, K, label="kernel m_r * M")
    axes[0].axvline(r, color="k", ls=":", lw=0.8)
    axes[0].axvline(z, color="k", ls=":", lw=0.8)
    axes[0].legend()
    axes[0].set_ylabel("moment / kernel")
    axes[1].plot(mesh.midpoints, norms, marker="o", ms=3)
    axes[1].set_xlabel("position along span [m]")
    axes[1].set_ylabel("design column norm")
    fig.tight_layout()
    fig.savefig(out / "forward_anatomy.png", dpi=130)
    print("wrote", out / "forward_anatomy.png")
except ImportError:
    print("matplotlib unavailable; CSV outputs only")
