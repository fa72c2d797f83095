"""Discretization of the forward map: meshes, exact element integrals of the
piecewise-quadratic kernel, the stacked design matrix, and difference
operators for the smoothness prior.

Row layout of every stacked matrix: sensor-major, load-minor, so row
``i * K + k`` belongs to sensor i and load position k.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .exceptions import DomainError, ModelError
from .kernels import kernel
from .model import AxleTrain, BeamSystem, Mesh, SensorStation

# 2-point Gauss-Legendre on [-1, 1]: exact for the quadratic kernel pieces.
_GAUSS_X = np.array([-1.0, 1.0]) / np.sqrt(3.0)


def build_mesh(
    system: BeamSystem,
    n_per_span: int | Sequence[int] | None = None,
    breakpoints: Sequence[float] | None = None,
) -> Mesh:
    """Partition the beam domain into elements.

    Either ``n_per_span`` (uniform elements per span) or explicit
    ``breakpoints`` must be given.  Span-joint coordinates always end up
    among the breakpoints; explicit breakpoints are honoured verbatim but
    must contain them.
    """
    joints = system.support_positions
    if (n_per_span is None) == (breakpoints is None):
        raise DomainError("give exactly one of n_per_span or breakpoints")
    if breakpoints is not None:
        pts = np.asarray(breakpoints, dtype=float)
        mesh = Mesh(pts)  # validates monotonicity and start at 0
        if abs(mesh.total_length - system.total_length) > 1e-9:
            raise DomainError(
                f"breakpoints end at {mesh.total_length}, domain is {system.total_length}"
            )
        for xj in joints:
            if np.min(np.abs(pts - xj)) > 1e-9:
                raise DomainError(f"span joint at {xj} m missing from breakpoints")
        return mesh
    if np.isscalar(n_per_span):
        counts = [int(n_per_span)] * len(system.spans)
    else:
        counts = [int(n) for n in n_per_span]
        if len(counts) != len(system.spans):
            raise DomainError("one element count per span required")
    if any(n < 1 for n in counts):
        raise DomainError(f"need >= 1 element per span, got {counts}")
    pts = [0.0]
    for left, right, n in zip(joints[:-1], joints[1:], counts):
        pts.extend(np.linspace(left, right, n + 1)[1:])
    return Mesh(np.asarray(pts))


def element_integral(
    span_length: float,
    sensor: float,
    load: float,
    magnitude: float,
    s_lo: float,
    s_hi: float,
) -> float:
    """Exact integral of the kernel over one element ``[s_lo, s_hi]``.

    The element is split at the kernel breakpoints s = sensor and s = load;
    each sub-piece is a single quadratic, integrated exactly by 2-point
    Gauss.  Splitting at points that already are element boundaries changes
    nothing.
    """
    L = float(span_length)
    lo, hi = float(s_lo), float(s_hi)
    if not (0.0 <= lo <= hi <= L + 1e-12):
        raise DomainError(f"element [{lo}, {hi}] not inside [0, {L}]")
    if hi - lo == 0.0:
        return 0.0
    cuts = [lo] + [x for x in sorted((float(sensor), float(load))) if lo < x < hi] + [hi]
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        s = mid + half * _GAUSS_X
        total += half * float(np.sum(kernel(L, sensor, load, s, magnitude)))
    return total


def _design_row(
    L: float, sensor: float, load: float, magnitude: float, mesh: Mesh
) -> np.ndarray:
    """All element integrals for one (sensor, load) pair at once."""
    pts = mesh.breakpoints
    cuts = np.unique(
        np.concatenate([pts, [x for x in (float(sensor), float(load)) if 0.0 < x < L]])
    )
    mid = 0.5 * (cuts[:-1] + cuts[1:])
    half = 0.5 * np.diff(cuts)
    s = mid[:, None] + half[:, None] * _GAUSS_X[None, :]
    vals = kernel(L, sensor, load, s.ravel(), magnitude).reshape(s.shape)
    piece = half * vals.sum(axis=1)
    elem = np.clip(np.searchsorted(pts, mid, side="right") - 1, 0, mesh.n_elements - 1)
    row = np.zeros(mesh.n_elements)
    np.add.at(row, elem, piece)
    return row


def build_design_matrix(
    system: BeamSystem,
    sensors: Sequence[SensorStation],
    sweep: Sequence[float],
    mesh: Mesh,
    train: AxleTrain | None = None,
    enforce_path: bool = True,
) -> np.ndarray:
    """Stacked design matrix A of shape (R*K, N) for a simply supported span.

    ``A[i*K + k, j]`` is the exact kernel integral over element j for sensor
    i and (reference-axle) load position ``sweep[k]``; multi-axle trains sum
    the per-axle matrices, dropping axles outside the span.  Indeterminate
    systems must go through the finite element route instead.
    """
    if not system.is_single_span_ss:
        raise ModelError(
            "analytic design matrix only covers a simply supported single span; "
            "use fem.compliance_jacobian for indeterminate systems"
        )
    L = system.total_length
    if abs(mesh.total_length - L) > 1e-9:
        raise DomainError("mesh does not cover the span")
    if train is None:
        train = AxleTrain.point_load(1.0)
    sweep = np.asarray(sweep, dtype=float)
    lo, hi = system.load_path
    if enforce_path and sweep.size and (sweep.min() < lo - 1e-9 or sweep.max() > hi + 1e-9):
        raise DomainError(f"sweep positions outside load_path [{lo}, {hi}]")
    R, K, N = len(sensors), sweep.size, mesh.n_elements
    A = np.zeros((R * K, N))
    for i, st in enumerate(sensors):
        st.validate(L)
        for k, z in enumerate(sweep):
            row = A[i * K + k]
            for off, P in zip(train.offsets, train.loads):
                za = z + off
                if 0.0 <= za <= L:
                    row += _design_row(L, st.position, za, P, mesh)
    return A


def difference_operator(order: int, n: int) -> np.ndarray:
    """Interior difference stencils: order 1 rows [-1, 1], order 2 rows
    [1, -2, 1]; shape (n - order, n), no boundary closure rows."""
    if order not in (1, 2):
        raise DomainError(f"difference order must be 1 or 2, got {order}")
    if n <= order:
        raise DomainError(f"need n > order, got n={n}, order={order}")
    stencil = np.array([-1.0, 1.0]) if order == 1 else np.array([1.0, -2.0, 1.0])
    D = np.zeros((n - order, n))
    for i in range(n - order):
        D[i, i : i + order + 1] = stencil
    return D
