"""Euler-Bernoulli finite elements for multi-span systems with rotational
springs: cubic Hermite elements, consistent point-load vectors (so load
sweeps need not be mesh-aligned), rotation extraction at arbitrary stations,
and sensitivities of rotations with respect to element compliance.

Deflection w is positive in the load direction and theta = w', which matches
the sign of the analytic virtual-work rotation in :mod:`tiltbeam.kernels`.
Rigid supports are imposed by DOF elimination, never by penalty stiffness.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .exceptions import DomainError, ModelError, NumericError
from .model import AxleTrain, BeamSystem, ComplianceField, Mesh, SensorStation


def _element_stiffness_unit(h: float) -> np.ndarray:
    """Hermite element stiffness for EI = 1."""
    return np.array(
        [
            [12.0, 6.0 * h, -12.0, 6.0 * h],
            [6.0 * h, 4.0 * h * h, -6.0 * h, 2.0 * h * h],
            [-12.0, -6.0 * h, 12.0, -6.0 * h],
            [6.0 * h, 2.0 * h * h, -6.0 * h, 4.0 * h * h],
        ]
    ) / h**3


def _shape(xi: float, h: float) -> np.ndarray:
    return np.array(
        [
            1.0 - 3.0 * xi**2 + 2.0 * xi**3,
            h * (xi - 2.0 * xi**2 + xi**3),
            3.0 * xi**2 - 2.0 * xi**3,
            h * (-(xi**2) + xi**3),
        ]
    )


def _shape_deriv(xi: float, h: float) -> np.ndarray:
    return np.array(
        [
            (-6.0 * xi + 6.0 * xi**2) / h,
            1.0 - 4.0 * xi + 3.0 * xi**2,
            (6.0 * xi - 6.0 * xi**2) / h,
            -2.0 * xi + 3.0 * xi**2,
        ]
    )


class _Assembled:
    """Stiffness assembly + factorization for one (system, compliance) pair."""

    def __init__(self, system: BeamSystem, field: ComplianceField):
        mesh = field.mesh
        if abs(mesh.total_length - system.total_length) > 1e-9:
            raise DomainError("mesh does not cover the beam domain")
        pts = mesh.breakpoints
        self.system = system
        self.mesh = mesh
        self.n_nodes = pts.size
        self.n_dof = 2 * self.n_nodes

        support_nodes = []
        for xj in system.support_positions:
            idx = int(np.argmin(np.abs(pts - xj)))
            if abs(pts[idx] - xj) > 1e-9:
                raise ModelError(f"support at {xj} m is not a mesh node")
            support_nodes.append(idx)

        K = np.zeros((self.n_dof, self.n_dof))
        ei = 1.0 / field.values
        for j in range(mesh.n_elements):
            idx = self._element_dofs(j)
            K[np.ix_(idx, idx)] += ei[j] * _element_stiffness_unit(mesh.widths[j])

        fixed = np.zeros(self.n_dof, dtype=bool)
        for node, sup in zip(support_nodes, system.supports):
            if sup.vertical:
                fixed[2 * node] = True
            if sup.is_rigid:
                fixed[2 * node + 1] = True
            elif sup.rotational > 0.0:
                K[2 * node + 1, 2 * node + 1] += sup.rotational
        self.free = np.flatnonzero(~fixed)
        try:
            self._cho = scipy.linalg.cho_factor(K[np.ix_(self.free, self.free)])
        except scipy.linalg.LinAlgError as exc:
            raise ModelError(f"singular stiffness matrix (mechanism?): {exc}") from exc

    def _element_dofs(self, j: int) -> np.ndarray:
        return np.array([2 * j, 2 * j + 1, 2 * j + 2, 2 * j + 3])

    def solve(self, loads: np.ndarray) -> np.ndarray:
        """Solve for full DOF vectors; ``loads`` has shape (n_dof, m)."""
        u = np.zeros_like(loads)
        u[self.free] = scipy.linalg.cho_solve(self._cho, loads[self.free])
        return u

    # load vectors ----------------------------------------------------------

    def force_vector(self, position: float, magnitude: float) -> np.ndarray:
        f = np.zeros(self.n_dof)
        self.add_force(f, position, magnitude)
        return f

    def add_force(self, f: np.ndarray, position: float, magnitude: float) -> None:
        """Consistent Hermite load vector for a point force; positions outside
        the domain contribute nothing."""
        if position < 0.0 or position > self.mesh.total_length:
            return
        j = self.mesh.element_of(position)
        h = self.mesh.widths[j]
        xi = (position - self.mesh.breakpoints[j]) / h
        f[self._element_dofs(j)] += magnitude * _shape(xi, h)

    def couple_vector(self, position: float, magnitude: float = 1.0) -> np.ndarray:
        """Consistent load vector for a point couple.  The same vector also
        extracts theta(position) from a DOF solution, which is what makes the
        discrete Maxwell-Betti identity exact."""
        if not (0.0 <= position <= self.mesh.total_length):
            raise DomainError(f"couple position {position} outside the domain")
        f = np.zeros(self.n_dof)
        j = self.mesh.element_of(position)
        h = self.mesh.widths[j]
        xi = (position - self.mesh.breakpoints[j]) / h
        f[self._element_dofs(j)] += magnitude * _shape_deriv(xi, h)
        return f

    def train_vector(self, train: AxleTrain, position: float) -> np.ndarray:
        f = np.zeros(self.n_dof)
        for off, P in zip(train.offsets, train.loads):
            self.add_force(f, position + off, P)
        return f


@dataclass(frozen=True)
class FESolution:
    """Nodal deflections and rotations plus Hermite interpolation helpers."""

    mesh: Mesh
    deflection: np.ndarray
    rotation: np.ndarray

    def _dofs(self, x: float):
        j = self.mesh.element_of(x)
        h = self.mesh.widths[j]
        xi = (x - self.mesh.breakpoints[j]) / h
        d = np.array(
            [
                self.deflection[j],
                self.rotation[j],
                self.deflection[j + 1],
                self.rotation[j + 1],
            ]
        )
        return d, xi, h

    def deflection_at(self, x: float) -> float:
        d, xi, h = self._dofs(x)
        return float(_shape(xi, h) @ d)

    def rotation_at(self, x: float) -> float:
        d, xi, h = self._dofs(x)
        return float(_shape_deriv(xi, h) @ d)


def _to_solution(mesh: Mesh, u: np.ndarray) -> FESolution:
    return FESolution(mesh=mesh, deflection=u[0::2].copy(), rotation=u[1::2].copy())


def fe_solve(
    system: BeamSystem,
    field: ComplianceField,
    train: AxleTrain,
    position: float,
) -> FESolution:
    """Solve the beam under an axle train with its reference axle at
    ``position``.  Axles outside the domain contribute zero."""
    asm = _Assembled(system, field)
    u = asm.solve(asm.train_vector(train, position)[:, None])[:, 0]
    if not np.all(np.isfinite(u)):
        raise NumericError("non-finite finite element solution")
    return _to_solution(field.mesh, u)


def fe_solve_couple(
    system: BeamSystem,
    field: ComplianceField,
    position: float,
    magnitude: float = 1.0,
) -> FESolution:
    """Solve the beam under a point couple; the reciprocal load case used by
    the Maxwell-Betti check and the adjoint sensitivities."""
    asm = _Assembled(system, field)
    u = asm.solve(asm.couple_vector(position, magnitude)[:, None])[:, 0]
    return _to_solution(field.mesh, u)


def fe_rotation_matrix(
    system: BeamSystem,
    field: ComplianceField,
    sensors: Sequence[SensorStation],
    sweep: Sequence[float],
    train: AxleTrain | None = None,
    enforce_path: bool = True,
) -> np.ndarray:
    """Rotations at each sensor for each sweep position, shape (R, K).

    Stacking ``.ravel()`` gives the sensor-major measurement layout.
    ``enforce_path=False`` admits reference positions outside the load path
    (a vehicle entering or leaving: off-domain axles contribute zero), which
    trace synthesis needs.
    """
    sweep = np.asarray(sweep, dtype=float)
    if train is None:
        train = AxleTrain.point_load(1.0)
    for st in sensors:
        st.validate(system.total_length)
    lo, hi = system.load_path
    if enforce_path and sweep.size and (sweep.min() < lo - 1e-9 or sweep.max() > hi + 1e-9):
        raise DomainError(f"sweep positions outside load_path [{lo}, {hi}]")
    R, K = len(sensors), sweep.size
    if K == 0 or R == 0:
        return np.zeros((R, K))
    asm = _Assembled(system, field)
    loads = np.column_stack([asm.train_vector(train, z) for z in sweep])
    U = asm.solve(loads)
    extract = np.column_stack([asm.couple_vector(st.position) for st in sensors])
    return extract.T @ U


def compliance_jacobian(
    system: BeamSystem,
    field: ComplianceField,
    sensors: Sequence[SensorStation],
    sweep: Sequence[float],
    train: AxleTrain | None = None,
    method: str = "adjoint",
    fd_step: float = 1e-6,
    fd_floor: float = 0.0,
) -> np.ndarray:
    """Sensitivity of stacked rotations to element compliance, (R*K, N).

    ``adjoint`` evaluates the exact derivative of the discrete model as the
    mutual energy of the realized load and unit-couple moment fields,
    ``d theta / d v_j = a_i^T K_j^(EI=1) u_k / v_j^2``; it reduces to the
    analytic element integrals on a determinate span.  ``fd`` is the central
    finite-difference ground truth with absolute step
    ``fd_step * max(v_j, fd_floor)`` that the adjoint path is validated
    against.
    """
    sweep = np.asarray(sweep, dtype=float)
    if train is None:
        train = AxleTrain.point_load(1.0)
    R, K, N = len(sensors), sweep.size, field.mesh.n_elements
    if method == "fd":
        return _jacobian_fd(system, field, sensors, sweep, train, fd_step, fd_floor)
    if method != "adjoint":
        raise DomainError(f"unknown jacobian method {method!r}")
    if R * K == 0:
        return np.zeros((R * K, N))
    asm = _Assembled(system, field)
    for st in sensors:
        st.validate(system.total_length)
    U = asm.solve(np.column_stack([asm.train_vector(train, z) for z in sweep]))
    Adj = asm.solve(np.column_stack([asm.couple_vector(st.position) for st in sensors]))
    J = np.empty((R * K, N))
    v = field.values
    for j in range(N):
        idx = asm._element_dofs(j)
        k_unit = _element_stiffness_unit(field.mesh.widths[j])
        energy = Adj[idx].T @ k_unit @ U[idx]  # (R, K)
        J[:, j] = energy.ravel() / v[j] ** 2
    return J


def forward_operator(
    system: BeamSystem,
    mesh: Mesh,
    sensors: Sequence[SensorStation],
    sweep: Sequence[float],
    train: AxleTrain | None = None,
):
    """Callable ``v -> (stacked rotations, Jacobian)`` on the cheapest valid
    route: the exact analytic design matrix for a simply supported single
    span (linear in v), otherwise the finite element model with adjoint
    sensitivities."""
    from .assembly import build_design_matrix

    sweep = np.asarray(sweep, dtype=float)
    if system.is_single_span_ss:
        A = build_design_matrix(system, sensors, sweep, mesh, train)

        def linear_op(v: np.ndarray):
            return A @ v, A

        linear_op.design_matrix = A
        linear_op.linear = True
        return linear_op

    def fe_op(v: np.ndarray):
        field = ComplianceField(mesh, v)
        theta = fe_rotation_matrix(system, field, sensors, sweep, train).ravel()
        J = compliance_jacobian(system, field, sensors, sweep, train)
        return theta, J

    fe_op.linear = False
    return fe_op


def _jacobian_fd(system, field, sensors, sweep, train, step, floor):
    N = field.mesh.n_elements
    R, K = len(sensors), sweep.size
    J = np.empty((R * K, N))
    base = field.values
    for j in range(N):
        h = step * max(base[j], floor)
        if base[j] + h == base[j]:
            raise NumericError(f"finite-difference step underflow at element {j}")
        vp, vm = base.copy(), base.copy()
        vp[j] += h
        vm[j] -= h
        tp = fe_rotation_matrix(system, ComplianceField(field.mesh, vp), sensors, sweep, train)
        tm = fe_rotation_matrix(system, ComplianceField(field.mesh, vm), sensors, sweep, train)
        J[:, j] = (tp - tm).ravel() / (2.0 * h)
    return J
