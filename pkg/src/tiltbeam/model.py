"""Core structural types and unit conversions.

Everything internal is SI: metres, newtons, radians.  Tilt data arrives in
mm/m and vehicle masses in tonnes; the converters at the bottom are the only
place those units are touched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import DomainError, ModelError

#: Rotational-restraint tag for a clamped (rigid) support.  Deliberately not a
#: finite stiffness: rigid supports are handled by DOF elimination, never by a
#: penalty term.
RIGID = math.inf

#: Gravitational acceleration used for mass -> load conversion.
GRAVITY = 9.81


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Support:
    """Support conditions at one node.

    ``rotational`` is the rotational spring stiffness k_theta in N*m/rad;
    ``0.0`` means a free rotation (pinned) and ``RIGID`` a clamped rotation.
    ``vertical`` states whether the vertical displacement is restrained.
    """

    rotational: float = 0.0
    vertical: bool = True

    def __post_init__(self):
        if not (self.rotational >= 0.0):
            raise DomainError(f"spring stiffness must be >= 0, got {self.rotational}")

    @property
    def is_rigid(self) -> bool:
        return math.isinf(self.rotational)


PINNED = Support(rotational=0.0, vertical=True)


@dataclass(frozen=True)
class BeamSystem:
    """A multi-span beam with support conditions at the span joints.

    Parameters
    ----------
    spans
        Span lengths in metres, left to right.
    supports
        One :class:`Support` per joint node, ``len(spans) + 1`` entries.
    load_path
        Interval of admissible load positions in global coordinates.
        Defaults to the whole domain.
    """

    spans: tuple[float, ...]
    supports: tuple[Support, ...]
    load_path: tuple[float, float] | None = None

    def __post_init__(self):
        spans = tuple(float(s) for s in self.spans)
        object.__setattr__(self, "spans", spans)
        supports = tuple(self.supports)
        object.__setattr__(self, "supports", supports)
        if not spans:
            raise DomainError("a beam needs at least one span")
        if any(not (s > 0.0) for s in spans):
            raise DomainError(f"every span length must be > 0, got {spans}")
        if len(supports) != len(spans) + 1:
            raise DomainError(
                f"{len(spans)} spans need {len(spans) + 1} supports, got {len(supports)}"
            )
        if sum(1 for s in supports if s.vertical) < 2:
            raise ModelError("fewer than two vertical restraints: rigid-body mechanism")
        total = sum(spans)
        if self.load_path is None:
            object.__setattr__(self, "load_path", (0.0, total))
        else:
            lo, hi = (float(self.load_path[0]), float(self.load_path[1]))
            if not (0.0 <= lo < hi <= total + 1e-12):
                raise DomainError(
                    f"load_path {self.load_path} not inside the domain [0, {total}]"
                )
            object.__setattr__(self, "load_path", (lo, hi))

    @property
    def total_length(self) -> float:
        return float(sum(self.spans))

    @property
    def support_positions(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.spans)])

    @property
    def is_single_span_ss(self) -> bool:
        """True for the analytically tractable case: one span, both ends
        vertically restrained with free rotation."""
        return (
            len(self.spans) == 1
            and all(s.vertical for s in self.supports)
            and all(s.rotational == 0.0 for s in self.supports)
        )

    @classmethod
    def simply_supported(cls, length: float) -> "BeamSystem":
        return cls(spans=(length,), supports=(PINNED, PINNED))


@dataclass(frozen=True)
class SensorStation:
    """A rotation (tilt) measurement station in the open interior of the domain."""

    id: str
    position: float

    def validate(self, total_length: float) -> None:
        if not (0.0 < self.position < total_length):
            raise DomainError(
                f"sensor {self.id!r} at {self.position} m is not inside "
                f"(0, {total_length})"
            )


def validate_layout(sensors: Sequence[SensorStation], total_length: float) -> None:
    """Check positions are interior and pairwise distinct."""
    for s in sensors:
        s.validate(total_length)
    positions = [s.position for s in sensors]
    if len(set(positions)) != len(positions):
        raise DomainError(f"sensor positions must be distinct, got {positions}")


@dataclass(frozen=True)
class AxleTrain:
    """Axle offsets (m, relative to the reference axle) and loads (N).

    The train position ``z`` always refers to the reference axle; axle ``a``
    then sits at ``z + offsets[a]``.  Axles outside the beam contribute
    nothing, which is how a vehicle entering or leaving the bridge is modelled.
    """

    offsets: tuple[float, ...]
    loads: tuple[float, ...]

    def __post_init__(self):
        offsets = tuple(float(o) for o in self.offsets)
        loads = tuple(float(p) for p in self.loads)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "loads", loads)
        if len(offsets) != len(loads):
            raise DomainError("offsets and loads must have equal length")
        if not offsets:
            raise DomainError("an axle train needs at least one axle")
        if any(not math.isfinite(o) for o in offsets):
            raise DomainError("axle offsets must be finite")
        if any(not (p > 0.0) for p in loads):
            raise DomainError(f"axle loads must be > 0, got {loads}")

    @classmethod
    def point_load(cls, magnitude: float) -> "AxleTrain":
        return cls(offsets=(0.0,), loads=(magnitude,))

    @classmethod
    def from_total_mass(
        cls, mass_tonnes: float, offsets: Sequence[float], split: Sequence[float] | None = None
    ) -> "AxleTrain":
        """Distribute a total vehicle mass (t) over axles; equal split by default."""
        offsets = tuple(float(o) for o in offsets)
        if split is None:
            split = [1.0 / len(offsets)] * len(offsets)
        if len(split) != len(offsets) or abs(sum(split) - 1.0) > 1e-9:
            raise DomainError("axle split must match offsets and sum to 1")
        total = tonnes_to_newtons(mass_tonnes)
        return cls(offsets=offsets, loads=tuple(total * w for w in split))

    @property
    def total_load(self) -> float:
        return float(sum(self.loads))


@dataclass(frozen=True)
class Mesh:
    """Strictly increasing breakpoints partitioning [0, total_length]."""

    breakpoints: np.ndarray

    def __post_init__(self):
        pts = _readonly(np.asarray(self.breakpoints, dtype=float))
        object.__setattr__(self, "breakpoints", pts)
        if pts.ndim != 1 or pts.size < 2:
            raise DomainError("mesh needs at least two breakpoints")
        if np.any(np.diff(pts) <= 0):
            raise DomainError("mesh breakpoints must be strictly increasing")
        if abs(pts[0]) > 0:
            raise DomainError(f"mesh must start at 0, got {pts[0]}")

    @property
    def n_elements(self) -> int:
        return self.breakpoints.size - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.breakpoints[:-1] + self.breakpoints[1:])

    @property
    def total_length(self) -> float:
        return float(self.breakpoints[-1])

    def element_of(self, x: float) -> int:
        """Index of the element containing ``x`` (right-open, last closed)."""
        if not (0.0 <= x <= self.total_length):
            raise DomainError(f"{x} outside mesh domain [0, {self.total_length}]")
        j = int(np.searchsorted(self.breakpoints, x, side="right") - 1)
        return min(j, self.n_elements - 1)


@dataclass(frozen=True)
class ComplianceField:
    """Element-averaged compliance v_j = 1/EI_j, the unknowns of the inversion."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = _readonly(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", v)
        if v.shape != (self.mesh.n_elements,):
            raise DomainError(
                f"expected {self.mesh.n_elements} compliance values, got {v.shape}"
            )
        if not np.all(v > 0.0):
            raise DomainError("compliance values must be > 0")

    def to_rigidity(self) -> "RigidityField":
        return RigidityField(self.mesh, 1.0 / self.values)

    @classmethod
    def uniform(cls, mesh: Mesh, value: float) -> "ComplianceField":
        return cls(mesh, np.full(mesh.n_elements, float(value)))


@dataclass(frozen=True)
class RigidityField:
    """Element-wise flexural rigidity EI_j in N*m^2."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        ei = _readonly(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", ei)
        if ei.shape != (self.mesh.n_elements,):
            raise DomainError(
                f"expected {self.mesh.n_elements} rigidity values, got {ei.shape}"
            )
        if not np.all(ei > 0.0):
            raise DomainError("rigidity values must be > 0")

    def to_compliance(self) -> ComplianceField:
        return ComplianceField(self.mesh, 1.0 / self.values)

    @classmethod
    def uniform(cls, mesh: Mesh, value: float) -> "RigidityField":
        return cls(mesh, np.full(mesh.n_elements, float(value)))


@dataclass(frozen=True)
class MeasurementSet:
    """Rotations stacked over sensors x load positions.

    ``y`` has shape (R, K) in radians; the stacked layout used by every matrix
    in the package is sensor-major, load-minor, i.e. ``y.ravel()``.
    """

    sensors: tuple[SensorStation, ...]
    positions: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        pos = _readonly(np.asarray(self.positions, dtype=float))
        y = _readonly(np.asarray(self.y, dtype=float))
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "y", y)
        if y.shape != (len(self.sensors), pos.size):
            raise DomainError(
                f"y shape {y.shape} does not match {len(self.sensors)} sensors "
                f"x {pos.size} positions"
            )

    @property
    def stacked(self) -> np.ndarray:
        return self.y.ravel()

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    @property
    def n_positions(self) -> int:
        return int(self.positions.size)


# unit converters -----------------------------------------------------------

def mm_per_m_to_rad(x):
    """Tilt in mm/m -> rad.  Exactly *1e-3 (1 mm/m = 1 mrad)."""
    return np.asarray(x, dtype=float) * 1e-3


def rad_to_mm_per_m(x):
    return np.asarray(x, dtype=float) * 1e3


def tonnes_to_newtons(mass_tonnes: float) -> float:
    return float(mass_tonnes) * 1e3 * GRAVITY
