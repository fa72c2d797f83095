"""Analytic influence functions for a simply supported span.

The rotation at a station r under a point load P at z is the virtual-work
integral of ``m_r(s) * M(s; z) * v(s)`` over the span, where ``m_r`` is the
bending moment per unit couple applied at r and ``M`` the moment from the
load.  Both factors are piecewise affine with breakpoints at r and z, so the
kernel is piecewise quadratic and integrates in closed form.

Sign/tie-break convention: the Heaviside step in ``m_r`` is right-continuous,
``H(0) = 1``, so ``m_r`` takes its right-limit value at s = r.  The choice
never affects any integral.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DomainError


def _check_span(L: float) -> float:
    L = float(L)
    if not (L > 0.0):
        raise DomainError(f"span length must be > 0, got {L}")
    return L


def moment_influence(span_length: float, sensor: float, coord):
    """Bending moment at ``coord`` due to a unit couple at ``sensor``.

    Dimensionless: -s/L left of the sensor, 1 - s/L from the sensor on.
    Accepts scalar or array ``coord``.
    """
    L = _check_span(span_length)
    r = float(sensor)
    if not (0.0 < r < L):
        raise DomainError(f"sensor must satisfy 0 < r < L, got r={r}, L={L}")
    s = np.asarray(coord, dtype=float)
    if np.any(s < 0.0) or np.any(s > L):
        raise DomainError(f"coordinate outside [0, {L}]")
    out = -s / L + (s >= r)
    return out if out.ndim else float(out)


def load_moment(span_length: float, load: float, magnitude: float, coord):
    """Bending moment at ``coord`` from a point load ``magnitude`` at ``load``.

    Piecewise linear, continuous at s = z with peak P*z*(1 - z/L).
    """
    L = _check_span(span_length)
    z = float(load)
    P = float(magnitude)
    if not (0.0 <= z <= L):
        raise DomainError(f"load position must lie in [0, {L}], got {z}")
    if not (P > 0.0):
        raise DomainError(f"load magnitude must be > 0, got {P}")
    s = np.asarray(coord, dtype=float)
    if np.any(s < 0.0) or np.any(s > L):
        raise DomainError(f"coordinate outside [0, {L}]")
    out = P * np.where(s < z, (L - z) / L * s, z * (1.0 - s / L))
    return out if out.ndim else float(out)


def kernel(span_length: float, sensor: float, load: float, coord, magnitude: float = 1.0):
    """Forward kernel m_r(s) * M(s; z): piecewise quadratic in s with
    breakpoints at the sensor and the load position."""
    return moment_influence(span_length, sensor, coord) * load_moment(
        span_length, load, magnitude, coord
    )


def rotation_uniform_ss(
    span_length: float,
    sensor: float,
    load: float,
    magnitude: float = 1.0,
    compliance: float = 1.0,
) -> float:
    """Closed-form rotation at ``sensor`` for uniform compliance.

    Exact integral of the kernel times a constant v over the span; the
    independent oracle for the finite element solver and for the assembled
    design matrix.  Equivalent beam-theory form: for r <= z the rotation is
    ``P v (L-z) (L^2 - (L-z)^2 - 3 r^2) / (6 L)`` and the r >= z branch
    follows from the mirror antisymmetry theta(L-r; L-z) = -theta(r; z).
    """
    L = _check_span(span_length)
    r = float(sensor)
    z = float(load)
    P = float(magnitude)
    v = float(compliance)
    if not (0.0 < r < L):
        raise DomainError(f"sensor must satisfy 0 < r < L, got r={r}, L={L}")
    if not (0.0 <= z <= L):
        raise DomainError(f"load position must lie in [0, {L}], got {z}")
    if not (v > 0.0):
        raise DomainError(f"uniform compliance must be > 0, got {v}")
    if not (P > 0.0):
        raise DomainError(f"load magnitude must be > 0, got {P}")
    if r <= z:
        b = L - z
        theta = P * b * (L * L - b * b - 3.0 * r * r) / (6.0 * L)
    else:
        a = L - r
        theta = -P * z * (L * L - z * z - 3.0 * a * a) / (6.0 * L)
    return v * theta
