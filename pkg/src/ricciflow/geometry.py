"""Conformal metric state and intrinsic measurements.

A metric is a set of positive base edge lengths plus one logarithmic
conformal factor per vertex; every geometric quantity (angles, areas,
curvature) is derived from the current lengths

    l_e = exp((u_i + u_j) / 2) * l0_e,     e = (i, j).

Corner angles come from the law of cosines in the numerically stable
``atan2(4 * area, ...)`` form, so the three angles of a face sum to pi at
machine precision and angle defects telescope to 2 * pi * chi combinatorially.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateTriangleError,
    PerturbationError,
    TriangleInequalityError,
)
from .mesh import TriangleMesh

DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class ConformalMetric:
    """Base edge lengths plus per-vertex log conformal factors.

    Value semantics: instances are never mutated; operations return new
    metrics sharing the mesh and base lengths.
    """

    mesh: TriangleMesh
    base_lengths: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        base = np.ascontiguousarray(self.base_lengths, dtype=np.float64)
        u = np.ascontiguousarray(self.u, dtype=np.float64)
        if base.shape != (self.mesh.edge_count,):
            raise ValueError("base_lengths must have one entry per edge")
        if u.shape != (self.mesh.vertex_count,):
            raise ValueError("u must have one entry per vertex")
        if np.any(base <= 0.0) or not np.all(np.isfinite(base)):
            raise ValueError("base lengths must be positive and finite")
        object.__setattr__(self, "base_lengths", base)
        object.__setattr__(self, "u", u)

    @classmethod
    def flat(cls, mesh, base_lengths):
        """Metric with u = 0, i.e. the base lengths themselves."""
        return cls(mesh, base_lengths, np.zeros(mesh.vertex_count))

    def with_u(self, u):
        return ConformalMetric(self.mesh, self.base_lengths, u)


@dataclass(frozen=True)
class CurvatureField:
    """Pointwise discrete curvature data of one metric.

    ``defect`` is the angle defect (integrated Gaussian curvature) per
    vertex, ``dual_area`` the barycentric dual area, and ``R`` the scalar
    curvature ``2 * defect / dual_area``. ``r`` is the average scalar
    curvature ``4 * pi * chi / total_area``, constant under the flow.
    """

    defect: np.ndarray
    dual_area: np.ndarray
    R: np.ndarray
    r: float
    R_min: float
    R_max: float
    total_area: float

    def max_deviation(self):
        """sup |R - r|."""
        return max(self.R_max - self.r, self.r - self.R_min)


def current_lengths(metric):
    """Current edge lengths ``exp((u_i + u_j)/2) * base``.

    Raises :class:`TriangleInequalityError` if any face degenerates, which
    signals the caller (typically the flow driver) to shrink its step.
    """
    mesh = metric.mesh
    e0, e1 = mesh.edges[:, 0], mesh.edges[:, 1]
    lengths = metric.base_lengths * np.exp(0.5 * (metric.u[e0] + metric.u[e1]))
    _check_triangle_inequality(mesh, lengths)
    return lengths


def _check_triangle_inequality(mesh, lengths):
    opp = lengths[mesh.triangle_edges]
    slack = opp.sum(axis=1) - 2.0 * opp.max(axis=1)
    if np.any(slack <= 0.0):
        face = int(np.argmin(slack))
        raise TriangleInequalityError(
            f"triangle inequality violated in face {face}", face=face
        )


def face_quantities(mesh, sq_opp):
    """Areas and law-of-cosines terms from squared opposite-edge lengths.

    Returns ``(area, cos_terms)`` where ``cos_terms[:, k] = b^2 + c^2 - a^2``
    for the angle at corner ``k`` (opposite squared length ``a^2``). The
    corner angle is ``atan2(4 * area, cos_terms)`` and its cotangent is
    ``cos_terms / (4 * area)``.
    """
    q0, q1, q2 = sq_opp[:, 0], sq_opp[:, 1], sq_opp[:, 2]
    sixteen_sq = 2.0 * (q0 * q1 + q1 * q2 + q2 * q0) - (q0 * q0 + q1 * q1 + q2 * q2)
    scale = sq_opp.mean(axis=1)
    bad = sixteen_sq <= 16.0 * (DEGENERACY_TOL * scale) ** 2
    if np.any(bad):
        face = int(np.argmax(bad))
        raise DegenerateTriangleError(f"degenerate face {face}")
    area = 0.25 * np.sqrt(sixteen_sq)
    cos_terms = np.empty_like(sq_opp)
    cos_terms[:, 0] = q1 + q2 - q0
    cos_terms[:, 1] = q2 + q0 - q1
    cos_terms[:, 2] = q0 + q1 - q2
    return area, cos_terms


def corner_angles(mesh, lengths):
    """Corner angles per face, ``angles[t, k]`` at corner ``k``."""
    sq = lengths * lengths
    area, cos_terms = face_quantities(mesh, sq[mesh.triangle_edges])
    return np.arctan2(4.0 * area[:, None], cos_terms), area


def measure_curvature(metric):
    """Angle defects, dual areas, and scalar curvature of a metric."""
    lengths = current_lengths(metric)
    angles, area = corner_angles(metric.mesh, lengths)
    return curvature_from_faces(metric.mesh, angles, area)


def curvature_from_faces(mesh, angles, area):
    flat = mesh.triangles.reshape(-1)
    angle_sum = np.bincount(flat, weights=angles.reshape(-1), minlength=mesh.vertex_count)
    dual = np.bincount(
        flat, weights=np.repeat(area / 3.0, 3), minlength=mesh.vertex_count
    )
    defect = 2.0 * np.pi - angle_sum
    scalar = 2.0 * defect / dual
    total = float(area.sum())
    return CurvatureField(
        defect=defect,
        dual_area=dual,
        R=scalar,
        r=4.0 * np.pi * mesh.chi / total,
        R_min=float(scalar.min()),
        R_max=float(scalar.max()),
        total_area=total,
    )


def metric_area(metric):
    """Total area of the current metric."""
    lengths = current_lengths(metric)
    sq = lengths * lengths
    area, _ = face_quantities(metric.mesh, sq[metric.mesh.triangle_edges])
    return float(area.sum())


def scale_metric(metric, c):
    """Multiply total area by ``c`` (a uniform conformal scaling).

    Adds ``ln(c) / 2`` to every conformal factor; lengths scale by
    ``sqrt(c)``, curvature by ``1 / c``.
    """
    c = float(c)
    if c <= 0.0:
        raise ValueError("scale factor must be positive")
    if c == 1.0:
        return metric
    return metric.with_u(metric.u + 0.5 * np.log(c))


def normalize_area(metric, target):
    """Uniformly rescale so the total area equals ``target`` exactly."""
    return scale_metric(metric, target / metric_area(metric))


def curvature_window(field, margin_factor=1e-6):
    """Strict curvature bounds ``(alpha, beta)`` measured from a field.

    The margin keeps the bounds strict for the discrete minimizer/maximizer,
    mirroring the open bounds the comparison results assume.
    """
    margin = margin_factor * abs(field.R_min)
    return field.R_min - margin, field.R_max + margin


def perturb_metric(metric, amplitude, mode_seed):
    """Deterministic smooth perturbation of a negatively curved metric.

    ``u`` is shifted by ``amplitude`` times a fixed combination of low
    Laplace eigenvectors (selected by ``mode_seed``), then the area is
    renormalized to its original value.

    Returns
    -------
    (ConformalMetric, (float, float))
        The perturbed metric and its measured curvature window
        ``(alpha, beta)`` with ``alpha < R < beta``.

    Raises
    ------
    PerturbationError
        If the base metric is not negatively curved, or the amplitude is
        large enough to push the maximum curvature to zero or above.
    """
    base_field = measure_curvature(metric)
    if base_field.R_max >= 0.0:
        raise PerturbationError("base metric must have strictly negative curvature")

    if amplitude == 0.0:
        return metric, curvature_window(base_field)

    from .spectrum import assemble_operators, smallest_eigenpairs

    n_modes = min(8, metric.mesh.vertex_count // 2 - 1)
    stiffness, mass = assemble_operators(metric)
    snap = smallest_eigenpairs(stiffness, mass, n_modes, tol=1e-8, seed=mode_seed)
    rng = np.random.default_rng(mode_seed)
    coeffs = rng.standard_normal(n_modes - 1)
    shape = snap.eigenvectors[:, 1:] @ coeffs
    shape /= np.abs(shape).max()

    try:
        candidate = metric.with_u(metric.u + amplitude * shape)
        candidate = normalize_area(candidate, base_field.total_area)
        field = measure_curvature(candidate)
    except TriangleInequalityError as exc:
        raise PerturbationError(f"perturbation too large: {exc}") from exc
    if field.R_max >= 0.0:
        raise PerturbationError(
            f"perturbation produced non-negative curvature (R_max={field.R_max:.3g})"
        )
    return candidate, curvature_window(field)
