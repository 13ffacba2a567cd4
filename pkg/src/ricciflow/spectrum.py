"""Discrete Laplace and mass operators, and their smallest eigenpairs.

Sign convention: the stiffness operator realizes the Dirichlet energy,
``f' L f = ||grad f||^2 >= 0``, so the generalized eigenvalues of
``L phi = lambda M phi`` are the geometer's non-negative spectrum with a
one-dimensional constant kernel on a connected surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import EigensolverError
from .geometry import current_lengths, face_quantities


@dataclass(frozen=True)
class SpectrumSnapshot:
    """The k smallest generalized eigenpairs of one metric at flow time t.

    Eigenvalues ascend; eigenvectors are mass-orthonormal columns, and every
    pair carries the certified residual ``||L phi - lambda M phi|| / ||M phi||``.
    The mass diagonal is kept so consumers can form M-inner products.
    """

    t: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    mass: np.ndarray

    @property
    def k(self):
        return self.eigenvalues.shape[0]

    def with_time(self, t):
        return SpectrumSnapshot(
            float(t), self.eigenvalues, self.eigenvectors, self.residuals, self.mass
        )


def assemble_operators(metric):
    """Cotangent stiffness matrix and lumped (barycentric) mass diagonal.

    Returns
    -------
    (scipy.sparse.csr_matrix, numpy.ndarray)
        ``L`` with edge weights -(cot t1 + cot t2)/2 off the diagonal and
        zero row sums, and the positive dual-area vector ``mass``.
    """
    mesh = metric.mesh
    lengths = current_lengths(metric)
    sq = lengths * lengths
    area, cos_terms = face_quantities(mesh, sq[mesh.triangle_edges])
    half_cot = cos_terms / (8.0 * area[:, None])

    tri = mesh.triangles
    n = mesh.vertex_count
    rows, cols, vals = [], [], []
    for k in range(3):
        p = tri[:, (k + 1) % 3]
        q = tri[:, (k + 2) % 3]
        w = half_cot[:, k]
        rows.extend([p, q, p, q])
        cols.extend([q, p, p, q])
        vals.extend([-w, -w, w, w])
    stiffness = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    mass = np.bincount(tri.reshape(-1), weights=np.repeat(area / 3.0, 3), minlength=n)
    return stiffness, mass


def smallest_eigenpairs(stiffness, mass, k, tol, seed, t=0.0):
    """The k algebraically smallest eigenpairs of ``L phi = lambda M phi``.

    Shift-invert Lanczos with a fixed start vector, so results are
    deterministic for a fixed seed. Vectors are cleaned up afterwards: the
    kernel vector is replaced by the exact constant, the others are projected
    mass-orthogonal to it and re-orthonormalized, and signs are fixed by
    making the largest-magnitude entry positive.

    Raises
    ------
    EigensolverError
        If any certified residual stays above ``tol`` (the best achieved
        residual is attached to the exception).
    """
    n = stiffness.shape[0]
    k = int(k)
    if not 1 <= k < n / 2:
        raise ValueError(f"need 1 <= k < n/2, got k={k}, n={n}")
    total_area = float(mass.sum())
    sigma = -4.0 * np.pi**2 / total_area
    v0 = np.random.default_rng(seed).standard_normal(n)
    mass_op = sparse.diags(mass)

    vals = vecs = None
    ncv = None
    for attempt in range(2):
        try:
            vals, vecs = eigsh(
                stiffness.tocsc(),
                k=k,
                M=mass_op.tocsc(),
                sigma=sigma,
                v0=v0,
                tol=0,
                maxiter=2000,
                ncv=ncv,
            )
            break
        except ArpackNoConvergence as exc:
            if attempt == 1:
                raise EigensolverError(
                    f"eigensolver did not converge for k={k}",
                    best_residual=None,
                ) from exc
            ncv = min(n, max(4 * k + 1, 40))

    order = np.argsort(vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]

    # Exact constant kernel vector, then mass-orthonormal cleanup.
    vecs[:, 0] = 1.0 / np.sqrt(total_area)
    vals[0] = _rayleigh(stiffness, mass, vecs[:, 0])
    for a in range(1, k):
        v = vecs[:, a]
        for b in range(a):
            v -= (mass * vecs[:, b] @ v) * vecs[:, b]
        norm = np.sqrt(mass * v @ v)
        if norm == 0.0:
            raise EigensolverError("eigenvector collapsed during orthonormalization")
        vecs[:, a] = v / norm
    for a in range(k):
        lead = np.argmax(np.abs(vecs[:, a]))
        if vecs[lead, a] < 0.0:
            vecs[:, a] = -vecs[:, a]

    residuals = _residuals(stiffness, mass, vals, vecs)
    if np.any(residuals > tol):
        raise EigensolverError(
            f"residuals above tol={tol:g}", best_residual=float(residuals.max())
        )
    snap = SpectrumSnapshot(float(t), vals, vecs, residuals, np.asarray(mass, dtype=float))
    _validate_snapshot(snap)
    return snap


def dense_eigenpairs(stiffness, mass, k=None):
    """Brute-force dense generalized eigensolve (test oracle for small n)."""
    dense = stiffness.toarray() if sparse.issparse(stiffness) else np.asarray(stiffness)
    vals, vecs = eigh(dense, np.diag(mass))
    if k is not None:
        vals, vecs = vals[:k], vecs[:, :k]
    return vals, vecs


def rayleigh_quotient(f, metric):
    """Dirichlet energy over mass norm, ``(f'Lf) / (f'Mf)``."""
    stiffness, mass = assemble_operators(metric)
    f = np.asarray(f, dtype=float)
    denom = mass * f @ f
    if denom == 0.0:
        raise ZeroDivisionError("rayleigh_quotient of a zero function")
    return float(f @ (stiffness @ f) / denom)


def operator_norm_estimate(stiffness, mass, seed=0):
    """Estimate of the largest eigenvalue of ``M^-1 L`` (for step control)."""
    n = stiffness.shape[0]
    inv_sqrt = 1.0 / np.sqrt(mass)
    sym = sparse.diags(inv_sqrt) @ stiffness @ sparse.diags(inv_sqrt)
    v0 = np.random.default_rng(seed).standard_normal(n)
    try:
        val = eigsh(
            sym, k=1, which="LA", v0=v0, tol=1e-3, maxiter=500, return_eigenvectors=False
        )
        return float(val[0])
    except ArpackNoConvergence:
        diag = stiffness.diagonal()
        abs_rowsum = np.asarray(np.abs(stiffness).sum(axis=1)).ravel()
        return float(((diag + abs_rowsum) / mass).max())


def _rayleigh(stiffness, mass, v):
    return float(v @ (stiffness @ v) / (mass * v @ v))


def _residuals(stiffness, mass, vals, vecs):
    lhs = stiffness @ vecs
    rhs = mass[:, None] * vecs
    num = np.linalg.norm(lhs - vals[None, :] * rhs, axis=0)
    den = np.linalg.norm(rhs, axis=0)
    return num / den


def _validate_snapshot(snap):
    vals = snap.eigenvalues
    if vals[0] < -1e-9:
        raise EigensolverError(f"operator not PSD: lambda_0 = {vals[0]:g}")
    if snap.k > 1 and vals[0] > 1e-9 * max(vals[1], 1e-300):
        raise EigensolverError("constant kernel not resolved")
    gram = snap.eigenvectors.T @ (snap.mass[:, None] * snap.eigenvectors)
    if np.abs(gram - np.eye(snap.k)).max() > 1e-8:
        raise EigensolverError("eigenvectors not mass-orthonormal")
    means = snap.mass @ snap.eigenvectors[:, 1:]
    if snap.k > 1 and np.abs(means).max() > 1e-6:
        raise EigensolverError("nonzero modes are not mean-free")
