"""Time integration of the normalized Ricci flow on the conformal factor.

The state is one log-conformal factor per vertex, advanced by classical
four-stage Runge-Kutta on du/dt = (r - R)/2 and renormalized to the initial
area after every step (the renormalization is itself a uniform conformal
scaling, so it stays inside the flow's conformal class). Step control is
adaptive: an accuracy-based candidate ``safety / max|R - r|`` capped by a 2x
growth factor, ``dt_init``, and a linear-stability estimate of the stiffest
curvature mode; steps that break a triangle inequality are rejected and
retried at half size.
"""

from __future__ import annotations

import warnings as _warnings
from dataclasses import dataclass, field as _field

import numpy as np
from scipy import sparse

from .errors import (
    DegenerateTriangleError,
    EigensolverError,
    FlowAbortError,
    TriangleInequalityError,
)
from .geometry import ConformalMetric, CurvatureField
from .spectrum import assemble_operators, operator_norm_estimate, smallest_eigenpairs

RK4_STABILITY = 2.785  # extent of the classical RK4 stability interval
CFL_SAFETY = 0.85
NORM_RECHECK_STEPS = 500  # stiffness estimate refresh cadence


@dataclass(frozen=True)
class FlowConfig:
    """Knobs of one flow run; every tolerance is strictly positive."""

    dt_init: float = 0.01
    dt_min: float = 1e-9
    safety: float = 0.2
    area_tolerance: float = 1e-9
    convergence_tol: float = 1e-4
    t_max: float = 50.0
    spectrum_every: int = 400
    k: int = 12
    eig_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.dt_min > self.dt_init:
            raise ValueError("dt_min must not exceed dt_init")
        if not 0.0 < self.safety < 1.0:
            raise ValueError("safety must lie in (0, 1)")
        for name in ("dt_init", "dt_min", "area_tolerance", "convergence_tol", "t_max", "eig_tol"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.spectrum_every < 1 or self.k < 1:
            raise ValueError("spectrum_every and k must be positive integers")


@dataclass(frozen=True)
class FlowSample:
    """Full state stored at snapshot cadence (plus first and last step)."""

    step: int
    t: float
    u: np.ndarray
    curvature: CurvatureField
    spectrum: object | None  # SpectrumSnapshot


@dataclass
class FlowTrace:
    """Result of one flow run.

    Scalar curvature statistics are recorded at every accepted step in the
    columnar ``steps`` arrays; full per-vertex states (with spectra) only at
    snapshot cadence in ``samples``, which keeps long runs in memory.
    """

    mesh: object
    base_lengths: np.ndarray
    config: FlowConfig
    steps: dict
    samples: list
    measured_alpha: float
    measured_beta: float
    converged: bool
    warnings: list = _field(default_factory=list)

    @property
    def limit(self):
        """Final metric state."""
        last = self.samples[-1]
        return ConformalMetric(self.mesh, self.base_lengths, last.u)

    @property
    def limit_snapshot(self):
        return self.samples[-1]

    @property
    def r(self):
        return self.samples[0].curvature.r

    def metric_at(self, sample_index):
        s = self.samples[sample_index]
        return ConformalMetric(self.mesh, self.base_lengths, s.u)

    def snapshots(self):
        """Spectrum snapshots in time order."""
        return [s.spectrum for s in self.samples if s.spectrum is not None]

    def snapshot_samples(self):
        return [s for s in self.samples if s.spectrum is not None]


class _Workspace:
    """Precomputed index structure for fast curvature evaluations.

    The hot loop works with squared lengths throughout: angles come from
    ``atan2(4 * area, b^2 + c^2 - a^2)``, per-vertex angle sums from a
    presorted segment reduction, and dual areas from a fixed sparse
    incidence matrix. Everything here is deterministic.
    """

    def __init__(self, mesh, base_lengths):
        self.mesh = mesh
        tri = mesh.triangles
        n = mesh.vertex_count
        f_count = tri.shape[0]
        self.edge0 = mesh.edges[:, 0]
        self.edge1 = mesh.edges[:, 1]
        self.base_sq = base_lengths * base_lengths
        self.tri_edges = mesh.triangle_edges
        self.tri = tri
        corners = tri.reshape(-1)
        self.corner_order = np.argsort(corners, kind="stable")
        self.corner_starts = np.searchsorted(corners[self.corner_order], np.arange(n))
        self.dual_sum = sparse.csr_matrix(
            (
                np.full(3 * f_count, 1.0 / 3.0),
                (corners, np.repeat(np.arange(f_count), 3)),
            ),
            shape=(n, f_count),
        )
        self.four_pi_chi = 4.0 * np.pi * mesh.chi

    def curvature(self, u, with_gradient=False):
        """CurvatureField of the metric with factors ``u`` (fast path).

        With ``with_gradient`` also returns the per-corner area gradient
        ``dA_T/du`` needed by the area-preserving velocity.
        """
        w = np.exp(u)
        sq_edge = self.base_sq * w[self.edge0] * w[self.edge1]
        q = sq_edge[self.tri_edges]
        q0, q1, q2 = q[:, 0], q[:, 1], q[:, 2]
        s = q0 + q1 + q2
        s16 = s * s - 2.0 * (q0 * q0 + q1 * q1 + q2 * q2)
        if s16.min() <= 0.0:
            face = int(np.argmin(s16))
            raise TriangleInequalityError(
                f"triangle inequality violated in face {face}", face=face
            )
        area = 0.25 * np.sqrt(s16)
        cos_terms = s[:, None] - 2.0 * q
        angles = np.arctan2((4.0 * area)[:, None], cos_terms)
        angle_sum = np.add.reduceat(
            angles.reshape(-1).take(self.corner_order), self.corner_starts
        )
        dual = self.dual_sum @ area
        defect = 2.0 * np.pi - angle_sum
        scalar = 2.0 * defect / dual
        total = float(area.sum())
        field = CurvatureField(
            defect=defect,
            dual_area=dual,
            R=scalar,
            r=self.four_pi_chi / total,
            R_min=float(scalar.min()),
            R_max=float(scalar.max()),
            total_area=total,
        )
        if not with_gradient:
            return field
        grad = _corner_area_gradient(q, cos_terms, area)
        return field, grad

    def velocity(self, u):
        """Area-preserving flow velocity (r_hat - R)/2 plus its field.

        The plain normalization constant 4*pi*chi/area only conserves the
        *smooth* area; the gradient-weighted mean ``r_hat`` (which agrees
        with it to O(h^2) and exactly at constant curvature) makes the
        semidiscrete flow conserve the discrete area identically, so the
        per-step renormalization stays at integrator-error size and the
        scheme keeps its full order.
        """
        field, grad = self.curvature(u, with_gradient=True)
        corner_dev = field.r - field.R[self.tri]
        shift = -float(np.sum(grad * corner_dev)) / (4.0 * field.total_area)
        return 0.5 * (field.r - field.R) + shift, field


def _corner_area_gradient(q, cos_terms, area):
    """dA_T/du at each corner: (adjacent sq-lengths, cotan weighted)/4.

    Row sums equal 2*A_T exactly, the uniform-scaling identity.
    """
    p = q * cos_terms
    return area[:, None] - p / (16.0 * area)[:, None]


def _rescaled_field(fld, c, four_pi_chi, target_area):
    """Field of the metric scaled by ``c`` (areas x c), without re-measuring."""
    return CurvatureField(
        defect=fld.defect,
        dual_area=fld.dual_area * c,
        R=fld.R / c,
        r=four_pi_chi / target_area,
        R_min=fld.R_min / c,
        R_max=fld.R_max / c,
        total_area=target_area,
    )


def nrf_velocity(metric):
    """du/dt = (r - R)/2 per vertex (d/dt g = (r - R) g with g = e^{2u} g0).

    The normalization constant is the area-gradient-weighted curvature mean,
    equal to the plain average 4*pi*chi/area up to O(h^2) and exactly at
    constant curvature; with it the flow conserves the discrete area
    identically rather than only approximately.
    """
    ws = _Workspace(metric.mesh, metric.base_lengths)
    velocity, _ = ws.velocity(metric.u)
    return velocity


def _rk4(ws, u, v1, dt, target_area):
    """One RK4 step plus exact area renormalization.

    Returns ``(u_next, field_next, v_next)``: the renormalized state, its
    field, and its velocity (which seeds the next step's first stage).
    """
    v2, _ = ws.velocity(u + (0.5 * dt) * v1)
    v3, _ = ws.velocity(u + (0.5 * dt) * v2)
    v4, _ = ws.velocity(u + dt * v3)
    u_next = u + (dt / 6.0) * (v1 + 2.0 * (v2 + v3) + v4)
    v_raw, f_raw = ws.velocity(u_next)
    c = target_area / f_raw.total_area
    u_next += 0.5 * np.log(c)
    # uniform scaling leaves angles (hence R*area-type products) intact, so
    # the velocity of the renormalized state is the raw one rescaled
    return u_next, _rescaled_field(f_raw, c, ws.four_pi_chi, target_area), v_raw / c


def step(metric, dt):
    """One explicit RK4 step of size ``dt``, area-renormalized.

    Raises :class:`TriangleInequalityError` when the step is too large; the
    caller is expected to halve ``dt`` and retry.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    ws = _Workspace(metric.mesh, metric.base_lengths)
    v1, _ = ws.velocity(metric.u)
    u_next, _, _ = _rk4(ws, metric.u, v1, dt, ws.curvature(metric.u).total_area)
    return metric.with_u(u_next)


def _stability_cap(metric_like, seed):
    stiffness, mass = assemble_operators(metric_like)
    lam_max = operator_norm_estimate(stiffness, mass, seed=seed)
    return CFL_SAFETY * RK4_STABILITY / lam_max


def run_flow(metric, config, allow_indefinite=False, progress=None):
    """Integrate the normalized flow until constant curvature or ``t_max``.

    Parameters
    ----------
    metric : ConformalMetric
        Initial state. Requires genus >= 2 and strictly negative curvature
        unless ``allow_indefinite`` is set (then only a warning is recorded).
    config : FlowConfig
    allow_indefinite : bool
        Accept sign-indefinite initial curvature (e.g. flat tori) with a
        warning instead of an error.
    progress : callable, optional
        Called as ``progress(t, max_dev, dt)`` every few thousand steps.

    Returns
    -------
    FlowTrace

    Raises
    ------
    FlowAbortError
        If step rejection drives dt below ``dt_min`` (the partial trace is
        attached as ``exc.trace``).
    """
    mesh = metric.mesh
    ws = _Workspace(mesh, metric.base_lengths)
    vel, fld = ws.velocity(metric.u)
    trace_warnings = []

    if mesh.genus < 2 or fld.R_max >= 0.0:
        message = (
            f"initial state outside the admissible class (genus={mesh.genus}, "
            f"R_max={fld.R_max:.4g})"
        )
        if not allow_indefinite:
            raise ValueError(message + "; pass allow_indefinite=True to force")
        _warnings.warn(message, stacklevel=2)
        trace_warnings.append(message)

    target_area = fld.total_area
    r = fld.r
    conv_threshold = config.convergence_tol * (
        abs(r) if r != 0.0 else 4.0 * np.pi / target_area
    )
    alpha, beta = fld.R_min - 1e-6 * abs(fld.R_min), fld.R_max + 1e-6 * abs(fld.R_min)

    stats = {
        name: []
        for name in ("t", "dt", "area", "r", "R_min", "R_max", "max_dev", "argmin", "argmax")
    }

    def record(t, dt, f):
        stats["t"].append(t)
        stats["dt"].append(dt)
        stats["area"].append(f.total_area)
        stats["r"].append(f.r)
        stats["R_min"].append(f.R_min)
        stats["R_max"].append(f.R_max)
        stats["max_dev"].append(f.max_deviation())
        stats["argmin"].append(int(np.argmin(f.R)))
        stats["argmax"].append(int(np.argmax(f.R)))

    samples = []

    def snapshot(step_idx, t, u, f):
        spec = None
        try:
            stiffness, mass = assemble_operators(
                ConformalMetric(mesh, metric.base_lengths, u)
            )
            spec = smallest_eigenpairs(
                stiffness, mass, config.k, tol=config.eig_tol, seed=config.seed, t=t
            )
        except EigensolverError as exc:
            trace_warnings.append(f"eigensolver failed at t={t:.6g}: {exc}")
        samples.append(FlowSample(step_idx, t, u.copy(), f, spec))

    u = metric.u.copy()
    t = 0.0
    record(t, 0.0, fld)
    snapshot(0, t, u, fld)

    converged = fld.max_deviation() <= conv_threshold
    cap = _stability_cap(ConformalMetric(mesh, metric.base_lengths, u), config.seed)
    dt = min(config.dt_init, config.safety / max(fld.max_deviation(), 1e-300), cap)
    accepted = 0
    since_cap = 0
    sampled_last = True

    while not converged and t < config.t_max:
        dt = min(dt, config.t_max - t)
        try:
            u_next, fld_next, vel_next = _rk4(ws, u, vel, dt, target_area)
        except (TriangleInequalityError, DegenerateTriangleError):
            dt *= 0.5
            if dt < config.dt_min:
                exc = FlowAbortError(
                    f"step size underflow at t={t:.6g}", t=t, dt=dt
                )
                if not sampled_last:
                    snapshot(accepted, t, u, fld)
                exc.trace = _make_trace(
                    mesh, metric, config, stats, samples, alpha, beta, False, trace_warnings
                )
                raise exc
            since_cap = NORM_RECHECK_STEPS  # re-estimate stiffness after rejections
            continue

        u, fld, vel = u_next, fld_next, vel_next
        t += dt
        accepted += 1
        since_cap += 1
        record(t, dt, fld)
        sampled_last = False

        if abs(fld.total_area - target_area) > config.area_tolerance * target_area:
            trace_warnings.append(f"area drift at t={t:.6g}")

        if accepted % config.spectrum_every == 0:
            snapshot(accepted, t, u, fld)
            sampled_last = True
        if progress is not None and accepted % 2000 == 0:
            progress(t, fld.max_deviation(), dt)

        converged = fld.max_deviation() <= conv_threshold
        if converged:
            break
        if since_cap >= NORM_RECHECK_STEPS:
            cap = _stability_cap(
                ConformalMetric(mesh, metric.base_lengths, u), config.seed
            )
            since_cap = 0
        dt = min(
            config.dt_init,
            config.safety / max(fld.max_deviation(), 1e-300),
            2.0 * dt,
            cap,
        )

    if not sampled_last:
        snapshot(accepted, t, u, fld)
    return _make_trace(
        mesh, metric, config, stats, samples, alpha, beta, converged, trace_warnings
    )


def _make_trace(mesh, metric, config, stats, samples, alpha, beta, converged, warns):
    arrays = {name: np.asarray(vals) for name, vals in stats.items()}
    return FlowTrace(
        mesh=mesh,
        base_lengths=metric.base_lengths,
        config=config,
        steps=arrays,
        samples=samples,
        measured_alpha=alpha,
        measured_beta=beta,
        converged=converged,
        warnings=warns,
    )


def rf_nrf_time_map(area0, chi, tau):
    """Map normalized-flow time ``tau`` to unnormalized-flow time ``t``.

    Returns ``(t, area_at_t)`` with ``t = area0/(4 pi chi) (1 - e^{-4 pi chi tau})``
    and ``area_t = area0 - 4 pi chi t``. Only hyperbolic type (chi < 0) is
    accepted; ``t`` is then strictly increasing and unbounded in ``tau``.
    Accepts scalar or array ``tau >= 0``.
    """
    if chi >= 0:
        raise ValueError("time map requires negative Euler characteristic")
    if area0 <= 0.0:
        raise ValueError("area0 must be positive")
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0.0):
        raise ValueError("tau must be non-negative")
    coeff = 4.0 * np.pi * chi
    t = area0 / coeff * (1.0 - np.exp(-coeff * tau)) + 0.0  # +0.0 avoids -0.0 at tau=0
    area = area0 - coeff * t
    if tau.ndim == 0:
        return float(t), float(area)
    return t, area


def curvature_pde_residual(trace, sample_index):
    """Pointwise residual of the curvature reaction-diffusion law.

    Central-differences dR/dt across the stored full samples and subtracts
    ``Delta R + R (R - r)``, with the analyst-sign discrete Laplacian
    ``(Delta R)_i = -(M^{-1} L R)_i``. Shrinks under mesh and time
    refinement; exactly zero fields stay zero.
    """
    samples = trace.samples
    if not 0 < sample_index < len(samples) - 1:
        raise IndexError("sample_index needs both time neighbors")
    s_prev, s_mid, s_next = (
        samples[sample_index - 1],
        samples[sample_index],
        samples[sample_index + 1],
    )
    dr_dt = _central_difference(
        s_prev.t, s_mid.t, s_next.t, s_prev.curvature.R, s_mid.curvature.R, s_next.curvature.R
    )
    metric = trace.metric_at(sample_index)
    stiffness, mass = assemble_operators(metric)
    lap_R = -(stiffness @ s_mid.curvature.R) / mass
    reaction = s_mid.curvature.R * (s_mid.curvature.R - s_mid.curvature.r)
    return dr_dt - lap_R - reaction


def _central_difference(t_prev, t_mid, t_next, f_prev, f_mid, f_next):
    h1 = t_mid - t_prev
    h2 = t_next - t_mid
    return (
        h1 * h1 * f_next - h2 * h2 * f_prev + (h2 * h2 - h1 * h1) * f_mid
    ) / (h1 * h2 * (h1 + h2))


def monotonicity_violations(trace, transient_steps=5, threshold=None):
    """Envelope-contraction diagnostic on the per-step extremes.

    After an initial transient, ``R_max`` should not increase nor ``R_min``
    decrease; events beyond the threshold (default ``1e-6 |r|``) are
    reported as ``(step, which, size)`` tuples.
    """
    r = trace.r
    if threshold is None:
        threshold = 1e-6 * abs(r)
    r_max = trace.steps["R_max"]
    r_min = trace.steps["R_min"]
    events = []
    for i in range(max(1, transient_steps), len(r_max)):
        up = r_max[i] - r_max[i - 1]
        down = r_min[i - 1] - r_min[i]
        if up > threshold:
            events.append((i, "R_max", float(up)))
        if down > threshold:
            events.append((i, "R_min", float(down)))
    return events
