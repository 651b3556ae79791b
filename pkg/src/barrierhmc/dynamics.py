"""Hamiltonian energy, vector field, curve integration and flow Jacobians."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._tableau import GL3_A, GL3_B, GL3_C
from .errors import BoundaryError, DivergenceError, NumericalError
from .metric import GibbsTarget, PointState, barrier_params, point_state
from .polytope import Polytope

__all__ = [
    "PhasePoint",
    "TrajectoryRecord",
    "energy",
    "vector_field",
    "integrate",
    "variational_jacobian",
    "aux_ell",
    "ell_denominators",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PhasePoint:
    """Position and Euclidean-coordinate velocity dx/dt."""

    x: np.ndarray
    w: np.ndarray


@dataclass
class TrajectoryRecord:
    """A completed Hamiltonian curve with its diagnostics.

    Sampled path at substep endpoints; slack-velocity norm history on the
    denser grid of collocation stages plus endpoints.
    """

    delta: float
    t: np.ndarray
    x: np.ndarray
    w: np.ndarray
    H0: float
    H1: float
    ell_value: float
    s0_norms: tuple[float, float, float]
    norm_t: np.ndarray
    norm_l2: np.ndarray
    norm_l4: np.ndarray
    norm_linf: np.ndarray
    n_halvings: int = 0
    n_evals: int = 0

    @property
    def halved(self) -> bool:
        return self.n_halvings > 0

    @property
    def energy_drift(self) -> float:
        return abs(self.H1 - self.H0) / (1.0 + abs(self.H0))

    @property
    def end(self) -> PhasePoint:
        return PhasePoint(self.x[-1], self.w[-1])


def energy(state: PointState, w: np.ndarray, target: GibbsTarget) -> float:
    """H(x, w) = alpha*phi + 0.5 log((2 pi)^n det g) + 0.5 w^T g w."""
    phi = -float(np.sum(np.log(state.s)))
    kin = state.L.T @ np.asarray(w, dtype=np.float64)
    return (
        target.alpha * phi
        + 0.5 * (state.logdet_g + state.n * _LOG_2PI)
        + 0.5 * float(kin @ kin)
    )


def vector_field(
    state: PointState, w: np.ndarray, target: GibbsTarget
) -> tuple[np.ndarray, np.ndarray]:
    """First-order system right-hand side (dx, dw).

    dx = w and dw = g^{-1} Ax^T (s_w^2 + sigma + alpha 1); the drift and the
    quadratic geodesic term share one solve against the cached factorization.
    """
    w = np.asarray(w, dtype=np.float64)
    s_w = state.Ax @ w
    dw = state.solve_g(state.Ax.T @ (s_w * s_w + state.sigma + target.alpha))
    return w, dw


def ell_denominators(M1: float, n: int, delta: float) -> tuple[float, float, float]:
    """Denominators of the time-dependent terms of the auxiliary function."""
    q = M1**0.25
    return (math.sqrt(n) + q, q, math.sqrt(max(math.log(n), 0.0)) + math.sqrt(M1) * delta)


def _ell_total(ell_tmax: float, s0n: tuple[float, float, float], n: int) -> float:
    """Add the three t=0 terms; 0/0 counts as 0 (n=1 has sqrt(log n) = 0)."""
    slog = math.sqrt(max(math.log(n), 0.0))
    total = ell_tmax + s0n[0] / math.sqrt(n) + s0n[1] / n**0.25
    if s0n[2] > 0.0:
        total += s0n[2] / slog if slog > 0.0 else math.inf
    return total


def integrate(
    P: Polytope,
    target: GibbsTarget,
    start: PhasePoint,
    delta: float,
    direction: int = 1,
    n_sub: int = 8,
    fp_tol: float = 1e-12,
    max_halvings: int = 20,
    record_path: bool = True,
) -> TrajectoryRecord:
    """Integrate a Hamiltonian curve over [0, delta] (or [-delta, 0]).

    direction=-1 uses time reversal: negate the velocity, integrate forward,
    negate the returned velocities; recorded times stay in [0, delta].
    Raises BoundaryError after the halving budget is spent and
    DivergenceError on runaway trajectories.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    w0 = np.asarray(start.w, dtype=np.float64)
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    if direction == -1:
        w0 = -w0
    M1, _, _ = barrier_params(P.n, P.m, target)
    d2, d4, dinf = ell_denominators(M1, P.n, delta)
    res = kernels.integrate(
        P.A,
        P.b,
        np.asarray(start.x, dtype=np.float64),
        w0,
        target.alpha,
        float(delta),
        int(n_sub),
        float(fp_tol),
        int(max_halvings),
        P.slack_floor,
        d2,
        d4,
        dinf,
        bool(record_path),
    )
    status = res["status"]
    if status == kernels.DIVERGED:
        raise DivergenceError("runaway trajectory (body may be unbounded)")
    if status in (kernels.BOUNDARY, kernels.FP_FAIL):
        raise BoundaryError(
            f"trajectory integration failed after {res['n_halvings']} halvings"
        )
    if status == kernels.CHOL_FAIL:
        raise NumericalError("metric factorization failed along the trajectory")

    sign = float(direction)
    if record_path:
        t_arr = res["path_t"]
        x_arr = res["path_x"]
        w_arr = sign * res["path_w"]
        nt, n2, n4, ninf = (
            res["norm_t"],
            res["norm_l2"],
            res["norm_l4"],
            res["norm_linf"],
        )
    else:
        t_arr = np.array([0.0, delta])
        x_arr = np.vstack([start.x, res["x"]])
        w_arr = sign * np.vstack([w0, res["w"]])
        nt = n2 = n4 = ninf = np.empty(0)
    s0n = (res["s0_l2"], res["s0_l4"], res["s0_linf"])
    return TrajectoryRecord(
        delta=float(delta),
        t=t_arr,
        x=x_arr,
        w=w_arr,
        H0=res["H0"],
        H1=res["H1"],
        ell_value=_ell_total(res["ell_tmax"], s0n, P.n),
        s0_norms=s0n,
        norm_t=nt,
        norm_l2=n2,
        norm_l4=n4,
        norm_linf=ninf,
        n_halvings=res["n_halvings"],
        n_evals=res["n_evals"],
    )


def aux_ell(record: TrajectoryRecord, params: tuple[float, int, float]) -> float:
    """Auxiliary function ell(gamma) evaluated on the stored sample grid.

    params = (M1, n, delta). Max over the grid of the three weighted
    time-dependent slack-velocity norms, plus the three t=0 terms.
    """
    M1, n, delta = params
    if record.norm_t.shape[0] < 2:
        raise ValueError("record has no stored norm history")
    d2, d4, dinf = ell_denominators(M1, n, delta)
    tmax = float(
        np.max(record.norm_l2 / d2 + record.norm_l4 / d4 + record.norm_linf / dinf)
    )
    return _ell_total(tmax, record.s0_norms, n)


def _field_w(P: Polytope, target: GibbsTarget, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    return vector_field(point_state(P, x), w, target)[1]


def _phase_jacobian(
    P: Polytope, target: GibbsTarget, x: np.ndarray, w: np.ndarray, h: float
) -> np.ndarray:
    """Jacobian of the (x, w) field by central differences of the dw block.

    The dx block is exact: d(dx)/dx = 0 and d(dx)/dw = I.
    """
    n = x.shape[0]
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.eye(n)
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[n:, j] = (_field_w(P, target, x + e, w) - _field_w(P, target, x - e, w)) / (2 * h)
        J[n:, n + j] = (_field_w(P, target, x, w + e) - _field_w(P, target, x, w - e)) / (
            2 * h
        )
    return J


def variational_jacobian(
    P: Polytope,
    target: GibbsTarget,
    start: PhasePoint,
    delta: float,
    n_sub: int = 8,
    fd_step: float = 1e-6,
    fp_tol: float = 1e-13,
) -> tuple[np.ndarray, float]:
    """Flow Jacobian DT_delta of the (x, w) phase map, and its canonical log-det.

    The variational matrix ODE dPhi/dt = J(z(t)) Phi is integrated alongside
    the trajectory with the same collocation scheme; J comes from finite
    differences of the analytic field. The returned log-determinant refers to
    canonical (position, momentum) coordinates, where the exact flow
    preserves phase-space volume:

        logdet_canonical = logdet DT_xw + logdet g(end) - logdet g(start).

    Verification-scale routine (n <= 8).
    """
    if P.n > 8:
        raise ValueError("variational Jacobian is a verification path, n <= 8")
    x = np.array(start.x, dtype=np.float64)
    w = np.array(start.w, dtype=np.float64)
    n = x.shape[0]
    Phi = np.eye(2 * n)
    st0 = point_state(P, x)
    logdet_g0 = st0.logdet_g
    if delta == 0:
        return Phi, 0.0

    h = delta / n_sub
    for _ in range(n_sub):
        # stage iteration for the trajectory
        Kx = np.tile(w, (3, 1))
        Kw = np.tile(_field_w(P, target, x, w), (3, 1))
        stage_x = [x] * 3
        stage_w = [w] * 3
        for _ in range(64):
            delta_it = 0.0
            for i in range(3):
                xi = x + h * (GL3_A[i] @ Kx)
                wi = w + h * (GL3_A[i] @ Kw)
                dw = _field_w(P, target, xi, wi)
                delta_it = max(
                    delta_it,
                    float(np.max(np.abs(wi - Kx[i]))),
                    float(np.max(np.abs(dw - Kw[i]))),
                )
                Kx[i] = wi
                Kw[i] = dw
                stage_x[i] = xi
                stage_w[i] = wi
            if delta_it <= fp_tol * (1.0 + float(np.max(np.abs(Kw)))):
                break
        x = x + h * (GL3_B @ Kx)
        w = w + h * (GL3_B @ Kw)
        # linear collocation for Phi with J frozen at the converged stages
        Js = [
            _phase_jacobian(P, target, stage_x[i], stage_w[i], fd_step)
            for i in range(3)
        ]
        KP = [Js[i] @ Phi for i in range(3)]
        for _ in range(200):
            delta_it = 0.0
            for i in range(3):
                Pi = Phi + h * sum(GL3_A[i][j] * KP[j] for j in range(3))
                new = Js[i] @ Pi
                delta_it = max(delta_it, float(np.max(np.abs(new - KP[i]))))
                KP[i] = new
            if delta_it <= fp_tol * (1.0 + float(np.max(np.abs(KP[0])))):
                break
        Phi = Phi + h * sum(GL3_B[i] * KP[i] for i in range(3))

    st1 = point_state(P, x)
    sign, logabs = np.linalg.slogdet(Phi)
    if sign <= 0:
        raise NumericalError("flow Jacobian has nonpositive determinant")
    logdet_canonical = logabs + st1.logdet_g - logdet_g0
    return Phi, float(logdet_canonical)
