"""Log-barrier Hessian geometry: metric, leverage scores, drift and curvature.

Conventions, at an interior point x of {Ax > b}:

    s       slack vector Ax - b
    Ax      rows a_i / s_i of A rescaled by slacks
    g       metric = barrier Hessian = Ax^T Ax, factored as g = L L^T
    sigma   leverage scores, diagonal of the projection P = Ax g^{-1} Ax^T

For a velocity v we write s_v = Ax v (the slack-relative approach rate
towards each facet). All operators returned in Euclidean coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import BoundaryError, NumericalError
from .polytope import Polytope

__all__ = [
    "GibbsTarget",
    "PointState",
    "CurvatureOperators",
    "point_state",
    "barrier",
    "barrier_gradient",
    "drift_mu",
    "curvature_ops",
    "riemann_apply",
    "ricci",
    "parallel_transport",
    "barrier_params",
    "metric_norm",
    "frobenius_metric_norm",
]


@dataclass(frozen=True)
class GibbsTarget:
    """Target density proportional to exp(-alpha * barrier)."""

    alpha: float = 0.0

    def __post_init__(self):
        if not (self.alpha >= 0.0):
            raise ValueError("alpha must be nonnegative")


@dataclass(frozen=True)
class PointState:
    """Cached metric quantities at an interior point (immutable)."""

    x: np.ndarray
    s: np.ndarray
    Ax: np.ndarray
    L: np.ndarray  # lower Cholesky factor of g = Ax^T Ax
    sigma: np.ndarray

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.s.shape[0]

    @property
    def logdet_g(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.L))))

    def g(self) -> np.ndarray:
        return self.Ax.T @ self.Ax

    def solve_g(self, rhs: np.ndarray) -> np.ndarray:
        """g^{-1} rhs through the cached factorization."""
        y = sla.solve_triangular(self.L, rhs, lower=True)
        return sla.solve_triangular(self.L.T, y, lower=False)


@dataclass(frozen=True)
class CurvatureOperators:
    """R, M and Phi = M - R at a point, for a given curve velocity."""

    R_op: np.ndarray
    M_op: np.ndarray
    Phi_op: np.ndarray
    velocity: np.ndarray


def point_state(P: Polytope, x: np.ndarray) -> PointState:
    """Build slacks, rescaled rows, metric factorization and leverage scores.

    Leverage scores come from m triangular solves against the rows of Ax,
    computed exactly (no sketching).
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    s = P.A @ x - P.b
    if not (s.min() > max(P.slack_floor, 0.0)):
        raise BoundaryError(
            f"point too close to the boundary (min slack {s.min():.3e})"
        )
    Ax = P.A / s[:, None]
    g = Ax.T @ Ax
    try:
        L = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("metric factorization failed (degenerate metric)") from exc
    # sigma_i = ||L^{-1} ax_i||^2 via one n-by-m triangular solve
    U = sla.solve_triangular(L, Ax.T, lower=True)
    sigma = np.einsum("ij,ij->j", U, U)
    return PointState(x=x, s=s, Ax=Ax, L=L, sigma=sigma)


def barrier(P: Polytope, x: np.ndarray) -> float:
    """Barrier value -sum log(a_i^T x - b_i)."""
    s = P.A @ np.asarray(x, dtype=np.float64).ravel() - P.b
    if not (s.min() > 0):
        raise BoundaryError(f"nonpositive slack (min {s.min():.3e})")
    return -float(np.sum(np.log(s)))


def barrier_gradient(P: Polytope, x: np.ndarray) -> np.ndarray:
    """Barrier gradient -Ax^T 1."""
    s = P.A @ np.asarray(x, dtype=np.float64).ravel() - P.b
    if not (s.min() > 0):
        raise BoundaryError(f"nonpositive slack (min {s.min():.3e})")
    return -(P.A / s[:, None]).T @ np.ones(P.m)


def drift_mu(state: PointState, target: GibbsTarget) -> np.ndarray:
    """Deterministic force mu = g^{-1} Ax^T (sigma + alpha 1) for f = alpha*phi."""
    return state.solve_g(state.Ax.T @ (state.sigma + target.alpha))


def _projection(state: PointState) -> np.ndarray:
    """Dense m-by-m projection P = Ax g^{-1} Ax^T (verification scale only)."""
    U = sla.solve_triangular(state.L, state.Ax.T, lower=True)
    return U.T @ U


def curvature_ops(
    state: PointState, v: np.ndarray, target: GibbsTarget
) -> CurvatureOperators:
    """Operators R, M, Phi = M - R along a curve with velocity v.

    R u = Riemann(u, v) v; M u is the covariant derivative of the drift;
    with f = alpha*phi the Hessian term is exactly alpha*g.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    Ax = state.Ax
    s_v = Ax @ v
    Pm = _projection(state)
    # R = g^{-1} (Ax^T S_v P S_v Ax - Ax^T Diag(P s_v^2) Ax)
    C = s_v[:, None] * Ax
    R_inner = C.T @ (Pm @ C) - Ax.T @ ((Pm @ s_v**2)[:, None] * Ax)
    R_op = state.solve_g(R_inner)
    # M = g^{-1} (Ax^T (S_mu - 3 Sigma + 2 P^(2)) Ax - alpha g)
    mu = drift_mu(state, target)
    s_mu = Ax @ mu
    P2 = Pm * Pm
    M_inner = (
        Ax.T @ ((s_mu - 3.0 * state.sigma)[:, None] * Ax)
        + 2.0 * (Ax.T @ (P2 @ Ax))
        - target.alpha * (Ax.T @ Ax)
    )
    M_op = state.solve_g(M_inner)
    return CurvatureOperators(R_op=R_op, M_op=M_op, Phi_op=M_op - R_op, velocity=v)


def riemann_apply(
    state: PointState, u: np.ndarray, v: np.ndarray, w: np.ndarray
) -> np.ndarray:
    """Riemann tensor contraction R(u, v) w."""
    Ax = state.Ax
    s_v, s_w = Ax @ v, Ax @ w
    Pm = _projection(state)
    inner = s_v * (Pm @ (s_w * (Ax @ u))) - (Pm @ (s_v * s_w)) * (Ax @ u)
    return state.solve_g(Ax.T @ inner)


def ricci(state: PointState, u: np.ndarray) -> float:
    """Ricci curvature s_u^T P^(2) s_u - sigma^T P s_u^2."""
    s_u = state.Ax @ u
    Pm = _projection(state)
    P2 = Pm * Pm
    return float(s_u @ (P2 @ s_u) - state.sigma @ (Pm @ s_u**2))


def metric_norm(state: PointState, v: np.ndarray) -> float:
    """|v|_x = sqrt(v^T g v) = |L^T v|."""
    return float(np.linalg.norm(state.L.T @ v))


def frobenius_metric_norm(state: PointState, Op: np.ndarray) -> float:
    """Metric Frobenius norm |Op|_{F,x} computed as ||L^T Op L^{-T}||_F.

    Equals the closed form of E_{a,b ~ N(0, g^{-1})} (a^T g Op b)^2.
    """
    Q = state.L.T @ sla.solve_triangular(state.L, Op.T, lower=True).T
    return float(np.linalg.norm(Q))


def parallel_transport(
    P: Polytope,
    curve_t: np.ndarray,
    curve_x: np.ndarray,
    curve_w: np.ndarray,
    v0: np.ndarray,
    substeps_per_interval: int = 1,
    fp_tol: float = 1e-13,
) -> np.ndarray:
    """Parallel-transport v0 along a sampled curve; returns v at every sample.

    The curve comes as positions and velocities at increasing times and is
    interpolated per interval with cubic Hermite polynomials. The linear
    transport ODE dv/dt = g^{-1} Ax^T S_{gamma'} Ax v is integrated with the
    same 3-stage Gauss-Legendre collocation used for Hamiltonian curves;
    the transport preserves metric inner products.
    """
    from ._tableau import GL3_A, GL3_B, GL3_C

    t = np.asarray(curve_t, dtype=np.float64)
    xs = np.atleast_2d(np.asarray(curve_x, dtype=np.float64))
    ws = np.atleast_2d(np.asarray(curve_w, dtype=np.float64))
    if xs.shape[0] != t.shape[0] or ws.shape != xs.shape:
        raise ValueError("curve samples have inconsistent shapes")

    def transport_op(x: np.ndarray, w: np.ndarray):
        st = point_state(P, x)
        s_w = st.Ax @ w

        def apply(v: np.ndarray) -> np.ndarray:
            return st.solve_g(st.Ax.T @ (s_w * (st.Ax @ v)))

        return apply

    v = np.asarray(v0, dtype=np.float64).ravel().copy()
    out = np.empty((t.shape[0], v.shape[0]))
    out[0] = v
    for k in range(t.shape[0] - 1):
        h_full = t[k + 1] - t[k]
        for j in range(substeps_per_interval):
            lo = j / substeps_per_interval
            h = h_full / substeps_per_interval
            taus = (lo + GL3_C / substeps_per_interval) * h_full
            ops = [
                transport_op(*_hermite(xs[k], ws[k], xs[k + 1], ws[k + 1], h_full, tau))
                for tau in taus
            ]
            K = np.array([ops[i](v) for i in range(3)])
            for _ in range(100):
                Knew = np.array(
                    [ops[i](v + h * (GL3_A[i] @ K)) for i in range(3)]
                )
                delta = np.max(np.abs(Knew - K)) / (1.0 + np.max(np.abs(Knew)))
                K = Knew
                if delta <= fp_tol:
                    break
            v = v + h * (GL3_B @ K)
        out[k + 1] = v
    return out


def _hermite(x0, w0, x1, w1, h, tau):
    """Cubic Hermite position/velocity on one interval, local time tau in [0, h]."""
    u = tau / h if h != 0 else 0.0
    h00 = 2 * u**3 - 3 * u**2 + 1
    h10 = u**3 - 2 * u**2 + u
    h01 = -2 * u**3 + 3 * u**2
    h11 = u**3 - u**2
    x = h00 * x0 + h10 * h * w0 + h01 * x1 + h11 * h * w1
    d00 = 6 * u**2 - 6 * u
    d10 = 3 * u**2 - 4 * u + 1
    d01 = -6 * u**2 + 6 * u
    d11 = 3 * u**2 - 2 * u
    w = (d00 * x0 + d01 * x1) / h + d10 * w0 + d11 * w1
    return x, w


def barrier_params(n: int, m: int, target: GibbsTarget) -> tuple[float, float, float]:
    """Smoothness parameters (M1, M2, M3) = (n + alpha^2 m, alpha, 2 alpha sqrt(n))."""
    a = target.alpha
    return (n + a * a * m, a, 2.0 * a * np.sqrt(n))
