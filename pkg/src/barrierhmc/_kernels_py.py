"""Pure-numpy kernels for Hamiltonian trajectory integration.

Mirror of the compiled extension `_kernels`; same call signatures and status
codes, selected at import time by :mod:`barrierhmc.kernels`. The compiled
module is the fast path; this one is the readable reference and fallback.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla

from ._tableau import GL3_A, GL3_B, GL3_C

BACKEND = "python"

OK = 0
BOUNDARY = 1
CHOL_FAIL = 2
FP_FAIL = 3
DIVERGED = 4

_FP_MAXIT = 64
_LOG_2PI = math.log(2.0 * math.pi)


def point_core(A, b, x, slack_floor):
    """Slacks, rescaled rows, Cholesky factor of the metric, leverage scores.

    Returns (status, s, Ax, L, sigma, phi, logdet); on nonzero status the
    remaining entries are None.
    """
    s = A @ x - b
    if not (np.min(s) > slack_floor):
        return BOUNDARY, None, None, None, None, 0.0, 0.0
    Ax = A / s[:, None]
    g = Ax.T @ Ax
    try:
        L = np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        return CHOL_FAIL, None, None, None, None, 0.0, 0.0
    U = sla.solve_triangular(L, Ax.T, lower=True, check_finite=False)
    sigma = np.einsum("ij,ij->j", U, U)
    phi = -float(np.sum(np.log(s)))
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return OK, s, Ax, L, sigma, phi, logdet


def _field(Ax, L, sigma, alpha, w):
    """Acceleration g^{-1} Ax^T (s_w^2 + sigma + alpha); also returns s_w."""
    s_w = Ax @ w
    rhs = Ax.T @ (s_w * s_w + sigma + alpha)
    y = sla.solve_triangular(L, rhs, lower=True, check_finite=False)
    dw = sla.solve_triangular(L.T, y, lower=False, check_finite=False)
    return dw, s_w


def _energy(phi, logdet, L, w, alpha, n):
    kin = L.T @ w
    return alpha * phi + 0.5 * (logdet + n * _LOG_2PI) + 0.5 * float(kin @ kin)


def _norms(s_w):
    a = np.abs(s_w)
    return (
        float(np.sqrt(np.sum(a * a))),
        float(np.sum(a**4) ** 0.25),
        float(np.max(a)),
    )


def integrate(
    A,
    b,
    x0,
    w0,
    alpha,
    delta,
    n_sub,
    fp_tol,
    max_halvings,
    slack_floor,
    d2,
    d4,
    dinf,
    record_path,
):
    """Integrate the Hamiltonian second-order ODE over [0, delta].

    3-stage Gauss-Legendre collocation with fixed-point stage iteration,
    n_sub uniform substeps, adaptive halving when a stage leaves the
    interior or the iteration fails to contract. Tracks the running max of
    the weighted slack-velocity norm sum (denominators d2/d4/dinf) used by
    the trajectory auxiliary function.
    """
    n = x0.shape[0]
    x = np.array(x0, dtype=np.float64)
    w = np.array(w0, dtype=np.float64)
    runaway = 1e13 * (1.0 + float(np.max(np.abs(x0))))

    st, s, Ax, L, sigma, phi, logdet = point_core(A, b, x, slack_floor)
    n_evals = 1
    if st != OK:
        return _result(st, x, w, 0.0, 0.0, 0.0, (0.0, 0.0, 0.0), n_evals, 0, None)
    f_cur, s_w = _field(Ax, L, sigma, alpha, w)
    H0 = _energy(phi, logdet, L, w, alpha, n)
    s0n = _norms(s_w)
    ell_tmax = s0n[0] / d2 + s0n[1] / d4 + s0n[2] / dinf

    path = None
    if record_path:
        path = {"t": [0.0], "x": [x.copy()], "w": [w.copy()],
                "nt": [0.0], "n2": [s0n[0]], "n4": [s0n[1]], "ninf": [s0n[2]]}

    h_base = delta / n_sub
    h = h_base
    t = 0.0
    n_halvings = 0
    while t < delta * (1.0 - 1e-14):
        h_eff = min(h, delta - t)
        out = _substep(A, b, alpha, x, w, f_cur, h_eff, fp_tol, slack_floor)
        n_evals += out[0]
        if out[1] != OK:
            if np.max(np.abs(x)) > runaway or np.max(np.abs(w)) > runaway:
                return _result(DIVERGED, x, w, H0, 0.0, ell_tmax, s0n, n_evals, n_halvings, path)
            n_halvings += 1
            if n_halvings > max_halvings:
                return _result(out[1], x, w, H0, 0.0, ell_tmax, s0n, n_evals, n_halvings, path)
            h = h_eff / 2.0
            continue
        _, _, x, w, Ax, L, sigma, phi, logdet, f_cur, s_w_end, stage_norms = out
        for i, sn in enumerate(stage_norms):
            val = sn[0] / d2 + sn[1] / d4 + sn[2] / dinf
            if val > ell_tmax:
                ell_tmax = val
            if record_path:
                path["nt"].append(t + GL3_C[i] * h_eff)
                path["n2"].append(sn[0])
                path["n4"].append(sn[1])
                path["ninf"].append(sn[2])
        t += h_eff
        endn = _norms(s_w_end)
        val = endn[0] / d2 + endn[1] / d4 + endn[2] / dinf
        if val > ell_tmax:
            ell_tmax = val
        if record_path:
            path["t"].append(t)
            path["x"].append(x.copy())
            path["w"].append(w.copy())
            path["nt"].append(t)
            path["n2"].append(endn[0])
            path["n4"].append(endn[1])
            path["ninf"].append(endn[2])
        if np.max(np.abs(x)) > runaway or np.max(np.abs(w)) > runaway:
            return _result(DIVERGED, x, w, H0, 0.0, ell_tmax, s0n, n_evals, n_halvings, path)
        h = min(2.0 * h, h_base)

    H1 = _energy(phi, logdet, L, w, alpha, n)
    return _result(OK, x, w, H0, H1, ell_tmax, s0n, n_evals, n_halvings, path)


def _substep(A, b, alpha, x, w, f_cur, h, fp_tol, slack_floor):
    """One collocation substep; returns (n_evals, status, ...) committing nothing on failure."""
    n = x.shape[0]
    Kx = np.tile(w, (3, 1))
    Kw = np.tile(f_cur, (3, 1))
    n_evals = 0
    stage_norms = [(0.0, 0.0, 0.0)] * 3
    converged = False
    for _ in range(_FP_MAXIT):
        delta_it = 0.0
        scale = 1.0
        for i in range(3):
            xi = x + h * (GL3_A[i] @ Kx)
            wi = w + h * (GL3_A[i] @ Kw)
            st, s, Ax, L, sigma, phi, logdet = point_core(A, b, xi, slack_floor)
            n_evals += 1
            if st != OK:
                return (n_evals, st)
            dw, s_w = _field(Ax, L, sigma, alpha, wi)
            stage_norms[i] = _norms(s_w)
            dx_err = np.max(np.abs(wi - Kx[i]))
            dw_err = np.max(np.abs(dw - Kw[i]))
            delta_it = max(delta_it, dx_err, dw_err)
            scale = max(scale, np.max(np.abs(wi)), np.max(np.abs(dw)))
            Kx[i] = wi
            Kw[i] = dw
        if not np.isfinite(delta_it) or delta_it > 1e8 * scale:
            return (n_evals, FP_FAIL)
        if delta_it <= fp_tol * scale:
            converged = True
            break
    if not converged:
        return (n_evals, FP_FAIL)
    x1 = x + h * (GL3_B @ Kx)
    w1 = w + h * (GL3_B @ Kw)
    st, s, Ax, L, sigma, phi, logdet = point_core(A, b, x1, slack_floor)
    n_evals += 1
    if st != OK:
        return (n_evals, st)
    f1, s_w1 = _field(Ax, L, sigma, alpha, w1)
    return (n_evals, OK, x1, w1, Ax, L, sigma, phi, logdet, f1, s_w1, stage_norms)


class Stepper:
    """Reusable chain stepper; API mirror of the compiled one."""

    def __init__(self, A, b, alpha, delta, n_sub, fp_tol, max_halvings,
                 slack_floor, d2, d4, dinf):
        self._args = (A, b, alpha, delta, n_sub, fp_tol, max_halvings,
                      slack_floor, d2, d4, dinf)

    def step(self, x, z, sign):
        (A, b, alpha, delta, n_sub, fp_tol, max_halvings,
         slack_floor, d2, d4, dinf) = self._args
        res = step_from_z(
            A, b, x, z, sign, alpha, delta, n_sub, fp_tol, max_halvings,
            slack_floor, d2, d4, dinf,
        )
        x_end = res["x"] if res["status"] == OK else np.array(x)
        return (
            res["status"], x_end, res["H0"], res["H1"], res["ell_tmax"],
            res["s0_l2"], res["s0_l4"], res["s0_linf"],
            res["n_evals"], res["n_halvings"],
        )


def step_from_z(
    A,
    b,
    x,
    z,
    sign,
    alpha,
    delta,
    n_sub,
    fp_tol,
    max_halvings,
    slack_floor,
    d2,
    d4,
    dinf,
):
    """Draw w = sign * L^{-T} z at x (so Cov(w) = g^{-1}) and integrate."""
    st, s, Ax, L, sigma, phi, logdet = point_core(A, b, x, slack_floor)
    if st != OK:
        res = _result(st, x, np.zeros_like(x), 0.0, 0.0, 0.0, (0.0, 0.0, 0.0), 1, 0, None)
        res["w0"] = np.zeros_like(x)
        return res
    w0 = sign * sla.solve_triangular(L.T, z, lower=False, check_finite=False)
    res = integrate(
        A, b, x, w0, alpha, delta, n_sub, fp_tol, max_halvings,
        slack_floor, d2, d4, dinf, False,
    )
    res["n_evals"] += 1
    res["w0"] = w0
    return res


def _result(status, x, w, H0, H1, ell_tmax, s0n, n_evals, n_halvings, path):
    res = {
        "status": status,
        "x": x,
        "w": w,
        "H0": H0,
        "H1": H1,
        "ell_tmax": ell_tmax,
        "s0_l2": s0n[0],
        "s0_l4": s0n[1],
        "s0_linf": s0n[2],
        "n_evals": n_evals,
        "n_halvings": n_halvings,
        "L_end": None,
    }
    if path is not None:
        res["path_t"] = np.asarray(path["t"])
        res["path_x"] = np.asarray(path["x"])
        res["path_w"] = np.asarray(path["w"])
        res["norm_t"] = np.asarray(path["nt"])
        res["norm_l2"] = np.asarray(path["n2"])
        res["norm_l4"] = np.asarray(path["n4"])
        res["norm_linf"] = np.asarray(path["ninf"])
    return res
