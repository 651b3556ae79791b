# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for Hamiltonian trajectory integration.

Mirror of _kernels_py (same signatures, status codes and semantics); keep the
two in sync. Small systems (n < 16) run hand-written loops to avoid BLAS call
overhead; larger ones call BLAS/LAPACK directly. The trajectory loop releases
the GIL so chains can run on threads.
"""

import numpy as np

from libc.math cimport log, sqrt, fabs, INFINITY
from libc.stdlib cimport malloc, realloc, free
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dsyrk, dgemv, dtrsm, dtrsv, dtrmv
from scipy.linalg.cython_lapack cimport dpotrf

BACKEND = "cython"

OK = 0
BOUNDARY = 1
CHOL_FAIL = 2
FP_FAIL = 3
DIVERGED = 4

cdef enum:
    C_OK = 0
    C_BOUNDARY = 1
    C_CHOL_FAIL = 2
    C_FP_FAIL = 3
    C_DIVERGED = 4

cdef int FP_MAXIT = 64
cdef int BLAS_MIN_N = 16
cdef double LOG_2PI = 1.8378770664093453
cdef double S15 = 3.872983346207417  # sqrt(15)

# 3-stage Gauss-Legendre tableau; keep in sync with _tableau.py
cdef double GL_C[3]
cdef double GL_A[9]
cdef double GL_B[3]
GL_C[0] = 0.5 - S15 / 10.0; GL_C[1] = 0.5; GL_C[2] = 0.5 + S15 / 10.0
GL_A[0] = 5.0 / 36.0;            GL_A[1] = 2.0 / 9.0 - S15 / 15.0; GL_A[2] = 5.0 / 36.0 - S15 / 30.0
GL_A[3] = 5.0 / 36.0 + S15 / 24.0; GL_A[4] = 2.0 / 9.0;            GL_A[5] = 5.0 / 36.0 - S15 / 24.0
GL_A[6] = 5.0 / 36.0 + S15 / 30.0; GL_A[7] = 2.0 / 9.0 + S15 / 15.0; GL_B[0] = 5.0 / 18.0
GL_A[8] = 5.0 / 36.0
GL_B[1] = 4.0 / 9.0; GL_B[2] = 5.0 / 18.0


cdef struct WS:
    int m
    int n
    bint big
    double alpha
    double floor
    const double *A      # m*n, C order (borrowed)
    const double *b      # m (borrowed)
    double *s            # m
    double *Ax           # m*n, C order
    double *gf           # n*n; after factorization the C view is lower L
    double *sig          # m
    double *lev          # n*m leverage workspace
    double *s_w          # m
    double *tmp_m        # m
    double *rhs          # n
    double *tmp_n        # n
    double phi
    double logdet


cdef int point_core_c(WS *ws, double *x) nogil:
    cdef int m = ws.m, n = ws.n, i, j, k, r, info, inc = 1
    cdef double acc, smin, inv, d, one = 1.0, zero = 0.0
    cdef double *rowp
    if ws.big:
        dgemv("T", &n, &m, &one, <double*>ws.A, &n, x, &inc, &zero, ws.s, &inc)
        for i in range(m):
            ws.s[i] -= ws.b[i]
    else:
        for i in range(m):
            acc = -ws.b[i]
            rowp = <double*>ws.A + i * n
            for j in range(n):
                acc += rowp[j] * x[j]
            ws.s[i] = acc
    smin = INFINITY
    for i in range(m):
        if ws.s[i] != ws.s[i]:
            return C_BOUNDARY
        if ws.s[i] < smin:
            smin = ws.s[i]
    if not (smin > ws.floor):
        return C_BOUNDARY
    ws.phi = 0.0
    for i in range(m):
        inv = 1.0 / ws.s[i]
        ws.phi -= log(ws.s[i])
        rowp = <double*>ws.A + i * n
        for j in range(n):
            ws.Ax[i * n + j] = rowp[j] * inv
    # metric g = Ax^T Ax and its Cholesky factor
    if ws.big:
        dsyrk("U", "N", &n, &m, &one, ws.Ax, &n, &zero, ws.gf, &n)
        dpotrf("U", &n, ws.gf, &n, &info)
        if info != 0:
            return C_CHOL_FAIL
    else:
        for i in range(n * n):
            ws.gf[i] = 0.0
        for k in range(m):
            rowp = ws.Ax + k * n
            for i in range(n):
                d = rowp[i]
                for j in range(i + 1):
                    ws.gf[i * n + j] += d * rowp[j]
        for j in range(n):
            d = ws.gf[j * n + j]
            for k in range(j):
                d -= ws.gf[j * n + k] * ws.gf[j * n + k]
            if not (d > 0.0):
                return C_CHOL_FAIL
            ws.gf[j * n + j] = sqrt(d)
            for i in range(j + 1, n):
                acc = ws.gf[i * n + j]
                for k in range(j):
                    acc -= ws.gf[i * n + k] * ws.gf[j * n + k]
                ws.gf[i * n + j] = acc / ws.gf[j * n + j]
    ws.logdet = 0.0
    for j in range(n):
        ws.logdet += 2.0 * log(ws.gf[j * n + j])
    # leverage scores sigma_i = |L^{-1} ax_i|^2
    if ws.big:
        memcpy(ws.lev, ws.Ax, m * n * sizeof(double))
        dtrsm("L", "U", "T", "N", &n, &m, &one, ws.gf, &n, ws.lev, &n)
        for i in range(m):
            acc = 0.0
            rowp = ws.lev + i * n
            for k in range(n):
                acc += rowp[k] * rowp[k]
            ws.sig[i] = acc
    else:
        for i in range(m):
            rowp = ws.Ax + i * n
            acc = 0.0
            for r in range(n):
                d = rowp[r]
                for k in range(r):
                    d -= ws.gf[r * n + k] * ws.tmp_n[k]
                ws.tmp_n[r] = d / ws.gf[r * n + r]
                acc += ws.tmp_n[r] * ws.tmp_n[r]
            ws.sig[i] = acc
    return C_OK


cdef void solve_g_c(WS *ws, double *v) nogil:
    """In place v := g^{-1} v through the cached factor."""
    cdef int n = ws.n, r, k, inc = 1
    cdef double acc
    if ws.big:
        dtrsv("U", "T", "N", &n, ws.gf, &n, v, &inc)
        dtrsv("U", "N", "N", &n, ws.gf, &n, v, &inc)
    else:
        for r in range(n):
            acc = v[r]
            for k in range(r):
                acc -= ws.gf[r * n + k] * v[k]
            v[r] = acc / ws.gf[r * n + r]
        for r in range(n - 1, -1, -1):
            acc = v[r]
            for k in range(r + 1, n):
                acc -= ws.gf[k * n + r] * v[k]
            v[r] = acc / ws.gf[r * n + r]


cdef void field_c(WS *ws, double *w, double *dw) nogil:
    """dw = g^{-1} Ax^T (s_w^2 + sigma + alpha); leaves s_w in ws.s_w."""
    cdef int m = ws.m, n = ws.n, i, j, inc = 1
    cdef double acc, c, one = 1.0, zero = 0.0
    cdef double *rowp
    if ws.big:
        dgemv("T", &n, &m, &one, ws.Ax, &n, w, &inc, &zero, ws.s_w, &inc)
        for i in range(m):
            ws.tmp_m[i] = ws.s_w[i] * ws.s_w[i] + ws.sig[i] + ws.alpha
        dgemv("N", &n, &m, &one, ws.Ax, &n, ws.tmp_m, &inc, &zero, dw, &inc)
    else:
        for j in range(n):
            dw[j] = 0.0
        for i in range(m):
            rowp = ws.Ax + i * n
            acc = 0.0
            for j in range(n):
                acc += rowp[j] * w[j]
            ws.s_w[i] = acc
            c = acc * acc + ws.sig[i] + ws.alpha
            for j in range(n):
                dw[j] += rowp[j] * c
    solve_g_c(ws, dw)


cdef double energy_c(WS *ws, double *w) nogil:
    cdef int n = ws.n, r, k, inc = 1
    cdef double kin = 0.0, acc
    if ws.big:
        memcpy(ws.tmp_n, w, n * sizeof(double))
        dtrmv("U", "N", "N", &n, ws.gf, &n, ws.tmp_n, &inc)
        for r in range(n):
            kin += ws.tmp_n[r] * ws.tmp_n[r]
    else:
        for r in range(n):
            acc = 0.0
            for k in range(r, n):
                acc += ws.gf[k * n + r] * w[k]
            kin += acc * acc
    return ws.alpha * ws.phi + 0.5 * (ws.logdet + n * LOG_2PI) + 0.5 * kin


cdef void norms_c(double *s_w, int m, double *out3) nogil:
    cdef int i
    cdef double a, l2 = 0.0, l4 = 0.0, li = 0.0
    for i in range(m):
        a = fabs(s_w[i])
        l2 += a * a
        l4 += a * a * a * a
        if a > li:
            li = a
    out3[0] = sqrt(l2)
    out3[1] = l4 ** 0.25
    out3[2] = li


cdef struct SubstepBuf:
    double *Kx       # 3*n
    double *Kw       # 3*n
    double *Yx       # n
    double *Yw       # n
    double *x1       # n
    double *w1       # n
    double *f1       # n
    double *dw       # n
    double stage_norms[9]
    double end_norms[3]
    int n_evals


cdef int substep_c(WS *ws, SubstepBuf *sb, double *x, double *w, double *f_cur,
                   double h, double fp_tol) nogil:
    """One collocation substep into sb.x1/sb.w1; ws holds the endpoint state on success."""
    cdef int n = ws.n, i, j, k, st, it
    cdef double delta_it, scale, acc, e
    cdef bint converged = False
    sb.n_evals = 0
    for i in range(3):
        for j in range(n):
            sb.Kx[i * n + j] = w[j]
            sb.Kw[i * n + j] = f_cur[j]
    for it in range(FP_MAXIT):
        delta_it = 0.0
        scale = 1.0
        for i in range(3):
            for j in range(n):
                acc = x[j]
                for k in range(3):
                    acc += h * GL_A[i * 3 + k] * sb.Kx[k * n + j]
                sb.Yx[j] = acc
                acc = w[j]
                for k in range(3):
                    acc += h * GL_A[i * 3 + k] * sb.Kw[k * n + j]
                sb.Yw[j] = acc
            st = point_core_c(ws, sb.Yx)
            sb.n_evals += 1
            if st != C_OK:
                return st
            field_c(ws, sb.Yw, sb.dw)
            norms_c(ws.s_w, ws.m, &sb.stage_norms[3 * i])
            for j in range(n):
                e = fabs(sb.Yw[j] - sb.Kx[i * n + j])
                if e > delta_it:
                    delta_it = e
                e = fabs(sb.dw[j] - sb.Kw[i * n + j])
                if e > delta_it:
                    delta_it = e
                e = fabs(sb.Yw[j])
                if e > scale:
                    scale = e
                e = fabs(sb.dw[j])
                if e > scale:
                    scale = e
                sb.Kx[i * n + j] = sb.Yw[j]
                sb.Kw[i * n + j] = sb.dw[j]
        if delta_it != delta_it or delta_it > 1e8 * scale:
            return C_FP_FAIL
        if delta_it <= fp_tol * scale:
            converged = True
            break
    if not converged:
        return C_FP_FAIL
    for j in range(n):
        acc = x[j]
        for i in range(3):
            acc += h * GL_B[i] * sb.Kx[i * n + j]
        sb.x1[j] = acc
        acc = w[j]
        for i in range(3):
            acc += h * GL_B[i] * sb.Kw[i * n + j]
        sb.w1[j] = acc
    st = point_core_c(ws, sb.x1)
    sb.n_evals += 1
    if st != C_OK:
        return st
    field_c(ws, sb.w1, sb.f1)
    norms_c(ws.s_w, ws.m, sb.end_norms)
    return C_OK


cdef struct PathBuf:
    bint active
    int n
    int len_pts
    int cap_pts
    int len_norms
    int cap_norms
    double *t
    double *x
    double *w
    double *nt
    double *nrm      # 3 per entry: l2, l4, linf
    bint oom


cdef void path_init(PathBuf *pb, int n, int cap) nogil:
    pb.n = n
    pb.len_pts = 0
    pb.cap_pts = cap
    pb.len_norms = 0
    pb.cap_norms = 4 * cap
    pb.oom = False
    pb.t = <double*>malloc(cap * sizeof(double))
    pb.x = <double*>malloc(cap * n * sizeof(double))
    pb.w = <double*>malloc(cap * n * sizeof(double))
    pb.nt = <double*>malloc(4 * cap * sizeof(double))
    pb.nrm = <double*>malloc(12 * cap * sizeof(double))
    if pb.t == NULL or pb.x == NULL or pb.w == NULL or pb.nt == NULL or pb.nrm == NULL:
        pb.oom = True


cdef void path_free(PathBuf *pb) nogil:
    free(pb.t); free(pb.x); free(pb.w); free(pb.nt); free(pb.nrm)


cdef bint path_point(PathBuf *pb, double t, double *x, double *w) nogil:
    cdef int cap
    if pb.oom:
        return False
    if pb.len_pts == pb.cap_pts:
        cap = 2 * pb.cap_pts
        pb.t = <double*>realloc(pb.t, cap * sizeof(double))
        pb.x = <double*>realloc(pb.x, cap * pb.n * sizeof(double))
        pb.w = <double*>realloc(pb.w, cap * pb.n * sizeof(double))
        if pb.t == NULL or pb.x == NULL or pb.w == NULL:
            pb.oom = True
            return False
        pb.cap_pts = cap
    pb.t[pb.len_pts] = t
    memcpy(pb.x + pb.len_pts * pb.n, x, pb.n * sizeof(double))
    memcpy(pb.w + pb.len_pts * pb.n, w, pb.n * sizeof(double))
    pb.len_pts += 1
    return True


cdef bint path_norm(PathBuf *pb, double t, double l2, double l4, double li) nogil:
    cdef int cap
    if pb.oom:
        return False
    if pb.len_norms == pb.cap_norms:
        cap = 2 * pb.cap_norms
        pb.nt = <double*>realloc(pb.nt, cap * sizeof(double))
        pb.nrm = <double*>realloc(pb.nrm, 3 * cap * sizeof(double))
        if pb.nt == NULL or pb.nrm == NULL:
            pb.oom = True
            return False
        pb.cap_norms = cap
    pb.nt[pb.len_norms] = t
    pb.nrm[3 * pb.len_norms] = l2
    pb.nrm[3 * pb.len_norms + 1] = l4
    pb.nrm[3 * pb.len_norms + 2] = li
    pb.len_norms += 1
    return True


cdef struct TrajOut:
    int status
    double H0
    double H1
    double ell_tmax
    double s0[3]
    long n_evals
    int n_halvings


cdef void traj_c(WS *ws, SubstepBuf *sb, PathBuf *pb, double *x, double *w,
                 double delta, int n_sub, double fp_tol, int max_halvings,
                 double d2, double d4, double dinf, TrajOut *out) nogil:
    cdef int st, i, n = ws.n
    cdef double h_base = delta / n_sub
    cdef double h = h_base, h_eff, t = 0.0, runaway, val, axmax
    cdef double *f_cur = sb.f1  # reuse endpoint field slot as the running field
    cdef double snc[3]
    out.n_evals = 0
    out.n_halvings = 0
    out.ell_tmax = 0.0
    out.H0 = 0.0
    out.H1 = 0.0

    axmax = 0.0
    for i in range(n):
        if fabs(x[i]) > axmax:
            axmax = fabs(x[i])
    runaway = 1e13 * (1.0 + axmax)

    st = point_core_c(ws, x)
    out.n_evals += 1
    if st != C_OK:
        out.status = st
        return
    field_c(ws, w, sb.dw)
    memcpy(f_cur, sb.dw, n * sizeof(double))
    out.H0 = energy_c(ws, w)
    norms_c(ws.s_w, ws.m, snc)
    out.s0[0] = snc[0]; out.s0[1] = snc[1]; out.s0[2] = snc[2]
    out.ell_tmax = snc[0] / d2 + snc[1] / d4 + snc[2] / dinf
    if pb.active:
        path_point(pb, 0.0, x, w)
        path_norm(pb, 0.0, snc[0], snc[1], snc[2])

    while t < delta * (1.0 - 1e-14):
        h_eff = h if h < delta - t else delta - t
        st = substep_c(ws, sb, x, w, f_cur, h_eff, fp_tol)
        out.n_evals += sb.n_evals
        if st != C_OK:
            if _runaway_check(x, w, n, runaway):
                out.status = C_DIVERGED
                return
            out.n_halvings += 1
            if out.n_halvings > max_halvings:
                out.status = st
                return
            h = h_eff / 2.0
            continue
        for i in range(3):
            val = (sb.stage_norms[3 * i] / d2 + sb.stage_norms[3 * i + 1] / d4
                   + sb.stage_norms[3 * i + 2] / dinf)
            if val > out.ell_tmax:
                out.ell_tmax = val
            if pb.active:
                path_norm(pb, t + GL_C[i] * h_eff, sb.stage_norms[3 * i],
                          sb.stage_norms[3 * i + 1], sb.stage_norms[3 * i + 2])
        t += h_eff
        memcpy(x, sb.x1, n * sizeof(double))
        memcpy(w, sb.w1, n * sizeof(double))
        # sb.f1 is the endpoint field; it is also f_cur for the next substep
        val = (sb.end_norms[0] / d2 + sb.end_norms[1] / d4 + sb.end_norms[2] / dinf)
        if val > out.ell_tmax:
            out.ell_tmax = val
        if pb.active:
            path_point(pb, t, x, w)
            path_norm(pb, t, sb.end_norms[0], sb.end_norms[1], sb.end_norms[2])
        if _runaway_check(x, w, n, runaway):
            out.status = C_DIVERGED
            return
        h = 2.0 * h
        if h > h_base:
            h = h_base
    out.H1 = energy_c(ws, w)
    out.status = C_OK


cdef bint _runaway_check(double *x, double *w, int n, double runaway) nogil:
    cdef int i
    for i in range(n):
        if fabs(x[i]) > runaway or fabs(w[i]) > runaway:
            return True
    return False


cdef class _Workspace:
    """Owns the numpy buffers backing the C workspace."""
    cdef WS ws
    cdef SubstepBuf sb
    cdef object refs

    def __init__(self, object A_obj, object b_obj, double alpha,
                 double slack_floor):
        cdef const double[:, ::1] A = A_obj
        cdef const double[::1] b = b_obj
        cdef int m = A.shape[0], n = A.shape[1]
        self.ws.m = m
        self.ws.n = n
        self.ws.big = n >= BLAS_MIN_N
        self.ws.alpha = alpha
        self.ws.floor = slack_floor
        self.ws.A = &A[0, 0]
        self.ws.b = &b[0]
        buf = np.empty(4 * m + 2 * m * n + n * n + 13 * n, dtype=np.float64)
        self.refs = [A_obj, b_obj, buf]
        cdef double[::1] bm = buf
        cdef double *p = &bm[0]
        self.ws.s = p; p += m
        self.ws.Ax = p; p += m * n
        self.ws.gf = p; p += n * n
        self.ws.sig = p; p += m
        self.ws.lev = p; p += m * n
        self.ws.s_w = p; p += m
        self.ws.tmp_m = p; p += m
        self.ws.tmp_n = p; p += n
        self.ws.rhs = NULL
        self.sb.Kx = p; p += 3 * n
        self.sb.Kw = p; p += 3 * n
        self.sb.Yx = p; p += n
        self.sb.Yw = p; p += n
        self.sb.x1 = p; p += n
        self.sb.w1 = p; p += n
        self.sb.f1 = p; p += n
        self.sb.dw = p; p += n


def point_core(A, b, x, double slack_floor):
    """Mirror of _kernels_py.point_core (verification and parity tests)."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    xc = np.ascontiguousarray(x, dtype=np.float64)
    cdef _Workspace work = _Workspace(A, b, 0.0, slack_floor)
    cdef double[::1] xv = xc
    cdef int st = point_core_c(&work.ws, &xv[0])
    cdef int m = work.ws.m, n = work.ws.n, i, j
    if st != C_OK:
        return st, None, None, None, None, 0.0, 0.0
    s = np.empty(m); Ax = np.empty((m, n)); L = np.zeros((n, n)); sig = np.empty(m)
    cdef double[::1] sv = s
    cdef double[:, ::1] Axv = Ax
    cdef double[:, ::1] Lv = L
    cdef double[::1] sigv = sig
    for i in range(m):
        sv[i] = work.ws.s[i]
        sigv[i] = work.ws.sig[i]
        for j in range(n):
            Axv[i, j] = work.ws.Ax[i * n + j]
    for i in range(n):
        for j in range(i + 1):
            Lv[i, j] = work.ws.gf[i * n + j]
    return OK, s, Ax, L, sig, work.ws.phi, work.ws.logdet


cdef dict _assemble(TrajOut *out, WS *ws, PathBuf *pb, double[::1] x, double[::1] w,
                    bint record_path):
    cdef int n = ws.n, i, j, npts, nnrm
    res = {
        "status": out.status,
        "x": np.asarray(x).copy(),
        "w": np.asarray(w).copy(),
        "H0": out.H0,
        "H1": out.H1,
        "ell_tmax": out.ell_tmax,
        "s0_l2": out.s0[0],
        "s0_l4": out.s0[1],
        "s0_linf": out.s0[2],
        "n_evals": out.n_evals,
        "n_halvings": out.n_halvings,
        "L_end": None,
    }
    if not record_path:
        return res
    if pb.oom:
        raise MemoryError("trajectory path buffer allocation failed")
    npts = pb.len_pts
    nnrm = pb.len_norms
    pt = np.empty(npts)
    px = np.empty((npts, n))
    pw = np.empty((npts, n))
    nt = np.empty(nnrm)
    n2 = np.empty(nnrm)
    n4 = np.empty(nnrm)
    ninf = np.empty(nnrm)
    cdef double[::1] ptv = pt
    cdef double[:, ::1] pxv = px
    cdef double[:, ::1] pwv = pw
    cdef double[::1] ntv = nt
    cdef double[::1] n2v = n2
    cdef double[::1] n4v = n4
    cdef double[::1] ninfv = ninf
    for i in range(npts):
        ptv[i] = pb.t[i]
        for j in range(n):
            pxv[i, j] = pb.x[i * n + j]
            pwv[i, j] = pb.w[i * n + j]
    for i in range(nnrm):
        ntv[i] = pb.nt[i]
        n2v[i] = pb.nrm[3 * i]
        n4v[i] = pb.nrm[3 * i + 1]
        ninfv[i] = pb.nrm[3 * i + 2]
    res["path_t"] = pt
    res["path_x"] = px
    res["path_w"] = pw
    res["norm_t"] = nt
    res["norm_l2"] = n2
    res["norm_l4"] = n4
    res["norm_linf"] = ninf
    return res


def integrate(A, b, x0, w0, double alpha, double delta, int n_sub,
              double fp_tol, int max_halvings, double slack_floor,
              double d2, double d4, double dinf, bint record_path):
    """Mirror of _kernels_py.integrate."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    x = np.array(x0, dtype=np.float64)
    w = np.array(w0, dtype=np.float64)
    cdef _Workspace work = _Workspace(A, b, alpha, slack_floor)
    cdef double[::1] xv = x
    cdef double[::1] wv = w
    cdef TrajOut out
    cdef PathBuf pb
    pb.active = record_path
    if record_path:
        path_init(&pb, work.ws.n, 4 * n_sub + 8)
    with nogil:
        traj_c(&work.ws, &work.sb, &pb, &xv[0], &wv[0], delta, n_sub, fp_tol,
               max_halvings, d2, d4, dinf, &out)
    try:
        return _assemble(&out, &work.ws, &pb, xv, wv, record_path)
    finally:
        if record_path:
            path_free(&pb)


cdef class Stepper:
    """Reusable chain stepper: one workspace for many steps (hot path)."""
    cdef _Workspace work
    cdef double delta, fp_tol, d2, d4, dinf
    cdef int n_sub, max_halvings
    cdef object xbuf, wbuf

    def __init__(self, A, b, double alpha, double delta, int n_sub,
                 double fp_tol, int max_halvings, double slack_floor,
                 double d2, double d4, double dinf):
        A = np.ascontiguousarray(A, dtype=np.float64)
        b = np.ascontiguousarray(b, dtype=np.float64)
        self.work = _Workspace(A, b, alpha, slack_floor)
        self.delta = delta
        self.n_sub = n_sub
        self.fp_tol = fp_tol
        self.max_halvings = max_halvings
        self.d2 = d2
        self.d4 = d4
        self.dinf = dinf
        self.xbuf = np.empty(self.work.ws.n)
        self.wbuf = np.empty(self.work.ws.n)

    def step(self, const double[::1] x, const double[::1] z, double sign):
        """One RHMC step from x with whitened draw z and direction sign.

        Returns (status, x_end, H0, H1, ell_tmax, s0_l2, s0_l4, s0_linf,
        n_evals, n_halvings); x_end is a fresh array (x unchanged).
        """
        cdef double[::1] xv = self.xbuf
        cdef double[::1] wv = self.wbuf
        cdef int n = self.work.ws.n, st, inc = 1, i, r, k
        cdef double acc
        cdef TrajOut out
        cdef PathBuf pb
        pb.active = False
        for i in range(n):
            xv[i] = x[i]
            wv[i] = z[i]
        with nogil:
            st = point_core_c(&self.work.ws, &xv[0])
            if st == C_OK:
                if self.work.ws.big:
                    dtrsv("U", "N", "N", &n, self.work.ws.gf, &n, &wv[0], &inc)
                else:
                    for r in range(n - 1, -1, -1):
                        acc = wv[r]
                        for k in range(r + 1, n):
                            acc -= self.work.ws.gf[k * n + r] * wv[k]
                        wv[r] = acc / self.work.ws.gf[r * n + r]
                for i in range(n):
                    wv[i] *= sign
                traj_c(&self.work.ws, &self.work.sb, &pb, &xv[0], &wv[0],
                       self.delta, self.n_sub, self.fp_tol, self.max_halvings,
                       self.d2, self.d4, self.dinf, &out)
                out.n_evals += 1
            else:
                out.status = st
                out.H0 = 0.0; out.H1 = 0.0; out.ell_tmax = 0.0
                out.s0[0] = 0.0; out.s0[1] = 0.0; out.s0[2] = 0.0
                out.n_evals = 1
                out.n_halvings = 0
        x_end = np.asarray(self.xbuf).copy() if out.status == OK else np.asarray(x).copy()
        return (out.status, x_end, out.H0, out.H1, out.ell_tmax,
                out.s0[0], out.s0[1], out.s0[2], out.n_evals, out.n_halvings)


def step_from_z(A, b, x, z, double sign, double alpha, double delta, int n_sub,
                double fp_tol, int max_halvings, double slack_floor,
                double d2, double d4, double dinf):
    """Mirror of _kernels_py.step_from_z: velocity draw w = sign L^{-T} z, then integrate."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    xc = np.array(x, dtype=np.float64)
    w = np.array(z, dtype=np.float64)
    cdef _Workspace work = _Workspace(A, b, alpha, slack_floor)
    cdef double[::1] xv = xc
    cdef double[::1] wv = w
    cdef int n = work.ws.n, st, inc = 1, i, r, k
    cdef double acc
    cdef TrajOut out
    cdef PathBuf pb
    w0 = np.zeros(n)
    cdef double[::1] w0v = w0
    pb.active = False
    with nogil:
        st = point_core_c(&work.ws, &xv[0])
        if st == C_OK:
            # w := sign * L^{-T} z (back substitution against the C-lower factor)
            if work.ws.big:
                dtrsv("U", "N", "N", &n, work.ws.gf, &n, &wv[0], &inc)
            else:
                for r in range(n - 1, -1, -1):
                    acc = wv[r]
                    for k in range(r + 1, n):
                        acc -= work.ws.gf[k * n + r] * wv[k]
                    wv[r] = acc / work.ws.gf[r * n + r]
            for i in range(n):
                wv[i] *= sign
                w0v[i] = wv[i]
            traj_c(&work.ws, &work.sb, &pb, &xv[0], &wv[0], delta, n_sub, fp_tol,
                   max_halvings, d2, d4, dinf, &out)
            out.n_evals += 1
        else:
            out.status = st
            out.H0 = 0.0; out.H1 = 0.0; out.ell_tmax = 0.0
            out.s0[0] = 0.0; out.s0[1] = 0.0; out.s0[2] = 0.0
            out.n_evals = 1
            out.n_halvings = 0
    res = _assemble(&out, &work.ws, &pb, xv, wv, False)
    res["w0"] = w0
    return res
