# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM kernels (forward, BPTT, Adam loop) over a flat parameter vector.

Same interface as ``rnnfilter._lstm_py``.
"""
import numpy as np

from libc.math cimport exp, tanh, sqrt, pow, isfinite
from libc.stdlib cimport malloc, calloc, free
from libc.string cimport memcpy, memset


cdef struct Dims:
    int L
    int n_in
    int H
    int n_out


cdef inline double sigm(double z) noexcept nogil:
    cdef double e
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef inline int layer_k(Dims* d, int l) noexcept nogil:
    return (d.n_in if l == 0 else d.H) + d.H


cdef inline Py_ssize_t layer_off(Dims* d, int l) noexcept nogil:
    cdef Py_ssize_t off = 0
    cdef int k
    for k in range(l):
        off += 4 * d.H * layer_k(d, k) + 4 * d.H
    return off


cdef inline void cell(const double* W, const double* b, const double* u, int nin, int H,
                      const double* h_prev, const double* c_prev,
                      double* xc, double* gates, double* c, double* tc, double* h) noexcept nogil:
    cdef int K = nin + H
    cdef int r, k, q
    cdef double z
    cdef const double* row
    memcpy(xc, u, nin * sizeof(double))
    memcpy(xc + nin, h_prev, H * sizeof(double))
    for r in range(4 * H):
        z = b[r]
        row = W + r * K
        for k in range(K):
            z += row[k] * xc[k]
        gates[r] = z
    for q in range(H):
        gates[q] = sigm(gates[q])
        gates[H + q] = tanh(gates[H + q])
        gates[2 * H + q] = sigm(gates[2 * H + q])
        gates[3 * H + q] = sigm(gates[3 * H + q])
        c[q] = c_prev[q] * gates[2 * H + q] + gates[q] * gates[H + q]
        tc[q] = tanh(c[q])
        h[q] = tc[q] * gates[3 * H + q]


cdef inline void output(const double* theta, Dims* d, const double* h, double* y) noexcept nogil:
    cdef Py_ssize_t c_off = layer_off(d, d.L)
    cdef const double* C = theta + c_off
    cdef const double* b_y = C + d.n_out * d.H
    cdef int r, q
    cdef double s
    for r in range(d.n_out):
        s = b_y[r]
        for q in range(d.H):
            s += C[r * d.H + q] * h[q]
        y[r] = s


cdef struct Cache:
    # per (t, l): xc[Kmax], gates[4H], c_prev[H], tc[H]; per t: h_top[H]
    double* xc
    double* gates
    double* cprev
    double* tc
    double* htop
    double* y


cdef int alloc_cache(Cache* cc, Dims* d, int T) noexcept nogil:
    cdef int kmax = d.n_in + d.H if d.n_in > d.H else 2 * d.H
    cc.xc = <double*> malloc(T * d.L * kmax * sizeof(double))
    cc.gates = <double*> malloc(T * d.L * 4 * d.H * sizeof(double))
    cc.cprev = <double*> malloc(T * d.L * d.H * sizeof(double))
    cc.tc = <double*> malloc(T * d.L * d.H * sizeof(double))
    cc.htop = <double*> malloc(T * d.H * sizeof(double))
    cc.y = <double*> malloc(T * d.n_out * sizeof(double))
    if cc.xc == NULL or cc.gates == NULL or cc.cprev == NULL or cc.tc == NULL \
            or cc.htop == NULL or cc.y == NULL:
        return -1
    return 0


cdef void free_cache(Cache* cc) noexcept nogil:
    free(cc.xc)
    free(cc.gates)
    free(cc.cprev)
    free(cc.tc)
    free(cc.htop)
    free(cc.y)


cdef double loss_grad_c(const double* theta, Dims* d, const double* x, const double* target,
                        int T, double* grad, Cache* cc, double* work) noexcept nogil:
    """Forward with caching, then BPTT into ``grad`` (overwritten). Returns the loss.

    ``work`` holds 4 * L * H + 2 * H + 4 * H + Kmax + n_out doubles.
    """
    cdef int L = d.L, H = d.H, n_out = d.n_out
    cdef int kmax = d.n_in + H if d.n_in > H else 2 * H
    cdef double* h = work                   # L*H
    cdef double* c = h + L * H              # L*H
    cdef double* dh_next = c + L * H        # L*H
    cdef double* dc_next = dh_next + L * H  # L*H
    cdef double* dh = dc_next + L * H       # H
    cdef double* cnew = dh + H              # H
    cdef double* dz = cnew + H              # 4H
    cdef double* dxc = dz + 4 * H           # Kmax
    cdef double* dy = dxc + kmax            # n_out
    cdef int t, l, q, r, k, K, nin
    cdef Py_ssize_t off, c_off = layer_off(d, L)
    cdef const double* W
    cdef const double* u
    cdef double* gW
    cdef double* xc
    cdef double* gates
    cdef double* cprev
    cdef double* tc
    cdef double loss = 0.0, e, scale, s, ig, jg, fg, og, dcq, dhq
    cdef const double* C = theta + c_off
    cdef double* gC = grad + c_off
    cdef double* gby = gC + n_out * H

    memset(h, 0, 2 * L * H * sizeof(double))
    for t in range(T):
        u = x + t * d.n_in
        for l in range(L):
            nin = d.n_in if l == 0 else H
            off = layer_off(d, l)
            K = nin + H
            xc = cc.xc + (t * L + l) * kmax
            gates = cc.gates + (t * L + l) * 4 * H
            cprev = cc.cprev + (t * L + l) * H
            tc = cc.tc + (t * L + l) * H
            memcpy(cprev, c + l * H, H * sizeof(double))
            cell(theta + off, theta + off + 4 * H * K, u, nin, H, h + l * H, c + l * H,
                 xc, gates, cnew, tc, h + l * H)
            memcpy(c + l * H, cnew, H * sizeof(double))
            u = h + l * H
        memcpy(cc.htop + t * H, u, H * sizeof(double))
        output(theta, d, u, cc.y + t * n_out)
        for r in range(n_out):
            e = cc.y[t * n_out + r] - target[t * n_out + r]
            loss += e * e
    loss /= T * n_out
    scale = 2.0 / (T * n_out)

    memset(grad, 0, (c_off + n_out * H + n_out) * sizeof(double))
    memset(dh_next, 0, 2 * L * H * sizeof(double))
    for t in range(T - 1, -1, -1):
        for r in range(n_out):
            dy[r] = scale * (cc.y[t * n_out + r] - target[t * n_out + r])
            gby[r] += dy[r]
            for q in range(H):
                gC[r * H + q] += dy[r] * cc.htop[t * H + q]
        for q in range(H):
            s = 0.0
            for r in range(n_out):
                s += C[r * H + q] * dy[r]
            dh[q] = s
        for l in range(L - 1, -1, -1):
            nin = d.n_in if l == 0 else H
            off = layer_off(d, l)
            K = nin + H
            W = theta + off
            gW = grad + off
            xc = cc.xc + (t * L + l) * kmax
            gates = cc.gates + (t * L + l) * 4 * H
            cprev = cc.cprev + (t * L + l) * H
            tc = cc.tc + (t * L + l) * H
            for q in range(H):
                ig = gates[q]
                jg = gates[H + q]
                fg = gates[2 * H + q]
                og = gates[3 * H + q]
                dhq = dh[q] + dh_next[l * H + q]
                dcq = dhq * og * (1.0 - tc[q] * tc[q]) + dc_next[l * H + q]
                dz[q] = dcq * jg * ig * (1.0 - ig)
                dz[H + q] = dcq * ig * (1.0 - jg * jg)
                dz[2 * H + q] = dcq * cprev[q] * fg * (1.0 - fg)
                dz[3 * H + q] = dhq * tc[q] * og * (1.0 - og)
                dc_next[l * H + q] = dcq * fg
            for k in range(K):
                dxc[k] = 0.0
            for r in range(4 * H):
                for k in range(K):
                    gW[r * K + k] += dz[r] * xc[k]
                    dxc[k] += W[r * K + k] * dz[r]
                gW[4 * H * K + r] += dz[r]
            for q in range(H):
                dh_next[l * H + q] = dxc[nin + q]
            if l > 0:
                for q in range(H):
                    dh[q] = dxc[q]
    return loss


cdef inline int work_size(Dims* d) noexcept nogil:
    cdef int kmax = d.n_in + d.H if d.n_in > d.H else 2 * d.H
    return 4 * d.L * d.H + 6 * d.H + kmax + d.n_out


cdef Dims make_dims(dims) except *:
    cdef Dims d
    d.L, d.n_in, d.H, d.n_out = [int(v) for v in dims]
    return d


def step(double[::1] theta, dims, x, double[:, ::1] h, double[:, ::1] c):
    """Advance one row; ``h`` and ``c`` (L x H) are updated in place."""
    cdef Dims d = make_dims(dims)
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef int kmax = d.n_in + d.H if d.n_in > d.H else 2 * d.H
    cdef double[::1] xc = np.empty(kmax)
    cdef double[::1] gates = np.empty(4 * d.H)
    cdef double[::1] cnew = np.empty(d.H)
    cdef double[::1] tc = np.empty(d.H)
    y = np.empty(d.n_out)
    cdef double[::1] yv = y
    _step(&theta[0], &d, &xv[0], &h[0, 0], &c[0, 0], &xc[0], &gates[0], &cnew[0], &tc[0], &yv[0])
    return y


cdef void _step(const double* theta, Dims* d, const double* x, double* h, double* c,
                double* xc, double* gates, double* cnew, double* tc, double* y) noexcept nogil:
    cdef int l, nin, K
    cdef Py_ssize_t off
    cdef const double* u = x
    for l in range(d.L):
        nin = d.n_in if l == 0 else d.H
        K = nin + d.H
        off = layer_off(d, l)
        cell(theta + off, theta + off + 4 * d.H * K, u, nin, d.H, h + l * d.H, c + l * d.H,
             xc, gates, cnew, tc, h + l * d.H)
        memcpy(c + l * d.H, cnew, d.H * sizeof(double))
        u = h + l * d.H
    output(theta, d, u, y)


def forward(double[::1] theta, dims, double[:, ::1] x):
    cdef Dims d = make_dims(dims)
    cdef int T = x.shape[0], t
    h_arr = np.zeros((d.L, d.H))
    c_arr = np.zeros((d.L, d.H))
    cdef double[:, ::1] h = h_arr
    cdef double[:, ::1] c = c_arr
    cdef int kmax = d.n_in + d.H if d.n_in > d.H else 2 * d.H
    cdef double[::1] xc = np.empty(kmax)
    cdef double[::1] gates = np.empty(4 * d.H)
    cdef double[::1] cnew = np.empty(d.H)
    cdef double[::1] tc = np.empty(d.H)
    y = np.empty((T, d.n_out))
    cdef double[:, ::1] yv = y
    with nogil:
        for t in range(T):
            _step(&theta[0], &d, &x[t, 0], &h[0, 0], &c[0, 0],
                  &xc[0], &gates[0], &cnew[0], &tc[0], &yv[t, 0])
    return y


def loss_grad(double[::1] theta, dims, double[:, ::1] x, double[:, ::1] target):
    """Mean-square-error loss and its full BPTT gradient."""
    cdef Dims d = make_dims(dims)
    cdef int T = x.shape[0]
    cdef Cache cc
    grad = np.empty_like(np.asarray(theta))
    cdef double[::1] gv = grad
    cdef double[::1] work = np.empty(work_size(&d))
    cdef double loss
    if alloc_cache(&cc, &d, T) != 0:
        free_cache(&cc)
        raise MemoryError()
    with nogil:
        loss = loss_grad_c(&theta[0], &d, &x[0, 0], &target[0, 0], T, &gv[0], &cc, &work[0])
    free_cache(&cc)
    return loss, grad


def train(double[::1] theta, double[::1] m, double[::1] v, long t, dims,
          double[:, ::1] x, double[:, ::1] target, int epochs,
          double lr, double beta1, double beta2, double eps):
    """Run ``epochs`` Adam steps in place; returns ``(losses, t)``.

    Stops after the first non-finite loss, which is kept as the last entry.
    """
    cdef Dims d = make_dims(dims)
    cdef int T = x.shape[0], e, done = epochs
    cdef Py_ssize_t n = theta.shape[0], p
    cdef Cache cc
    cdef double[::1] grad = np.empty(n)
    cdef double[::1] work = np.empty(work_size(&d))
    losses = np.empty(epochs)
    cdef double[::1] lv = losses
    cdef double loss, g, bc1, bc2, m_hat, v_hat
    if alloc_cache(&cc, &d, T) != 0:
        free_cache(&cc)
        raise MemoryError()
    with nogil:
        for e in range(epochs):
            loss = loss_grad_c(&theta[0], &d, &x[0, 0], &target[0, 0], T, &grad[0], &cc, &work[0])
            lv[e] = loss
            if not isfinite(loss):
                done = e + 1
                break
            t += 1
            bc1 = 1.0 - pow(beta1, <double> t)
            bc2 = 1.0 - pow(beta2, <double> t)
            for p in range(n):
                g = grad[p]
                m[p] = beta1 * m[p] + (1.0 - beta1) * g
                v[p] = beta2 * v[p] + (1.0 - beta2) * (g * g)
                m_hat = m[p] / bc1
                v_hat = v[p] / bc2
                theta[p] -= lr * m_hat / (sqrt(v_hat) + eps)
    free_cache(&cc)
    return losses[:done], t
