# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``.

Same signatures, same results, bit for bit. The arithmetic contract both
sides follow is documented in ``_pykernels``; anything changed here must
change there too, and the backend equivalence suite is the referee. Built
with FP contraction off so the operation sequence matches numpy's.
"""

import numpy as np

from .errors import OffPathError

from libc.math cimport pow
from libc.stdint cimport int32_t, uint8_t

ZMIN = 1e-300
cdef double _ZMIN = 1e-300


cpdef double jump_prob(double a_t, double a_s):
    """Conditional chance of moving to the target token during (t, s]."""
    cdef double q
    if a_t < 1.0:
        q = (a_s - a_t) / (1.0 - a_t)
    else:
        q = 1.0
    if q < 0.0:
        q = 0.0
    elif q > 1.0:
        q = 1.0
    return q


cdef inline double _coord_factor(int a, int b0, int b1, double a_t):
    if a == b0:
        if a == b1:
            return 1.0
        return 1.0 - a_t
    if a == b1:
        return a_t
    return 0.0


cdef int _fill_fallback_row(double[:, :] tab, const int32_t[:] y,
                            const int32_t[:, :] x0, const int32_t[:, :] x1,
                            const double[:] w, double a_t, double q,
                            double omq, double[:] post) except -1:
    """Per-coordinate posterior rows for a state with a vanished normalizer."""
    cdef Py_ssize_t n = y.shape[0], e_count = w.shape[0]
    cdef Py_ssize_t i, e
    cdef int a, b0, b1
    cdef double zi, pev
    for i in range(n):
        a = y[i]
        zi = 0.0
        for e in range(e_count):
            post[e] = w[e] * _coord_factor(a, x0[e, i], x1[e, i], a_t)
            zi += post[e]
        if zi < _ZMIN:
            raise OffPathError(
                "coordinate %d of state %s has no support in the coupling"
                % (i, tuple(y[k] for k in range(n))))
        for e in range(e_count):
            pev = post[e] / zi
            b0 = x0[e, i]
            b1 = x1[e, i]
            if b0 == b1:
                tab[i, b1] += pev
            elif a == b1:
                tab[i, b1] += pev
            elif a == b0:
                tab[i, b1] += pev * q
                tab[i, b0] += pev * omq
    return 0


def posterior_tables(states, x0, x1, w, double a_t, double a_s, int d,
                     bint holistic, bint offpath_fallback):
    """Normalizers and per-coordinate successor rows for a batch of states.

    See the pure twin for the full contract. Returns
    (z (S,), tables (S, N, D), fallback_used (S,) uint8).
    """
    cdef const int32_t[:, :] sv = np.ascontiguousarray(states, dtype=np.int32)
    cdef const int32_t[:, :] x0v = np.ascontiguousarray(x0, dtype=np.int32)
    cdef const int32_t[:, :] x1v = np.ascontiguousarray(x1, dtype=np.int32)
    cdef const double[:] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t s_count = sv.shape[0], n = sv.shape[1]
    cdef Py_ssize_t e_count = wv.shape[0]
    cdef double q = jump_prob(a_t, a_s)
    cdef double omq = 1.0 - q

    z_arr = np.zeros(s_count)
    tables_arr = np.zeros((s_count, n, d))
    fb_arr = np.zeros(s_count, dtype=np.uint8)
    post_arr = np.empty(e_count)
    pe_arr = np.empty(e_count)
    m0_arr = np.empty(e_count, dtype=np.uint8)
    m1_arr = np.empty(e_count, dtype=np.uint8)
    cdef double[:] zv = z_arr
    cdef double[:, :, :] tv = tables_arr
    cdef uint8_t[:] fbv = fb_arr
    cdef double[:] post = post_arr
    cdef double[:] pe = pe_arr
    cdef uint8_t[:] m0b = m0_arr
    cdef uint8_t[:] m1b = m1_arr

    cdef Py_ssize_t s, e, i
    cdef int a, b0, b1, m0, m1
    cdef double acc, zs, pev
    for s in range(s_count):
        zs = 0.0
        if holistic:
            for e in range(e_count):
                m0 = 1
                m1 = 1
                for i in range(n):
                    if sv[s, i] != x0v[e, i]:
                        m0 = 0
                    if sv[s, i] != x1v[e, i]:
                        m1 = 0
                m0b[e] = m0
                m1b[e] = m1
                if m0 and m1:
                    acc = wv[e]
                elif m0:
                    acc = wv[e] * (1.0 - a_t)
                elif m1:
                    acc = wv[e] * a_t
                else:
                    acc = 0.0
                post[e] = acc
                zs += acc
        else:
            for e in range(e_count):
                acc = wv[e]
                for i in range(n):
                    acc *= _coord_factor(sv[s, i], x0v[e, i], x1v[e, i], a_t)
                post[e] = acc
                zs += acc
        zv[s] = zs
        if zs < _ZMIN:
            if not offpath_fallback:
                raise OffPathError(
                    "state %s has zero path probability at the current time"
                    % (tuple(sv[s, k] for k in range(n)),))
            _fill_fallback_row(tv[s], sv[s], x0v, x1v, wv, a_t, q, omq, post)
            fbv[s] = 1
            continue
        for e in range(e_count):
            pe[e] = post[e] / zs
        if holistic:
            for i in range(n):
                for e in range(e_count):
                    pev = pe[e]
                    if m1b[e]:
                        tv[s, i, x1v[e, i]] += pev
                    elif m0b[e]:
                        tv[s, i, x1v[e, i]] += pev * q
                        tv[s, i, x0v[e, i]] += pev * omq
        else:
            for i in range(n):
                a = sv[s, i]
                for e in range(e_count):
                    pev = pe[e]
                    b0 = x0v[e, i]
                    b1 = x1v[e, i]
                    if b0 == b1:
                        tv[s, i, b1] += pev
                    elif a == b1:
                        tv[s, i, b1] += pev
                    elif a == b0:
                        tv[s, i, b1] += pev * q
                        tv[s, i, b0] += pev * omq
    return z_arr, tables_arr, fb_arr


def step_states(states, x0, x1, w, double a_t, double a_s, int d, double tau,
                uniforms, bint offpath_fallback, bint holistic=False):
    """One factorized decoding step for a batch of P states.

    See the pure twin for the full contract. Returns (P, N) int32.
    """
    cdef const int32_t[:, :] sv = np.ascontiguousarray(states, dtype=np.int32)
    cdef const int32_t[:, :] x0v = np.ascontiguousarray(x0, dtype=np.int32)
    cdef const int32_t[:, :] x1v = np.ascontiguousarray(x1, dtype=np.int32)
    cdef const double[:] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[:, :] uv = np.ascontiguousarray(uniforms,
                                                      dtype=np.float64)
    cdef Py_ssize_t p_count = sv.shape[0], n = sv.shape[1]
    cdef Py_ssize_t e_count = wv.shape[0]
    cdef double q = jump_prob(a_t, a_s)
    cdef double omq = 1.0 - q
    cdef double itau = 1.0 / tau
    cdef bint unit_tau = tau == 1.0

    out_arr = np.empty((p_count, n), dtype=np.int32)
    tab_arr = np.empty((n, d))
    post_arr = np.empty(e_count)
    m0_arr = np.empty(e_count, dtype=np.uint8)
    m1_arr = np.empty(e_count, dtype=np.uint8)
    cdef int32_t[:, :] out = out_arr
    cdef double[:, :] tab = tab_arr
    cdef double[:] post = post_arr
    cdef uint8_t[:] m0b = m0_arr
    cdef uint8_t[:] m1b = m1_arr

    cdef Py_ssize_t p, e, i
    cdef int a, b0, b1, m0, m1, tok, v
    cdef double acc, zs, pev, rowsum, rowmax, u, c
    for p in range(p_count):
        zs = 0.0
        if holistic:
            for e in range(e_count):
                m0 = 1
                m1 = 1
                for i in range(n):
                    if sv[p, i] != x0v[e, i]:
                        m0 = 0
                    if sv[p, i] != x1v[e, i]:
                        m1 = 0
                m0b[e] = m0
                m1b[e] = m1
                if m0 and m1:
                    acc = wv[e]
                elif m0:
                    acc = wv[e] * (1.0 - a_t)
                elif m1:
                    acc = wv[e] * a_t
                else:
                    acc = 0.0
                post[e] = acc
                zs += acc
        else:
            for e in range(e_count):
                acc = wv[e]
                for i in range(n):
                    acc *= _coord_factor(sv[p, i], x0v[e, i], x1v[e, i], a_t)
                post[e] = acc
                zs += acc
        for i in range(n):
            for v in range(d):
                tab[i, v] = 0.0
        if zs < _ZMIN:
            if not offpath_fallback:
                raise OffPathError(
                    "state %s has zero path probability at the current time"
                    % (tuple(sv[p, k] for k in range(n)),))
            _fill_fallback_row(tab, sv[p], x0v, x1v, wv, a_t, q, omq, post)
        elif holistic:
            for i in range(n):
                for e in range(e_count):
                    pev = post[e] / zs
                    if m1b[e]:
                        tab[i, x1v[e, i]] += pev
                    elif m0b[e]:
                        tab[i, x1v[e, i]] += pev * q
                        tab[i, x0v[e, i]] += pev * omq
        else:
            for i in range(n):
                a = sv[p, i]
                for e in range(e_count):
                    pev = post[e] / zs
                    b0 = x0v[e, i]
                    b1 = x1v[e, i]
                    if b0 == b1:
                        tab[i, b1] += pev
                    elif a == b1:
                        tab[i, b1] += pev
                    elif a == b0:
                        tab[i, b1] += pev * q
                        tab[i, b0] += pev * omq
        for i in range(n):
            if not unit_tau:
                # max-rescale before the pow, mirroring the pure twin
                rowmax = 0.0
                for v in range(d):
                    if tab[i, v] > rowmax:
                        rowmax = tab[i, v]
                for v in range(d):
                    tab[i, v] = pow(tab[i, v] / rowmax, itau)
            rowsum = 0.0
            for v in range(d):
                rowsum += tab[i, v]
            for v in range(d):
                tab[i, v] /= rowsum
            u = uv[p, i]
            c = 0.0
            tok = -1
            for v in range(d):
                c += tab[i, v]
                if u < c:
                    tok = v
                    break
            if tok < 0:
                v = d - 1
                while v > 0 and tab[i, v] <= 0.0:
                    v -= 1
                tok = v
            out[p, i] = tok
    return out_arr


def sample_exact(root, x0, x1, w, double a_t, double a_s, int d,
                 bint holistic, u_pair, u_coord):
    """Draw S successors of one state from the exact transition law.

    See the pure twin for the full contract. Returns (S, N) int32.
    """
    cdef const int32_t[:] rv = np.ascontiguousarray(root, dtype=np.int32)
    cdef const int32_t[:, :] x0v = np.ascontiguousarray(x0, dtype=np.int32)
    cdef const int32_t[:, :] x1v = np.ascontiguousarray(x1, dtype=np.int32)
    cdef const double[:] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[:] upv = np.ascontiguousarray(u_pair, dtype=np.float64)
    cdef const double[:, :] ucv = np.ascontiguousarray(u_coord,
                                                       dtype=np.float64)
    cdef Py_ssize_t n = rv.shape[0], e_count = wv.shape[0]
    cdef Py_ssize_t s_count = upv.shape[0]
    cdef double q = jump_prob(a_t, a_s)

    post_arr = np.empty(e_count)
    pe_arr = np.empty(e_count)
    cdef double[:] post = post_arr
    cdef double[:] pe = pe_arr

    cdef Py_ssize_t e, i, j, k
    cdef int a, b0, b1, m0, m1, stay
    cdef double acc, zs, u, c
    zs = 0.0
    if holistic:
        for e in range(e_count):
            m0 = 1
            m1 = 1
            for i in range(n):
                if rv[i] != x0v[e, i]:
                    m0 = 0
                if rv[i] != x1v[e, i]:
                    m1 = 0
            if m0 and m1:
                acc = wv[e]
            elif m0:
                acc = wv[e] * (1.0 - a_t)
            elif m1:
                acc = wv[e] * a_t
            else:
                acc = 0.0
            post[e] = acc
            zs += acc
    else:
        for e in range(e_count):
            acc = wv[e]
            for i in range(n):
                acc *= _coord_factor(rv[i], x0v[e, i], x1v[e, i], a_t)
            post[e] = acc
            zs += acc
    if zs < _ZMIN:
        raise OffPathError(
            "state %s has zero path probability at the current time"
            % (tuple(rv[k] for k in range(n)),))
    for e in range(e_count):
        pe[e] = post[e] / zs

    out_arr = np.empty((s_count, n), dtype=np.int32)
    cdef int32_t[:, :] out = out_arr
    cdef Py_ssize_t chosen
    for j in range(s_count):
        u = upv[j]
        c = 0.0
        chosen = -1
        for e in range(e_count):
            c += pe[e]
            if u < c:
                chosen = e
                break
        if chosen < 0:
            chosen = e_count - 1
            while chosen > 0 and post[chosen] <= 0.0:
                chosen -= 1
        if holistic:
            stay = 1
            for i in range(n):
                if rv[i] != x1v[chosen, i]:
                    stay = 0
                    break
            if stay or ucv[j, 0] < q:
                for i in range(n):
                    out[j, i] = x1v[chosen, i]
            else:
                for i in range(n):
                    out[j, i] = x0v[chosen, i]
        else:
            for i in range(n):
                b0 = x0v[chosen, i]
                b1 = x1v[chosen, i]
                a = rv[i]
                if b0 == b1 or a == b1:
                    out[j, i] = b1
                elif a == b0:
                    if ucv[j, i] < q:
                        out[j, i] = b1
                    else:
                        out[j, i] = b0
                else:
                    # unreachable for entries with posterior mass
                    out[j, i] = b0
    return out_arr
