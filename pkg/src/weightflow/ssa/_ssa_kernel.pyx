# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Gillespie kernel.  Same contract as ``_ssa_py.run_chunk``."""
from libc.math cimport log, pow

DEF DONE = 0
DEF NEED_UNIFORMS = 1
DEF OUTPUT_FULL = 2


cdef inline double _raw(int kind, const double[:] p, const long long[:] x) noexcept nogil:
    cdef double rate = p[0]
    cdef double xi
    if kind == 0:
        return rate
    if kind == 1:
        return rate * <double>x[<int>p[1]]
    if kind == 2:
        return rate * <double>x[<int>p[1]] * <double>x[<int>p[2]]
    if kind == 3:
        return rate * p[3] / (p[3] + pow(<double>x[<int>p[2]], p[4]))
    xi = <double>x[<int>p[1]]
    return rate * xi * (p[3] - xi) / p[3]


def run_chunk(const long long[:, :] stoich, const int[:] kinds, const double[:, :] params,
              long long L, long long[:] x, double t, double T, const double[:] uniforms,
              Py_ssize_t u_pos, double[:] out_t, long long[:, :] out_x, Py_ssize_t n_out,
              bint record):
    cdef Py_ssize_t R = kinds.shape[0]
    cdef Py_ssize_t d = x.shape[0]
    cdef Py_ssize_t nu = uniforms.shape[0]
    cdef Py_ssize_t cap = out_t.shape[0]
    cdef Py_ssize_t r, k, chosen
    cdef double a0, acc, u1, u2, tau, target, ar
    cdef long long y
    cdef int status = DONE
    cdef double[64] a
    if R > 64:
        raise ValueError("kernel supports at most 64 reactions")
    with nogil:
        while True:
            if u_pos + 2 > nu:
                status = NEED_UNIFORMS
                break
            if record and n_out >= cap:
                status = OUTPUT_FULL
                break
            a0 = 0.0
            for r in range(R):
                ar = _raw(kinds[r], params[r], x)
                for k in range(d):
                    y = x[k] + stoich[r, k]
                    if y < 0 or y > L - 1:
                        ar = 0.0
                        break
                a[r] = ar
                a0 += ar
            u1 = uniforms[u_pos]
            u2 = uniforms[u_pos + 1]
            u_pos += 2
            if a0 <= 0.0:
                t = T
                break
            tau = -log(1.0 - u1) / a0
            if t + tau > T:
                t = T
                break
            t = t + tau
            target = u2 * a0
            acc = 0.0
            chosen = -1
            for r in range(R):
                if a[r] > 0.0:
                    chosen = r
                acc += a[r]
                if target < acc and a[r] > 0.0:
                    break
            for k in range(d):
                x[k] += stoich[chosen, k]
            if record:
                out_t[n_out] = t
                for k in range(d):
                    out_x[n_out, k] = x[k]
                n_out += 1
    return t, u_pos, n_out, status
