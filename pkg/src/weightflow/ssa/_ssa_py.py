"""Pure-Python Gillespie kernel; mirrors ``_ssa_kernel.pyx`` operation for operation."""
from __future__ import annotations

import math

DONE, NEED_UNIFORMS, OUTPUT_FULL = 0, 1, 2


def _raw(kind, p, x):
    rate = p[0]
    if kind == 0:
        return rate
    if kind == 1:
        return rate * x[int(p[1])]
    if kind == 2:
        return rate * x[int(p[1])] * x[int(p[2])]
    if kind == 3:
        return rate * p[3] / (p[3] + float(x[int(p[2])]) ** p[4])
    xi = x[int(p[1])]
    return rate * xi * (p[3] - xi) / p[3]


def propensities_at(stoich, kinds, params, L, x):
    out = []
    d = len(x)
    for r in range(len(kinds)):
        a = _raw(kinds[r], params[r], x)
        s = stoich[r]
        for k in range(d):
            y = x[k] + s[k]
            if y < 0 or y > L - 1:
                a = 0.0
                break
        out.append(float(a))
    return out


def run_chunk(stoich, kinds, params, L, x, t, T, uniforms, u_pos, out_t, out_x, n_out, record):
    """Advance one trajectory until ``T``, the uniform buffer runs dry or the output fills.

    ``x`` (int64 array) is updated in place.  Returns ``(t, u_pos, n_out, status)``.
    """
    S = stoich.tolist()
    K = kinds.tolist()
    P = params.tolist()
    xs = x.tolist()
    U = uniforms
    nu = len(U)
    cap = out_t.shape[0]
    d = len(xs)
    R = len(K)
    status = DONE
    while True:
        if u_pos + 2 > nu:
            status = NEED_UNIFORMS
            break
        if record and n_out >= cap:
            status = OUTPUT_FULL
            break
        a = propensities_at(S, K, P, L, xs)
        a0 = 0.0
        for r in range(R):
            a0 += a[r]
        u1 = float(U[u_pos])
        u2 = float(U[u_pos + 1])
        u_pos += 2
        if a0 <= 0.0:
            t = T
            break
        tau = -math.log(1.0 - u1) / a0
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
        s = S[chosen]
        for k in range(d):
            xs[k] += s[k]
        if record:
            out_t[n_out] = t
            for k in range(d):
                out_x[n_out, k] = xs[k]
            n_out += 1
    x[:] = xs
    return t, u_pos, n_out, status
