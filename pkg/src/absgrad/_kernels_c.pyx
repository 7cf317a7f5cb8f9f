# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tape kernels; semantics mirror absgrad._kernels_py exactly.

Keep the two files in lockstep: tests compare their outputs bitwise on
random tapes.
"""

from libc.math cimport sin, cos, exp, log, fabs

import numpy as np


cdef enum Op:
    CONST = 0
    INPUT = 1
    ADD = 2
    SUB = 3
    MUL = 4
    DIV = 5
    NEG = 6
    SIN = 7
    COS = 8
    EXP = 9
    LOG = 10
    SQR = 11
    ABS = 12


def forward_sweep(ops, arg0, arg1, cval, iaux, x, xi, bint use_xi, int n_switch):
    cdef const int[::1] ops_v = ops
    cdef const int[::1] a0 = arg0
    cdef const int[::1] a1 = arg1
    cdef const double[::1] cv = cval
    cdef const int[::1] ia = iaux
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] xiv = np.ascontiguousarray(xi, dtype=np.float64)

    cdef int n_nodes = ops_v.shape[0]
    values_arr = np.full(n_nodes, np.nan)
    z_arr = np.full(n_switch, np.nan)
    cdef double[::1] values = values_arr
    cdef double[::1] z = z_arr

    cdef int k, code, j, err = -1
    cdef double v, den
    for k in range(n_nodes):
        code = ops_v[k]
        if code == CONST:
            values[k] = cv[k]
        elif code == INPUT:
            values[k] = xv[ia[k]]
        elif code == ADD:
            values[k] = values[a0[k]] + values[a1[k]]
        elif code == SUB:
            values[k] = values[a0[k]] - values[a1[k]]
        elif code == MUL:
            values[k] = values[a0[k]] * values[a1[k]]
        elif code == DIV:
            den = values[a1[k]]
            if den == 0.0:
                err = k
                break
            values[k] = values[a0[k]] / den
        elif code == NEG:
            values[k] = -values[a0[k]]
        elif code == SIN:
            values[k] = sin(values[a0[k]])
        elif code == COS:
            values[k] = cos(values[a0[k]])
        elif code == EXP:
            values[k] = exp(values[a0[k]])
        elif code == LOG:
            v = values[a0[k]]
            if v <= 0.0:
                err = k
                break
            values[k] = log(v)
        elif code == SQR:
            v = values[a0[k]]
            values[k] = v * v
        else:  # ABS
            j = ia[k]
            v = values[a0[k]]
            z[j] = v
            values[k] = xiv[j] * v if use_xi else fabs(v)

    return values_arr, z_arr, err


def reverse_sweep(ops, arg0, arg1, iaux, owner, owner_pos, values, int seed,
                  int n_inputs, int n_switch):
    cdef const int[::1] ops_v = ops
    cdef const int[::1] a0 = arg0
    cdef const int[::1] a1 = arg1
    cdef const int[::1] ia = iaux
    cdef const int[::1] own = owner
    cdef const int[::1] own_pos = owner_pos
    cdef const double[::1] val = values

    adj_arr = np.zeros(seed + 1)
    xg_arr = np.zeros(n_inputs)
    bg_arr = np.zeros(n_switch)
    dg_arr = np.zeros(n_switch)
    cdef double[::1] adj = adj_arr
    cdef double[::1] xg = xg_arr
    cdef double[::1] bg = bg_arr
    cdef double[::1] dg = dg_arr
    adj[seed] = 1.0

    cdef int k, code, m0, m1, j
    cdef double w, p0, p1, c, den
    for k in range(seed, -1, -1):
        w = adj[k]
        if w == 0.0:
            continue
        code = ops_v[k]
        if code == ABS:
            bg[ia[k]] += w
            continue
        if code == INPUT:
            xg[ia[k]] += w
            continue
        if code == CONST:
            continue

        m0 = a0[k]
        if code == ADD:
            p0 = 1.0
            p1 = 1.0
        elif code == SUB:
            p0 = 1.0
            p1 = -1.0
        elif code == MUL:
            p0 = val[a1[k]]
            p1 = val[m0]
        elif code == DIV:
            den = val[a1[k]]
            p0 = 1.0 / den
            p1 = -val[k] / den
        elif code == NEG:
            p0 = -1.0
            p1 = 0.0
        elif code == SIN:
            p0 = cos(val[m0])
            p1 = 0.0
        elif code == COS:
            p0 = -sin(val[m0])
            p1 = 0.0
        elif code == EXP:
            p0 = val[k]
            p1 = 0.0
        elif code == LOG:
            p0 = 1.0 / val[m0]
            p1 = 0.0
        else:  # SQR
            p0 = 2.0 * val[m0]
            p1 = 0.0

        c = w * p0
        if c != 0.0:
            j = own[m0]
            if j >= 0 and k > own_pos[m0]:
                dg[j] += c
            else:
                adj[m0] += c
        if p1 != 0.0:
            m1 = a1[k]
            c = w * p1
            if c != 0.0:
                j = own[m1]
                if j >= 0 and k > own_pos[m1]:
                    dg[j] += c
                else:
                    adj[m1] += c

    return xg_arr, bg_arr, dg_arr
