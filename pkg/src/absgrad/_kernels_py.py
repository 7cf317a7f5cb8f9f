"""Pure-Python tape kernels: one forward value sweep, one adjoint sweep.

Reference implementation of the hot loops; absgrad._kernels_c is the
compiled twin with identical semantics (selected in absgrad.backend).
Both sweeps walk the straight-line node table produced by tape.Tape.
"""

import math

import numpy as np

from . import _opcodes as op

_NAN = float("nan")


def forward_sweep(ops, arg0, arg1, cval, iaux, x, xi, use_xi, n_switch):
    """Evaluate every node at x.

    With use_xi, each abs output is xi_j * z_j instead of |z_j|, which
    realizes the modified switching system for a frozen slope choice.
    Returns (values, z, err) where err is the index of the first node with
    a domain violation (div by zero, log of a non-positive value), or -1.
    """
    ops_l = ops.tolist()
    a0 = arg0.tolist()
    a1 = arg1.tolist()
    cv = cval.tolist()
    ia = iaux.tolist()
    xl = [float(v) for v in x]
    xil = [float(v) for v in xi] if use_xi else None

    n_nodes = len(ops_l)
    values = [_NAN] * n_nodes
    z = [_NAN] * n_switch
    err = -1

    for k in range(n_nodes):
        code = ops_l[k]
        if code == op.CONST:
            values[k] = cv[k]
        elif code == op.INPUT:
            values[k] = xl[ia[k]]
        elif code == op.ADD:
            values[k] = values[a0[k]] + values[a1[k]]
        elif code == op.SUB:
            values[k] = values[a0[k]] - values[a1[k]]
        elif code == op.MUL:
            values[k] = values[a0[k]] * values[a1[k]]
        elif code == op.DIV:
            den = values[a1[k]]
            if den == 0.0:
                err = k
                break
            values[k] = values[a0[k]] / den
        elif code == op.NEG:
            values[k] = -values[a0[k]]
        elif code == op.SIN:
            values[k] = math.sin(values[a0[k]])
        elif code == op.COS:
            values[k] = math.cos(values[a0[k]])
        elif code == op.EXP:
            values[k] = math.exp(values[a0[k]])
        elif code == op.LOG:
            v = values[a0[k]]
            if v <= 0.0:
                err = k
                break
            values[k] = math.log(v)
        elif code == op.SQR:
            v = values[a0[k]]
            values[k] = v * v
        else:  # ABS
            j = ia[k]
            v = values[a0[k]]
            z[j] = v
            values[k] = xil[j] * v if use_xi else abs(v)

    return np.asarray(values), np.asarray(z), err


def reverse_sweep(ops, arg0, arg1, iaux, owner, owner_pos, values, seed,
                  n_inputs, n_switch):
    """Adjoint sweep from node `seed` with the kink variables cut out.

    Abs outputs and abs arguments are treated as independent intermediate
    inputs: an adjoint arriving at an abs node is booked against |z_j|
    (bg), and a contribution flowing into the argument of abs j from a
    consumer placed after that abs node is booked against z_j (dg).  The
    ordering condition keeps both derivative matrices of the switching
    system strictly lower triangular.  Returns (xg, bg, dg).
    """
    ops_l = ops.tolist()
    a0 = arg0.tolist()
    a1 = arg1.tolist()
    ia = iaux.tolist()
    own = owner.tolist()
    own_pos = owner_pos.tolist()
    val = values.tolist()

    adj = [0.0] * (seed + 1)
    adj[seed] = 1.0
    xg = [0.0] * n_inputs
    bg = [0.0] * n_switch
    dg = [0.0] * n_switch

    for k in range(seed, -1, -1):
        w = adj[k]
        if w == 0.0:
            continue
        code = ops_l[k]
        if code == op.ABS:
            bg[ia[k]] += w
            continue
        if code == op.INPUT:
            xg[ia[k]] += w
            continue
        if code == op.CONST:
            continue

        m0 = a0[k]
        if code == op.ADD:
            p0, p1 = 1.0, 1.0
        elif code == op.SUB:
            p0, p1 = 1.0, -1.0
        elif code == op.MUL:
            p0, p1 = val[a1[k]], val[m0]
        elif code == op.DIV:
            den = val[a1[k]]
            p0 = 1.0 / den
            p1 = -val[k] / den
        elif code == op.NEG:
            p0, p1 = -1.0, 0.0
        elif code == op.SIN:
            p0, p1 = math.cos(val[m0]), 0.0
        elif code == op.COS:
            p0, p1 = -math.sin(val[m0]), 0.0
        elif code == op.EXP:
            p0, p1 = val[k], 0.0
        elif code == op.LOG:
            p0, p1 = 1.0 / val[m0], 0.0
        else:  # SQR
            p0, p1 = 2.0 * val[m0], 0.0

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

    return np.asarray(xg), np.asarray(bg), np.asarray(dg)
