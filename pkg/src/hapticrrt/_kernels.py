"""Compiled inner loops for superellipse contact energies.

Body-frame conventions: a superellipse with half-axes ``a1, a2`` and shape
exponent ``eps`` has inside-outside value
``F(x, y) = |x/a1|^(2/eps) + |y/a2|^(2/eps) - 1``.
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
INV_PHI = 0.6180339887498949
GOLDEN_ITERS = 60


@njit(cache=True)
def io_value(x, y, a1, a2, eps):
    p = 2.0 / eps
    return abs(x / a1) ** p + abs(y / a2) ** p - 1.0


@njit(cache=True)
def io_derivs(x, y, a1, a2, eps):
    """F, dF/dx, dF/dy, d2F/dx2, d2F/dy2 (the mixed term is zero)."""
    p = 2.0 / eps
    sx = abs(x / a1)
    sy = abs(y / a2)
    F = sx ** p + sy ** p - 1.0
    fx = 0.0
    fy = 0.0
    fxx = 0.0
    fyy = 0.0
    if sx > 0.0:
        fx = math.copysign(p * sx ** (p - 1.0) / a1, x)
        fxx = p * (p - 1.0) * sx ** (p - 2.0) / (a1 * a1)
    if sy > 0.0:
        fy = math.copysign(p * sy ** (p - 1.0) / a2, y)
        fyy = p * (p - 1.0) * sy ** (p - 2.0) / (a2 * a2)
    return F, fx, fy, fxx, fyy


@njit(cache=True)
def polar_point(psi, a1, a2, eps):
    c = math.cos(psi)
    s = math.sin(psi)
    p = 2.0 / eps
    r = (abs(c / a1) ** p + abs(s / a2) ** p) ** (-0.5 * eps)
    return r * c, r * s


@njit(cache=True)
def _dist2(psi, qx, qy, a1, a2, eps):
    px, py = polar_point(psi, a1, a2, eps)
    return (qx - px) ** 2 + (qy - py) ** 2


@njit(cache=True)
def _golden(lo, hi, qx, qy, a1, a2, eps):
    c = hi - INV_PHI * (hi - lo)
    d = lo + INV_PHI * (hi - lo)
    fc = _dist2(c, qx, qy, a1, a2, eps)
    fd = _dist2(d, qx, qy, a1, a2, eps)
    for _ in range(GOLDEN_ITERS):
        if fc < fd:
            hi = d
            d = c
            fd = fc
            c = hi - INV_PHI * (hi - lo)
            fc = _dist2(c, qx, qy, a1, a2, eps)
        else:
            lo = c
            c = d
            fc = fd
            d = lo + INV_PHI * (hi - lo)
            fd = _dist2(d, qx, qy, a1, a2, eps)
    if fc < fd:
        return c, fc
    return d, fd


@njit(cache=True)
def standard_gamma(px, py, a1, a2, eps):
    """Parameter of the point in the ``(a1 cos^eps, a2 sin^eps)`` parameterisation."""
    cx = math.copysign(abs(px / a1) ** (1.0 / eps), px)
    cy = math.copysign(abs(py / a2) ** (1.0 / eps), py)
    g = math.atan2(cy, cx)
    if g < 0.0:
        g += TWO_PI
    if g >= TWO_PI - 1e-12:
        g = 0.0
    return g


@njit(cache=True)
def proxy(qx, qy, a1, a2, eps, nseeds):
    """Nearest boundary point to ``q`` (body frame).

    Multi-start over ``nseeds`` equispaced polar angles, golden-section
    refinement of the two best sampled local minima. Returns
    ``(px, py, dist2, ok)``.
    """
    h = TWO_PI / nseeds
    best_k = -1
    best_f = np.inf
    second_k = -1
    second_f = np.inf
    f_prev = _dist2(-h, qx, qy, a1, a2, eps)
    f_cur = _dist2(0.0, qx, qy, a1, a2, eps)
    f_first = f_cur
    for k in range(nseeds):
        if k + 1 < nseeds:
            f_next = _dist2((k + 1) * h, qx, qy, a1, a2, eps)
        else:
            f_next = f_first
        if f_cur <= f_prev and f_cur <= f_next:
            if f_cur < best_f * (1.0 - 1e-12):
                second_k = best_k
                second_f = best_f
                best_k = k
                best_f = f_cur
            elif f_cur < second_f:
                second_k = k
                second_f = f_cur
        f_prev = f_cur
        f_cur = f_next
    if best_k < 0:
        return np.nan, np.nan, np.nan, False
    psi_best = best_k * h
    f_best = best_f
    # refinements must beat the sampled minimum by more than rounding, so
    # exact ties (e.g. the centre of a circle) keep the earliest seed
    psi, f = _golden(psi_best - h, psi_best + h, qx, qy, a1, a2, eps)
    if f < f_best * (1.0 - 1e-12):
        psi_best = psi
        f_best = f
    if second_k >= 0:
        psi2 = second_k * h
        psi, f = _golden(psi2 - h, psi2 + h, qx, qy, a1, a2, eps)
        if f < f_best * (1.0 - 1e-12):
            psi_best = psi
            f_best = f
    px, py = polar_point(psi_best, a1, a2, eps)
    if psi_best != best_k * h or f_best < best_f:
        px, py = _polish(px, py, qx, qy, a1, a2, eps)
    d2 = (qx - px) ** 2 + (qy - py) ** 2
    ok = np.isfinite(px) and np.isfinite(py)
    return px, py, d2, ok


@njit(cache=True)
def _polish(px, py, qx, qy, a1, a2, eps):
    """Newton on ``F(p) = 0, (q - p) x grad F(p) = 0``.

    Golden-section search only pins the minimiser to ~sqrt(machine eps);
    two or three Newton steps recover full precision. Any step that moves
    farther than the search accuracy is rejected.
    """
    scale = max(a1, a2)
    for _ in range(3):
        F, fx, fy, fxx, fyy = io_derivs(px, py, a1, a2, eps)
        g2 = (qx - px) * fy - (qy - py) * fx
        j11 = fx
        j12 = fy
        j21 = -fy - (qy - py) * fxx
        j22 = (qx - px) * fyy + fx
        det = j11 * j22 - j12 * j21
        if det == 0.0 or not np.isfinite(det):
            break
        dx = (F * j22 - j12 * g2) / det
        dy = (j11 * g2 - j21 * F) / det
        if not (abs(dx) < 1e-6 * scale and abs(dy) < 1e-6 * scale):
            break
        px -= dx
        py -= dy
        if abs(dx) < 1e-17 * scale and abs(dy) < 1e-17 * scale:
            break
    return px, py


@njit(cache=True)
def stiffness(F, kmin, kmax, d0):
    th = math.tanh(F / d0)
    k = kmin + 0.5 * (1.0 - th) * kmax
    dk = -0.5 * kmax * (1.0 - th * th) / d0
    ddk = kmax * th * (1.0 - th * th) / (d0 * d0)
    return k, dk, ddk


@njit(cache=True)
def point_energy(qx, qy, a1, a2, eps, kmin, kmax, d0, nseeds, out_g, out_H):
    """``E = 1/2 k(F(q)) |q - p(q)|^2`` with gradient/Hessian w.r.t. ``q``.

    Derivatives use the envelope property of the proxy and implicit
    differentiation of its stationarity condition. Returns ``(E, ok)``.
    """
    out_g[0] = 0.0
    out_g[1] = 0.0
    out_H[0, 0] = 0.0
    out_H[0, 1] = 0.0
    out_H[1, 0] = 0.0
    out_H[1, 1] = 0.0
    F, fx, fy, fxx, fyy = io_derivs(qx, qy, a1, a2, eps)
    if kmin == 0.0 and F > 20.0 * d0:
        # (1 - tanh) < 1e-17 here: the term is exactly negligible
        return 0.0, True
    px, py, d2, ok = proxy(qx, qy, a1, a2, eps, nseeds)
    if not ok:
        return 0.0, False
    k, dk, ddk = stiffness(F, kmin, kmax, d0)
    D = 0.5 * d2
    gx = qx - px
    gy = qy - py
    # tangent and curvature of the boundary at the proxy
    _, bx, by, bxx, byy = io_derivs(px, py, a1, a2, eps)
    nb = math.sqrt(bx * bx + by * by)
    if not nb > 0.0:
        return 0.0, False
    tx = -by / nb
    ty = bx / nb
    kappa = (bxx * by * by + byy * bx * bx) / (nb * nb * nb)
    # (p - q) . n_in with n_in = -grad F / |grad F|
    s = (gx * bx + gy * by) / nb
    den = 1.0 + kappa * s
    if abs(den) < 1e-12:
        return 0.0, False
    hxx = 1.0 - tx * tx / den
    hxy = -tx * ty / den
    hyy = 1.0 - ty * ty / den
    E = k * D
    out_g[0] = dk * D * fx + k * gx
    out_g[1] = dk * D * fy + k * gy
    out_H[0, 0] = ddk * D * fx * fx + dk * (2.0 * fx * gx) + dk * D * fxx + k * hxx
    out_H[1, 1] = ddk * D * fy * fy + dk * (2.0 * fy * gy) + dk * D * fyy + k * hyy
    off = ddk * D * fx * fy + dk * (fx * gy + gx * fy) + k * hxy
    out_H[0, 1] = off
    out_H[1, 0] = off
    return E, True


@njit(cache=True)
def _carrier(v, base, idx, b):
    x = base[b, 0]
    y = base[b, 1]
    th = base[b, 2]
    if idx[b, 0] >= 0:
        x += v[idx[b, 0]]
    if idx[b, 1] >= 0:
        y += v[idx[b, 1]]
    if idx[b, 2] >= 0:
        th += v[idx[b, 2]]
    return x, y, th


@njit(cache=True)
def contact_terms(v, base, idx, offset, shape, pair_a, pair_b, pair_pt, stiff, nseeds, order, out_g, out_H):
    """Sum of pair contact energies over generalized coordinates ``v``.

    Bodies: carrier pose ``base + v[idx]`` (``idx < 0`` pins the coordinate)
    composed with a fixed body ``offset``. A pair pushes point ``pair_pt``
    (body frame of ``pair_a``) against the surface of ``pair_b``.
    ``order`` 0: energy only, 2: energy, gradient and Hessian.
    Returns ``(E, n_failed)``.
    """
    nv = v.shape[0]
    for i in range(nv):
        out_g[i] = 0.0
        for j in range(nv):
            out_H[i, j] = 0.0
    kmin = stiff[0]
    kmax = stiff[1]
    d0 = stiff[2]
    E_tot = 0.0
    nfail = 0
    gq = np.zeros(2)
    Hq = np.zeros((2, 2))
    Jr = np.zeros((2, 6))
    d2r = np.zeros((6, 6, 2))
    gl = np.zeros(6)
    Hl = np.zeros((6, 6))
    loc = np.zeros(6, dtype=np.int64)
    for pi in range(pair_a.shape[0]):
        A = pair_a[pi]
        B = pair_b[pi]
        ax, ay, al = _carrier(v, base, idx, A)
        bx, by, be = _carrier(v, base, idx, B)
        # point in carrier frame of A
        co = math.cos(offset[A, 2])
        so = math.sin(offset[A, 2])
        sx = offset[A, 0] + co * pair_pt[pi, 0] - so * pair_pt[pi, 1]
        sy = offset[A, 1] + so * pair_pt[pi, 0] + co * pair_pt[pi, 1]
        ca = math.cos(al)
        sa = math.sin(al)
        rax = ca * sx - sa * sy
        ray = sa * sx + ca * sy
        dx = ax + rax - bx
        dy = ay + ray - by
        cb = math.cos(be)
        sb = math.sin(be)
        # r = R(-beta) d
        rx = cb * dx + sb * dy
        ry = -sb * dx + cb * dy
        # q = R(-theta_oB)(r - o_B)
        cob = math.cos(offset[B, 2])
        sob = math.sin(offset[B, 2])
        ux = rx - offset[B, 0]
        uy = ry - offset[B, 1]
        qx = cob * ux + sob * uy
        qy = -sob * ux + cob * uy
        a1 = shape[B, 0]
        a2 = shape[B, 1]
        ep = shape[B, 2]
        if order == 0:
            F = io_value(qx, qy, a1, a2, ep)
            if kmin == 0.0 and F > 20.0 * d0:
                continue
            px, py, d2, ok = proxy(qx, qy, a1, a2, ep, nseeds)
            if not ok:
                nfail += 1
                continue
            k, _, _ = stiffness(F, kmin, kmax, d0)
            E_tot += 0.5 * k * d2
            continue
        E, ok = point_energy(qx, qy, a1, a2, ep, kmin, kmax, d0, nseeds, gq, Hq)
        if not ok:
            nfail += 1
            continue
        if E == 0.0 and gq[0] == 0.0 and gq[1] == 0.0 and Hq[0, 0] == 0.0 and Hq[1, 1] == 0.0:
            continue
        E_tot += E
        # rotate derivatives from q to r coordinates
        grx = cob * gq[0] - sob * gq[1]
        gry = sob * gq[0] + cob * gq[1]
        # H_r = R H_q R^T, R = R(theta_oB)
        m00 = cob * Hq[0, 0] - sob * Hq[1, 0]
        m01 = cob * Hq[0, 1] - sob * Hq[1, 1]
        m10 = sob * Hq[0, 0] + cob * Hq[1, 0]
        m11 = sob * Hq[0, 1] + cob * Hq[1, 1]
        h00 = m00 * cob - m01 * sob
        h01 = m00 * sob + m01 * cob
        h10 = m10 * cob - m11 * sob
        h11 = m10 * sob + m11 * cob
        # Jacobian of r w.r.t. (tAx, tAy, alpha, tBx, tBy, beta)
        Jr[0, 0] = cb
        Jr[0, 1] = sb
        Jr[1, 0] = -sb
        Jr[1, 1] = cb
        # J R(alpha) s = (-ray, rax); then R(-beta)
        jx = -ray
        jy = rax
        Jr[0, 2] = cb * jx + sb * jy
        Jr[1, 2] = -sb * jx + cb * jy
        Jr[0, 3] = -cb
        Jr[0, 4] = -sb
        Jr[1, 3] = sb
        Jr[1, 4] = -cb
        # -J r = (ry, -rx)
        Jr[0, 5] = ry
        Jr[1, 5] = -rx
        for a in range(6):
            for b in range(6):
                d2r[a, b, 0] = 0.0
                d2r[a, b, 1] = 0.0
        # d2 r / d alpha^2 = -R(-beta) R(alpha) s
        d2r[2, 2, 0] = -(cb * rax + sb * ray)
        d2r[2, 2, 1] = -(-sb * rax + cb * ray)
        d2r[5, 5, 0] = -rx
        d2r[5, 5, 1] = -ry
        # d2 r / d alpha d beta = -J (dr/dalpha);  J(x, y) = (-y, x)
        d2r[2, 5, 0] = Jr[1, 2]
        d2r[2, 5, 1] = -Jr[0, 2]
        d2r[5, 2, 0] = d2r[2, 5, 0]
        d2r[5, 2, 1] = d2r[2, 5, 1]
        for c in range(2):
            # column c of R(-beta)
            colx = Jr[0, c]
            coly = Jr[1, c]
            # -J col = (coly, -colx)
            d2r[c, 5, 0] = coly
            d2r[c, 5, 1] = -colx
            d2r[5, c, 0] = coly
            d2r[5, c, 1] = -colx
            d2r[3 + c, 5, 0] = -coly
            d2r[3 + c, 5, 1] = colx
            d2r[5, 3 + c, 0] = -coly
            d2r[5, 3 + c, 1] = colx
        for a in range(6):
            gl[a] = Jr[0, a] * grx + Jr[1, a] * gry
        for a in range(6):
            for b in range(6):
                hv = (Jr[0, a] * (h00 * Jr[0, b] + h01 * Jr[1, b])
                      + Jr[1, a] * (h10 * Jr[0, b] + h11 * Jr[1, b]))
                Hl[a, b] = hv + grx * d2r[a, b, 0] + gry * d2r[a, b, 1]
        loc[0] = idx[A, 0]
        loc[1] = idx[A, 1]
        loc[2] = idx[A, 2]
        loc[3] = idx[B, 0]
        loc[4] = idx[B, 1]
        loc[5] = idx[B, 2]
        for a in range(6):
            ia = loc[a]
            if ia < 0:
                continue
            out_g[ia] += gl[a]
            for b in range(6):
                ib = loc[b]
                if ib < 0:
                    continue
                out_H[ia, ib] += Hl[a, b]
    return E_tot, nfail
