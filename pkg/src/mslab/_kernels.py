"""Hot numeric kernels: stencil application and gauge segment integrals.

Every public function here dispatches on the active backend (see _backend).
The numpy fallbacks are the reference implementations; the numba versions are
plain loop transcriptions of the same arithmetic.
"""

import numpy as np

from ._backend import HAVE_NUMBA

# --------------------------------------------------------------------------
# operator stencil: (H u)(x) = sum_j (2 u(x) - conj(U_j(x-e)) u(x-e)
#                                     - U_j(x) u(x+e)) / h^2 + (V+shift) u(x)
# with u = 0 outside the box.
# --------------------------------------------------------------------------


def _apply_h_numpy(u, links, vps, h):
    n = u.ndim
    inv_h2 = 1.0 / (h * h)
    out = (2.0 * n * inv_h2 + vps) * u
    for j in range(n):
        U = links[j]
        dst = [slice(None)] * n
        src = [slice(None)] * n
        dst[j] = slice(0, -1)
        src[j] = slice(1, None)
        fwd = np.zeros_like(u)
        fwd[tuple(dst)] = U[tuple(dst)] * u[tuple(src)]
        bwd = np.zeros_like(u)
        bwd[tuple(src)] = np.conj(U[tuple(dst)]) * u[tuple(dst)]
        out -= (fwd + bwd) * inv_h2
    return out


if HAVE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _apply_h_2d_numba(u, U0, U1, vps, inv_h2):  # pragma: no cover - jit
        n0, n1 = u.shape
        out = np.empty_like(u)
        for i in range(n0):
            for j in range(n1):
                acc = (4.0 * inv_h2 + vps[i, j]) * u[i, j]
                if i + 1 < n0:
                    acc -= U0[i, j] * u[i + 1, j] * inv_h2
                if i > 0:
                    acc -= np.conj(U0[i - 1, j]) * u[i - 1, j] * inv_h2
                if j + 1 < n1:
                    acc -= U1[i, j] * u[i, j + 1] * inv_h2
                if j > 0:
                    acc -= np.conj(U1[i, j - 1]) * u[i, j - 1] * inv_h2
                out[i, j] = acc
        return out

    @njit(cache=True)
    def _apply_h_3d_numba(u, U0, U1, U2, vps, inv_h2):  # pragma: no cover
        n0, n1, n2 = u.shape
        out = np.empty_like(u)
        for i in range(n0):
            for j in range(n1):
                for k in range(n2):
                    acc = (6.0 * inv_h2 + vps[i, j, k]) * u[i, j, k]
                    if i + 1 < n0:
                        acc -= U0[i, j, k] * u[i + 1, j, k] * inv_h2
                    if i > 0:
                        acc -= np.conj(U0[i - 1, j, k]) * u[i - 1, j, k] * inv_h2
                    if j + 1 < n1:
                        acc -= U1[i, j, k] * u[i, j + 1, k] * inv_h2
                    if j > 0:
                        acc -= np.conj(U1[i, j - 1, k]) * u[i, j - 1, k] * inv_h2
                    if k + 1 < n2:
                        acc -= U2[i, j, k] * u[i, j, k + 1] * inv_h2
                    if k > 0:
                        acc -= np.conj(U2[i, j, k - 1]) * u[i, j, k - 1] * inv_h2
                    out[i, j, k] = acc
        return out


def apply_h(u, links, vps, h):
    """Apply the discrete magnetic Schrodinger stencil to a complex array."""
    if HAVE_NUMBA and u.ndim == 2:
        return _apply_h_2d_numba(u, links[0], links[1], vps, 1.0 / (h * h))
    if HAVE_NUMBA and u.ndim == 3:
        return _apply_h_3d_numba(u, links[0], links[1], links[2], vps, 1.0 / (h * h))
    return _apply_h_numpy(u, links, vps, h)


def apply_h_numpy(u, links, vps, h):
    """Reference numpy path, exposed for the backend equivalence tests."""
    return _apply_h_numpy(u, links, vps, h)


def apply_l(u, link_j, axis, h):
    """Forward covariant difference L_j u = (U_j(x) u(x+he_j) - u(x)) / (ih)."""
    n = u.ndim
    dst = [slice(None)] * n
    src = [slice(None)] * n
    dst[axis] = slice(0, -1)
    src[axis] = slice(1, None)
    shifted = np.zeros_like(u)
    shifted[tuple(dst)] = u[tuple(src)]
    return (link_j * shifted - u) / (1j * h)


def apply_l_adj(v, link_j, axis, h):
    """Adjoint of apply_l: (i/h) (conj(U_j(x-e)) v(x-e) - v(x))."""
    n = v.ndim
    dst = [slice(None)] * n
    src = [slice(None)] * n
    dst[axis] = slice(1, None)
    src[axis] = slice(0, -1)
    shifted = np.zeros_like(v)
    shifted[tuple(dst)] = np.conj(link_j[tuple(src)]) * v[tuple(src)]
    return (shifted - v) * (1j / h)


# --------------------------------------------------------------------------
# gauge segment integrals (2D): for every cube point x, average over cube
# points y of (x_k - y_k)-weighted line integrals of the field components
# along the segment y -> x, with Gauss-Legendre nodes in t and bilinear
# interpolation of grid samples at cell centers.
# --------------------------------------------------------------------------


def _bilinear_numpy(field, px, py, h):
    n0, n1 = field.shape
    u = px / h - 0.5
    v = py / h - 0.5
    i = np.clip(np.floor(u).astype(np.int64), 0, n0 - 2)
    j = np.clip(np.floor(v).astype(np.int64), 0, n1 - 2)
    fu = np.clip(u - i, 0.0, 1.0)
    fv = np.clip(v - j, 0.0, 1.0)
    return (
        field[i, j] * (1 - fu) * (1 - fv)
        + field[i + 1, j] * fu * (1 - fv)
        + field[i, j + 1] * (1 - fu) * fv
        + field[i + 1, j + 1] * fu * fv
    )


def _gauge_pair_2d_numpy(b12, a1, a2, i0, i1, j0, j1, h, tn, tw):
    m0 = i1 - i0
    m1 = j1 - j0
    xs1 = (np.arange(i0, i1) + 0.5) * h
    xs2 = (np.arange(j0, j1) + 0.5) * h
    y1, y2 = np.meshgrid(xs1, xs2, indexing="ij")
    y1 = y1.ravel()
    y2 = y2.ravel()
    npts = y1.size
    h1 = np.zeros((m0, m1))
    h2 = np.zeros((m0, m1))
    phi = np.zeros((m0, m1))
    for ix in range(m0):
        for jx in range(m1):
            x1 = xs1[ix]
            x2 = xs2[jx]
            d1 = x1 - y1
            d2 = x2 - y2
            ib = np.zeros(npts)
            ja1 = np.zeros(npts)
            ja2 = np.zeros(npts)
            for q in range(tn.size):
                t = tn[q]
                w = tw[q]
                px = y1 + t * d1
                py = y2 + t * d2
                ib += w * t * _bilinear_numpy(b12, px, py, h)
                ja1 += w * _bilinear_numpy(a1, px, py, h)
                ja2 += w * _bilinear_numpy(a2, px, py, h)
            h1[ix, jx] = np.sum(d2 * ib) / npts
            h2[ix, jx] = -np.sum(d1 * ib) / npts
            phi[ix, jx] = np.sum(d1 * ja1 + d2 * ja2) / npts
    return h1, h2, phi


if HAVE_NUMBA:

    @njit(cache=True, inline="always")
    def _bilinear_numba(field, px, py, h):  # pragma: no cover - jit
        n0, n1 = field.shape
        u = px / h - 0.5
        v = py / h - 0.5
        i = int(np.floor(u))
        j = int(np.floor(v))
        if i < 0:
            i = 0
        if i > n0 - 2:
            i = n0 - 2
        if j < 0:
            j = 0
        if j > n1 - 2:
            j = n1 - 2
        fu = u - i
        if fu < 0.0:
            fu = 0.0
        if fu > 1.0:
            fu = 1.0
        fv = v - j
        if fv < 0.0:
            fv = 0.0
        if fv > 1.0:
            fv = 1.0
        return (
            field[i, j] * (1 - fu) * (1 - fv)
            + field[i + 1, j] * fu * (1 - fv)
            + field[i, j + 1] * (1 - fu) * fv
            + field[i + 1, j + 1] * fu * fv
        )

    @njit(cache=True)
    def _gauge_pair_2d_numba(b12, a1, a2, i0, i1, j0, j1, h, tn, tw):  # pragma: no cover
        m0 = i1 - i0
        m1 = j1 - j0
        npts = m0 * m1
        h1 = np.zeros((m0, m1))
        h2 = np.zeros((m0, m1))
        phi = np.zeros((m0, m1))
        for ix in range(m0):
            x1 = (i0 + ix + 0.5) * h
            for jx in range(m1):
                x2 = (j0 + jx + 0.5) * h
                acc1 = 0.0
                acc2 = 0.0
                accp = 0.0
                for iy in range(m0):
                    y1 = (i0 + iy + 0.5) * h
                    for jy in range(m1):
                        y2 = (j0 + jy + 0.5) * h
                        d1 = x1 - y1
                        d2 = x2 - y2
                        ib = 0.0
                        ja1 = 0.0
                        ja2 = 0.0
                        for q in range(tn.size):
                            t = tn[q]
                            w = tw[q]
                            px = y1 + t * d1
                            py = y2 + t * d2
                            ib += w * t * _bilinear_numba(b12, px, py, h)
                            ja1 += w * _bilinear_numba(a1, px, py, h)
                            ja2 += w * _bilinear_numba(a2, px, py, h)
                        acc1 += d2 * ib
                        acc2 -= d1 * ib
                        accp += d1 * ja1 + d2 * ja2
                h1[ix, jx] = acc1 / npts
                h2[ix, jx] = acc2 / npts
                phi[ix, jx] = accp / npts
        return h1, h2, phi


def gauge_pair_2d(b12, a1, a2, window, h, tn, tw):
    """Gauge vector (h1, h2) and phase phi on a 2D cube window.

    window is ((i0, i1), (j0, j1)) of half-open cell index ranges.
    """
    (i0, i1), (j0, j1) = window
    if HAVE_NUMBA:
        return _gauge_pair_2d_numba(b12, a1, a2, i0, i1, j0, j1, h, tn, tw)
    return _gauge_pair_2d_numpy(b12, a1, a2, i0, i1, j0, j1, h, tn, tw)


def gauge_pair_2d_numpy(b12, a1, a2, window, h, tn, tw):
    """Reference numpy path, exposed for backend equivalence tests."""
    (i0, i1), (j0, j1) = window
    return _gauge_pair_2d_numpy(b12, a1, a2, i0, i1, j0, j1, h, tn, tw)
