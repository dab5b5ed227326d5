"""Off-grid field evaluation on the periodic slab.

Two interpolators are provided:

* ``tricubic``: local 4-point Lagrange interpolation per axis (periodic wrap
  laterally, clamped stencil vertically).  Used on the hot path of the
  characteristic tracer; jitted with numba when available.
* ``spectral_vertical_cubic``: exact trigonometric evaluation in the two
  periodic directions combined with cubic Lagrange across vertical levels.
  Used when density fields are sampled at departure points.

Points are passed in physical coordinates; both interpolators convert to
fractional index coordinates internally.
"""

import os

import numpy as np

from .errors import InterpolationOutOfDomain

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


def _lagrange_weights(t):
    """Weights of 4-point Lagrange interpolation at offsets (-1, 0, 1, 2)."""
    w0 = -t * (t - 1.0) * (t - 2.0) / 6.0
    w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
    w2 = -(t + 1.0) * t * (t - 2.0) / 2.0
    w3 = (t + 1.0) * t * (t - 1.0) / 6.0
    return w0, w1, w2, w3


if _HAVE_NUMBA:

    @numba.njit(parallel=True)
    def _tricubic_kernel(F, q1, q2, q3):  # pragma: no cover - jitted
        nf, N1, N2, N3 = F.shape
        M = q1.size
        out = np.zeros((nf, M))
        for m in numba.prange(M):
            i1 = int(np.floor(q1[m]))
            t1 = q1[m] - i1
            i2 = int(np.floor(q2[m]))
            t2 = q2[m] - i2
            i3 = int(np.floor(q3[m]))
            if i3 < 1:
                i3 = 1
            if i3 > N3 - 3:
                i3 = N3 - 3
            t3 = q3[m] - i3
            w1 = np.empty(4)
            w2 = np.empty(4)
            w3 = np.empty(4)
            for k in range(3):
                t = t1 if k == 0 else (t2 if k == 1 else t3)
                w = w1 if k == 0 else (w2 if k == 1 else w3)
                w[0] = -t * (t - 1.0) * (t - 2.0) / 6.0
                w[1] = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
                w[2] = -(t + 1.0) * t * (t - 2.0) / 2.0
                w[3] = (t + 1.0) * t * (t - 1.0) / 6.0
            for f in range(nf):
                acc = 0.0
                for d1 in range(4):
                    a1 = (i1 + d1 - 1) % N1
                    for d2 in range(4):
                        a2 = (i2 + d2 - 1) % N2
                        s = 0.0
                        for d3 in range(4):
                            s += w3[d3] * F[f, a1, a2, i3 + d3 - 1]
                        acc += w1[d1] * w2[d2] * s
                out[f, m] = acc
        return out

else:

    def _tricubic_kernel(F, q1, q2, q3):
        nf, N1, N2, N3 = F.shape
        i1 = np.floor(q1).astype(np.int64)
        i2 = np.floor(q2).astype(np.int64)
        i3 = np.clip(np.floor(q3).astype(np.int64), 1, N3 - 3)
        W1 = _lagrange_weights(q1 - i1)
        W2 = _lagrange_weights(q2 - i2)
        W3 = _lagrange_weights(q3 - i3)
        Fflat = F.reshape(nf, -1)
        out = np.zeros((nf, q1.size))
        for d1 in range(4):
            a1 = (i1 + d1 - 1) % N1
            for d2 in range(4):
                a2 = (i2 + d2 - 1) % N2
                base = (a1 * N2 + a2) * N3 + (i3 - 1)
                block = (W3[0] * Fflat[:, base] + W3[1] * Fflat[:, base + 1]
                         + W3[2] * Fflat[:, base + 2] + W3[3] * Fflat[:, base + 3])
                out += (W1[d1] * W2[d2]) * block
        return out


def tricubic(fields, grid, pts, vertical_slack=1e-9):
    """Evaluate stacked scalar fields (nf, N1, N2, N3) at physical points (3, M).

    Lateral coordinates wrap periodically; vertical coordinates must lie in
    [0, Hz] up to ``vertical_slack`` (clamped), otherwise
    InterpolationOutOfDomain is raised.
    """
    fields = np.ascontiguousarray(fields, dtype=np.float64)
    single = fields.ndim == 3
    if single:
        fields = fields[None]
    pts = np.asarray(pts, dtype=np.float64)
    x3 = pts[2]
    if x3.min() < -vertical_slack or x3.max() > grid.Hz + vertical_slack:
        worst = max(-x3.min(), x3.max() - grid.Hz)
        raise InterpolationOutOfDomain(f"vertical coordinate out of domain by {worst:.3e}")
    q1 = pts[0] / grid.P1 * grid.N1
    q2 = pts[1] / grid.P2 * grid.N2
    q3 = np.clip(x3, 0.0, grid.Hz) / grid.h3
    shape = pts.shape[1:]
    out = _tricubic_kernel(fields, q1.ravel(), q2.ravel(), q3.ravel())
    out = out.reshape((fields.shape[0],) + shape)
    return out[0] if single else out


def spectral_vertical_cubic(field, grid, pts, vertical_slack=1e-9, chunk=2048):
    """Evaluate one scalar field at scattered points.

    Exact Fourier evaluation laterally, cubic Lagrange across the four nearest
    vertical levels.  Exact (to roundoff) for laterally band-limited fields at
    on-level points.
    """
    grid.check_scalar(field)
    pts = np.asarray(pts, dtype=np.float64)
    x3 = pts[2]
    if x3.min() < -vertical_slack or x3.max() > grid.Hz + vertical_slack:
        worst = max(-x3.min(), x3.max() - grid.Hz)
        raise InterpolationOutOfDomain(f"vertical coordinate out of domain by {worst:.3e}")
    shape = pts.shape[1:]
    y1 = pts[0].ravel()
    y2 = pts[1].ravel()
    q3 = np.clip(x3, 0.0, grid.Hz).ravel() / grid.h3

    C = np.fft.fft2(field, axes=(0, 1)) / (grid.N1 * grid.N2)  # (N1, N2, N3)
    i3 = np.clip(np.floor(q3).astype(np.int64), 1, grid.N3 - 3)
    W3 = np.stack(_lagrange_weights(q3 - i3))  # (4, M)

    M = y1.size
    out = np.empty(M)
    k1 = 2.0 * np.pi * np.fft.fftfreq(grid.N1, d=grid.P1 / grid.N1)
    k2 = 2.0 * np.pi * np.fft.fftfreq(grid.N2, d=grid.P2 / grid.N2)
    for lo in range(0, M, chunk):
        hi = min(lo + chunk, M)
        sl = slice(lo, hi)
        # vertical blend of lateral coefficient slabs, per point
        Cp = (W3[0, sl, None, None] * C[:, :, i3[sl] - 1].transpose(2, 0, 1)
              + W3[1, sl, None, None] * C[:, :, i3[sl]].transpose(2, 0, 1)
              + W3[2, sl, None, None] * C[:, :, i3[sl] + 1].transpose(2, 0, 1)
              + W3[3, sl, None, None] * C[:, :, i3[sl] + 2].transpose(2, 0, 1))
        E1 = np.exp(1j * np.outer(y1[sl], k1))
        E2 = np.exp(1j * np.outer(y2[sl], k2))
        out[sl] = np.einsum("pa,pab,pb->p", E1, Cp, E2).real
    return out.reshape(shape)
