"""Reference-slab grid and discrete differential operators.

The reference domain is the periodic slab T^2(P1, P2) x (0, Hz).  Lateral
directions are differentiated spectrally (FFT), the vertical direction with
4th-order centered finite differences closed by one-sided 4th-order stencils
at the two faces.  Scalar fields have shape (N1, N2, N3); vectors carry a
leading component axis (3, N1, N2, N3), matrices two (3, 3, N1, N2, N3).
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import OrderUnsupported, ShapeMismatch


def _d3_matrix(n, h):
    """4th-order first-derivative matrix on a uniform grid with n >= 6 points."""
    D = np.zeros((n, n))
    c = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * h)
    for i in range(2, n - 2):
        D[i, i - 2:i + 3] = c
    e0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12.0 * h)
    e1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / (12.0 * h)
    D[0, :5] = e0
    D[1, :5] = e1
    D[-1, -5:] = -e0[::-1]
    D[-2, -5:] = -e1[::-1]
    return D


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid on the periodic slab."""

    P1: float = 1.0
    P2: float = 1.0
    Hz: float = 1.0
    N1: int = 32
    N2: int = 32
    N3: int = 32

    def __post_init__(self):
        if min(self.N1, self.N2) < 4 or self.N3 < 6:
            raise ShapeMismatch(f"grid too small: {self.N1}x{self.N2}x{self.N3}")
        if min(self.P1, self.P2, self.Hz) <= 0:
            raise ShapeMismatch("periods and height must be positive")

    # --- coordinates ---------------------------------------------------------

    @cached_property
    def x1(self):
        return np.arange(self.N1) * (self.P1 / self.N1)

    @cached_property
    def x2(self):
        return np.arange(self.N2) * (self.P2 / self.N2)

    @cached_property
    def x3(self):
        return np.linspace(0.0, self.Hz, self.N3)

    @property
    def h3(self):
        return self.Hz / (self.N3 - 1)

    def mesh(self):
        return np.meshgrid(self.x1, self.x2, self.x3, indexing="ij")

    def surface_mesh(self):
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    # --- spectral wavenumbers (angular) ---------------------------------------

    @cached_property
    def k1(self):
        k = 2.0 * np.pi * np.fft.fftfreq(self.N1, d=self.P1 / self.N1)
        if self.N1 % 2 == 0:
            k = k.copy()
            k[self.N1 // 2] = 0.0  # drop the unpaired Nyquist mode in odd derivatives
        return k

    @cached_property
    def k2(self):
        k = 2.0 * np.pi * np.fft.fftfreq(self.N2, d=self.P2 / self.N2)
        if self.N2 % 2 == 0:
            k = k.copy()
            k[self.N2 // 2] = 0.0
        return k

    @cached_property
    def D3(self):
        return _d3_matrix(self.N3, self.h3)

    # --- derivatives -----------------------------------------------------------

    def dx1(self, f):
        f = np.asarray(f)
        ax = f.ndim - 3
        fh = np.fft.fft(f, axis=ax)
        shape = [1] * f.ndim
        shape[ax] = self.N1
        fh *= (1j * self.k1).reshape(shape)
        return np.fft.ifft(fh, axis=ax).real

    def dx2(self, f):
        f = np.asarray(f)
        ax = f.ndim - 2
        fh = np.fft.fft(f, axis=ax)
        shape = [1] * f.ndim
        shape[ax] = self.N2
        fh *= (1j * self.k2).reshape(shape)
        return np.fft.ifft(fh, axis=ax).real

    def dx3(self, f):
        f = np.asarray(f)
        return np.einsum("ij,...j->...i", self.D3, f)

    def deriv(self, f, axis):
        if axis == 0:
            return self.dx1(f)
        if axis == 1:
            return self.dx2(f)
        if axis == 2:
            return self.dx3(f)
        raise OrderUnsupported(f"axis {axis}")

    def grad(self, f):
        """Gradient of a scalar field, shape (3,) + f.shape."""
        return np.stack([self.dx1(f), self.dx2(f), self.dx3(f)])

    def jacobian(self, v):
        """Jacobian of a vector field: out[i, j] = d_j v_i."""
        if v.shape[0] != 3:
            raise ShapeMismatch("vector field must have leading component axis 3")
        return np.stack([self.dx1(v), self.dx2(v), self.dx3(v)], axis=1)

    def divergence(self, v):
        return self.dx1(v[0]) + self.dx2(v[1]) + self.dx3(v[2])

    def matrix_row_divergence(self, M):
        """Row-wise divergence of a matrix field: out[i] = sum_j d_j M[i, j]."""
        if M.shape[:2] != (3, 3):
            raise ShapeMismatch("matrix field must have leading shape (3, 3)")
        return self.dx1(M[:, 0]) + self.dx2(M[:, 1]) + self.dx3(M[:, 2])

    def laplacian(self, f):
        return self.dx1(self.dx1(f)) + self.dx2(self.dx2(f)) + self.dx3(self.dx3(f))

    # --- surface (omega) operators ----------------------------------------------

    def surf_dx1(self, f):
        fh = np.fft.fft(f, axis=f.ndim - 2)
        shape = [1] * f.ndim
        shape[f.ndim - 2] = self.N1
        fh *= (1j * self.k1).reshape(shape)
        return np.fft.ifft(fh, axis=f.ndim - 2).real

    def surf_dx2(self, f):
        fh = np.fft.fft(f, axis=f.ndim - 1)
        shape = [1] * f.ndim
        shape[f.ndim - 1] = self.N2
        fh *= (1j * self.k2).reshape(shape)
        return np.fft.ifft(fh, axis=f.ndim - 1).real

    def surf_grad(self, f):
        return np.stack([self.surf_dx1(f), self.surf_dx2(f)])

    def surf_laplacian(self, f):
        return self.surf_dx1(self.surf_dx1(f)) + self.surf_dx2(self.surf_dx2(f))

    # --- quadrature ----------------------------------------------------------------

    @cached_property
    def w3(self):
        """Trapezoidal vertical weights.

        Trapezoid is spectrally exact for products of the Dirichlet sine modes
        (their periodic even extensions kill every Euler-Maclaurin boundary
        term), which the modal mass-matrix identities rely on.
        """
        w = np.full(self.N3, self.h3)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    @property
    def lateral_weight(self):
        return self.P1 * self.P2 / (self.N1 * self.N2)

    def integrate(self, f):
        """Volume integral over the slab (exact lateral mean, trapezoid vertical)."""
        if f.shape[-3:] != (self.N1, self.N2, self.N3):
            raise ShapeMismatch(f"field shape {f.shape} does not match grid")
        return self.lateral_weight * np.einsum("...ijk,k->...", f, self.w3)

    def surf_integrate(self, f):
        if f.shape[-2:] != (self.N1, self.N2):
            raise ShapeMismatch(f"surface field shape {f.shape} does not match grid")
        return self.lateral_weight * f.sum(axis=(-2, -1))

    def l2_norm(self, f):
        sq = np.asarray(f) ** 2
        while sq.ndim > 3:
            sq = sq.sum(axis=0)
        return float(np.sqrt(self.integrate(sq)))

    def surf_l2_norm(self, f):
        sq = np.asarray(f) ** 2
        while sq.ndim > 2:
            sq = sq.sum(axis=0)
        return float(np.sqrt(self.surf_integrate(sq)))

    # --- compatibility helpers ---------------------------------------------------

    def check_scalar(self, f):
        if np.shape(f) != (self.N1, self.N2, self.N3):
            raise ShapeMismatch(f"expected scalar field {(self.N1, self.N2, self.N3)}, got {np.shape(f)}")

    def check_vector(self, f):
        if np.shape(f) != (3, self.N1, self.N2, self.N3):
            raise ShapeMismatch(f"expected vector field, got {np.shape(f)}")

    def check_surface(self, f):
        if np.shape(f) != (self.N1, self.N2):
            raise ShapeMismatch(f"expected surface field {(self.N1, self.N2)}, got {np.shape(f)}")

    def same_grid(self, other):
        return (self.P1, self.P2, self.Hz, self.N1, self.N2, self.N3) == \
            (other.P1, other.P2, other.Hz, other.N1, other.N2, other.N3)

    def refine(self, lateral=1, vertical=1):
        return GridSpec(self.P1, self.P2, self.Hz,
                        self.N1 * lateral, self.N2 * lateral,
                        (self.N3 - 1) * vertical + 1)
