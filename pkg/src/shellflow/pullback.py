"""Change-of-variables operator identities on the reference slab.

Index conventions: Jacobians carry the derivative in the second slot,
jac[i, j] = d_j v_i, matching the frame fields (B is the cofactor of the
deformation gradient, A = B B^T / J).  With these conventions

    div v           = (B : grad vb) / J
    grad v          = grad vb . F^{-1} = grad vb . B^T / J
    laplace v_i     = div(A grad vb_i) / J
    grad div v      = rowdiv((B : grad vb) B / J) / J
    grad p(rho)     = a B grad(rb^gamma) / J

where vb and rb are the transformed fields on the fixed grid.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveDensity, ShapeMismatch


@dataclass
class FluidState:
    """Transformed fluid velocity on the reference grid."""

    v: np.ndarray        # (3, N1, N2, N3)
    time: float = 0.0

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)
        if self.v.ndim != 4 or self.v.shape[0] != 3:
            raise ShapeMismatch(f"velocity shape {self.v.shape}")


def _as_velocity(v):
    return v.v if isinstance(v, FluidState) else np.asarray(v, dtype=float)


def pullback_divergence(vbar, frame):
    """Physical divergence of the transformed field: (B : grad vb) / J."""
    v = _as_velocity(vbar)
    frame.grid.check_vector(v)
    jac = frame.grid.jacobian(v)
    return np.einsum("ij...,ij...->...", frame.B, jac) / frame.J


def pullback_gradient(vbar, frame):
    """Physical velocity gradient, out[i, j] = d v_i / d x_j."""
    v = _as_velocity(vbar)
    frame.grid.check_vector(v)
    jac = frame.grid.jacobian(v)
    return np.einsum("ik...,jk...->ij...", jac, frame.B) / frame.J


def pullback_laplacian(vbar, frame):
    """Componentwise physical Laplacian: div(A grad vb_i) / J."""
    v = _as_velocity(vbar)
    frame.grid.check_vector(v)
    g = frame.grid
    out = np.empty_like(v)
    for i in range(3):
        q = np.einsum("jk...,k...->j...", frame.A, g.grad(v[i]))
        out[i] = g.divergence(q) / frame.J
    return out


def pullback_grad_div(vbar, frame):
    """Physical gradient of the divergence via the cofactor identity."""
    v = _as_velocity(vbar)
    frame.grid.check_vector(v)
    g = frame.grid
    w = pullback_divergence(v, frame)          # already (B : grad vb)/J
    M = w[None, None] * frame.B
    return g.matrix_row_divergence(M) / frame.J


def pullback_pressure_gradient(rho, frame, a, gamma):
    """Physical pressure gradient a B grad(rho^gamma) / J."""
    rho = np.asarray(getattr(rho, "rho", rho), dtype=float)
    frame.grid.check_scalar(rho)
    if rho.min() <= 0.0:
        raise NonPositiveDensity(f"min density {rho.min():.3e}")
    g = frame.grid
    gp = g.grad(rho ** gamma)
    return a * np.einsum("ij...,j...->i...", frame.B, gp) / frame.J


def pullback_material_terms(rho, vbar, frame, dv_dt):
    """Transformed material-derivative bundle of the momentum balance.

    Equals d_t(rho v) + div(rho v x v) expressed on the reference grid; the
    time derivative of the transformed velocity is supplied by the caller
    (finite differences between stored snapshots).
    """
    v = _as_velocity(vbar)
    rho = np.asarray(getattr(rho, "rho", rho), dtype=float)
    dv_dt = np.asarray(dv_dt, dtype=float)
    frame.grid.check_vector(v)
    frame.grid.check_vector(dv_dt)
    frame.grid.check_scalar(rho)
    jac = frame.grid.jacobian(v)
    divv = np.einsum("ij...,ij...->...", frame.B, jac) / frame.J
    conv = np.einsum("ij...,j...->i...", jac, frame.V_geo)
    return rho * v * divv + rho * (dv_dt + conv)


def transformed_traction(vbar, rho, frame, mu, lam, a, gamma):
    """Normal-normal traction of the transformed stress bundle on the shell face.

    Returns the scalar field n^T [mu grad(vb) A + ((lam+mu)/J)(B:grad vb) B
    - a rho^gamma B] n evaluated on the top face.
    """
    v = _as_velocity(vbar)
    rho = np.asarray(getattr(rho, "rho", rho), dtype=float)
    g = frame.grid
    jac = g.jacobian(v)
    stress = mu * np.einsum("ik...,kj...->ij...", jac, frame.A)
    w = np.einsum("ij...,ij...->...", frame.B, jac) / frame.J
    stress = stress + (lam + mu) * w[None, None] * frame.B
    stress = stress - a * (rho ** gamma)[None, None] * frame.B
    return stress[2, 2, :, :, -1]


def shell_forcing_equivalence(scenario, shell, vbar, rho, frame, mu, lam, a, gamma):
    """Surface L2 mismatch between the two traction evaluations of the shell load.

    The physical side evaluates the full Newtonian Cauchy stress on the
    deformed surface; the transformed side evaluates the fixed-domain stress
    bundle.  They agree for kinematically coupled states, where tangential
    surface derivatives of the trace vanish.
    """
    from .geometry import deformed_surface_data

    v = _as_velocity(vbar)
    rho = np.asarray(getattr(rho, "rho", rho), dtype=float)
    g = frame.grid

    # physical side: -n^T (tau n_eta) |d1 phi x d2 phi| with tau from the
    # symmetrized viscous stress and the isentropic pressure
    gradv = pullback_gradient(v, frame)[..., -1]       # (3, 3, N1, N2) on the face
    divv = np.trace(gradv, axis1=0, axis2=1)
    sym = 0.5 * (gradv + gradv.transpose(1, 0, 2, 3))
    eye = np.eye(3)[:, :, None, None]
    S = 2.0 * mu * (sym - divv[None, None] / 3.0 * eye) \
        + (lam + 2.0 * mu / 3.0) * divv[None, None] * eye
    tau = S - a * (rho[..., -1] ** gamma)[None, None] * eye
    n_eta, factor = deformed_surface_data(scenario, shell, g)
    tn = np.einsum("ij...,j...->i...", tau, n_eta)
    physical = -tn[2] * factor

    # transformed side: the eta-frame bundle (the eta0 reference parts of the
    # source split cancel identically)
    transformed = -transformed_traction(v, rho, frame, mu, lam, a, gamma)

    return g.surf_l2_norm(physical - transformed)
