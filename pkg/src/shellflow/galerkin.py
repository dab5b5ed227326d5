"""Regularized Galerkin solver for the linearized momentum-structure system.

Modal semi-discretization on the fixed reference slab: shell displacements
use zero-mean real Fourier modes on the periodic surface, the fluid velocity
uses Dirichlet eigenmodes in the interior plus lifted boundary modes whose
top-face trace reproduces the shell modes, so the kinematic interface
condition holds exactly at the discrete level.  A structural corrector
eps * d_t(bilaplacian eta) damps the highest shell derivatives.

The boundary rows of the momentum equations and the shell equations are
combined (the discrete traction pairings cancel), leaving one monolithic
first-order linear system stepped by Crank-Nicolson.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (IncompatibleData, InsufficientSnapshots, MaxIterExceeded,
                     NoContraction, NonPositiveDensity, ShapeMismatch,
                     SingularSolve, UnderResolved)
from .geometry import ShellState, build_frame
from .norms import s_norm, time_derivative


@dataclass(frozen=True)
class Physics:
    """Fluid constants: shear/bulk viscosities and the isentropic pressure law."""

    mu: float = 1.0
    lam: float = 0.0
    a: float = 1.0
    gamma: float = 1.4

    def __post_init__(self):
        if self.mu <= 0.0:
            raise ShapeMismatch("mu must be positive")
        if self.lam + 2.0 * self.mu / 3.0 < 0.0:
            raise ShapeMismatch("lam + 2 mu / 3 must be nonnegative")
        if self.a <= 0.0 or self.gamma <= 1.0:
            raise ShapeMismatch("need a > 0 and gamma > 1")


def lift_profile(x3, Hz):
    """Smooth vertical lifting: 1 with zero slope at the shell face, 0 with zero slope at the bottom."""
    return x3 ** 2 * (3.0 * Hz - 2.0 * x3) / Hz ** 3


def lift_profile_deriv(x3, Hz):
    return 6.0 * x3 * (Hz - x3) / Hz ** 3


# --- basis -----------------------------------------------------------------------


@dataclass
class ModalBasis:
    """Shell surface modes plus interior and lifted velocity modes."""

    grid: object
    n_shell: int
    n_interior: int
    shell_vals: np.ndarray       # (Ns, N1, N2)
    shell_wavevectors: np.ndarray  # (Ns, 2) integer mode indices
    shell_k2: np.ndarray         # (Ns,) squared angular wavenumbers
    Lambda: np.ndarray           # (N, 3, N1, N2, N3)
    grad_Lambda: np.ndarray      # (N, 3, 3, N1, N2, N3)

    @property
    def n_total(self):
        return self.n_shell + self.n_interior

    @property
    def boundary_indices(self):
        return np.arange(self.n_shell)

    def velocity_field(self, a):
        return np.einsum("n,nc...->c...", a, self.Lambda)

    def eta_field(self, q):
        return np.einsum("n,n...->...", q, self.shell_vals)

    def project_shell(self, f):
        """L2(omega) coefficients of a surface field in the shell modes."""
        return self.grid.lateral_weight * np.einsum("nxy,xy->n", self.shell_vals, f)

    def project_interior(self, v):
        """L2(Omega) coefficients of a velocity field in the interior modes."""
        w = self.grid.lateral_weight * self.grid.w3
        return np.einsum("ncxyk,cxyk,k->n", self.Lambda[self.n_shell:], v, w)


def _shell_mode_table(n_shell, grid):
    """Half-lattice wavevectors ordered by |k|^2, constant mode excluded.

    n_shell=None returns every mode the grid resolves at 4 points per wavelength.
    """
    cand = []
    m1max = grid.N1 // 4
    m2max = grid.N2 // 4
    for m1 in range(0, m1max + 1):
        for m2 in range(-m2max, m2max + 1):
            if m1 == 0 and m2 <= 0:
                continue
            k2 = (2.0 * np.pi * m1 / grid.P1) ** 2 + (2.0 * np.pi * m2 / grid.P2) ** 2
            cand.append((k2, m1, m2))
    cand.sort(key=lambda c: (c[0], c[1], c[2]))
    table = []
    for k2, m1, m2 in cand:
        table.append((k2, m1, m2, "cos"))
        table.append((k2, m1, m2, "sin"))
        if n_shell is not None and len(table) >= n_shell:
            break
    if n_shell is None:
        return table
    if len(table) < n_shell:
        raise UnderResolved(f"grid supports only {len(table)} shell modes, requested {n_shell}")
    return table[:n_shell]


def _interior_mode_table(n_interior, grid):
    cand = []
    m1max = grid.N1 // 4
    m2max = grid.N2 // 4
    m3max = max((grid.N3 - 1) // 4, 1)
    for m3 in range(1, m3max + 1):
        lam3 = (np.pi * m3 / grid.Hz) ** 2
        cand.append((lam3, 0, 0, "const", m3))
        for m1 in range(0, m1max + 1):
            for m2 in range(-m2max, m2max + 1):
                if m1 == 0 and m2 <= 0:
                    continue
                k2 = (2.0 * np.pi * m1 / grid.P1) ** 2 + (2.0 * np.pi * m2 / grid.P2) ** 2
                cand.append((k2 + lam3, m1, m2, "cos", m3))
                cand.append((k2 + lam3, m1, m2, "sin", m3))
    cand.sort(key=lambda c: (c[0], c[4], c[1], c[2], c[3]))
    table = []
    for ev, m1, m2, kind, m3 in cand:
        for d in range(3):
            table.append((ev, m1, m2, kind, m3, d))
        if len(table) >= n_interior:
            break
    if len(table) < n_interior:
        raise UnderResolved(f"grid supports only {len(table)} interior modes, requested {n_interior}")
    return table[:n_interior]


def _lateral_mode(kind, m1, m2, grid):
    """Orthonormal lateral profile and its two analytic derivatives."""
    Y1, Y2 = grid.surface_mesh()
    area = grid.P1 * grid.P2
    k1 = 2.0 * np.pi * m1 / grid.P1
    k2 = 2.0 * np.pi * m2 / grid.P2
    phase = k1 * Y1 + k2 * Y2
    if kind == "const":
        one = np.ones_like(Y1)
        return one / np.sqrt(area), np.zeros_like(Y1), np.zeros_like(Y1)
    amp = np.sqrt(2.0 / area)
    if kind == "cos":
        v = amp * np.cos(phase)
        return v, -amp * k1 * np.sin(phase), -amp * k2 * np.sin(phase)
    v = amp * np.sin(phase)
    return v, amp * k1 * np.cos(phase), amp * k2 * np.cos(phase)


def build_basis(n_shell, n_interior, grid, scenario=None):
    """Construct shell, lifted, and interior modes with analytic gradients."""
    if n_shell < 1 or n_interior < 1:
        raise UnderResolved("need at least one shell and one interior mode")
    Hz = grid.Hz
    shell_table = _shell_mode_table(n_shell, grid)
    interior_table = _interior_mode_table(n_interior, grid)

    Ns = n_shell
    N = Ns + n_interior
    shell_vals = np.empty((Ns, grid.N1, grid.N2))
    shell_k2 = np.empty(Ns)
    wavevecs = np.empty((Ns, 2), dtype=int)
    Lambda = np.zeros((N, 3, grid.N1, grid.N2, grid.N3))
    grad = np.zeros((N, 3, 3, grid.N1, grid.N2, grid.N3))

    gz = lift_profile(grid.x3, Hz)
    gzp = lift_profile_deriv(grid.x3, Hz)
    for j, (k2, m1, m2, kind) in enumerate(shell_table):
        psi, d1, d2 = _lateral_mode(kind, m1, m2, grid)
        shell_vals[j] = psi
        shell_k2[j] = k2
        wavevecs[j] = (m1, m2)
        Lambda[j, 2] = psi[:, :, None] * gz[None, None, :]
        grad[j, 2, 0] = d1[:, :, None] * gz[None, None, :]
        grad[j, 2, 1] = d2[:, :, None] * gz[None, None, :]
        grad[j, 2, 2] = psi[:, :, None] * gzp[None, None, :]

    for j, (ev, m1, m2, kind, m3, d) in enumerate(interior_table):
        chi, d1, d2 = _lateral_mode(kind, m1, m2, grid)
        V = np.sqrt(2.0 / Hz) * np.sin(m3 * np.pi * grid.x3 / Hz)
        Vp = np.sqrt(2.0 / Hz) * (m3 * np.pi / Hz) * np.cos(m3 * np.pi * grid.x3 / Hz)
        i = Ns + j
        Lambda[i, d] = chi[:, :, None] * V[None, None, :]
        grad[i, d, 0] = d1[:, :, None] * V[None, None, :]
        grad[i, d, 1] = d2[:, :, None] * V[None, None, :]
        grad[i, d, 2] = chi[:, :, None] * Vp[None, None, :]

    return ModalBasis(grid, n_shell, n_interior, shell_vals, wavevecs, shell_k2,
                      Lambda, grad)


# --- assembly ---------------------------------------------------------------------


@dataclass
class GalerkinSystem:
    basis: ModalBasis
    frame0: object
    rho0: object
    physics: Physics
    eps: float
    M_v: np.ndarray
    K_v: np.ndarray
    T_omega: np.ndarray
    M_eta: np.ndarray
    D_eta: np.ndarray
    K_eta: np.ndarray
    C_eta: np.ndarray
    R_eta: np.ndarray
    _lu: dict = field(default_factory=dict)

    @property
    def n_total(self):
        return self.basis.n_total

    @property
    def n_shell(self):
        return self.basis.n_shell

    def reduced_operators(self):
        """Monolithic (a, q) system with the boundary rows combined."""
        N, Ns = self.n_total, self.n_shell
        E = np.zeros((N + Ns, N + Ns))
        E[:N, :N] = self.M_v
        E[:Ns, :Ns] += self.M_eta
        E[N:, N:] = np.eye(Ns)
        S = np.zeros((N + Ns, N + Ns))
        S[:N, :N] = self.K_v
        S[:Ns, :Ns] += self.D_eta + self.eps * self.C_eta
        S[:Ns, N:] += self.K_eta
        S[N:, :Ns] = -np.eye(Ns)
        return E, S

    def stepper(self, dt):
        key = round(float(dt), 15)
        if key not in self._lu:
            E, S = self.reduced_operators()
            try:
                lu = scipy.linalg.lu_factor(E + 0.5 * dt * S)
            except scipy.linalg.LinAlgError as exc:
                raise SingularSolve(str(exc)) from exc
            self._lu[key] = (lu, E - 0.5 * dt * S)
        return self._lu[key]


def quad_weights(grid):
    """Volume quadrature weight field (lateral exact mean, trapezoid vertical)."""
    return grid.lateral_weight * np.broadcast_to(grid.w3, (grid.N1, grid.N2, grid.N3))


def assemble_system(basis, frame0, rho0, physics, eps):
    """Grid-quadrature assembly of all mass, stiffness, damping, and pairing matrices."""
    g = basis.grid
    if rho0.rho.min() <= 0.0:
        raise NonPositiveDensity("initial density must be positive")
    mu, lam = physics.mu, physics.lam
    W = quad_weights(g)
    N, Ns = basis.n_total, basis.n_shell

    weight = (frame0.J * rho0.rho * W)
    Lmat = basis.Lambda.reshape(N, -1)
    M_v = (basis.Lambda * weight).reshape(N, -1) @ Lmat.T

    # bulk stiffness: mu (grad u A0) : grad v + (lam+mu)/J0 (B0:grad u)(B0:grad v)
    GA = np.einsum("nik...,kj...->nij...", basis.grad_Lambda, frame0.A)
    Gmat = basis.grad_Lambda.reshape(N, -1)
    K_v = mu * (GA * W).reshape(N, -1) @ Gmat.T
    sB = np.einsum("ij...,nij...->n...", frame0.B, basis.grad_Lambda)
    K_v += (lam + mu) * (sB * (W / frame0.J)).reshape(N, -1) @ sB.reshape(N, -1).T
    del GA

    # boundary traction pairing: rows are lifted modes, columns all modes
    GA_face = np.einsum("nik...,kj...->nij...",
                        basis.grad_Lambda[..., -1], frame0.A[..., -1])
    sB_face = sB[..., -1]
    traction = (mu * GA_face[:, 2, 2]
                + (lam + mu) * sB_face / frame0.J[..., -1] * frame0.B[2, 2, :, :, -1])
    T_omega = np.zeros((N, N))
    T_omega[:Ns] = g.lateral_weight * basis.shell_vals.reshape(Ns, -1) @ traction.reshape(N, -1).T

    sv = basis.shell_vals
    M_eta = g.lateral_weight * sv.reshape(Ns, -1) @ sv.reshape(Ns, -1).T
    gv = np.stack([g.surf_dx1(sv), g.surf_dx2(sv)], axis=1)
    D_eta = g.lateral_weight * (gv.reshape(Ns, -1) @ gv.reshape(Ns, -1).T)
    lap = g.surf_laplacian(sv)
    K_eta = g.lateral_weight * lap.reshape(Ns, -1) @ lap.reshape(Ns, -1).T
    C_eta = K_eta.copy()

    lap_eta0 = g.surf_laplacian(frame0.eta)
    R_eta = g.lateral_weight * np.einsum("nxy,xy->n", lap, lap_eta0)

    return GalerkinSystem(basis, frame0, rho0, physics, eps,
                          M_v, K_v, T_omega, M_eta, D_eta, K_eta, C_eta, R_eta)


def assemble_loads(system, h, H, rho_gamma):
    """Load vectors for one time level.

    h is the vector source, H the matrix source, rho_gamma the nodewise
    density power entering the pressure coupling a rho^gamma B0.
    """
    basis = system.basis
    g = basis.grid
    frame0 = system.frame0
    a = system.physics.a
    N, Ns = basis.n_total, basis.n_shell
    g.check_vector(np.asarray(h, dtype=float))
    if np.shape(H) != (3, 3, g.N1, g.N2, g.N3):
        raise ShapeMismatch(f"matrix source shape {np.shape(H)}")
    g.check_scalar(np.asarray(rho_gamma, dtype=float))

    W = quad_weights(g)
    C = H + a * rho_gamma[None, None] * frame0.B
    F_Omega = basis.Lambda.reshape(N, -1) @ (h * W).ravel()
    F_Omega += basis.grad_Lambda.reshape(N, -1) @ (C * W).ravel()

    face = C[2, 2, :, :, -1]
    L_omega = g.lateral_weight * basis.shell_vals.reshape(Ns, -1) @ face.ravel()
    F_omega = np.zeros(N)
    F_omega[:Ns] = L_omega
    return F_Omega, F_omega, L_omega, system.R_eta


@dataclass
class GalerkinState:
    a: np.ndarray
    q: np.ndarray
    time: float

    @property
    def p(self):
        return self.a[:len(self.q)]


def _rhs_vector(system, F_Omega):
    N, Ns = system.n_total, system.n_shell
    b = np.zeros(N + Ns)
    b[:N] = F_Omega
    b[:Ns] -= system.R_eta
    return b


def step_semi_discrete(system, state, dt, loads_now, loads_next):
    """One Crank-Nicolson step of the monolithic first-order system."""
    lu, Eminus = system.stepper(dt)
    N = system.n_total
    w = np.concatenate([state.a, state.q])
    b = 0.5 * dt * (_rhs_vector(system, loads_now[0]) + _rhs_vector(system, loads_next[0]))
    w_new = scipy.linalg.lu_solve(lu, Eminus @ w + b)
    return GalerkinState(w_new[:N], w_new[N:], state.time + dt)


def evolve(system, state0, times, loads_list):
    """Crank-Nicolson evolution over the snapshot grid; returns all states."""
    states = [state0]
    for k in range(len(times) - 1):
        dt = float(times[k + 1] - times[k])
        states.append(step_semi_discrete(system, states[k], dt,
                                         loads_list[k], loads_list[k + 1]))
    return states


def shell_energy(system, state):
    """Discrete shell energy: half velocity mass plus half bending stiffness."""
    p = state.p
    return 0.5 * float(p @ system.M_eta @ p) + 0.5 * float(state.q @ system.K_eta @ state.q)


class ShellOnlySystem:
    """Damped shell subsystem with the fluid blocks removed.

    Used for the uncoupled single-mode and dissipation diagnostics; shares the
    Crank-Nicolson stepping of the coupled system via the same interface.
    """

    def __init__(self, M_eta, D_eta, K_eta, C_eta, eps):
        self.M_eta = M_eta
        self.D_eta = D_eta
        self.K_eta = K_eta
        self.C_eta = C_eta
        self.eps = eps
        self.n_shell = M_eta.shape[0]
        self.n_total = self.n_shell
        self.R_eta = np.zeros(self.n_shell)
        self._lu = {}

    @classmethod
    def from_system(cls, system):
        return cls(system.M_eta, system.D_eta, system.K_eta, system.C_eta, system.eps)

    def reduced_operators(self):
        Ns = self.n_shell
        E = np.zeros((2 * Ns, 2 * Ns))
        E[:Ns, :Ns] = self.M_eta
        E[Ns:, Ns:] = np.eye(Ns)
        S = np.zeros((2 * Ns, 2 * Ns))
        S[:Ns, :Ns] = self.D_eta + self.eps * self.C_eta
        S[:Ns, Ns:] = self.K_eta
        S[Ns:, :Ns] = -np.eye(Ns)
        return E, S

    def stepper(self, dt):
        key = round(float(dt), 15)
        if key not in self._lu:
            E, S = self.reduced_operators()
            try:
                lu = scipy.linalg.lu_factor(E + 0.5 * dt * S)
            except scipy.linalg.LinAlgError as exc:
                raise SingularSolve(str(exc)) from exc
            self._lu[key] = (lu, E - 0.5 * dt * S)
        return self._lu[key]

    def free_evolution(self, p0, q0, dt, nsteps):
        """Unforced states (p, q) at every step."""
        state = GalerkinState(np.asarray(p0, dtype=float), np.asarray(q0, dtype=float), 0.0)
        zero_loads = (np.zeros(self.n_shell),)
        out = [state]
        for _ in range(nsteps):
            state = step_semi_discrete(self, state, dt, zero_loads, zero_loads)
            out.append(state)
        return out


# --- source terms and compatibility ------------------------------------------------


@dataclass
class SourceTerms:
    times: np.ndarray
    h: list       # (3, N1, N2, N3) per snapshot
    H: list       # (3, 3, N1, N2, N3) per snapshot

    def initial_values(self):
        return self.h[0], self.H[0]


def anchor_source(frame0, rho0, v0):
    """Initial vector source of the admissible source set.

    Value forced at t = 0: the frame-velocity convection and the compression
    feedback of the initial state (the frame-difference terms vanish there).
    """
    g = frame0.grid
    jac = g.jacobian(v0)
    conv = np.einsum("ij...,j...->i...", jac, frame0.V_geo)
    sB = np.einsum("ij...,ij...->...", frame0.B, jac)
    return -frame0.J * rho0.rho * conv - rho0.rho * v0 * sB


def evaluate_source_terms(scenario, grid, times, shells, v_fields, rho_list, frame0, physics):
    """Nodewise source pair along a trajectory (time derivatives by central differences)."""
    K = len(times)
    if not (len(shells) == len(v_fields) == len(rho_list) == K):
        raise ShapeMismatch("trajectory lengths disagree")
    if K < 3:
        raise InsufficientSnapshots("source evaluation needs >= 3 snapshots")
    mu, lam, a, gamma = physics.mu, physics.lam, physics.a, physics.gamma
    rho0 = rho_list[0].rho
    vt = time_derivative(v_fields, times, 1)
    hs, Hs = [], []
    for k in range(K):
        fr = build_frame(scenario, shells[k], grid)
        rho = rho_list[k].rho
        v = v_fields[k]
        jac = grid.jacobian(v)
        conv = np.einsum("ij...,j...->i...", jac, fr.V_geo)
        sB = np.einsum("ij...,ij...->...", fr.B, jac)
        h = (frame0.J * rho0 - fr.J * rho) * vt[k] \
            - fr.J * rho * conv - rho * v * sB
        GA = np.einsum("ik...,kj...->ij...", jac, frame0.A - fr.A)
        sB0 = np.einsum("ij...,ij...->...", frame0.B, jac)
        H = mu * GA \
            + (lam + mu) * (sB0 / frame0.J * frame0.B - sB / fr.J * fr.B) \
            + a * (fr.B - frame0.B) * (rho ** gamma)
        hs.append(h)
        Hs.append(H)
    return SourceTerms(np.asarray(times, dtype=float), hs, Hs)


def transformed_stress(v, rho_gamma, frame, physics):
    """Fixed-domain stress bundle mu grad(v) A + ((lam+mu)/J)(B:grad v) B - a rho^gamma B."""
    g = frame.grid
    jac = g.jacobian(v)
    mu, lam, a = physics.mu, physics.lam, physics.a
    S = mu * np.einsum("ik...,kj...->ij...", jac, frame.A)
    w = np.einsum("ij...,ij...->...", frame.B, jac) / frame.J
    S += (lam + mu) * w[None, None] * frame.B
    S -= a * rho_gamma[None, None] * frame.B
    return S


@dataclass
class CompatibilityReport:
    normal_residual: float
    tangential_residual: float
    mean_offset: float

    @property
    def residual(self):
        """Gating residual: zero-mean normal mismatch (the tested content of the scheme)."""
        return self.normal_residual


def check_compatibility(scenario, grid, rho0, v0, eta0, eta_star, h0, H0, physics):
    """Mismatch between initial fluid and shell accelerations on the surface.

    The normal component is compared after removing the constant shell mode
    (the modal space excludes it); the tangential part and the removed mean
    are reported as diagnostics.
    """
    frame0 = build_frame(scenario, ShellState(eta0, eta_star), grid)
    tau0 = transformed_stress(v0, rho0.rho ** physics.gamma, frame0, physics)
    lhs_vol = (grid.matrix_row_divergence(tau0 - H0) + h0) / (rho0.rho * frame0.J)
    lhs = lhs_vol[..., -1]                                    # (3, N1, N2)
    rhs_scalar = (grid.surf_laplacian(eta_star)
                  - grid.surf_laplacian(grid.surf_laplacian(eta0))
                  + (H0 - tau0)[2, 2, :, :, -1])
    mismatch = lhs[2] - rhs_scalar
    mean = float(mismatch.mean())
    normal = grid.surf_l2_norm(mismatch - mean)
    tangential = grid.surf_l2_norm(lhs[:2])
    return CompatibilityReport(normal, tangential, mean)


def lift_shell_velocity(eta_star, grid):
    """Velocity field whose shell-face trace is eta_star * n, zero on the bottom."""
    gz = lift_profile(grid.x3, grid.Hz)
    v0 = np.zeros((3, grid.N1, grid.N2, grid.N3))
    v0[2] = eta_star[:, :, None] * gz[None, None, :]
    return v0


def _compatibility_mismatch(scenario, grid, rho0, eta0, eta_star, physics):
    """Zero-mean normal acceleration mismatch on the shell face for lifted data."""
    v0 = lift_shell_velocity(eta_star, grid)
    frame0 = build_frame(scenario, ShellState(eta0, eta_star), grid)
    h0 = anchor_source(frame0, rho0, v0)
    tau0 = transformed_stress(v0, rho0.rho ** physics.gamma, frame0, physics)
    lhs = ((grid.matrix_row_divergence(tau0) + h0) / (rho0.rho * frame0.J))[2, :, :, -1]
    rhs = (grid.surf_laplacian(eta_star)
           - grid.surf_laplacian(grid.surf_laplacian(eta0))
           - tau0[2, 2, :, :, -1])
    m = lhs - rhs
    return m - m.mean()


def solve_compatible_eta_star(scenario, grid, rho0, eta0, physics, tol=1e-10, passes=6):
    """Construct a compatible initial shell velocity and its lifted fluid field.

    On the shell face the acceleration mismatch is exactly affine in eta_star
    (the anchor's quadratic terms vanish there because the lifting has zero
    slope at the face), so the zero-mean balance is solved by least squares
    over shell modes.  The mode set starts from the basis-resolvable modes and
    is extended adaptively toward the grid Nyquist wherever the residual
    spectrum still lives, which captures the harmonic ladder generated by the
    reference displacement.
    """
    r0 = _compatibility_mismatch(scenario, grid, rho0, eta0, np.zeros_like(eta0), physics)
    cols, modes, seen = [], [], set()

    def add_modes(pairs):
        for m1, m2 in sorted(pairs):
            for kind in ("cos", "sin"):
                if (m1, m2, kind) in seen:
                    continue
                seen.add((m1, m2, kind))
                psi, _, _ = _lateral_mode(kind, m1, m2, grid)
                modes.append(psi)
                cols.append((_compatibility_mismatch(scenario, grid, rho0, eta0,
                                                     psi, physics) - r0).ravel())

    def spectrum_support(f, floor):
        spec = np.abs(np.fft.fft2(f)) / (grid.N1 * grid.N2)
        thresh = max(floor, spec.max() * 1e-8)
        out = set()
        for i in range(grid.N1):
            for j in range(grid.N2):
                if spec[i, j] <= thresh:
                    continue
                m1 = i if i <= grid.N1 // 2 else i - grid.N1
                m2 = j if j <= grid.N2 // 2 else j - grid.N2
                if m1 < 0 or (m1 == 0 and m2 < 0):
                    m1, m2 = -m1, -m2
                if (m1 == 0 and m2 == 0) or m1 >= grid.N1 // 2 or abs(m2) >= grid.N2 // 2:
                    continue
                out.add((m1, m2))
        return out

    seed = spectrum_support(r0, tol / 10.0) | spectrum_support(eta0, tol / 10.0)
    seed |= {(1, 0), (0, 1)}
    add_modes(seed)
    eta_star = np.zeros_like(eta0)
    for _ in range(passes):
        M = np.stack(cols, axis=1)
        coef, *_ = np.linalg.lstsq(M, -r0.ravel(), rcond=None)
        eta_star = np.tensordot(coef, np.stack(modes), axes=1)
        resid = (M @ coef + r0.ravel()).reshape(grid.N1, grid.N2)
        if grid.surf_l2_norm(resid) <= tol:
            break
        new = {mw for mw in spectrum_support(resid, tol / 10.0)
               if not any((mw[0], mw[1], k) in seen for k in ("cos", "sin"))}
        if not new:
            break
        add_modes(new)
    return eta_star, lift_shell_velocity(eta_star, grid)


# --- inner fixed point ----------------------------------------------------------------


@dataclass
class MomentumSolution:
    times: np.ndarray
    states: list                 # GalerkinState per snapshot
    v_fields: list               # (3, N1, N2, N3) per snapshot
    shells: list                 # ShellState per snapshot
    sources: SourceTerms
    sweep_log: list              # dicts: sweep, diff, ratio
    system: GalerkinSystem

    @property
    def converged(self):
        return bool(self.sweep_log and self.sweep_log[-1]["converged"])


def initial_coefficients(basis, v0, eta_star):
    """Boundary coefficients from the shell velocity, interior from the remainder."""
    p0 = basis.project_shell(eta_star)
    a0 = np.zeros(basis.n_total)
    a0[:basis.n_shell] = p0
    lifted = basis.velocity_field(a0)
    a0[basis.n_shell:] = basis.project_interior(v0 - lifted)
    return a0


def _reconstruct(basis, states, eta0):
    v_fields = [basis.velocity_field(st.a) for st in states]
    shells = [ShellState(eta0 + basis.eta_field(st.q), basis.eta_field(st.p))
              for st in states]
    return v_fields, shells


def solve_momentum_structure(scenario, grid, basis, physics, eps, rho_list, times,
                             v0, eta0, eta_star, tol=1e-8, max_iter=25, theta=1.0,
                             cc_tol=1e-6, enforce_cc=True):
    """Inner Picard iteration on the source-term pair.

    Each sweep solves the linear momentum-structure system by Crank-Nicolson
    time stepping with the current sources, then re-evaluates the sources on
    the produced trajectory.  Converged when the source update is below tol
    in the source norm; NoContraction is raised after two consecutive
    non-contracting sweeps (the caller should shrink the time interval).
    """
    times = np.asarray(times, dtype=float)
    K = times.size
    if len(rho_list) != K:
        raise ShapeMismatch("density trajectory length disagrees with time grid")

    frame0 = build_frame(scenario, ShellState(eta0, eta_star), grid)
    rho0 = rho_list[0]

    h0 = anchor_source(frame0, rho0, v0)
    H0 = np.zeros((3, 3, grid.N1, grid.N2, grid.N3))
    if enforce_cc:
        cc = check_compatibility(scenario, grid, rho0, v0, eta0, eta_star,
                                 h0, H0, physics)
        if cc.residual > cc_tol:
            raise IncompatibleData(
                f"compatibility residual {cc.residual:.3e} > cc_tol {cc_tol:.1e}")

    system = assemble_system(basis, frame0, rho0, physics, eps)
    a0 = initial_coefficients(basis, v0, eta_star)
    state0 = GalerkinState(a0, np.zeros(basis.n_shell), float(times[0]))

    h_list = [h0.copy() for _ in range(K)]
    H_list = [H0.copy() for _ in range(K)]
    rho_gammas = [r.rho ** physics.gamma for r in rho_list]

    sweep_log = []
    prev_diff = None
    stall = 0
    sources = SourceTerms(times, h_list, H_list)
    for sweep in range(1, max_iter + 1):
        loads = [assemble_loads(system, h_list[k], H_list[k], rho_gammas[k])
                 for k in range(K)]
        states = evolve(system, state0, times, loads)
        v_fields, shells = _reconstruct(basis, states, eta0)
        new = evaluate_source_terms(scenario, grid, times, shells, v_fields,
                                    rho_list, frame0, physics)
        dh = [new.h[k] - h_list[k] for k in range(K)]
        dH = [new.H[k] - H_list[k] for k in range(K)]
        diff = s_norm(dh, dH, times, grid)
        ratio = diff / prev_diff if prev_diff not in (None, 0.0) else np.nan
        converged = diff <= tol
        sweep_log.append({"sweep": sweep, "diff": diff, "ratio": ratio,
                          "converged": converged})
        h_list = [h_list[k] + theta * dh[k] for k in range(K)]
        H_list = [H_list[k] + theta * dH[k] for k in range(K)]
        sources = SourceTerms(times, h_list, H_list)
        if converged:
            return MomentumSolution(times, states, v_fields, shells, sources,
                                    sweep_log, system)
        if prev_diff is not None and diff >= prev_diff:
            stall += 1
            if stall >= 2:
                raise NoContraction(
                    f"source map stopped contracting (diff {prev_diff:.3e} -> {diff:.3e})")
        else:
            stall = 0
        prev_diff = diff
    raise MaxIterExceeded(f"no convergence in {max_iter} sweeps (last diff {prev_diff:.3e})")
