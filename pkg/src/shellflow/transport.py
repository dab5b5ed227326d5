"""Transformed continuity equation solved by the method of characteristics.

The effective transport field combines the frame velocity with the cofactor
pullback of the fluid velocity; the compression rate is the transformed
divergence.  Density values follow by tracing each grid node backward and
applying the accumulated exponential compression to the initial density.
"""

from dataclasses import dataclass

import numpy as np

from . import interp
from .errors import (CharacteristicEscape, InsufficientSnapshots,
                     NonPositiveDensity, OutOfSpan, ShapeMismatch)
from .geometry import build_frame


@dataclass
class DensityField:
    """Strictly positive transformed density with its isentropic pressure cache."""

    rho: np.ndarray
    a: float = 1.0
    gamma: float = 1.4

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        if self.rho.min() <= 0.0:
            raise NonPositiveDensity(f"min density {self.rho.min():.3e}")
        if self.a <= 0.0 or self.gamma <= 1.0:
            raise NonPositiveDensity(f"need a > 0 and gamma > 1, got a={self.a}, gamma={self.gamma}")
        self._pressure = None

    @property
    def pressure(self):
        if self._pressure is None:
            self._pressure = self.a * self.rho ** self.gamma
        return self._pressure


def pressure_field(density):
    """Nodewise isentropic pressure; refreshes the cache."""
    density._pressure = None
    return density.pressure


@dataclass
class EffectiveField:
    """Effective transport field and compression rate at one time."""

    u_eff: np.ndarray       # (3, N1, N2, N3)
    delta_div: np.ndarray   # (N1, N2, N3)
    time: float
    tangency_residual: float = 0.0


@dataclass
class CharacteristicPath:
    start_time: float
    target_time: float
    start: np.ndarray       # (3, M)
    endpoint: np.ndarray    # (3, M)
    compression: np.ndarray  # (M,) accumulated integral of delta_div


def effective_field_from_state(frame, v, discrete=True):
    """u_eff = V_geo + B^T v / J and delta_div = (B : grad v) / J for one snapshot.

    With discrete=True the cofactor fields built from the grid's own
    derivatives are used; they satisfy the discrete Piola identity and
    geometric conservation law, which keeps the transported mass balanced.
    """
    g = frame.grid
    g.check_vector(v)
    if discrete:
        J, B, V = frame.discrete_fields()
    else:
        J, B, V = frame.J, frame.B, frame.V_geo
    u = V + np.einsum("ji...,j...->i...", B, v) / J
    jac = g.jacobian(v)
    delta = np.einsum("ij...,ij...->...", B, jac) / J
    # tangency: vertical component must vanish on both faces
    res = max(float(np.abs(u[2, :, :, 0]).max()), float(np.abs(u[2, :, :, -1]).max()))
    return u, delta, res


@dataclass
class VelocityTrajectory:
    """Uniform-in-time snapshots of the coupled kinematic data.

    Effective fields are built per snapshot and interpolated piecewise
    linearly in time between snapshots.
    """

    scenario: object
    grid: object
    times: np.ndarray
    velocities: list            # (3, N1, N2, N3) per snapshot
    shells: list                # ShellState per snapshot

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.velocities) != self.times.size or len(self.shells) != self.times.size:
            raise ShapeMismatch("trajectory snapshot counts disagree")
        if self.times.size >= 2 and np.any(np.diff(self.times) <= 0):
            raise ShapeMismatch("trajectory times must increase strictly")
        self._frames = {}
        self._eff = {}

    def frame(self, k):
        if k not in self._frames:
            self._frames[k] = build_frame(self.scenario, self.shells[k], self.grid)
            if len(self._frames) > 4:
                self._frames.pop(next(iter(self._frames)))
        return self._frames[k]

    def snapshot_effective(self, k):
        if k not in self._eff:
            u, d, res = effective_field_from_state(self.frame(k), self.velocities[k])
            self._eff[k] = (np.ascontiguousarray(np.concatenate([u, d[None]])), res)
        return self._eff[k]

    def span(self):
        return float(self.times[0]), float(self.times[-1])

    def _bracket(self, t):
        t0, t1 = self.span()
        if t < t0 - 1e-12 or t > t1 + 1e-12:
            raise OutOfSpan(f"t={t} outside [{t0}, {t1}]")
        k = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 2))
        th = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return k, float(np.clip(th, 0.0, 1.0))

    def blended_field(self, t):
        """(4, N1, N2, N3) stack (u1, u2, u3, delta) linearly blended in time."""
        if self.times.size == 1:
            return self.snapshot_effective(0)[0]
        k, th = self._bracket(t)
        F0, _ = self.snapshot_effective(k)
        F1, _ = self.snapshot_effective(k + 1)
        return (1.0 - th) * F0 + th * F1

    def eval_u_delta(self, t, pts):
        F = self.blended_field(t)
        vals = interp.tricubic(F, self.grid, pts, vertical_slack=0.05 * self.grid.Hz)
        return vals[:3], vals[3]


class AnalyticTransportField:
    """Prescribed analytic effective field and compression rate."""

    def __init__(self, u_fn, delta_fn, t0=0.0, t1=np.inf):
        self.u_fn = u_fn
        self.delta_fn = delta_fn
        self.times = np.array([t0, t1])

    def span(self):
        return float(self.times[0]), float(self.times[-1])

    def eval_u_delta(self, t, pts):
        return np.asarray(self.u_fn(t, pts)), np.asarray(self.delta_fn(t, pts))


def effective_field(trajectory, t):
    """Effective field sampled on the grid at time t (piecewise-linear blend)."""
    t0, t1 = trajectory.span()
    if not (t0 - 1e-12 <= t <= t1 + 1e-12):
        raise OutOfSpan(f"t={t} outside [{t0}, {t1}]")
    F = trajectory.blended_field(t)
    k, _ = trajectory._bracket(t) if trajectory.times.size > 1 else (0, 0.0)
    res = trajectory.snapshot_effective(k)[1]
    return EffectiveField(F[:3], F[3], t, res)


def _wrap_lateral(pts, grid):
    pts[0] %= grid.P1
    pts[1] %= grid.P2


def trace_characteristic(source, t, z, s_target, grid, substeps=8, drift_tol=1e-9):
    """Trace characteristics from (t, z) to time s_target with embedded compression.

    Classical one-step 4th-order integration of the joint (position,
    compression-integral) system; the endpoint is projected onto the closed
    slab if it drifts out by less than drift_tol, otherwise
    CharacteristicEscape is raised.
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    if single:
        z = z[:, None]
    if z.shape[0] != 3:
        raise ShapeMismatch(f"points must have shape (3,) or (3, M), got {z.shape}")
    x = z.copy()
    I = np.zeros(x.shape[1])

    t0, t1 = source.span()
    if not (t0 - 1e-12 <= min(t, s_target) and max(t, s_target) <= t1 + 1e-12):
        raise OutOfSpan(f"trace [{t}, {s_target}] outside source span [{t0}, {t1}]")

    times = getattr(source, "times", None)
    if times is not None and times.size > 2 and np.isfinite(times[-1]):
        # substep within each snapshot interval overlapped by [s_target, t]
        lo, hi = min(t, s_target), max(t, s_target)
        knots = [lo] + [float(tt) for tt in times if lo < tt < hi] + [hi]
        knots = np.array(knots if t < s_target else knots[::-1])
    else:
        knots = np.array([t, s_target])

    for a, b in zip(knots[:-1], knots[1:]):
        h = (b - a) / substeps
        for m in range(substeps):
            tm = a + m * h
            x, I = _rk4_step(source, tm, h, x, I, grid)
            _wrap_lateral(x, grid)

    drift = np.maximum(-x[2], x[2] - grid.Hz)
    worst = float(drift.max())
    if worst > drift_tol:
        raise CharacteristicEscape(
            f"endpoint left the slab by {worst:.3e} > drift_tol {drift_tol:.1e}")
    x[2] = np.clip(x[2], 0.0, grid.Hz)
    return CharacteristicPath(t, s_target, z, x, I)


def _rk4_step(source, tm, h, x, I, grid):
    k1, d1 = source.eval_u_delta(tm, x)
    k2, d2 = source.eval_u_delta(tm + 0.5 * h, _clip3(x + 0.5 * h * k1, grid))
    k3, d3 = source.eval_u_delta(tm + 0.5 * h, _clip3(x + 0.5 * h * k2, grid))
    k4, d4 = source.eval_u_delta(tm + h, _clip3(x + h * k3, grid))
    xn = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    In = I + (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
    return xn, In


def _clip3(x, grid):
    x[2] = np.clip(x[2], 0.0, grid.Hz)
    return x


def _grid_points(grid):
    X1, X2, X3 = grid.mesh()
    return np.stack([X1.ravel(), X2.ravel(), X3.ravel()])


def solve_density(rho0, source, t, grid, substeps=8, drift_tol=1e-9, interp_mode="spectral"):
    """Density at time t by per-node backward tracing to time 0.

    The initial density is sampled at the departure points with exact lateral
    Fourier evaluation and cubic vertical interpolation; the result is
    strictly positive by the exponential closed form.
    """
    pts = _grid_points(grid)
    path = trace_characteristic(source, t, pts, 0.0, grid, substeps, drift_tol)
    # compression holds the integral from t down to 0, i.e. minus the forward
    # integral, so the closed-form factor exp(-int_0^t delta) is exp(+compression)
    if interp_mode == "spectral":
        vals = interp.spectral_vertical_cubic(rho0.rho, grid, path.endpoint)
    else:
        vals = interp.tricubic(rho0.rho, grid, path.endpoint)
    rho = (vals * np.exp(path.compression)).reshape(grid.N1, grid.N2, grid.N3)
    return DensityField(rho, rho0.a, rho0.gamma)


def solve_density_series(rho0, trajectory, substeps=8, drift_tol=1e-9, interp_mode="tricubic"):
    """Densities at every trajectory snapshot time via interval-by-interval stepping.

    Uses the flow semigroup: each snapshot density is transported from the
    previous one over a single interval, which keeps the per-step trace short.
    """
    grid = trajectory.grid
    pts = _grid_points(grid)
    out = [DensityField(rho0.rho.copy(), rho0.a, rho0.gamma)]
    times = trajectory.times
    for k in range(1, times.size):
        path = trace_characteristic(trajectory, float(times[k]), pts, float(times[k - 1]),
                                    grid, substeps, drift_tol)
        if interp_mode == "spectral":
            vals = interp.spectral_vertical_cubic(out[-1].rho, grid, path.endpoint)
        else:
            vals = interp.tricubic(out[-1].rho, grid, path.endpoint)
        rho = (vals * np.exp(path.compression)).reshape(grid.N1, grid.N2, grid.N3)
        out.append(DensityField(rho, rho0.a, rho0.gamma))
    return out


def mass_integral(density, frame):
    """Quadrature of J rho over the reference slab (deformed-domain mass)."""
    if density.rho.shape != frame.J.shape:
        raise ShapeMismatch(f"density {density.rho.shape} vs frame {frame.J.shape}")
    return float(frame.grid.integrate(frame.J * density.rho))


def upwind_finite_volume(rho0_values, source, t_end, grid, cfl=0.4):
    """First-order upwind solver for the advective transport equation.

    Independent oracle path: explicit Euler in time, per-direction upwind
    differences of the advection term, nodal source term.  Periodic laterally,
    one-sided at the vertical faces (the field is tangent there).
    """
    rho = np.asarray(rho0_values, dtype=float).copy()
    pts = _grid_points(grid)
    h1 = grid.P1 / grid.N1
    h2 = grid.P2 / grid.N2
    h3 = grid.h3
    t = 0.0
    while t < t_end - 1e-14:
        u_flat, d_flat = source.eval_u_delta(t, pts)
        u = u_flat.reshape(3, grid.N1, grid.N2, grid.N3)
        delta = d_flat.reshape(grid.N1, grid.N2, grid.N3)
        speed = np.abs(u[0]).max() / h1 + np.abs(u[1]).max() / h2 + np.abs(u[2]).max() / h3
        dt = min(cfl / max(speed, 1e-12), t_end - t)

        adv = np.zeros_like(rho)
        for ax, h in ((0, h1), (1, h2), (2, h3)):
            fwd = (np.roll(rho, -1, axis=ax) - rho) / h
            bwd = (rho - np.roll(rho, 1, axis=ax)) / h
            if ax == 2:
                fwd[..., -1] = bwd[..., -1]
                bwd[..., 0] = fwd[..., 0]
            ua = u[ax]
            adv += np.where(ua > 0.0, ua * bwd, ua * fwd)
        rho = rho - dt * (adv + delta * rho)
        t += dt
    return rho


def density_estimate_report(densities, times, trajectory, grid):
    """Measured ingredients of the transport stability estimate.

    Reports the solution-side supremum, the data bracket, the exponent
    integrand, and their ratio with the unknown constant set to one.
    """
    from .norms import (l2_in_time, sobolev_norm, sup_in_time, time_derivative,
                        vector_sobolev_norm)

    K = len(times)
    if K < 3:
        raise InsufficientSnapshots("estimate report needs >= 3 snapshots")
    rho_snaps = [d.rho for d in densities]
    rho_t = time_derivative(rho_snaps, times, 1)
    lhs = sup_in_time([sobolev_norm(rho_snaps[k], 3, grid) ** 2
                       + sobolev_norm(rho_t[k], 2, grid) ** 2 for k in range(K)])

    v_snaps = trajectory.velocities
    v_tt = time_derivative(v_snaps, times, 2)
    etat_snaps = [s.eta_t for s in trajectory.shells]
    v_w42 = [vector_sobolev_norm(v_snaps[k], 4, grid) for k in range(K)]
    sup_zeta = sup_in_time([sobolev_norm(e, 3, grid, domain="surface") ** 2
                            for e in etat_snaps])
    bracket = sobolev_norm(rho_snaps[0], 3, grid) ** 2 * (
        1.0 + sup_zeta
        + l2_in_time(v_w42, times) ** 2
        + l2_in_time([grid.l2_norm(v_tt[k]) for k in range(K)], times) ** 2)

    exponent = float(np.trapz(
        [sobolev_norm(etat_snaps[k], 4, grid, domain="surface") + v_w42[k]
         for k in range(K)], times))

    # pressure-regularity ingredients
    gamma = densities[0].gamma
    p_snaps = [d.rho ** gamma for d in densities]
    p_t = time_derivative(p_snaps, times, 1)
    pressure_lhs = sup_in_time([sobolev_norm(p_snaps[k], 3, grid)
                                + sobolev_norm(p_t[k], 2, grid) for k in range(K)])
    pressure_rhs = sup_in_time([sobolev_norm(rho_snaps[k], 3, grid) ** gamma
                                + sobolev_norm(rho_t[k], 2, grid) ** 2
                                + sobolev_norm(rho_snaps[k], 2, grid) ** (2.0 * (gamma - 1.0))
                                for k in range(K)])

    rhs = bracket * np.exp(exponent)
    return {
        "solution_sup": lhs,
        "data_bracket": bracket,
        "exponent_integral": exponent,
        "ratio": lhs / rhs if rhs > 0 else 0.0,
        "pressure_lhs": pressure_lhs,
        "pressure_rhs": pressure_rhs,
        "pressure_ratio": pressure_lhs / pressure_rhs if pressure_rhs > 0 else 0.0,
    }
