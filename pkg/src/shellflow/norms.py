"""Discrete Sobolev norms and viscosity-weighted trajectory norms.

Spatial derivatives are spectral laterally and 4th-order finite differences
vertically; quadrature matches the assembly rules (exact lateral mean,
trapezoid vertical).  Time derivatives along snapshot trajectories use
2nd-order central differences with one-sided closures at the endpoints;
sup-in-time is the max over snapshots and L2-in-time is trapezoidal.
"""

from itertools import product

import numpy as np

from .errors import InsufficientSnapshots, OrderUnsupported

_MAX_ORDER_OMEGA = 4
_MAX_ORDER_SURFACE = 6


def _apply_multi(field, alpha, grid, domain):
    out = field
    for axis, m in enumerate(alpha):
        for _ in range(m):
            if domain == "surface":
                out = grid.surf_dx1(out) if axis == 0 else grid.surf_dx2(out)
            else:
                out = grid.deriv(out, axis)
    return out


def _multi_indices(k, ndim):
    idx = []
    for alpha in product(range(k + 1), repeat=ndim):
        if sum(alpha) <= k:
            idx.append(alpha)
    return idx


def sobolev_norm(field, k, grid, domain="omega"):
    """Discrete W^{k,2} norm of a scalar field on the slab or the shell surface."""
    field = np.asarray(field, dtype=float)
    if domain == "surface":
        if not 0 <= k <= _MAX_ORDER_SURFACE:
            raise OrderUnsupported(f"surface order {k} not in [0, {_MAX_ORDER_SURFACE}]")
        grid.check_surface(field)
        total = sum(grid.surf_integrate(_apply_multi(field, a, grid, domain) ** 2)
                    for a in _multi_indices(k, 2))
    else:
        if not 0 <= k <= _MAX_ORDER_OMEGA:
            raise OrderUnsupported(f"volume order {k} not in [0, {_MAX_ORDER_OMEGA}]")
        grid.check_scalar(field)
        total = sum(grid.integrate(_apply_multi(field, a, grid, domain) ** 2)
                    for a in _multi_indices(k, 3))
    return float(np.sqrt(total))


def vector_sobolev_norm(field, k, grid, domain="omega"):
    field = np.asarray(field, dtype=float)
    return float(np.sqrt(sum(sobolev_norm(field[i], k, grid, domain) ** 2
                             for i in range(field.shape[0]))))


# --- trajectory helpers ------------------------------------------------------------


def time_derivative(snapshots, times, order=1):
    """Central-difference time derivative of a snapshot sequence (one-sided ends)."""
    K = len(snapshots)
    if K < order + 1 or K < 3:
        raise InsufficientSnapshots(f"need >= 3 snapshots for d/dt^{order}, have {K}")
    arr = np.stack([np.asarray(s, dtype=float) for s in snapshots])
    dt = times[1] - times[0]
    out = arr
    for _ in range(order):
        d = np.empty_like(out)
        d[1:-1] = (out[2:] - out[:-2]) / (2.0 * dt)
        d[0] = (-3.0 * out[0] + 4.0 * out[1] - out[2]) / (2.0 * dt)
        d[-1] = (3.0 * out[-1] - 4.0 * out[-2] + out[-3]) / (2.0 * dt)
        out = d
    return out


def sup_in_time(values):
    return float(np.max(values))


def l2_in_time(values, times):
    return float(np.sqrt(np.trapz(np.asarray(values) ** 2, times)))


# --- solution-space norms ------------------------------------------------------------


def _snap_l2(field, grid):
    return grid.l2_norm(field)


def x_norm_velocity(v_snapshots, times, mu, lam, grid):
    """Viscosity-weighted velocity solution norm.

    Sum of sqrt(lam + 2 mu)-weighted L2-in-time bilaplacian and mixed
    time-space terms, the unweighted second time derivative, and the weighted
    sup-in-time gradient of the first time derivative.
    """
    if len(v_snapshots) < 3:
        raise InsufficientSnapshots("velocity norm needs >= 3 snapshots")
    w = np.sqrt(lam + 2.0 * mu)
    vt = time_derivative(v_snapshots, times, 1)
    vtt = time_derivative(v_snapshots, times, 2)

    bil = [_snap_l2(np.stack([grid.laplacian(grid.laplacian(v[i])) for i in range(3)]), grid)
           for v in v_snapshots]
    t1 = w * l2_in_time(bil, times)

    d2vt = [_snap_l2(np.stack([np.stack([grid.deriv(grid.deriv(vt[k][i], a1), a2)
                                         for a1 in range(3) for a2 in range(3)])
                               for i in range(3)]), grid)
            for k in range(len(times))]
    t2 = w * l2_in_time(d2vt, times)

    t3 = l2_in_time([_snap_l2(vtt[k], grid) for k in range(len(times))], times)

    gvt = [_snap_l2(np.stack([grid.grad(vt[k][i]) for i in range(3)]), grid)
           for k in range(len(times))]
    t4 = w * sup_in_time(gvt)
    return t1 + t2 + t3 + t4


def x_norm_shell(eta_snapshots, times, grid):
    """Shell solution norm: six displacement terms with mixed time orders."""
    if len(eta_snapshots) < 4:
        raise InsufficientSnapshots("shell norm needs >= 4 snapshots")
    et = time_derivative(eta_snapshots, times, 1)
    ett = time_derivative(eta_snapshots, times, 2)
    ettt = time_derivative(eta_snapshots, times, 3)
    K = len(times)

    def lap(f):
        return grid.surf_laplacian(f)

    t1 = l2_in_time([grid.surf_l2_norm(lap(lap(et[k]))) for k in range(K)], times)
    t2 = sup_in_time([grid.surf_l2_norm(grid.surf_grad(lap(et[k]))) for k in range(K)])
    t3 = sup_in_time([grid.surf_l2_norm(grid.surf_grad(ett[k])) for k in range(K)])
    t4 = l2_in_time([grid.surf_l2_norm(lap(ett[k])) for k in range(K)], times)
    t5 = l2_in_time([grid.surf_l2_norm(ettt[k]) for k in range(K)], times)
    t6 = l2_in_time([grid.surf_l2_norm(lap(lap(lap(e)))) for e in eta_snapshots], times)
    return t1 + t2 + t3 + t4 + t5 + t6


def s_norm(h_snapshots, H_snapshots, times, grid):
    """Source-pair norm with interior, time-derivative, and initial-value terms."""
    if len(h_snapshots) < 3:
        raise InsufficientSnapshots("source norm needs >= 3 snapshots")
    K = len(times)
    ht = time_derivative(h_snapshots, times, 1)
    Ht = time_derivative(H_snapshots, times, 1)

    th = l2_in_time([vector_sobolev_norm(h_snapshots[k], 2, grid) for k in range(K)], times)
    th += l2_in_time([grid.l2_norm(ht[k]) for k in range(K)], times)
    tH = l2_in_time([np.sqrt(sum(sobolev_norm(H_snapshots[k][i, j], 3, grid) ** 2
                                 for i in range(3) for j in range(3))) for k in range(K)], times)
    tH += l2_in_time([np.sqrt(sum(sobolev_norm(Ht[k][i, j], 1, grid) ** 2
                                  for i in range(3) for j in range(3))) for k in range(K)], times)
    t0 = vector_sobolev_norm(h_snapshots[0], 1, grid)
    t0 += np.sqrt(sum(sobolev_norm(H_snapshots[0][i, j], 2, grid) ** 2
                      for i in range(3) for j in range(3)))
    return th + tH + t0


def y_norm_density(rho_snapshots, times, grid):
    """Density contraction norm: sup-in-time W^{2,2} plus sup-in-time W^{1,2} of d/dt."""
    if len(rho_snapshots) < 3:
        raise InsufficientSnapshots("density norm needs >= 3 snapshots")
    rt = time_derivative(rho_snapshots, times, 1)
    K = len(times)
    a = sup_in_time([sobolev_norm(rho_snapshots[k], 2, grid) for k in range(K)])
    b = sup_in_time([sobolev_norm(rt[k], 1, grid) for k in range(K)])
    return a + b


def y_norm_velocity(v_snapshots, times, mu, lam, grid):
    w = np.sqrt(lam + 2.0 * mu)
    vt = time_derivative(v_snapshots, times, 1)
    K = len(times)
    gl = [_snap_l2(np.stack([grid.grad(grid.laplacian(v[i])) for i in range(3)]), grid)
          for v in v_snapshots]
    d2vt = [_snap_l2(np.stack([np.stack([grid.deriv(grid.deriv(vt[k][i], a1), a2)
                                         for a1 in range(3) for a2 in range(3)])
                               for i in range(3)]), grid)
            for k in range(K)]
    return w * l2_in_time(gl, times) + w * l2_in_time(d2vt, times)


def y_norm_shell(eta_snapshots, times, grid):
    et = time_derivative(eta_snapshots, times, 1)
    ett = time_derivative(eta_snapshots, times, 2)
    K = len(times)
    a = l2_in_time([grid.surf_l2_norm(grid.surf_grad(grid.surf_laplacian(et[k])))
                    for k in range(K)], times)
    b = l2_in_time([grid.surf_l2_norm(grid.surf_laplacian(ett[k])) for k in range(K)], times)
    return a + b
