"""Outer fixed-point coupling of the transport and momentum-structure solvers.

One outer sweep maps a guessed density trajectory to the momentum-structure
solution driven by it, then transports the initial density along the
resulting kinematics.  The iteration is monitored in the density contraction
norm; when it stops contracting the time interval is halved and the iteration
restarts from scratch, mirroring the short-interval construction.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch, HalvingExhausted, NoContraction
from .galerkin import (build_basis, evaluate_source_terms, solve_momentum_structure,
                       transformed_stress)
from .geometry import ShellState, build_frame
from .norms import time_derivative, y_norm_density
from .transport import (DensityField, VelocityTrajectory, effective_field_from_state,
                        mass_integral, solve_density_series)


@dataclass
class CoupledConfig:
    """Solver settings shared by both subsolvers within an outer sweep."""

    n_shell: int = 8
    n_interior: int = 18
    eps: float = 1e-4
    dt: float = 2.5e-3
    inner_tol: float = 1e-8
    inner_max_iter: int = 25
    theta: float = 1.0
    cc_tol: float = 1e-6
    substeps: int = 2
    drift_tol: float = 1e-9
    interp_mode: str = "tricubic"


@dataclass
class InitialData:
    rho0: DensityField
    v0: np.ndarray
    eta0: np.ndarray
    eta_star: np.ndarray


@dataclass
class ContractionLog:
    ratios: list = field(default_factory=list)
    diffs: list = field(default_factory=list)
    T: float = 0.0
    converged: bool = False


@dataclass
class CoupledSolution:
    scenario: object
    grid: object
    physics: object
    times: np.ndarray
    rho: list                # DensityField per snapshot
    v: list                  # (3, N1, N2, N3) per snapshot
    shells: list             # ShellState per snapshot
    log: ContractionLog
    outer_iterations: int
    T_final: float
    momentum: object = None  # final MomentumSolution

    def trajectory(self):
        return VelocityTrajectory(self.scenario, self.grid, self.times, self.v, self.shells)

    def mass_series(self):
        out = []
        for k in range(self.times.size):
            fr = build_frame(self.scenario, self.shells[k], self.grid)
            out.append(mass_integral(self.rho[k], fr))
        return np.asarray(out)


def outer_map(scenario, grid, physics, basis, config, rho_list, times, ics):
    """One application of the composed map: momentum solve then transport."""
    sol = solve_momentum_structure(scenario, grid, basis, physics, config.eps,
                                   rho_list, times, ics.v0, ics.eta0, ics.eta_star,
                                   tol=config.inner_tol, max_iter=config.inner_max_iter,
                                   theta=config.theta, cc_tol=config.cc_tol)
    traj = VelocityTrajectory(scenario, grid, times, sol.v_fields, sol.shells)
    rho_new = solve_density_series(ics.rho0, traj, substeps=config.substeps,
                                   drift_tol=config.drift_tol,
                                   interp_mode=config.interp_mode)
    return rho_new, sol


def run_coupled(scenario, grid, physics, ics, T_init, tol=1e-8, max_outer=20,
                halving_limit=4, config=None, checkpoint_cb=None, resume=None):
    """Picard iteration of the outer map with time-interval halving.

    Starts from the constant-in-time extension of the initial density.  If the
    measured ratio fails to contract twice, the horizon is halved and the
    iteration restarts from time zero.
    """
    config = config or CoupledConfig()
    basis = build_basis(config.n_shell, config.n_interior, grid, scenario)
    T = float(T_init)

    for halving in range(halving_limit + 1):
        nsteps = max(int(round(T / config.dt)), 2)
        times = np.arange(nsteps + 1) * (T / nsteps)
        log = ContractionLog(T=T)

        if resume is not None and np.isclose(resume["T"], T):
            rho_list = resume["rho_list"]
            start_iter = resume["iteration"]
            log.diffs = list(resume.get("diffs", []))
            log.ratios = list(resume.get("ratios", []))
            resume = None
        else:
            rho_list = [DensityField(ics.rho0.rho.copy(), ics.rho0.a, ics.rho0.gamma)
                        for _ in range(times.size)]
            start_iter = 0

        sol = None
        prev_diff = log.diffs[-1] if log.diffs else None
        stalls = 0
        restart = False
        for it in range(start_iter, max_outer):
            try:
                rho_new, sol = outer_map(scenario, grid, physics, basis, config,
                                         rho_list, times, ics)
            except NoContraction:
                restart = True
                break
            diff = y_norm_density([rho_new[k].rho - rho_list[k].rho
                                   for k in range(times.size)], times, grid)
            log.diffs.append(diff)
            if prev_diff not in (None, 0.0):
                ratio = diff / prev_diff
                log.ratios.append(ratio)
                if ratio >= 1.0:
                    stalls += 1
                    if stalls >= 2:
                        restart = True
                        break
                else:
                    stalls = 0
            rho_list = rho_new
            if checkpoint_cb is not None:
                checkpoint_cb({"T": T, "iteration": it + 1, "rho_list": rho_list,
                               "diffs": log.diffs, "ratios": log.ratios})
            if diff <= tol:
                log.converged = True
                return CoupledSolution(scenario, grid, physics, times, rho_list,
                                       sol.v_fields, sol.shells, log, it + 1, T, sol)
            prev_diff = diff
        if not restart and not log.converged:
            restart = True  # exhausted max_outer at this horizon
        T *= 0.5
    raise HalvingExhausted(
        f"no contraction after {halving_limit} halvings (last T = {2 * T:g})")


# --- diagnostics -----------------------------------------------------------------


def _check_same_discretization(run1, run2):
    if not run1.grid.same_grid(run2.grid):
        raise GridMismatch("runs live on different grids")
    if run1.times.size != run2.times.size or not np.allclose(run1.times, run2.times):
        raise GridMismatch("runs use different time grids")


def difference_transport_check(run1, run2):
    """Discrete residuals of the difference system between two coupled runs.

    Evaluates both recastings: the Jacobian-weighted form J_1 d_t(drho) = g
    and the transport form d_t(drho) + u_1 . grad(drho) + delta_1 drho = f,
    where g and f collect every cross-term of the two runs.  Both vanish
    identically for identical runs and at discretization order otherwise.
    """
    _check_same_discretization(run1, run2)
    g = run1.grid
    times = run1.times
    K = times.size

    d_rho = [run1.rho[k].rho - run2.rho[k].rho for k in range(K)]
    d_rho_t = time_derivative(d_rho, times, 1)
    rho2_t = time_derivative([r.rho for r in run2.rho], times, 1)

    res_jacobian = []
    res_transport = []
    for k in range(K):
        fr1 = build_frame(run1.scenario, run1.shells[k], g)
        fr2 = build_frame(run2.scenario, run2.shells[k], g)
        v1, v2 = run1.v[k], run2.v[k]
        r1, r2 = run1.rho[k].rho, run2.rho[k].rho
        u1, del1, _ = effective_field_from_state(fr1, v1)
        u2, del2, _ = effective_field_from_state(fr2, v2)

        adv1 = np.einsum("i...,i...->...", u1, g.grad(r1))
        adv2 = np.einsum("i...,i...->...", u2, g.grad(r2))
        gbar = -(fr1.J - fr2.J) * rho2_t[k] \
            - (fr1.J * adv1 - fr2.J * adv2) \
            - (fr1.J * del1 * r1 - fr2.J * del2 * r2)
        res_jacobian.append(g.l2_norm(fr1.J * d_rho_t[k] - gbar))

        d_adv = np.einsum("i...,i...->...", u1, g.grad(d_rho[k]))
        fbar = -np.einsum("i...,i...->...", u1 - u2, g.grad(r2)) - (del1 - del2) * r2
        res_transport.append(g.l2_norm(d_rho_t[k] + d_adv + del1 * d_rho[k] - fbar))

    return {
        "jacobian_form": np.asarray(res_jacobian),
        "transport_form": np.asarray(res_transport),
        "difference_fields": d_rho,
    }


def coupled_residuals(solution, eps_in_operator=True):
    """Strong-form residual norms of the converged coupled trajectory.

    Returns the momentum, shell, and continuity residual L2 norms (max over
    interior snapshot times).  The shell operator optionally includes the
    structural corrector actually used by the run.
    """
    g = solution.grid
    ph = solution.physics
    times = solution.times
    K = times.size
    scen = solution.scenario
    eta0 = solution.shells[0].eta
    eta_star = solution.shells[0].eta_t
    frame0 = build_frame(scen, ShellState(eta0, eta_star), g)

    sources = evaluate_source_terms(scen, g, times, solution.shells, solution.v,
                                    solution.rho, frame0, ph)
    vt = time_derivative(solution.v, times, 1)
    rho0 = solution.rho[0].rho

    eta_snaps = [s.eta for s in solution.shells]
    etat_snaps = [s.eta_t for s in solution.shells]
    eta_tt = time_derivative(eta_snaps, times, 2)

    eps = solution.momentum.system.eps if (eps_in_operator and solution.momentum) else 0.0

    mom, shell, cont = [], [], []
    for k in range(1, K - 1):
        rho_g = solution.rho[k].rho ** ph.gamma
        stress0 = transformed_stress(solution.v[k], rho_g, frame0, ph)
        R_m = frame0.J * rho0 * vt[k] - g.matrix_row_divergence(stress0 - sources.H[k]) \
            - sources.h[k]
        mom.append(g.l2_norm(R_m))

        lap = g.surf_laplacian
        rhs = (sources.H[k] - stress0)[2, 2, :, :, -1]
        R_s = (eta_tt[k] - lap(etat_snaps[k]) + lap(lap(eta_snaps[k]))
               + eps * lap(lap(etat_snaps[k])) - rhs)
        R_s = R_s - R_s.mean()  # constant shell mode is outside the modal space
        shell.append(g.surf_l2_norm(R_s))

        fr = build_frame(scen, solution.shells[k], g)
        u, delta, _ = effective_field_from_state(fr, solution.v[k])
        rho_t = time_derivative([r.rho for r in solution.rho], times, 1)[k]
        adv = np.einsum("i...,i...->...", u, g.grad(solution.rho[k].rho))
        cont.append(g.l2_norm(rho_t + adv + delta * solution.rho[k].rho))

    return {"momentum": float(np.max(mom)), "shell": float(np.max(shell)),
            "continuity": float(np.max(cont))}
