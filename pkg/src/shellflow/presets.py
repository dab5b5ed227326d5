"""Built-in initial-data scenarios.

Every kinematic preset returns data whose fluid trace matches the shell
velocity nodewise and whose initial accelerations balance, so runs start from
admissible, compatible states.  The dedicated transport preset prescribes an
analytic effective field with a closed-form density for oracle comparisons.
"""

from dataclasses import dataclass

import numpy as np

from .coupling import InitialData
from .errors import UnknownPreset
from .galerkin import solve_compatible_eta_star
from .geometry import SlabScenario
from .transport import AnalyticTransportField, DensityField

PRESET_NAMES = ("rest", "shell-pulse", "manufactured-transport", "manufactured-coupled")


def preset_scenario(config):
    """Scenario for a preset run.

    Kinematic presets widen the cutoff plateau so the one-sided vertical
    stencil at the shell face stays inside it, which keeps the discrete
    surface-acceleration balance clean at the default resolution.
    """
    name = config.run.preset
    if name in ("shell-pulse", "manufactured-coupled", "rest"):
        g = config.geometry
        L = 0.45 * g.Hz
        return SlabScenario(g.P1, g.P2, g.Hz, L, -L / 3.0, -0.75 * L,
                            g.J_floor, g.det_floor, g.newton_tol, g.newton_max_iter)
    return config.scenario()


@dataclass
class TransportPreset:
    """Analytic transport problem with closed-form flow and density."""

    scenario: object
    source: AnalyticTransportField
    rho0: DensityField
    c1: float
    c2: float
    amp3: float

    def rho0_fn(self, x1, x2, x3):
        return (1.0 + 0.2 * np.sin(2.0 * np.pi * x1 / self.scenario.P1)
                * np.cos(2.0 * np.pi * x2 / self.scenario.P2)
                + 0.1 * np.sin(np.pi * x3 / self.scenario.Hz))

    def exact_density(self, t, grid):
        """Closed-form solution: separable vertical flow plus lateral translation.

        The vertical characteristic obeys w(s) = tan(pi x3 / (2 Hz)) growing
        exponentially in s; the compression integral reduces to a logarithm of
        the (1 + w^2) ratio, so the transported density is explicit.
        """
        Hz = self.scenario.Hz
        kk = self.amp3 * np.pi / Hz
        X1, X2, X3 = grid.mesh()
        w_t = np.tan(0.5 * np.pi * X3 / Hz)
        w_0 = w_t * np.exp(-kk * t)  # backward to time 0
        x3_0 = (2.0 * Hz / np.pi) * np.arctan(w_0)
        y1 = (X1 - self.c1 * t) % grid.P1
        y2 = (X2 - self.c2 * t) % grid.P2
        comp = kk * t - np.log((1.0 + w_t ** 2) / (1.0 + w_0 ** 2))
        return self.rho0_fn(y1, y2, x3_0) * np.exp(-comp)


def _transport_preset(scenario, grid, physics):
    c1, c2, amp3 = 0.2, -0.15, 0.12
    Hz = scenario.Hz

    def u_fn(t, p):
        out = np.empty((3, p.shape[1]))
        out[0] = c1
        out[1] = c2
        out[2] = amp3 * np.sin(np.pi * p[2] / Hz)
        return out

    def delta_fn(t, p):
        return amp3 * (np.pi / Hz) * np.cos(np.pi * p[2] / Hz)

    pr = TransportPreset(scenario, AnalyticTransportField(u_fn, delta_fn),
                         None, c1, c2, amp3)
    X1, X2, X3 = grid.mesh()
    pr.rho0 = DensityField(pr.rho0_fn(X1, X2, X3), physics.a, physics.gamma)
    return pr


def load_preset(name, scenario, grid, physics):
    """Initial data bundle for a named preset."""
    N1, N2, N3 = grid.N1, grid.N2, grid.N3
    if name == "rest":
        rho0 = DensityField(np.ones((N1, N2, N3)), physics.a, physics.gamma)
        return InitialData(rho0, np.zeros((3, N1, N2, N3)),
                           np.zeros((N1, N2)), np.zeros((N1, N2)))
    if name == "shell-pulse":
        Y1, _ = grid.surface_mesh()
        eta0 = 0.02 * np.sin(2.0 * np.pi * Y1 / grid.P1)
        rho0 = DensityField(np.ones((N1, N2, N3)), physics.a, physics.gamma)
        eta_star, v0 = solve_compatible_eta_star(scenario, grid, rho0, eta0, physics)
        return InitialData(rho0, v0, eta0, eta_star)
    if name == "manufactured-coupled":
        Y1, Y2 = grid.surface_mesh()
        eta0 = (0.015 * np.sin(2.0 * np.pi * Y1 / grid.P1)
                + 0.008 * np.cos(4.0 * np.pi * Y1 / grid.P1))
        X3 = grid.x3
        rho_vals = (1.0 + 0.05 * np.sin(2.0 * np.pi * Y1 / grid.P1)[:, :, None]
                    * (X3 / grid.Hz)[None, None, :] ** 2)
        rho0 = DensityField(rho_vals, physics.a, physics.gamma)
        eta_star, v0 = solve_compatible_eta_star(scenario, grid, rho0, eta0, physics)
        return InitialData(rho0, v0, eta0, eta_star)
    if name == "manufactured-transport":
        return _transport_preset(scenario, grid, physics)
    raise UnknownPreset(f"{name!r} is not one of {PRESET_NAMES}")
