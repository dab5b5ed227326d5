"""Plain-text run configuration with typed validation errors.

Format: `[section]` headers followed by `key = value` lines; `#` starts a
comment.  Unknown keys are rejected with their line number so typos surface
immediately.
"""

from dataclasses import dataclass, field, fields as dc_fields

from .errors import InvalidValue, ParseError
from .galerkin import Physics
from .geometry import SlabScenario


@dataclass
class GeometrySection:
    P1: float = 1.0
    P2: float = 1.0
    Hz: float = 1.0
    L: float = 0.3
    s1: float = None
    s0: float = None
    N1: int = 32
    N2: int = 32
    N3: int = 32
    J_floor: float = 1e-6
    det_floor: float = 1e-8
    newton_tol: float = 1e-12
    newton_max_iter: int = 50


@dataclass
class GalerkinSection:
    n_shell: int = 8
    n_interior: int = 18
    eps: float = 1e-4
    dt: float = 1e-3
    tol: float = 1e-8
    max_iter: int = 25
    theta: float = 1.0
    cc_tol: float = 1e-6


@dataclass
class TransportSection:
    substeps: int = 8
    drift_tol: float = 1e-9
    interp: str = "tricubic"


@dataclass
class CouplingSection:
    T_init: float = 0.05
    tol: float = 1e-8
    max_outer: int = 20
    halving_limit: int = 4


@dataclass
class PhysicsSection:
    mu: float = 1.0
    lam: float = 0.0
    a: float = 1.0
    gamma: float = 1.4


@dataclass
class RunSection:
    preset: str = "rest"
    out_dir: str = "runs"
    seed: int = 0


@dataclass
class RunConfig:
    geometry: GeometrySection = field(default_factory=GeometrySection)
    galerkin: GalerkinSection = field(default_factory=GalerkinSection)
    transport: TransportSection = field(default_factory=TransportSection)
    coupling: CouplingSection = field(default_factory=CouplingSection)
    physics: PhysicsSection = field(default_factory=PhysicsSection)
    run: RunSection = field(default_factory=RunSection)

    def validate(self):
        p = self.physics
        if p.mu <= 0.0:
            raise InvalidValue("mu", "> 0")
        if p.lam + 2.0 * p.mu / 3.0 < 0.0:
            raise InvalidValue("lam", ">= -2*mu/3")
        if p.gamma <= 1.0:
            raise InvalidValue("gamma", "> 1")
        if p.a <= 0.0:
            raise InvalidValue("a", "> 0")
        g = self.geometry
        if not 0.0 < g.L < g.Hz / 2.0:
            raise InvalidValue("L", "0 < L < Hz/2")
        s1 = g.s1 if g.s1 is not None else -g.L / 4.0
        s0 = g.s0 if g.s0 is not None else -3.0 * g.L / 4.0
        if not s0 < s1 < 0.0:
            raise InvalidValue("s0", "s0 < s1 < 0")
        if min(g.N1, g.N2) < 4 or g.N3 < 6:
            raise InvalidValue("N1", "grid at least 4 x 4 x 6")
        ga = self.galerkin
        if ga.dt <= 0.0:
            raise InvalidValue("dt", "> 0")
        if not 0.0 < ga.theta <= 1.0:
            raise InvalidValue("theta", "in (0, 1]")
        if ga.eps < 0.0:
            raise InvalidValue("eps", ">= 0")
        c = self.coupling
        if c.T_init <= 0.0:
            raise InvalidValue("T_init", "> 0")
        if c.halving_limit < 0:
            raise InvalidValue("halving_limit", ">= 0")
        if self.transport.substeps < 1:
            raise InvalidValue("substeps", ">= 1")
        if self.transport.interp not in ("tricubic", "spectral"):
            raise InvalidValue("interp", "tricubic | spectral")
        return self

    def scenario(self):
        g = self.geometry
        return SlabScenario(g.P1, g.P2, g.Hz, g.L, g.s1, g.s0, g.J_floor,
                            g.det_floor, g.newton_tol, g.newton_max_iter)

    def grid(self):
        g = self.geometry
        return self.scenario().grid(g.N1, g.N2, g.N3)

    def constants(self):
        p = self.physics
        return Physics(p.mu, p.lam, p.a, p.gamma)

    def to_text(self):
        lines = []
        for sec_name in ("geometry", "galerkin", "transport", "coupling", "physics", "run"):
            sec = getattr(self, sec_name)
            lines.append(f"[{sec_name}]")
            for f in dc_fields(sec):
                v = getattr(sec, f.name)
                if v is None:
                    continue
                lines.append(f"{f.name} = {v!r}" if isinstance(v, str) else f"{f.name} = {v}")
            lines.append("")
        return "\n".join(lines)


_SECTIONS = {
    "geometry": GeometrySection,
    "galerkin": GalerkinSection,
    "transport": TransportSection,
    "coupling": CouplingSection,
    "physics": PhysicsSection,
    "run": RunSection,
}

_ALIASES = {"mu": "mu", "lambda": "lam"}


def _convert(raw, target_type, key, line_no):
    raw = raw.strip().strip("'\"")
    try:
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        return raw
    except ValueError:
        raise ParseError(line_no, f"cannot parse value for '{key}': {raw!r}")


def parse_config(text):
    """Parse config text into a validated RunConfig."""
    cfg = RunConfig()
    section = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(line_no, f"malformed section header: {raw.strip()!r}")
            name = line[1:-1].strip().lower()
            if name not in _SECTIONS:
                raise ParseError(line_no, f"unknown section [{name}]")
            section = name
            continue
        if "=" not in line:
            raise ParseError(line_no, f"expected 'key = value', got {raw.strip()!r}")
        if section is None:
            raise ParseError(line_no, "key outside of any [section]")
        key, _, val = line.partition("=")
        key = _ALIASES.get(key.strip(), key.strip())
        sec_obj = getattr(cfg, section)
        matching = {f.name: f for f in dc_fields(sec_obj)}
        if key not in matching:
            raise ParseError(line_no, f"unknown key '{key}' in [{section}]")
        ftype = matching[key].type
        if ftype is int or ftype == "int":
            target = int
        elif ftype is float or ftype == "float":
            target = float
        else:
            target = str
        setattr(sec_obj, key, _convert(val, target, key, line_no))
    return cfg.validate()


def load_config(path):
    """Read, parse, and validate a config file."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
