"""Plain-text sectioned run configuration.

One INI-style file fully determines a run: domain, boundary data, initial
data, viscous potential, scheme parameters, congestion parameters, and
output policy.  No environment variables are consulted; the only override
the tools accept is the output directory flag.  Config errors carry the
file name and line of the offending key so they are actionable from the
command line.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field

_REQUIRED_SECTIONS = ("domain", "boundary", "initial", "potential", "scheme")
_SIDES_1D = ("left", "right")
_SIDES_2D = ("left", "right", "bottom", "top")


class ConfigError(Exception):
    """Malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    """Validated parameters of one run."""

    path: str
    name: str
    dim: int
    resolution: tuple
    boundary: dict
    rhob: float
    density_spec: str
    velocity_spec: str
    mu0: float
    mu1: float
    eta0: float
    eta1: float
    q: float
    delta: float
    alpha: float
    rho_star: float
    tau_c: float
    dt: float
    horizon: float
    eps: float
    modes: int
    picard_tol: float
    picard_max: int
    freeze_density: bool
    freeze_velocity: bool
    d_lower: float
    d_upper: float
    defect_blocks: int
    snapshot_stride: int
    seed: int
    outdir: str
    sweep: dict = field(default_factory=dict)
    raw_text: str = ""

    def config_hash(self) -> str:
        """Stable digest of the canonical config text."""
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]

    def canonical_text(self) -> str:
        """Normalized rendering; identical configs hash identically."""
        lines = [f"# name = {self.name}", "", "[domain]", f"dim = {self.dim}"]
        lines.append(
            "resolution = " + ",".join(str(r) for r in self.resolution)
        )
        lines.append("")
        lines.append("[boundary]")
        for side in sorted(self.boundary):
            vec = ",".join(repr(float(c)) for c in self.boundary[side])
            lines.append(f"{side} = {vec}")
        lines.append(f"rhob = {self.rhob!r}")
        lines.append("")
        lines.append("[initial]")
        lines.append(f"density = {self.density_spec}")
        lines.append(f"velocity = {self.velocity_spec}")
        lines.append("")
        lines.append("[potential]")
        for k in ("mu0", "mu1", "eta0", "eta1", "q", "delta"):
            lines.append(f"{k} = {getattr(self, k)!r}")
        lines.append("")
        lines.append("[scheme]")
        for k in (
            "dt",
            "horizon",
            "eps",
            "modes",
            "picard_tol",
            "picard_max",
            "freeze_density",
            "freeze_velocity",
        ):
            lines.append(f"{k} = {getattr(self, k)!r}")
        lines.append("")
        lines.append("[congestion]")
        for k in ("alpha", "rho_star", "tau_c", "d_lower", "d_upper", "defect_blocks"):
            lines.append(f"{k} = {getattr(self, k)!r}")
        lines.append("")
        lines.append("[output]")
        lines.append(f"snapshot_stride = {self.snapshot_stride}")
        lines.append(f"seed = {self.seed}")
        if self.sweep:
            lines.append("")
            lines.append("[sweep]")
            for k in sorted(self.sweep):
                lines.append(
                    f"{k} = " + ",".join(repr(v) for v in self.sweep[k])
                )
        return "\n".join(lines) + "\n"


def _line_of(text: str, section: str, key: str = None) -> int:
    """1-based line of a section header or of a key inside it."""
    insection = False
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            if insection and key is not None:
                break
            insection = stripped[1:-1].strip() == section
            if insection and key is None:
                return i
            continue
        if insection and key is not None:
            head = stripped.split("=", 1)[0].strip()
            if head == key:
                return i
    return 0


class _Section:
    """Typed getters over one section with anchored errors."""

    def __init__(self, parser, path, text, name):
        self.path = path
        self.text = text
        self.name = name
        self.present = parser.has_section(name)
        self.items = dict(parser.items(name)) if self.present else {}

    def _fail(self, key, msg):
        line = _line_of(self.text, self.name, key)
        anchor = f"{self.path}:{line}" if line else self.path
        raise ConfigError(f"{anchor}: [{self.name}] {key}: {msg}")

    def raw(self, key, default=None, required=False):
        if key not in self.items:
            if required:
                self._fail(key, "missing required key")
            return default
        return self.items[key].strip()

    def floatval(self, key, default=None, required=False, positive=False):
        s = self.raw(key, None, required)
        if s is None:
            return default
        try:
            v = float(s)
        except ValueError:
            self._fail(key, f"expected a number, got {s!r}")
        if positive and not v > 0.0:
            self._fail(key, f"must be > 0, got {v}")
        return v

    def intval(self, key, default=None, required=False, positive=False):
        s = self.raw(key, None, required)
        if s is None:
            return default
        try:
            v = int(s)
        except ValueError:
            self._fail(key, f"expected an integer, got {s!r}")
        if positive and not v > 0:
            self._fail(key, f"must be > 0, got {v}")
        return v

    def boolval(self, key, default=False):
        s = self.raw(key)
        if s is None:
            return default
        low = s.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        self._fail(key, f"expected a boolean, got {s!r}")

    def vecval(self, key, dim, required=False, default=None):
        s = self.raw(key, None, required)
        if s is None:
            return default
        parts = [p for p in s.split(",") if p.strip()]
        if len(parts) != dim:
            self._fail(key, f"expected {dim} components, got {len(parts)}")
        try:
            return tuple(float(p) for p in parts)
        except ValueError:
            self._fail(key, f"expected numbers, got {s!r}")

    def floatlist(self, key):
        s = self.raw(key)
        if s is None:
            return None
        try:
            return [float(p) for p in s.split(",") if p.strip()]
        except ValueError:
            self._fail(key, f"expected a comma list of numbers, got {s!r}")


def load_config(path: str) -> RunConfig:
    """Parse and validate one run configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    for sec in _REQUIRED_SECTIONS:
        if not parser.has_section(sec):
            raise ConfigError(f"{path}:1: missing required section [{sec}]")

    dom = _Section(parser, path, text, "domain")
    bnd = _Section(parser, path, text, "boundary")
    ini = _Section(parser, path, text, "initial")
    pot = _Section(parser, path, text, "potential")
    sch = _Section(parser, path, text, "scheme")
    cng = _Section(parser, path, text, "congestion")
    out = _Section(parser, path, text, "output")
    swp = _Section(parser, path, text, "sweep")

    dim = dom.intval("dim", required=True)
    if dim not in (1, 2):
        dom._fail("dim", f"dimension must be 1 or 2, got {dim}")
    res_raw = dom.raw("resolution", required=True)
    try:
        res = tuple(int(p) for p in res_raw.split(",") if p.strip())
    except ValueError:
        dom._fail("resolution", f"expected integers, got {res_raw!r}")
    if len(res) == 1 and dim == 2:
        res = (res[0], res[0])
    if len(res) != dim:
        dom._fail("resolution", f"expected {dim} entries, got {len(res)}")
    for r in res:
        if r < 4:
            dom._fail("resolution", f"need >= 4 cells per axis, got {r}")

    sides = _SIDES_1D if dim == 1 else _SIDES_2D
    boundary = {}
    for side in sides:
        boundary[side] = bnd.vecval(side, dim, required=True)
    rhob = bnd.floatval("rhob", default=1.0)
    if not 0.0 < rhob <= 1.0:
        bnd._fail("rhob", f"must lie in (0, 1], got {rhob}")

    density_spec = ini.raw("density", required=True)
    velocity_spec = ini.raw("velocity", default="zero")

    mu0 = pot.floatval("mu0", required=True, positive=True)
    mu1 = pot.floatval("mu1", default=0.0)
    eta0 = pot.floatval("eta0", default=0.0)
    eta1 = pot.floatval("eta1", default=0.0)
    q = pot.floatval("q", default=2.0)
    if not q > 1.0:
        pot._fail("q", f"exponent must be > 1, got {q}")
    delta = pot.floatval("delta", default=0.0)
    if delta < 0.0:
        pot._fail("delta", f"must be >= 0, got {delta}")
    if dim == 1 and not eta0 > 0.0:
        pot._fail("eta0", "dimension 1 needs a positive trace coefficient")

    dt = sch.floatval("dt", required=True, positive=True)
    horizon = sch.floatval("horizon", required=True, positive=True)
    eps = sch.floatval("eps", required=True, positive=True)
    modes = sch.intval("modes", default=4, positive=True)
    picard_tol = sch.floatval("picard_tol", default=1e-10, positive=True)
    picard_max = sch.intval("picard_max", default=25, positive=True)
    freeze_density = sch.boolval("freeze_density", False)
    freeze_velocity = sch.boolval("freeze_velocity", False)
    if freeze_density and freeze_velocity:
        sch._fail("freeze_density", "cannot freeze both fields")

    alpha = cng.floatval("alpha", default=40.0)
    if not alpha > 1.0:
        cng._fail("alpha", f"exponent must be > 1, got {alpha}")
    rho_star = cng.floatval("rho_star", default=1.0, positive=True)
    tau_c = cng.floatval("tau_c", default=0.01, positive=True)
    d_lower = cng.floatval("d_lower", default=2.0 / dim, positive=True)
    d_upper = cng.floatval("d_upper", default=2.0, positive=True)
    defect_blocks = cng.intval("defect_blocks", default=0)
    if defect_blocks == 0:
        defect_blocks = max(2, min(r // 4 for r in res))

    snapshot_stride = out.intval("snapshot_stride", default=0)
    if snapshot_stride == 0:
        nsteps = max(1, int(round(horizon / dt)))
        snapshot_stride = max(1, nsteps // 50)
    seed = out.intval("seed", default=20240801)
    outdir = out.raw("dir", default="")

    sweep = {}
    if swp.present:
        for key in swp.items:
            if key not in ("alpha", "delta", "eps", "modes", "resolution", "dt"):
                swp._fail(key, "unknown sweep axis")
            vals = swp.floatlist(key)
            if not vals or len(vals) < 2:
                swp._fail(key, "a sweep axis needs at least 2 values")
            sweep[key] = vals

    import os

    name = os.path.splitext(os.path.basename(path))[0]
    return RunConfig(
        path=path,
        name=name,
        dim=dim,
        resolution=res,
        boundary=boundary,
        rhob=rhob,
        density_spec=density_spec,
        velocity_spec=velocity_spec,
        mu0=mu0,
        mu1=mu1,
        eta0=eta0,
        eta1=eta1,
        q=q,
        delta=delta,
        alpha=alpha,
        rho_star=rho_star,
        tau_c=tau_c,
        dt=dt,
        horizon=horizon,
        eps=eps,
        modes=modes,
        picard_tol=picard_tol,
        picard_max=picard_max,
        freeze_density=freeze_density,
        freeze_velocity=freeze_velocity,
        d_lower=d_lower,
        d_upper=d_upper,
        defect_blocks=defect_blocks,
        snapshot_stride=snapshot_stride,
        seed=seed,
        outdir=outdir,
        sweep=sweep,
        raw_text=text,
    )
