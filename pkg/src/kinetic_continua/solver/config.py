"""Scenario files: strict TOML parsing into solver objects and initial states.

Sections: ``scenario``, ``grid``, ``material``, ``boundary.<side>``, ``sources``,
``initial``, ``solver``, ``output``. Unknown sections or keys are errors.
Tensors may be written as a 3x3 nested list, as 9 row-major numbers or, when
symmetric, as 6 numbers in the order 11, 22, 33, 12, 13, 23.
"""

import hashlib
import os
from dataclasses import dataclass, field, fields

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..constitutive import MaterialParams
from ..errors import ConfigError
from ..tensors import vec6_to_sym
from .equations import Problem, apply_plane_flow, impose_boundary_values
from .grid import SIDES, BoundarySpec, Grid, SideBC
from .state import FieldState, SolverConfig, SourceSpec

INITIAL_KINDS = ("uniform", "example1", "example2_temporal", "example2_spatial", "example3", "example4", "file", "smooth")

ALLOWED = {
    "scenario": {"name", "seed"},
    "grid": {"cells", "lengths", "periodic"},
    "material": {f.name for f in fields(MaterialParams)},
    "sources": {"f", "M", "S", "lambda_heat"},
    "initial": {
        "kind", "rho", "u", "Y", "B", "H", "eps", "v", "chi0", "Y33", "u_mag", "path", "amplitude",
        "ferment_scale",
    },
    "solver": {f.name for f in fields(SolverConfig) if f.name != "snapshot_every"} | {"steady_tol"},
    "output": {"directory", "snapshot_every", "snapshots", "diagnostics"},
}
SIDE_KEYS = {f.name for f in fields(SideBC)}


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "out"
    snapshot_every: float = None
    snapshots: bool = True
    diagnostics: bool = True


@dataclass
class ScenarioConfig:
    name: str
    grid: Grid
    params: MaterialParams
    boundary: BoundarySpec
    sources: SourceSpec
    initial: dict
    solver: SolverConfig
    output: OutputSpec
    seed: int = 0
    steady_tol: float = None
    config_hash: str = ""
    base_dir: str = "."
    problem: Problem = field(default=None, repr=False)


def tensor(value, key, symmetric=False):
    a = np.asarray(value, dtype=float)
    if a.shape == (3, 3):
        t = a
    elif a.shape == (9,):
        t = a.reshape(3, 3)
    elif a.shape == (6,):
        t = vec6_to_sym(a)
    else:
        raise ConfigError(f"{key}: expected a 3x3 tensor (nested, 9 or 6 numbers), got shape {a.shape}", key=key)
    if symmetric and not np.allclose(t, t.T, rtol=0, atol=1e-14 * (1 + np.max(np.abs(t)))):
        raise ConfigError(f"{key}: tensor must be symmetric", key=key)
    return t


def vector(value, key, n=3):
    a = np.asarray(value, dtype=float)
    if a.shape != (n,):
        raise ConfigError(f"{key}: expected {n} numbers", key=key)
    return a


def _check_keys(section, allowed, prefix):
    if not isinstance(section, dict):
        raise ConfigError(f"[{prefix}] must be a table", key=prefix)
    for k in section:
        if k not in allowed:
            raise ConfigError(f"unknown key '{prefix}.{k}'", key=f"{prefix}.{k}")


def _wrap(key, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc}", key=key) from exc


def parse_scenario(text, base_dir=".", name_hint="scenario"):
    """Parse scenario TOML text into a :class:`ScenarioConfig` (raises :class:`ConfigError`)."""
    raw = text.encode() if isinstance(text, str) else text
    try:
        data = tomllib.loads(raw.decode())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from exc
    for sec in data:
        if sec not in ALLOWED and sec != "boundary":
            raise ConfigError(f"unknown section [{sec}]", key=sec)
    for sec, allowed in ALLOWED.items():
        _check_keys(data.get(sec, {}), allowed, sec)

    scen = data.get("scenario", {})
    g = data.get("grid", {})
    grid = _wrap("grid", lambda: Grid(
        cells=tuple(g.get("cells", (64, 0))),
        lengths=tuple(g.get("lengths", (1.0, 1.0))),
        periodic=tuple(g.get("periodic", (False, False))),
    ))
    params = _wrap("material", lambda: MaterialParams(**data.get("material", {})))

    sides = {}
    bdata = data.get("boundary", {})
    if not isinstance(bdata, dict):
        raise ConfigError("[boundary] must contain side tables", key="boundary")
    for side, spec in bdata.items():
        if side not in SIDES:
            raise ConfigError(f"unknown boundary side 'boundary.{side}'", key=f"boundary.{side}")
        _check_keys(spec, SIDE_KEYS, f"boundary.{side}")
        kw = dict(spec)
        key = f"boundary.{side}"
        if "velocity_value" in kw:
            kw["velocity_value"] = tuple(vector(kw["velocity_value"], f"{key}.velocity_value"))
        for tkey, symm in (("ferment_value", True), ("Y", True), ("B", False)):
            if tkey in kw:
                kw[tkey] = tensor(kw[tkey], f"{key}.{tkey}", symmetric=symm)
        sides[side] = _wrap(key, lambda: SideBC(**kw))
    boundary = BoundarySpec(sides)
    _wrap("boundary", lambda: boundary.validate(grid))

    s = data.get("sources", {})
    sources = _wrap("sources", lambda: SourceSpec(
        f=vector(s.get("f", (0, 0, 0)), "sources.f"),
        M=tensor(s.get("M", np.zeros((3, 3))), "sources.M"),
        S=tensor(s.get("S", np.zeros((3, 3))), "sources.S", symmetric=True),
        lambda_heat=float(s.get("lambda_heat", 0.0)),
    ))

    sol = dict(data.get("solver", {}))
    steady_tol = sol.pop("steady_tol", None)
    out = data.get("output", {})
    solver = _wrap("solver", lambda: SolverConfig(snapshot_every=out.get("snapshot_every"), **sol))
    output = _wrap("output", lambda: OutputSpec(**out))

    initial = dict(data.get("initial", {}))
    kind = initial.setdefault("kind", "uniform")
    if kind not in INITIAL_KINDS:
        raise ConfigError(f"initial.kind must be one of {INITIAL_KINDS}, got {kind!r}", key="initial.kind")

    cfg = ScenarioConfig(
        name=str(scen.get("name", name_hint)),
        grid=grid,
        params=params,
        boundary=boundary,
        sources=sources,
        initial=initial,
        solver=solver,
        output=output,
        seed=int(scen.get("seed", 0)),
        steady_tol=steady_tol,
        config_hash=hashlib.sha256(raw).hexdigest(),
        base_dir=base_dir,
    )
    cfg.problem = _wrap("scenario", lambda: Problem(grid, params, sources, boundary, solver))
    return cfg


def load_scenario(path):
    try:
        with open(path, "rb") as handle:
            raw = handle.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", key="--config") from exc
    name = os.path.splitext(os.path.basename(path))[0]
    return parse_scenario(raw, base_dir=os.path.dirname(os.path.abspath(path)), name_hint=name)


# initial conditions ---------------------------------------------------------------------

def smooth_state(grid, amplitude=0.1, thermal=False):
    """Smooth periodic fields with every component active (plane-flow pattern)."""
    z1, z2 = grid.mesh()
    k1 = 2.0 * np.pi / grid.lengths[0] if grid.active[0] else 0.0
    k2 = 2.0 * np.pi / grid.lengths[1] if grid.active[1] else 0.0
    a = amplitude
    s1, c1 = np.sin(k1 * z1), np.cos(k1 * z1)
    s2, c2 = np.sin(k2 * z2), np.cos(k2 * z2)
    sm, cm = np.sin(k1 * z1 + k2 * z2), np.cos(k1 * z1 + k2 * z2)
    shape = z1.shape
    rho = 1.0 + a * s1 * c2 + 0.5 * a * cm
    u = np.stack([0.3 + a * s2 + a * cm, -0.2 + a * c1 + 0.5 * a * sm, np.zeros(shape)], axis=-1)
    Y = np.zeros(shape + (3, 3))
    Y[..., 0, 0] = 0.10 + 0.02 * s1 * c2
    Y[..., 1, 1] = 0.08 + 0.02 * cm
    Y[..., 0, 1] = Y[..., 1, 0] = 0.01 * sm
    Y[..., 2, 2] = 0.05 + 0.01 * c1
    B = np.zeros(shape + (3, 3))
    B[..., 0, 0] = a * sm
    B[..., 0, 1] = 0.2 + a * c2
    B[..., 1, 0] = -0.1 + a * s1
    B[..., 1, 1] = -a * cm
    H = np.zeros(shape + (3, 3))
    H[..., 0, 0] = 0.5 + a * s1 * s2
    H[..., 1, 1] = 0.4 + a * cm
    H[..., 0, 1] = H[..., 1, 0] = 0.1 + 0.5 * a * c1 * c2
    H[..., 2, 2] = 0.3 + 0.5 * a * sm
    eps = 1.0 + a * c1 * s2 if thermal else None
    return FieldState(rho=rho, u=u, Y=Y, B=B, H=H, eps=eps)


def initial_state(cfg):
    """Build and boundary-adjust the initial :class:`FieldState` of a scenario."""
    from ..analytic import example_fields
    from .io import read_snapshot

    ini = cfg.initial
    grid, shape = cfg.grid, cfg.grid.shape
    kind = ini["kind"]
    thermal = cfg.solver.thermal
    eps0 = float(ini.get("eps", 1.0))

    def opt_vec(key):
        return None if key not in ini else vector(ini[key], f"initial.{key}")

    if kind == "uniform":
        state = _wrap("initial", lambda: FieldState.uniform(
            shape,
            rho=float(ini.get("rho", 1.0)),
            u=vector(ini.get("u", (0, 0, 0)), "initial.u"),
            Y=tensor(ini.get("Y", np.zeros((3, 3))), "initial.Y", symmetric=True),
            B=tensor(ini.get("B", np.zeros((3, 3))), "initial.B"),
            H=tensor(ini.get("H", np.zeros((3, 3))), "initial.H", symmetric=True),
        ))
    elif kind == "smooth":
        state = smooth_state(grid, float(ini.get("amplitude", 0.1)), thermal)
    elif kind == "file":
        if "path" not in ini:
            raise ConfigError("initial.kind = 'file' needs initial.path", key="initial.path")
        path = ini["path"] if os.path.isabs(ini["path"]) else os.path.join(cfg.base_dir, ini["path"])
        if not os.path.exists(path):
            raise ConfigError(f"initial.path: no such file {path}", key="initial.path")
        state = read_snapshot(path)[0]
        if state.rho.shape != shape:
            raise ConfigError(f"initial.path: snapshot shape {state.rho.shape} does not match grid {shape}",
                              key="initial.path")
    else:
        which = {"example1": "1", "example2_temporal": "2_temporal", "example2_spatial": "2_spatial",
                 "example3": "3", "example4": "4"}[kind]
        u = ini.get("u_mag") if which == "4" else opt_vec("u")
        ex = _wrap("initial", lambda: example_fields(
            which, cfg.params, rho=float(ini.get("rho", 1.0)), u=u, v=opt_vec("v"),
            Y33=float(ini.get("Y33", 0.0)), delta=grid.delta, chi0=float(ini.get("chi0", 1.0)),
        ))
        state = ex.state(grid)
        state.H = state.H * float(ini.get("ferment_scale", 1.0))
    if thermal and state.eps is None:
        state.eps = np.full(shape, eps0)
    if not thermal:
        state.eps = None
    impose_boundary_values(state, cfg.problem)
    if cfg.solver.plane_flow:
        apply_plane_flow(state)
    return state
