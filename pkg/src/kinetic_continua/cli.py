"""Command line entry point: ``kinetic-continua {run,particles,analytic,temperance}``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure (blow-up,
degeneracy, non-convergence). Every output file starts with ``#`` header
lines carrying the tool version, a configuration hash and the seed.
"""

import argparse
import csv
import hashlib
import io as _io
import json
import os
import sys
from importlib import resources

import numpy as np

from . import __version__, analytic, particles, temperance
from .errors import ConfigError, KineticContinuaError, NoConvergence, QuadratureFailure
from .solver import io as sio
from .solver.config import initial_state, load_scenario, tensor, tomllib, vector
from .solver.integrate import run as run_solver
from .tensors import SYM_INDEX, sym_to_vec6

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
SYM_NAMES = [f"{i + 1}{j + 1}" for i, j in SYM_INDEX]
EXAMPLE_SCENARIOS = {
    "1": "example1", "2_temporal": "example2_temporal", "2_spatial": "example2_spatial", "3": "example3", "4": "couette",
}


class RuntimeFailure(Exception):
    """Wraps a runtime error so it maps to exit code 3."""


# shared helpers ------------------------------------------------------------------------

def _bundled(kind):
    root = resources.files("kinetic_continua") / "scenarios"
    return root / "particles" if kind == "particles" else root


def shipped_scenarios(kind="continuum"):
    """Names of the bundled config files (``kind`` is ``"continuum"`` or ``"particles"``)."""
    return sorted(p.name[:-5] for p in _bundled(kind).iterdir() if p.name.endswith(".toml"))


def scenario_path(name_or_path, kind="continuum"):
    """A config path, or the bundled config of that name."""
    if os.path.exists(name_or_path):
        return name_or_path
    if name_or_path in shipped_scenarios(kind):
        return str(_bundled(kind) / f"{name_or_path}.toml")
    raise ConfigError(f"config file not found: {name_or_path}", key="--config")


def args_hash(args, skip=("out", "threads", "func")):
    payload = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


def _open_out(path):
    if path is None:
        return _io.StringIO()
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    return open(path, "w", newline="")


def write_table(path, header, columns, rows):
    """CSV with ``#`` header; to stdout when ``path`` is None."""
    handle = _open_out(path)
    for line in header:
        handle.write(f"# {line}\n")
    w = csv.writer(handle, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([sio.fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
    if path is None:
        sys.stdout.write(handle.getvalue())
    else:
        handle.close()


def _strict(data, allowed, prefix):
    for k in data:
        if k not in allowed:
            raise ConfigError(f"unknown key '{prefix}{k}'", key=f"{prefix}{k}")


def _read_toml(path):
    try:
        with open(path, "rb") as handle:
            raw = handle.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", key="--config") from exc
    try:
        return tomllib.loads(raw.decode()), hashlib.sha256(raw).hexdigest()
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from exc


# run -----------------------------------------------------------------------------------

def cmd_run(args):
    cfg = load_scenario(scenario_path(args.config))
    seed = cfg.seed if args.seed is None else args.seed
    out = args.out or cfg.output.directory
    every = args.snapshot_every if args.snapshot_every is not None else cfg.output.snapshot_every
    state = initial_state(cfg)
    try:
        result = run_solver(state, cfg.problem, snapshot_every=every, steady_tol=cfg.steady_tol)
    except KineticContinuaError as exc:
        raise RuntimeFailure(str(exc)) from exc
    os.makedirs(out, exist_ok=True)
    header = sio.header_lines(__version__, cfg.config_hash, seed, [f"scenario {cfg.name}"])
    if cfg.output.snapshots:
        for k, (t, snap) in enumerate(zip(result.times, result.snapshots)):
            sio.write_snapshot(os.path.join(out, f"snapshot_{k:05d}.csv"), cfg.grid, snap, header + [f"tau {sio.fmt(t)}"])
    if cfg.output.diagnostics:
        sio.write_diagnostics(os.path.join(out, "diagnostics.csv"), result.times, result.diagnostics, header)
    print(
        f"{cfg.name}: {result.steps} steps to tau = {result.times[-1]:.6g}; "
        f"max H projection {result.max_projection('H'):.3g}; output in {out}"
    )
    return EXIT_OK


# particles -----------------------------------------------------------------------------

PARTICLE_KEYS = {"kind", "n", "seed", "spread", "speed", "masses", "positions", "velocities", "v"}
FORCE_KEYS = {"kind", "g", "stiffness", "rest_length", "plane", "seed", "amplitude", "n_modes", "confinement"}
INTEGRATION_KEYS = {"dt", "steps", "sample_every", "refine"}


def build_particles(data, seed):
    """Particle system and force law from a parsed particle config."""
    _strict(data, {"particles", "force", "integration", "scenario"}, "")
    p = data.get("particles", {})
    _strict(p, PARTICLE_KEYS, "particles.")
    f = data.get("force", {})
    _strict(f, FORCE_KEYS, "force.")
    kind = p.get("kind", "random")
    rng = np.random.default_rng(int(p.get("seed", seed)))
    n = int(p.get("n", 64))
    if kind == "random":
        pos = rng.normal(scale=float(p.get("spread", 1.0)), size=(n, 3))
        vel = rng.normal(scale=float(p.get("speed", 0.3)), size=(n, 3))
    elif kind == "explicit":
        if "positions" not in p or "velocities" not in p:
            raise ConfigError("explicit particles need positions and velocities", key="particles.positions")
        pos, vel = np.asarray(p["positions"], float), np.asarray(p["velocities"], float)
        n = len(pos)
    elif kind == "counter_streaming":
        half = max(n // 2, 1)
        base = rng.normal(scale=float(p.get("spread", 1.0)), size=(half, 3))
        v = vector(p.get("v", (0.0, 1.0, 0.0)), "particles.v")
        pos = np.concatenate([base, base])
        vel = np.concatenate([np.tile(v, (half, 1)), np.tile(-v, (half, 1))])
        n = 2 * half
    else:
        raise ConfigError(f"particles.kind must be random, explicit or counter_streaming, got {kind!r}",
                          key="particles.kind")
    masses = p.get("masses", "uniform")
    masses = np.ones(n) if masses == "uniform" else np.asarray(masses, dtype=float)
    fkind = f.get("kind", "none")
    if fkind == "none":
        force = particles.no_force
    elif fkind == "gravity":
        force = particles.uniform_gravity(vector(f.get("g", (0.0, 0.0, -1.0)), "force.g"))
    elif fkind == "central_harmonic":
        force = particles.central_harmonic(float(f.get("stiffness", 1.0)), plane=bool(f.get("plane", False)))
    elif fkind == "harmonic_pair":
        force = particles.harmonic_pair(float(f.get("stiffness", 1.0)), float(f.get("rest_length", 0.0)))
    elif fkind == "smooth_random":
        force = particles.smooth_random_force(
            int(f.get("seed", seed)), n_modes=int(f.get("n_modes", 4)), amplitude=float(f.get("amplitude", 0.5)),
            confinement=float(f.get("confinement", 1.0)),
        )
    else:
        raise ConfigError(f"unknown force.kind {fkind!r}", key="force.kind")
    try:
        system = particles.ParticleSystem(masses=masses, positions=pos, velocities=vel, force=force)
    except ValueError as exc:
        raise ConfigError(str(exc), key="particles") from exc
    return system, fkind


def cmd_particles(args):
    data, digest = _read_toml(scenario_path(args.config, "particles"))
    seed = int(data.get("scenario", {}).get("seed", 0)) if args.seed is None else args.seed
    integ = data.get("integration", {})
    _strict(integ, INTEGRATION_KEYS, "integration.")
    dt = float(integ.get("dt", 1e-3))
    steps = int(integ.get("steps", 1000))
    every = int(integ.get("sample_every", 1))
    if dt <= 0 or steps < 2 or every < 1:
        raise ConfigError("integration needs dt > 0, steps >= 2 and sample_every >= 1", key="integration")
    system, fkind = build_particles(data, seed)
    out = args.out or "out/particles"
    header = sio.header_lines(__version__, digest, seed)
    try:
        traj, _, _ = particles.simulate(system, dt, steps, every)
        norms = particles.residual_norms(traj, dt * every)
        split = max(float(np.max(np.abs(particles.moment_split_residual(a)))) for a in traj)
        refined = None
        if integ.get("refine", False):
            system2, _ = build_particles(data, seed)
            traj2, _, _ = particles.simulate(system2, 0.5 * dt, 2 * steps, every)
            refined = particles.residual_norms(traj2, 0.5 * dt * every)
        drift = None
        if fkind in ("none", "gravity"):
            d = particles.conservation_check(traj)
            scale = max(float(np.max(np.abs(particles.tensor_energy_invariant(traj[0])))), 1e-300)
            drift = float(np.max(np.abs(d))) / scale
    except KineticContinuaError as exc:
        raise RuntimeFailure(str(exc)) from exc
    os.makedirs(out, exist_ok=True)
    particles.write_trajectory_csv(os.path.join(out, "trajectory.csv"), traj, dt * every, header)
    columns = ["residual", "max_norm"] + (["max_norm_half_dt", "ratio"] if refined else [])
    rows = []
    for key, value in norms.items():
        row = [key, value]
        if refined:
            row += [refined[key], value / refined[key] if refined[key] > 0 else float("inf")]
        rows.append(row)
    rows.append(["moment_split_identity", split] + (["", ""] if refined else []))
    if drift is not None:
        rows.append(["tensor_energy_drift_rel", drift] + (["", ""] if refined else []))
    write_table(os.path.join(out, "residuals.csv"), header, columns, rows)
    write_table(None, [], columns, rows)
    return EXIT_OK


# analytic ------------------------------------------------------------------------------

def cmd_analytic(args):
    header = sio.header_lines(__version__, args_hash(args), 0)
    if args.what == "stationary":
        if args.alpha == 0:
            rep = analytic.example4_alpha_zero(args.rho, args.gamma, args.L12, 1.0)
            rows = [
                ["L12", rep.L12, "input"],
                ["H12", rep.H12, "derived from the (1,1) equation"],
                ["H12_printed", rep.printed_H12, "printed"],
                ["residual_22", rep.residual_22, "derived"],
            ]
            write_table(args.out, header + [f"note {rep.note}"], ["quantity", "value", "form"], rows)
            return EXIT_OK
        st = analytic.stationary_shear(args.rho, args.alpha, args.gamma, args.eta3, args.L12, args.Y33)
        printed = analytic.printed_stationary_H(args.rho, args.alpha, args.gamma, args.L12)
        rows = [[f"H{c}", st.H[i, j], "derived"] for c, (i, j) in zip(SYM_NAMES, SYM_INDEX)]
        rows.append(["H11_printed", printed[0, 0], "printed"])
        rows += [["B12", st.B12, "derived"], ["Y33", st.Y33, "input"]]
        rows += [[f"extra_stress{c}", st.extra_stress[i, j], "derived"] for c, (i, j) in zip(SYM_NAMES, SYM_INDEX)]
        rows.append(["algebraic_residual", analytic.shear_residual(st), "derived"])
        write_table(args.out, header, ["quantity", "value", "form"], rows)
        return EXIT_OK
    if args.what == "dispersion":
        d = analytic.dispersion(args.beta, args.u, args.alpha, args.gamma_hat, convention=args.convention)
        rows = [[f"root{k + 1}", z, r] for k, (z, r) in enumerate(zip(d.roots, d.residuals()))]
        dec = d.decaying_root
        extra = [f"convention {d.convention}", f"regime {d.regime}",
                 f"decaying_root {'none' if dec is None else sio.fmt(dec)}",
                 f"alpha_interval {sio.fmt(d.interval[0])} {sio.fmt(d.interval[1])}"]
        write_table(args.out, header + extra, ["root", "value", "residual"], rows)
        return EXIT_OK
    # closed-form example fields in the snapshot schema
    cfg = load_scenario(scenario_path(args.config or EXAMPLE_SCENARIOS[args.number]))
    ini = cfg.initial
    which = args.number
    u = ini.get("u_mag") if which == "4" else (None if "u" not in ini else vector(ini["u"], "initial.u"))
    v = None if "v" not in ini else vector(ini["v"], "initial.v")
    ex = analytic.example_fields(which, cfg.params, rho=float(ini.get("rho", 1.0)), u=u, v=v,
                                 Y33=float(ini.get("Y33", 0.0)), delta=cfg.grid.delta,
                                 chi0=float(ini.get("chi0", 1.0)))
    state = ex.state(cfg.grid, args.time)
    if cfg.solver.plane_flow:
        from .solver.equations import apply_plane_flow

        apply_plane_flow(state)
    header = sio.header_lines(__version__, cfg.config_hash, cfg.seed, [f"example {which}", f"tau {sio.fmt(args.time)}"])
    out = args.out or f"out/example{which}_exact.csv"
    if os.path.isdir(out) or out.endswith(os.sep):
        out = os.path.join(out, f"example{which}_exact.csv")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    sio.write_snapshot(out, cfg.grid, state, header)
    print(f"closed-form example {which} at tau = {args.time:g} written to {out}")
    return EXIT_OK


# temperance ----------------------------------------------------------------------------

def _parse_tensor_arg(values, key, symmetric=True):
    try:
        return tensor([float(x) for x in values], key, symmetric=symmetric)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}", key=key) from exc


def _read_theta_file(path):
    if not os.path.exists(path):
        raise ConfigError(f"theta list not found: {path}", key="--thetas")
    thetas = []
    with open(path) as handle:
        for n, line in enumerate(handle, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                values = [float(x) for x in line.replace(",", " ").split()]
            except ValueError as exc:
                raise ConfigError(f"{path}:{n}: {exc}", key="--thetas") from exc
            thetas.append(_parse_tensor_arg(values, f"{path}:{n}"))
    if not thetas:
        raise ConfigError(f"{path}: no temperances listed", key="--thetas")
    return thetas


def _sym6(a):
    return list(sym_to_vec6(np.asarray(a)))


def cmd_temperance(args):
    header = sio.header_lines(__version__, args_hash(args), args.seed or 0)
    try:
        if args.what == "moments":
            if args.theta is not None:
                dist = temperance.SpeedDistribution.canonical(_parse_tensor_arg(args.theta, "--theta"))
            else:
                dist = temperance.SpeedDistribution.uniform_sphere(args.speed)
            m = temperance.moments(dist, method=args.method, n_samples=args.samples, seed=args.seed or 0,
                                   threads=args.threads)
            columns = ["norm"] + [f"mean{i}" for i in "123"] + [f"H{c}" for c in SYM_NAMES]
            columns += [f"Q{c}" for c in SYM_NAMES] + ["se_norm"] + [f"se_H{c}" for c in SYM_NAMES]
            row = [m.norm, *m.mean, *_sym6(m.H), *_sym6(temperance.order_tensor(m.H)), m.se_norm, *_sym6(m.se_H)]
            write_table(args.out, header + [f"method {args.method}"], columns, [row])
        elif args.what == "fit":
            H = _parse_tensor_arg(args.H, "--H")
            fit = temperance.fit_temperance(H, tolerance=args.tolerance)
            columns = [f"Theta{c}" for c in SYM_NAMES] + ["theta0"] + [f"H{c}" for c in SYM_NAMES]
            columns += [f"Q{c}" for c in SYM_NAMES] + ["iterations", "residual"]
            row = [*_sym6(fit.Theta), fit.theta0, *_sym6(fit.H), *_sym6(temperance.order_tensor(fit.H)),
                   fit.iterations, fit.residual]
            write_table(args.out, header, columns, [row])
        else:
            thetas = _read_theta_file(args.thetas) if args.thetas else [
                _parse_tensor_arg(t, "--theta") for t in (args.theta_list or [])
            ]
            if not thetas:
                raise ConfigError("tabulate needs --thetas FILE or --theta values", key="--thetas")
            rows = temperance.tabulate(thetas, method=args.method, n_samples=args.samples, seed=args.seed or 0,
                                       threads=args.threads)
            columns = [f"Theta{c}" for c in SYM_NAMES] + [f"H{c}" for c in SYM_NAMES]
            columns += [f"Q{c}" for c in SYM_NAMES] + ["theta0"] + [f"se_H{c}" for c in SYM_NAMES]
            table = [[*_sym6(r.Theta), *_sym6(r.H), *_sym6(r.Q), r.theta0, *_sym6(r.se_H)] for r in rows]
            write_table(args.out, header + [f"method {args.method}"], columns, table)
    except (QuadratureFailure, NoConvergence) as exc:
        raise RuntimeFailure(str(exc)) from exc
    return EXIT_OK


# parser --------------------------------------------------------------------------------

def _common(p, config_required=False):
    p.add_argument("--config", required=config_required, help="scenario TOML file (or a bundled scenario name)")
    p.add_argument("--out", help="output directory or file")
    p.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    p.add_argument("--snapshot-every", type=float, help="snapshot cadence in time units")


def build_parser():
    parser = argparse.ArgumentParser(prog="kinetic-continua", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="march a continuum scenario and write snapshots and diagnostics")
    _common(p, config_required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("particles", help="run the mass-point oracle and report balance-law residuals")
    _common(p, config_required=True)
    p.set_defaults(func=cmd_particles)

    p = sub.add_parser("analytic", help="closed-form stationary states, dispersion roots and example fields")
    asub = p.add_subparsers(dest="what", required=True)
    a = asub.add_parser("stationary", help="stationary shear state")
    _common(a)
    for name, default in (("rho", 1.0), ("alpha", 1.0), ("gamma", 1.0), ("eta3", 0.0), ("L12", 1.0), ("Y33", 1.0)):
        a.add_argument(f"--{name}", type=float, default=default)
    a = asub.add_parser("dispersion", help="separable-mode dispersion roots")
    _common(a)
    a.add_argument("--beta", type=float, required=True)
    a.add_argument("--u", type=float, required=True)
    a.add_argument("--alpha", type=float, required=True)
    a.add_argument("--gamma-hat", type=float, required=True)
    a.add_argument("--convention", choices=("literal", "diffusive"), default="literal")
    a = asub.add_parser("example", help="closed-form example fields as a snapshot CSV")
    _common(a)
    a.add_argument("number", choices=sorted(EXAMPLE_SCENARIOS))
    a.add_argument("--time", type=float, default=0.0)
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("temperance", help="ferment moments, temperance fits and tables")
    tsub = p.add_subparsers(dest="what", required=True)
    for name in ("moments", "fit", "tabulate"):
        t = tsub.add_parser(name)
        _common(t)
        if name != "fit":
            t.add_argument("--method", choices=("quadrature", "mc"), default="quadrature")
            t.add_argument("--samples", type=int, default=10**6)
    t = tsub.choices["moments"]
    t.add_argument("--speed", type=float, default=1.0, help="uniform-sphere speed")
    t.add_argument("--theta", nargs="+", help="canonical temperance (6 or 9 numbers)")
    tsub.choices["fit"].add_argument("--H", nargs="+", required=True, help="target ferment tensor (6 or 9 numbers)")
    tsub.choices["fit"].add_argument("--tolerance", type=float, default=1e-10)
    tsub.choices["tabulate"].add_argument("--thetas", help="file with one temperance per line (6 or 9 numbers)")
    tsub.choices["tabulate"].add_argument("--theta", dest="theta_list", nargs="+", action="append")
    p.set_defaults(func=cmd_temperance)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be at least 1", key="--threads")
        return args.func(args)
    except RuntimeFailure as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ConfigError as exc:
        key = f" [key: {exc.key}]" if exc.key else ""
        print(f"config error: {exc}{key}", file=sys.stderr)
        return EXIT_CONFIG
    except KineticContinuaError as exc:
        if isinstance(exc, RuntimeError):
            print(f"runtime error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
