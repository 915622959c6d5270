"""Explicit fourth-order Runge-Kutta time marching with PSD and overflow guards."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import BlowUp, DegenerateY
from ..tensors import norm, project_psd
from .equations import Problem, apply_plane_flow, constrained_B, diagnostics, evaluate, rhs
from .grid import pad

RHO_FLOOR_FACTOR = 1e-12
OVERFLOW_GUARD = 1e100
RK4_REAL_STABILITY = 2.78


def stable_dt(state, problem):
    """Largest step allowed by advection, diffusion and the stiffest local rate."""
    grid, p, cfg = problem.grid, problem.params, problem.config
    if cfg.dt is not None:
        return cfg.dt
    hs = [h for h, a in zip(grid.h, grid.active) if a]
    h = min(hs)
    lam_H = np.max(np.linalg.eigvalsh(0.5 * (state.H + np.swapaxes(state.H, -1, -2))), axis=-1)
    wave = np.max(np.sqrt(np.clip(lam_H, 0.0, None)))
    speed = np.max(np.abs(state.u[..., :2])) + wave
    limits = []
    if speed > 0:
        limits.append(cfg.cfl * h / speed)
    rho_min = np.min(state.rho)
    # effective momentum diffusivity of the compact viscous operator in each mode
    eta = {"independent_B": p.eta1 + 2.0 * p.eta3, "B_equals_L": p.eta1, "B_equals_skwL": p.eta1 + p.eta3}[
        cfg.constraint_mode
    ]
    if p.include_sym_b_viscosity:
        eta += abs(p.eta2)
    nu = max(p.beta, 2.0 * eta / rho_min, p.kappa / rho_min if cfg.thermal else 0.0)
    if nu > 0:
        # the compact Laplacian has spectral radius 4 nu dim / h^2; RK4 is stable on [-2.78, 0]
        limits.append(cfg.cfl * RK4_REAL_STABILITY * h * h / (4.0 * nu * grid.dimension))
    L = pad(state.u, grid, problem.kinds["velocity"]).gradient()
    rate = p.alpha + p.gamma_hat + 2.0 * np.max(norm(L)) + 2.0 * np.max(norm(state.B))
    if rate > 0:
        limits.append(cfg.cfl * 2.0 / rate)
    if not limits:
        return max(cfg.t_end, 1.0)
    return min(limits)


def _stage(state, k, a, problem):
    s = state.axpy(a, k)
    if problem.config.constraint_mode != "independent_B":
        L = pad(s.u, problem.grid, problem.kinds["velocity"]).gradient()
        s.B = constrained_B(L, problem.config.constraint_mode)
    return s


def step_rk4(state, dt, problem, projection_log=None, time=0.0):
    """
    One classical RK4 step.

    With ``psd_projection`` on, nodes of H or Y that acquired a negative
    eigenvalue are projected back; the largest relative correction is appended
    to ``projection_log`` as ``(time, field, magnitude)``.
    """
    try:
        k1 = rhs(state, problem)
        k2 = rhs(_stage(state, k1, 0.5 * dt, problem), problem)
        k3 = rhs(_stage(state, k2, 0.5 * dt, problem), problem)
        k4 = rhs(_stage(state, k3, dt, problem), problem)
    except DegenerateY as exc:
        raise DegenerateY(f"{exc} (at time {time:.6g})", cell=exc.cell) from exc
    new = state.copy()
    for name in new.arrays():
        x = getattr(new, name)
        setattr(
            new,
            name,
            x + (dt / 6.0) * (getattr(k1, name) + 2.0 * getattr(k2, name) + 2.0 * getattr(k3, name) + getattr(k4, name)),
        )
    new.H = 0.5 * (new.H + np.swapaxes(new.H, -1, -2))
    new.Y = 0.5 * (new.Y + np.swapaxes(new.Y, -1, -2))
    if problem.config.constraint_mode != "independent_B":
        L = pad(new.u, problem.grid, problem.kinds["velocity"]).gradient()
        new.B = constrained_B(L, problem.config.constraint_mode)
    if problem.config.plane_flow:
        apply_plane_flow(new)
    if not new.is_finite(OVERFLOW_GUARD):
        raise BlowUp(f"non-finite or overflowing field after step ending at time {time + dt:.6g}", time=time + dt)
    if problem.config.psd_projection:
        for name in ("H", "Y"):
            projected, mags = project_psd(getattr(new, name))
            worst = float(np.max(mags))
            if worst > 0:
                scale = float(np.max(norm(getattr(new, name))))
                setattr(new, name, projected)
                if projection_log is not None:
                    projection_log.append((time + dt, name, worst / scale if scale > 0 else np.inf))
    return new


@dataclass
class RunResult:
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    projections: list = field(default_factory=list)
    steps: int = 0
    final: object = None

    def max_projection(self, name="H"):
        mags = [m for _, n, m in self.projections if n == name]
        return max(mags) if mags else 0.0


def run(state, problem, t_end=None, snapshot_every=None, steady_tol=None, callback=None):
    """
    March ``state`` to ``t_end`` (default: the problem's configured end time).

    Snapshots (copies) and diagnostics are recorded at ``t = 0``, every
    ``snapshot_every`` and at the end; the step is shortened to land on those
    times exactly. With ``steady_tol`` the run stops early once the largest
    rate of change of ``u`` and ``H``, scaled by the field size, drops below it.
    """
    cfg = problem.config
    t_end = cfg.t_end if t_end is None else t_end
    every = cfg.snapshot_every if snapshot_every is None else snapshot_every
    rho_floor = RHO_FLOOR_FACTOR * float(np.mean(state.rho))
    result = RunResult()

    def record(t, s):
        result.times.append(t)
        result.snapshots.append(s.copy())
        result.diagnostics.append(diagnostics(s, problem))

    t = 0.0
    record(t, state)
    next_snap = every if every else None
    while t < t_end * (1 - 1e-14):
        if result.steps >= cfg.max_steps:
            raise BlowUp(f"step limit {cfg.max_steps} reached at time {t:.6g}", time=t)
        dt = stable_dt(state, problem)
        target = t_end if next_snap is None else min(t_end, next_snap)
        landing = t + dt >= target * (1 - 1e-14)
        if landing:
            dt = target - t
        state = step_rk4(state, dt, problem, result.projections, t)
        t = target if landing else t + dt
        result.steps += 1
        if np.min(state.rho) <= rho_floor:
            raise BlowUp(f"density fell to the floor {rho_floor:.3g} at time {t:.6g}", time=t)
        if callback is not None:
            callback(t, state)
        if next_snap is not None and t >= next_snap * (1 - 1e-14):
            if t < t_end * (1 - 1e-14):
                record(t, state)
            next_snap += every
        if steady_tol is not None and result.steps % 50 == 0:
            rates = evaluate(state, problem)[0]
            du = np.max(np.abs(rates.u)) / max(np.max(np.abs(state.u)), 1e-300)
            dH = np.max(np.abs(rates.H)) / max(np.max(np.abs(state.H)), 1e-300)
            if max(du if np.any(state.u) else 0.0, dH if np.any(state.H) else 0.0) < steady_tol:
                break
    record(t, state)
    result.final = state
    return result


__all__ = ["Problem", "RunResult", "run", "stable_dt", "step_rk4"]
