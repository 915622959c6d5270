"""Discrete mass-point oracle.

A cloud of Newtonian particles is integrated with velocity Verlet. At every
sample the motion is split into a translation of the centre of mass, a
best-fit affine rate ``B`` and peculiar velocities; the aggregate tensors
built from that split must satisfy the tensor balance laws identically, so
finite-difference residuals of those laws shrink at the integrator's order.
"""

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm

from .errors import DegenerateConfiguration, PreconditionViolated
from .tensors import IDENTITY, SYM_INDEX, matmul, norm, outer, pinv_sym, sym, transpose

PINV_CUTOFF = 1e-12


@dataclass
class ParticleSystem:
    masses: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    force: callable = None
    time: float = 0.0

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float)
        self.positions = np.array(self.positions, dtype=float)
        self.velocities = np.array(self.velocities, dtype=float)
        k = self.masses.shape[0]
        if k < 2:
            raise DegenerateConfiguration("need at least two particles")
        if np.any(self.masses <= 0):
            raise DegenerateConfiguration("particle masses must be positive")
        if self.positions.shape != (k, 3) or self.velocities.shape != (k, 3):
            raise ValueError("positions and velocities must have shape (k, 3)")
        if self.force is None:
            self.force = no_force

    @property
    def total_mass(self):
        return float(self.masses.sum())

    def forces(self):
        return np.asarray(self.force(self.positions, self.time, self.masses), dtype=float)


@dataclass
class AffineFrame:
    x: np.ndarray
    x_dot: np.ndarray
    G: np.ndarray = field(default_factory=lambda: IDENTITY.copy())
    B: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))


@dataclass(frozen=True)
class AggregateState:
    time: float
    mu: float
    x: np.ndarray
    x_dot: np.ndarray
    Y: np.ndarray
    K: np.ndarray
    B: np.ndarray
    H: np.ndarray
    H_tilde: np.ndarray
    S_hat: np.ndarray
    M_hat: np.ndarray
    f_hat: np.ndarray
    W: np.ndarray
    G: np.ndarray


# force laws -------------------------------------------------------------------

def no_force(positions, time, masses):
    return np.zeros_like(positions)


def uniform_gravity(g):
    g = np.asarray(g, dtype=float)

    def force(positions, time, masses):
        return masses[:, None] * g[None, :]

    return force


def central_harmonic(stiffness, center=(0.0, 0.0, 0.0), plane=False):
    """Force ``-m k (x - c)``; with ``plane`` the third component is left free."""
    center = np.asarray(center, dtype=float)
    mask = np.array([1.0, 1.0, 0.0]) if plane else np.ones(3)

    def force(positions, time, masses):
        return -stiffness * masses[:, None] * (positions - center) * mask

    return force


def harmonic_pair(stiffness, rest_length=0.0):
    """Spring between particles 0 and 1; other particles feel nothing."""

    def force(positions, time, masses):
        f = np.zeros_like(positions)
        d = positions[1] - positions[0]
        r = np.linalg.norm(d)
        pull = stiffness * (r - rest_length) * (d / r if r > 0 else d)
        f[0] += pull
        f[1] -= pull
        return f

    return force


def harmonic_pair_energy(system, stiffness, rest_length=0.0):
    d = system.positions[1] - system.positions[0]
    kinetic = 0.5 * np.sum(system.masses[:, None] * system.velocities**2)
    return kinetic + 0.5 * stiffness * (np.linalg.norm(d) - rest_length) ** 2


def smooth_random_force(seed, n_modes=4, amplitude=0.5, confinement=1.0, pair_strength=0.2, pair_range=0.5):
    """Smooth conservative force: random plane-wave potential, confinement and soft pair repulsion."""
    rng = np.random.default_rng(seed)
    wavevectors = rng.normal(size=(n_modes, 3))
    phases = rng.uniform(0, 2 * np.pi, size=n_modes)
    amps = amplitude * rng.uniform(0.5, 1.0, size=n_modes)
    s2 = pair_range**2

    def force(positions, time, masses):
        arg = positions @ wavevectors.T + phases
        # -grad of sum a cos(k.x + p)
        external = (amps * np.sin(arg)) @ wavevectors - confinement * positions
        d = positions[:, None, :] - positions[None, :, :]
        r2 = np.sum(d * d, axis=-1)
        w = pair_strength / s2 * np.exp(-0.5 * r2 / s2)
        np.fill_diagonal(w, 0.0)
        pair = np.einsum("ij,ijk->ik", w, d)
        return masses[:, None] * external + pair

    return force


# affine split -----------------------------------------------------------------

def _centre(system):
    mu = system.total_mass
    x = system.masses @ system.positions / mu
    x_dot = system.masses @ system.velocities / mu
    return mu, x, x_dot


def _moments(system):
    mu, x, x_dot = _centre(system)
    dx = system.positions - x
    dv = system.velocities - x_dot
    m = system.masses[:, None, None]
    Y = np.sum(m * outer(dx, dx), axis=0) / mu
    K = np.sum(m * outer(dx, dv), axis=0) / mu
    return mu, x, x_dot, dx, dv, Y, K


def fit_affine_rate(system, frame=None):
    """
    Mass-weighted least-squares affine rate.

    Returns ``B = K^T Y^+`` where ``Y`` is the per-unit-mass inertia tensor and
    ``K`` the position-velocity cross moment about the centre of mass. ``B``
    vanishes on the null space of ``Y``.
    """
    mu, x, x_dot, dx, dv, Y, K = _moments(system)
    if np.allclose(dx, 0.0, atol=0.0) and np.allclose(dv, 0.0, atol=0.0):
        raise DegenerateConfiguration("all particles coincide in position and velocity")
    Yp, _ = pinv_sym(Y, PINV_CUTOFF)
    return K.T @ Yp


def initial_frame(system):
    mu, x, x_dot = _centre(system)
    return AffineFrame(x=x, x_dot=x_dot, G=IDENTITY.copy(), B=fit_affine_rate(system))


def aggregates(system, frame):
    mu, x, x_dot, dx, dv, Y, K_tilde = _moments(system)
    B = fit_affine_rate(system)
    G = frame.G
    Ginv = np.linalg.inv(G)
    peculiar = dv - dx @ B.T
    m = system.masses[:, None, None]
    H = sym(np.sum(m * outer(peculiar, peculiar), axis=0) / mu)
    H_tilde = sym(np.sum(m * outer(dv, dv), axis=0) / mu)
    f = system.forces()
    # frame-coordinate peculiar velocities and forces
    s_dot = peculiar @ Ginv.T
    g = f @ Ginv.T
    inner_sum = np.sum(outer(s_dot, g) + outer(g, s_dot), axis=0)
    S_hat = sym(G @ inner_sum @ G.T)
    M_hat = np.sum(outer(dx, f), axis=0)
    W = 0.5 * outer(x_dot, x_dot) + 0.5 * B @ Y @ B.T + 0.5 * H
    return AggregateState(
        time=system.time,
        mu=mu,
        x=x,
        x_dot=x_dot,
        Y=sym(Y),
        K=Y @ B.T,
        B=B,
        H=H,
        H_tilde=H_tilde,
        S_hat=S_hat,
        M_hat=M_hat,
        f_hat=f.sum(axis=0),
        W=sym(W),
        G=G.copy(),
    )


def step(system, frame, dt):
    """Advance one velocity-Verlet step and carry the affine frame along with ``dG/dt = B G``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    m = system.masses[:, None]
    a0 = system.forces() / m
    v_half = system.velocities + 0.5 * dt * a0
    positions = system.positions + dt * v_half
    new = replace(system, positions=positions, velocities=v_half, time=system.time + dt)
    a1 = new.forces() / m
    new.velocities = v_half + 0.5 * dt * a1

    B0 = frame.B
    B1 = fit_affine_rate(new)
    G1 = expm(0.5 * dt * (B0 + B1)) @ frame.G
    _, x1, xd1 = _centre(new)
    return new, AffineFrame(x=x1, x_dot=xd1, G=G1, B=B1)


def simulate(system, dt, n_steps, sample_every=1):
    """Integrate and return the list of sampled aggregate states (the initial state included)."""
    frame = initial_frame(system)
    trajectory = [aggregates(system, frame)]
    for n in range(1, n_steps + 1):
        system, frame = step(system, frame, dt)
        if n % sample_every == 0:
            trajectory.append(aggregates(system, frame))
    return trajectory, system, frame


# residuals ----------------------------------------------------------------------

def _stack(trajectory, name):
    return np.array([getattr(a, name) for a in trajectory])


def _central(values, dt):
    return (values[2:] - values[:-2]) / (2.0 * dt)


def balance_residuals(trajectory, dt):
    """
    Residuals of the four discrete balance laws at interior samples.

    ``dt`` is the sample spacing. Time derivatives are central differences, so
    on a smooth trajectory every residual is O(dt^2).

    Returns
    -------
    dict with keys ``momentum``, ``moment_of_momentum``, ``inertia``, ``ferment``.
    """
    if len(trajectory) < 3:
        raise ValueError("need at least three consecutive states")
    mu = trajectory[0].mu
    x_dot, f_hat = _stack(trajectory, "x_dot"), _stack(trajectory, "f_hat")
    Y, K, B, H = (_stack(trajectory, n) for n in ("Y", "K", "B", "H"))
    M_hat, S_hat = _stack(trajectory, "M_hat"), _stack(trajectory, "S_hat")
    mid = slice(1, -1)
    Bm, Ym, Km, Hm = B[mid], Y[mid], K[mid], H[mid]
    return {
        "momentum": mu * _central(x_dot, dt) - f_hat[mid],
        "moment_of_momentum": mu * (_central(K, dt) - matmul(Bm, Km) - Hm) - M_hat[mid],
        "inertia": _central(Y, dt) - matmul(Ym, transpose(Bm)) - matmul(Bm, Ym),
        "ferment": mu * (_central(H, dt) + matmul(Bm, Hm) + matmul(Hm, transpose(Bm))) - S_hat[mid],
    }


def energy_theorem_residual(trajectory, dt):
    """``mu dW/dt - S/2 - sym(x_dot (x) f + B M)`` at interior samples."""
    if len(trajectory) < 3:
        raise ValueError("need at least three consecutive states")
    mu = trajectory[0].mu
    W = _stack(trajectory, "W")
    x_dot, f_hat = _stack(trajectory, "x_dot")[1:-1], _stack(trajectory, "f_hat")[1:-1]
    B, M_hat, S_hat = (_stack(trajectory, n)[1:-1] for n in ("B", "M_hat", "S_hat"))
    return mu * _central(W, dt) - 0.5 * S_hat - sym(outer(x_dot, f_hat) + matmul(B, M_hat))


def moment_split_residual(agg):
    """``H_tilde - B Y B^T - H``: vanishes identically for the least-squares affine rate."""
    return agg.H_tilde - agg.B @ agg.Y @ agg.B.T - agg.H


def tensor_energy_invariant(agg, P=None):
    P = np.zeros((3, 3)) if P is None else P
    return agg.mu * agg.W - 0.5 * P - sym(outer(agg.x, agg.f_hat) + agg.M_hat)


def conservation_check(trajectory, P_series=None, rtol=1e-9):
    """
    Drift of the tensor energy invariant ``mu W - P/2 - sym(x (x) f + M)``.

    Requires a constant resultant force and constant ``G^-1 M``; ``P_series``
    must satisfy ``dP/dt = S`` (pass ``None`` when the stirring vanishes).

    Returns
    -------
    drift : numpy.ndarray of shape (n, 3, 3)
        Invariant minus its initial value.
    """
    f_hat = _stack(trajectory, "f_hat")
    scale = max(np.max(np.abs(f_hat)), 1e-300)
    if np.max(np.abs(f_hat - f_hat[0])) > rtol * scale:
        raise PreconditionViolated("resultant external force is not constant along the trajectory")
    GM = np.array([np.linalg.solve(a.G, a.M_hat) for a in trajectory])
    gm_scale = max(np.max(np.abs(GM)), scale * max(np.max(np.abs(_stack(trajectory, "x"))), 1.0))
    if np.max(np.abs(GM - GM[0])) > rtol * gm_scale:
        raise PreconditionViolated("G^-1 M is not constant along the trajectory")
    if P_series is None:
        P_series = [None] * len(trajectory)
    values = np.array([tensor_energy_invariant(a, P) for a, P in zip(trajectory, P_series)])
    return values - values[0]


def residual_norms(trajectory, dt):
    """Max Frobenius norm of each balance residual and of the energy-theorem residual."""
    res = balance_residuals(trajectory, dt)
    res["energy"] = energy_theorem_residual(trajectory, dt)
    out = {}
    for key, value in res.items():
        n = np.linalg.norm(value, axis=-1) if value.ndim == 2 else norm(value)
        out[key] = float(np.max(n))
    return out


def write_trajectory_csv(path, trajectory, dt, header_lines=()):
    res = balance_residuals(trajectory, dt) if len(trajectory) >= 3 else {}
    if res:
        res["energy"] = energy_theorem_residual(trajectory, dt)
    keys = ["momentum", "moment_of_momentum", "inertia", "ferment", "energy"]
    sym_names = [f"{i + 1}{j + 1}" for i, j in SYM_INDEX]
    columns = (
        ["tau", "x1", "x2", "x3", "xdot1", "xdot2", "xdot3"]
        + [f"Y{c}" for c in sym_names]
        + [f"B{i}{j}" for i in range(1, 4) for j in range(1, 4)]
        + [f"H{c}" for c in sym_names]
        + [f"W{c}" for c in sym_names]
        + [f"res_{k}" for k in keys]
    )
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for n, a in enumerate(trajectory):
            row = [a.time, *a.x, *a.x_dot]
            row += [a.Y[i, j] for i, j in SYM_INDEX]
            row += list(a.B.reshape(-1))
            row += [a.H[i, j] for i, j in SYM_INDEX]
            row += [a.W[i, j] for i, j in SYM_INDEX]
            for k in keys:
                if res and 0 < n < len(trajectory) - 1:
                    v = res[k][n - 1]
                    row.append(float(np.linalg.norm(v)))
                else:
                    row.append(float("nan"))
            writer.writerow([repr(float(v)) for v in row])
