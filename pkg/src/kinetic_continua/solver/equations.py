"""Semi-discrete balance laws for kinetic continua on a structured grid.

Balances, all per node:

mass      d rho/dt  = -div(rho u)
inertia   dY/dt     = -(grad Y) u + B Y + Y B^T
momentum  du/dt     = -(grad u) u + f + div(T) / rho
affine    rho (dB/dt + (grad B) u + B^2) Y = rho M^T + 2 eta3 (L - B)
ferment   dH/dt     = -(grad H) u - L H - H L^T + S + beta/rho lap(rho H) - alpha H + gamma/rho D^2

The affine balance is solved with the pseudo-inverse of Y; in the constrained modes it is
replaced by ``B = L`` or ``B = skw L``.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..constitutive import (
    LocalKineticState,
    MaterialParams,
    energy_rhs_scalar,
    hyperstress_m,
    internal_torque_A,
    stirring_Z,
    stress_T,
)
from ..errors import DegenerateY, NotPSD
from ..tensors import eig_sym, matmul, norm, outer, pinv_sym, skw, sqrt_psd, sym, sym_to_vec6, transpose
from .grid import BoundarySpec, Grid, pad
from .state import FieldState, SolverConfig, SourceSpec

Y_CUTOFF = 1e-12
_VEC_PLANE = np.array([1.0, 1.0, 0.0])
_SYM_PLANE = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
_GEN_PLANE = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])


@dataclass(frozen=True)
class Problem:
    grid: Grid
    params: MaterialParams = field(default_factory=MaterialParams)
    sources: SourceSpec = field(default_factory=SourceSpec)
    boundary: BoundarySpec = field(default_factory=BoundarySpec)
    config: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        self.boundary.validate(self.grid)

    @property
    def mode(self):
        return self.config.constraint_mode

    @cached_property
    def kinds(self):
        g, bc = self.grid, self.boundary
        return dict(
            velocity=bc.velocity_kinds(g),
            scalar=bc.scalar_kinds(g),
            ferment=bc.ferment_kinds(g),
            thermal=bc.thermal_kinds(g),
        )


def constrained_B(L, mode):
    if mode == "B_equals_L":
        return L.copy()
    if mode == "B_equals_skwL":
        return skw(L)
    raise ValueError(mode)


def apply_plane_flow(state):
    """Zero out-of-plane components, keeping H33 and Y33."""
    state.u = state.u * _VEC_PLANE
    state.Y = state.Y * _SYM_PLANE
    state.H = state.H * _SYM_PLANE
    state.B = state.B * _GEN_PLANE
    return state


def _grad_div_u(up, grid):
    """``grad(div u)`` with compact second derivatives and a central mixed derivative."""
    out = np.zeros(up.core.shape)
    out[..., 0] = up.d2(0)[..., 0]
    out[..., 1] = up.d2(1)[..., 1]
    if all(grid.active):
        cross = up.d12()
        out[..., 0] += cross[..., 1]
        out[..., 1] += cross[..., 0]
    return out


def _side_index(axis, index):
    return (index, slice(None)) if axis == 0 else (slice(None), index)


def evaluate(state, problem, with_aux=True):
    """
    Time derivatives of every field plus the intermediate tensors used to build them.

    Returns
    -------
    rates : FieldState
    aux : dict
        ``L``, ``B`` (effective affine rate), ``bb``, ``T``, ``A``, ``Z``, ``m``,
        ``grad_rhoH``, ``local`` (:class:`LocalKineticState`) and ``dB_material``.
    """
    grid, p, src, bc, cfg = problem.grid, problem.params, problem.sources, problem.boundary, problem.config
    mode = cfg.constraint_mode
    rho, u, Y, H = state.rho, state.u, state.Y, state.H
    r33 = rho[..., None, None]

    kinds = problem.kinds
    u_kinds = kinds["velocity"]
    s_kinds = kinds["scalar"]
    up = pad(u, grid, u_kinds)
    L = up.gradient()

    B = state.B if mode == "independent_B" else constrained_B(L, mode)
    # fields sharing ghost kinds are padded and differenced together
    n = rho.shape
    scal = pad(np.concatenate([(rho[..., None] * u), Y.reshape(n + (9,)), B.reshape(n + (9,))], axis=-1), grid, s_kinds)
    scal_grad = scal.gradient()
    scal_adv = scal.advect(u)
    bb = scal_grad[..., 12:, :].reshape(n + (3, 3, 3))

    rhoH = r33 * H
    ferm = pad(np.concatenate([rhoH.reshape(n + (9,)), H.reshape(n + (9,))], axis=-1), grid, kinds["ferment"])
    grad_rhoH = ferm.gradient()[..., :9, :].reshape(n + (3, 3, 3))

    local = LocalKineticState(rho=rho, L=L, B=B, H=H, grad_rhoH=grad_rhoH, bb=bb)
    T = stress_T(local, p)
    A = internal_torque_A(local, p)
    Z = stirring_Z(local, p)
    m = hyperstress_m(local)
    D = local.D

    # I: mass
    d_rho = -np.einsum("...kk->...", scal_grad[..., :3, :])

    # II: inertia
    d_Y = -scal_adv[..., 3:12].reshape(n + (3, 3)) + matmul(B, Y) + matmul(Y, transpose(B))
    d_Y = sym(d_Y)

    # III: momentum; viscous parts use compact second differences
    lap_u = up.laplacian()
    graddiv_u = _grad_div_u(up, grid)
    div_T = -np.einsum("...ikk->...i", grad_rhoH) + p.eta1 * (lap_u + graddiv_u)
    div_B = np.einsum("...ikk->...i", bb)
    div_BT = np.einsum("...kik->...i", bb)
    if mode == "independent_B":
        div_T = div_T + 2.0 * p.eta3 * (lap_u - div_B)
        if p.include_sym_b_viscosity:
            div_T = div_T + p.eta2 * (div_B + div_BT)
    elif mode == "B_equals_skwL":
        div_T = div_T + p.eta3 * (lap_u + graddiv_u)
    elif p.include_sym_b_viscosity:
        div_T = div_T + p.eta2 * (lap_u + graddiv_u)
    d_u = -up.advect(u) + src.f + div_T / rho[..., None]

    # V: ferment
    d_H = (
        -ferm.advect(u)[..., 9:].reshape(n + (3, 3))
        - matmul(L, H)
        - matmul(H, transpose(L))
        + src.S
        + p.beta * ferm.laplacian()[..., :9].reshape(n + (3, 3)) / r33
        - p.alpha * H
        + p.gamma * matmul(D, D) / r33
    )
    d_H = sym(d_H)

    # thermal energy with q = -kappa grad eps
    d_eps = None
    if state.eps is not None:
        epsp = pad(state.eps, grid, kinds["thermal"])
        div_q = -p.kappa * epsp.laplacian()
        heating = energy_rhs_scalar(local, T, A, Z, m, div_q, src.lambda_heat)
        d_eps = -epsp.advect(u) + heating / rho

    rates = FieldState(rho=d_rho, u=d_u, Y=d_Y, B=np.zeros_like(B), H=d_H, eps=d_eps)
    _apply_boundary_rates(state, rates, problem)

    # IV: affine rate
    if mode == "independent_B":
        R = r33 * transpose(np.broadcast_to(src.M, B.shape)) + 2.0 * p.eta3 * (L - B)
        Yp, P = pinv_sym(Y, Y_CUTOFF)
        leak = norm(R - matmul(R, P))
        scale = norm(r33 * np.broadcast_to(src.M, B.shape)) + 2.0 * p.eta3 * (norm(L) + norm(B))
        bad = leak > 1e-10 * scale
        if np.any(bad):
            cell = tuple(int(i) for i in np.argwhere(bad)[0])
            raise DegenerateY(
                f"affine-rate equation unsolvable at node {cell}: forcing lies outside range(Y)", cell=cell
            )
        d_B = -scal_adv[..., 12:].reshape(n + (3, 3)) - matmul(B, B) + matmul(R, Yp) / r33
        rates.B = d_B
        _apply_boundary_B(rates, problem)
    elif with_aux:
        dL = pad(rates.u, grid, u_kinds).gradient()
        rates.B = constrained_B(dL, mode)

    if cfg.plane_flow:
        apply_plane_flow(rates)

    dB_material = rates.B + np.einsum("...irk,...k->...ir", bb, u)
    aux = dict(L=L, B=B, bb=bb, T=T, A=A, Z=Z, m=m, grad_rhoH=grad_rhoH, local=local, dB_material=dB_material)
    return rates, aux


def rhs(state, problem):
    return evaluate(state, problem, with_aux=False)[0]


def _apply_boundary_rates(state, rates, problem):
    grid, bc, p = problem.grid, problem.boundary, problem.params
    for name, axis, index, _ in grid.boundary_sides():
        side = bc.side(name)
        sl = _side_index(axis, index)
        if side.velocity == "velocity_dirichlet":
            rates.u[sl] = 0.0
        elif side.velocity == "free_slip":
            rates.u[sl + (axis,)] = 0.0
        if side.ferment == "dirichlet":
            rates.H[sl] = 0.0
        elif side.ferment == "loss":
            rate = p.gamma_hat if side.gamma_hat is None else side.gamma_hat
            rates.H[sl] = -rate * state.H[sl]
        if side.rho is not None:
            rates.rho[sl] = 0.0
        if side.Y is not None:
            rates.Y[sl] = 0.0
        if side.epsilon is not None and rates.eps is not None:
            rates.eps[sl] = 0.0


def _apply_boundary_B(rates, problem):
    for name, axis, index, _ in problem.grid.boundary_sides():
        if problem.boundary.side(name).B is not None:
            rates.B[_side_index(axis, index)] = 0.0


def impose_boundary_values(state, problem):
    """Write fixed boundary values into ``state`` (used for initial conditions)."""
    grid, bc = problem.grid, problem.boundary
    for name, axis, index, _ in grid.boundary_sides():
        side = bc.side(name)
        sl = _side_index(axis, index)
        if side.velocity == "velocity_dirichlet":
            state.u[sl] = np.asarray(side.velocity_value, dtype=float)
        elif side.velocity == "free_slip":
            state.u[sl + (axis,)] = 0.0
        if side.ferment == "dirichlet":
            state.H[sl] = sym(np.asarray(side.ferment_value, dtype=float))
        if side.rho is not None:
            state.rho[sl] = side.rho
        if side.Y is not None:
            state.Y[sl] = sym(np.asarray(side.Y, dtype=float))
        if side.B is not None:
            state.B[sl] = np.asarray(side.B, dtype=float)
        if side.epsilon is not None and state.eps is not None:
            state.eps[sl] = side.epsilon
    if problem.config.constraint_mode != "independent_B":
        L = pad(state.u, grid, bc.velocity_kinds(grid)).gradient()
        state.B = constrained_B(L, problem.config.constraint_mode)
    if problem.config.plane_flow:
        apply_plane_flow(state)
    return state


# diagnostics -------------------------------------------------------------------------

def kinetic_energy_density(state):
    """Tensor kinetic energy per unit mass, ``u u / 2 + B Y B^T / 2 + H / 2``."""
    B = state.B
    return 0.5 * outer(state.u, state.u) + 0.5 * matmul(matmul(B, state.Y), transpose(B)) + 0.5 * state.H


def energy_theorem_balance(state, problem, rates=None, aux=None):
    """
    Global tensor kinetic-energy balance over the grid.

    Returns a dict with the rate of change of total tensor kinetic energy
    (``dE``), the external power in the bulk, the boundary flux, the internal
    power and the residual ``dE - external - boundary - internal``.
    """
    if rates is None or aux is None:
        rates, aux = evaluate(state, problem)
    grid, p, src, cfg = problem.grid, problem.params, problem.sources, problem.config
    rho, u, Y, H = state.rho, state.u, state.Y, state.H
    B, L, T, Z = aux["B"], aux["L"], aux["T"], aux["Z"]
    r33 = rho[..., None, None]
    W = kinetic_energy_density(FieldState(rho=rho, u=u, Y=Y, B=B, H=H))

    dB = rates.B
    dW = (
        sym(outer(u, rates.u))
        + 0.5 * (matmul(matmul(dB, Y), transpose(B)) + matmul(matmul(B, rates.Y), transpose(B)))
        + 0.5 * matmul(matmul(B, Y), transpose(dB))
        + 0.5 * rates.H
    )
    d_rhoW = rates.rho[..., None, None] * W + r33 * dW

    if cfg.constraint_mode == "independent_B":
        A = aux["A"]
    else:
        # torque carried by the constraint: whatever closes the moment-of-momentum balance
        M = np.broadcast_to(src.M, B.shape)
        A = r33 * M + r33 * H - r33 * matmul(Y, transpose(aux["dB_material"] + matmul(B, B)))

    f = np.broadcast_to(src.f, u.shape)
    M = np.broadcast_to(src.M, B.shape)
    external = r33 * (sym(outer(u, f) + matmul(B, M)) + 0.5 * np.broadcast_to(src.S, B.shape))
    internal = -(0.5 * Z + sym(matmul(L, transpose(T)) + matmul(B, A)))

    flux = np.zeros((3, 3))
    for name, axis, index, sign in grid.boundary_sides():
        sl = _side_index(axis, index)
        n = np.zeros(3)
        n[axis] = sign
        other = 1 - axis
        w = grid.axis_weights(other)
        Tn = np.einsum("...ij,j->...i", T[sl], n)
        ferment_flux = 0.5 * p.beta * np.einsum("...ijk,k->...ij", aux["grad_rhoH"][sl], n)
        convective = r33[sl] * W[sl] * (u[sl] @ n)[..., None, None]
        density = sym(outer(u[sl], Tn)) + ferment_flux - convective
        flux = flux + np.tensordot(w, density, axes=([0], [0]))

    dE = grid.integrate(d_rhoW)
    ext = grid.integrate(external)
    intl = grid.integrate(internal)
    residual = dE - ext - flux - intl
    scale = norm(dE) + norm(ext) + norm(flux) + norm(intl)
    return dict(dE=dE, external=ext, boundary=flux, internal=intl, residual=residual, scale=scale)


def diagnostics(state, problem, rates=None, aux=None):
    """Scalar and tensor summaries of one snapshot."""
    grid, p = problem.grid, problem.params
    if rates is None or aux is None:
        rates, aux = evaluate(state, problem)
    W = kinetic_energy_density(FieldState(rho=state.rho, u=state.u, Y=state.Y, B=aux["B"], H=state.H))
    total_W = grid.integrate(state.rho[..., None, None] * W)
    balance = energy_theorem_balance(state, problem, rates, aux)
    Hs = sym(state.H)
    lowest_H = np.min(np.linalg.eigvalsh(Hs))
    lowest_Y = np.min(np.linalg.eigvalsh(sym(state.Y)))
    vol = grid.integrate(np.ones(grid.shape))
    try:
        collision = p.nu_over_lambda * grid.integrate(sqrt_psd(Hs)) / vol
    except NotPSD:
        collision = np.full((3, 3), np.nan)
    record = {
        "mass": float(grid.integrate(state.rho)),
        "kinetic_energy_trace": float(np.trace(total_W)),
        "energy_balance_residual_norm": float(norm(balance["residual"])),
        "energy_balance_scale": float(balance["scale"]),
        "dE_norm": float(norm(balance["dE"])),
        "min_eig_H": float(lowest_H),
        "min_eig_Y": float(lowest_Y),
    }
    for c, v in zip(("11", "22", "33", "12", "13", "23"), sym_to_vec6(total_W)):
        record[f"W{c}"] = float(v)
    for c, v in zip(("11", "22", "33", "12", "13", "23"), sym_to_vec6(collision)):
        record[f"collision{c}"] = float(v)
    return record


def principal_ferment(H):
    """Eigen-split of H: squared tribe speeds and directions, largest first."""
    return eig_sym(H)
