"""Constitutive closure for granular kinetic continua and the associated power densities.

All functions broadcast over leading axes, so a single call evaluates a whole
grid. Third-order gradients carry the derivative index last.
"""

from dataclasses import dataclass, fields

import numpy as np

from .tensors import (
    IDENTITY,
    dev,
    inner,
    matmul,
    norm,
    skew_from_axial,
    sym,
    ten3_grad_contract,
    trace,
    transpose,
)


@dataclass(frozen=True)
class MaterialParams:
    """Density-independent material coefficients.

    ``eta2`` multiplies ``sym B`` in the stress only when
    ``include_sym_b_viscosity`` is set; the default law leaves it out.
    """

    eta1: float = 0.0
    eta2: float = 0.0
    eta3: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    gamma_hat: float = 0.0
    kappa: float = 0.0
    nu_over_lambda: float = 1.0
    include_sym_b_viscosity: bool = False

    def __post_init__(self):
        for name in ("eta1", "eta3", "alpha", "beta", "gamma_hat", "kappa"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a finite non-negative number, got {value!r}")
        for name in ("eta2", "gamma", "nu_over_lambda"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class LocalKineticState:
    """Point values entering the closure.

    ``grad_rhoH[..., i, j, k]`` is d(rho H_ij)/d zeta_k and ``bb`` is grad B in
    the same layout. Both may be left as ``None`` when not needed.
    """

    rho: np.ndarray
    L: np.ndarray
    B: np.ndarray
    H: np.ndarray
    grad_rhoH: np.ndarray = None
    bb: np.ndarray = None

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.L = np.asarray(self.L, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        self.H = sym(np.asarray(self.H, dtype=float))
        if self.bb is None:
            self.bb = np.zeros(self.L.shape + (3,))

    @property
    def D(self):
        return sym(self.L)

    @property
    def rho33(self):
        # rho broadcast against tensor axes
        return self.rho[..., None, None]


def stress_T(state, params):
    """Cauchy stress ``-rho H + 2 eta1 D + 2 eta3 (L - B)``."""
    T = -state.rho33 * state.H + 2.0 * params.eta1 * state.D + 2.0 * params.eta3 * (state.L - state.B)
    if params.include_sym_b_viscosity:
        T = T + 2.0 * params.eta2 * sym(state.B)
    return T


def internal_torque_A(state, params):
    """Internal tensor torque ``rho H - 2 eta3 (L - B)^T``; its skew part equals that of the stress."""
    return state.rho33 * state.H - 2.0 * params.eta3 * transpose(state.L - state.B)


def stirring_Z(state, params):
    """Internal stirring ``2 sym[(L - B) rho H] + alpha rho H - gamma D^2``, symmetric by construction."""
    rhoH = state.rho33 * state.H
    D = state.D
    Z = 2.0 * sym(matmul(state.L - state.B, rhoH)) + params.alpha * rhoH - params.gamma * matmul(D, D)
    return sym(Z)


def hyperstress_s(state, params):
    """Stirring hyperstress ``-beta grad(rho H)``; inherits minor left symmetry from H."""
    g = np.asarray(state.grad_rhoH, dtype=float)
    g = 0.5 * (g + np.swapaxes(g, -3, -2))
    return -params.beta * g


def hyperstress_m(state):
    """Twisting hyperstress; absent in this closure."""
    return np.zeros(np.shape(state.L) + (3,))


def tensor_power_density(state, T, A, Z, m):
    """Tensor power of internal actions, ``-sym(Z/2 + L T^T + B A + b m^t)``."""
    inside = 0.5 * Z + matmul(state.L, transpose(T)) + matmul(state.B, A) + ten3_grad_contract(state.bb, m)
    return -sym(inside)


def scalar_power_density(state, T, A, Z, m):
    """Scalar power of internal actions, ``-[L.T + B.A^T + b.(m^t)^T + tr Z / 2]``."""
    twist = np.einsum("...irk,...rik->...", state.bb, m)
    return -(inner(state.L, T) + inner(state.B, transpose(A)) + twist + 0.5 * trace(Z))


def conservative_Z(state):
    """Stirring that makes the total internal tensor power vanish for ``T = -rho H``, ``A = rho H``."""
    rhoH = state.rho33 * state.H
    Tc = -rhoH
    Ac = rhoH
    return -2.0 * sym(matmul(state.L, transpose(Tc)) + matmul(state.B, Ac))


def observer_shift(L, B, w):
    """Velocity gradient and affine rate seen by an observer spinning at ``w`` relative to the first."""
    W = skew_from_axial(w)
    return np.asarray(L) + W, np.asarray(B) + W


def energy_rhs_scalar(state, T, A, Z, m, div_q, lambda_heat):
    """``rho d(eps)/dt`` from the scalar energy balance."""
    return -scalar_power_density(state, T, A, Z, m) - div_q + lambda_heat


def energy_rhs_tensor(state, T, A, Z, m, grad_q, lambda_heat):
    """Right side of the tensor energy balance, ``(rho deps/dt / 3) I`` when consistent.

    The internal-power part enters with the opposite sign of
    :func:`tensor_power_density`, so the trace of this tensor matches
    :func:`energy_rhs_scalar`.
    """
    # lambda_heat is a rate per unit volume, as in the scalar balance
    lam = np.asarray(lambda_heat, dtype=float)[..., None, None]
    return -tensor_power_density(state, T, A, Z, m) - sym(np.asarray(grad_q, dtype=float)) + lam * IDENTITY / 3.0


def energy_rhs_tensor_residual(state, T, A, Z, m, grad_q, lambda_heat):
    """Norm of the deviatoric part of the tensor energy right side.

    A spherical internal energy can only absorb a spherical right side, so a
    nonzero value measures how far the closure is from that assumption.
    """
    return norm(dev(energy_rhs_tensor(state, T, A, Z, m, grad_q, lambda_heat)))
