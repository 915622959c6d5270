"""Closed-form stationary shear, elementary channel flows and their residual checks.

The stationary shear state has a single velocity-gradient component
``L12 = l``, ``B = L`` and ``Y = Y33 c3 x c3``; the ferment tensor follows from
the stationary ferment balance. The (1,1) entry carries a factor 2:
``H11 = (gamma l^2 / (4 alpha rho)) (1 + 2 l^2 / alpha^2)``. The variant with
factor 1 is kept as :data:`PRINTED_H11_FACTOR` for comparison; it leaves a
``gamma l^4 / (4 alpha^2)`` residual in the (1,1) slot.
"""

from dataclasses import dataclass, field

import numpy as np

from .constitutive import MaterialParams
from .errors import AlphaZero, ShapeMismatch
from .tensors import IDENTITY, matmul, norm, outer, sym, transpose

PRINTED_H11_FACTOR = 1.0
DERIVED_H11_FACTOR = 2.0

C1, C2, C3 = IDENTITY


# stationary shear -----------------------------------------------------------------------

@dataclass(frozen=True)
class StationaryShear:
    rho: float
    alpha: float
    gamma: float
    eta3: float
    L12: float
    Y33: float
    L: np.ndarray
    B: np.ndarray
    Y: np.ndarray
    H: np.ndarray

    @property
    def B12(self):
        return self.B[0, 1]

    @property
    def extra_stress(self):
        """Stress added to the viscous shear stress by the ferment, ``-rho H``."""
        return -self.rho * self.H


def shear_H(rho, alpha, gamma, L12, h11_factor=DERIVED_H11_FACTOR):
    l = float(L12)
    base = gamma * l * l / (4.0 * alpha * rho)
    H = np.zeros((3, 3))
    H[0, 0] = base * (1.0 + h11_factor * l * l / (alpha * alpha))
    H[1, 1] = base
    H[0, 1] = H[1, 0] = -gamma * l**3 / (4.0 * alpha * alpha * rho)
    return H


def stationary_shear(rho, alpha, gamma, eta3, L12, Y33=1.0):
    """Stationary single-component shear state for ``alpha > 0``."""
    if alpha == 0:
        raise AlphaZero("the stationary ferment balance is degenerate for alpha = 0; see example4_alpha_zero")
    if alpha < 0 or rho <= 0:
        raise ValueError("need alpha > 0 and rho > 0")
    L = np.zeros((3, 3))
    L[0, 1] = L12
    Y = np.zeros((3, 3))
    Y[2, 2] = Y33
    return StationaryShear(
        rho=rho, alpha=alpha, gamma=gamma, eta3=eta3, L12=L12, Y33=Y33,
        L=L, B=L.copy(), Y=Y, H=shear_H(rho, alpha, gamma, L12),
    )


def printed_stationary_H(rho, alpha, gamma, L12):
    """Ferment tensor with the factor-1 (1,1) entry."""
    return shear_H(rho, alpha, gamma, L12, PRINTED_H11_FACTOR)


def algebraic_residuals(rho, L, B, Y, H, alpha, gamma, eta3):
    """
    Residual tensors of the stationary algebraic system.

    ``ferment``: ``rho (L H + H L^T) + alpha rho H - gamma D^2``;
    ``incompressibility``: ``tr L``; ``inertia``: ``B Y + Y B^T``;
    ``affine``: ``rho B^2 Y - 2 eta3 (L - B)``; ``L_squared``: ``L^2``;
    ``affine_sym``: ``sym(rho B^2 Y) - 2 eta3 sym(L - B)``;
    ``skew``: ``skw L - skw B``.
    """
    L, B, Y, H = (np.asarray(a, dtype=float) for a in (L, B, Y, H))
    D = sym(L)
    BBY = rho * matmul(matmul(B, B), Y)
    return {
        "ferment": rho * (matmul(L, H) + matmul(H, transpose(L))) + alpha * rho * H - gamma * matmul(D, D),
        "incompressibility": np.trace(L),
        "inertia": matmul(B, Y) + matmul(Y, transpose(B)),
        "affine": BBY - 2.0 * eta3 * (L - B),
        "L_squared": matmul(L, L),
        "affine_sym": sym(BBY) - 2.0 * eta3 * sym(L - B),
        "skew": 0.5 * ((L - B) - transpose(L - B)),
    }


def algebraic_residual(rho, L, B, Y, H, alpha, gamma, eta3):
    """Largest absolute entry over all stationary conditions."""
    parts = algebraic_residuals(rho, L, B, Y, H, alpha, gamma, eta3)
    return float(max(np.max(np.abs(v)) for v in parts.values()))


def shear_residual(shear):
    return algebraic_residual(shear.rho, shear.L, shear.B, shear.Y, shear.H, shear.alpha, shear.gamma, shear.eta3)


def example4_stress_coefficient(gamma, alpha, u_mag, delta):
    """(1,1) extra-stress entry ``-rho H11`` for plane Couette flow; independent of density."""
    s = (u_mag / delta) ** 2
    return -(gamma / (4.0 * alpha)) * s * (1.0 + 2.0 * s / alpha**2)


@dataclass(frozen=True)
class AlphaZeroReport:
    L12: float
    H12: float
    residual_22: float
    printed_H12: float
    consistent: bool
    note: str


def example4_alpha_zero(rho, gamma, u_mag, delta):
    """
    Couette flow without collision loss.

    The (1,1) ferment equation ``2 rho L12 H12 = gamma L12^2 / 4`` fixes
    ``H12 = gamma L12 / (8 rho)``; the (2,2) equation then reads
    ``0 = gamma L12^2 / 4``, which fails for ``gamma L12 != 0``.
    """
    L12 = u_mag / delta
    H12 = gamma * L12 / (8.0 * rho) if L12 != 0 else 0.0
    residual = gamma * L12**2 / 4.0
    consistent = residual == 0
    note = (
        "stationary state exists"
        if consistent
        else "(2,2) ferment equation cannot balance: gamma L12^2 / 4 remains"
    )
    return AlphaZeroReport(
        L12=L12, H12=H12, residual_22=residual, printed_H12=gamma * u_mag**2 / (8.0 * rho * delta),
        consistent=consistent, note=note,
    )


# dispersion -------------------------------------------------------------------------------

@dataclass(frozen=True)
class DispersionResult:
    """Real roots of the separable-mode dispersion relation.

    ``convention = "literal"``: ``beta z^2 - |u| z + alpha - gamma_hat = 0``
    (advection toward growing ``zeta1``, ferment flux ``-beta grad(rho H)``
    taken literally). ``convention = "diffusive"``: ``beta z^2 + u1 z +
    gamma_hat - alpha = 0`` with signed ``u1``, the relation obeyed by the
    solver's ferment equation.
    """

    beta: float
    u: float
    alpha: float
    gamma_hat: float
    convention: str
    coefficients: tuple
    roots: tuple
    regime: str
    interval: tuple

    @property
    def decaying_root(self):
        positive = [r for r in self.roots if r > 0]
        return min(positive) if positive else None

    def residuals(self):
        a, b, c = self.coefficients
        return tuple(a * z * z + b * z + c for z in self.roots)


def _quadratic_roots(a, b, c, c_size=None):
    # c_size: magnitude of the terms c was formed from, which bounds its rounding error
    disc = b * b - 4.0 * a * c
    c_size = abs(c) if c_size is None else c_size
    scale = max(b * b, abs(4.0 * a * c_size), np.finfo(float).tiny)
    # only a slightly negative discriminant is read as rounding away from a double root
    if disc == 0 or (disc < 0 and -disc <= 1e-14 * scale):
        return (float(-b / (2.0 * a)),) * 2
    if disc < 0:
        return ()
    q = -0.5 * (b + np.copysign(np.sqrt(disc), b))
    roots = [q / a, c / q] if q != 0 else [0.0, -b / a]
    polished = []
    for z in roots:
        d = 2.0 * a * z + b
        if d != 0:
            z = z - (a * z * z + b * z + c) / d
        polished.append(z)
    return tuple(sorted(float(z) for z in polished))


def dispersion(beta, u_mag, alpha, gamma_hat, convention="literal"):
    """Roots and regime of the dispersion relation; ``u_mag`` is signed for ``"diffusive"``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    if convention == "literal":
        coeffs = (beta, -abs(u_mag), alpha - gamma_hat)
        interval = (gamma_hat, gamma_hat + u_mag**2 / (4.0 * beta))
    elif convention == "diffusive":
        coeffs = (beta, u_mag, gamma_hat - alpha)
        interval = (gamma_hat - u_mag**2 / (4.0 * beta), gamma_hat)
    else:
        raise ValueError("convention must be 'literal' or 'diffusive'")
    roots = _quadratic_roots(*coeffs, c_size=abs(alpha) + abs(gamma_hat))
    if not roots:
        regime = "no real decay mode"
    elif roots[0] == roots[1]:
        regime = "double root" if roots[0] > 0 else "double root, not decaying"
    else:
        n_pos = sum(r > 0 for r in roots)
        n_zero = sum(r == 0 for r in roots)
        regime = {2: "two decay modes", 1: "one decay mode"}.get(n_pos, "no decay mode")
        if n_zero:
            regime += ", one neutral root"
    return DispersionResult(
        beta=beta, u=u_mag, alpha=alpha, gamma_hat=gamma_hat, convention=convention,
        coefficients=coeffs, roots=roots, regime=regime, interval=interval,
    )


# example flows -----------------------------------------------------------------------------

def _vec(v):
    return np.asarray(v, dtype=float).reshape(3)


@dataclass
class ExampleFields:
    """Closed-form fields of one elementary flow and their exact derivatives.

    :meth:`point` returns values and derivatives at given coordinates and time;
    :func:`pointwise_residuals` substitutes them into the local balance laws.
    """

    which: str
    params: MaterialParams
    rho: float
    u0: np.ndarray
    L: np.ndarray
    B: np.ndarray
    Y: np.ndarray
    H0: np.ndarray
    spatial_rate: float = 0.0
    temporal_rate: float = 0.0
    shear: StationaryShear = None
    observables: dict = field(default_factory=dict)

    def _profile(self, zeta1, zeta2, t):
        return np.exp(-self.spatial_rate * np.asarray(zeta1, dtype=float) - self.temporal_rate * t)

    def point(self, zeta1, zeta2, t=0.0):
        zeta1 = np.asarray(zeta1, dtype=float)
        zeta2 = np.asarray(zeta2, dtype=float)
        shape = np.broadcast(zeta1, zeta2).shape
        pos = np.stack([np.broadcast_to(zeta1, shape), np.broadcast_to(zeta2, shape), np.zeros(shape)], axis=-1)
        u = self.u0 + np.einsum("ij,...j->...i", self.L, pos)
        e = self._profile(zeta1, zeta2, t)[..., None, None]
        H = e * self.H0
        grad_H = np.zeros(shape + (3, 3, 3))
        grad_H[..., 0] = -self.spatial_rate * H
        rep = lambda a: np.broadcast_to(a, shape + a.shape).copy()
        return dict(
            rho=np.full(shape, self.rho),
            u=u,
            L=rep(self.L),
            B=rep(self.B),
            grad_B=np.zeros(shape + (3, 3, 3)),
            Y=rep(self.Y),
            grad_Y=np.zeros(shape + (3, 3, 3)),
            H=H,
            grad_H=grad_H,
            lap_H=self.spatial_rate**2 * H,
            dt_rho=np.zeros(shape),
            dt_u=np.zeros(shape + (3,)),
            dt_Y=np.zeros(shape + (3, 3)),
            dt_B=np.zeros(shape + (3, 3)),
            dt_H=-self.temporal_rate * H,
        )

    def state(self, grid, t=0.0):
        """Nodal :class:`~kinetic_continua.solver.FieldState` on ``grid``."""
        from .solver.state import FieldState

        z1, z2 = grid.mesh()
        p = self.point(z1, z2, t)
        return FieldState(rho=p["rho"], u=p["u"], Y=p["Y"], B=p["B"], H=p["H"])


def pointwise_residuals(point, params, f=None, M=None, S=None):
    """
    Residuals of the local balance laws for fields with uniform density and
    affine velocity (so viscous divergences vanish identically).

    Rows are returned per unit volume: ``mass``, ``inertia``, ``momentum``
    (times rho), ``affine`` (left minus right) and ``ferment`` (times rho).
    """
    rho, u, L, B, Y, H = (point[k] for k in ("rho", "u", "L", "B", "Y", "H"))
    r = rho[..., None, None]
    f = np.zeros(3) if f is None else _vec(f)
    M = np.zeros((3, 3)) if M is None else np.asarray(M, dtype=float)
    S = np.zeros((3, 3)) if S is None else np.asarray(S, dtype=float)
    D = sym(L)
    adv = lambda g: np.einsum("...ijk,...k->...ij", g, u)
    mass = point["dt_rho"] + rho * np.trace(L, axis1=-2, axis2=-1)
    inertia = point["dt_Y"] - (-adv(point["grad_Y"]) + matmul(B, Y) + matmul(Y, transpose(B)))
    div_rhoH = rho[..., None] * np.einsum("...ikk->...i", point["grad_H"])
    momentum = rho[..., None] * (point["dt_u"] + np.einsum("...ij,...j->...i", L, u) - f) + div_rhoH
    affine = r * matmul(point["dt_B"] + adv(point["grad_B"]) + matmul(B, B), Y) - (
        r * transpose(np.broadcast_to(M, B.shape)) + 2.0 * params.eta3 * (L - B)
    )
    ferment_rhs = (
        -adv(point["grad_H"])
        - matmul(L, H)
        - matmul(H, transpose(L))
        + S
        + params.beta * point["lap_H"]
        - params.alpha * H
        + params.gamma * matmul(D, D) / r
    )
    ferment = r * (point["dt_H"] - ferment_rhs)
    return dict(mass=mass, inertia=inertia, momentum=momentum, affine=affine, ferment=ferment)


def example_fields(which, params, rho=1.0, u=None, v=None, Y33=0.0, delta=1.0, chi0=1.0):
    """
    Closed-form fields of the elementary channel flows.

    ``which``: ``"1"`` uniform drift with wall-to-wall bouncing ``H = v x v``;
    (needs ``alpha = 0``); ``"2_temporal"`` ferment decaying as ``exp(-alpha t)``;
    ``"2_spatial"`` stationary ferment decaying as ``exp(-(alpha/|u|) zeta1)``
    (needs ``beta = 0``); ``"3"`` separable mode ``chi0 v x v exp(-z zeta1 -
    gamma_hat t)`` with ``z`` the decaying root of the diffusive dispersion
    relation; ``"4"`` plane Couette flow with wall speed ``|u|`` across width
    ``delta``. ``u`` is a vector (a speed for example 4) and ``v`` the bounce velocity.
    """
    which = str(which)
    zero = np.zeros((3, 3))
    Ymat = Y33 * np.outer(C3, C3)
    obs = {}
    if which == "1":
        if params.alpha != 0:
            raise ValueError("example 1 is steady only without collision loss (alpha = 0)")
        u0 = _vec((1.0, 0.0, 0.0) if u is None else u)
        vv = _vec((0.0, 1.0, 0.0) if v is None else v)
        H0 = np.outer(vv, vv)
        traction = -rho * H0 @ C2
        obs.update(wall_traction=traction, wall_pressure=-float(traction @ C2), pressure_formula=rho * float(vv @ vv))
        return ExampleFields(which, params, rho, u0, zero, zero, Ymat, H0, observables=obs)
    if which == "2_temporal":
        vv = _vec((0.0, 1.0, 0.0) if v is None else v)
        obs.update(decay_rate=params.alpha)
        return ExampleFields(which, params, rho, np.zeros(3), zero, zero, Ymat, np.outer(vv, vv),
                             temporal_rate=params.alpha, observables=obs)
    if which == "2_spatial":
        if params.beta != 0:
            raise ValueError("the spatial decay profile of example 2 holds without ferment diffusion (beta = 0)")
        u0 = _vec((1.0, 0.0, 0.0) if u is None else u)
        speed = abs(u0[0])
        if speed == 0 or np.any(u0[1:] != 0):
            raise ValueError("example 2 spatial needs a nonzero velocity along zeta1")
        vv = _vec((0.0, 1.0, 0.0) if v is None else v)
        rate = params.alpha / speed
        obs.update(decay_rate=rate, printed_decay_rate=params.alpha)
        return ExampleFields(which, params, rho, u0, zero, zero, Ymat, np.outer(vv, vv),
                             spatial_rate=rate, observables=obs)
    if which == "3":
        u0 = _vec((1.0, 0.0, 0.0) if u is None else u)
        if np.any(u0[1:] != 0):
            raise ValueError("example 3 needs the velocity along zeta1")
        vv = _vec((0.0, 1.0, 0.0) if v is None else v)
        if vv[0] != 0:
            raise ValueError("the separable mode needs v normal to the channel axis")
        disp = dispersion(params.beta, u0[0], params.alpha, params.gamma_hat, convention="diffusive")
        z = disp.decaying_root
        if z is None:
            raise ValueError(f"no decaying separable mode ({disp.regime})")
        obs.update(zeta=z, gamma_hat=params.gamma_hat, dispersion=disp)
        return ExampleFields(which, params, rho, u0, zero, zero, Ymat, chi0 * np.outer(vv, vv),
                             spatial_rate=z, temporal_rate=params.gamma_hat, observables=obs)
    if which == "4":
        speed = 1.0 if u is None else float(np.linalg.norm(u) if np.ndim(u) else u)
        shear = stationary_shear(rho, params.alpha, params.gamma, params.eta3, speed / delta, Y33=Y33)
        obs.update(
            extra_stress=shear.extra_stress,
            stress_11_coefficient=example4_stress_coefficient(params.gamma, params.alpha, speed, delta),
            viscous_shear_stress=params.eta1 * speed / delta,
        )
        return ExampleFields(which, params, rho, np.zeros(3), shear.L, shear.B, shear.Y, shear.H,
                             shear=shear, observables=obs)
    raise ValueError(f"unknown example {which!r}")


# comparison ------------------------------------------------------------------------------

def verify_against_solver(expected, actual):
    """
    Error norms between closed-form and computed states.

    ``expected`` and ``actual`` are field states (or equal-length sequences of
    them). Returns, per field, ``{"linf": ..., "l2": ...}`` with ``l2`` the
    root-mean-square nodal error; sequences give one dict per time.
    """
    if isinstance(expected, (list, tuple)) or isinstance(actual, (list, tuple)):
        if not isinstance(expected, (list, tuple)) or not isinstance(actual, (list, tuple)) or len(expected) != len(actual):
            raise ShapeMismatch("expected and actual series differ in length")
        return [verify_against_solver(e, a) for e, a in zip(expected, actual)]
    out = {}
    for name in ("rho", "u", "Y", "B", "H", "eps"):
        e, a = getattr(expected, name, None), getattr(actual, name, None)
        if e is None or a is None:
            continue
        e, a = np.asarray(e), np.asarray(a)
        if e.shape != a.shape:
            raise ShapeMismatch(f"field {name}: shape {e.shape} vs {a.shape}")
        diff = e - a
        out[name] = {"linf": float(np.max(np.abs(diff), initial=0.0)), "l2": float(np.sqrt(np.mean(diff * diff)))}
    return out


def relative_error(expected, actual):
    expected, actual = np.asarray(expected), np.asarray(actual)
    scale = np.max(norm(expected)) if expected.ndim >= 2 else np.max(np.abs(expected))
    return float(np.max(np.abs(expected - actual)) / scale)
