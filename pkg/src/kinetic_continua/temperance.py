"""Velocity-distribution moments, the order tensor and the tensorial temperance.

The canonical density is

    theta(v) = exp[Theta . (|v|^2 v x v - I/3)] / theta0,

quartic in ``v`` and normalizable iff ``Theta`` is negative definite. Writing
``a(n) = -n . Theta n`` for a unit direction ``n``, the radial integrals are
closed form,

    int_0^inf r^2 exp(-a r^4) dr = Gamma(3/4) / (4 a^(3/4)),
    int_0^inf r^4 exp(-a r^4) dr = Gamma(5/4) / (4 a^(5/4)),

so only an angular quadrature remains. Monte Carlo estimates draw from an
isotropic quartic-exponential envelope by rejection.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import (
    InfeasibleTarget,
    NoConvergence,
    NotNormalizable,
    QuadratureFailure,
    ZeroFerment,
)
from .tensors import IDENTITY, norm, sym, sym_to_vec6, vec6_to_sym

G34 = gamma_fn(0.75)
G54 = gamma_fn(1.25)
ISOTROPIC_RATIO = G54 / G34
"""For ``Theta = -k I`` the ferment tensor is ``(ISOTROPIC_RATIO / 3) k^(-1/2) I``."""

NORM_TOLERANCE = 0.05
N_BLOCKS = 64


# angular and radial rules --------------------------------------------------------------

@lru_cache(maxsize=16)
def sphere_rule(n_theta=64, n_phi=128):
    """Unit directions and weights (summing to 4 pi): Gauss-Legendre in cos(theta), trapezoid in phi."""
    x, wx = np.polynomial.legendre.leggauss(n_theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    ct, ph = np.meshgrid(x, phi, indexing="ij")
    st = np.sqrt(1.0 - ct * ct)
    n = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1).reshape(-1, 3)
    w = np.outer(wx, np.full(n_phi, 2.0 * np.pi / n_phi)).ravel()
    n.setflags(write=False)
    w.setflags(write=False)
    return n, w


# distributions ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpeedDistribution:
    """A velocity distribution.

    ``mode = "sphere"``: every grain has speed ``speed`` and ``density(n)`` is
    the distribution of directions on the unit sphere. ``mode = "full"``:
    ``density(v)`` is a density on velocity space; ``scale`` sets the width
    of the Monte Carlo proposal and the starting radius of the quadrature
    cutoff search. ``atoms``, a pair ``(directions, weights)``, replaces the
    sphere density by point masses.
    """

    density: object = None
    mode: str = "full"
    speed: float = 1.0
    scale: float = 1.0
    atoms: tuple = None

    def __post_init__(self):
        if self.mode not in ("sphere", "full"):
            raise ValueError("mode must be 'sphere' or 'full'")
        if self.density is None and self.atoms is None:
            raise ValueError("need a density or atoms")

    @classmethod
    def uniform_sphere(cls, speed=1.0):
        return cls(density=lambda n: np.full(np.shape(n)[:-1], 1.0 / (4.0 * np.pi)), mode="sphere", speed=speed)

    @classmethod
    def point_masses(cls, directions, weights, speed=1.0):
        d = np.asarray(directions, dtype=float).reshape(-1, 3)
        d = d / np.linalg.norm(d, axis=-1, keepdims=True)
        return cls(mode="sphere", speed=speed, atoms=(d, np.asarray(weights, dtype=float)))

    @classmethod
    def canonical(cls, Theta):
        Theta = _check_theta(Theta)
        theta0 = compute_theta0(Theta)
        lam = float(np.min(np.linalg.eigvalsh(-Theta)))
        return cls(density=lambda v: canonical_density(Theta, v, theta0), mode="full", scale=lam ** -0.25)


@dataclass(frozen=True)
class Moments:
    norm: float
    mean: np.ndarray
    H: np.ndarray
    se_norm: float = 0.0
    se_mean: np.ndarray = field(default_factory=lambda: np.zeros(3))
    se_H: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    samples: int = 0


def _radial_cutoff(dist, n, peak_floor=1e-16):
    """Radius beyond which ``r^4 density`` stays below ``peak_floor`` of its peak along every direction."""
    r = dist.scale
    rs = np.linspace(0.0, 1.0, 65)[1:]
    while True:
        grid = rs[:, None, None] * r * n[None, :, :]
        vals = np.abs(dist.density(grid)) * (rs[:, None] * r) ** 4
        peak = np.max(vals)
        if peak > 0 and np.max(vals[-1]) < peak_floor * peak:
            return r
        r *= 2.0
        if r > 1e6 * dist.scale:
            raise QuadratureFailure("density does not decay; no radial cutoff found")


def _quadrature_moments(dist, n_theta=64, n_phi=128, n_radial=96):
    if dist.atoms is not None:
        d, w = dist.atoms
        s = dist.speed
        return Moments(norm=float(np.sum(w)), mean=s * w @ d, H=s * s * np.einsum("k,ki,kj->ij", w, d, d))
    n, w = sphere_rule(n_theta, n_phi)
    if dist.mode == "sphere":
        f = dist.density(n) * w
        total = np.sum(f)
        mean = dist.speed * f @ n
        H = dist.speed**2 * np.einsum("k,ki,kj->ij", f, n, n)
        return Moments(norm=float(total), mean=mean, H=sym(H))
    R = _radial_cutoff(dist, n)
    x, wx = np.polynomial.legendre.leggauss(n_radial)
    r = 0.5 * R * (x + 1.0)
    wr = 0.5 * R * wx
    vals = dist.density(r[:, None, None] * n[None, :, :])
    f = vals * (wr * r * r)[:, None] * w[None, :]
    total = np.sum(f)
    mean = np.einsum("rk,r,ki->i", f, r, n)
    H = np.einsum("rk,r,ki,kj->ij", f, r * r, n, n)
    return Moments(norm=float(total), mean=mean, H=sym(H))


def _batch_stats(block_values):
    """Mean and batch-means standard error over the leading (block) axis."""
    vals = np.asarray(block_values)
    mean = np.mean(vals, axis=0)
    se = np.std(vals, axis=0, ddof=1) / np.sqrt(vals.shape[0])
    return mean, se


def _run_blocks(fn, seed, n_samples, threads):
    per_block = max(1, -(-int(n_samples) // N_BLOCKS))
    streams = np.random.SeedSequence(seed).spawn(N_BLOCKS)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(lambda s: fn(np.random.default_rng(s), per_block), streams))
    else:
        blocks = [fn(np.random.default_rng(s), per_block) for s in streams]
    return blocks, per_block * N_BLOCKS


def _uniform_directions(rng, k):
    z = rng.standard_normal((k, 3))
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


def _mc_moments(dist, n_samples, seed, threads):
    if dist.atoms is not None:
        return _quadrature_moments(dist)

    def block(rng, k):
        if dist.mode == "sphere":
            n = _uniform_directions(rng, k)
            wgt = 4.0 * np.pi * dist.density(n)
            v = dist.speed * n
        else:
            s = dist.scale
            v = s * rng.standard_normal((k, 3))
            g = np.exp(-0.5 * np.sum(v * v, axis=-1) / s**2) / (2.0 * np.pi * s * s) ** 1.5
            wgt = dist.density(v) / g
        return np.concatenate([[np.mean(wgt)], np.mean(wgt[:, None] * v, axis=0),
                               np.mean(wgt[:, None, None] * v[:, :, None] * v[:, None, :], axis=0).ravel()])

    blocks, total = _run_blocks(block, seed, n_samples, threads)
    mean, se = _batch_stats(blocks)
    return Moments(norm=float(mean[0]), mean=mean[1:4], H=sym(mean[4:].reshape(3, 3)), se_norm=float(se[0]),
                   se_mean=se[1:4], se_H=se[4:].reshape(3, 3), samples=total)


def moments(dist, method="quadrature", n_samples=10**6, seed=0, threads=1, **quad):
    """
    Normalization, mean velocity and ferment tensor ``H = int theta(v) v x v``.

    ``method = "mc"`` adds batch-means standard errors. Raises
    :class:`QuadratureFailure` when the normalization is off by more than 5%.
    """
    if method == "quadrature":
        m = _quadrature_moments(dist, **quad)
    elif method == "mc":
        m = _mc_moments(dist, n_samples, seed, threads)
    else:
        raise ValueError("method must be 'quadrature' or 'mc'")
    if not abs(m.norm - 1.0) <= NORM_TOLERANCE:
        raise QuadratureFailure(f"distribution normalization {m.norm:.6g} deviates from 1 by more than 5%")
    return m


def order_tensor(H):
    """``Q = H / tr H - I/3``; traceless with eigenvalues in [-1/3, 2/3] for PSD ``H``."""
    H = sym(np.asarray(H, dtype=float))
    tr = np.trace(H, axis1=-2, axis2=-1)
    if np.any(tr <= 0):
        raise ZeroFerment("order tensor undefined: tr H = 0")
    Q = H / tr[..., None, None] - IDENTITY / 3.0
    # remove the rounding residue of the trace
    return Q - (np.trace(Q, axis1=-2, axis2=-1) / 3.0)[..., None, None] * IDENTITY


# canonical distribution ------------------------------------------------------------------

def _check_theta(Theta):
    Theta = np.asarray(Theta, dtype=float)
    if Theta.shape != (3, 3) or not np.all(np.isfinite(Theta)):
        raise ValueError("Theta must be a finite 3x3 tensor")
    Theta = sym(Theta)
    if np.max(np.linalg.eigvalsh(Theta)) >= 0:
        raise NotNormalizable("the canonical density needs a negative definite Theta")
    return Theta


def _angular_terms(Theta, n_theta, n_phi):
    n, w = sphere_rule(n_theta, n_phi)
    a = -np.einsum("ki,ij,kj->k", n, Theta, n)
    return n, w, a


def compute_theta0(Theta, n_theta=64, n_phi=128):
    """Normalizing constant of the canonical density."""
    Theta = _check_theta(Theta)
    _, w, a = _angular_terms(Theta, n_theta, n_phi)
    return float(np.exp(-np.trace(Theta) / 3.0) * np.sum(w * G34 / (4.0 * a**0.75)))


def canonical_density(Theta, v, theta0=None):
    """Canonical density at velocities ``v`` (shape ``(..., 3)``)."""
    Theta = _check_theta(Theta)
    if theta0 is None:
        theta0 = compute_theta0(Theta)
    v = np.asarray(v, dtype=float)
    s = np.sum(v * v, axis=-1)
    expo = s * np.einsum("...i,ij,...j->...", v, Theta, v) - np.trace(Theta) / 3.0
    return np.exp(expo) / theta0


def canonical_H(Theta, n_theta=64, n_phi=128):
    """Ferment tensor of the canonical density, by angular quadrature of the closed-form radial integrals."""
    Theta = _check_theta(Theta)
    n, w, a = _angular_terms(Theta, n_theta, n_phi)
    z = np.sum(w * G34 / (4.0 * a**0.75))
    H = np.einsum("k,ki,kj->ij", w * G54 / (4.0 * a**1.25), n, n) / z
    return sym(H)


def sample_canonical(Theta, n_samples, seed=0, threads=1):
    """Rejection samples from the canonical density, ``N_BLOCKS`` independent streams."""
    Theta = _check_theta(Theta)
    A = -Theta
    lam = float(np.min(np.linalg.eigvalsh(A)))

    def block(rng, k):
        out = np.empty((0, 3))
        while out.shape[0] < k:
            m = 2 * (k - out.shape[0]) + 16
            r = (rng.gamma(0.75, 1.0, m) / lam) ** 0.25
            n = _uniform_directions(rng, m)
            a = np.einsum("ki,ij,kj->k", n, A, n)
            keep = rng.random(m) < np.exp(-(r**4) * (a - lam))
            out = np.concatenate([out, r[keep, None] * n[keep]])
        return out[:k]

    blocks, _ = _run_blocks(block, seed, n_samples, threads)
    return blocks


def canonical_moments(Theta, method="quadrature", n_samples=10**6, seed=0, threads=1, n_theta=64, n_phi=128):
    """Moments of the canonical density; Monte Carlo adds batch-means standard errors."""
    Theta = _check_theta(Theta)
    if method == "quadrature":
        return Moments(norm=1.0, mean=np.zeros(3), H=canonical_H(Theta, n_theta, n_phi))
    if method != "mc":
        raise ValueError("method must be 'quadrature' or 'mc'")
    blocks = sample_canonical(Theta, n_samples, seed, threads)
    stats = [np.concatenate([np.mean(b, axis=0), np.einsum("ki,kj->ij", b, b).ravel() / b.shape[0]]) for b in blocks]
    mean, se = _batch_stats(stats)
    return Moments(norm=1.0, mean=mean[:3], H=sym(mean[3:].reshape(3, 3)), se_mean=se[:3],
                   se_H=se[3:].reshape(3, 3), samples=sum(b.shape[0] for b in blocks))


def order_tensor_mc(Theta, n_samples=10**6, seed=0, threads=1):
    """Order tensor of canonical samples with batch-means standard errors per component."""
    blocks = sample_canonical(Theta, n_samples, seed, threads)
    Qs = [order_tensor(np.einsum("ki,kj->ij", b, b) / b.shape[0]) for b in blocks]
    return _batch_stats(Qs)


# inverse problem -------------------------------------------------------------------------

@dataclass(frozen=True)
class Temperance:
    Theta: np.ndarray
    theta0: float
    H: np.ndarray = None
    iterations: int = 0
    residual: float = 0.0

    @property
    def inverse(self):
        """Inverse of the temperance (a tensorial absolute temperature, up to sign)."""
        return np.linalg.inv(self.Theta)


def _sym_fn(S, fn):
    w, V = np.linalg.eigh(S)
    return (V * fn(w)) @ V.T


def fit_temperance(H_target, tolerance=1e-10, max_iter=100, n_theta=64, n_phi=128):
    """
    Negative definite ``Theta`` whose canonical density has ferment tensor ``H_target``.

    Writes ``Theta = -expm(X)`` and runs damped Newton on the six components
    of ``X`` against ``logm H(Theta) - logm H_target``, with a central-difference
    Jacobian. The start ``Theta0 = -c H_target^-1`` matches an isotropic
    target exactly. Convergence is judged on ``|H(Theta) - H_target| <=
    tolerance |H_target|``.
    """
    H_t = np.asarray(H_target, dtype=float)
    if H_t.shape != (3, 3) or not np.all(np.isfinite(H_t)):
        raise InfeasibleTarget("target must be a finite 3x3 tensor")
    if norm(H_t - H_t.T) > 1e-12 * norm(H_t):
        raise InfeasibleTarget("target must be symmetric")
    H_t = sym(H_t)
    ev = np.linalg.eigvalsh(H_t)
    if ev[-1] <= 0 or ev[0] <= 1e-12 * ev[-1]:
        raise InfeasibleTarget("target must be positive definite (singular or indefinite H)")
    scale = norm(H_t)
    log_t = _sym_fn(H_t, np.log)
    c = (ISOTROPIC_RATIO / 3.0) ** 2 / (np.trace(H_t) / 3.0)
    X = _sym_fn(c * np.linalg.inv(H_t), np.log)

    def theta_of(x):
        return -_sym_fn(vec6_to_sym(x), np.exp)

    def evaluate(x):
        H = canonical_H(theta_of(x), n_theta, n_phi)
        return H, sym_to_vec6(_sym_fn(H, np.log) - log_t)

    x = sym_to_vec6(X)
    H, r = evaluate(x)
    for it in range(max_iter + 1):
        err = float(norm(H - H_t) / scale)
        if err <= tolerance:
            Theta = theta_of(x)
            return Temperance(Theta=Theta, theta0=compute_theta0(Theta, n_theta, n_phi), H=H,
                              iterations=it, residual=err)
        if it == max_iter:
            break
        J = np.empty((6, 6))
        step = 1e-6
        for k in range(6):
            e = np.zeros(6)
            e[k] = step
            try:
                J[:, k] = (evaluate(x + e)[1] - evaluate(x - e)[1]) / (2.0 * step)
            except NotNormalizable as exc:
                raise NoConvergence(f"iterate left the representable range at relative residual {err:.3g}") from exc
        dx = -np.linalg.lstsq(J, r, rcond=None)[0]
        t = 1.0
        while t > 1e-10:
            try:
                Hc, rc = evaluate(x + t * dx)
            except NotNormalizable:
                # exp(X) under- or overflowed
                t *= 0.5
                continue
            if np.all(np.isfinite(rc)) and np.linalg.norm(rc) < np.linalg.norm(r):
                x, H, r = x + t * dx, Hc, rc
                break
            t *= 0.5
        else:
            raise NoConvergence(f"line search stalled at relative residual {err:.3g}")
    raise NoConvergence(f"no convergence after {max_iter} iterations (relative residual {err:.3g})")


@dataclass(frozen=True)
class TableRow:
    Theta: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    theta0: float
    se_H: np.ndarray


def tabulate(thetas, method="quadrature", n_samples=10**5, seed=0, threads=1):
    """Ferment and order tensors over a list of temperances."""
    rows = []
    for k, Th in enumerate(thetas):
        Th = _check_theta(Th)
        m = canonical_moments(Th, method=method, n_samples=n_samples, seed=[seed, k], threads=threads)
        rows.append(TableRow(Theta=Th, H=m.H, Q=order_tensor(m.H), theta0=compute_theta0(Th), se_H=m.se_H))
    return rows
