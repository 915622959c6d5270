"""Vertex-centred structured grids, boundary specifications and finite differences.

Nodes sit at ``zeta = i h``. A non-periodic axis with ``n`` cells carries
``n + 1`` nodes, the first and last lying on the boundary; a periodic axis
carries ``n`` nodes. An axis with zero cells is inactive: one node, no
derivatives.

Boundaries are realized with two layers of ghost nodes. Ghost kinds:

``periodic``  wrap-around
``even``      mirror, ``f[-k] = f[k]`` (zero normal derivative)
``odd``       antisymmetric about the boundary value, ``f[-k] = 2 f[0] - f[k]``
``extrap``    quadratic extrapolation; central stencils at the boundary node
              then reduce to second-order one-sided differences
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..errors import ConfigError

SIDES = ("zeta1_lo", "zeta1_hi", "zeta2_lo", "zeta2_hi")
VELOCITY_KINDS = ("velocity_dirichlet", "free_slip", "outflow")
FERMENT_KINDS = ("flux_free", "loss", "dirichlet")
PAD = 2


@dataclass(frozen=True)
class Grid:
    cells: tuple = (64, 0)
    lengths: tuple = (1.0, 1.0)
    periodic: tuple = (False, False)

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(int(c) for c in self.cells))
        object.__setattr__(self, "lengths", tuple(float(x) for x in self.lengths))
        object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))
        if len(self.cells) != 2 or len(self.lengths) != 2 or len(self.periodic) != 2:
            raise ValueError("grid needs exactly two axes (use 0 cells for an inactive axis)")
        if not any(c > 0 for c in self.cells):
            raise ValueError("at least one axis must be active")
        for c, ell in zip(self.cells, self.lengths):
            if c != 0 and c < 4:
                raise ValueError("active axes need at least 4 cells")
            if ell <= 0:
                raise ValueError("axis lengths must be positive")

    @cached_property
    def active(self):
        return tuple(c > 0 for c in self.cells)

    @cached_property
    def dimension(self):
        return sum(self.active)

    @cached_property
    def h(self):
        return tuple(ell / c if c else ell for c, ell in zip(self.cells, self.lengths))

    @cached_property
    def shape(self):
        return tuple(
            1 if not a else (c if p else c + 1) for a, c, p in zip(self.active, self.cells, self.periodic)
        )

    @property
    def delta(self):
        """Channel width (extent of the second axis)."""
        return self.lengths[1]

    def coords(self, axis):
        if not self.active[axis]:
            return np.zeros(1)
        return np.arange(self.shape[axis]) * self.h[axis]

    def mesh(self):
        z1, z2 = np.meshgrid(self.coords(0), self.coords(1), indexing="ij")
        return z1, z2

    def axis_weights(self, axis):
        """Trapezoid weights along one axis; an inactive axis contributes a unit factor."""
        if not self.active[axis]:
            return np.ones(1)
        w = np.full(self.shape[axis], self.h[axis])
        if not self.periodic[axis]:
            w[0] *= 0.5
            w[-1] *= 0.5
        return w

    def weights(self):
        return np.outer(self.axis_weights(0), self.axis_weights(1))

    def integrate(self, f):
        """Trapezoid integral of a nodal field with arbitrary trailing axes."""
        w = self.weights()
        return np.tensordot(w, np.asarray(f), axes=([0, 1], [0, 1]))

    def boundary_sides(self):
        """Non-periodic sides of active axes as (name, axis, index, outward sign)."""
        out = []
        for axis in (0, 1):
            if self.active[axis] and not self.periodic[axis]:
                out.append((SIDES[2 * axis], axis, 0, -1.0))
                out.append((SIDES[2 * axis + 1], axis, self.shape[axis] - 1, 1.0))
        return out


@dataclass(frozen=True)
class SideBC:
    """Conditions on one non-periodic side.

    ``rho``, ``Y``, ``B`` and ``epsilon`` are optional inflow values; when set the
    boundary value is held fixed, otherwise it evolves with one-sided differences.
    ``gamma_hat`` overrides the material wall-loss rate for ``ferment = "loss"``.
    """

    velocity: str = "outflow"
    velocity_value: tuple = (0.0, 0.0, 0.0)
    ferment: str = "flux_free"
    ferment_value: np.ndarray = None
    gamma_hat: float = None
    rho: float = None
    Y: np.ndarray = None
    B: np.ndarray = None
    epsilon: float = None

    def __post_init__(self):
        if self.velocity not in VELOCITY_KINDS:
            raise ConfigError(f"unknown velocity condition {self.velocity!r}", key="velocity")
        if self.ferment not in FERMENT_KINDS:
            raise ConfigError(f"unknown ferment condition {self.ferment!r}", key="ferment")
        if self.ferment == "dirichlet" and self.ferment_value is None:
            raise ConfigError("ferment = 'dirichlet' needs ferment_value", key="ferment_value")


@dataclass(frozen=True)
class BoundarySpec:
    sides: dict = field(default_factory=dict)

    def side(self, name):
        return self.sides.get(name, SideBC())

    def validate(self, grid):
        for name in self.sides:
            if name not in SIDES:
                raise ConfigError(f"unknown boundary side {name!r}", key=name)
            axis = SIDES.index(name) // 2
            if grid.periodic[axis] or not grid.active[axis]:
                raise ConfigError(f"side {name!r} belongs to a periodic or inactive axis", key=name)

    # ghost kinds per field ---------------------------------------------------

    def _axis_kinds(self, grid, side_kind):
        kinds = []
        for axis in (0, 1):
            if not grid.active[axis]:
                kinds.append(None)
            elif grid.periodic[axis]:
                kinds.append(("periodic", "periodic"))
            else:
                kinds.append(tuple(side_kind(self.side(SIDES[2 * axis + s]), axis) for s in (0, 1)))
        return kinds

    def velocity_kinds(self, grid):
        """Per-component ghost kinds for the velocity."""

        def kind(side, axis):
            if side.velocity == "free_slip":
                return tuple("odd" if c == axis else "even" for c in range(3))
            return ("extrap",) * 3

        return self._axis_kinds(grid, kind)

    def ferment_kinds(self, grid):
        return self._axis_kinds(grid, lambda s, a: "even" if s.ferment == "flux_free" else "extrap")

    def scalar_kinds(self, grid):
        return self._axis_kinds(grid, lambda s, a: "extrap")

    def thermal_kinds(self, grid):
        return self._axis_kinds(grid, lambda s, a: "extrap" if s.epsilon is not None else "even")


# padding and stencils --------------------------------------------------------------

def _fill_ghosts(out, axis, n, kind, lo):
    """Fill the two ghost layers of ``out`` on one side from the three nodes nearest that side."""

    def at(k):
        idx = [slice(None)] * out.ndim
        idx[axis] = PAD + k if lo else PAD + n - 1 - k
        return tuple(idx)

    f0, f1, f2 = out[at(0)], out[at(1)], out[at(2)]
    if kind == "even":
        g1, g2 = f1, f2
    elif kind == "odd":
        g1, g2 = 2 * f0 - f1, 2 * f0 - f2
    elif kind == "extrap":
        g1 = 3 * f0 - 3 * f1 + f2
        g2 = 3 * g1 - 3 * f0 + f1
    else:
        raise ValueError(f"unknown ghost kind {kind!r}")
    out[at(-1)] = g1
    out[at(-2)] = g2


def _pad_axis(f, axis, kinds):
    lo, hi = kinds
    n = f.shape[axis]
    if lo == "periodic":
        return np.take(f, np.arange(-PAD, n + PAD) % n, axis=axis)
    shape = list(f.shape)
    shape[axis] += 2 * PAD
    out = np.empty(shape)
    idx = [slice(None)] * f.ndim
    idx[axis] = slice(PAD, PAD + n)
    out[tuple(idx)] = f
    _fill_ghosts(out, axis, n, lo, True)
    _fill_ghosts(out, axis, n, hi, False)
    return out


def pad(f, grid, kinds):
    """
    Pad the two spatial axes of a nodal field with ghost layers.

    ``kinds[axis]`` is ``None`` for an inactive axis or a ``(lo, hi)`` pair.
    Each entry may itself be a tuple giving one kind per component of the
    last array axis (used for free-slip velocity).
    """
    f = np.asarray(f, dtype=float)
    for axis in (0, 1):
        k = kinds[axis]
        if k is None:
            continue
        lo, hi = (c[0] if isinstance(c, tuple) and len(set(c)) == 1 else c for c in k)
        if isinstance(lo, tuple) or isinstance(hi, tuple):
            lo_c = lo if isinstance(lo, tuple) else (lo,) * f.shape[-1]
            hi_c = hi if isinstance(hi, tuple) else (hi,) * f.shape[-1]
            f = np.stack(
                [_pad_axis(f[..., c], axis, (lo_c[c], hi_c[c])) for c in range(f.shape[-1])], axis=-1
            )
        else:
            f = _pad_axis(f, axis, (lo, hi))
    return Padded(f, grid)


class Padded:
    """A ghost-padded nodal field with second-order stencils."""

    def __init__(self, data, grid):
        self.data = data
        self.grid = grid
        self._active = grid.active
        self._shape = grid.shape

    def _view(self, shifts):
        idx = []
        for axis in (0, 1):
            if not self._active[axis]:
                idx.append(slice(None))
                continue
            s = shifts.get(axis, 0)
            idx.append(slice(PAD + s, PAD + s + self._shape[axis]))
        return self.data[tuple(idx)]

    @property
    def core(self):
        return self._view({})

    def d1(self, axis):
        if not self.grid.active[axis]:
            return np.zeros_like(self.core)
        return (self._view({axis: 1}) - self._view({axis: -1})) / (2.0 * self.grid.h[axis])

    def d2(self, axis):
        if not self.grid.active[axis]:
            return np.zeros_like(self.core)
        return (self._view({axis: 1}) - 2.0 * self.core + self._view({axis: -1})) / self.grid.h[axis] ** 2

    def d12(self):
        if not all(self.grid.active):
            return np.zeros_like(self.core)
        v = self._view
        return (v({0: 1, 1: 1}) - v({0: 1, 1: -1}) - v({0: -1, 1: 1}) + v({0: -1, 1: -1})) / (
            4.0 * self.grid.h[0] * self.grid.h[1]
        )

    def upwind(self, axis, velocity):
        """Second-order upwind derivative along ``axis`` for the nodal advecting speed ``velocity``."""
        if not self.grid.active[axis]:
            return np.zeros_like(self.core)
        v = self._view
        h = self.grid.h[axis]
        back = (3.0 * self.core - 4.0 * v({axis: -1}) + v({axis: -2})) / (2.0 * h)
        fwd = (-3.0 * self.core + 4.0 * v({axis: 1}) - v({axis: 2})) / (2.0 * h)
        vel = np.asarray(velocity).reshape(velocity.shape + (1,) * (self.core.ndim - np.ndim(velocity)))
        return np.where(vel >= 0, back, fwd)

    def gradient(self):
        """Central gradient; derivative index appended last, third component zero."""
        core = self.core
        return np.stack([self.d1(0), self.d1(1), np.zeros_like(core)], axis=-1)

    def laplacian(self):
        return self.d2(0) + self.d2(1)

    def advect(self, u):
        """``(grad f) u`` with upwinded derivatives; ``u`` has shape grid.shape + (3,)."""
        out = np.zeros_like(self.core)
        for axis in (0, 1):
            if self.grid.active[axis]:
                ua = u[..., axis]
                out = out + ua.reshape(ua.shape + (1,) * (out.ndim - 2)) * self.upwind(axis, ua)
        return out


def gradient(f, grid, kinds):
    return pad(f, grid, kinds).gradient()


def divergence(F, grid, kinds):
    """Divergence over the last axis of ``F`` (a vector or the second index of a tensor)."""
    g = pad(F, grid, kinds).gradient()
    return np.einsum("...kk->...", g) if F.ndim == 3 else np.einsum("...ikk->...i", g)


def laplacian(f, grid, kinds):
    return pad(f, grid, kinds).laplacian()
