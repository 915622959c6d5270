from dataclasses import dataclass, field

import numpy as np

from ..tensors import sym

CONSTRAINT_MODES = ("independent_B", "B_equals_L", "B_equals_skwL")


@dataclass
class FieldState:
    """Nodal fields on a grid of shape (N1, N2).

    ``u`` has shape (N1, N2, 3); ``Y``, ``B``, ``H`` have shape (N1, N2, 3, 3);
    ``eps`` is ``None`` unless the thermal equation is carried.
    """

    rho: np.ndarray
    u: np.ndarray
    Y: np.ndarray
    B: np.ndarray
    H: np.ndarray
    eps: np.ndarray = None

    NAMES = ("rho", "u", "Y", "B", "H", "eps")

    @classmethod
    def uniform(cls, shape, rho=1.0, u=(0, 0, 0), Y=None, B=None, H=None, eps=None):
        def tile(value, tail):
            value = np.zeros(tail) if value is None else np.asarray(value, dtype=float)
            return np.broadcast_to(value, tuple(shape) + tail).copy()

        return cls(
            rho=np.full(shape, float(rho)),
            u=tile(u, (3,)),
            Y=sym(tile(Y, (3, 3))),
            B=tile(B, (3, 3)),
            H=sym(tile(H, (3, 3))),
            eps=None if eps is None else np.full(shape, float(eps)),
        )

    def arrays(self):
        return {n: getattr(self, n) for n in self.NAMES if getattr(self, n) is not None}

    def copy(self):
        return FieldState(**{n: None if a is None else a.copy() for n, a in self._items()})

    def _items(self):
        return [(n, getattr(self, n)) for n in self.NAMES]

    def axpy(self, a, other):
        """``self + a * other`` as a new state."""
        out = {}
        for n, x in self._items():
            y = getattr(other, n)
            out[n] = None if x is None else (x if y is None else x + a * y)
        return FieldState(**out)

    def zeros_like(self):
        return FieldState(**{n: None if a is None else np.zeros_like(a) for n, a in self._items()})

    def is_finite(self, guard=1e100):
        return all(np.all(np.isfinite(a)) and np.max(np.abs(a), initial=0.0) < guard for a in self.arrays().values())


@dataclass(frozen=True)
class SourceSpec:
    """External body force, tensor moment, stirring (all per unit mass) and heat generation."""

    f: np.ndarray = field(default_factory=lambda: np.zeros(3))
    M: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    S: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    lambda_heat: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "f", np.asarray(self.f, dtype=float))
        object.__setattr__(self, "M", np.asarray(self.M, dtype=float))
        S = np.asarray(self.S, dtype=float)
        if not np.allclose(S, np.swapaxes(S, -1, -2), rtol=0, atol=1e-14 * (1 + np.max(np.abs(S)))):
            raise ValueError("stirring source S must be symmetric")
        object.__setattr__(self, "S", sym(S))
        object.__setattr__(self, "lambda_heat", np.asarray(self.lambda_heat, dtype=float))


@dataclass(frozen=True)
class SolverConfig:
    cfl: float = 0.5
    t_end: float = 1.0
    dt: float = None
    constraint_mode: str = "independent_B"
    psd_projection: bool = True
    snapshot_every: float = None
    plane_flow: bool = True
    thermal: bool = False
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not 0.0 < self.cfl < 1.0:
            raise ValueError("cfl must lie in (0, 1)")
        if self.constraint_mode not in CONSTRAINT_MODES:
            raise ValueError(f"constraint_mode must be one of {CONSTRAINT_MODES}")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
