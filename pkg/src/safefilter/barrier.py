"""Circular-obstacle barrier function and its affine input constraints.

The barrier is ``h(p) = |p - center|^2 - radius^2`` on a planar double
integrator, so ``h`` has relative degree two from the acceleration input:
``hdot = 2 (p - c) . v`` and ``hddot = 2 |v|^2 + 2 (p - c) . u``. Chaining
two first-order conditions with the same rate ``alpha`` yields the affine
constraint ``hddot >= -alpha^2 h - 2 alpha hdot`` enforced by the filter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BarrierSpec",
    "BarrierEval",
    "AffineConstraint",
    "eval_barrier",
    "ecbf_constraint",
    "cbf_constraint_rd1",
]


@dataclass(frozen=True, eq=False)
class BarrierSpec:
    """Obstacle geometry plus the chaining rate ``alpha``."""

    center: np.ndarray
    radius: float
    alpha: float

    def __post_init__(self) -> None:
        c = np.asarray(self.center, dtype=float)
        if c.shape != (2,):
            raise ValueError(f"center must have shape (2,), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("center must be finite")
        if not (math.isfinite(self.radius) and self.radius > 0.0):
            raise ValueError(f"radius must be positive, got {self.radius}")
        if not (math.isfinite(self.alpha) and self.alpha > 0.0):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "alpha", float(self.alpha))


@dataclass(frozen=True, eq=False)
class BarrierEval:
    """Barrier value and derivatives at one state.

    ``hddot = hddot_drift + hddot_input_gain . u`` for acceleration input
    ``u``; the split lets constraint assembly stay affine in ``u``.
    """

    h: float
    hdot: float
    hddot_drift: float
    hddot_input_gain: np.ndarray

    def __post_init__(self) -> None:
        if not (
            math.isfinite(self.h)
            and math.isfinite(self.hdot)
            and math.isfinite(self.hddot_drift)
        ):
            raise ValueError("barrier values must be finite")
        g = np.asarray(self.hddot_input_gain, dtype=float)
        if g.ndim != 1 or not np.all(np.isfinite(g)):
            raise ValueError("input gain must be a finite 1-D array")
        g = g.copy()
        g.flags.writeable = False
        object.__setattr__(self, "hddot_input_gain", g)


@dataclass(frozen=True, eq=False)
class AffineConstraint:
    """Half-space constraint ``lin . u >= rhs``."""

    lin: np.ndarray
    rhs: float

    def __post_init__(self) -> None:
        lin = np.asarray(self.lin, dtype=float)
        if lin.ndim != 1 or not np.all(np.isfinite(lin)):
            raise ValueError("lin must be a finite 1-D array")
        if not math.isfinite(self.rhs):
            raise ValueError("rhs must be finite")
        lin = lin.copy()
        lin.flags.writeable = False
        object.__setattr__(self, "lin", lin)
        object.__setattr__(self, "rhs", float(self.rhs))

    @property
    def degenerate_infeasible(self) -> bool:
        """True when no input can satisfy the constraint (zero gradient, rhs > 0)."""
        return bool(np.all(self.lin == 0.0) and self.rhs > 0.0)


def eval_barrier(spec: BarrierSpec, p: np.ndarray, v: np.ndarray) -> BarrierEval:
    """Evaluate ``h`` and its derivative decomposition at position/velocity."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if p.shape != (2,) or v.shape != (2,):
        raise ValueError("p and v must have shape (2,)")
    d = p - spec.center
    h = float(d @ d) - spec.radius * spec.radius
    hdot = 2.0 * float(d @ v)
    drift = 2.0 * float(v @ v)
    return BarrierEval(h, hdot, drift, 2.0 * d)


def ecbf_constraint(spec: BarrierSpec, ev: BarrierEval) -> AffineConstraint:
    """Relative-degree-two constraint ``hddot >= -alpha^2 h - 2 alpha hdot``.

    Equivalently, with ``htilde = hdot + alpha h``, it enforces
    ``htilde_dot >= -alpha htilde``, which keeps ``htilde`` (and through it
    ``h``) above its decaying envelope.
    """
    a = spec.alpha
    rhs = -a * a * ev.h - 2.0 * a * ev.hdot - ev.hddot_drift
    return AffineConstraint(ev.hddot_input_gain, rhs)


def cbf_constraint_rd1(lf_h, lg_h, h: float, alpha: float) -> AffineConstraint:
    """Relative-degree-one constraint ``Lf h + Lg h . u >= -alpha h``.

    ``lg_h`` may be any 1-D gain vector. A zero ``lg_h`` with ``h < 0`` makes
    the constraint unsatisfiable; that case is flagged through
    ``degenerate_infeasible`` on the returned constraint rather than raised,
    so callers in a loop can count it and continue.
    """
    lf_h = float(lf_h)
    alpha = float(alpha)
    if not (math.isfinite(lf_h) and math.isfinite(float(h))):
        raise ValueError("lf_h and h must be finite")
    if not (math.isfinite(alpha) and alpha > 0.0):
        raise ValueError(f"alpha must be positive, got {alpha}")
    return AffineConstraint(np.asarray(lg_h, dtype=float), -alpha * float(h) - lf_h)
