"""Robust constraint assembly: worst-case input error eliminated in closed form.

Each input channel carries a certified integral constraint (``IqcSpec``) with
filter state ``x_F`` advanced by the simulation loop. Writing the channel's
filter output as ``z_i = C_F x_F,i + D_F u_i``, the barrier condition must
hold for the worst admissible error ``w``; completing the square in ``w``
turns the inner minimization into the concave quadratic

    g(u) = drift + gain . u
           - sum_i [ gain_i^2 / (4 lam_i) + lam_i (C_F x_F,i + D_F u_i)^2 ]

with the minimizer ``w_i* = -gain_i / (2 lam_i)``. Only the quadratic's
normal-form coefficients leave this module; the projection solver never sees
``w``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .barrier import BarrierEval, BarrierSpec
from .uncertainty import IqcSpec

__all__ = [
    "RobustChannel",
    "QuadraticConstraint",
    "iqc_integrand",
    "worst_case_w",
    "robust_ecbf_constraint",
    "robust_cbf_constraint_rd1",
]

# Channel decay rates must agree with the barrier chaining rate; the weighted
# integrals and the barrier envelope share one exponent.
_ALPHA_MATCH_TOL = 1e-12


@dataclass(eq=False)
class RobustChannel:
    """One input channel's certificate plus its live filter state.

    Mutable on purpose: ``x_f`` is owned and advanced by the simulation loop
    (single-threaded); assembly only reads it.
    """

    iqc: IqcSpec
    x_f: np.ndarray = field(default=None)  # type: ignore[assignment]
    channel_index: int = 0

    def __post_init__(self) -> None:
        order = self.iqc.filter.order
        if self.x_f is None:
            self.x_f = np.zeros(order)
        else:
            self.x_f = np.asarray(self.x_f, dtype=float).reshape(order)
        if self.channel_index < 0:
            raise ValueError("channel_index must be nonnegative")

    def state_output(self) -> float:
        """``C_F x_F``, the filter output's state-driven part."""
        return float(self.iqc.filter.c[0] @ self.x_f)

    def output(self, u_i: float) -> float:
        """``z_i = C_F x_F + D_F u_i`` for a candidate input."""
        return self.state_output() + float(self.iqc.filter.d[0, 0]) * float(u_i)


@dataclass(frozen=True, eq=False)
class QuadraticConstraint:
    """Separable concave constraint ``g(u) >= rhs`` in normal form,

    ``g(u) = sum_i (lin_i u_i - quad_i u_i^2) + offset`` with ``quad_i >= 0``.
    """

    quad: np.ndarray
    lin: np.ndarray
    offset: float
    rhs: float

    def __post_init__(self) -> None:
        quad = np.asarray(self.quad, dtype=float)
        lin = np.asarray(self.lin, dtype=float)
        if quad.ndim != 1 or lin.shape != quad.shape:
            raise ValueError("quad and lin must be 1-D with matching length")
        if not (np.all(np.isfinite(quad)) and np.all(np.isfinite(lin))):
            raise ValueError("coefficients must be finite")
        if np.any(quad < 0.0):
            raise ValueError("quad must be nonnegative (constraint must stay concave)")
        if not (math.isfinite(self.offset) and math.isfinite(self.rhs)):
            raise ValueError("offset and rhs must be finite")
        quad = quad.copy()
        lin = lin.copy()
        quad.flags.writeable = False
        lin.flags.writeable = False
        object.__setattr__(self, "quad", quad)
        object.__setattr__(self, "lin", lin)
        object.__setattr__(self, "offset", float(self.offset))
        object.__setattr__(self, "rhs", float(self.rhs))

    def value(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(self.lin @ u - self.quad @ (u * u)) + self.offset


def iqc_integrand(channel: RobustChannel, u_i: float, w_i: float) -> float:
    """Pointwise integrand ``z_i^2 - w_i^2`` of the channel's weighted integral."""
    z = channel.output(u_i)
    w_i = float(w_i)
    return z * z - w_i * w_i


def worst_case_w(gain: np.ndarray, lams: np.ndarray) -> np.ndarray:
    """Error direction achieving the inner minimum: ``w_i* = -gain_i / (2 lam_i)``."""
    gain = np.asarray(gain, dtype=float)
    lams = np.asarray(lams, dtype=float)
    if np.any(lams <= 0.0):
        raise ValueError("multipliers must be positive")
    return -gain / (2.0 * lams)


def _eliminate(
    gain: np.ndarray,
    base_offset: float,
    rhs: float,
    channels,
    alpha: float,
) -> QuadraticConstraint:
    gain = np.asarray(gain, dtype=float)
    m = gain.size
    if len(channels) != m:
        raise ValueError(
            f"need one channel per input, got {len(channels)} for {m} inputs"
        )
    quad = np.empty(m)
    lin = np.empty(m)
    offset = float(base_offset)
    for i, ch in enumerate(channels):
        if ch.channel_index != i:
            raise ValueError(
                f"channel at position {i} labels itself {ch.channel_index}"
            )
        if abs(ch.iqc.alpha - alpha) > _ALPHA_MATCH_TOL * max(1.0, abs(alpha)):
            raise ValueError(
                f"channel {i} decay rate {ch.iqc.alpha} does not match "
                f"the barrier rate {alpha}"
            )
        lam = ch.iqc.lam
        d_f = float(ch.iqc.filter.d[0, 0])
        z0 = ch.state_output()
        b_i = float(gain[i])
        quad[i] = lam * d_f * d_f
        lin[i] = b_i - 2.0 * lam * d_f * z0
        offset -= b_i * b_i / (4.0 * lam) + lam * z0 * z0
    return QuadraticConstraint(quad, lin, offset, float(rhs))


def robust_ecbf_constraint(
    spec: BarrierSpec, ev: BarrierEval, channels
) -> QuadraticConstraint:
    """Relative-degree-two barrier condition robustified over the channel errors.

    The nominal half-space ``drift + gain . u >= -alpha^2 h - 2 alpha hdot``
    is tightened by the completed square described in the module docstring.
    """
    a = spec.alpha
    rhs = -a * a * ev.h - 2.0 * a * ev.hdot
    return _eliminate(ev.hddot_input_gain, ev.hddot_drift, rhs, channels, a)


def robust_cbf_constraint_rd1(
    lf_h, lg_h, h: float, alpha: float, channels
) -> QuadraticConstraint:
    """Relative-degree-one analogue; identical elimination on ``Lg h``."""
    alpha = float(alpha)
    if not (math.isfinite(alpha) and alpha > 0.0):
        raise ValueError(f"alpha must be positive, got {alpha}")
    return _eliminate(
        np.asarray(lg_h, dtype=float),
        float(lf_h),
        -alpha * float(h),
        channels,
        alpha,
    )
