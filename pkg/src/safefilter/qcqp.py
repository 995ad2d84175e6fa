"""Minimal-deviation projection onto one affine or concave-quadratic constraint.

The safety filter solves ``min |u - u0|^2 s.t. g(u) >= rhs`` where ``g`` is
either a half-space or the separable concave quadratic produced by the robust
assembly. Both cases reduce to a single scalar dual variable: the stationarity
condition gives ``u_i(mu) = (u0_i + mu lin_i)/(1 + 2 mu quad_i)`` and
``phi(mu) = g(u(mu)) - rhs`` is nondecreasing in ``mu``, so the active case is
a one-dimensional monotone root find (safeguarded Newton inside a bracket).
Feasibility is decided exactly: the constraint's unconstrained maximizer is
available in closed form, so ``infeasible-best-effort`` is reported iff the
peak value is below ``rhs``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .robust import QuadraticConstraint

__all__ = [
    "STATUS_UNCONSTRAINED",
    "STATUS_ACTIVE",
    "STATUS_INFEASIBLE",
    "SolveReport",
    "OracleResult",
    "NumericalFailureError",
    "project_halfspace",
    "project_quadratic",
    "grid_oracle",
]

STATUS_UNCONSTRAINED = "unconstrained"
STATUS_ACTIVE = "active"
STATUS_INFEASIBLE = "infeasible-best-effort"

# Dual bracketing gives up once mu exceeds this; a monotone phi that has not
# crossed zero by then signals a numerically broken instance, not a larger mu.
_MU_LIMIT = 2.0**64


class NumericalFailureError(RuntimeError):
    """Root finding on the dual variable failed to converge.

    Distinct from infeasibility: feasibility is decided in closed form before
    iteration starts, so this error means the instance is numerically
    degenerate (e.g. wildly scaled coefficients), not that no solution exists.
    """


@dataclass(frozen=True, eq=False)
class SolveReport:
    """Projection result.

    ``status`` is one of ``unconstrained`` (u0 already feasible, returned
    unchanged), ``active`` (projected onto the constraint boundary), or
    ``infeasible-best-effort`` (no feasible input exists; ``u`` is the
    constraint's maximizer, the least-violating choice). ``dual`` is the
    multiplier (0 when unconstrained, +inf when infeasible);
    ``constraint_slack`` is ``g(u) - rhs`` at the returned point.
    """

    u: np.ndarray
    status: str
    dual: float
    constraint_slack: float

    def __post_init__(self) -> None:
        u = np.asarray(self.u, dtype=float)
        u = u.copy()
        u.flags.writeable = False
        object.__setattr__(self, "u", u)
        if self.status not in (
            STATUS_UNCONSTRAINED,
            STATUS_ACTIVE,
            STATUS_INFEASIBLE,
        ):
            raise ValueError(f"unknown status {self.status!r}")
        if not self.dual >= 0.0:
            raise ValueError(f"dual must be >= 0, got {self.dual}")


@dataclass(frozen=True, eq=False)
class OracleResult:
    """Brute-force reference solution: best grid point, or infeasibility."""

    u: np.ndarray | None
    feasible: bool


def project_halfspace(u0, lin, rhs: float) -> SolveReport:
    """Project ``u0`` onto ``lin . u >= rhs`` (closed form).

    If ``u0`` already satisfies the constraint it is returned unchanged.
    Otherwise ``u = u0 + ((rhs - lin . u0)/|lin|^2) lin``. A zero ``lin``
    with ``rhs > (lin . u0)`` has no feasible point; ``u0`` is returned with
    the ``infeasible-best-effort`` status.
    """
    u0 = np.asarray(u0, dtype=float)
    lin = np.asarray(lin, dtype=float)
    if u0.ndim != 1 or lin.shape != u0.shape:
        raise ValueError("u0 and lin must be 1-D with matching length")
    rhs = float(rhs)
    val = float(lin @ u0)
    if val >= rhs:
        return SolveReport(u0, STATUS_UNCONSTRAINED, 0.0, val - rhs)
    norm_sq = float(lin @ lin)
    if norm_sq == 0.0:
        return SolveReport(u0, STATUS_INFEASIBLE, math.inf, val - rhs)
    mu = (rhs - val) / norm_sq
    u = u0 + mu * lin
    return SolveReport(u, STATUS_ACTIVE, mu, float(lin @ u) - rhs)


def _constraint_peak(u0: np.ndarray, qc: QuadraticConstraint):
    """Closed-form maximizer of ``g``; ``None`` when ``g`` is unbounded above.

    Channels with ``quad_i = 0`` and ``lin_i = 0`` do not affect ``g``; the
    maximizer keeps ``u0`` there so the best-effort point stays close to the
    request.
    """
    if np.any((qc.quad == 0.0) & (qc.lin != 0.0)):
        return None
    denom = np.where(qc.quad > 0.0, 2.0 * qc.quad, 1.0)
    u_peak = np.where(qc.quad > 0.0, qc.lin / denom, u0)
    return u_peak


def project_quadratic(
    u0,
    qc: QuadraticConstraint,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> SolveReport:
    """Project ``u0`` onto ``g(u) >= rhs`` for separable concave ``g``.

    The active-case dual root find terminates when
    ``|g(u(mu)) - rhs| <= tol * (1 + |rhs|)``; exceeding ``max_iter``
    iterations or the bracketing cap raises ``NumericalFailureError``.
    """
    u0 = np.asarray(u0, dtype=float)
    if u0.ndim != 1 or u0.shape != qc.lin.shape:
        raise ValueError("u0 must be 1-D and match the constraint dimension")
    if not tol > 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    rhs = qc.rhs
    scale = tol * (1.0 + abs(rhs))
    g0 = qc.value(u0)
    if g0 >= rhs:
        return SolveReport(u0, STATUS_UNCONSTRAINED, 0.0, g0 - rhs)
    u_peak = _constraint_peak(u0, qc)
    if u_peak is not None:
        g_peak = qc.value(u_peak)
        # <= catches exact tangency: the feasible set is the single peak
        # point, which no finite dual step reaches.
        if g_peak <= rhs:
            if rhs - g_peak <= scale:
                return SolveReport(u_peak, STATUS_ACTIVE, math.inf, g_peak - rhs)
            return SolveReport(u_peak, STATUS_INFEASIBLE, math.inf, g_peak - rhs)

    quad2 = 2.0 * qc.quad
    lin = qc.lin

    def eval_at(mu: float):
        u = (u0 + mu * lin) / (1.0 + mu * quad2)
        return u, qc.value(u) - rhs

    # phi(0) < 0; grow mu until phi >= 0 to bracket the root. phi is
    # nondecreasing, so failure to cross by _MU_LIMIT is a numerical dead end.
    lo = 0.0
    hi = 1.0
    u_hi, phi_hi = eval_at(hi)
    while phi_hi < 0.0:
        lo = hi
        hi *= 2.0
        if hi > _MU_LIMIT:
            raise NumericalFailureError(
                f"dual bracketing exceeded mu = {_MU_LIMIT:g}"
            )
        u_hi, phi_hi = eval_at(hi)
    if phi_hi <= scale:
        return SolveReport(u_hi, STATUS_ACTIVE, hi, phi_hi)

    dg = lin - quad2 * u0
    mu = 0.5 * (lo + hi)
    for _ in range(max_iter):
        u, phi = eval_at(mu)
        if abs(phi) <= scale:
            return SolveReport(u, STATUS_ACTIVE, mu, phi)
        if phi < 0.0:
            lo = mu
        else:
            hi = mu
        # phi'(mu) = sum dg_i^2 / (1 + 2 mu q_i)^3 >= 0.
        denom = (1.0 + mu * quad2) ** 3
        slope = float(np.sum(dg * dg / denom))
        nxt = mu - phi / slope if slope > 0.0 and math.isfinite(slope) else lo
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        mu = nxt
    raise NumericalFailureError(
        f"dual root find did not reach |slack| <= {scale:g} in {max_iter} iterations"
    )


def grid_oracle(
    u0,
    qc: QuadraticConstraint,
    box_halfwidth: float,
    n_per_axis: int = 101,
) -> OracleResult:
    """Brute-force reference: nearest feasible point on a box grid around ``u0``.

    Test oracle only; resolution is ``2 * box_halfwidth / (n_per_axis - 1)``
    per axis and ``n_per_axis`` must be at least 101 so solver comparisons at
    ``2x`` grid resolution stay meaningful. Supports 1-D and 2-D inputs.
    """
    u0 = np.asarray(u0, dtype=float)
    if n_per_axis < 101:
        raise ValueError(f"n_per_axis must be >= 101, got {n_per_axis}")
    if not box_halfwidth > 0.0:
        raise ValueError(f"box_halfwidth must be positive, got {box_halfwidth}")
    m = u0.size
    if m == 1:
        grid = np.linspace(u0[0] - box_halfwidth, u0[0] + box_halfwidth, n_per_axis)
        g = qc.lin[0] * grid - qc.quad[0] * grid * grid + qc.offset
        mask = g >= qc.rhs
        if not np.any(mask):
            return OracleResult(None, False)
        dist = np.where(mask, np.abs(grid - u0[0]), np.inf)
        return OracleResult(np.array([grid[int(np.argmin(dist))]]), True)
    if m == 2:
        ax0 = np.linspace(u0[0] - box_halfwidth, u0[0] + box_halfwidth, n_per_axis)
        ax1 = np.linspace(u0[1] - box_halfwidth, u0[1] + box_halfwidth, n_per_axis)
        g0, g1 = np.meshgrid(ax0, ax1, indexing="ij")
        g = (
            qc.lin[0] * g0
            + qc.lin[1] * g1
            - qc.quad[0] * g0 * g0
            - qc.quad[1] * g1 * g1
            + qc.offset
        )
        mask = g >= qc.rhs
        if not np.any(mask):
            return OracleResult(None, False)
        dist = (g0 - u0[0]) ** 2 + (g1 - u0[1]) ** 2
        dist = np.where(mask, dist, np.inf)
        flat = int(np.argmin(dist))
        i, j = divmod(flat, n_per_axis)
        return OracleResult(np.array([ax0[i], ax1[j]]), True)
    raise ValueError(f"grid oracle supports 1 or 2 inputs, got {m}")
