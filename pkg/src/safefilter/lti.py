"""Low-order continuous-time LTI state-space primitives.

Every dynamic element in this package (uncertainty magnitude bound,
weighted-integral filter, actuator lag) has state dimension two or less,
so frequency responses, stability tests, and zero-order-hold maps are
written out per order in closed form instead of calling a general
eigensolver. That keeps runs bit-reproducible across platforms and avoids
pulling in a heavyweight dependency for 2x2 algebra.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "StateSpace",
    "FrequencyGrid",
    "UnsupportedOrderError",
    "SingularResolventError",
    "freq_response",
    "shift",
    "is_stable",
    "zoh_discretize",
    "step_filter",
    "first_order_coeffs",
]

# Analytic formulas below are written out for n in {0, 1, 2} only.
MAX_ORDER = 2


class UnsupportedOrderError(ValueError):
    """State dimension exceeds the analytic order cap."""


class SingularResolventError(ValueError):
    """``jw I - A`` is exactly singular at a requested frequency."""


def _as_matrix(name: str, value, rows: int, cols: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (rows, cols):
        raise ValueError(f"{name} must have shape {(rows, cols)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    out = arr.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Continuous-time realization ``xdot = A x + B u``, ``y = C x + D u``.

    Matrices are stored as read-only float arrays with explicit 2-D shapes.
    ``a`` must be square with at most ``MAX_ORDER`` states; ``n = 0`` is
    allowed and describes a static gain ``y = D u``.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"a must be square, got shape {a.shape}")
        n = a.shape[0]
        if n > MAX_ORDER:
            raise UnsupportedOrderError(
                f"state dimension {n} exceeds the supported maximum {MAX_ORDER}"
            )
        b = np.asarray(self.b, dtype=float)
        if b.ndim != 2 or b.shape[0] != n:
            raise ValueError(f"b must have shape ({n}, m), got {b.shape}")
        m = b.shape[1]
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 2 or c.shape[1] != n:
            raise ValueError(f"c must have shape (p, {n}), got {c.shape}")
        p = c.shape[0]
        object.__setattr__(self, "a", _as_matrix("a", a, n, n))
        object.__setattr__(self, "b", _as_matrix("b", b, n, m))
        object.__setattr__(self, "c", _as_matrix("c", c, p, n))
        object.__setattr__(self, "d", _as_matrix("d", self.d, p, m))

    @property
    def order(self) -> int:
        return self.a.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.d.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.d.shape[0]

    @property
    def is_siso(self) -> bool:
        return self.n_inputs == 1 and self.n_outputs == 1

    @classmethod
    def from_scalars(cls, a: float, b: float, c: float, d: float) -> "StateSpace":
        """First-order SISO realization from four scalar coefficients."""
        return cls(
            np.array([[float(a)]]),
            np.array([[float(b)]]),
            np.array([[float(c)]]),
            np.array([[float(d)]]),
        )

    @classmethod
    def static_gain(cls, d) -> "StateSpace":
        """Order-zero system ``y = D u``; ``d`` may be a scalar or a (p, m) array."""
        dm = np.asarray(d, dtype=float)
        if dm.ndim == 0:
            dm = dm.reshape(1, 1)
        if dm.ndim != 2:
            raise ValueError(f"d must be a scalar or 2-D, got shape {dm.shape}")
        p, m = dm.shape
        return cls(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0)), dm)

    def __repr__(self) -> str:
        return (
            f"StateSpace(order={self.order}, inputs={self.n_inputs}, "
            f"outputs={self.n_outputs})"
        )


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Strictly increasing grid of positive angular frequencies (rad/s)."""

    omegas: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.omegas, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("omegas must be a non-empty 1-D array")
        if not np.all(np.isfinite(w)) or w[0] <= 0.0:
            raise ValueError("frequencies must be finite and positive")
        if np.any(np.diff(w) <= 0.0):
            raise ValueError("frequencies must be strictly increasing")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "omegas", w)

    def __len__(self) -> int:
        return self.omegas.size

    @classmethod
    def log_spaced(cls, lo: float, hi: float, n: int) -> "FrequencyGrid":
        if not (0.0 < lo < hi):
            raise ValueError(f"need 0 < lo < hi, got lo={lo}, hi={hi}")
        if n < 2:
            raise ValueError(f"need at least 2 points, got {n}")
        return cls(np.geomspace(lo, hi, n))


def freq_response(ss: StateSpace, omega) -> np.ndarray | complex:
    """Evaluate ``C (jw I - A)^-1 B + D`` on a grid of frequencies.

    Parameters
    ----------
    ss : StateSpace
    omega : float or 1-D array of floats

    Returns
    -------
    complex scalar for SISO systems with scalar ``omega``; a complex array
    shaped like ``omega`` for SISO systems on a grid; otherwise an array of
    shape ``(len(omega), p, m)`` (with the leading axis dropped for scalar
    ``omega``).

    Raises
    ------
    SingularResolventError
        If the resolvent determinant is exactly zero at some requested
        frequency (the system has a pole at ``jw``).
    """
    w = np.asarray(omega, dtype=float)
    scalar_in = w.ndim == 0
    w = np.atleast_1d(w)
    n, p, m = ss.order, ss.n_outputs, ss.n_inputs
    if n == 0:
        resp = np.broadcast_to(
            ss.d.astype(complex), (w.size, p, m)
        ).copy()
    elif n == 1:
        det = 1j * w - ss.a[0, 0]
        _check_det(det, w)
        cb = ss.c @ ss.b
        resp = cb[np.newaxis, :, :] / det[:, np.newaxis, np.newaxis] + ss.d
    else:
        a = ss.a
        m11 = 1j * w - a[0, 0]
        m22 = 1j * w - a[1, 1]
        det = m11 * m22 - a[0, 1] * a[1, 0]
        _check_det(det, w)
        # Adjugate of jwI - A; off-diagonal entries flip sign back to a's.
        inv = np.empty((w.size, 2, 2), dtype=complex)
        inv[:, 0, 0] = m22
        inv[:, 0, 1] = a[0, 1]
        inv[:, 1, 0] = a[1, 0]
        inv[:, 1, 1] = m11
        inv /= det[:, np.newaxis, np.newaxis]
        resp = np.einsum("ij,njk,kl->nil", ss.c, inv, ss.b) + ss.d
    if p == 1 and m == 1:
        out = resp[:, 0, 0]
        return complex(out[0]) if scalar_in else out
    return resp[0] if scalar_in else resp


def _check_det(det: np.ndarray, w: np.ndarray) -> None:
    bad = det == 0.0
    if np.any(bad):
        raise SingularResolventError(
            f"resolvent is singular at omega = {w[bad][0]!r}"
        )


def shift(ss: StateSpace, c: float) -> StateSpace:
    """Replace ``s`` by ``s + c``: the realization ``(A - cI, B, C, D)``.

    Shifting by ``c > 0`` moves every pole left by ``c``, so a system that is
    stable stays stable.
    """
    c = float(c)
    return StateSpace(ss.a - c * np.eye(ss.order), ss.b, ss.c, ss.d)


def is_stable(ss: StateSpace) -> bool:
    """True when every eigenvalue of ``A`` has strictly negative real part.

    Order zero is vacuously stable. Orders one and two are decided from the
    diagonal entry and from trace/determinant signs respectively, so the
    answer is exact (no iterative eigensolve).
    """
    n = ss.order
    if n == 0:
        return True
    if n == 1:
        return ss.a[0, 0] < 0.0
    if n == 2:
        tr = ss.a[0, 0] + ss.a[1, 1]
        det = ss.a[0, 0] * ss.a[1, 1] - ss.a[0, 1] * ss.a[1, 0]
        # Routh: both roots in the open left half plane iff tr < 0 and det > 0.
        return tr < 0.0 and det > 0.0
    raise UnsupportedOrderError(f"order {n}")


def _phi1_c(z: complex) -> complex:
    # (e^z - 1)/z, series near zero to dodge cancellation.
    if abs(z) < 1e-6:
        return 1.0 + z / 2.0 + z * z / 6.0
    return (cmath.exp(z) - 1.0) / z


def _phi1_prime_c(z: complex) -> complex:
    # d/dz (e^z - 1)/z = ((z - 1) e^z + 1)/z^2.
    if abs(z) < 1e-4:
        return 0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0
    return ((z - 1.0) * cmath.exp(z) + 1.0) / (z * z)


def _expm_phi1_2x2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """exp(X) and phi1(X) = X^-1 (exp(X) - I) for a real 2x2 X.

    Both are evaluated by two-point polynomial interpolation on the
    eigenvalues; near-confluent spectra switch to the derivative form so the
    divided difference never loses more than ~1e-10 relative accuracy.
    """
    tr = x[0, 0] + x[1, 1]
    det = x[0, 0] * x[1, 1] - x[0, 1] * x[1, 0]
    mu = 0.5 * tr
    disc = cmath.sqrt(complex(mu * mu - det))
    l1 = mu + disc
    l2 = mu - disc
    eye = np.eye(2)
    scale = max(1.0, abs(l1), abs(l2))
    if abs(l1 - l2) > 1e-6 * scale:
        # f(X) = (f(l1)(X - l2 I) - f(l2)(X - l1 I)) / (l1 - l2); carried out
        # in complex arithmetic (the pair case has complex nodes), the result
        # is analytically real.
        gap = l1 - l2
        xc = x.astype(complex)
        e1, e2 = cmath.exp(l1), cmath.exp(l2)
        p1, p2 = _phi1_c(l1), _phi1_c(l2)
        em = (e1 * (xc - l2 * eye) - e2 * (xc - l1 * eye)) / gap
        ph = (p1 * (xc - l2 * eye) - p2 * (xc - l1 * eye)) / gap
        return np.real(em), np.real(ph)
    # Near-confluent spectrum: interpolate with the derivative at the mean
    # eigenvalue, f(X) ~ f(mu) I + f'(mu)(X - mu I).
    nm = x - mu * eye
    em = cmath.exp(mu).real * (eye + nm)
    ph = np.real(_phi1_c(mu)) * eye + np.real(_phi1_prime_c(mu)) * nm
    return em, ph


def zoh_discretize(ss: StateSpace, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold map ``x+ = Ad x + Bd u`` for input held over ``dt``.

    ``Ad = exp(A dt)`` and ``Bd = dt * phi1(A dt) B`` with
    ``phi1(z) = (e^z - 1)/z``; the formula needs no invertibility of ``A``.
    """
    dt = float(dt)
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    n, m = ss.order, ss.n_inputs
    if n == 0:
        return np.zeros((0, 0)), np.zeros((0, m))
    if n == 1:
        z = ss.a[0, 0] * dt
        ad = math.exp(z)
        phi = 1.0 if z == 0.0 else math.expm1(z) / z
        return np.array([[ad]]), dt * phi * ss.b
    em, ph = _expm_phi1_2x2(ss.a * dt)
    return em, dt * (ph @ ss.b)


def step_filter(
    ss: StateSpace, x: np.ndarray, u_held: np.ndarray, dt: float
) -> tuple[np.ndarray, np.ndarray]:
    """Advance the filter one step under a held input.

    Returns ``(x_next, y)`` where ``y = C x + D u`` is the output at the
    *start* of the step (before the state moves). Callers that need the
    output at the end of the interval evaluate ``C x_next + D u`` themselves;
    the held input is the same on both sides of the interval.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u_held, dtype=float))
    if x.shape != (ss.order,):
        raise ValueError(f"state must have shape ({ss.order},), got {x.shape}")
    if u.shape != (ss.n_inputs,):
        raise ValueError(f"input must have shape ({ss.n_inputs},), got {u.shape}")
    y = ss.c @ x + ss.d @ u
    ad, bd = zoh_discretize(ss, dt)
    return ad @ x + bd @ u, y


def first_order_coeffs(ss: StateSpace) -> tuple[float, float, float]:
    """Transfer-function coefficients ``(b1 s + b0)/(s + a0)`` of a SISO order-1 system.

    ``a0 = -A``, ``b1 = D``, ``b0 = C B + D a0``.
    """
    if ss.order != 1 or not ss.is_siso:
        raise ValueError("expected a SISO first-order system")
    a0 = float(-ss.a[0, 0])
    b1 = float(ss.d[0, 0])
    b0 = float(ss.c[0, 0] * ss.b[0, 0]) + b1 * a0
    return a0, b0, b1
