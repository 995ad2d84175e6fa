"""Input-uncertainty families and their integral-constraint certificates.

A perturbation family collects the unmodeled input dynamics the filter must
tolerate: a range of pure delays, or a range of first-order actuator poles.
For a decay rate ``alpha`` the family's frequency-shifted error magnitude is
enveloped over the family, a first-order transfer function is fitted above
the envelope, and the fitted filter (shifted) certifies an exponentially
weighted integral inequality on the input error that the robust constraint
assembly consumes. ``check_iqc_numeric`` verifies that inequality on sampled
signals, which is how the certificates are regression-tested end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lti import StateSpace, freq_response, is_stable, shift, zoh_discretize

__all__ = [
    "DELAY_RANGE",
    "ACTUATOR_POLE_RANGE",
    "PerturbationFamily",
    "IqcSpec",
    "FitError",
    "ShiftedUnstableError",
    "shifted_delay_magnitude",
    "shifted_actuator_magnitude",
    "family_envelope",
    "fit_first_order_bound",
    "build_iqc",
    "check_iqc_numeric",
    "delayed_signal",
    "piecewise_constant_signal",
]

DELAY_RANGE = "delay-range"
ACTUATOR_POLE_RANGE = "actuator-pole-range"
_KINDS = (DELAY_RANGE, ACTUATOR_POLE_RANGE)


class FitError(ValueError):
    """No first-order bound on the search grid covers the envelope.

    ``worst_omega`` holds the frequency where the best candidate falls
    furthest below its target, or ``None`` when the envelope itself was
    rejected before any candidate was tried.
    """

    def __init__(self, message: str, worst_omega: float | None = None):
        super().__init__(message)
        self.worst_omega = worst_omega


class ShiftedUnstableError(ValueError):
    """The requested frequency shift moves a pole into the closed right half plane."""


@dataclass(frozen=True)
class PerturbationFamily:
    """Interval family of input perturbations, sampled at ``n_samples`` points.

    ``kind`` selects the parameterization: ``delay-range`` sweeps a pure delay
    tau over [param_lo, param_hi] seconds, ``actuator-pole-range`` sweeps the
    pole of a unity-DC-gain first-order lag over [param_lo, param_hi] rad/s.
    """

    kind: str
    param_lo: float
    param_hi: float
    n_samples: int = 20

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}")
        if not (
            math.isfinite(self.param_lo)
            and math.isfinite(self.param_hi)
            and 0.0 <= self.param_lo < self.param_hi
        ):
            raise ValueError(
                f"need 0 <= param_lo < param_hi, got [{self.param_lo}, {self.param_hi}]"
            )
        if self.kind == ACTUATOR_POLE_RANGE and self.param_lo <= 0.0:
            raise ValueError("actuator poles must be positive")
        if self.n_samples < 2:
            raise ValueError(f"need at least 2 samples, got {self.n_samples}")

    def members(self) -> np.ndarray:
        """Evenly spaced parameter samples, endpoints included."""
        return np.linspace(self.param_lo, self.param_hi, self.n_samples)

    @classmethod
    def delay_range(
        cls, tau_hi: float, tau_lo: float | None = None, n_samples: int = 20
    ) -> "PerturbationFamily":
        """Delay family up to ``tau_hi`` seconds; lower end defaults to 1% of it."""
        if not tau_hi > 0.0:
            raise ValueError(f"tau_hi must be positive, got {tau_hi}")
        if tau_lo is None:
            tau_lo = 0.01 * tau_hi
        return cls(DELAY_RANGE, float(tau_lo), float(tau_hi), n_samples)

    @classmethod
    def actuator_pole_range(
        cls, pole_lo: float, pole_hi: float, n_samples: int = 20
    ) -> "PerturbationFamily":
        return cls(ACTUATOR_POLE_RANGE, float(pole_lo), float(pole_hi), n_samples)


@dataclass(frozen=True)
class IqcSpec:
    """A certified integral constraint: filter ``F``, decay rate, and multiplier.

    The certificate is: for ``z = F u`` from zero initial filter state and
    ``w`` the realized input error, ``int_0^T e^{alpha t}(z^2 - w^2) dt >= 0``
    for every ``T >= 0``. ``filter`` is the already-shifted realization that
    the constraint assembly steps directly; it must be SISO and stable.
    ``lam`` is the positive multiplier weighting this channel (named ``lam``
    because ``lambda`` is reserved in Python).
    """

    filter: StateSpace
    alpha: float
    lam: float

    def __post_init__(self) -> None:
        if not self.filter.is_siso:
            raise ValueError("IQC filter must be SISO")
        if not is_stable(self.filter):
            raise ValueError("IQC filter must be stable")
        if not (math.isfinite(self.alpha) and self.alpha >= 0.0):
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not (math.isfinite(self.lam) and self.lam > 0.0):
            raise ValueError(f"lam must be positive, got {self.lam}")


def shifted_delay_magnitude(tau: float, alpha: float, omega):
    """|e^{(alpha/2) tau} e^{-j w tau} - 1|: the delay error after shifting
    ``s -> s - alpha/2``.

    With ``alpha = 0`` this reduces to ``2 |sin(w tau / 2)|``. Accepts scalar
    or array ``omega`` and returns the matching shape.
    """
    tau = float(tau)
    alpha = float(alpha)
    if tau < 0.0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    if alpha < 0.0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    w = np.asarray(omega, dtype=float)
    gain = math.exp(0.5 * alpha * tau)
    mag = np.abs(gain * np.exp(-1j * w * tau) - 1.0)
    return float(mag) if mag.ndim == 0 else mag


def shifted_actuator_magnitude(pole: float, alpha: float, omega):
    """|-(s)/(s + p)| at ``s = jw - alpha/2``: the lag error after shifting.

    The shifted pole must stay in the open left half plane, which requires
    ``p > alpha/2``.
    """
    pole = float(pole)
    alpha = float(alpha)
    if alpha < 0.0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    if pole <= 0.5 * alpha:
        raise ShiftedUnstableError(
            f"actuator pole {pole} must exceed alpha/2 = {0.5 * alpha}"
        )
    w = np.asarray(omega, dtype=float)
    s = 1j * w - 0.5 * alpha
    mag = np.abs(-s / (s + pole))
    return float(mag) if mag.ndim == 0 else mag


def family_envelope(
    family: PerturbationFamily, alpha: float, grid
) -> np.ndarray:
    """Pointwise maximum of the shifted error magnitude over the family samples."""
    w = np.asarray(getattr(grid, "omegas", grid), dtype=float)
    env = np.zeros_like(w)
    for param in family.members():
        if family.kind == DELAY_RANGE:
            mag = shifted_delay_magnitude(param, alpha, w)
        else:
            mag = shifted_actuator_magnitude(param, alpha, w)
        np.maximum(env, mag, out=env)
    return env


def fit_first_order_bound(
    envelope: np.ndarray, grid, margin: float = 0.02
) -> StateSpace:
    """Fit ``(b1 s + b0)/(s + a0)`` above a magnitude envelope.

    The two asymptote anchors carry the full margin: ``b1`` is
    ``(1 + margin)`` times the envelope supremum and the DC gain ``b0/a0``
    is ``(1 + margin)`` times the envelope at the lowest grid frequency.
    ``a0`` is then the largest value on a log-spaced search grid (largest is
    least conservative in the mid band) for which the candidate stays above
    ``(1 + margin/2)`` times the envelope at every grid point. The half
    factor is deliberate: demanding the full margin between the anchors is
    impossible wherever the envelope touches its own supremum (the candidate
    magnitude is strictly below ``b1`` at finite frequencies), while
    demanding none leaves zero slack at the binding frequency and the bound
    can dip below the envelope between grid points. Keeping half the margin
    in the mid band makes the fit survive validation on denser grids.

    Returns the fitted bound as a first-order state-space realization
    ``(-a0, 1, b0 - b1 a0, b1)``. Raises ``FitError`` when the envelope is
    unusable or no search candidate works; the error carries the frequency
    of the worst violation.
    """
    env = np.asarray(envelope, dtype=float)
    w = np.asarray(getattr(grid, "omegas", grid), dtype=float)
    if env.shape != w.shape or env.ndim != 1:
        raise ValueError("envelope and grid must be 1-D with matching length")
    if not np.all(np.isfinite(env)) or np.any(env < 0.0):
        raise FitError("envelope must be finite and nonnegative")
    if not (math.isfinite(margin) and margin >= 0.0):
        raise ValueError(f"margin must be >= 0, got {margin}")
    sup = float(env.max())
    if sup <= 0.0:
        raise FitError("envelope is identically zero; nothing to bound")
    if env[0] <= 0.0:
        raise FitError(
            "envelope vanishes at the lowest grid frequency; the DC anchor "
            "would force b0 = 0",
            worst_omega=float(w[0]),
        )
    b1 = (1.0 + margin) * sup
    g0 = (1.0 + margin) * float(env[0])
    target_sq = ((1.0 + 0.5 * margin) * env) ** 2
    w_sq = w * w
    b1_sq_w_sq = b1 * b1 * w_sq
    candidates = np.geomspace(w[0] / 100.0, w[-1] * 100.0, 600)
    # |F(jw)|^2 >= target^2  <=>  b1^2 w^2 + b0^2 >= target^2 (w^2 + a0^2).
    for a0 in candidates[::-1]:
        b0 = g0 * a0
        slack = b1_sq_w_sq + b0 * b0 - target_sq * (w_sq + a0 * a0)
        if np.all(slack >= 0.0):
            return StateSpace.from_scalars(-a0, 1.0, b0 - b1 * a0, b1)
    # Even the smallest a0 failed; report where it is furthest below target.
    a0 = candidates[0]
    b0 = g0 * a0
    slack = b1_sq_w_sq + b0 * b0 - target_sq * (w_sq + a0 * a0)
    worst = float(w[int(np.argmin(slack))])
    raise FitError(
        f"no feasible a0 on the search grid; worst violation at omega = {worst}",
        worst_omega=worst,
    )


def build_iqc(fitted: StateSpace, alpha: float, lam: float) -> IqcSpec:
    """Shift a fitted magnitude bound by ``alpha/2`` and package the certificate.

    ``fitted`` is the unshifted bound (as returned by
    ``fit_first_order_bound``); the stored filter is ``fitted`` with ``s``
    replaced by ``s + alpha/2``, the realization the constraint assembly and
    the simulator step directly.
    """
    if not is_stable(fitted):
        raise ValueError("fitted bound must be stable before shifting")
    # s -> s + alpha/2 moves every pole further left, so stability is kept;
    # the IqcSpec constructor re-checks it regardless.
    shifted = shift(fitted, 0.5 * float(alpha))
    return IqcSpec(filter=shifted, alpha=float(alpha), lam=float(lam))


def check_iqc_numeric(iqc: IqcSpec, u: np.ndarray, w: np.ndarray, dt: float) -> float:
    """Worst running value of ``int_0^T e^{alpha t}(z^2 - w^2) dt`` over all T.

    ``z`` is the filter output driven by ``u`` from zero initial state, with
    ``u`` and ``w`` held constant over each sample interval. Each interval is
    integrated by the trapezoid rule using the filter output at both interval
    ends computed with that interval's held input, so input switch points
    contribute their correct one-sided values. The minimum includes ``T = 0``
    (value zero), so a valid certificate returns a value ``<= 0`` that should
    not sink materially below zero.
    """
    u = np.asarray(u, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    if u.shape != w.shape:
        raise ValueError("u and w must have the same length")
    dt = float(dt)
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    f = iqc.filter
    if not f.is_siso:
        raise ValueError("numeric check expects a SISO filter")
    growth = math.exp(iqc.alpha * dt)
    n = f.order
    if n == 0:
        return _running_min_static(u, w, float(f.d[0, 0]), growth, dt)
    if n == 1:
        ad, bd = zoh_discretize(f, dt)
        return _running_min_order1(
            u, w,
            float(ad[0, 0]), float(bd[0, 0]),
            float(f.c[0, 0]), float(f.d[0, 0]),
            growth, dt,
        )
    return _running_min_general(u, w, f, growth, dt)


def _running_min_static(u, w, d0, growth, dt):
    worst = 0.0
    total = 0.0
    ew = 1.0
    half_dt = 0.5 * dt
    for uk, wk in zip(u.tolist(), w.tolist()):
        z = d0 * uk
        val = z * z - wk * wk
        ew1 = ew * growth
        total += half_dt * (ew + ew1) * val
        if total < worst:
            worst = total
        ew = ew1
    return worst


def _running_min_order1(u, w, a_d, b_d, c0, d0, growth, dt):
    worst = 0.0
    total = 0.0
    ew = 1.0
    x = 0.0
    half_dt = 0.5 * dt
    for uk, wk in zip(u.tolist(), w.tolist()):
        wk2 = wk * wk
        z0 = c0 * x + d0 * uk
        x = a_d * x + b_d * uk
        z1 = c0 * x + d0 * uk
        ew1 = ew * growth
        total += half_dt * (ew * (z0 * z0 - wk2) + ew1 * (z1 * z1 - wk2))
        if total < worst:
            worst = total
        ew = ew1
    return worst


def _running_min_general(u, w, f, growth, dt):
    ad, bd = zoh_discretize(f, dt)
    c = f.c[0]
    d0 = float(f.d[0, 0])
    x = np.zeros(f.order)
    worst = 0.0
    total = 0.0
    ew = 1.0
    half_dt = 0.5 * dt
    for uk, wk in zip(u.tolist(), w.tolist()):
        wk2 = wk * wk
        z0 = float(c @ x) + d0 * uk
        x = ad @ x + bd[:, 0] * uk
        z1 = float(c @ x) + d0 * uk
        ew1 = ew * growth
        total += half_dt * (ew * (z0 * z0 - wk2) + ew1 * (z1 * z1 - wk2))
        if total < worst:
            worst = total
        ew = ew1
    return worst


def delayed_signal(u: np.ndarray, tau: float, dt: float) -> np.ndarray:
    """Apply a pure delay to a sampled signal, zero before anything arrives.

    The delay is realized sample-aligned: ``tau`` is rounded to the nearest
    multiple of ``dt`` and the signal is shifted by that many samples with a
    zero prefix.
    """
    u = np.asarray(u, dtype=float).ravel()
    tau = float(tau)
    dt = float(dt)
    if tau < 0.0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    steps = int(round(tau / dt))
    out = np.zeros_like(u)
    if steps == 0:
        out[:] = u
    elif steps < u.size:
        out[steps:] = u[: u.size - steps]
    return out


def piecewise_constant_signal(
    rng: np.random.Generator,
    duration: float,
    dt: float,
    dwell: float = 0.05,
    amplitude: float = 1.0,
) -> np.ndarray:
    """Random piecewise-constant test signal.

    Levels are drawn uniformly from [-amplitude, amplitude] and held for
    ``dwell`` seconds (at least one sample). Used by the numeric certificate
    checks; the generator is the only source of randomness so runs are
    reproducible from the seed.
    """
    duration = float(duration)
    dt = float(dt)
    if not (duration > 0.0 and dt > 0.0 and dwell > 0.0):
        raise ValueError("duration, dt, and dwell must be positive")
    n = int(round(duration / dt))
    if n < 1:
        raise ValueError("duration shorter than one sample")
    dwell_steps = max(1, int(round(dwell / dt)))
    n_seg = -(-n // dwell_steps)
    levels = rng.uniform(-amplitude, amplitude, n_seg)
    return np.repeat(levels, dwell_steps)[:n]
