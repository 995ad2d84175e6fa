"""Deterministic fixed-step closed-loop simulator.

Planar double-integrator plant, proportional-derivative baseline tracking
controller, safety filter in the loop, optional input perturbation (pure
delay or first-order actuator lag), and per-channel certificate filter
propagation. All integration is exact zero-order-hold, so a run is a pure
function of its configuration: identical configs produce bit-identical logs.

Per-step order: reference, baseline control, barrier evaluation, constraint
assembly, projection, certificate filter advance (driven by the commanded
input), perturbation, plant advance, log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .barrier import BarrierSpec, ecbf_constraint, eval_barrier
from .lti import FrequencyGrid, zoh_discretize
from .qcqp import (
    STATUS_INFEASIBLE,
    NumericalFailureError,
    project_halfspace,
    project_quadratic,
)
from .robust import RobustChannel, robust_ecbf_constraint
from .uncertainty import (
    IqcSpec,
    PerturbationFamily,
    build_iqc,
    family_envelope,
    fit_first_order_bound,
)

if TYPE_CHECKING:
    from .config import ScenarioConfig

__all__ = [
    "PlantState",
    "BaselineGain",
    "ReferenceProfile",
    "DelayLine",
    "FirstOrderLag",
    "NoPerturbation",
    "TrajectoryRecord",
    "TrajectoryLog",
    "RunSummary",
    "SimulationAborted",
    "baseline_control",
    "step_plant",
    "make_uncertainty",
    "apply_uncertainty",
    "build_channels",
    "run_closed_loop",
    "total_variation",
    "trajectory_csv_text",
    "write_trajectory_csv",
    "CSV_HEADER",
]

# Constraint status codes stored in the log (compact; CSV writes the words).
STATUS_WORDS = ("unconstrained", "active", "infeasible-best-effort", "off")
_STATUS_CODE = {w: i for i, w in enumerate(STATUS_WORDS)}
_CODE_OFF = _STATUS_CODE["off"]

CSV_HEADER = (
    "t,px,py,vx,vy,rx,ry,u0x,u0y,ux,uy,wx,wy,h,hdot,htilde,"
    "xF_x,xF_y,status,iqc_int"
)


@dataclass(frozen=True, eq=False)
class PlantState:
    """Position, velocity, and time of the point mass."""

    p: np.ndarray
    v: np.ndarray
    t: float

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if p.shape != (2,) or v.shape != (2,):
            raise ValueError("p and v must have shape (2,)")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v)) and math.isfinite(self.t)):
            raise ValueError("plant state must be finite")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "t", float(self.t))


@dataclass(frozen=True, eq=False)
class BaselineGain:
    """Static tracking gain: ``u0 = K ([r; 0] - [p; v])``."""

    k: np.ndarray

    def __post_init__(self) -> None:
        k = np.asarray(self.k, dtype=float)
        if k.shape != (2, 4) or not np.all(np.isfinite(k)):
            raise ValueError("gain must be a finite 2x4 matrix")
        k = k.copy()
        k.flags.writeable = False
        object.__setattr__(self, "k", k)

    @classmethod
    def default(cls) -> "BaselineGain":
        """Position gain 1, velocity gain 1.94 on each axis."""
        return cls(np.array([[1.0, 0.0, 1.94, 0.0], [0.0, 1.0, 0.0, 1.94]]))


@dataclass(frozen=True, eq=False)
class ReferenceProfile:
    """Straight-line reference ramp from ``start`` to ``goal``.

    The reference moves linearly in time over ``ramp_duration`` seconds and,
    with ``hold_after`` set, stays at the goal afterwards; otherwise it keeps
    extrapolating along the line.
    """

    start: np.ndarray
    goal: np.ndarray
    ramp_duration: float = 45.0
    hold_after: bool = True

    def __post_init__(self) -> None:
        s = np.asarray(self.start, dtype=float)
        g = np.asarray(self.goal, dtype=float)
        if s.shape != (2,) or g.shape != (2,):
            raise ValueError("start and goal must have shape (2,)")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(g))):
            raise ValueError("start and goal must be finite")
        if not (math.isfinite(self.ramp_duration) and self.ramp_duration > 0.0):
            raise ValueError(f"ramp_duration must be positive, got {self.ramp_duration}")
        s = s.copy()
        g = g.copy()
        s.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "start", s)
        object.__setattr__(self, "goal", g)

    def position(self, t: float) -> np.ndarray:
        frac = max(float(t), 0.0) / self.ramp_duration
        if self.hold_after and frac > 1.0:
            frac = 1.0
        return self.start + frac * (self.goal - self.start)


class NoPerturbation:
    """Identity input map: applied equals commanded."""

    def apply(self, commanded: np.ndarray) -> np.ndarray:
        return np.asarray(commanded, dtype=float).copy()


class DelayLine:
    """Sample-aligned pure delay with a zero-filled ring buffer.

    Reads before one full delay has elapsed return zero. ``delay_steps`` is
    the delay in whole samples; zero means passthrough.
    """

    def __init__(self, delay_steps: int, n_channels: int = 2):
        delay_steps = int(delay_steps)
        if delay_steps < 0:
            raise ValueError(f"delay_steps must be >= 0, got {delay_steps}")
        self.delay_steps = delay_steps
        self._buf = np.zeros((max(1, delay_steps), int(n_channels)))
        self._idx = 0

    def apply(self, commanded: np.ndarray) -> np.ndarray:
        u = np.asarray(commanded, dtype=float)
        if self.delay_steps == 0:
            return u.copy()
        out = self._buf[self._idx].copy()
        self._buf[self._idx] = u
        self._idx = (self._idx + 1) % self.delay_steps
        return out


class FirstOrderLag:
    """Per-channel unity-DC-gain lag ``pole/(s + pole)``, ZOH-exact.

    The output applied over a step is the lag state at the step start; the
    state then advances exactly under the held command.
    """

    def __init__(self, pole: float, dt: float, n_channels: int = 2):
        pole = float(pole)
        dt = float(dt)
        if not pole > 0.0:
            raise ValueError(f"pole must be positive, got {pole}")
        if not dt > 0.0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.pole = pole
        self._ad = math.exp(-pole * dt)
        self._bd = 1.0 - self._ad
        self._x = np.zeros(int(n_channels))

    def apply(self, commanded: np.ndarray) -> np.ndarray:
        out = self._x.copy()
        self._x = self._ad * self._x + self._bd * np.asarray(commanded, dtype=float)
        return out


def make_uncertainty(mode: str, dt: float, tau: float | None = None,
                     pole: float | None = None, n_channels: int = 2):
    """Build the input perturbation model for a run.

    ``delay`` rounds ``tau`` to the nearest whole number of samples, which is
    exact for delays that are integer multiples of ``dt``.
    """
    if mode == "none":
        return NoPerturbation()
    if mode == "delay":
        if tau is None or tau < 0.0:
            raise ValueError(f"delay mode needs tau >= 0, got {tau}")
        return DelayLine(int(round(float(tau) / float(dt))), n_channels)
    if mode == "actuator":
        if pole is None:
            raise ValueError("actuator mode needs a pole")
        return FirstOrderLag(pole, dt, n_channels)
    raise ValueError(f"unknown uncertainty mode {mode!r}")


def apply_uncertainty(model, commanded: np.ndarray) -> np.ndarray:
    """Advance the perturbation model one step; returns the applied input."""
    return model.apply(commanded)


def baseline_control(gain: BaselineGain, state: PlantState, r: np.ndarray) -> np.ndarray:
    """Tracking command ``K ([r; 0] - [p; v])`` toward reference position ``r``."""
    err = np.empty(4)
    err[0:2] = np.asarray(r, dtype=float) - state.p
    err[2:4] = -state.v
    return gain.k @ err


def step_plant(state: PlantState, applied_input: np.ndarray, dt: float) -> PlantState:
    """Exact ZOH double-integrator update under a held acceleration.

    The quadratic flow is integrated exactly, so two half steps compose to
    one full step with no splitting error.
    """
    dt = float(dt)
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    a = np.asarray(applied_input, dtype=float)
    p = state.p + state.v * dt + 0.5 * dt * dt * a
    v = state.v + a * dt
    return PlantState(p, v, state.t + dt)


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """One simulation step, as seen at the step start.

    ``u_plant_input`` is the input actually applied to the plant over the
    step (after the perturbation); ``x_f`` holds the first state component of
    each channel's certificate filter as used by that step's constraint;
    ``iqc_running_integral`` is the worst (smallest) channel's weighted
    integral evaluated through the end of the step.
    """

    t: float
    p: np.ndarray
    v: np.ndarray
    r: np.ndarray
    u_baseline: np.ndarray
    u_safe: np.ndarray
    u_plant_input: np.ndarray
    h: float
    hdot: float
    htilde: float
    x_f: np.ndarray
    constraint_status: str
    iqc_running_integral: float


class TrajectoryLog:
    """Column-oriented log, one row per step, preallocated for the horizon."""

    _FLOAT_COLS = (
        "t", "px", "py", "vx", "vy", "rx", "ry", "u0x", "u0y",
        "ux", "uy", "ax", "ay", "h", "hdot", "htilde",
        "xf_x", "xf_y", "iqc_int",
    )

    def __init__(self, n_steps: int):
        if n_steps < 1:
            raise ValueError(f"need at least one step, got {n_steps}")
        for name in self._FLOAT_COLS:
            setattr(self, name, np.zeros(n_steps))
        self.status_code = np.zeros(n_steps, dtype=np.int8)
        self._n = n_steps

    def __len__(self) -> int:
        return self._n

    @property
    def wx(self) -> np.ndarray:
        return self.ax - self.ux

    @property
    def wy(self) -> np.ndarray:
        return self.ay - self.uy

    def truncate(self, n: int) -> None:
        """Keep the first ``n`` rows (used when a run aborts mid-flight)."""
        if not 0 <= n <= self._n:
            raise ValueError(f"cannot truncate to {n} of {self._n} rows")
        for name in self._FLOAT_COLS:
            setattr(self, name, getattr(self, name)[:n])
        self.status_code = self.status_code[:n]
        self._n = n

    def status_at(self, i: int) -> str:
        return STATUS_WORDS[self.status_code[i]]

    def record(self, i: int) -> TrajectoryRecord:
        return TrajectoryRecord(
            t=float(self.t[i]),
            p=np.array([self.px[i], self.py[i]]),
            v=np.array([self.vx[i], self.vy[i]]),
            r=np.array([self.rx[i], self.ry[i]]),
            u_baseline=np.array([self.u0x[i], self.u0y[i]]),
            u_safe=np.array([self.ux[i], self.uy[i]]),
            u_plant_input=np.array([self.ax[i], self.ay[i]]),
            h=float(self.h[i]),
            hdot=float(self.hdot[i]),
            htilde=float(self.htilde[i]),
            x_f=np.array([self.xf_x[i], self.xf_y[i]]),
            constraint_status=self.status_at(i),
            iqc_running_integral=float(self.iqc_int[i]),
        )


@dataclass(frozen=True)
class RunSummary:
    """Headline metrics of one run.

    ``min_h`` and ``min_clearance`` include the terminal state;
    ``final_pos_error`` is the distance from the terminal position to the
    reference goal. ``min_iqc_integral`` is the smallest weighted running
    integral over all channels and all partial horizons including zero, and
    is 0.0 for runs without certificate channels (empty minimum).
    """

    n_steps: int
    dt: float
    min_h: float
    min_clearance: float
    final_pos_error: float
    infeasible_steps: int
    tv_ux: float
    tv_uy: float
    min_iqc_integral: float

    def as_text(self) -> str:
        return (
            f"n_steps={self.n_steps}\n"
            f"dt={self.dt!r}\n"
            f"min_h={self.min_h!r}\n"
            f"min_clearance={self.min_clearance!r}\n"
            f"final_pos_error={self.final_pos_error!r}\n"
            f"infeasible_steps={self.infeasible_steps}\n"
            f"tv_ux={self.tv_ux!r}\n"
            f"tv_uy={self.tv_uy!r}\n"
            f"min_iqc_integral={self.min_iqc_integral!r}\n"
        )


class SimulationAborted(RuntimeError):
    """Solver failure mid-run; carries the partial log for post-mortems."""

    def __init__(self, step: int, log: TrajectoryLog, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step
        self.log = log


def total_variation(x: np.ndarray) -> float:
    """Sum of absolute successive differences (oscillation metric)."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return 0.0
    return float(np.sum(np.abs(np.diff(x))))


def build_channels(cfg: "ScenarioConfig") -> list[RobustChannel] | None:
    """Construct the per-input certificate channels a config asks for.

    Returns ``None`` when the filter mode does not use them. ``fit`` source
    runs the envelope fit for the configured family; ``coefficients`` source
    takes the already-shifted first-order realization directly.
    """
    if cfg.filter_mode != "robust-ecbf":
        return None
    if cfg.iqc_source == "coefficients":
        from .lti import StateSpace

        filt = StateSpace.from_scalars(cfg.iqc_a, cfg.iqc_b, cfg.iqc_c, cfg.iqc_d)
        specs = [
            IqcSpec(filter=filt, alpha=cfg.alpha, lam=lam)
            for lam in (cfg.lambda_x, cfg.lambda_y)
        ]
    elif cfg.iqc_source == "fit":
        if cfg.iqc_kind == "delay":
            family = PerturbationFamily.delay_range(
                cfg.iqc_param_hi, cfg.iqc_param_lo, cfg.iqc_samples
            )
        else:
            family = PerturbationFamily.actuator_pole_range(
                cfg.iqc_param_lo, cfg.iqc_param_hi, cfg.iqc_samples
            )
        grid = FrequencyGrid.log_spaced(
            cfg.iqc_grid_lo, cfg.iqc_grid_hi, cfg.iqc_grid_points
        )
        env = family_envelope(family, cfg.alpha, grid)
        fitted = fit_first_order_bound(env, grid, cfg.iqc_margin)
        specs = [
            build_iqc(fitted, cfg.alpha, lam)
            for lam in (cfg.lambda_x, cfg.lambda_y)
        ]
    else:
        raise ValueError(
            f"filter mode {cfg.filter_mode!r} needs an iqc source, got "
            f"{cfg.iqc_source!r}"
        )
    return [RobustChannel(iqc=spec, channel_index=i) for i, spec in enumerate(specs)]


def run_closed_loop(cfg: "ScenarioConfig") -> tuple[TrajectoryLog, RunSummary]:
    """Run one scenario to its horizon.

    Returns the trajectory log and the summary. A solver numerical failure
    raises ``SimulationAborted`` carrying the log truncated to the completed
    steps.
    """
    dt = cfg.dt
    n_steps = int(round(cfg.horizon / dt))
    if n_steps < 1:
        raise ValueError("horizon shorter than one step")
    bspec = BarrierSpec(np.asarray(cfg.obstacle_center), cfg.obstacle_radius, cfg.alpha)
    gain = BaselineGain(np.asarray(cfg.gain).reshape(2, 4))
    ref = ReferenceProfile(
        np.asarray(cfg.ref_start),
        np.asarray(cfg.ref_goal),
        cfg.ramp_duration,
        cfg.hold_after,
    )
    perturbation = make_uncertainty(cfg.uncertainty_mode, dt, cfg.tau, cfg.pole)
    channels = build_channels(cfg)
    mode = cfg.filter_mode

    # Per-channel discrete filter maps; filters here are first order, so the
    # loop below works with plain floats.
    if channels is not None:
        fparams = []
        for ch in channels:
            f = ch.iqc.filter
            if f.order != 1:
                raise ValueError("simulation supports first-order certificate filters")
            ad, bd = zoh_discretize(f, dt)
            fparams.append((ad[0, 0], bd[0, 0], f.c[0, 0], f.d[0, 0]))
        growth = math.exp(cfg.alpha * dt)
        totals = [0.0, 0.0]
        states = [0.0, 0.0]
        ew = 1.0

    log = TrajectoryLog(n_steps)
    p = np.asarray(cfg.p0, dtype=float).copy()
    v = np.asarray(cfg.v0, dtype=float).copy()
    alpha = bspec.alpha
    half_dt2 = 0.5 * dt * dt
    infeasible = 0
    min_iqc = 0.0

    for k in range(n_steps):
        t = k * dt
        r = ref.position(t)
        state = PlantState(p, v, t)
        u0 = baseline_control(gain, state, r)
        ev = eval_barrier(bspec, p, v)

        if mode == "off":
            u = u0
            code = _CODE_OFF
        elif mode == "ecbf":
            con = ecbf_constraint(bspec, ev)
            rep = project_halfspace(u0, con.lin, con.rhs)
            u = rep.u
            code = _STATUS_CODE[rep.status]
            if rep.status == STATUS_INFEASIBLE:
                infeasible += 1
        else:
            qc = robust_ecbf_constraint(bspec, ev, channels)
            try:
                rep = project_quadratic(u0, qc, tol=cfg.qcqp_tol)
            except NumericalFailureError as exc:
                log.truncate(k)
                raise SimulationAborted(k, log, str(exc)) from exc
            u = rep.u
            code = _STATUS_CODE[rep.status]
            if rep.status == STATUS_INFEASIBLE:
                infeasible += 1

        if channels is not None:
            # Advance certificate filters under the commanded input; the
            # constraint above already consumed the step-start states.
            xf0_log = states[0]
            xf1_log = states[1]
            z_pairs = []
            for i in range(2):
                a_d, b_d, c0, d0 = fparams[i]
                x_i = states[i]
                ui = float(u[i])
                z0 = c0 * x_i + d0 * ui
                x_i = a_d * x_i + b_d * ui
                z1 = c0 * x_i + d0 * ui
                states[i] = x_i
                channels[i].x_f[0] = x_i
                z_pairs.append((z0, z1))
        else:
            xf0_log = 0.0
            xf1_log = 0.0

        applied = perturbation.apply(u)

        if channels is not None:
            ew1 = ew * growth
            half = 0.5 * dt
            for i in range(2):
                z0, z1 = z_pairs[i]
                w_i = float(applied[i]) - float(u[i])
                w2 = w_i * w_i
                totals[i] += half * (ew * (z0 * z0 - w2) + ew1 * (z1 * z1 - w2))
            ew = ew1
            step_iqc = min(totals)
            if step_iqc < min_iqc:
                min_iqc = step_iqc
        else:
            step_iqc = 0.0

        log.t[k] = t
        log.px[k] = p[0]
        log.py[k] = p[1]
        log.vx[k] = v[0]
        log.vy[k] = v[1]
        log.rx[k] = r[0]
        log.ry[k] = r[1]
        log.u0x[k] = u0[0]
        log.u0y[k] = u0[1]
        log.ux[k] = u[0]
        log.uy[k] = u[1]
        log.ax[k] = applied[0]
        log.ay[k] = applied[1]
        log.h[k] = ev.h
        log.hdot[k] = ev.hdot
        log.htilde[k] = ev.hdot + alpha * ev.h
        log.xf_x[k] = xf0_log
        log.xf_y[k] = xf1_log
        log.status_code[k] = code
        log.iqc_int[k] = step_iqc

        p = p + v * dt + half_dt2 * applied
        v = v + applied * dt

    # Terminal state participates in the minima and the final error.
    d_end = p - bspec.center
    h_end = float(d_end @ d_end) - bspec.radius * bspec.radius
    dist = np.hypot(log.px - bspec.center[0], log.py - bspec.center[1])
    min_clear = float(min(dist.min(), math.hypot(*d_end)) - bspec.radius)
    summary = RunSummary(
        n_steps=n_steps,
        dt=dt,
        min_h=float(min(log.h.min(), h_end)),
        min_clearance=min_clear,
        final_pos_error=float(np.hypot(*(p - ref.goal))),
        infeasible_steps=infeasible,
        tv_ux=total_variation(log.ux),
        tv_uy=total_variation(log.uy),
        min_iqc_integral=float(min_iqc),
    )
    return log, summary


def trajectory_csv_text(log: TrajectoryLog) -> str:
    """Render the log as CSV text (fixed header, shortest-roundtrip floats)."""
    cols = [
        log.t, log.px, log.py, log.vx, log.vy, log.rx, log.ry,
        log.u0x, log.u0y, log.ux, log.uy, log.wx, log.wy,
        log.h, log.hdot, log.htilde, log.xf_x, log.xf_y,
    ]
    iqc = log.iqc_int
    codes = log.status_code
    lines = [CSV_HEADER]
    for i in range(len(log)):
        front = ",".join(repr(float(c[i])) for c in cols)
        lines.append(f"{front},{STATUS_WORDS[codes[i]]},{float(iqc[i])!r}")
    return "\n".join(lines) + "\n"


def write_trajectory_csv(log: TrajectoryLog, dest) -> None:
    """Write the CSV to a path or a text file object."""
    text = trajectory_csv_text(log)
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
