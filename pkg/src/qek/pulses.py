"""Layered drive protocol: three constant Rabi pulses separated by two free evolutions.

Durations of the waveform parameters are in ns; schedules use µs and
rad/µs to match the emulator.  Hardware task documents use SI units.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .embedder import EPS, Register, RegisterConstraints
from .emulator import DEFAULT_OMEGA_MAX

SCHEMA_VERSION = "qek-task/1"
DRIVE_PHASE = math.pi / 2  # σ^y mixing term


class ValidationError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class HardwareLimits:
    omega_max: float = DEFAULT_OMEGA_MAX  # rad/µs
    max_total_time: float = 500.0  # ns
    min_segment: float = 5.0  # ns
    register: RegisterConstraints = field(default_factory=RegisterConstraints)

    def __post_init__(self):
        if min(self.omega_max, self.max_total_time, self.min_segment) <= 0:
            raise ValueError("hardware limits must be positive")


@dataclass(frozen=True)
class WaveformParams:
    """Drive durations ``tau0, tau1, tau2`` and free evolutions ``t0, t1`` (ns)."""

    tau0: float
    t0: float
    tau1: float
    t1: float
    tau2: float

    def as_array(self):
        return np.array([self.tau0, self.t0, self.tau1, self.t1, self.tau2], dtype=float)

    @classmethod
    def from_sequence(cls, values):
        vals = [float(v) for v in values]
        if len(vals) != 5:
            raise ValueError(f"expected 5 durations, got {len(vals)}")
        return cls(*vals)

    @property
    def total(self) -> float:
        return float(self.as_array().sum())

    @property
    def drive_durations(self):
        return (self.tau0, self.tau1, self.tau2)

    def violations(self, limits: HardwareLimits | None = None) -> list[str]:
        lim = limits or HardwareLimits()
        out = []
        if not self.total < lim.max_total_time:
            out.append(f"total_time: {self.total:g} >= {lim.max_total_time:g} ns")
        for name in ("tau0", "t0", "tau1", "t1", "tau2"):
            v = getattr(self, name)
            if not v > lim.min_segment:
                out.append(f"min_segment: {name} = {v:g} <= {lim.min_segment:g} ns")
        return out

    def is_feasible(self, limits: HardwareLimits | None = None) -> bool:
        return not self.violations(limits)


@dataclass(frozen=True)
class Segment:
    duration: float  # µs
    omega: float  # rad/µs
    phase: float = DRIVE_PHASE
    detuning: float = 0.0


@dataclass
class PulseSchedule:
    segments: list[Segment]

    @property
    def total_duration(self) -> float:
        return sum(s.duration for s in self.segments)

    def mixing_angles(self) -> list[float]:
        """Ω·τ for each drive segment, in rad."""
        return [s.omega * s.duration for s in self.segments if s.omega > 0]


def build_schedule(params: WaveformParams, omega0: float = DEFAULT_OMEGA_MAX,
                   limits: HardwareLimits | None = None, phase: float = DRIVE_PHASE) -> PulseSchedule:
    """Piecewise-constant schedule: drive, free, drive, free, drive."""
    lim = limits or HardwareLimits()
    problems = params.violations(lim)
    if not 0 < omega0 <= lim.omega_max:
        problems.append(f"omega: {omega0:g} not in (0, {lim.omega_max:g}] rad/us")
    if problems:
        raise ValidationError(problems)
    amps = (omega0, 0.0, omega0, 0.0, omega0)
    return PulseSchedule([
        Segment(duration=ns * 1e-3, omega=om, phase=phase, detuning=0.0)
        for ns, om in zip(params.as_array(), amps)
    ])


def smooth_schedule(schedule: PulseSchedule, ramp_time: float, steps: int = 8) -> PulseSchedule:
    """Replace each amplitude jump by a linear staircase of ``steps`` levels.

    The ramp is centred on the jump (``ramp_time`` in µs), so the pulse area
    and the total duration are unchanged.  Every segment must be longer
    than ``ramp_time``.
    """
    segs = schedule.segments
    if ramp_time <= 0 or len(segs) < 2:
        return PulseSchedule(list(segs))
    if any(s.duration <= ramp_time for s in segs):
        raise ValueError("ramp_time must be shorter than every segment")
    half = ramp_time / 2
    dt = ramp_time / steps
    out: list[Segment] = []
    for k, s in enumerate(segs):
        trim = (half if k > 0 else 0.0) + (half if k < len(segs) - 1 else 0.0)
        out.append(Segment(s.duration - trim, s.omega, s.phase, s.detuning))
        if k < len(segs) - 1:
            nxt = segs[k + 1]
            for j in range(steps):
                frac = (j + 0.5) / steps
                om = s.omega + frac * (nxt.omega - s.omega)
                ph = s.phase if frac < 0.5 else nxt.phase
                out.append(Segment(dt, om, ph, s.detuning))
    return PulseSchedule(out)


def validate_task(schedule: PulseSchedule, register: Register | None,
                  limits: HardwareLimits | None = None) -> list[str]:
    """Every hardware violation, as ``"rule: measured vs allowed"`` strings.

    An empty list means the task can be submitted.
    """
    lim = limits or HardwareLimits()
    out = []
    total_ns = schedule.total_duration * 1e3
    if not total_ns < lim.max_total_time:
        out.append(f"total_time: {total_ns:g} >= {lim.max_total_time:g} ns")
    for k, s in enumerate(schedule.segments):
        ns = s.duration * 1e3
        if not ns > lim.min_segment:
            out.append(f"min_segment: {ns:g} < {lim.min_segment:g} ns (segment {k})")
        if not 0.0 <= s.omega <= lim.omega_max:
            out.append(f"omega: {s.omega:g} not in [0, {lim.omega_max:g}] rad/us (segment {k})")
    if register is not None:
        c = lim.register
        pos = register.positions
        for i, (x, y) in enumerate(pos):
            if x < -EPS or x > c.width + EPS:
                out.append(f"register area: x exceeds {c.width:g} um (atom {i}, x = {x:g})")
            if y < -EPS or y > c.height + EPS:
                out.append(f"register area: y exceeds {c.height:g} um (atom {i}, y = {y:g})")
            if c.row_spacing > 0 and abs(y - c.row_spacing * round(y / c.row_spacing)) > EPS:
                out.append(f"row spacing: y = {y:g} not a multiple of {c.row_spacing:g} um (atom {i})")
        for i in range(len(pos)):
            for j in range(i + 1, len(pos)):
                d = math.dist(pos[i], pos[j])
                if d < c.min_pair_distance - EPS:
                    out.append(f"min pair distance: {d:g} < {c.min_pair_distance:g} um (atoms {i}, {j})")
    return out


def _sig(x: float) -> float:
    # 15 significant digits make emit -> parse -> emit a fixed point
    return float(f"{x:.15g}")


def emit_task_document(schedule: PulseSchedule, register: Register, n_shots: int,
                       limits: HardwareLimits | None = None) -> str:
    """Canonical JSON task (SI units); refuses invalid tasks."""
    problems = validate_task(schedule, register, limits)
    if n_shots < 1:
        problems.append(f"n_shots: {n_shots} < 1")
    if problems:
        raise ValidationError(problems)
    doc = {
        "schema": SCHEMA_VERSION,
        "n_shots": int(n_shots),
        "register": {
            "graph_id": register.graph_id,
            "blockade_radius_m": _sig(register.r_b * 1e-6),
            "positions_m": [[_sig(x * 1e-6), _sig(y * 1e-6)] for x, y in register.positions],
        },
        "drive": {
            "durations_s": [_sig(s.duration * 1e-6) for s in schedule.segments],
            "rabi_rad_per_s": [_sig(s.omega * 1e6) for s in schedule.segments],
            "phase_rad": [_sig(s.phase) for s in schedule.segments],
            "detuning_rad_per_s": [_sig(s.detuning * 1e6) for s in schedule.segments],
        },
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def parse_task_document(text: str):
    """Inverse of :func:`emit_task_document`: ``(schedule, register, n_shots)``."""
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported task schema {doc.get('schema')!r}")
    drv = doc["drive"]
    cols = (drv["durations_s"], drv["rabi_rad_per_s"], drv["phase_rad"], drv["detuning_rad_per_s"])
    if len({len(c) for c in cols}) != 1:
        raise ValueError("drive arrays differ in length")
    segs = [Segment(duration=d * 1e6, omega=o * 1e-6, phase=p, detuning=dt * 1e-6)
            for d, o, p, dt in zip(*cols)]
    reg = doc["register"]
    register = Register(positions=np.asarray(reg["positions_m"], dtype=float).reshape(-1, 2) * 1e6,
                        r_b=reg["blockade_radius_m"] * 1e6, graph_id=reg.get("graph_id"))
    return PulseSchedule(segs), register, int(doc["n_shots"])
