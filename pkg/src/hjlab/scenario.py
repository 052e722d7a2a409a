"""Traffic-light junction scenarios and initial data."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ScenarioInvalid
from .hamiltonian import QuasiConvexHamiltonian, from_descriptor, validate_quasiconvex


@dataclass(frozen=True)
class PhaseSchedule:
    """Periodic piecewise-constant limiter ``a(t)``.

    ``switch_times`` are fractions of the period, starting at 0;
    ``values[i]`` holds on ``[switch_times[i], switch_times[i+1])``.
    """

    switch_times: tuple[float, ...]
    values: tuple[float, ...]
    period: float = 1.0

    def __post_init__(self):
        st = tuple(float(s) for s in self.switch_times)
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "switch_times", st)
        object.__setattr__(self, "values", vals)
        if len(st) == 0 or len(st) != len(vals):
            raise ScenarioInvalid("schedule needs one value per switch time")
        if st[0] != 0.0:
            raise ScenarioInvalid("schedule switch_times must start at 0")
        if any(b <= a for a, b in zip(st, st[1:])) or st[-1] >= 1.0:
            raise ScenarioInvalid("schedule switch_times must be strictly increasing in [0, 1)")
        if self.period <= 0:
            raise ScenarioInvalid("schedule period must be positive")

    @classmethod
    def constant(cls, value: float, period: float = 1.0) -> "PhaseSchedule":
        return cls((0.0,), (value,), period)

    @property
    def durations(self) -> np.ndarray:
        st = np.array(self.switch_times + (1.0,))
        return np.diff(st)

    def __call__(self, t):
        s = np.mod(np.asarray(t, dtype=float) / self.period, 1.0)
        idx = np.searchsorted(self.switch_times, s, side="right") - 1
        out = np.asarray(self.values)[idx]
        return float(out) if np.ndim(out) == 0 else out

    def value_on(self, t0: float, t1: float) -> float:
        """Value on ``[t0, t1)``; raises if a switch lies strictly inside."""
        from .errors import PhaseBoundaryCrossed

        v = self(t0)
        for b in self.breakpoints(t0, t1):
            if t0 < b < t1 and not np.isclose(b, t0) and not np.isclose(b, t1):
                raise PhaseBoundaryCrossed(f"switch at t={b:.12g} inside step [{t0:.12g}, {t1:.12g})")
        return v

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        """Absolute switch times in ``[t0, t1]``."""
        k0 = int(np.floor(t0 / self.period)) - 1
        k1 = int(np.ceil(t1 / self.period)) + 1
        out = []
        for k in range(k0, k1 + 1):
            for s in self.switch_times:
                b = (k + s) * self.period
                if t0 - 1e-12 <= b <= t1 + 1e-12:
                    out.append(b)
        return sorted(out)

    def scaled(self, eps: float) -> "PhaseSchedule":
        return replace(self, period=self.period * eps)

    def sup_norm(self) -> float:
        return float(max(abs(v) for v in self.values))

    def as_dict(self) -> dict:
        return {"switch_times": list(self.switch_times), "values": list(self.values)}


def mean_limiter(s: PhaseSchedule) -> float:
    """Exact time average ``sum (tau_{i+1} - tau_i) A^i`` over one period."""
    return float(np.dot(s.durations, s.values))


def pointwise_max(schedules: Sequence[PhaseSchedule]) -> PhaseSchedule:
    """Schedule of ``max_alpha a_alpha(t)`` (all schedules share the period)."""
    if not schedules:
        raise ScenarioInvalid("need at least one schedule")
    period = schedules[0].period
    if any(not np.isclose(s.period, period) for s in schedules):
        raise ScenarioInvalid("schedules must share a period")
    st = sorted(set().union(*(s.switch_times for s in schedules)))
    vals = [max(s(t * period) for s in schedules) for t in st]
    return PhaseSchedule(tuple(st), tuple(vals), period)


@dataclass(frozen=True)
class JunctionScenario:
    """Ordered junctions ``b_1 < ... < b_N`` with branch Hamiltonians
    ``H_0 ... H_N`` and one phase schedule per junction."""

    positions: tuple[float, ...]
    branches: tuple[QuasiConvexHamiltonian, ...]
    schedules: tuple[PhaseSchedule, ...]
    check_limits: bool = True

    def __post_init__(self):
        pos = tuple(float(b) for b in self.positions)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "schedules", tuple(self.schedules))
        if len(self.branches) != len(pos) + 1:
            raise ScenarioInvalid(f"positions: need {len(pos) + 1} branch Hamiltonians for {len(pos)} junctions, "
                                  f"got {len(self.branches)}")
        if len(self.schedules) != len(pos):
            raise ScenarioInvalid("schedules: need one schedule per junction")
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ScenarioInvalid("positions must be strictly increasing")
        for H in self.branches:
            validate_quasiconvex(H)
        if self.check_limits:
            for alpha, s in enumerate(self.schedules, start=1):
                floor = max(self.branches[alpha - 1].min_value, self.branches[alpha].min_value)
                if min(s.values) < floor - 1e-12:
                    raise ScenarioInvalid(f"schedules[{alpha - 1}]: value {min(s.values)} below "
                                          f"max(min H_{alpha - 1}, min H_{alpha}) = {floor}")

    @classmethod
    def homogeneous(cls, H: QuasiConvexHamiltonian, positions: Sequence[float],
                    schedules: Sequence[PhaseSchedule]) -> "JunctionScenario":
        return cls(tuple(positions), (H,) * (len(positions) + 1), tuple(schedules))

    @property
    def n_junctions(self) -> int:
        return len(self.positions)

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in zip(self.positions, self.positions[1:]))

    @property
    def rho0(self) -> float:
        return max((abs(b) for b in self.positions), default=0.0)

    @property
    def H_left(self) -> QuasiConvexHamiltonian:
        return self.branches[0]

    @property
    def H_right(self) -> QuasiConvexHamiltonian:
        return self.branches[-1]

    @property
    def A0(self) -> float:
        """``max(min H_L, min H_R)``."""
        return max(self.H_left.min_value, self.H_right.min_value)

    def means(self) -> list[float]:
        return [mean_limiter(s) for s in self.schedules]

    def switch_times(self, t0: float, t1: float) -> list[float]:
        pts = set()
        for s in self.schedules:
            pts.update(s.breakpoints(t0, t1))
        return sorted(pts)

    def limiters_at(self, t: float) -> np.ndarray:
        return np.array([s(t) for s in self.schedules], dtype=float)

    def barrier_constant(self, lip: float) -> float:
        """``max(max ||a||_inf, max_alpha max_{|p|<=L} |H_alpha(p)|)``."""
        a = max((s.sup_norm() for s in self.schedules), default=0.0)
        h = max(H.max_abs_on(lip) for H in self.branches)
        return max(a, h)

    def scaled(self, eps: float) -> "JunctionScenario":
        """Junctions at ``eps b`` with limiters ``a(t / eps)``."""
        return replace(self, positions=tuple(eps * b for b in self.positions),
                       schedules=tuple(s.scaled(eps) for s in self.schedules))

    def with_positions(self, positions: Sequence[float]) -> "JunctionScenario":
        return replace(self, positions=tuple(positions))

    def descriptor(self) -> dict:
        return {"branches": [H.descriptor() for H in self.branches],
                "positions": list(self.positions),
                "schedules": [s.as_dict() for s in self.schedules]}


def scenario_from_dict(d: dict) -> JunctionScenario:
    """Parse ``{branches, positions, schedules}``; a single ``hamiltonian``
    entry may stand in for identical branches."""
    positions = [float(b) for b in d.get("positions", [])]
    if any(b <= a for a, b in zip(positions, positions[1:])):
        raise ScenarioInvalid("positions must be strictly increasing")
    if "branches" in d:
        branches = [from_descriptor(b) for b in d["branches"]]
    elif "hamiltonian" in d:
        branches = [from_descriptor(d["hamiltonian"])] * (len(positions) + 1)
    else:
        raise ScenarioInvalid("branches: missing (or give a single 'hamiltonian')")
    scheds = [PhaseSchedule(tuple(s["switch_times"]), tuple(s["values"])) for s in d.get("schedules", [])]
    return JunctionScenario(tuple(positions), tuple(branches), tuple(scheds))


@dataclass(frozen=True)
class InitialDatum:
    """Closed-form Lipschitz initial datum.

    kinds: ``constant`` (value), ``linear`` (slope, intercept),
    ``abs`` (coef, center, offset): ``coef |x - center| + offset``,
    ``piecewise`` (xs, us) linear interpolation with ``left_slope`` and
    ``right_slope`` beyond the knots.
    """

    kind: str = "constant"
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "constant":
            return np.full_like(x, float(p.get("value", 0.0)))
        if self.kind == "linear":
            return float(p.get("slope", 0.0)) * x + float(p.get("intercept", 0.0))
        if self.kind == "abs":
            return float(p.get("coef", 1.0)) * np.abs(x - float(p.get("center", 0.0))) + float(p.get("offset", 0.0))
        if self.kind == "piecewise":
            xs = np.asarray(p["xs"], dtype=float)
            us = np.asarray(p["us"], dtype=float)
            out = np.interp(x, xs, us)
            sl, sr = float(p.get("left_slope", 0.0)), float(p.get("right_slope", 0.0))
            out = np.where(x < xs[0], us[0] + sl * (x - xs[0]), out)
            return np.where(x > xs[-1], us[-1] + sr * (x - xs[-1]), out)
        raise ScenarioInvalid(f"unknown initial datum kind {self.kind!r}")

    def far_slopes(self) -> tuple[float, float]:
        p = self.params
        if self.kind == "constant":
            return 0.0, 0.0
        if self.kind == "linear":
            s = float(p.get("slope", 0.0))
            return s, s
        if self.kind == "abs":
            c = float(p.get("coef", 1.0))
            return -c, c
        if self.kind == "piecewise":
            return float(p.get("left_slope", 0.0)), float(p.get("right_slope", 0.0))
        raise ScenarioInvalid(f"unknown initial datum kind {self.kind!r}")

    def as_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d: dict | None) -> "InitialDatum":
        if d is None:
            return cls()
        d = dict(d)
        kind = d.pop("kind", "constant")
        return cls(kind, d)
