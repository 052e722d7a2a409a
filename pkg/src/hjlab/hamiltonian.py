"""Quasi-convex Hamiltonians, their monotone envelopes and level sets.

A :class:`QuasiConvexHamiltonian` is one of three closed forms
(``trapezoid``, of which the vee ``|p| - c`` is the degenerate case,
``quadratic``) or a uniform ``table`` with linear interpolation. The same
flat parameter layout feeds the compiled stepping kernels.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from . import kernels
from .errors import BelowMinimum, NotCoercive, NotQuasiConvex, OutOfRange

log = logging.getLogger(__name__)

QC_RTOL = 1e-12
DEFAULT_SAMPLES = 4001


@dataclass(frozen=True, eq=False)
class QuasiConvexHamiltonian:
    """Coercive, quasi-convex ``H(p)`` with cached minimizer and envelopes.

    Attributes:
        kind: ``"trapezoid"``, ``"quadratic"`` or ``"table"``.
        params: kernel parameter vector (length ``kernels.N_PARAMS``).
        table: tabulated values for ``kind == "table"``, else empty.
        p_min, p_max: sample range; envelope queries outside it raise.
        n_samples: size of the uniform tabulation used for validation.
    """

    kind: str
    params: np.ndarray
    table: np.ndarray
    p_min: float
    p_max: float
    n_samples: int = DEFAULT_SAMPLES
    label: str = ""

    @property
    def kind_code(self) -> int:
        return {"trapezoid": kernels.KIND_TRAPEZOID,
                "quadratic": kernels.KIND_QUADRATIC,
                "table": kernels.KIND_TABLE}[self.kind]

    def __call__(self, p):
        out = kernels.h_eval_vec(self.kind_code, self.params, self.table, p)
        return float(out) if np.ndim(out) == 0 else out

    def __repr__(self):
        return f"QuasiConvexHamiltonian({self.label or self.kind}, range=[{self.p_min:g}, {self.p_max:g}])"

    # -- minimizers -------------------------------------------------------
    @cached_property
    def _argmin_interval(self) -> tuple[float, float]:
        prm = self.params
        if self.kind == "trapezoid":
            return float(prm[0]), float(prm[1])
        if self.kind == "quadratic":
            return float(prm[0]), float(prm[0])
        p, h = self.samples
        tol = QC_RTOL * max(float(h.max() - h.min()), 1.0)
        idx = np.flatnonzero(h <= h.min() + tol)
        return float(p[idx[0]]), float(p[idx[-1]])

    @property
    def p0(self) -> float:
        """Smallest minimizer."""
        return self._argmin_interval[0]

    @property
    def p0_right(self) -> float:
        """Largest minimizer (equals ``p0`` unless the bottom is flat)."""
        return self._argmin_interval[1]

    @cached_property
    def min_value(self) -> float:
        return float(self(self.p0))

    @cached_property
    def samples(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "table":
            n = int(self.params[0])
            p = self.params[1] + self.params[2] * np.arange(n)
            return p, self.table[:n].copy()
        p = np.linspace(self.p_min, self.p_max, self.n_samples)
        # closed forms: make sure the kinks are sampled exactly
        p = np.union1d(p, [x for x in self._kinks() if self.p_min <= x <= self.p_max])
        return p, self(p)

    def _kinks(self):
        if self.kind == "trapezoid":
            return (float(self.params[0]), float(self.params[1]))
        if self.kind == "quadratic":
            return (float(self.params[0]),)
        return ()

    # -- envelopes --------------------------------------------------------
    def _check_range(self, p):
        arr = np.asarray(p, dtype=float)
        if np.any(arr < self.p_min) or np.any(arr > self.p_max):
            raise OutOfRange(f"slope outside sample range [{self.p_min}, {self.p_max}] of {self!r}")

    def envelope_minus(self, p):
        """Non-increasing part: ``H(p)`` left of ``p0``, ``min H`` beyond."""
        self._check_range(p)
        return self(np.minimum(p, self.p0))

    def envelope_plus(self, p):
        """Non-decreasing part: ``min H`` left of ``p0``, ``H(p)`` beyond."""
        self._check_range(p)
        return self(np.maximum(p, self.p0))

    # -- level sets -------------------------------------------------------
    def level_set_endpoints(self, level: float, branch: str = "increasing",
                            tol: float = 1e-12) -> tuple[float, float]:
        """``(min, max)`` of ``{H = level}`` on one monotone branch.

        ``branch="increasing"`` searches ``p >= p0`` (the set ``E_R`` of the
        junction problem), ``"decreasing"`` searches ``p <= p0_right``.
        At ``level == min H`` with a flat bottom both calls return the
        argmin interval.
        """
        if branch not in ("increasing", "decreasing"):
            raise ValueError(f"branch must be 'increasing' or 'decreasing', got {branch!r}")
        m = self.min_value
        if level < m - tol * max(1.0, abs(m)):
            raise BelowMinimum(f"level {level} below min H = {m}")
        if level <= m + tol * max(1.0, abs(m)):
            return self.p0, self.p0_right
        if self.kind == "trapezoid":
            p_lo, p_hi, s_l, s_r, floor = self.params[:5]
            if branch == "increasing":
                p = float(p_hi + (level - floor) / s_r)
            else:
                p = float(p_lo - (level - floor) / s_l)
            return p, p
        if self.kind == "quadratic":
            p0, k, floor = self.params[:3]
            r = float(np.sqrt((level - floor) / k))
            p = float(p0 + r) if branch == "increasing" else float(p0 - r)
            return p, p
        return self._table_level(level, branch)

    def _table_level(self, level, branch):
        p, h = self.samples
        n = len(p)
        if branch == "increasing":
            i0 = int(np.searchsorted(p, self.p0_right))
            seg_p, seg_h = p[i0:], h[i0:]
        else:
            i0 = int(np.searchsorted(p, self.p0, side="right"))
            seg_p, seg_h = p[:i0][::-1], h[:i0][::-1]
        # seg_h is non-decreasing along seg_p (moving away from the bottom)
        hit = np.flatnonzero(seg_h >= level)
        if hit.size == 0:
            # linear extrapolation past the table end
            slope = (seg_h[-1] - seg_h[-2]) / (seg_p[-1] - seg_p[-2]) if n > 1 else np.inf
            pe = float(seg_p[-1] + (level - seg_h[-1]) / slope)
            log.info("level %.6g beyond table range of %r, extrapolated to p=%.6g", level, self, pe)
            return pe, pe
        k = hit[0]
        exact = np.flatnonzero(seg_h == level)
        if k == 0:
            first = float(seg_p[0])
        else:
            w = (level - seg_h[k - 1]) / (seg_h[k] - seg_h[k - 1])
            first = float(seg_p[k - 1] + w * (seg_p[k] - seg_p[k - 1]))
        last = float(seg_p[exact[-1]]) if exact.size else first
        if branch == "increasing":
            return min(first, last), max(first, last)
        return min(first, last), max(first, last)

    def sublevel_interval(self, level: float) -> tuple[float, float]:
        """Interval ``{p : H(p) <= level}`` (empty levels raise BelowMinimum)."""
        lo = self.level_set_endpoints(level, "decreasing")[0]
        hi = self.level_set_endpoints(level, "increasing")[1]
        return lo, hi

    # -- misc ---------------------------------------------------------------
    def max_speed(self, lo: float, hi: float, n: int = 2001) -> float:
        """Largest ``|H'|`` on ``[lo, hi]`` by difference quotients."""
        p = np.linspace(lo, hi, n)
        p = np.union1d(p, [x for x in self._kinks() if lo <= x <= hi])
        h = self(p)
        dp = np.diff(p)
        ok = dp > 0
        return float(np.max(np.abs(np.diff(h)[ok] / dp[ok]))) if ok.any() else 0.0

    def max_abs_on(self, bound: float) -> float:
        """``max_{|p| <= bound} |H(p)|`` (exact for quasi-convex H)."""
        cand = [-bound, bound, float(np.clip(self.p0, -bound, bound)),
                float(np.clip(self.p0_right, -bound, bound))]
        return float(np.max(np.abs(self(np.array(cand)))))

    def with_range(self, p_min: float, p_max: float) -> "QuasiConvexHamiltonian":
        if self.kind == "table" and (p_min < self.samples[0][0] or p_max > self.samples[0][-1]):
            raise OutOfRange("cannot widen a tabulated Hamiltonian beyond its table")
        log.info("re-tabulating %r on [%g, %g]", self, p_min, p_max)
        return QuasiConvexHamiltonian(self.kind, self.params, self.table, float(p_min),
                                      float(p_max), self.n_samples, self.label)

    def descriptor(self) -> dict:
        prm = [float(x) for x in self.params]
        if self.kind == "trapezoid":
            return {"kind": "trapezoid", "p_lo": prm[0], "p_hi": prm[1], "slope_left": prm[2],
                    "slope_right": prm[3], "floor": prm[4], "p_min": self.p_min, "p_max": self.p_max}
        if self.kind == "quadratic":
            return {"kind": "quadratic", "p0": prm[0], "k": prm[1], "floor": prm[2],
                    "p_min": self.p_min, "p_max": self.p_max}
        p, h = self.samples
        return {"kind": "table", "p": p.tolist(), "h": h.tolist()}

    def tabulate(self, n: int = 201) -> dict:
        p = np.linspace(self.p_min, self.p_max, n)
        return {"p": p.tolist(), "h": np.asarray(self(p)).tolist()}


def _params(*vals) -> np.ndarray:
    out = np.zeros(kernels.N_PARAMS)
    out[: len(vals)] = vals
    return out


def trapezoid(p_lo: float, p_hi: float, slope_left: float = 1.0, slope_right: float = 1.0,
              floor: float = 0.0, p_range: tuple[float, float] | None = None,
              label: str = "") -> QuasiConvexHamiltonian:
    """``floor + slope_left (p_lo - p)^+ + slope_right (p - p_hi)^+``.

    Flat bottom on ``[p_lo, p_hi]``; the LWR-type Hamiltonian of a
    trapezoidal fundamental diagram has this shape.
    """
    if p_hi < p_lo:
        raise ValueError("p_hi must be >= p_lo")
    if slope_left <= 0 or slope_right <= 0:
        raise NotCoercive("trapezoid slopes must be positive")
    lo, hi = p_range if p_range is not None else (p_lo - 5.0, p_hi + 5.0)
    return QuasiConvexHamiltonian("trapezoid", _params(p_lo, p_hi, slope_left, slope_right, floor),
                                  np.zeros(2), float(lo), float(hi),
                                  label=label or f"trapezoid[{p_lo:g},{p_hi:g}]")


def vee(c: float = 0.0, slope: float = 1.0, p0: float = 0.0, slope_right: float | None = None,
        p_range: tuple[float, float] | None = None) -> QuasiConvexHamiltonian:
    """``slope * |p - p0| - c`` (with an optional different right slope)."""
    sr = slope if slope_right is None else slope_right
    label = f"vee(c={c:g})" if (slope == 1 and sr == 1 and p0 == 0) else f"vee({slope:g},{sr:g},p0={p0:g},c={c:g})"
    return trapezoid(p0, p0, slope, sr, -c, p_range=p_range, label=label)


def quadratic(p0: float = 0.0, k: float = 1.0, floor: float = 0.0,
              p_range: tuple[float, float] | None = None) -> QuasiConvexHamiltonian:
    """``k (p - p0)^2 + floor``."""
    if k <= 0:
        raise NotCoercive("quadratic coefficient must be positive")
    lo, hi = p_range if p_range is not None else (p0 - 5.0, p0 + 5.0)
    return QuasiConvexHamiltonian("quadratic", _params(p0, k, floor), np.zeros(2), float(lo), float(hi),
                                  label=f"quadratic(p0={p0:g},k={k:g},floor={floor:g})")


def from_table(p, h, validate: bool = True) -> QuasiConvexHamiltonian:
    """Uniformly spaced ``(p, H)`` samples; linear in between and beyond."""
    p = np.asarray(p, dtype=float)
    h = np.asarray(h, dtype=float)
    if p.ndim != 1 or p.shape != h.shape or p.size < 3:
        raise ValueError("table needs matching 1-D p and h arrays with at least 3 samples")
    step = np.diff(p)
    if np.any(step <= 0) or not np.allclose(step, step[0], rtol=1e-9, atol=0):
        raise ValueError("table p must be uniformly increasing")
    ham = QuasiConvexHamiltonian("table", _params(p.size, p[0], step[0]), h.copy(),
                                 float(p[0]), float(p[-1]), p.size, label="table")
    if validate:
        validate_quasiconvex(ham)
    return ham


def from_callable(fn: Callable, p_min: float, p_max: float, n: int = DEFAULT_SAMPLES,
                  validate: bool = True) -> QuasiConvexHamiltonian:
    p = np.linspace(p_min, p_max, n)
    return from_table(p, np.asarray(fn(p), dtype=float), validate=validate)


def from_descriptor(desc: dict) -> QuasiConvexHamiltonian:
    """Build from a config mapping ``{kind: vee|quadratic|trapezoid|table, ...}``."""
    d = dict(desc)
    kind = d.pop("kind", None)
    rng = None
    if "p_min" in d or "p_max" in d:
        rng = (float(d.pop("p_min")), float(d.pop("p_max")))
    if kind == "vee":
        return vee(p_range=rng, **{k: float(v) for k, v in d.items()})
    if kind == "quadratic":
        return quadratic(p_range=rng, **{k: float(v) for k, v in d.items()})
    if kind == "trapezoid":
        return trapezoid(p_range=rng, **{k: float(v) for k, v in d.items()})
    if kind == "table":
        if "csv" in d:
            data = np.loadtxt(d["csv"], delimiter=",", skiprows=1, ndmin=2)
            return from_table(data[:, 0], data[:, 1])
        return from_table(d["p"], d["h"])
    raise ValueError(f"unknown Hamiltonian kind {kind!r}")


# -- module-level operations -------------------------------------------------

def minimizer(H: QuasiConvexHamiltonian) -> float:
    """Smallest argmin of ``H`` after checking quasi-convexity."""
    validate_quasiconvex(H)
    return H.p0


def envelope_minus(H: QuasiConvexHamiltonian, p):
    return H.envelope_minus(p)


def envelope_plus(H: QuasiConvexHamiltonian, p):
    return H.envelope_plus(p)


def junction_function(A: float, H_L: QuasiConvexHamiltonian, H_R: QuasiConvexHamiltonian, pL, pR):
    """``max(A, H_L^+(pL), H_R^-(pR))``."""
    return np.maximum(A, np.maximum(H_L.envelope_plus(pL), H_R.envelope_minus(pR)))


def level_set_endpoints(H: QuasiConvexHamiltonian, level: float, branch: str = "increasing"):
    return H.level_set_endpoints(level, branch)


def is_quasiconvex(h: np.ndarray, rtol: float = QC_RTOL) -> bool:
    """Decrease-then-increase check on a sampled sequence."""
    h = np.asarray(h, dtype=float)
    tol = rtol * max(float(h.max() - h.min()), np.finfo(float).tiny)
    i = int(np.argmin(h))
    d = np.diff(h)
    return bool(np.all(d[:i] <= tol) and np.all(d[i:] >= -tol))


def validate_quasiconvex(H: QuasiConvexHamiltonian, rtol: float = QC_RTOL) -> None:
    _, h = H.samples
    if not is_quasiconvex(h, rtol):
        raise NotQuasiConvex(f"{H!r} is not non-increasing then non-decreasing on its samples")


def validate_coercive(H: QuasiConvexHamiltonian, margin: float = 0.0) -> None:
    p, h = H.samples
    m = float(h.min())
    if not (h[0] > m + margin and h[-1] > m + margin):
        raise NotCoercive(f"{H!r}: end values {h[0]:.4g}, {h[-1]:.4g} do not exceed min {m:.4g} + {margin}")


@dataclass(frozen=True)
class SlopeQuadruple:
    """Level-set endpoints of ``H_L``/``H_R`` at the flux-limiter level."""

    p_bar_L: float
    p_hat_L: float
    p_bar_R: float
    p_hat_R: float

    @classmethod
    def at_level(cls, H_L: QuasiConvexHamiltonian, H_R: QuasiConvexHamiltonian, level: float):
        lo_L, hi_L = H_L.level_set_endpoints(level, "decreasing")
        lo_R, hi_R = H_R.level_set_endpoints(level, "increasing")
        return cls(p_bar_L=hi_L, p_hat_L=lo_L, p_bar_R=lo_R, p_hat_R=hi_R)

    def check(self, H_L, H_R, level: float, tol: float = 1e-9) -> bool:
        if not (self.p_hat_L <= self.p_bar_L and self.p_bar_R <= self.p_hat_R):
            return False
        vals = [H_L(self.p_bar_L), H_L(self.p_hat_L), H_R(self.p_bar_R), H_R(self.p_hat_R)]
        return all(abs(v - level) <= tol * max(1.0, abs(level)) for v in vals)

    def as_dict(self) -> dict:
        return {"p_bar_L": self.p_bar_L, "p_hat_L": self.p_hat_L,
                "p_bar_R": self.p_bar_R, "p_hat_R": self.p_hat_R}


@dataclass(eq=False)
class SpaceTimeHamiltonian:
    """General ``H(t, x, p)``, 1-periodic in ``t``.

    ``func`` must broadcast over numpy arrays. ``p0`` optionally gives the
    pointwise minimizer ``p0(t, x)``; otherwise it is found by sampling
    ``p_range``. ``time_dependent=False`` lets solvers cache ``p0``.
    """

    func: Callable
    left_limit: QuasiConvexHamiltonian | None = None
    right_limit: QuasiConvexHamiltonian | None = None
    rho0: float = 0.0
    period_t: float = 1.0
    p0: Callable | None = None
    time_dependent: bool = True
    p_range: tuple[float, float] = (-10.0, 10.0)
    n_p: int = 2001

    def __call__(self, t, x, p):
        return self.func(t, x, p)

    def minimizer_at(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.p0 is not None:
            return np.broadcast_to(np.asarray(self.p0(t, x), dtype=float), x.shape).copy()
        pg = np.linspace(*self.p_range, self.n_p)
        vals = self.func(t, x[:, None], pg[None, :])
        return pg[np.argmin(vals, axis=1)]

    def envelope_plus(self, t, x, p, p0=None):
        p0 = self.minimizer_at(t, x) if p0 is None else p0
        return self.func(t, x, np.maximum(p, p0))

    def envelope_minus(self, t, x, p, p0=None):
        p0 = self.minimizer_at(t, x) if p0 is None else p0
        return self.func(t, x, np.minimum(p, p0))

    def validate(self, t_probe, x_probe, p_probe, decay_tol: float = 1e-6,
                 far: float = 1e4, rtol: float = QC_RTOL) -> dict:
        """Check time periodicity, decay to the left/right limits,
        coercivity and quasi-convexity for ``|x| >= rho0`` at probe points.

        Returns a mapping of check name to bool.
        """
        t = np.asarray(t_probe, dtype=float)[:, None, None]
        x = np.asarray(x_probe, dtype=float)[None, :, None]
        p = np.asarray(p_probe, dtype=float)[None, None, :]
        out = {}
        h0 = np.asarray(self.func(t, x, p), dtype=float)
        h1 = np.asarray(self.func(t + self.period_t, x, p), dtype=float)
        # round-off in t + period only
        out["time_periodic"] = bool(np.all(np.abs(h1 - h0) <= 1e-12 * (1.0 + np.abs(h0))))
        for name, lim, sign in (("left_limit", self.left_limit, -1.0), ("right_limit", self.right_limit, 1.0)):
            if lim is None:
                continue
            k = np.round(sign * far)
            diff = np.abs(self.func(t, x + k, p) - lim(np.broadcast_to(p, (t.size, x.size, p.size))))
            out[name] = bool(np.max(diff) <= decay_tol)
        pg = np.linspace(*self.p_range, self.n_p)
        xs = np.asarray(x_probe, dtype=float)
        xs = xs[np.abs(xs) >= self.rho0]
        qc = True
        coercive = True
        for tt in np.asarray(t_probe, dtype=float):
            for xx in xs:
                h = np.asarray(self.func(tt, xx, pg), dtype=float)
                qc &= is_quasiconvex(h, rtol)
                coercive &= bool(h[0] > h.min() and h[-1] > h.min())
        out["quasi_convex"] = bool(qc)
        out["coercive"] = bool(coercive)
        return out
