"""Double-well potentials, the exponent p, the primitive 𝒲 and the constants c_p, σ_p."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

FORMS = ("quartic", "double_parabola")

QUAD_TOL = 1e-10


class QuadratureError(RuntimeError):
    """Adaptive quadrature missed its tolerance; `estimate` is the achieved error bound."""

    def __init__(self, message: str, estimate: float):
        super().__init__(f"{message} (error estimate {estimate:.3e})")
        self.estimate = estimate


@dataclass(frozen=True)
class PExponent:
    p: float
    cross_check: bool = False

    def __post_init__(self):
        p = float(self.p)
        if self.cross_check:
            if not 2.0 <= p <= 3.0:
                raise ValueError(f"cross-check exponent must lie in [2, 3], got {p}")
        elif not 2.0 < p < 3.0:
            raise ValueError(
                f"p must lie in (2, 3), got {p}; p = 2 needs cross_check=True"
            )
        object.__setattr__(self, "p", p)

    def __float__(self) -> float:
        return self.p


def as_p(p) -> float:
    return float(p.p) if isinstance(p, PExponent) else float(p)


@dataclass(frozen=True)
class DoubleWell:
    """Non-negative potential vanishing exactly at `well_low` and `well_high`."""

    well_low: float
    well_high: float
    amplitude: float = 1.0
    form: str = "quartic"

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"unknown potential form {self.form!r}; choose from {FORMS}")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        if self.well_low > self.well_high:
            raise ValueError("well_low must not exceed well_high")

    @property
    def wells(self) -> tuple[float, float]:
        return (self.well_low, self.well_high)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        a, b, A = self.well_low, self.well_high, self.amplitude
        if self.form == "quartic":
            out = A * (t - a) ** 2 * (t - b) ** 2
        else:
            out = A * np.minimum((t - a) ** 2, (t - b) ** 2)
        return out[()] if out.ndim == 0 else out

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        a, b, A = self.well_low, self.well_high, self.amplitude
        if self.form == "quartic":
            out = 2 * A * (t - a) * (t - b) * (2 * t - a - b)
        else:
            out = np.where(np.abs(t - a) <= np.abs(t - b), 2 * A * (t - a), 2 * A * (t - b))
        return out[()] if out.ndim == 0 else out

    def density(self, t, p):
        """W^{(p-1)/p}, the integrand of the primitive."""
        r = (as_p(p) - 1.0) / as_p(p)
        return np.asarray(self(t), dtype=float) ** r

    def density_derivative(self, t, p):
        p = as_p(p)
        t = np.asarray(t, dtype=float)
        w = np.asarray(self(t), dtype=float)
        dw = np.asarray(self.derivative(t), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(w > 0, (p - 1) / p * w ** (-1.0 / p) * dw, 0.0)
        return out[()] if out.ndim == 0 else out

    def shifted(self, c: float) -> "DoubleWell":
        return DoubleWell(self.well_low + c, self.well_high + c, self.amplitude, self.form)

    def scaled(self, k: float) -> "DoubleWell":
        return DoubleWell(self.well_low, self.well_high, self.amplitude * k, self.form)


def eval_potential(P: DoubleWell, t):
    return P(t)


@dataclass(frozen=True)
class TruncationLevel:
    m: float

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("truncation level must be positive")


def default_truncation(*potentials: DoubleWell) -> TruncationLevel:
    return TruncationLevel(max(max(abs(P.well_low), abs(P.well_high)) for P in potentials))


def truncation_is_valid(level: TruncationLevel, *potentials: DoubleWell, samples: int = 400) -> bool:
    """Sampled check that m dominates the wells and every potential is monotone beyond ±m."""
    m = level.m
    if any(max(abs(P.well_low), abs(P.well_high)) > m for P in potentials):
        return False
    right = np.linspace(m, m + 10 * (1 + m), samples)
    left = -right
    for P in potentials:
        if np.any(np.diff(P(right)) < 0) or np.any(np.diff(P(left)) < 0):
            return False
    return True


def has_linear_growth(P: DoubleWell, m: float, kappa: float = 1e-3, samples: int = 400) -> bool:
    t = np.linspace(m, m + 100 * (1 + m), samples)
    t = np.concatenate([t, -t])
    return bool(np.all(P(t) >= kappa * (np.abs(t) - m)))


def is_convex_near_wells(P: DoubleWell, radius: float, samples: int = 200) -> bool:
    for c in P.wells:
        t = np.linspace(c - radius, c + radius, samples)
        if np.any(np.diff(P(t), 2) < -1e-12):
            return False
    return True


def constant_c_p(p) -> float:
    p = as_p(p)
    return p / (p - 1.0) ** ((p - 1.0) / p)


def _quad_primitive(P: DoubleWell, p: float, t: float) -> float:
    a, b = P.wells
    lo, hi, sign = (a, t, 1.0) if t >= a else (t, a, -1.0)
    if hi == lo:
        return 0.0
    points = [c for c in (a, b) if lo < c < hi]
    val, err = integrate.quad(
        lambda r: float(P.density(r, p)),
        lo,
        hi,
        points=points or None,
        epsabs=QUAD_TOL * 1e-2,
        epsrel=1e-13,
        limit=400,
    )
    if err > QUAD_TOL:
        raise QuadratureError(f"primitive at t={t} did not converge", err)
    return sign * val


_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)
# panels are short and graded at the wells, so a low order suffices off the table
_GL6_X, _GL6_W = np.polynomial.legendre.leggauss(6)


class Primitive:
    """Vectorized 𝒲 for one (potential, p): cumulative Gauss-Legendre table plus a local panel."""

    def __init__(self, P: DoubleWell, p: float, panels: int = 512):
        self.P, self.p = P, float(p)
        a, b = P.wells
        span = max(b - a, 1.0)
        self.lo, self.hi = a - 3 * span, b + 3 * span
        cuts = [self.lo, a, b, self.hi] if b > a else [self.lo, a, self.hi]
        nodes = [np.linspace(c0, c1, panels + 1)[:-1] for c0, c1 in zip(cuts[:-1], cuts[1:])]
        # geometric grading absorbs the |t - well|^{2(p-1)/p} kink
        h = span / panels
        graded = [c + s * h * 0.5 ** np.arange(1, 40) for c in (a, b) for s in (-1, 1)]
        self.nodes = np.unique(np.concatenate(nodes + graded + [[self.hi]]))
        left, right = self.nodes[:-1], self.nodes[1:]
        cum = np.concatenate([[0.0], np.cumsum(self._panel(left, right))])
        self.cum = cum - np.interp(a, self.nodes, cum)

    def _panel(self, x0, x1, order=(_GL_X, _GL_W)):
        gx, gw = order
        mid, half = (x0 + x1) / 2, (x1 - x0) / 2
        pts = mid[..., None] + half[..., None] * gx
        return half * (self.P.density(pts, self.p) @ gw)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        out = np.empty_like(flat)
        inside = (flat >= self.lo) & (flat <= self.hi)
        ti = flat[inside]
        k = np.clip(np.searchsorted(self.nodes, ti, side="right") - 1, 0, len(self.nodes) - 2)
        out[inside] = self.cum[k] + self._panel(self.nodes[k], ti, (_GL6_X, _GL6_W))
        for i in np.flatnonzero(~inside):
            out[i] = _quad_primitive(self.P, self.p, float(flat[i]))
        out = out.reshape(t.shape)
        return out[()] if out.ndim == 0 else out

    def density(self, t):
        return self.P.density(t, self.p)

    def density_derivative(self, t):
        return self.P.density_derivative(t, self.p)


@lru_cache(maxsize=64)
def primitive(P: DoubleWell, p: float) -> Primitive:
    return Primitive(P, float(p))


def antiderivative_W(P: DoubleWell, p, t):
    """𝒲(t) = ∫_{well_low}^t W^{(p-1)/p}; scalars go through adaptive quadrature."""
    p = as_p(p)
    if np.ndim(t) == 0:
        return _quad_primitive(P, p, float(t))
    return primitive(P, p)(t)


def constant_sigma_p(p, W: DoubleWell) -> float:
    p = as_p(p)
    return constant_c_p(p) * abs(antiderivative_W(W, p, W.well_high) - antiderivative_W(W, p, W.well_low))
