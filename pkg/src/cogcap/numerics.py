"""Special functions, quadrature and root finding shared by the other modules.

Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np


class NumericsError(ArithmeticError):
    """Raised when an iterative routine fails to converge."""


class BracketError(NumericsError):
    """Raised when a root bracket has no sign change, even after expansion."""


@dataclass(frozen=True)
class Tolerance:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-9
    max_iter: int = 200

    def __post_init__(self):
        if not 0.0 < self.abs_tol < 1.0:
            raise ValueError(f"abs_tol must lie in (0, 1), got {self.abs_tol!r}")
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError(f"rel_tol must lie in (0, 1), got {self.rel_tol!r}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter!r}")


GAMMA_TOL = Tolerance(abs_tol=1e-15, rel_tol=1e-15, max_iter=100_000)
QUAD_TOL = Tolerance(abs_tol=1e-10, rel_tol=1e-12, max_iter=2000)
ROOT_TOL = Tolerance(abs_tol=1e-12, rel_tol=1e-9, max_iter=200)

_TINY = 1e-300


# ---------------------------------------------------------------------------
# Incomplete gamma function
# ---------------------------------------------------------------------------

def _check_gamma_args(x: float, a: float) -> None:
    if not a > 0.0 or math.isnan(a):
        raise ValueError(f"shape a must be > 0, got {a!r}")
    if not x >= 0.0:
        raise ValueError(f"x must be >= 0, got {x!r}")


def _gamma_series(x: float, a: float, tol: Tolerance) -> float:
    # P(x, a) = x^a e^-x / Gamma(a+1) * sum_n x^n / ((a+1)...(a+n))
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(tol.max_iter):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * tol.rel_tol:
            log_pref = -x + a * math.log(x) - math.lgamma(a)
            return total * math.exp(log_pref)
    raise NumericsError(f"incomplete gamma series did not converge for x={x}, a={a}")


def _gamma_contfrac(x: float, a: float, tol: Tolerance) -> float:
    # Q(x, a) by the Legendre continued fraction, modified Lentz evaluation.
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, tol.max_iter + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol.rel_tol:
            log_pref = -x + a * math.log(x) - math.lgamma(a)
            return h * math.exp(log_pref)
    raise NumericsError(f"incomplete gamma continued fraction did not converge for x={x}, a={a}")


def reg_lower_gamma(x: float, a: float, tol: Tolerance = GAMMA_TOL) -> float:
    """Regularized lower incomplete gamma function P(x, a) = gamma(x, a) / Gamma(a).

    The first argument is the integration limit, the second the shape.
    Uses the power series below ``x = a + 1`` and the continued fraction
    for the upper function above it.
    """
    _check_gamma_args(x, a)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(_gamma_series(x, a, tol), 1.0)
    return max(1.0 - _gamma_contfrac(x, a, tol), 0.0)


def reg_upper_gamma(x: float, a: float, tol: Tolerance = GAMMA_TOL) -> float:
    """Complement ``1 - P(x, a)``, computed without cancellation in the far tail."""
    _check_gamma_args(x, a)
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(1.0 - _gamma_series(x, a, tol), 0.0)
    return min(_gamma_contfrac(x, a, tol), 1.0)


def gaussian_q(x: float) -> float:
    """Upper tail probability of the standard normal distribution."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

# Gauss-Kronrod 10/21 nodes on [-1, 1] (positive half, centre last).
_XGK = np.array([
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077600143556700,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
])
_WG = np.array([
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KRONROD_W = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GAUSS_W = np.zeros(21)
# Gauss nodes are the odd-indexed Kronrod nodes (1, 3, ..., 9 on each side).
_GAUSS_W[[1, 3, 5, 7, 9]] = _WG
_GAUSS_W[[19, 17, 15, 13, 11]] = _WG


def _gk21(f: Callable[[np.ndarray], np.ndarray], lo: float, hi: float) -> tuple[float, float]:
    centre = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    vals = np.asarray(f(centre + half * _NODES), dtype=float)
    kron = half * float(vals @ _KRONROD_W)
    gauss = half * float(vals @ _GAUSS_W)
    return kron, abs(kron - gauss)


def adaptive_integrate(f: Callable[[np.ndarray], np.ndarray],
                       pieces: Sequence[tuple[float, float]],
                       tol: Tolerance = QUAD_TOL) -> float:
    """Globally adaptive Gauss-Kronrod integration over a list of finite intervals.

    ``f`` must accept and return numpy arrays. The interval with the largest
    error estimate is bisected until the summed estimate meets
    ``max(abs_tol, rel_tol * |I|)``.
    """
    heap: list[tuple[float, float, float, float]] = []
    total = 0.0
    err = 0.0
    for lo, hi in pieces:
        if hi <= lo:
            continue
        val, e = _gk21(f, lo, hi)
        heapq.heappush(heap, (-e, lo, hi, val))
        total += val
        err += e
    for _ in range(tol.max_iter):
        if err <= max(tol.abs_tol, tol.rel_tol * abs(total)):
            return total
        neg_e, lo, hi, val = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            # interval exhausted at double precision; drop its error
            err += neg_e
            continue
        v1, e1 = _gk21(f, lo, mid)
        v2, e2 = _gk21(f, mid, hi)
        heapq.heappush(heap, (-e1, lo, mid, v1))
        heapq.heappush(heap, (-e2, mid, hi, v2))
        total += v1 + v2 - val
        err += e1 + e2 + neg_e
    if err <= max(tol.abs_tol, tol.rel_tol * abs(total)):
        return total
    raise NumericsError(
        f"quadrature did not converge after {tol.max_iter} subdivisions "
        f"(estimate {total!r}, error {err!r})")


def geometric_breakpoints(lo: float, hi: float, per_decade: int = 1) -> list[float]:
    """Breakpoints spaced geometrically from ``lo`` to ``hi`` inclusive."""
    if not 0.0 < lo < hi:
        return [p for p in (lo, hi) if p > 0.0]
    n = max(1, int(math.ceil(per_decade * math.log10(hi / lo))))
    return list(np.geomspace(lo, hi, n + 1))


def integrate_expectation(g: Callable[[np.ndarray], np.ndarray], fading_mean: float = 1.0,
                          tol: Tolerance = QUAD_TOL,
                          breakpoints: Iterable[float] = ()) -> float:
    """Expectation of ``g(z)`` for ``z`` exponential with mean ``fading_mean``.

    The domain is split at ``breakpoints``; the pieces below the last
    breakpoint are integrated against the density directly, and the tail
    ``[b, inf)`` is mapped to ``[0, 1)`` through ``z = b - m*log(1 - u)``,
    which turns the exponential weight into the constant ``exp(-b/m)``.
    """
    if not fading_mean > 0.0:
        raise ValueError(f"fading_mean must be > 0, got {fading_mean!r}")
    m = float(fading_mean)
    points = sorted({float(b) for b in breakpoints if 0.0 < b < math.inf})
    edges = [0.0] + points
    tail_start = edges[-1]

    def weighted(z):
        return g(z) * np.exp(-z / m) / m

    half_tol = Tolerance(abs_tol=0.5 * tol.abs_tol, rel_tol=tol.rel_tol, max_iter=tol.max_iter)
    pieces = list(zip(edges[:-1], edges[1:]))
    body = adaptive_integrate(weighted, pieces, half_tol) if pieces else 0.0

    tail_scale = math.exp(-tail_start / m)
    if tail_scale == 0.0:
        return body

    def mapped(u):
        return g(tail_start - m * np.log1p(-u))

    # Kronrod nodes never touch u = 1, so the logarithm stays finite.
    tail_tol = Tolerance(abs_tol=min(0.5, half_tol.abs_tol / tail_scale),
                         rel_tol=tol.rel_tol, max_iter=tol.max_iter)
    tail = adaptive_integrate(mapped, [(0.0, 0.5), (0.5, 0.9), (0.9, 0.99), (0.99, 1.0)], tail_tol)
    return body + tail_scale * tail


# ---------------------------------------------------------------------------
# Root finding
# ---------------------------------------------------------------------------

def _brent(h: Callable[[float], float], a: float, b: float, fa: float, fb: float,
           tol: Tolerance) -> float:
    # Brent's method: inverse quadratic / secant steps guarded by bisection.
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    c, fc = a, fa
    d = e = b - a
    for _ in range(tol.max_iter):
        if (fb > 0) == (fc > 0):
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        xtol = 2.0 * 2.2e-16 * abs(b) + 0.5 * tol.rel_tol * abs(b)
        m = 0.5 * (c - b)
        if abs(fb) <= tol.abs_tol or abs(m) <= xtol:
            return b
        if abs(e) >= xtol and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                p = 2.0 * m * s
                q = 1.0 - s
            else:
                q = fa / fc
                r = fb / fc
                p = s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0:
                q = -q
            else:
                p = -p
            if 2.0 * p < min(3.0 * m * q - abs(xtol * q), abs(e * q)):
                e, d = d, p / q
            else:
                d = e = m
        else:
            d = e = m
        a, fa = b, fb
        b += d if abs(d) > xtol else math.copysign(xtol, m)
        fb = h(b)
    raise NumericsError(f"root finding did not converge in {tol.max_iter} iterations "
                        f"(last iterate {b!r}, residual {fb!r})")


def find_root(h: Callable[[float], float], bracket: tuple[float, float],
              tol: Tolerance = ROOT_TOL, *, expand: bool = True, max_expand: int = 60,
              limits: tuple[float, float] = (-math.inf, math.inf)) -> float:
    """Root of a continuous monotone function on a bracket.

    If ``h`` has no sign change on ``bracket`` and ``expand`` is set, both
    ends are pushed outward by the current width (so the bracket doubles
    each round, clipped to ``limits``) up to ``max_expand`` times.

    Raises:
        BracketError: no sign change was found.
        NumericsError: the iteration did not converge.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise ValueError(f"bracket must satisfy lo < hi, got {bracket!r}")
    flo, fhi = h(lo), h(hi)
    rounds = 0
    while flo * fhi > 0.0:
        if not expand or rounds >= max_expand:
            raise BracketError(f"no sign change on [{lo!r}, {hi!r}] "
                               f"(h={flo!r}, {fhi!r}) after {rounds} expansions")
        width = hi - lo
        # grow toward the side where |h| is smaller, which is where the root lies
        if abs(flo) < abs(fhi):
            new_lo = max(lo - width, limits[0])
            if new_lo == lo:
                raise BracketError(f"lower limit {limits[0]!r} reached without a sign change")
            lo, flo = new_lo, h(new_lo)
        else:
            new_hi = min(hi + width, limits[1])
            if new_hi == hi:
                raise BracketError(f"upper limit {limits[1]!r} reached without a sign change")
            hi, fhi = new_hi, h(new_hi)
        rounds += 1
    return _brent(h, lo, hi, flo, fhi, tol)
