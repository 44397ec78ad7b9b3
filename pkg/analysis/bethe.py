# --- Start of File: analysis/bethe.py ---
"""
Analytic layer on the d-regular tree: the Bethe recursion and functional on
color-symmetric measures, the scalar fixed-point equation F(r) = r, the
critical curves beta_free(B) < beta_c(B) < beta_plus(B), region
classification, percolation constants and the Psi functionals of RCM
messages.

All functions are pure. Quantities that depend only on (q, d) are cached.
"""
from __future__ import annotations

import enum
import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize
from scipy.special import expit, logsumexp

from analysis.core import (
    BracketError,
    ConvergenceError,
    Params,
    SymmetricMeasure,
)
from config import Config

logger = logging.getLogger(__name__)

# Relative size below which the rho_pm discriminant is rounding noise.
DISC_REL_TOL = 1e-12
ROOT_XTOL = 1e-13


class Region(enum.Enum):
    UNIQUE = 'UNIQUE'
    R_FREE = 'R_FREE'
    R_C = 'R_C'
    R_1 = 'R_1'


class Start(enum.Enum):
    UNIFORM = 'UNIFORM'
    DELTA_1 = 'DELTA_1'


@dataclass(frozen=True)
class PhasePoint:
    params: Params
    region: Region
    nu_free: SymmetricMeasure
    nu_1: SymmetricMeasure
    phi_free: float
    phi_1: float

    def as_row(self):
        return {
            'beta': self.params.beta, 'B': self.params.B, 'region': self.region.value,
            'phi_free': self.phi_free, 'phi_1': self.phi_1,
            'a_free': self.nu_free.a, 'a_1': self.nu_1.a,
        }


@dataclass
class CriticalCurves:
    """ Sampled critical curves on a grid of B in [0, B_plus]. """
    q: int
    d: int
    B_plus: float
    beta_minus: float
    Bs: np.ndarray
    beta_free: np.ndarray
    beta_c: np.ndarray
    beta_plus: np.ndarray
    failures: list = field(default_factory=list)

    def rows(self):
        for i, B in enumerate(self.Bs):
            yield {'B': float(B), 'beta_free': float(self.beta_free[i]),
                   'beta_c': float(self.beta_c[i]), 'beta_plus': float(self.beta_plus[i])}


# =============================================================================
# === Stable scalar helpers ===
# =============================================================================

def _log_tilt(beta, x):
    """ log(1 + (e^beta - 1) x) for x in [0, 1], finite for large beta. """
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return beta
    return float(np.logaddexp(beta + math.log(x), math.log1p(-x)))


def _log_tilt_array(beta, x):
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide='ignore'):
        return np.logaddexp(beta + np.log(x), np.log1p(-x))


def _log_ebq2(beta, q):
    """ log(e^beta + q - 2). """
    if q == 2:
        return beta
    return float(np.logaddexp(beta, math.log(q - 2)))


# =============================================================================
# === Bethe Recursion and Functional ===
# =============================================================================

def bp_step(nu, params):
    """ One application of the Bethe recursion on a color-symmetric measure. """
    q, d, beta, B = params.q, params.d, params.beta, params.B
    if nu.q != q:
        raise ValueError(f"Measure has q={nu.q}, params have q={q}")
    log_u = B + (d - 1) * _log_tilt(beta, nu.a)
    log_w = (d - 1) * _log_tilt(beta, nu.c)
    return SymmetricMeasure(float(expit(log_u - log_w - math.log(q - 1))), q)


def bp_fixed_point(start, params, tol=None, max_iter=None):
    """
    Iterates bp_step from the uniform or the color-1 Dirac measure.

    Args:
        start (Start | str): UNIFORM yields nu_free, DELTA_1 yields nu_1.
        params (Params): Model parameters.
        tol (float): Sup-norm Cauchy stopping tolerance.
        max_iter (int): Iteration budget.

    Returns:
        SymmetricMeasure: The converged measure.

    Raises:
        ConvergenceError: When the budget is exhausted.
    """
    tol = Config.FIXED_POINT_TOL if tol is None else tol
    max_iter = Config.FIXED_POINT_MAX_ITER if max_iter is None else max_iter
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    start = Start(start)
    nu = SymmetricMeasure.uniform(params.q) if start is Start.UNIFORM else SymmetricMeasure.delta_one(params.q)
    for it in range(1, max_iter + 1):
        nxt = bp_step(nu, params)
        if nxt.distance(nu) < tol:
            logger.debug(f"BP from {start.value} converged after {it} steps at {params}: a={nxt.a:.15g}")
            return nxt
        nu = nxt
    raise ConvergenceError(f"BP from {start.value} did not converge in {max_iter} iterations at {params}")


def bethe_functional(nu, params):
    """ Phi(nu) in log-sum-exp form. """
    q, d, beta, B = params.q, params.d, params.beta, params.B
    first = np.logaddexp(B + d * _log_tilt(beta, nu.a), math.log(q - 1) + d * _log_tilt(beta, nu.c))
    square_mass = nu.a ** 2 + (q - 1) * nu.c ** 2
    return float(first - 0.5 * d * _log_tilt(beta, square_mass))


# =============================================================================
# === Scalar Fixed-Point Equation ===
# =============================================================================

def scalar_F(r, params):
    """ F(r; beta, B) = B + (d-1) log((e^{beta+r} + q - 1)/(e^r + e^beta + q - 2)). """
    q, d, beta, B = params.q, params.d, params.beta, params.B
    r = np.asarray(r, dtype=float)
    num = np.logaddexp(beta + r, math.log(q - 1))
    den = np.logaddexp(r, _log_ebq2(beta, q))
    out = B + (d - 1) * (num - den)
    return float(out) if out.ndim == 0 else out


def scalar_F_prime(r, params):
    """ dF/dr as a difference of two logistic terms. """
    q, d, beta = params.q, params.d, params.beta
    return (d - 1) * (float(expit(beta + r - math.log(q - 1))) - float(expit(r - _log_ebq2(beta, q))))


def _F_at_minus_infinity(params):
    q, d, beta, B = params.q, params.d, params.beta, params.B
    return B + (d - 1) * (math.log(q - 1) - _log_ebq2(beta, q))


@lru_cache(maxsize=4096)
def _rho_pm(beta, q, d):
    a = math.exp(beta)
    A = a
    Bc = 2.0 * (q - 1) - (d - 2) * (a - 1.0) * (a + q - 1.0)
    C = (q - 1.0) * (a + q - 2.0)
    if Bc >= 0.0:
        return None
    disc = Bc * Bc - 4.0 * A * C
    if abs(disc) <= DISC_REL_TOL * Bc * Bc:
        disc = 0.0
    if disc < 0.0:
        return None
    x_big = (-Bc + math.sqrt(disc)) / (2.0 * A)
    x_small = C / (A * x_big)
    return math.log(x_small), math.log(x_big)


def rho_pm(beta, params):
    """
    Solutions rho_- <= rho_+ of dF/dr(r; beta, 0) = 1, or None when there are none.

    With x = e^r and a = e^beta, clearing denominators gives
    a x^2 + (2(q-1) - (d-2)(a-1)(a+q-1)) x + (q-1)(a+q-2) = 0.
    """
    return _rho_pm(float(beta), params.q, params.d)


def _discriminant_sign(beta, q, d):
    # Positive iff the quadratic in rho_pm has two positive roots.
    a = math.exp(beta)
    return ((d - 2) * (a - 1.0) * (a + q - 1.0) - 2.0 * (q - 1)
            - 2.0 * math.sqrt(a * (q - 1.0) * (a + q - 2.0)))


@lru_cache(maxsize=256)
def _beta_minus(q, d):
    hi = 1.0
    while _discriminant_sign(hi, q, d) <= 0.0:
        hi *= 2.0
        if hi > 64.0:
            raise BracketError(f"No upper bracket for beta_minus at q={q}, d={d}")
    root = optimize.bisect(_discriminant_sign, 0.0, hi, args=(q, d), xtol=1e-15, maxiter=400)
    logger.debug(f"beta_minus(q={q}, d={d}) = {root:.15g}")
    return root


def beta_minus(params):
    """ Smallest beta at which rho_pm exists (the discriminant vanishes). """
    return _beta_minus(params.q, params.d)


def _zero_field(params, beta):
    return Params(params.q, params.d, beta, 0.0)


def B_pm(beta, params):
    """ (B_-(beta), B_+(beta)) = (rho_+ - F(rho_+; beta, 0), rho_- - F(rho_-; beta, 0)). """
    rho = rho_pm(beta, params)
    if rho is None:
        raise ValueError(f"rho_pm does not exist at beta={beta} (q={params.q}, d={params.d})")
    rho_minus, rho_plus = rho
    zf = _zero_field(params, beta)
    return rho_plus - scalar_F(rho_plus, zf), rho_minus - scalar_F(rho_minus, zf)


def B_plus_global(params):
    """ Merge point B_+ of the three critical curves, B_-(beta_-) = B_+(beta_-). """
    bm = beta_minus(params)
    lo, hi = B_pm(bm, params)
    return max(0.0, 0.5 * (lo + hi))


def scalar_fixed_points(params):
    """
    All real roots of F(r) = r, ascending.

    F - r is monotone on (-inf, rho_-], [rho_-, rho_+] and [rho_+, inf), so
    each piece holds at most one root and is searched by bracketing.
    """
    def gap(r):
        return scalar_F(r, params) - r

    lo = _F_at_minus_infinity(params) - 1.0
    hi = params.B + (params.d - 1) * params.beta + 1.0
    cuts = [lo]
    rho = rho_pm(params.beta, params) if params.beta > 0 else None
    if rho is not None:
        cuts.extend(min(max(x, lo), hi) for x in rho)
    cuts.append(hi)

    roots = []
    for left, right in zip(cuts[:-1], cuts[1:]):
        if right <= left:
            continue
        g_left, g_right = gap(left), gap(right)
        if g_left == 0.0:
            roots.append(left)
        if g_right == 0.0:
            roots.append(right)
        if g_left * g_right < 0.0:
            roots.append(optimize.brentq(gap, left, right, xtol=ROOT_XTOL))
    roots.sort()
    unique = []
    for x in roots:
        if not unique or abs(x - unique[-1]) > 1e-11:
            unique.append(x)
    return unique


def fixed_point_r(kind, params):
    """ r_free (smallest non-negative root, exactly 0 at B=0) or r_1 (largest root). """
    if kind in ('free', Start.UNIFORM):
        if params.B == 0.0:
            return 0.0
        roots = [x for x in scalar_fixed_points(params) if x >= 0.0]
        if not roots:
            raise BracketError(f"No non-negative root of F(r)=r at {params}")
        return roots[0]
    if kind in ('wired', '1', Start.DELTA_1):
        if params.beta == 0.0:
            return params.B
        return scalar_fixed_points(params)[-1]
    raise ValueError(f"Unknown fixed-point kind '{kind}'")


def fixed_point_measure(kind, params):
    return SymmetricMeasure.from_r(fixed_point_r(kind, params), params.q)


def _phi_gap(beta, B, q, d):
    p = Params(q, d, beta, B)
    return (bethe_functional(fixed_point_measure('wired', p), p)
            - bethe_functional(fixed_point_measure('free', p), p))


# =============================================================================
# === Critical Curves ===
# =============================================================================

def _invert_decreasing(fn, target, lo, hi, label):
    f_lo, f_hi = fn(lo) - target, fn(hi) - target
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0.0:
        raise BracketError(f"{label}: no sign change on [{lo}, {hi}] (values {f_lo:.3e}, {f_hi:.3e})")
    return optimize.brentq(lambda b: fn(b) - target, lo, hi, xtol=Config.CURVE_TOL * 1e-2)


@lru_cache(maxsize=256)
def _zero_field_threshold(q, d, which):
    """ beta at which B_-(beta) (which=0) or B_+(beta) (which=1) reaches 0. """
    p = Params(q, d, 0.0, 0.0)
    bm = _beta_minus(q, d)
    if q == 2:
        return bm
    if which == 1:
        # B_+ touches 0 without crossing, where dF/dr(0; beta, 0) = 1.
        return math.log((q + d - 2.0) / (d - 2.0))

    def curve(beta):
        return B_pm(beta, p)[0]

    hi = bm + 1.0
    while curve(hi) > 0.0:
        hi = bm + 2.0 * (hi - bm)
        if hi > 200.0:
            raise BracketError(f"No zero crossing of B_- at q={q}, d={d}")
    return _invert_decreasing(curve, 0.0, bm, hi, "B_- zero crossing")


def _curve_inverse(B, params, which):
    q, d = params.q, params.d
    B_top = B_plus_global(params)
    if B < 0.0 or B > B_top + 1e-12:
        raise ValueError(f"B={B} outside [0, B_+={B_top}] for q={q}, d={d}")
    bm = _beta_minus(q, d)
    if B >= B_top:
        return bm
    if B == 0.0:
        return _zero_field_threshold(q, d, which)
    label = 'beta_free' if which == 0 else 'beta_plus'
    return _invert_decreasing(lambda b: B_pm(b, params)[which], B, bm,
                              _zero_field_threshold(q, d, which), label)


def beta_free(B, params):
    """ Inverse of B_- on [beta_-, beta_free(0)]. """
    return _curve_inverse(float(B), params, 0)


def beta_plus(B, params):
    """ Inverse of B_+ on [beta_-, beta_plus(0)]. """
    return _curve_inverse(float(B), params, 1)


def beta_c_zero_closed_form(params):
    q, d = params.q, params.d
    if q == 2:
        return math.log(d / (d - 2.0))
    return math.log((q - 2.0) / ((q - 1.0) ** (1.0 - 2.0 / d) - 1.0))


def beta_c(B, params):
    """
    Critical coupling where Phi(nu_1) = Phi(nu_free), bracketed by
    [beta_free(B), beta_plus(B)]. For q = 2 the region collapses onto B = 0
    and beta_c(0) = beta_-.
    """
    q, d = params.q, params.d
    B = float(B)
    B_top = B_plus_global(params)
    if B < 0.0 or (B >= B_top and not (q == 2 and B == 0.0)):
        raise ValueError(f"B={B} outside [0, B_+={B_top}) for q={q}, d={d}")
    if q == 2:
        return _beta_minus(q, d)

    lo, hi = beta_free(B, params), beta_plus(B, params)
    width = hi - lo
    if width <= 0.0:
        raise BracketError(f"Empty bracket [{lo}, {hi}] for beta_c at B={B}")
    # Endpoints are tangencies where one root is a double root; step inside.
    for shrink in (1e-10, 1e-8, 1e-6, 1e-4):
        a, b = lo + shrink * width, hi - shrink * width
        g_a, g_b = _phi_gap(a, B, q, d), _phi_gap(b, B, q, d)
        if g_a < 0.0 < g_b:
            return optimize.brentq(_phi_gap, a, b, args=(B, q, d), xtol=1e-13)
    raise BracketError(f"Phi(nu_1) - Phi(nu_free) has no sign change on [{lo}, {hi}] at B={B}")


def classify_region(params, unique_tol=1e-9, critical_tol=None):
    """
    Classifies (beta, B) into UNIQUE, R_FREE, R_C or R_1.

    Args:
        params (Params): Parameter point.
        unique_tol (float): Sup-norm distance below which nu_free = nu_1.
        critical_tol (float): |Phi(nu_1) - Phi(nu_free)| treated as equality.

    Returns:
        PhasePoint: Region tag plus both fixed points and their Phi values.
    """
    critical_tol = Config.CRITICAL_TOL if critical_tol is None else critical_tol
    nu_free = fixed_point_measure('free', params)
    nu_1 = fixed_point_measure('wired', params)
    phi_free = bethe_functional(nu_free, params)
    phi_1 = bethe_functional(nu_1, params)
    if nu_free.distance(nu_1) <= unique_tol:
        region = Region.UNIQUE
    elif abs(phi_1 - phi_free) <= critical_tol:
        region = Region.R_C
    elif phi_1 > phi_free:
        region = Region.R_1
    else:
        region = Region.R_FREE
    return PhasePoint(params, region, nu_free, nu_1, phi_free, phi_1)


def trace_critical_curves(params, n_points=41):
    """
    Samples beta_free, beta_c and beta_plus on an even grid of B in [0, B_+].

    Per-B failures are recorded (value NaN) instead of aborting the trace.
    """
    q, d = params.q, params.d
    B_top = B_plus_global(params)
    bm = beta_minus(params)
    Bs = np.linspace(0.0, B_top, n_points) if B_top > 0.0 else np.zeros(1)
    bf, bc, bp = (np.full(Bs.size, np.nan) for _ in range(3))
    failures = []
    logger.info(f"Tracing critical curves for q={q}, d={d}: B_+={B_top:.10g}, beta_-={bm:.10g}, {Bs.size} points")
    for i, B in enumerate(Bs):
        try:
            if B >= B_top:
                bf[i] = bc[i] = bp[i] = bm
                if q == 2:
                    bc[i] = beta_c(0.0, params)
                continue
            bf[i] = beta_free(B, params)
            bp[i] = beta_plus(B, params)
            bc[i] = beta_c(B, params)
        except (BracketError, ConvergenceError, ValueError) as e:
            logger.warning(f"Curve trace failed at B={B:.6g} (q={q}, d={d}): {e}")
            failures.append({'B': float(B), 'error': str(e)})
    return CriticalCurves(q, d, B_top, bm, Bs, bf, bc, bp, failures)


def region_scan(params, betas, Bs, **kwargs):
    """ classify_region over the product grid betas x Bs (beta varies fastest). """
    points = []
    for B in Bs:
        for beta in betas:
            points.append(classify_region(params.replace(beta=float(beta), B=float(B)), **kwargs))
    return points


def _neighbourhood_in(params, region, margin):
    """ True iff params and its four axis neighbours at distance margin all classify as region. """
    shifts = ((0.0, 0.0), (-margin, 0.0), (margin, 0.0), (0.0, -margin), (0.0, margin))
    for db, dB in shifts:
        p = params.replace(beta=params.beta + db, B=params.B + dB)
        if classify_region(p).region is not region:
            return False
    return True


def sample_region_points(params, region, n, rng, margin=1e-3, max_draws=None):
    """
    Draws n points of one region by rejection, at distance >= margin from its boundary.

    UNIQUE, R_FREE and R_1 points are uniform on a (beta, B) box around the
    non-uniqueness window with B >= 2 margin, kept only when the point and its
    four margin-neighbours share the region. R_C points sit on beta_c(B) for
    uniform B, kept when beta_c -/+ margin falls in R_FREE / R_1.

    Args:
        params (Params): Supplies (q, d); beta and B are ignored.
        region (Region | str): Target region.
        n (int): Number of points.
        rng (np.random.Generator): Source of the uniform draws.
        margin (float): Boundary exclusion.
        max_draws (int): Draw budget, 200 n by default.

    Returns:
        list[Params]: The accepted points, in draw order.
    """
    region = Region(region)
    q, d = params.q, params.d
    max_draws = 200 * n if max_draws is None else int(max_draws)
    base = Params(q, d, 0.0, 0.0)
    B_top = B_plus_global(base)
    if region is not Region.UNIQUE and (q == 2 or B_top <= 4.0 * margin):
        raise ValueError(f"Region {region.value} is too thin to sample at q={q}, d={d} (B_+={B_top:.3g})")
    beta_top = _zero_field_threshold(q, d, 1) + margin
    if region is Region.UNIQUE:
        beta_box, B_box = (margin, beta_top + 1.0), (2.0 * margin, max(2.0 * B_top, 0.5))
    else:
        beta_box, B_box = (_beta_minus(q, d), beta_top), (2.0 * margin, B_top)

    points, draws = [], 0
    while len(points) < n:
        if draws >= max_draws:
            raise ConvergenceError(f"Accepted {len(points)}/{n} {region.value} points in {draws} draws "
                                   f"at q={q}, d={d}")
        draws += 1
        if region is Region.R_C:
            B = float(rng.uniform(2.0 * margin, B_top - 2.0 * margin))
            try:
                p = base.replace(beta=beta_c(B, base), B=B)
            except BracketError:
                continue
            below = classify_region(p.replace(beta=p.beta - margin)).region
            above = classify_region(p.replace(beta=p.beta + margin)).region
            if below is Region.R_FREE and above is Region.R_1:
                points.append(p)
            continue
        p = base.replace(beta=float(rng.uniform(*beta_box)), B=float(rng.uniform(*B_box)))
        if _neighbourhood_in(p, region, margin):
            points.append(p)
    logger.debug(f"Sampled {n} {region.value} points at q={q}, d={d} in {draws} draws")
    return points


# =============================================================================
# === Percolation Constants ===
# =============================================================================

def percolation_factor(params):
    """ (pi, m): open probability of a free-RCM tree edge and branching number (d-1) pi. """
    p = params.p_edge
    pi = p / (p + params.q * (1.0 - p))
    return pi, (params.d - 1) * pi


# =============================================================================
# === Messages and Psi Functionals ===
# =============================================================================

def message_b(nu):
    return nu.b


def wh_bp(messages, x, params):
    """ Message recursion in the b-coordinate; fixes b_free and b_wired at x = B. """
    s = np.asarray(messages, dtype=float)
    g, q = params.gamma, params.q
    log_up = x + np.log1p((q - 1) * g * s).sum()
    log_down = np.log1p(-g * s).sum()
    # (e^up - e^down) / (e^up + (q-1) e^down)
    return float((1.0 - math.exp(log_down - log_up)) / (1.0 + (q - 1) * math.exp(log_down - log_up)))


def _check_messages(b, params, need_even):
    arr = np.asarray(b, dtype=float)
    if arr.shape[-1] != params.d:
        raise ValueError(f"Expected {params.d} messages, got {arr.shape[-1]}")
    if need_even and params.d % 2:
        raise ValueError(f"Edge functionals need even d, got d={params.d}")
    return arr


def log_psi_vx(b, params):
    arr = _check_messages(b, params, need_even=False)
    g, q, d = params.gamma, params.q, params.d
    up = params.B + np.log1p((q - 1) * g * arr).sum(axis=-1)
    down = math.log(q - 1) + np.log1p(-g * arr).sum(axis=-1)
    return np.logaddexp(up, down) - d * math.log1p(-g)


def log_psi_e(b, params):
    arr = _check_messages(b, params, need_even=True)
    g, q, d = params.gamma, params.q, params.d
    pairs = arr[..., 0::2] * arr[..., 1::2]
    return np.log1p((q - 1) * g * pairs).sum(axis=-1) - 0.5 * d * math.log1p(-g)


@lru_cache(maxsize=16)
def perfect_matchings(d):
    """ All perfect matchings of range(d) as index permutations (pairs adjacent). """
    def build(items):
        if not items:
            yield ()
            return
        first, rest = items[0], items[1:]
        for i, partner in enumerate(rest):
            for tail in build(rest[:i] + rest[i + 1:]):
                yield (first, partner) + tail
    return np.array(list(build(tuple(range(d)))), dtype=np.int64)


def log_psi_e_sym(b, params):
    """
    log of the S_d-average of Psi^e. Psi^e depends on the permutation only
    through the perfect matching it induces, so the average runs over the
    (d-1)!! matchings.
    """
    arr = _check_messages(b, params, need_even=True)
    matchings = perfect_matchings(params.d)
    values = np.stack([log_psi_e(arr[..., m], params) for m in matchings], axis=-1)
    return logsumexp(values, axis=-1) - math.log(len(matchings))


def log_psi_sym(b, params):
    return log_psi_vx(b, params) - log_psi_e_sym(b, params)


def psi_vx(b, params):
    return float(np.exp(log_psi_vx(b, params)))


def psi_e(b, params):
    return float(np.exp(log_psi_e(b, params)))


def psi_e_sym(b, params):
    return float(np.exp(log_psi_e_sym(b, params)))


def psi_sym(b, params):
    return float(np.exp(log_psi_sym(b, params)))


def lambda_delta_gap(delta, params, resolution=41):
    """
    Returns max{Phi(nu_free), Phi(nu_1)} minus the grid supremum of
    log Psi^sym over vectors in [b_free, b_wired]^d with at least two
    coordinates in [b_free + delta, b_wired - delta].

    Psi^sym is symmetric, so only sorted grid vectors are evaluated.
    """
    if delta <= 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    if params.d % 2:
        raise ValueError(f"lambda_delta_gap needs even d, got d={params.d}")
    nu_free = fixed_point_measure('free', params)
    nu_1 = fixed_point_measure('wired', params)
    b_lo, b_hi = nu_free.b, nu_1.b
    grid = np.linspace(b_lo, b_hi, resolution)
    inner = (grid >= b_lo + delta) & (grid <= b_hi - delta)
    if inner.sum() < 2:
        raise ValueError(f"Grid of {resolution} points is too coarse for delta={delta} on [{b_lo:.6g}, {b_hi:.6g}]")

    combos = np.array(list(itertools.combinations_with_replacement(range(resolution), params.d)), dtype=np.int64)
    keep = inner[combos].sum(axis=1) >= 2
    vectors = grid[combos[keep]]
    sup = float(np.max(log_psi_sym(vectors, params)))
    wh_phi = max(bethe_functional(nu_free, params), bethe_functional(nu_1, params))
    logger.debug(f"Lambda_delta sup={sup:.12g} vs Phi={wh_phi:.12g} over {vectors.shape[0]} vectors")
    return wh_phi - sup


# =============================================================================
# === Thermodynamic Predictions ===
# =============================================================================

def _measure_for(ddagger, params):
    if ddagger not in ('free', 'wired'):
        raise ValueError(f"ddagger must be 'free' or 'wired', got {ddagger!r}")
    return fixed_point_measure(ddagger, params)


def internal_energy_prediction(ddagger, params):
    """ Expected number of root neighbors sharing the root's color, d e^b S/((e^b - 1)S + 1). """
    nu = _measure_for(ddagger, params)
    S = nu.a ** 2 + (params.q - 1) * nu.c ** 2
    return params.d * math.exp(params.beta + math.log(S) - _log_tilt(params.beta, S))


def magnetization_prediction(ddagger, params):
    """ Root probability of color 1, which equals dPhi/dB at the fixed point. """
    nu = _measure_for(ddagger, params)
    d, beta = params.d, params.beta
    log_ratio = params.B + d * (_log_tilt(beta, nu.a) - _log_tilt(beta, nu.c))
    return float(expit(log_ratio - math.log(params.q - 1)))


def derivative_residuals(ddagger, params, h=1e-5):
    """
    Relative errors of central differences of Phi(nu_ddagger) against the
    predictions: (|2 dPhi/dbeta - U| / |U|, |dPhi/dB - M| / |M|).

    The field entry is None when B < h; the fixed point is followed along its
    own branch, so the caller keeps params away from tangencies.
    """
    def phi(p):
        return bethe_functional(_measure_for(ddagger, p), p)

    u = internal_energy_prediction(ddagger, params)
    lo, hi = params.replace(beta=max(params.beta - h, 0.0)), params.replace(beta=params.beta + h)
    slope = (phi(hi) - phi(lo)) / (hi.beta - lo.beta)
    beta_rel = abs(2.0 * slope - u) / abs(u)
    field_rel = None
    if params.B >= h:
        m = magnetization_prediction(ddagger, params)
        slope = (phi(params.replace(B=params.B + h)) - phi(params.replace(B=params.B - h))) / (2.0 * h)
        field_rel = abs(slope - m) / abs(m)
    return beta_rel, field_rel


def _phi_at_r(r, params):
    return bethe_functional(SymmetricMeasure.from_r(r, params.q), params)


def psi_minus(beta, params):
    """ Phi(r_1) - Phi(r_free) along B = B_-(beta), where r_1 = rho_+ is tangent. """
    B_minus, _ = B_pm(beta, params)
    p = params.replace(beta=float(beta), B=max(B_minus, 0.0))
    _, rho_plus = rho_pm(beta, params)
    r_free = fixed_point_r('free', p)
    return _phi_at_r(rho_plus, p) - _phi_at_r(r_free, p)


def psi_plus(beta, params):
    """ Phi(r_1) - Phi(r_free) along B = B_+(beta), where r_free = rho_- is tangent. """
    _, B_plus_beta = B_pm(beta, params)
    p = params.replace(beta=float(beta), B=max(B_plus_beta, 0.0))
    rho_minus, _ = rho_pm(beta, params)
    r_1 = scalar_fixed_points(p)[-1]
    return _phi_at_r(r_1, p) - _phi_at_r(rho_minus, p)

# --- END OF FILE: analysis/bethe.py ---
