"""Moduli of continuity as first-class values.

A modulus is a continuous, strictly increasing function ``omega`` on an
interval ``[0, domain_cap]`` with ``omega(0) = 0``.  This module provides
the concrete kinds (Hoelder, HoelderLog, Tabulated, Product), comparison
and concavity diagnostics, the product defect of a family, a
submultiplicativity scan, empirical moduli of sampled functions, and the
consistency-ratio scan for geometric block sequences.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    EmptyGrid,
    GridTooCoarse,
    InternalCheckError,
    OutOfDomain,
    Overflow,
    PreconditionViolated,
    ZeroT,
)

__all__ = [
    "Modulus",
    "Hoelder",
    "HoelderLog",
    "Tabulated",
    "Product",
    "Comparison",
    "ConcavityReport",
    "ModulusFamily",
    "VanishingReport",
    "ConsistencySequences",
    "dyadic_grid",
    "dyadic_pair_grid",
    "check_concave_doubling",
    "compare",
    "submultiplicativity_constant",
    "empirical_modulus",
    "fit_hoelder_exponent",
    "hoelder_log_capped_table",
    "consistency_sequences",
    "modulus_to_dict",
    "modulus_from_dict",
]

_SLACK = 1e-12


# ---------------------------------------------------------------------------
# modulus kinds


class Modulus:
    """Base class: strictly increasing continuous omega with omega(0)=0."""

    #: largest argument at which the modulus may be evaluated
    domain_cap: float = 1.0
    #: False for degenerate tables (e.g. empirical modulus of a constant)
    strictly_increasing: bool = True

    def _raw(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value(self, t: float) -> float:
        """Evaluate at a scalar t in [0, domain_cap]."""
        if not (0.0 <= t <= self.domain_cap):
            raise OutOfDomain(
                f"t={t!r} outside [0, {self.domain_cap!r}] for {self!r}"
            )
        if t == 0.0:
            return 0.0
        return float(self._raw(np.asarray([t], dtype=float))[0])

    def map(self, ts: Iterable[float]) -> np.ndarray:
        """Vectorized evaluation with the same domain checks as value()."""
        arr = np.asarray(list(ts) if not isinstance(ts, np.ndarray) else ts,
                         dtype=float)
        if arr.size == 0:
            return np.zeros(0)
        if np.any(arr < 0.0) or np.any(arr > self.domain_cap + 0.0):
            bad = arr[(arr < 0.0) | (arr > self.domain_cap)][0]
            raise OutOfDomain(
                f"t={bad!r} outside [0, {self.domain_cap!r}] for {self!r}"
            )
        out = np.zeros_like(arr)
        pos = arr > 0.0
        if np.any(pos):
            out[pos] = self._raw(arr[pos])
        return out


@dataclass(frozen=True)
class Hoelder(Modulus):
    """omega(t) = t**alpha with alpha in (0, 1]."""

    alpha: float

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha <= 1.0):
            raise PreconditionViolated(
                f"Hoelder exponent must lie in (0, 1], got {self.alpha!r}"
            )

    @property
    def domain_cap(self) -> float:  # type: ignore[override]
        return 1.0

    def _raw(self, t: np.ndarray) -> np.ndarray:
        return t ** self.alpha


@dataclass(frozen=True)
class HoelderLog(Modulus):
    """omega(t) = t**alpha * log(1/t)**eps with alpha in (0,1), eps >= 0.

    The formula is strictly increasing exactly up to its argmax
    exp(-eps/alpha), which is therefore the domain cap (cap 1.0 when
    eps = 0, where the formula degenerates to a pure Hoelder modulus).
    """

    alpha: float
    eps: float

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise PreconditionViolated(
                f"HoelderLog exponent must lie in (0, 1), got {self.alpha!r}"
            )
        if self.eps < 0.0:
            raise PreconditionViolated(
                f"HoelderLog log power must be >= 0, got {self.eps!r}"
            )

    @property
    def domain_cap(self) -> float:  # type: ignore[override]
        if self.eps == 0.0:
            return 1.0
        return math.exp(-self.eps / self.alpha)

    def _raw(self, t: np.ndarray) -> np.ndarray:
        if self.eps == 0.0:
            return t ** self.alpha
        return t ** self.alpha * np.log(1.0 / t) ** self.eps


@dataclass(frozen=True)
class Tabulated(Modulus):
    """Piecewise-linear modulus through knots ((0,0) is implied).

    ``strict=False`` admits non-decreasing values; it marks degenerate
    tables such as the empirical modulus of a constant function.
    """

    ts: tuple
    values: tuple
    strict: bool = True

    def __post_init__(self) -> None:
        ts = tuple(float(t) for t in self.ts)
        vs = tuple(float(v) for v in self.values)
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "values", vs)
        if len(ts) != len(vs) or len(ts) == 0:
            raise PreconditionViolated("tabulated modulus needs matching, nonempty knots")
        if ts[0] == 0.0:
            if vs[0] != 0.0:
                raise PreconditionViolated("a knot at t=0 must carry value 0")
            ts, vs = ts[1:], vs[1:]
            object.__setattr__(self, "ts", ts)
            object.__setattr__(self, "values", vs)
            if not ts:
                raise PreconditionViolated("tabulated modulus needs a knot with t > 0")
        arr_t = np.asarray(ts)
        arr_v = np.asarray(vs)
        if np.any(arr_t <= 0.0) or np.any(arr_t > 1.0):
            raise PreconditionViolated("knot abscissae must lie in (0, 1]")
        if np.any(np.diff(arr_t) <= 0.0):
            raise PreconditionViolated("knot abscissae must be strictly increasing")
        if np.any(arr_v < 0.0):
            raise PreconditionViolated("knot values must be >= 0")
        if self.strict:
            full = np.concatenate([[0.0], arr_v])
            if np.any(np.diff(full) <= 0.0):
                raise PreconditionViolated(
                    "knot values must be strictly increasing (or pass strict=False)"
                )
            object.__setattr__(self, "strictly_increasing", True)
        else:
            full = np.concatenate([[0.0], arr_v])
            if np.any(np.diff(full) < 0.0):
                raise PreconditionViolated("knot values must be non-decreasing")
            object.__setattr__(
                self, "strictly_increasing", bool(np.all(np.diff(full) > 0.0))
            )

    @property
    def domain_cap(self) -> float:  # type: ignore[override]
        return self.ts[-1]

    def _raw(self, t: np.ndarray) -> np.ndarray:
        xs = np.concatenate([[0.0], np.asarray(self.ts)])
        ys = np.concatenate([[0.0], np.asarray(self.values)])
        return np.interp(t, xs, ys)


@dataclass(frozen=True)
class Product(Modulus):
    """Pointwise product of moduli; domain cap is the min of the factors'."""

    factors: tuple

    def __post_init__(self) -> None:
        facs = tuple(self.factors)
        object.__setattr__(self, "factors", facs)
        if len(facs) == 0:
            raise PreconditionViolated("product modulus needs at least one factor")
        for f in facs:
            if not isinstance(f, Modulus):
                raise PreconditionViolated(f"product factor {f!r} is not a modulus")
        object.__setattr__(
            self, "strictly_increasing",
            all(f.strictly_increasing for f in facs),
        )

    @property
    def domain_cap(self) -> float:  # type: ignore[override]
        return min(f.domain_cap for f in self.factors)

    def _raw(self, t: np.ndarray) -> np.ndarray:
        out = np.ones_like(t)
        for f in self.factors:
            out = out * f._raw(t)
        return out


# ---------------------------------------------------------------------------
# serde


def modulus_to_dict(m: Modulus) -> dict:
    if isinstance(m, Hoelder):
        return {"kind": "hoelder", "alpha": m.alpha}
    if isinstance(m, HoelderLog):
        return {"kind": "hoelder_log", "alpha": m.alpha, "eps": m.eps}
    if isinstance(m, Tabulated):
        d: dict = {"kind": "tabulated",
                   "points": [[t, v] for t, v in zip(m.ts, m.values)]}
        if not m.strict:
            d["strict"] = False
        return d
    if isinstance(m, Product):
        return {"kind": "product", "factors": [modulus_to_dict(f) for f in m.factors]}
    raise PreconditionViolated(f"cannot serialize modulus {m!r}")


def modulus_from_dict(d: dict) -> Modulus:
    try:
        kind = d["kind"]
    except (TypeError, KeyError):
        raise PreconditionViolated(f"modulus dict needs a 'kind': {d!r}") from None
    if kind == "hoelder":
        return Hoelder(float(d["alpha"]))
    if kind == "hoelder_log":
        return HoelderLog(float(d["alpha"]), float(d["eps"]))
    if kind == "tabulated":
        pts = d["points"]
        return Tabulated(tuple(p[0] for p in pts), tuple(p[1] for p in pts),
                         strict=bool(d.get("strict", True)))
    if kind == "product":
        return Product(tuple(modulus_from_dict(f) for f in d["factors"]))
    raise PreconditionViolated(f"unknown modulus kind {kind!r}")


# ---------------------------------------------------------------------------
# grids


def dyadic_grid(k_min: int = 1, k_max: int = 40, scale: float = 1.0,
                cap: float | None = None) -> np.ndarray:
    """Points scale * 2**-k for k = k_min..k_max, largest first,
    filtered to lie at or below cap when one is given."""
    ks = np.arange(k_min, k_max + 1, dtype=float)
    pts = scale * 2.0 ** (-ks)
    if cap is not None:
        pts = pts[pts <= cap]
    if pts.size == 0:
        raise EmptyGrid("dyadic grid is empty under the requested cap")
    return pts


def dyadic_pair_grid(k_max: int = 20, cap: float | None = None) -> list:
    """All pairs (2**-k1, 2**-k2), k in 1..k_max, both entries <= cap."""
    pts = dyadic_grid(1, k_max, cap=cap)
    return [(float(a), float(b)) for a in pts for b in pts]


# ---------------------------------------------------------------------------
# concavity / doubling


@dataclass(frozen=True)
class ConcavityReport:
    concave: bool
    doubling_ok: bool
    worst_doubling_ratio: float
    grid_size: int


def check_concave_doubling(m: Modulus, grid: Iterable[float] | None = None
                           ) -> ConcavityReport:
    """Midpoint-concavity and doubling scan on a grid inside (0, cap/2].

    Concavity check: omega((s+t)/2) >= (omega(s)+omega(t))/2 for all grid
    pairs.  Doubling check: omega(2t) <= 2 omega(t), with the worst ratio
    omega(2t) / (2 omega(t)) reported.
    """
    if grid is None:
        grid = dyadic_grid(1, 40, cap=m.domain_cap / 2.0)
    g = np.asarray(sorted(set(float(t) for t in grid)))
    if g.size == 0:
        raise EmptyGrid("concavity scan needs a nonempty grid")
    if np.any(g <= 0.0) or np.any(g > m.domain_cap / 2.0):
        raise OutOfDomain("concavity grid must lie in (0, domain_cap/2]")
    vals = m.map(g)
    mids = (g[:, None] + g[None, :]) / 2.0
    mid_vals = m.map(mids.ravel()).reshape(mids.shape)
    pair_means = (vals[:, None] + vals[None, :]) / 2.0
    concave = bool(np.all(mid_vals >= pair_means - _SLACK))
    doubled = m.map(2.0 * g)
    ratios = doubled / (2.0 * vals)
    doubling_ok = bool(np.all(ratios <= 1.0 + _SLACK))
    return ConcavityReport(concave, doubling_ok, float(np.max(ratios)), int(g.size))


# ---------------------------------------------------------------------------
# comparison


class Comparison(Enum):
    STRONGER = "stronger"
    WEAKER = "weaker"
    INCOMPARABLE = "incomparable"


def compare(m1: Modulus, m2: Modulus, delta: float) -> Comparison:
    """Order m1 against m2 on the grid delta * 2**-k, k = 1..40.

    STRONGER means m1 <= m2 everywhere on the grid (a function admitting m1
    also admits m2 near 0); ties count toward STRONGER, so equal moduli
    compare as STRONGER in both argument orders.
    """
    if not (0.0 < delta <= min(m1.domain_cap, m2.domain_cap)):
        raise OutOfDomain(
            f"delta={delta!r} must lie in (0, min cap "
            f"{min(m1.domain_cap, m2.domain_cap)!r}]"
        )
    g = dyadic_grid(1, 40, scale=delta)
    v1 = m1.map(g)
    v2 = m2.map(g)
    le = bool(np.all(v1 <= v2 + _SLACK))
    ge = bool(np.all(v1 >= v2 - _SLACK))
    if le:
        return Comparison.STRONGER
    if ge:
        return Comparison.WEAKER
    return Comparison.INCOMPARABLE


# ---------------------------------------------------------------------------
# families and the product defect


@dataclass(frozen=True)
class VanishingReport:
    vanishing: bool
    non_increasing: bool
    final_value: float
    threshold: float
    grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class ModulusFamily:
    """A finite tuple of moduli omega_1..omega_d, d >= 2.

    The family defect is t -> prod_i omega_i(t) / t, the quantity whose
    decay to 0 drives every bound downstream.  The family's working domain
    cap is the smallest member cap.
    """

    members: tuple

    def __post_init__(self) -> None:
        mem = tuple(self.members)
        object.__setattr__(self, "members", mem)
        if len(mem) < 2:
            raise PreconditionViolated("a modulus family needs at least 2 members")
        for m in mem:
            if not isinstance(m, Modulus):
                raise PreconditionViolated(f"family member {m!r} is not a modulus")

    @property
    def d(self) -> int:
        return len(self.members)

    @property
    def domain_cap(self) -> float:
        return min(m.domain_cap for m in self.members)

    def defect(self, t: float) -> float:
        if t == 0.0:
            raise ZeroT("family defect is undefined at t = 0")
        if not (0.0 < t <= self.domain_cap):
            raise OutOfDomain(f"t={t!r} outside (0, {self.domain_cap!r}]")
        out = 1.0
        for m in self.members:
            out *= m.value(t)
        return out / t

    def defect_map(self, ts: Iterable[float]) -> np.ndarray:
        arr = np.asarray(list(ts) if not isinstance(ts, np.ndarray) else ts,
                         dtype=float)
        if np.any(arr == 0.0):
            raise ZeroT("family defect is undefined at t = 0")
        if np.any(arr < 0.0) or np.any(arr > self.domain_cap):
            raise OutOfDomain("defect grid must lie in (0, domain cap]")
        out = np.ones_like(arr)
        for m in self.members:
            out *= m.map(arr)
        return out / arr

    def vanishing_defect(self, threshold: float = 1e-3,
                         grid: Iterable[float] | None = None) -> VanishingReport:
        """Defect decay report on a dyadic grid (finest point last).

        vanishing = values non-increasing along the grid (coarse to fine)
        and the finest value below the threshold.
        """
        if grid is None:
            g = dyadic_grid(1, 40, cap=self.domain_cap)
        else:
            g = np.asarray(sorted((float(t) for t in grid), reverse=True))
            if g.size == 0:
                raise EmptyGrid("vanishing-defect scan needs a nonempty grid")
        vals = self.defect_map(g)
        non_inc = bool(np.all(np.diff(vals) <= _SLACK))
        final = float(vals[-1])
        return VanishingReport(
            vanishing=bool(non_inc and final < threshold),
            non_increasing=non_inc,
            final_value=final,
            threshold=threshold,
            grid=g,
            values=vals,
        )


def submultiplicativity_constant(defect: Callable[[float], float] | Modulus,
                                 pairs: Sequence[tuple] | None = None,
                                 cap: float | None = None) -> float:
    """max over pairs of omega(t1*t2) / (omega(t1) * omega(t2)).

    ``defect`` is any scalar function (a Modulus works via .value).  Raises
    ZeroDivisionError if omega vanishes at a grid point.
    """
    if isinstance(defect, Modulus):
        fn = defect.value
        if cap is None:
            cap = defect.domain_cap
    else:
        fn = defect
        if cap is None:
            cap = 1.0
    if pairs is None:
        pairs = dyadic_pair_grid(20, cap=cap)
    if len(pairs) == 0:
        raise EmptyGrid("submultiplicativity scan needs a nonempty pair grid")
    worst = -math.inf
    for t1, t2 in pairs:
        denom = fn(t1) * fn(t2)
        if denom == 0.0:
            raise ZeroDivisionError(
                f"modulus vanishes at a grid point ({t1!r}, {t2!r})"
            )
        worst = max(worst, fn(t1 * t2) / denom)
    return worst


# ---------------------------------------------------------------------------
# empirical moduli


def empirical_modulus(samples: Iterable[float], t_grid: Iterable[float],
                      wrap: bool = True) -> Tabulated:
    """Empirical modulus of a uniformly sampled function.

    ``samples`` is either the value array ``[f(0), f(h), ...]`` or a list of
    ``(x, f(x))`` pairs on a uniform grid; h = 1/len (wrap=True, circle
    functions) or h = 1/(len-1) (wrap=False, functions on [0, 1]).  For each
    t in t_grid the value is the maximal oscillation max - min of f over any
    window of width t (w = floor(t/h) sample steps).  Requires h <= min(t).
    """
    from scipy.ndimage import maximum_filter1d, minimum_filter1d

    arr = np.asarray(list(samples) if not isinstance(samples, np.ndarray)
                     else samples, dtype=float)
    if arr.ndim == 2:
        if arr.shape[1] != 2:
            raise PreconditionViolated("sample pairs must be (x, f(x)) rows")
        order = np.argsort(arr[:, 0])
        xs, arr = arr[order, 0], arr[order, 1]
        gaps = np.diff(xs)
        if gaps.size and (np.max(gaps) - np.min(gaps)) > 1e-9:
            raise GridTooCoarse("sample abscissae must be uniformly spaced")
    tg = np.asarray(sorted(float(t) for t in t_grid))
    if arr.size < 2:
        raise EmptyGrid("empirical modulus needs at least 2 samples")
    if tg.size == 0:
        raise EmptyGrid("empirical modulus needs a nonempty t grid")
    if np.any(tg <= 0.0) or np.any(tg > 1.0):
        raise OutOfDomain("t grid must lie in (0, 1]")
    n = arr.size
    h = 1.0 / n if wrap else 1.0 / (n - 1)
    if h > float(tg[0]) + _SLACK:
        raise GridTooCoarse(
            f"sample spacing {h!r} exceeds the smallest t {float(tg[0])!r}"
        )
    mode = "wrap" if wrap else "nearest"
    values = []
    for t in tg:
        w = int(math.floor(t / h + _SLACK))
        size = w + 1
        hi = maximum_filter1d(arr, size=size, mode=mode)
        lo = minimum_filter1d(arr, size=size, mode=mode)
        values.append(float(np.max(hi - lo)))
    vals = np.asarray(values)
    if np.any(np.diff(vals) < -_SLACK):
        raise InternalCheckError("empirical oscillation must grow with the window")
    vals = np.maximum.accumulate(vals)
    return Tabulated(tuple(tg.tolist()), tuple(vals.tolist()), strict=False)


def fit_hoelder_exponent(tab, values: Iterable[float] | None = None) -> tuple:
    """Least-squares slope/intercept of log omega against log t.

    Accepts a Tabulated modulus or a pair of arrays; points with value 0
    are dropped (they carry no log information).
    """
    if isinstance(tab, Tabulated):
        ts = np.asarray(tab.ts)
        vs = np.asarray(tab.values)
    else:
        ts = np.asarray(list(tab), dtype=float)
        vs = np.asarray(list(values), dtype=float)
    keep = (vs > 0.0) & (ts > 0.0)
    ts, vs = ts[keep], vs[keep]
    if ts.size < 2:
        raise EmptyGrid("Hoelder fit needs at least 2 positive points")
    slope, intercept = np.polyfit(np.log(ts), np.log(vs), 1)
    return float(slope), float(intercept)


def hoelder_log_capped_table(alpha: float, eps: float,
                             knee: float | None = None,
                             k_max: int = 40) -> Tabulated:
    """Tabulated modulus: x**alpha log(1/x)**eps below a knee, tangent line
    above it, defined on all of (0, 1].

    The raw formula stops increasing at exp(-eps/alpha) < 1; the tangent
    extension keeps the table strictly increasing and concave up to 1, so
    it can price length values of any size.  The knee defaults to half the
    argmax.
    """
    base = HoelderLog(alpha, eps)
    argmax = base.domain_cap
    if knee is None:
        knee = argmax / 2.0
    if not (0.0 < knee < argmax):
        raise PreconditionViolated(
            f"knee {knee!r} must lie strictly inside (0, {argmax!r})"
        )
    ts = [t for t in dyadic_grid(1, k_max) if t < knee]
    ts = sorted(ts) + [knee]
    ts_arr = np.asarray(ts)
    vals = base.map(ts_arr)
    # tangent at the knee: slope of x^a log(1/x)^e
    L = math.log(1.0 / knee)
    slope = knee ** (alpha - 1.0) * L ** (eps - 1.0) * (alpha * L - eps)
    if slope <= 0.0:
        raise InternalCheckError("tangent slope must be positive below the argmax")
    knots_t = list(ts_arr) + [1.0]
    knots_v = list(vals) + [float(vals[-1] + slope * (1.0 - knee))]
    return Tabulated(tuple(float(t) for t in knots_t),
                     tuple(float(v) for v in knots_v), strict=True)


# ---------------------------------------------------------------------------
# consistency sequences


@dataclass(frozen=True)
class ConsistencySequences:
    """Scan of the consistency ratios of a geometric block sequence.

    For each member j and index m, with blocks X_{j,m} = floor(a**(alpha_j m))
    (or exact reals x_{j,m} = a**(-alpha_j m) when exact_powers):

        lhs_{j,m}  = omega_j(1 / prod_k X_{k,m})
        rhs_{j,m}  = prod_k omega_k(1 / X_{j,m})
        ratio      = lhs / rhs

    verified_constant is the max ratio over the emitted range; the family
    is consistent when that max is bounded with a non-increasing tail.
    """

    a: float
    m_values: np.ndarray
    X: np.ndarray          # shape (d, len(m_values)); ints, or reals 1/x in exact mode
    lhs: np.ndarray        # shape (d, len(m_values))
    rhs: np.ndarray
    ratios: np.ndarray
    verified_constant: float
    tail_non_increasing: bool
    exact_powers: bool

    @property
    def d(self) -> int:
        return int(self.X.shape[0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.d
        header = (["m"] + [f"X_{j}" for j in range(1, d + 1)]
                  + [f"lhs_{j}" for j in range(1, d + 1)]
                  + [f"rhs_{j}" for j in range(1, d + 1)]
                  + [f"ratio_{j}" for j in range(1, d + 1)])
        w.writerow(header)
        for i, m in enumerate(self.m_values):
            row = [int(m)]
            if self.exact_powers:
                row += [f"{self.X[j, i]:.17g}" for j in range(d)]
            else:
                row += [int(self.X[j, i]) for j in range(d)]
            row += [f"{self.lhs[j, i]:.17g}" for j in range(d)]
            row += [f"{self.rhs[j, i]:.17g}" for j in range(d)]
            row += [f"{self.ratios[j, i]:.17g}" for j in range(d)]
            w.writerow(row)
        return buf.getvalue()


def _member_alpha(m: Modulus) -> float:
    if isinstance(m, HoelderLog):
        return m.alpha
    if isinstance(m, Hoelder):
        return m.alpha
    raise PreconditionViolated(
        "consistency scan needs Hoelder or HoelderLog members"
    )


def consistency_sequences(family: ModulusFamily, a: float, M: int,
                          exact_powers: bool = False) -> ConsistencySequences:
    """Consistency-ratio scan for X_{j,m} = floor(a**(alpha_j m)), m <= M.

    Leading indices where some block is < 2 or where 1/X exceeds a member's
    domain cap are skipped.  With exact_powers=True the floor is dropped
    (x_{j,m} = a**(-alpha_j m)), the regime where pure-Hoelder families give
    ratio identically 1.
    """
    if a <= 1.0:
        raise PreconditionViolated(f"base a must exceed 1, got {a!r}")
    if M < 1:
        raise PreconditionViolated(f"M must be >= 1, got {M!r}")
    alphas = []
    for m in family.members:
        al = _member_alpha(m)
        if not (0.0 < al < 1.0):
            raise PreconditionViolated(
                f"consistency scan needs exponents in (0, 1), got {al!r}"
            )
        alphas.append(al)
    d = family.d
    cap_min = family.domain_cap
    if max(alphas) * M * math.log(a) > 62.0 * math.log(2.0):
        raise Overflow(
            f"a**(alpha*M) exceeds the integer range for M={M!r}; cap M"
        )

    ms = []
    cols = []  # per m: array of 1/X_{j,m} (the small lengths)
    Xcols = []
    for m in range(1, M + 1):
        if exact_powers:
            xs = np.asarray([a ** (-al * m) for al in alphas])
            if np.any(xs > cap_min):
                continue
            Xs = 1.0 / xs
        else:
            Xs = np.asarray([math.floor(a ** (al * m)) for al in alphas])
            if np.any(Xs < 2):
                continue
            xs = 1.0 / Xs
            if np.any(xs > cap_min):
                continue
        ms.append(m)
        cols.append(xs)
        Xcols.append(Xs)
    if not ms:
        raise PreconditionViolated(
            "no admissible index m <= M (all blocks too small for the caps)"
        )
    m_values = np.asarray(ms, dtype=int)
    X = np.stack(Xcols, axis=1)
    small = np.stack(cols, axis=1)  # (d, n)
    if not exact_powers:
        for j in range(d):
            if np.any(np.diff(X[j]) <= 0):
                raise PreconditionViolated(
                    "block rows must be strictly increasing; increase a"
                )

    n = m_values.size
    lhs = np.zeros((d, n))
    rhs = np.zeros((d, n))
    prod_small = np.prod(small, axis=0)  # 1 / prod_k X_{k,m}
    for j in range(d):
        lhs[j] = family.members[j].map(prod_small)
        col = np.ones(n)
        for k in range(d):
            col *= family.members[k].map(small[j])
        rhs[j] = col
    ratios = lhs / rhs
    verified = float(np.max(ratios))
    half = n // 2
    if half == 0 or n < 2:
        tail_ok = True
    else:
        tail_ok = bool(np.max(ratios[:, half:]) <= np.max(ratios[:, :half]) + _SLACK)
    return ConsistencySequences(
        a=float(a), m_values=m_values, X=X, lhs=lhs, rhs=rhs, ratios=ratios,
        verified_constant=verified, tail_non_increasing=tail_ok,
        exact_powers=exact_powers,
    )
