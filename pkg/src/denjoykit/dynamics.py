"""Circle diffeomorphisms, Denjoy-type constructions and distortion bounds.

All maps are represented by lifts F with F(x+1) = F(x) + 1 and positive
derivative.  The module provides rotation-number estimation, a concrete
wandering-interval construction with prescribed Hölder regularity of the
derivative, orbit/length extraction feeding the selection module's
LengthArray, empirical modulus constants of log Df, covering numbers, and
a checkable fixed-point certificate for compositions with controlled
distortion.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateDerivative,
    DistortionViolated,
    InternalCheckError,
    MassOverflow,
    NoCoverWithin,
    PrecisionLoss,
    PreconditionViolated,
)
from .moduli import Modulus
from .selection import LengthArray

__all__ = [
    "CircleDiffeo",
    "Rotation",
    "Analytic",
    "DenjoyMap",
    "Composition",
    "RotationNumberEstimate",
    "IntervalOrbit",
    "FixedPointCertificate",
    "continued_fraction_convergent",
    "circle_distance",
    "inverse_apply",
    "rotation_number",
    "denjoy_construct",
    "word_orbit",
    "rectangle_length_array",
    "commuting_defect",
    "omega_constant",
    "omega_constant_trend",
    "fixed_point_certificate",
    "minimal_cover_N",
    "diffeo_to_dict",
    "diffeo_from_dict",
]

_SLACK = 1e-12


def circle_distance(a, b):
    """Distance on the circle R/Z (scalar or array)."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 1.0
    out = np.minimum(d, 1.0 - d)
    return float(out) if out.ndim == 0 else out


def continued_fraction_convergent(coeffs: Sequence[int]) -> Fraction:
    """Convergent p/q of the continued fraction [a0; a1, a2, ...]."""
    if not coeffs:
        raise PreconditionViolated("need at least one coefficient")
    value = Fraction(int(coeffs[-1]))
    for a in reversed(coeffs[:-1]):
        value = int(a) + (Fraction(1, 1) / value if value != 0 else 0)
    return value


# ---------------------------------------------------------------------------
# diffeomorphism kinds


class CircleDiffeo:
    """Lift of an orientation-preserving circle diffeomorphism."""

    def apply(self, x):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError


@dataclass(frozen=True)
class Rotation(CircleDiffeo):
    """Rigid rotation lift x + rho; rho_exact keeps a rational value for
    exact covering arithmetic."""

    rho: float
    rho_exact: Fraction | None = None

    def __post_init__(self) -> None:
        if self.rho_exact is not None:
            object.__setattr__(self, "rho", float(self.rho_exact % 1))
        else:
            object.__setattr__(self, "rho", float(self.rho) % 1.0)

    def apply(self, x):
        return np.asarray(x, dtype=float) + self.rho

    def derivative(self, x):
        return np.ones_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Analytic(CircleDiffeo):
    """Lift x + alpha + eps*sin(2 pi x)/(2 pi), a diffeomorphism for |eps|<1."""

    alpha: float
    eps: float

    def __post_init__(self) -> None:
        if not abs(self.eps) < 1.0:
            raise DegenerateDerivative(
                f"|eps| = {abs(self.eps)!r} >= 1 kills the derivative"
            )

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        return x + self.alpha + self.eps * np.sin(2.0 * np.pi * x) / (2.0 * np.pi)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        return 1.0 + self.eps * np.cos(2.0 * np.pi * x)


class DenjoyMap(CircleDiffeo):
    """Diffeomorphism with a wandering interval, built by blowing up a
    rotation orbit into intervals.

    The circle is partitioned into pieces (inserted intervals and the
    gaps between them); each piece maps onto its target by the C^1 bump
    F(s) = target_left + len*(s + delta*(3s^2 - 2s^3)), whose endpoint
    derivative is exactly 1, so Df is continuous.  Inserted intervals
    target the next orbit slot bit-exactly; gap targets absorb the finite
    truncation defect (their delta is tiny).  See denjoy_construct.
    """

    def __init__(self, alpha: Fraction, tau: float, N: int,
                 piece_left: np.ndarray, piece_len: np.ndarray,
                 target_left: np.ndarray, target_len: np.ndarray,
                 labels: np.ndarray, inserted_mass: float) -> None:
        self.alpha = alpha
        self.tau = float(tau)
        self.N = int(N)
        self._pleft = piece_left
        self._plen = piece_len
        self._tleft = target_left
        self._tlen = target_len
        self._delta = (target_len - piece_len) / piece_len
        self._labels = labels  # label of piece 2i (interval pieces)
        self.inserted_mass = float(inserted_mass)
        idx = np.empty(2 * N + 1, dtype=np.int64)
        idx[labels + N] = np.arange(2 * N + 1)
        self._pos_of_label = idx

    @property
    def I0(self) -> tuple:
        """The designated wandering interval (left, length)."""
        return self.interval(0)

    def interval(self, n: int) -> tuple:
        """Position (left, length) of the inserted interval I_n, |n| <= N."""
        if not -self.N <= n <= self.N:
            raise PreconditionViolated(f"|n| must be at most {self.N}")
        i = 2 * int(self._pos_of_label[n + self.N])
        return float(self._pleft[i]), float(self._plen[i])

    def _locate(self, yf: np.ndarray):
        i = np.searchsorted(self._pleft, yf, side="right") - 1
        i = np.clip(i, 0, self._pleft.size - 1)
        s = (yf - self._pleft[i]) / self._plen[i]
        return i, s

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        base = np.floor(x)
        i, s = self._locate(x - base)
        z = self._tleft[i] + self._plen[i] * (
            s + self._delta[i] * s * s * (3.0 - 2.0 * s))
        out = base + z
        return float(out) if out.ndim == 0 else out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        i, s = self._locate(x - np.floor(x))
        D = 1.0 + self._delta[i] * 6.0 * s * (1.0 - s)
        return float(D) if D.ndim == 0 else D


@dataclass(frozen=True)
class Composition(CircleDiffeo):
    """Word over a generator list: letter k > 0 applies generators[k-1],
    letter -k its inverse; letters act left to right."""

    generators: tuple
    word: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "word", tuple(int(k) for k in self.word))
        for k in self.word:
            if k == 0 or abs(k) > len(self.generators):
                raise PreconditionViolated(f"letter {k} has no generator")

    def apply(self, x):
        y = np.asarray(x, dtype=float)
        for k in self.word:
            g = self.generators[abs(k) - 1]
            y = g.apply(y) if k > 0 else inverse_apply(g, y)
        return y

    def derivative(self, x):
        y = np.asarray(x, dtype=float)
        D = np.ones_like(y)
        for k in self.word:
            g = self.generators[abs(k) - 1]
            if k > 0:
                D = D * g.derivative(y)
                y = g.apply(y)
            else:
                y = inverse_apply(g, y)
                D = D / g.derivative(y)
        return D


def inverse_apply(f: CircleDiffeo, y, iters: int = 60):
    """Solve F(x) = y by monotone bisection (F a lift, so brackets shift
    by integers)."""
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    f0 = float(np.asarray(f.apply(0.0)))
    lo = np.floor(y - f0) - 1.0
    hi = lo + 3.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        val = np.asarray(f.apply(mid))
        take = val < y
        lo = np.where(take, mid, lo)
        hi = np.where(take, hi, mid)
    out = 0.5 * (lo + hi)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# rotation number


@dataclass(frozen=True)
class RotationNumberEstimate:
    estimate: float
    error_bound: float
    n: int
    x0: float


def rotation_number(f: CircleDiffeo, n: int, x0: float = 0.0
                    ) -> RotationNumberEstimate:
    """(F^n(x0) - x0)/n with the standard error bound 1/n."""
    if n < 1:
        raise PreconditionViolated("iteration count must be at least 1")
    x = float(x0)
    if isinstance(f, Rotation):
        x = x0 + n * f.rho
    else:
        for _ in range(n):
            x = float(np.asarray(f.apply(x)))
    return RotationNumberEstimate((x - x0) / n, 1.0 / n, n, float(x0))


# ---------------------------------------------------------------------------
# the wandering-interval construction


def _coerce_fraction(alpha) -> Fraction:
    if isinstance(alpha, Fraction):
        return alpha
    if isinstance(alpha, str):
        num, den = alpha.split("/")
        return Fraction(int(num), int(den))
    return Fraction(float(alpha))


def denjoy_construct(alpha, tau: float, N: int, total_mass: float = 0.5
                     ) -> tuple:
    """Circle diffeomorphism with wandering interval I0 and Hölder-tau
    derivative trend.

    Intervals of length l_n = c (|n|+2)^{-1/tau} are inserted at the exact
    rotation orbit {n*alpha} for |n| <= N (alpha a high-precision
    rational), with c chosen so the inserted intervals occupy exactly
    total_mass of the final unit circle; the map sends I_n onto I_{n+1}
    by a C^1 bump whose endpoint derivative is 1, and gaps move
    isometrically.  Returns (map, I0) with I0 = (left, length).
    """
    alpha = _coerce_fraction(alpha)
    if not 0.0 < tau < 1.0:
        raise PreconditionViolated(f"tau must lie in (0,1), got {tau!r}")
    if not 1 <= N <= 10 ** 5:
        raise PreconditionViolated("N must lie in 1..100000")
    if not 0.0 < total_mass:
        raise PreconditionViolated("inserted mass must be positive")
    K = 2
    # endpoint derivative bump stays positive iff the worst length ratio
    # (K/(K+1))^{1/tau} exceeds 1/3
    if (K / (K + 1.0)) ** (1.0 / tau) <= 1.0 / 3.0 + 1e-15:
        raise DegenerateDerivative(
            f"tau={tau!r} makes the bump derivative vanish; need "
            f"(2/3)^(1/tau) > 1/3, i.e. tau > {math.log(1.5)/math.log(3.0)!r}"
        )

    p, q = alpha.numerator % alpha.denominator, alpha.denominator
    if q <= 2 * N:
        raise PrecisionLoss(
            f"orbit of p/q with q={q} collides within |n| <= {N}"
        )
    ns = range(-N, N + 1)
    theta_num = [(n * p) % q for n in ns]
    order = sorted(range(2 * N + 1), key=theta_num.__getitem__)
    sorted_num = [theta_num[i] for i in order]
    labels = np.array([i - N for i in order], dtype=np.int64)
    # exact minimum gap (including the wrap-around gap) versus 1e-14
    gaps_num = [sorted_num[i + 1] - sorted_num[i]
                for i in range(len(sorted_num) - 1)]
    gaps_num.append(q - sorted_num[-1] + sorted_num[0])
    min_gap = min(gaps_num)
    if min_gap * 10 ** 14 < q:
        raise PrecisionLoss(
            f"minimum orbit gap {min_gap}/{q} is below 1e-14"
        )

    raw = (np.abs(np.arange(-N, N + 1, dtype=float)) + K) ** (-1.0 / tau)
    if total_mass >= 1.0:
        raise MassOverflow(
            f"inserted mass {total_mass!r} must stay below 1")
    # blowing up rescales the circle by 1/(1 + pre-insertion mass); pick
    # the pre-insertion mass so the inserted intervals occupy exactly
    # total_mass of the final unit circle
    pre_mass = total_mass / (1.0 - total_mass)
    c = pre_mass / math.fsum(raw)
    ell = c * raw  # ell[n + N] is the length of I_n on the base circle
    T = 1.0 + math.fsum(ell)
    lam_by_label = ell / T
    mass = math.fsum(lam_by_label)  # realized measure of the insertions

    M = 2 * N + 1
    theta_float = np.array([num / q for num in sorted_num], dtype=float)
    lam = lam_by_label[labels + N]
    prefix_lam = np.concatenate(([0.0], np.cumsum(lam)[:-1]))
    pos_left = theta_float / T + prefix_lam  # pos_left[0] = 0 (theta_0 = 0)
    pos_of_label = np.empty(M, dtype=np.int64)
    pos_of_label[labels + N] = np.arange(M)

    # target anchor of each interval: the next orbit slot, except that I_N
    # targets a fresh interval of equal length at the (untabled) point
    # {(N+1) alpha}, which lies inside a gap of the structure
    num_sp = ((N + 1) * p) % q
    isp = bisect.bisect_left(sorted_num, num_sp)
    if isp < len(sorted_num) and sorted_num[isp] == num_sp:
        raise PrecisionLoss("orbit point {(N+1)a} collides with the table")
    special_left = (num_sp / q) / T + float(np.cumsum(lam)[isp - 1]) \
        if isp > 0 else (num_sp / q) / T
    t_left_raw = np.empty(M)
    t_len = np.empty(M)
    for i in range(M):
        n = int(labels[i])
        if n < N:
            j = int(pos_of_label[n + 1 + N])
            t_left_raw[i] = pos_left[j]
            t_len[i] = lam[j]
        else:
            t_left_raw[i] = special_left
            t_len[i] = lam[i]
    # unwrap: targets advance in circular order starting at t_left_raw[0]
    t0 = t_left_raw[0]
    t_left = t_left_raw + (t_left_raw < t0).astype(float)
    if np.any(np.diff(t_left) <= 0.0):
        raise InternalCheckError("interval targets must preserve the order")

    # pieces alternate interval, gap; gap targets fill between interval
    # targets, absorbing the truncation defect (length about ell_N)
    piece_left = np.empty(2 * M)
    piece_len = np.empty(2 * M)
    target_left = np.empty(2 * M)
    target_len = np.empty(2 * M)
    piece_left[0::2] = pos_left
    piece_len[0::2] = lam
    gap_left = pos_left + lam
    gap_len = np.empty(M)
    gap_len[:-1] = pos_left[1:] - gap_left[:-1]
    gap_len[-1] = 1.0 - gap_left[-1]  # pos_left[0] = 0
    piece_left[1::2] = gap_left
    piece_len[1::2] = gap_len
    target_left[0::2] = t_left
    target_len[0::2] = t_len
    gt_left = t_left + t_len
    gt_len = np.empty(M)
    gt_len[:-1] = t_left[1:] - gt_left[:-1]
    gt_len[-1] = t0 + 1.0 - gt_left[-1]
    target_left[1::2] = gt_left
    target_len[1::2] = gt_len
    if np.any(piece_len <= 0.0) or np.any(target_len <= 0.0):
        raise PrecisionLoss(
            "a gap is too small to hold its image; increase the orbit gap "
            "margin (smaller N or larger denominator)"
        )
    delta = (target_len - piece_len) / piece_len
    min_D = float(np.min(1.0 + 1.5 * delta))
    if min_D <= 0.0:
        raise DegenerateDerivative(
            f"derivative bump reaches {min_D!r}; length profile too steep"
        )

    fmap = DenjoyMap(alpha, tau, N, piece_left, piece_len,
                     target_left, target_len, labels, mass)
    return fmap, fmap.I0


# ---------------------------------------------------------------------------
# orbits and length extraction


@dataclass(frozen=True)
class IntervalOrbit:
    """Images of an interval along the prefixes of a generator word."""

    word: tuple
    interval: tuple
    images: tuple          # (left mod 1, length) per prefix, prefix 0 = I
    wandering: bool

    @property
    def lengths(self) -> np.ndarray:
        return np.asarray([ln for _, ln in self.images])

    def to_json_dict(self) -> dict:
        return {
            "word": list(self.word),
            "interval": [float(self.interval[0]), float(self.interval[1])],
            "images": [[float(a), float(b)] for a, b in self.images],
            "wandering": bool(self.wandering),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "left", "length"])
        for n, (a, b) in enumerate(self.images):
            w.writerow([n, f"{a:.17g}", f"{b:.17g}"])
        return buf.getvalue()


def _push_interval(f: CircleDiffeo, left: float, length: float) -> tuple:
    a = float(np.asarray(f.apply(left)))
    b = float(np.asarray(f.apply(left + length)))
    return a, b - a


def _pairwise_disjoint(images: Sequence[tuple]) -> bool:
    norm = []
    for left, length in images:
        a = left % 1.0
        if a + length <= 1.0:
            norm.append((a, a + length))
        else:  # split a wrapping interval
            norm.append((a, 1.0))
            norm.append((0.0, a + length - 1.0))
    norm.sort()
    for (a1, b1), (a2, b2) in zip(norm, norm[1:]):
        if b1 > a2:
            return False
    return True


def word_orbit(generators: Sequence[CircleDiffeo], word: Sequence[int],
               I: tuple) -> IntervalOrbit:
    """Images of I under the prefixes of the word (letters act first to
    last); image n corresponds to the length-n prefix."""
    left, length = float(I[0]), float(I[1])
    if not 0.0 < length < 1.0:
        raise PreconditionViolated("interval length must lie in (0,1)")
    images = [(left % 1.0, length)]
    cur_left, cur_len = left, length
    for k in word:
        k = int(k)
        if k == 0 or abs(k) > len(generators):
            raise PreconditionViolated(f"letter {k} has no generator")
        g = generators[abs(k) - 1]
        if k > 0:
            cur_left, cur_len = _push_interval(g, cur_left, cur_len)
        else:
            a = float(inverse_apply(g, cur_left))
            b = float(inverse_apply(g, cur_left + cur_len))
            cur_left, cur_len = a, b - a
        images.append((cur_left % 1.0, cur_len))
    return IntervalOrbit(tuple(int(k) for k in word), (left, length),
                         tuple(images), _pairwise_disjoint(images))


def rectangle_length_array(generators: Sequence[CircleDiffeo],
                           dims: Sequence[int], I: tuple) -> LengthArray:
    """Lengths l_{i_1..i_d} = |f_1^{i_1}(f_2^{i_2}(... f_d^{i_d}(I)))|.

    Computed by dynamic programming along the axes, last generator first;
    for commuting generators the order is immaterial.
    """
    d = len(dims)
    if len(generators) != d:
        raise PreconditionViolated("one generator per axis required")
    lefts = np.empty(tuple(dims), dtype=float)
    lens = np.empty(tuple(dims), dtype=float)
    zero = (0,) * d

    lefts[zero], lens[zero] = float(I[0]), float(I[1])
    # fill axis d-1 first along the zero edge, then each axis in turn
    for axis in range(d - 1, -1, -1):
        g = generators[axis]
        # iterate over all filled prefixes: indices with zeros before axis
        shape = [dims[j] if j > axis else 1 for j in range(d)]
        for base in np.ndindex(tuple(shape)):
            for i in range(1, dims[axis]):
                src = list(base)
                src[axis] = i - 1
                dst = list(base)
                dst[axis] = i
                a, ln = _push_interval(g, lefts[tuple(src)], lens[tuple(src)])
                lefts[tuple(dst)], lens[tuple(dst)] = a, ln
    return LengthArray(lens)


def commuting_defect(f: CircleDiffeo, g: CircleDiffeo, grid: int = 10 ** 4
                     ) -> float:
    """max over the grid of the circle distance between f(g(x)) and g(f(x))."""
    x = np.arange(grid, dtype=float) / grid
    a = np.asarray(f.apply(np.asarray(g.apply(x))))
    b = np.asarray(g.apply(np.asarray(f.apply(x))))
    return float(np.max(circle_distance(a, b)))


# ---------------------------------------------------------------------------
# modulus constants of log Df


def omega_constant(f: CircleDiffeo, omega: Modulus, grid: int = 10 ** 4,
                   margin: float = 1e-9) -> float:
    """Empirical constant max |log Df(x) - log Df(y)| / omega(d(x,y)).

    Pairs are taken at power-of-two index offsets of a uniform grid, which
    samples every distance scale between 1/grid and the modulus domain cap.
    """
    x = np.arange(grid, dtype=float) / grid
    D = np.asarray(f.derivative(x), dtype=float)
    if float(np.min(D)) < margin:
        raise DegenerateDerivative(
            f"minimum derivative {float(np.min(D))!r} below margin {margin!r}"
        )
    logD = np.log(D)
    best = 0.0
    k = 1
    while k <= grid // 2:
        dist = k / grid
        if dist > omega.domain_cap + _SLACK:
            break
        diff = float(np.max(np.abs(logD - np.roll(logD, -k))))
        best = max(best, diff / omega.value(min(dist, omega.domain_cap)))
        k *= 2
    return best


def omega_constant_trend(f: CircleDiffeo, omega: Modulus,
                         grid_coarse: int = 2 ** 12, grid_fine: int = 2 ** 16,
                         factor: float = 1.2) -> dict:
    """Constants at two grid resolutions with an unbounded-trend flag."""
    coarse = omega_constant(f, omega, grid_coarse)
    fine = omega_constant(f, omega, grid_fine)
    return {
        "coarse": coarse,
        "fine": fine,
        "growing": bool(fine > factor * coarse),
    }


# ---------------------------------------------------------------------------
# the fixed-point certificate


@dataclass(frozen=True)
class FixedPointCertificate:
    """Checked data of the distortion fixed-point argument.

    L = |I| / (2 exp(2CS)); J is the closed 2L-neighborhood of I and
    I1, I2 the two components of J minus I.  Along the word the image
    lengths of I1, I2 never exceed that of I (A_j) and the derivative
    ratio over I cup I1 and I cup I2 stays below exp(2CS) (B_j).  If some
    prefix image of I lands inside the L-neighborhood without touching I,
    the certificate fires and a fixed point of that prefix is located in J.
    """

    word: tuple
    I: tuple
    C: float
    S: float
    L: float
    J: tuple
    I1: tuple
    I2: tuple
    exp_CS: float
    exp_2CS: float
    fired: bool
    firing_index: int | None
    shift: int | None
    checks: dict
    fixed_point: float | None
    residual: float | None
    prefix_table: dict

    def to_json_dict(self) -> dict:
        out = {
            "word": list(self.word),
            "I": [float(v) for v in self.I],
            "C": self.C, "S": self.S, "L": self.L,
            "J": [float(v) for v in self.J],
            "I1": [float(v) for v in self.I1],
            "I2": [float(v) for v in self.I2],
            "exp_CS": self.exp_CS, "exp_2CS": self.exp_2CS,
            "fired": self.fired,
            "firing_index": self.firing_index,
            "shift": self.shift,
            "checks": dict(self.checks),
            "fixed_point": self.fixed_point,
            "residual": self.residual,
            "prefix_table": {k: list(v) for k, v in self.prefix_table.items()},
        }
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["j", "len_I", "len_I1", "len_I2", "ratio_I1", "ratio_I2",
                "s_partial"]
        w.writerow(cols)
        t = self.prefix_table
        for j in range(len(t["j"])):
            w.writerow([t["j"][j]] + [f"{t[c][j]:.17g}" for c in cols[1:]])
        return buf.getvalue()


def fixed_point_certificate(word: Sequence[int],
                            generators: Sequence[CircleDiffeo],
                            I: tuple, C: float, S: float,
                            moduli: Sequence[Modulus] | None = None,
                            grid_points: int = 33) -> FixedPointCertificate:
    """Verify the distortion properties along the word and, if an image of
    I returns beside I within distance L, locate a fixed point.

    C must dominate the generators' omega-constants and S the weight sum
    of the image lengths (when `moduli` is given, the S requirement is
    recomputed and enforced).  Firing is a report, not an exception: a
    certificate with fired=False means the lemma's hypothesis was not met.
    """
    word = tuple(int(k) for k in word)
    if any(k == 0 or abs(k) > len(generators) for k in word):
        raise PreconditionViolated("word letters must index the generators")
    left, length = float(I[0]), float(I[1])
    if not 0.0 < length < 1.0:
        raise PreconditionViolated("interval length must lie in (0,1)")
    right = left + length
    exp_cs = math.exp(C * S)
    exp_2cs = math.exp(2.0 * C * S)
    L = length / (2.0 * exp_2cs)
    J = (left - 2.0 * L, right + 2.0 * L)
    I1 = (left - 2.0 * L, left)
    I2 = (right, right + 2.0 * L)

    g1 = np.linspace(I1[0], right, grid_points)   # I cup I1
    g2 = np.linspace(left, I2[1], grid_points)    # I cup I2
    pos1, pos2 = g1.copy(), g2.copy()
    D1 = np.ones(grid_points)
    D2 = np.ones(grid_points)

    ends = {
        "I": [left, right],
        "I1": [I1[0], I1[1]],
        "I2": [I2[0], I2[1]],
    }
    table = {k: [] for k in ("j", "len_I", "len_I1", "len_I2",
                             "ratio_I1", "ratio_I2", "s_partial")}
    table["j"].append(0)
    table["len_I"].append(length)
    table["len_I1"].append(2.0 * L)
    table["len_I2"].append(2.0 * L)
    table["ratio_I1"].append(1.0)
    table["ratio_I2"].append(1.0)
    table["s_partial"].append(0.0)

    s_partial = 0.0
    fired = False
    firing_index = None
    shift = None
    a_ok = True
    b_ok = True
    max_ratio = 1.0

    for j, k in enumerate(word, start=1):
        g = generators[abs(k) - 1]
        if moduli is not None:
            om = moduli[abs(k) - 1]
            s_partial += om.value(min(abs(ends["I"][1] - ends["I"][0]),
                                      om.domain_cap))
        if k > 0:
            D1 = D1 * np.asarray(g.derivative(pos1))
            pos1 = np.asarray(g.apply(pos1))
            D2 = D2 * np.asarray(g.derivative(pos2))
            pos2 = np.asarray(g.apply(pos2))
            for key in ends:
                ends[key] = [float(np.asarray(g.apply(v))) for v in ends[key]]
        else:
            pos1 = inverse_apply(g, pos1)
            D1 = D1 / np.asarray(g.derivative(pos1))
            pos2 = inverse_apply(g, pos2)
            D2 = D2 / np.asarray(g.derivative(pos2))
            for key in ends:
                ends[key] = [float(inverse_apply(g, v)) for v in ends[key]]

        len_I = ends["I"][1] - ends["I"][0]
        len_I1 = ends["I1"][1] - ends["I1"][0]
        len_I2 = ends["I2"][1] - ends["I2"][0]
        ratio1 = float(np.max(D1) / np.min(D1))
        ratio2 = float(np.max(D2) / np.min(D2))
        max_ratio = max(max_ratio, ratio1, ratio2)

        if len_I1 > len_I + _SLACK or len_I2 > len_I + _SLACK:
            a_ok = False
            raise DistortionViolated(
                f"(A_{j}): side-interval image exceeds |h_{j}(I)| "
                f"({len_I1!r}, {len_I2!r} vs {len_I!r}); C or S underestimated"
            )
        if ratio1 > exp_2cs * (1.0 + 1e-9) or ratio2 > exp_2cs * (1.0 + 1e-9):
            b_ok = False
            raise DistortionViolated(
                f"(B_{j}): derivative ratio {max(ratio1, ratio2)!r} exceeds "
                f"exp(2CS) = {exp_2cs!r}; C or S underestimated"
            )

        table["j"].append(j)
        table["len_I"].append(len_I)
        table["len_I1"].append(len_I1)
        table["len_I2"].append(len_I2)
        table["ratio_I1"].append(ratio1)
        table["ratio_I2"].append(ratio2)
        table["s_partial"].append(s_partial)

        # does the image sit inside the L-neighborhood without touching I?
        img_l, img_r = ends["I"]
        base_shift = round(left - img_l)
        for cand in (base_shift - 1, base_shift, base_shift + 1):
            lo, hi = img_l + cand, img_r + cand
            in_nbhd = lo >= left - L and hi <= right + L
            disjoint = hi <= left or lo >= right
            if in_nbhd and disjoint:
                fired = True
                firing_index = j
                shift = int(cand)
                break
        if fired:
            break

    if moduli is not None and s_partial > S + _SLACK:
        raise DistortionViolated(
            f"S = {S!r} underestimates the recomputed weight {s_partial!r}"
        )

    checks = {
        "image_in_L_neighborhood": fired,
        "image_disjoint_from_I": fired,
        "distortion_bound": max_ratio,
        "A_j_ok": a_ok,
        "B_j_ok": b_ok,
        "fixed_point_located": None,
    }

    fixed_point = None
    residual = None
    if fired:
        prefix = word[:firing_index]
        comp = Composition(tuple(generators), prefix)

        def H(x):
            return float(np.asarray(comp.apply(x))) + shift

        hJl, hJr = H(J[0]), H(J[1])
        if hJl < J[0] - 1e-10 or hJr > J[1] + 1e-10:
            raise DistortionViolated(
                f"h(J) = ({hJl!r}, {hJr!r}) escapes J = {J!r}; "
                "distortion margins too tight"
            )
        lo, hi = J
        flo = H(lo) - lo
        fhi = H(hi) - hi
        if flo < 0.0 or fhi > 0.0:
            # displacement should change sign from >=0 to <=0 inside J
            raise InternalCheckError(
                f"displacement signs ({flo!r}, {fhi!r}) violate h(J) in J"
            )
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if H(mid) - mid >= 0.0:
                lo = mid
            else:
                hi = mid
        fixed_point = 0.5 * (lo + hi)
        residual = abs(H(fixed_point) - fixed_point)
        if residual > 1e-9:
            raise InternalCheckError(
                f"bisection residual {residual!r} exceeds 1e-9"
            )
        checks["fixed_point_located"] = fixed_point

    return FixedPointCertificate(
        word=word, I=(left, length), C=float(C), S=float(S), L=L, J=J,
        I1=I1, I2=I2, exp_CS=exp_cs, exp_2CS=exp_2cs, fired=fired,
        firing_index=firing_index, shift=shift, checks=checks,
        fixed_point=fixed_point, residual=residual, prefix_table=table,
    )


# ---------------------------------------------------------------------------
# covering numbers


def _exact_cover_rotation(rho: Fraction, V: tuple, cap: int) -> int:
    vl = Fraction(V[0])
    vlen = Fraction(V[1])
    uncovered = [(Fraction(0), Fraction(1))]
    for k in range(1, cap + 1):
        a = (vl - k * rho) % 1
        pieces = [(a, min(a + vlen, Fraction(1)))]
        if a + vlen > 1:
            pieces.append((Fraction(0), a + vlen - 1))
        nxt = []
        for (ul, ur) in uncovered:
            segs = [(ul, ur)]
            for (pl, pr) in pieces:
                out = []
                for (sl, sr) in segs:
                    if pr <= sl or pl >= sr:
                        out.append((sl, sr))
                        continue
                    if sl < pl:
                        out.append((sl, pl))
                    if pr < sr:
                        out.append((pr, sr))
                segs = out
            nxt.extend(segs)
        uncovered = [(a0, b0) for (a0, b0) in nxt if b0 > a0]
        if not uncovered:
            return k
    raise NoCoverWithin(f"no cover within {cap} preimages")


def minimal_cover_N(f: CircleDiffeo, V: tuple, cap: int = 10 ** 6) -> int:
    """Smallest N with f^{-1}(V) cup ... cup f^{-N}(V) covering the circle.

    Rotations are handled by exact rational interval subtraction; general
    maps by forward iteration of a grid of resolution |V|/100 (x is
    covered at step k iff f^k(x) lands in V).
    """
    left, length = float(V[0]), float(V[1])
    if length <= 0.0:
        raise PreconditionViolated("|V| must be positive")
    if length >= 1.0:
        return 1
    if isinstance(f, Rotation):
        rho = f.rho_exact if f.rho_exact is not None else Fraction(f.rho)
        return _exact_cover_rotation(rho % 1, V, cap)
    n = int(math.ceil(100.0 / length))
    pts = np.arange(n, dtype=float) / n
    covered = np.zeros(n, dtype=bool)
    cur = pts.copy()
    vl = left % 1.0
    for k in range(1, cap + 1):
        cur = np.asarray(f.apply(cur), dtype=float) % 1.0
        if vl + length <= 1.0:
            hit = (cur >= vl) & (cur < vl + length)
        else:
            hit = (cur >= vl) | (cur < vl + length - 1.0)
        covered |= hit
        if covered.all():
            return k
    raise NoCoverWithin(f"no cover within {cap} preimages")


# ---------------------------------------------------------------------------
# serialization


def diffeo_to_dict(f: CircleDiffeo) -> dict:
    if isinstance(f, Rotation):
        if f.rho_exact is not None:
            return {"kind": "rotation",
                    "rho": f"{f.rho_exact.numerator}/{f.rho_exact.denominator}"}
        return {"kind": "rotation", "rho": f.rho}
    if isinstance(f, Analytic):
        return {"kind": "analytic", "alpha": f.alpha, "eps": f.eps}
    if isinstance(f, DenjoyMap):
        return {"kind": "denjoy",
                "alpha": f"{f.alpha.numerator}/{f.alpha.denominator}",
                "tau": f.tau, "levels": f.N, "mass": f.inserted_mass}
    if isinstance(f, Composition):
        return {"kind": "composition", "word": list(f.word),
                "generators": [diffeo_to_dict(g) for g in f.generators]}
    raise PreconditionViolated(f"unknown diffeomorphism {type(f).__name__}")


def diffeo_from_dict(d: dict) -> CircleDiffeo:
    kind = d.get("kind")
    if kind == "rotation":
        rho = d["rho"]
        if isinstance(rho, str):
            return Rotation(0.0, rho_exact=_coerce_fraction(rho))
        return Rotation(float(rho))
    if kind == "analytic":
        return Analytic(float(d["alpha"]), float(d["eps"]))
    if kind == "denjoy":
        fmap, _ = denjoy_construct(d["alpha"], float(d["tau"]),
                                   int(d["levels"]),
                                   total_mass=float(d.get("mass", 0.5)))
        return fmap
    if kind == "composition":
        gens = tuple(diffeo_from_dict(g) for g in d["generators"])
        return Composition(gens, tuple(d["word"]))
    raise PreconditionViolated(f"unknown diffeomorphism kind {kind!r}")
