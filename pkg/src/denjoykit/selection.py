"""Combinatorial selection bounds and lattice-path construction.

The pieces: an averaging bound that picks a cheap column out of a
nonnegative array (and the proportional variant that keeps most columns),
schedules of growing index rectangles, a depth-first search for chains of
pairwise-intersecting admissible lattice lines, and walkers that assemble
unit-step lattice paths along the selected lines while accounting their
weight against the proven bound terms.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    BudgetOverflow,
    InternalCheckError,
    MassOverflow,
    NoColumn,
    NoPath,
    PreconditionViolated,
    ScheduleMismatch,
)
from .moduli import Modulus, ModulusFamily

__all__ = [
    "LengthArray",
    "RectangleSchedule",
    "LatticePath",
    "PathReport",
    "BudgetReport",
    "select_column",
    "admissible_columns",
    "build_path_2d",
    "all_lines",
    "find_line_sequence",
    "verify_line_sequence",
    "path_from_lines",
    "build_path_general",
    "path_weight",
    "square_summable_subsequence",
    "thin_schedule_square_summable",
]

_SLACK = 1e-12


# ---------------------------------------------------------------------------
# LengthArray


@dataclass(frozen=True)
class LengthArray:
    """d-indexed nonnegative lengths with total mass at most 1."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", arr)
        if arr.ndim < 1 or arr.size == 0:
            raise PreconditionViolated("length array needs at least one cell")
        if np.any(arr < 0.0):
            raise PreconditionViolated("lengths must be nonnegative")
        if float(arr.sum()) > 1.0 + _SLACK:
            raise MassOverflow(
                f"total mass {float(arr.sum())!r} exceeds 1"
            )

    @property
    def dims(self) -> tuple:
        return tuple(self.values.shape)

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def total_mass(self) -> float:
        return float(self.values.sum())

    @classmethod
    def product_geometric(cls, dims: Sequence[int], ratios: Sequence[float],
                          c: float | None = None) -> "LengthArray":
        """l_{i_1..i_d} = c * prod_j ratios[j]**i_j, c defaulting to 1/sum."""
        if len(dims) != len(ratios):
            raise PreconditionViolated("dims and ratios must have equal length")
        grids = [r ** np.arange(n, dtype=float) for n, r in zip(dims, ratios)]
        vals = grids[0]
        for g in grids[1:]:
            vals = np.multiply.outer(vals, g)
        if c is None:
            c = 1.0 / float(vals.sum())
        return cls(c * vals)

    def to_json_dict(self) -> dict:
        return {"dims": list(self.dims),
                "values": [float(v) for v in self.values.ravel()]}

    @classmethod
    def from_json_dict(cls, d: dict) -> "LengthArray":
        dims = tuple(int(n) for n in d["dims"])
        vals = np.asarray(d["values"], dtype=float).reshape(dims)
        return cls(vals)

    def to_csv(self) -> str:
        if self.d != 2:
            raise PreconditionViolated("CSV export is defined for d=2 arrays")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for row in self.values:
            w.writerow([f"{v:.17g}" for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "LengthArray":
        rows = [
            [float(cell) for cell in line]
            for line in csv.reader(io.StringIO(text))
            if line
        ]
        return cls(np.asarray(rows, dtype=float))


# ---------------------------------------------------------------------------
# column selection


def _as_matrix(L) -> np.ndarray:
    arr = L.values if isinstance(L, LengthArray) else np.asarray(L, dtype=float)
    if arr.ndim != 2:
        raise PreconditionViolated("column selection needs an m x n array")
    return arr


def select_column(L, omega: Modulus) -> int:
    """Index (1-based) of a column k with sum_i omega(l_{i,k}) <= m*omega(1/(mn)).

    The average of the column sums is at most m*omega(1/(mn)) when omega is
    concave and the total mass is at most 1, so the minimizing column (ties:
    smallest index) always satisfies the bound; NoColumn signals that the
    preconditions were violated.
    """
    arr = _as_matrix(L)
    m, n = arr.shape
    sums = omega.map(arr.ravel()).reshape(arr.shape).sum(axis=0)
    k = int(np.argmin(sums))
    bound = m * omega.value(1.0 / (m * n))
    if sums[k] > bound + _SLACK:
        raise NoColumn(
            f"best column sum {sums[k]!r} exceeds bound {bound!r}; "
            "input must violate mass/concavity preconditions"
        )
    return k + 1


def admissible_columns(L, omega: Modulus, A: float) -> tuple:
    """All (1-based) columns with sum_i omega(l_{i,k}) <= A * m * omega(1/(mn)).

    At least a (1 - 1/A) proportion of the columns qualifies.
    """
    if not A > 1.0:
        raise PreconditionViolated(f"budget A must exceed 1, got {A!r}")
    arr = _as_matrix(L)
    m, n = arr.shape
    sums = omega.map(arr.ravel()).reshape(arr.shape).sum(axis=0)
    bound = A * m * omega.value(1.0 / (m * n))
    good = tuple(int(k) + 1 for k in range(n) if sums[k] <= bound + _SLACK)
    need = math.ceil(n * (A - 1.0) / A - 1e-9)
    if len(good) < need:
        raise NoColumn(
            f"only {len(good)} admissible columns, averaging guarantees {need}"
        )
    return good


# ---------------------------------------------------------------------------
# rectangle schedules


@dataclass(frozen=True)
class RectangleSchedule:
    """Growing index rectangles: column m of x holds the corner after step m.

    Step m grows exactly the coordinate k = r(m) = ((m-1) mod d) + 1 and
    leaves the others unchanged.  Side counts are X_{j,m} = 1 + x_{j,m}.
    """

    x: np.ndarray
    budgets: tuple | None = None

    def __post_init__(self) -> None:
        arr = np.asarray(self.x)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ScheduleMismatch("schedule matrix must be d x (M+1)")
        if not np.issubdtype(arr.dtype, np.integer):
            if np.any(arr != np.floor(arr)):
                raise ScheduleMismatch("schedule entries must be integers")
            arr = arr.astype(np.int64)
        else:
            arr = arr.astype(np.int64)
        if np.any(arr < 0):
            raise ScheduleMismatch("schedule entries must be nonnegative")
        object.__setattr__(self, "x", arr)
        d, cols = arr.shape
        for m in range(1, cols):
            k = (m - 1) % d
            for j in range(d):
                if j == k:
                    if not arr[j, m] > arr[j, m - 1]:
                        raise ScheduleMismatch(
                            f"coordinate {j+1} must grow at step {m}"
                        )
                elif arr[j, m] != arr[j, m - 1]:
                    raise ScheduleMismatch(
                        f"coordinate {j+1} must stay fixed at step {m}"
                    )
        if self.budgets is not None:
            budgets = tuple(float(a) for a in self.budgets)
            object.__setattr__(self, "budgets", budgets)
            if len(budgets) != cols - 1:
                raise ScheduleMismatch("one budget per growth step required")

    @property
    def d(self) -> int:
        return int(self.x.shape[0])

    @property
    def M(self) -> int:
        return int(self.x.shape[1] - 1)

    def r(self, m: int) -> int:
        """Direction of growth step m (1-based, m = 1..M)."""
        if not 1 <= m <= self.M:
            raise ScheduleMismatch(f"step index {m} outside 1..{self.M}")
        return (m - 1) % self.d + 1

    def side_counts(self, m: int) -> np.ndarray:
        """X_{j,m} = 1 + x_{j,m} for all coordinates j."""
        return 1 + self.x[:, m]

    @classmethod
    def from_proposition(cls, alphas: Sequence[float], a: float, M: int,
                         offset: int | None = None) -> "RectangleSchedule":
        """Schedule whose growth values follow X = floor(a**(alpha_k (m+offset))).

        The offset defaults to the smallest shift making every grown side
        count at least 2 and every coordinate's growth strict.
        """
        alphas = [float(al) for al in alphas]
        d = len(alphas)
        if d < 1 or any(not (0.0 < al < 1.0) for al in alphas):
            raise PreconditionViolated("growth exponents must lie in (0, 1)")
        if a <= 1.0:
            raise PreconditionViolated(f"base a must exceed 1, got {a!r}")
        if M < 0:
            raise PreconditionViolated("M must be >= 0")

        def build(off: int) -> np.ndarray | None:
            x = np.zeros((d, M + 1), dtype=np.int64)
            for m in range(1, M + 1):
                k = (m - 1) % d
                expo = alphas[k] * (m + off)
                if expo * math.log(a) > 62.0 * math.log(2.0):
                    raise PreconditionViolated(
                        "schedule side counts exceed the integer range"
                    )
                X = math.floor(a ** expo)
                x[:, m] = x[:, m - 1]
                x[k, m] = X - 1
                if X < 2 or x[k, m] <= x[k, m - 1]:
                    return None
            return x

        if offset is not None:
            x = build(int(offset))
            if x is None:
                raise PreconditionViolated(
                    f"offset {offset} gives degenerate or non-growing sides"
                )
            return cls(x)
        for off in range(0, 64):
            x = build(off)
            if x is not None:
                return cls(x)
        raise PreconditionViolated("no admissible offset up to 64")

    def staircase_corners(self) -> tuple:
        """Corner sequences (i_m), (j_m) of the staggered 2-d window scheme.

        i is built from coordinate-1 growth values, j from coordinate-2,
        each prefixed by two zeros (the first window of each orientation is
        degenerate, pinning the path to the origin).  Needs d=2 and even M.
        """
        if self.d != 2:
            raise ScheduleMismatch("staircase corners are defined for d=2")
        if self.M % 2 != 0:
            raise ScheduleMismatch("staircase corners need an even step count")
        i_seq = [0, 0] + [int(self.x[0, m]) for m in range(1, self.M + 1, 2)]
        j_seq = [0, 0] + [int(self.x[1, m]) for m in range(2, self.M + 1, 2)]
        return i_seq, j_seq


# ---------------------------------------------------------------------------
# lattice paths


@dataclass(frozen=True)
class LatticePath:
    """Unit-step path from the origin with per-point direction labels.

    labels[n] is the coordinate (1-based) of the step n -> n+1; the final
    point carries the travel direction of its line.  weight sums
    omega_{labels[n]} of the length value at each point.
    """

    points: np.ndarray
    labels: np.ndarray
    l_values: np.ndarray
    omega_values: np.ndarray
    weight: float

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.int64)
        lab = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "l_values", np.asarray(self.l_values, dtype=float))
        object.__setattr__(self, "omega_values",
                           np.asarray(self.omega_values, dtype=float))
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise PreconditionViolated("path needs at least one point")
        if np.any(pts[0] != 0):
            raise PreconditionViolated("path must start at the origin")
        if lab.shape != (pts.shape[0],):
            raise PreconditionViolated("one label per point required")
        d = pts.shape[1]
        if np.any(lab < 1) or np.any(lab > d):
            raise PreconditionViolated("labels must lie in 1..d")
        steps = np.diff(pts, axis=0)
        if steps.size:
            if np.any(np.sum(np.abs(steps), axis=1) != 1):
                raise PreconditionViolated("steps must change one coordinate by 1")
            moved = np.argmax(np.abs(steps), axis=1) + 1
            if np.any(moved != lab[:-1]):
                raise PreconditionViolated("label must equal the stepped coordinate")

    @property
    def P(self) -> int:
        return int(self.points.shape[0] - 1)

    @property
    def d(self) -> int:
        return int(self.points.shape[1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.d
        w.writerow(["n"] + [f"x{j}" for j in range(1, d + 1)]
                   + ["xi", "l_value", "omega_value", "running_weight"])
        running = 0.0
        for n in range(self.points.shape[0]):
            running += float(self.omega_values[n])
            w.writerow([n] + [int(c) for c in self.points[n]]
                       + [int(self.labels[n]),
                          f"{self.l_values[n]:.17g}",
                          f"{self.omega_values[n]:.17g}",
                          f"{running:.17g}"])
        return buf.getvalue()


def path_weight(points: np.ndarray, labels: np.ndarray, L: LengthArray,
                family: ModulusFamily) -> float:
    """Independent weight recomputation: sum of omega_{xi(n)}(l at point n)."""
    total = []
    for pt, lab in zip(np.asarray(points), np.asarray(labels)):
        lval = float(L.values[tuple(int(c) for c in pt)])
        total.append(family.members[int(lab) - 1].value(lval))
    return math.fsum(total)


def _walk(start: Sequence[int], segments: list, L: LengthArray,
          family: ModulusFamily, buckets: list | None = None) -> LatticePath:
    """Assemble a path from (target, direction, bucket_index) segments.

    Each visited point contributes omega_{direction}(l at point); when
    buckets are given the term is also added to the segment's bucket (the
    walked partial sum of its selected line).  The final point's term goes
    to the last segment's bucket with that segment's direction label.
    """
    pos = list(int(c) for c in start)
    pts = [tuple(pos)]
    labs = []
    owner = []
    for target, direction, bucket in segments:
        axis = direction - 1
        while pos[axis] != target[axis]:
            labs.append(direction)
            owner.append(bucket)
            pos[axis] += 1 if target[axis] > pos[axis] else -1
            pts.append(tuple(pos))
        if tuple(pos) != tuple(target):
            raise InternalCheckError("segment endpoints must share the travel line")
    labs.append(segments[-1][1])
    owner.append(segments[-1][2])
    points = np.asarray(pts, dtype=np.int64)
    labels = np.asarray(labs, dtype=np.int64)
    l_vals = np.asarray([float(L.values[tuple(p)]) for p in pts])
    om_vals = np.asarray([
        family.members[int(lab) - 1].value(lv)
        for lab, lv in zip(labels, l_vals)
    ])
    weight = math.fsum(om_vals)
    if buckets is not None:
        for b, term in zip(owner, om_vals):
            buckets[b] += float(term)
    return LatticePath(points, labels, l_vals, om_vals, weight)


# ---------------------------------------------------------------------------
# the staggered 2-d builder


@dataclass(frozen=True)
class PathReport:
    """Per-rectangle accounting for the staggered 2-d construction."""

    rect_index: np.ndarray       # 1..2K
    orientation: tuple           # "vertical" | "horizontal" per rectangle
    selected_line: np.ndarray    # lattice coordinate of the chosen line
    side_X: np.ndarray
    side_Y: np.ndarray
    line_sum: np.ndarray         # full omega-sum of the chosen line's window
    bound_term: np.ndarray       # the proven per-rectangle bound
    partial_sum: np.ndarray      # portion of line_sum actually walked
    weight: float
    bound_total: float

    def to_json_dict(self) -> dict:
        return {
            "rect_index": [int(v) for v in self.rect_index],
            "orientation": list(self.orientation),
            "selected_line": [int(v) for v in self.selected_line],
            "side_X": [int(v) for v in self.side_X],
            "side_Y": [int(v) for v in self.side_Y],
            "line_sum": [float(v) for v in self.line_sum],
            "bound_term": [float(v) for v in self.bound_term],
            "partial_sum": [float(v) for v in self.partial_sum],
            "weight": float(self.weight),
            "bound_total": float(self.bound_total),
        }


def build_path_2d(L: LengthArray, schedule: RectangleSchedule,
                  family: ModulusFamily) -> tuple:
    """Staircase path through staggered 2-d windows with bound accounting.

    Odd rectangles [i_m, i_{m+1}] x [j_m, j_{m+2}] select a vertical line
    (bound Y * omega_2(1/(XY))); even rectangles [i_m, i_{m+2}] x
    [j_{m+1}, j_{m+2}] a horizontal one (bound X * omega_1(1/(XY))).  The
    path runs along the selected lines, turning at their intersections,
    and its weight is the sum of the walked parts of the line sums.
    """
    if L.d != 2 or family.d != 2:
        raise ScheduleMismatch("the staggered builder needs d=2 throughout")
    om1, om2 = family.members
    if schedule.M == 0:
        lv = float(L.values[0, 0])
        om = om2.value(lv)
        path = LatticePath(np.zeros((1, 2), dtype=np.int64),
                           np.asarray([2]), np.asarray([lv]),
                           np.asarray([om]), om)
        report = PathReport(np.zeros(0, dtype=int), (), np.zeros(0, dtype=int),
                            np.zeros(0, dtype=int), np.zeros(0, dtype=int),
                            np.zeros(0), np.zeros(0), np.zeros(0),
                            weight=om, bound_total=0.0)
        return path, report

    i_seq, j_seq = schedule.staircase_corners()
    K = len(i_seq) - 2
    if i_seq[-1] + 1 > L.dims[0] or j_seq[-1] + 1 > L.dims[1]:
        raise ScheduleMismatch(
            f"corners {(i_seq[-1], j_seq[-1])} exceed array dims {L.dims}"
        )

    orientation = []
    selected = []
    Xs, Ys, sums, bounds = [], [], [], []
    v_lines, h_lines = [], []
    for m in range(K):
        # odd rectangle: pick a vertical line i in [i_m, i_{m+1}]
        i0, i1 = i_seq[m], i_seq[m + 1]
        j0, j2 = j_seq[m], j_seq[m + 2]
        X = i1 - i0 + 1
        Y = j2 - j0 + 1
        sub = L.values[i0:i1 + 1, j0:j2 + 1]
        k = select_column(sub.T, om2)
        v = i0 + k - 1
        v_lines.append(v)
        col_sum = float(om2.map(L.values[v, j0:j2 + 1]).sum())
        orientation.append("vertical")
        selected.append(v)
        Xs.append(X)
        Ys.append(Y)
        sums.append(col_sum)
        bounds.append(Y * om2.value(1.0 / (X * Y)))

        # even rectangle: pick a horizontal line j in [j_{m+1}, j_{m+2}]
        i0e, i2e = i_seq[m], i_seq[m + 2]
        j1e, j2e = j_seq[m + 1], j_seq[m + 2]
        Xe = i2e - i0e + 1
        Ye = j2e - j1e + 1
        sub = L.values[i0e:i2e + 1, j1e:j2e + 1]
        k = select_column(sub, om1)
        h = j1e + k - 1
        h_lines.append(h)
        row_sum = float(om1.map(L.values[i0e:i2e + 1, h]).sum())
        orientation.append("horizontal")
        selected.append(h)
        Xs.append(Xe)
        Ys.append(Ye)
        sums.append(row_sum)
        bounds.append(Xe * om1.value(1.0 / (Xe * Ye)))

    # assemble segments: vertical to (v_m, h_m), horizontal to (v_{m+1}, h_m),
    # tail along the last horizontal line to the final window edge
    segments = []
    for m in range(K):
        segments.append(((v_lines[m], h_lines[m]), 2, 2 * m))
        nxt = i_seq[K + 1] if m == K - 1 else v_lines[m + 1]
        segments.append(((nxt, h_lines[m]), 1, 2 * m + 1))
    buckets = [0.0] * (2 * K)
    path = _walk((v_lines[0], 0), segments, L, family, buckets)

    sums_arr = np.asarray(sums)
    bounds_arr = np.asarray(bounds)
    partial = np.asarray(buckets)
    if np.any(sums_arr > bounds_arr + _SLACK):
        raise InternalCheckError("a selected line exceeds its proven bound")
    if np.any(partial > sums_arr + _SLACK):
        raise InternalCheckError("partial sums cannot exceed full line sums")
    if path.weight > float(bounds_arr.sum()) + _SLACK:
        raise InternalCheckError("path weight exceeds the bound-term total")
    report = PathReport(
        rect_index=np.arange(1, 2 * K + 1),
        orientation=tuple(orientation),
        selected_line=np.asarray(selected, dtype=int),
        side_X=np.asarray(Xs, dtype=int),
        side_Y=np.asarray(Ys, dtype=int),
        line_sum=sums_arr,
        bound_term=bounds_arr,
        partial_sum=partial,
        weight=path.weight,
        bound_total=float(bounds_arr.sum()),
    )
    return path, report


# ---------------------------------------------------------------------------
# admissible line chains (general d)


def all_lines(schedule: RectangleSchedule, m: int) -> list:
    """Anchors of every direction-r(m) line of the step-m rectangle.

    An anchor is a d-tuple fixing each coordinate except the travel
    direction, whose slot is 0 by convention.  Ordered lexicographically.
    """
    r = schedule.r(m)
    ranges = []
    for j in range(schedule.d):
        if j == r - 1:
            ranges.append((0,))
        else:
            ranges.append(tuple(range(int(schedule.x[j, m]) + 1)))
    out = []

    def rec(prefix: tuple, depth: int) -> None:
        if depth == schedule.d:
            out.append(prefix)
            return
        for v in ranges[depth]:
            rec(prefix + (v,), depth + 1)

    rec((), 0)
    return out


def _check_anchor(schedule: RectangleSchedule, m: int, anchor: tuple) -> None:
    r = schedule.r(m)
    if len(anchor) != schedule.d:
        raise ScheduleMismatch(f"anchor {anchor!r} has wrong dimension")
    for j, v in enumerate(anchor):
        if j == r - 1:
            if v != 0:
                raise ScheduleMismatch(
                    f"anchor {anchor!r} must carry 0 in its travel slot {r}"
                )
        elif not 0 <= v <= int(schedule.x[j, m]):
            raise ScheduleMismatch(
                f"anchor {anchor!r} outside the step-{m} rectangle"
            )


def verify_line_sequence(schedule: RectangleSchedule, anchors: Sequence[tuple]
                         ) -> bool:
    """Geometric check that consecutive selected lines intersect.

    Works from the coordinate ranges of the two lines directly (not from
    the anchor-agreement shortcut used by the search), so it can serve as
    an independent verifier.
    """
    anchors = [tuple(int(v) for v in a) for a in anchors]
    for m in range(1, len(anchors)):
        ra, rb = schedule.r(m), schedule.r(m + 1)
        a, b = anchors[m - 1], anchors[m]
        ok = True
        for j in range(schedule.d):
            # coordinate range of each line in slot j
            lo_a, hi_a = ((0, int(schedule.x[j, m])) if j == ra - 1
                          else (a[j], a[j]))
            lo_b, hi_b = ((0, int(schedule.x[j, m + 1])) if j == rb - 1
                          else (b[j], b[j]))
            if max(lo_a, lo_b) > min(hi_a, hi_b):
                ok = False
                break
        if not ok:
            return False
    return True


def find_line_sequence(schedule: RectangleSchedule,
                       admissible: Sequence[Sequence[tuple]],
                       budgets: Sequence[float] | None = None) -> list:
    """Chain of admissible lines, consecutive ones intersecting.

    ``admissible[m-1]`` lists the surviving anchors at step m.  When
    budgets are given, the density |L'(m)| >= (1 - 1/A_m)|L(m)| and the
    total sum_m 1/A_m < 1 are validated first (PreconditionViolated on
    failure); under them a chain is guaranteed to exist.  Without budgets
    the search is pure and NoPath reports definitive failure (the search
    is exhaustive with memoized dead states).
    """
    M = schedule.M
    if len(admissible) != M:
        raise ScheduleMismatch(f"need {M} admissible sets, got {len(admissible)}")
    adm = []
    for m in range(1, M + 1):
        level = sorted(tuple(int(v) for v in a) for a in admissible[m - 1])
        for a in level:
            _check_anchor(schedule, m, a)
        adm.append(level)

    if budgets is not None:
        budgets = [float(A) for A in budgets]
        if len(budgets) != M:
            raise ScheduleMismatch(f"need {M} budgets, got {len(budgets)}")
        if any(A <= 1.0 for A in budgets):
            raise PreconditionViolated("every budget must exceed 1")
        total = math.fsum(1.0 / A for A in budgets)
        if total >= 1.0:
            raise PreconditionViolated(
                f"budget sum {total!r} must stay below 1"
            )
        for m in range(1, M + 1):
            full = 1
            for j in range(schedule.d):
                if j != schedule.r(m) - 1:
                    full *= int(schedule.x[j, m]) + 1
            need = (1.0 - 1.0 / budgets[m - 1]) * full
            if len(adm[m - 1]) < need - 1e-9:
                raise PreconditionViolated(
                    f"step {m}: {len(adm[m-1])} admissible lines, "
                    f"density requires at least {need!r} of {full}"
                )

    if M == 0:
        return []

    dead: set = set()

    def extend(m: int, anchor: tuple, chain: list) -> list | None:
        if m == M:
            return chain
        key = (m, anchor)
        if key in dead:
            return None
        ra = schedule.r(m) - 1
        rb = schedule.r(m + 1) - 1
        for cand in adm[m]:
            if all(cand[j] == anchor[j] for j in range(schedule.d)
                   if j != ra and j != rb):
                res = extend(m + 1, cand, chain + [cand])
                if res is not None:
                    return res
        dead.add(key)
        return None

    for first in adm[0]:
        res = extend(1, first, [first])
        if res is not None:
            if not verify_line_sequence(schedule, res):
                raise InternalCheckError("search returned a non-intersecting chain")
            return res
    raise NoPath("no admissible line chain exists for these removal sets")


# ---------------------------------------------------------------------------
# the general-d walker and builder


def path_from_lines(anchors: Sequence[tuple], dirs: Sequence[int],
                    end_coord: int, L: LengthArray, family: ModulusFamily
                    ) -> tuple:
    """Unit-step path along a chain of pairwise-intersecting lines.

    Line m travels in coordinate dirs[m]; the path enters it at the
    intersection with line m-1 and leaves at the intersection with line
    m+1, finishing along the last line at coordinate end_coord.  Returns
    the path and the per-line partial sums.
    """
    n = len(anchors)
    if n == 0 or len(dirs) != n:
        raise ScheduleMismatch("need one direction per line")
    anchors = [tuple(int(v) for v in a) for a in anchors]
    d = len(anchors[0])

    pivots = []
    for m in range(n - 1):
        a, b = anchors[m], anchors[m + 1]
        nxt_axis = dirs[m + 1] - 1
        p = list(b)
        p[nxt_axis] = a[nxt_axis]
        pivots.append(tuple(p))
    prev = anchors[0]
    for m, p in enumerate(pivots):
        axis = dirs[m] - 1
        if any(p[j] != prev[j] for j in range(d) if j != axis):
            raise PreconditionViolated(
                f"lines {m+1} and {m+2} do not intersect"
            )
        prev = p
    end = list(pivots[-1] if n >= 2 else anchors[0])
    end[dirs[-1] - 1] = int(end_coord)

    segments = [(p, dirs[m], m) for m, p in enumerate(pivots)]
    segments.append((tuple(end), dirs[-1], n - 1))
    buckets = [0.0] * n
    path = _walk(anchors[0], segments, L, family, buckets)
    return path, buckets


@dataclass(frozen=True)
class BudgetReport:
    """Accounting for the general-d construction.

    S_star = sum_m sqrt(defect at 1/X_{r(m),m}); budgets A_m = 2 S_star /
    sqrt(defect_m) give sum_m 1/A_m = 1/2.  raw_total = sum of the
    admissible-line thresholds; with the consistency constant A_cons along
    the schedule the provable bound is raw_total <= 2 A_cons S_star^2
    (display_bound = A_cons S_star^2 is the same chain with its factor 2
    absorbed into the constant).
    """

    S_star: float
    defects: np.ndarray
    budgets: np.ndarray
    sum_inv_budgets: float
    consistency_ratios: np.ndarray
    A_cons: float
    face_sizes: np.ndarray
    admissible_sizes: np.ndarray
    thresholds: np.ndarray
    selected: tuple
    line_sums: np.ndarray
    partial_sums: np.ndarray
    weight: float
    raw_total: float
    display_bound: float
    provable_bound: float

    def to_json_dict(self) -> dict:
        return {
            "S_star": float(self.S_star),
            "defects": [float(v) for v in self.defects],
            "budgets": [float(v) for v in self.budgets],
            "sum_inv_budgets": float(self.sum_inv_budgets),
            "consistency_ratios": [float(v) for v in self.consistency_ratios],
            "A_cons": float(self.A_cons),
            "face_sizes": [int(v) for v in self.face_sizes],
            "admissible_sizes": [int(v) for v in self.admissible_sizes],
            "thresholds": [float(v) for v in self.thresholds],
            "selected": [list(map(int, a)) for a in self.selected],
            "line_sums": [float(v) for v in self.line_sums],
            "partial_sums": [float(v) for v in self.partial_sums],
            "weight": float(self.weight),
            "raw_total": float(self.raw_total),
            "display_bound": float(self.display_bound),
            "provable_bound": float(self.provable_bound),
        }


def build_path_general(L: LengthArray, schedule: RectangleSchedule,
                       family: ModulusFamily,
                       consistency_constant: float | None = None) -> tuple:
    """Path through anchored growing rectangles in any dimension.

    Per step m the admissible lines of the face in direction r(m) are
    those whose omega-sum stays below A_m times the average bound; a chain
    of intersecting admissible lines is found by exhaustive search and
    walked into a unit-step path.  Returns (path, BudgetReport).
    """
    d = schedule.d
    if L.d != d or family.d != d:
        raise ScheduleMismatch("array, schedule and family dimensions must agree")
    M = schedule.M
    for j in range(d):
        if int(schedule.x[j, M]) + 1 > L.dims[j]:
            raise ScheduleMismatch(
                f"schedule extent {int(schedule.x[j, M]) + 1} exceeds array dim "
                f"{L.dims[j]} in coordinate {j+1}"
            )
    if M == 0:
        lv = float(L.values[(0,) * d])
        om = family.members[0].value(lv)
        path = LatticePath(np.zeros((1, d), dtype=np.int64),
                           np.asarray([1]), np.asarray([lv]),
                           np.asarray([om]), om)
        report = BudgetReport(
            S_star=0.0, defects=np.zeros(0), budgets=np.zeros(0),
            sum_inv_budgets=0.0, consistency_ratios=np.zeros(0),
            A_cons=consistency_constant if consistency_constant is not None else 1.0,
            face_sizes=np.zeros(0, dtype=int),
            admissible_sizes=np.zeros(0, dtype=int),
            thresholds=np.zeros(0), selected=(), line_sums=np.zeros(0),
            partial_sums=np.zeros(0), weight=om, raw_total=0.0,
            display_bound=0.0, provable_bound=0.0,
        )
        return path, report

    # defect values and budgets
    defects = []
    ratios = []
    for m in range(1, M + 1):
        r = schedule.r(m)
        Xs = schedule.side_counts(m)
        X_r = int(Xs[r - 1])
        defects.append(family.defect(1.0 / X_r))
        prod_inv = 1.0 / float(np.prod(Xs.astype(float)))
        lhs = family.members[r - 1].value(prod_inv)
        rhs = 1.0
        for k in range(d):
            rhs *= family.members[k].value(1.0 / X_r)
        ratios.append(lhs / rhs)
    defects = np.asarray(defects)
    ratios = np.asarray(ratios)
    S_star = float(np.sum(np.sqrt(defects)))
    budgets = 2.0 * S_star / np.sqrt(defects)
    sum_inv = float(np.sum(1.0 / budgets))
    if sum_inv >= 1.0:
        raise BudgetOverflow(
            f"sum of inverse budgets {sum_inv!r} reached 1; partial sums "
            f"{np.cumsum(1.0 / budgets).tolist()!r}"
        )
    A_cons = float(np.max(ratios)) if consistency_constant is None \
        else float(consistency_constant)

    # admissible faces
    admissible = []
    face_sizes = []
    thresholds = []
    sums_by_level = []
    for m in range(1, M + 1):
        r = schedule.r(m)
        axis = r - 1
        Xs = schedule.side_counts(m)
        window = tuple(slice(0, int(Xs[j])) for j in range(d))
        sub = L.values[window]
        om = family.members[axis]
        transformed = om.map(sub.ravel()).reshape(sub.shape)
        line_sums = transformed.sum(axis=axis)
        X_r = int(Xs[axis])
        prod_inv = 1.0 / float(np.prod(Xs.astype(float)))
        thr = float(budgets[m - 1]) * X_r * om.value(prod_inv)
        anchors = []
        full = 0
        it = np.ndindex(line_sums.shape)
        other = [j for j in range(d) if j != axis]
        for idx in it:
            full += 1
            if line_sums[idx] <= thr + _SLACK:
                anchor = [0] * d
                for pos, j in enumerate(other):
                    anchor[j] = int(idx[pos])
                anchors.append(tuple(anchor))
        need = math.ceil(full * (budgets[m - 1] - 1.0) / budgets[m - 1] - 1e-9)
        if len(anchors) < need:
            raise NoColumn(
                f"step {m}: {len(anchors)} admissible lines of {full}, "
                f"averaging guarantees {need}"
            )
        admissible.append(anchors)
        face_sizes.append(full)
        thresholds.append(thr)
        sums_by_level.append(line_sums)

    chain = find_line_sequence(schedule, admissible, budgets=list(budgets))

    dirs = [schedule.r(m) for m in range(1, M + 1)]
    end_coord = int(schedule.x[dirs[-1] - 1, M])
    path, partials = path_from_lines(chain, dirs, end_coord, L, family)

    line_sums_sel = []
    for m in range(1, M + 1):
        axis = dirs[m - 1] - 1
        anchor = chain[m - 1]
        idx = tuple(anchor[j] for j in range(d) if j != axis)
        line_sums_sel.append(float(sums_by_level[m - 1][idx]))
    line_sums_sel = np.asarray(line_sums_sel)
    partials = np.asarray(partials)

    thresholds = np.asarray(thresholds)
    raw_total = float(np.sum(thresholds))
    display_bound = A_cons * S_star ** 2
    provable_bound = 2.0 * A_cons * S_star ** 2
    scale = max(1.0, abs(raw_total))
    if np.any(line_sums_sel > thresholds + _SLACK):
        raise InternalCheckError("a selected line exceeds its admissibility threshold")
    if np.any(partials > line_sums_sel + _SLACK):
        raise InternalCheckError("partial sums cannot exceed full line sums")
    if path.weight > raw_total + _SLACK * scale:
        raise InternalCheckError("path weight exceeds the threshold total")
    if raw_total > provable_bound + _SLACK * scale:
        raise InternalCheckError("threshold total exceeds the provable bound")

    report = BudgetReport(
        S_star=S_star,
        defects=defects,
        budgets=budgets,
        sum_inv_budgets=sum_inv,
        consistency_ratios=ratios,
        A_cons=A_cons,
        face_sizes=np.asarray(face_sizes, dtype=int),
        admissible_sizes=np.asarray([len(a) for a in admissible], dtype=int),
        thresholds=thresholds,
        selected=tuple(chain),
        line_sums=line_sums_sel,
        partial_sums=partials,
        weight=path.weight,
        raw_total=raw_total,
        display_bound=display_bound,
        provable_bound=provable_bound,
    )
    return path, report


# ---------------------------------------------------------------------------
# square-summable thinning


def square_summable_subsequence(values: Sequence[float]) -> list:
    """Greedy indices i_1 < i_2 < ... with values[i_j] < 1/j**2."""
    out = []
    j = 1
    start = 0
    vals = [float(v) for v in values]
    while True:
        found = None
        for i in range(start, len(vals)):
            if vals[i] < 1.0 / j ** 2:
                found = i
                break
        if found is None:
            return out
        out.append(found)
        start = found + 1
        j += 1


def thin_schedule_square_summable(schedule: RectangleSchedule,
                                  family: ModulusFamily) -> tuple:
    """Keep whole growth rounds (d consecutive steps) whose worst defect
    value is below 1/j**2 for the j-th kept round.

    Returns (thinned schedule, report dict).  Thinning whole rounds keeps
    the direction cycling of the growth rule intact.  The operation is
    reported, never applied implicitly by the builders.
    """
    d = schedule.d
    M = schedule.M
    if M % d != 0:
        raise ScheduleMismatch("thinning needs complete growth rounds")
    rounds = M // d
    round_values = []
    for q in range(rounds):
        worst = 0.0
        for m in range(q * d + 1, q * d + d + 1):
            X_r = int(schedule.side_counts(m)[schedule.r(m) - 1])
            worst = max(worst, family.defect(1.0 / X_r))
        round_values.append(worst)
    kept = square_summable_subsequence(round_values)
    cols = [np.array(schedule.x[:, 0])]
    kept_effective = []
    for q in kept:
        block = schedule.x[:, q * d + 1: q * d + d + 1]
        if np.any(np.diag(block) <= cols[-1]):
            # a kept round must still grow every coordinate past the last
            continue
        kept_effective.append(q)
        prev_col = cols[-1]
        for step in range(d):
            new_col = prev_col.copy()
            new_col[step] = block[step, step]
            cols.append(new_col)
            prev_col = new_col
    x_new = np.stack(cols, axis=1)
    thinned = RectangleSchedule(x_new)
    report = {
        "round_values": [float(v) for v in round_values],
        "kept_rounds": [int(q) for q in kept_effective],
        "kept_steps": int(thinned.M),
    }
    return thinned, report
