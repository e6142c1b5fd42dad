"""Tests for column selection, rectangle schedules and lattice paths."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from denjoykit import moduli as mod
from denjoykit import selection as sel
from denjoykit.errors import (
    InternalCheckError,
    MassOverflow,
    NoColumn,
    NoPath,
    PreconditionViolated,
    ScheduleMismatch,
)

ID = mod.Hoelder(1.0)
H05 = mod.Hoelder(0.5)
H07 = mod.Hoelder(0.7)


# ---------------------------------------------------------------------------
# LengthArray


class TestLengthArray:
    def test_mass_and_dims(self):
        L = sel.LengthArray(np.full((3, 4), 1.0 / 12))
        assert L.dims == (3, 4)
        assert L.d == 2
        assert L.total_mass == pytest.approx(1.0, abs=1e-15)

    def test_mass_overflow(self):
        with pytest.raises(MassOverflow):
            sel.LengthArray(np.full((2, 2), 0.3))

    def test_negative_rejected(self):
        with pytest.raises(PreconditionViolated):
            sel.LengthArray(np.array([[0.1, -0.1]]))

    def test_product_geometric_normalizes(self):
        L = sel.LengthArray.product_geometric((12, 29), (0.5, 0.5))
        assert abs(L.total_mass - 1.0) <= 1e-12
        # l_{i,j} = c * 2^{-i} * 2^{-j} with c = 1/sum
        ratio = L.values[3, 5] / L.values[0, 0]
        assert ratio == pytest.approx(2.0 ** -8, rel=1e-12)

    def test_product_geometric_explicit_c(self):
        # c = (1-p)(1-q) = 1/4 gives mass (1 - p^n)(1 - q^m) < 1
        L = sel.LengthArray.product_geometric((10, 10), (0.5, 0.5), c=0.25)
        assert L.values[0, 0] == pytest.approx(0.25, abs=0.0)
        assert L.total_mass < 1.0

    def test_json_roundtrip(self):
        L = sel.LengthArray.product_geometric((3, 4, 2), (0.5, 0.4, 0.3))
        d = L.to_json_dict()
        assert d["dims"] == [3, 4, 2]
        L2 = sel.LengthArray.from_json_dict(d)
        assert np.array_equal(L.values, L2.values)

    def test_csv_roundtrip(self):
        L = sel.LengthArray.product_geometric((3, 4), (0.5, 0.5))
        text = L.to_csv()
        L2 = sel.LengthArray.from_csv(text)
        assert np.array_equal(L.values, L2.values)

    def test_csv_needs_2d(self):
        L = sel.LengthArray(np.full((2, 2, 2), 0.1))
        with pytest.raises(PreconditionViolated):
            L.to_csv()


# ---------------------------------------------------------------------------
# column selection


def brute_force_column(arr, omega):
    sums = [sum(omega.value(v) for v in arr[:, k]) for k in range(arr.shape[1])]
    best = min(range(len(sums)), key=lambda k: (sums[k], k))
    return best + 1, sums


class TestSelectColumn:
    def test_all_equal_achieves_bound_exactly(self):
        m, n = 3, 4
        L = sel.LengthArray(np.full((m, n), 1.0 / (m * n)))
        k = sel.select_column(L, ID)
        assert k == 1
        col = float(ID.map(L.values[:, 0]).sum())
        assert col == pytest.approx(m * ID.value(1.0 / (m * n)), abs=0.0)

    def test_single_row_picks_smaller(self):
        L = sel.LengthArray(np.array([[0.9, 0.1]]))
        assert sel.select_column(L, ID) == 2

    def test_tie_break_smallest_index(self):
        L = sel.LengthArray(np.array([[0.2, 0.1, 0.1, 0.2]]))
        assert sel.select_column(L, ID) == 2

    def test_matches_brute_force_random(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            m = int(rng.integers(1, 9))
            n = int(rng.integers(1, 9))
            vals = rng.random((m, n))
            vals /= vals.sum() * (1.0 + rng.random())
            L = sel.LengthArray(vals)
            for om in (ID, H05, H07):
                k = sel.select_column(L, om)
                kb, sums = brute_force_column(vals, om)
                assert k == kb
                assert sums[k - 1] <= m * om.value(1.0 / (m * n)) + 1e-12

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10 ** 6))
    def test_bound_property(self, m, n, seed):
        rng = np.random.default_rng(seed)
        vals = rng.random((m, n))
        vals /= max(vals.sum(), 1.0)
        L = sel.LengthArray(vals)
        k = sel.select_column(L, H07)
        col = float(H07.map(vals[:, k - 1]).sum())
        assert col <= m * H07.value(1.0 / (m * n)) + 1e-12


class TestAdmissibleColumns:
    def test_example(self):
        L = sel.LengthArray(np.array([[0.7, 0.1, 0.1, 0.1]]))
        cols = sel.admissible_columns(L, ID, 2.0)
        assert cols == (2, 3, 4)

    def test_large_budget_keeps_all(self):
        vals = np.array([[0.7, 0.1, 0.1, 0.1]])
        L = sel.LengthArray(vals)
        n = 4
        worst = max(float(ID.map(vals[:, k]).sum()) for k in range(n))
        A = worst / ID.value(1.0 / n) + 1.0
        assert sel.admissible_columns(L, ID, A) == (1, 2, 3, 4)

    def test_proportion_bound_random(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            m = int(rng.integers(1, 13))
            n = int(rng.integers(1, 13))
            vals = rng.random((m, n))
            vals /= vals.sum() * (1.0 + rng.random())
            L = sel.LengthArray(vals)
            for A in (1.5, 2.0, 5.0):
                cols = sel.admissible_columns(L, H05, A)
                need = math.ceil((1.0 - 1.0 / A) * n - 1e-9)
                assert len(cols) >= need
                bound = A * m * H05.value(1.0 / (m * n))
                sums = H05.map(vals.ravel()).reshape(vals.shape).sum(axis=0)
                expected = tuple(k + 1 for k in range(n)
                                 if sums[k] <= bound + 1e-12)
                assert cols == expected

    def test_budget_must_exceed_one(self):
        L = sel.LengthArray(np.array([[0.5, 0.5]]))
        with pytest.raises(PreconditionViolated):
            sel.admissible_columns(L, ID, 1.0)


# ---------------------------------------------------------------------------
# RectangleSchedule


class TestRectangleSchedule:
    def test_growth_rule_enforced(self):
        # coordinate 2 grows at step 1 instead of coordinate 1
        with pytest.raises(ScheduleMismatch):
            sel.RectangleSchedule(np.array([[0, 0], [0, 1]]))

    def test_simultaneous_growth_rejected(self):
        with pytest.raises(ScheduleMismatch):
            sel.RectangleSchedule(np.array([[0, 1], [0, 1]]))

    def test_non_integer_rejected(self):
        with pytest.raises(ScheduleMismatch):
            sel.RectangleSchedule(np.array([[0.0, 1.5], [0.0, 0.0]]))

    def test_r_cycles(self):
        s = sel.RectangleSchedule(np.array(
            [[0, 1, 1, 1, 2], [0, 0, 1, 1, 1], [0, 0, 0, 1, 1]]))
        assert [s.r(m) for m in range(1, 5)] == [1, 2, 3, 1]
        assert list(s.side_counts(4)) == [3, 2, 2]

    def test_from_proposition_d2_frozen(self):
        s = sel.RectangleSchedule.from_proposition([0.6, 0.7], 2.0, 6)
        expected = np.array([
            [0, 1, 1, 4, 4, 11, 11],
            [0, 0, 3, 3, 10, 10, 28],
        ])
        assert np.array_equal(s.x, expected)
        # oracle: X = floor(2 ** (alpha_k * (m + 1))) at each growth step
        for m in range(1, 7):
            k = s.r(m)
            alpha = [0.6, 0.7][k - 1]
            assert s.x[k - 1, m] == math.floor(2.0 ** (alpha * (m + 1))) - 1

    def test_from_proposition_d3_frozen(self):
        s = sel.RectangleSchedule.from_proposition([0.4] * 3, 2.0, 9)
        assert list(s.x[0, [1, 4, 7]]) == [1, 4, 11]
        assert list(s.x[1, [2, 5, 8]]) == [2, 5, 15]
        assert list(s.x[2, [3, 6, 9]]) == [3, 8, 20]
        assert list(s.x[:, 9] + 1) == [12, 16, 21]
        # offset oracle: 2 is the smallest shift with floor(2^{0.4(1+o)}) >= 2
        for off in range(2):
            assert math.floor(2.0 ** (0.4 * (1 + off))) < 2
        assert math.floor(2.0 ** (0.4 * 3)) >= 2

    def test_from_proposition_explicit_bad_offset(self):
        with pytest.raises(PreconditionViolated):
            sel.RectangleSchedule.from_proposition([0.4] * 3, 2.0, 9, offset=0)

    def test_staircase_corners_frozen(self):
        s = sel.RectangleSchedule.from_proposition([0.6, 0.7], 2.0, 6)
        i_seq, j_seq = s.staircase_corners()
        assert i_seq == [0, 0, 1, 4, 11]
        assert j_seq == [0, 0, 3, 10, 28]

    def test_staircase_needs_even_d2(self):
        s3 = sel.RectangleSchedule.from_proposition([0.4] * 3, 2.0, 9)
        with pytest.raises(ScheduleMismatch):
            s3.staircase_corners()
        s_odd = sel.RectangleSchedule(np.array([[0, 1], [0, 0]]))
        with pytest.raises(ScheduleMismatch):
            s_odd.staircase_corners()

    def test_alpha_range_validated(self):
        with pytest.raises(PreconditionViolated):
            sel.RectangleSchedule.from_proposition([1.0, 0.5], 2.0, 4)
        with pytest.raises(PreconditionViolated):
            sel.RectangleSchedule.from_proposition([0.5, 0.5], 1.0, 4)


# ---------------------------------------------------------------------------
# LatticePath validation


class TestLatticePath:
    def _mk(self, pts, labs):
        pts = np.asarray(pts)
        labs = np.asarray(labs)
        lv = np.zeros(pts.shape[0])
        om = np.zeros(pts.shape[0])
        return sel.LatticePath(pts, labs, lv, om, 0.0)

    def test_origin_required(self):
        with pytest.raises(PreconditionViolated):
            self._mk([[1, 0], [1, 1]], [2, 2])

    def test_unit_steps_required(self):
        with pytest.raises(PreconditionViolated):
            self._mk([[0, 0], [1, 1]], [1, 1])

    def test_label_matches_step(self):
        with pytest.raises(PreconditionViolated):
            self._mk([[0, 0], [1, 0]], [2, 1])

    def test_csv_columns(self):
        path = self._mk([[0, 0], [1, 0], [1, 1]], [1, 2, 2])
        lines = path.to_csv().splitlines()
        assert lines[0] == "n,x1,x2,xi,l_value,omega_value,running_weight"
        assert lines[1].startswith("0,0,0,1,")
        assert len(lines) == 4


# ---------------------------------------------------------------------------
# 2-d staggered builder


@pytest.fixture(scope="module")
def product_instance():
    fam = mod.ModulusFamily((mod.Hoelder(0.6), mod.Hoelder(0.7)))
    sched = sel.RectangleSchedule.from_proposition([0.6, 0.7], 2.0, 6)
    L = sel.LengthArray.product_geometric((12, 29), (0.5, 0.5))
    return L, sched, fam


class TestBuildPath2d:
    def test_degenerate_single_cell(self):
        fam = mod.ModulusFamily((H05, H07))
        sched = sel.RectangleSchedule(np.array([[0], [0]]))
        L = sel.LengthArray(np.array([[0.25]]))
        path, rep = sel.build_path_2d(L, sched, fam)
        assert path.points.shape == (1, 2)
        assert path.labels[0] == 2
        assert path.weight == pytest.approx(H07.value(0.25), abs=0.0)
        assert rep.bound_total == 0.0

    def test_product_instance_frozen(self, product_instance):
        L, sched, fam = product_instance
        path, rep = sel.build_path_2d(L, sched, fam)
        assert np.array_equal(path.points[0], [0, 0])
        assert np.array_equal(path.points[-1], [11, 28])
        assert list(rep.selected_line) == [0, 3, 1, 10, 4, 28]
        assert path.weight == pytest.approx(1.0282484756749914, abs=1e-12)
        assert rep.bound_total == pytest.approx(5.353617369540213, rel=1e-12)

    def test_windows_and_bounds(self, product_instance):
        L, sched, fam = product_instance
        path, rep = sel.build_path_2d(L, sched, fam)
        i_seq, j_seq = sched.staircase_corners()
        om1, om2 = fam.members
        K = len(i_seq) - 2
        for m in range(K):
            # odd rectangle bound: Y * omega2(1/(XY)) over window
            X = i_seq[m + 1] - i_seq[m] + 1
            Y = j_seq[m + 2] - j_seq[m] + 1
            assert rep.side_X[2 * m] == X and rep.side_Y[2 * m] == Y
            assert rep.bound_term[2 * m] == pytest.approx(
                Y * om2.value(1.0 / (X * Y)), rel=1e-14)
            v = rep.selected_line[2 * m]
            assert i_seq[m] <= v <= i_seq[m + 1]
            full = float(om2.map(
                L.values[v, j_seq[m]:j_seq[m + 2] + 1]).sum())
            assert full == pytest.approx(rep.line_sum[2 * m], rel=1e-14)
            assert full <= rep.bound_term[2 * m] + 1e-12
            # even rectangle
            Xe = i_seq[m + 2] - i_seq[m] + 1
            Ye = j_seq[m + 2] - j_seq[m + 1] + 1
            assert rep.side_X[2 * m + 1] == Xe and rep.side_Y[2 * m + 1] == Ye
            h = rep.selected_line[2 * m + 1]
            assert j_seq[m + 1] <= h <= j_seq[m + 2]
            full = float(om1.map(
                L.values[i_seq[m]:i_seq[m + 2] + 1, h]).sum())
            assert full == pytest.approx(rep.line_sum[2 * m + 1], rel=1e-14)
            assert full <= rep.bound_term[2 * m + 1] + 1e-12

    def test_weight_recompute_and_bound(self, product_instance):
        L, sched, fam = product_instance
        path, rep = sel.build_path_2d(L, sched, fam)
        w = sel.path_weight(path.points, path.labels, L, fam)
        assert abs(w - path.weight) <= 1e-12
        assert path.weight <= rep.bound_total + 1e-12
        assert math.fsum(rep.partial_sum) == pytest.approx(path.weight, abs=1e-12)
        assert np.all(rep.partial_sum <= rep.line_sum + 1e-12)

    def test_monotone_staircase(self, product_instance):
        L, sched, fam = product_instance
        path, _ = sel.build_path_2d(L, sched, fam)
        diffs = np.diff(path.points, axis=0)
        assert np.all(diffs >= 0)
        assert np.all(diffs.sum(axis=1) == 1)

    def test_random_masses_always_bounded(self):
        fam = mod.ModulusFamily((mod.Hoelder(0.6), mod.Hoelder(0.7)))
        sched = sel.RectangleSchedule.from_proposition([0.6, 0.7], 2.0, 6)
        rng = np.random.default_rng(23)
        for _ in range(25):
            vals = rng.random((12, 29))
            vals /= vals.sum() * (1.0 + rng.random())
            L = sel.LengthArray(vals)
            path, rep = sel.build_path_2d(L, sched, fam)
            assert path.weight <= rep.bound_total + 1e-12
            w = sel.path_weight(path.points, path.labels, L, fam)
            assert abs(w - path.weight) <= 1e-12

    def test_array_too_small(self, product_instance):
        _, sched, fam = product_instance
        small = sel.LengthArray(np.full((12, 28), 1e-4))
        with pytest.raises(ScheduleMismatch):
            sel.build_path_2d(small, sched, fam)


# ---------------------------------------------------------------------------
# line chains


def geometric_chain_exists(schedule, admissible):
    """Brute-force oracle: try every tuple with the geometric verifier."""
    for combo in itertools.product(*admissible):
        if sel.verify_line_sequence(schedule, list(combo)):
            return True
    return False


def random_d3_schedule(rng, M):
    x = np.zeros((3, M + 1), dtype=np.int64)
    x[:, 0] = rng.integers(0, 3, size=3)
    for m in range(1, M + 1):
        k = (m - 1) % 3
        x[:, m] = x[:, m - 1]
        x[k, m] = x[k, m - 1] + int(rng.integers(1, 3))
    return sel.RectangleSchedule(x)


class TestFindLineSequence:
    def test_all_admissible_trivial(self):
        s = sel.RectangleSchedule.from_proposition([0.4] * 3, 2.0, 6)
        adm = [sel.all_lines(s, m) for m in range(1, 7)]
        chain = sel.find_line_sequence(s, adm)
        assert len(chain) == 6
        assert sel.verify_line_sequence(s, chain)

    def test_anchor_convention(self):
        s = sel.RectangleSchedule.from_proposition([0.4] * 3, 2.0, 6)
        lines1 = sel.all_lines(s, 1)
        # travel slot r(1)=1 is zero; remaining slots span the rectangle
        assert all(a[0] == 0 for a in lines1)
        assert len(lines1) == (int(s.x[1, 1]) + 1) * (int(s.x[2, 1]) + 1)

    def test_bad_anchor_rejected(self):
        s = sel.RectangleSchedule.from_proposition([0.4] * 3, 2.0, 6)
        adm = [sel.all_lines(s, m) for m in range(1, 7)]
        adm[0] = [(1, 0, 0)]  # travel slot must carry 0
        with pytest.raises(ScheduleMismatch):
            sel.find_line_sequence(s, adm)

    def test_blocked_instance_no_path(self):
        # X=(2,2,2): after removals no chain can pass level 3
        s = sel.RectangleSchedule(np.array(
            [[0, 1, 1, 1], [0, 0, 1, 1], [0, 0, 0, 1]]))
        adm = [sel.all_lines(s, m) for m in range(1, 4)]
        adm[1] = [a for a in adm[1] if a != (1, 0, 0)]
        adm[2] = [a for a in adm[2] if a[0] != 0]
        assert not geometric_chain_exists(s, adm)
        with pytest.raises(NoPath):
            sel.find_line_sequence(s, adm)

    def test_blocked_instance_feasible_sibling(self):
        # removing one fewer level-3 line restores a chain
        s = sel.RectangleSchedule(np.array(
            [[0, 1, 1, 1], [0, 0, 1, 1], [0, 0, 0, 1]]))
        adm = [sel.all_lines(s, m) for m in range(1, 4)]
        adm[1] = [a for a in adm[1] if a != (1, 0, 0)]
        adm[2] = [a for a in adm[2] if a != (0, 0, 0)]
        chain = sel.find_line_sequence(s, adm)
        assert sel.verify_line_sequence(s, chain)

    def test_matches_brute_force_random(self):
        rng = np.random.default_rng(101)
        agree_no_path = 0
        for _ in range(120):
            M = int(rng.integers(1, 5))
            s = random_d3_schedule(rng, M)
            adm = []
            for m in range(1, M + 1):
                lines = sel.all_lines(s, m)
                keep = [a for a in lines if rng.random() < 0.6]
                adm.append(keep)
            if any(len(a) == 0 for a in adm):
                continue
            expected = geometric_chain_exists(s, adm)
            try:
                chain = sel.find_line_sequence(s, adm)
                assert expected
                assert sel.verify_line_sequence(s, chain)
                assert all(chain[m] in set(adm[m]) for m in range(M))
            except NoPath:
                assert not expected
                agree_no_path += 1
        assert agree_no_path > 0  # the sample must exercise both outcomes

    def test_budget_density_violation(self):
        s = sel.RectangleSchedule.from_proposition([0.4] * 3, 2.0, 6)
        adm = [sel.all_lines(s, m) for m in range(1, 7)]
        adm[5] = adm[5][: len(adm[5]) // 4]  # keep only a quarter
        with pytest.raises(PreconditionViolated):
            sel.find_line_sequence(s, adm, budgets=[3.0] * 6)

    def test_budget_sum_violation(self):
        s = sel.RectangleSchedule.from_proposition([0.4] * 3, 2.0, 6)
        adm = [sel.all_lines(s, m) for m in range(1, 7)]
        with pytest.raises(PreconditionViolated):
            sel.find_line_sequence(s, adm, budgets=[2.0] * 6)

    def test_budget_not_above_one(self):
        s = sel.RectangleSchedule.from_proposition([0.4] * 3, 2.0, 6)
        adm = [sel.all_lines(s, m) for m in range(1, 7)]
        with pytest.raises(PreconditionViolated):
            sel.find_line_sequence(s, adm, budgets=[1.0] + [20.0] * 5)

    def test_budget_guarantee_holds(self):
        # within valid budgets a chain always exists (sampled check)
        rng = np.random.default_rng(57)
        for _ in range(60):
            M = int(rng.integers(2, 5))
            s = random_d3_schedule(rng, M)
            budgets = [float(M) + 1.0] * M  # sum 1/A = M/(M+1) < 1
            adm = []
            for m in range(1, M + 1):
                lines = sel.all_lines(s, m)
                max_remove = math.floor(len(lines) / budgets[m - 1])
                n_remove = int(rng.integers(0, max_remove + 1))
                idx = set(rng.permutation(len(lines))[:n_remove].tolist())
                adm.append([a for i, a in enumerate(lines) if i not in idx])
            chain = sel.find_line_sequence(s, adm, budgets=budgets)
            assert sel.verify_line_sequence(s, chain)


# ---------------------------------------------------------------------------
# general walker and builder


@pytest.fixture(scope="module")
def d3_instance():
    fam = mod.ModulusFamily(tuple(mod.Hoelder(0.4) for _ in range(3)))
    sched = sel.RectangleSchedule.from_proposition([0.4] * 3, 2.0, 9)
    L = sel.LengthArray.product_geometric((12, 16, 21), (0.5, 0.5, 0.5))
    return L, sched, fam


class TestPathFromLines:
    def test_2d_cross_check(self, product_instance=None):
        fam = mod.ModulusFamily((mod.Hoelder(0.6), mod.Hoelder(0.7)))
        sched = sel.RectangleSchedule.from_proposition([0.6, 0.7], 2.0, 6)
        L = sel.LengthArray.product_geometric((12, 29), (0.5, 0.5))
        path, rep = sel.build_path_2d(L, sched, fam)
        anchors, dirs = [], []
        K = len(rep.selected_line) // 2
        for m in range(K):
            anchors.append((int(rep.selected_line[2 * m]), 0))
            dirs.append(2)
            anchors.append((0, int(rep.selected_line[2 * m + 1])))
            dirs.append(1)
        i_seq, _ = sched.staircase_corners()
        p2, partials = sel.path_from_lines(anchors, dirs, i_seq[-1], L, fam)
        assert np.array_equal(p2.points, path.points)
        assert np.array_equal(p2.labels, path.labels)
        assert abs(p2.weight - path.weight) <= 1e-12
        assert np.allclose(partials, rep.partial_sum, atol=1e-15)

    def test_non_intersecting_rejected(self):
        fam = mod.ModulusFamily((mod.Hoelder(0.4),) * 3)
        L = sel.LengthArray(np.full((3, 3, 3), 1.0 / 27))
        anchors = [(0, 0, 0), (0, 0, 1)]  # differ in slot 3, not allowed
        with pytest.raises(PreconditionViolated):
            sel.path_from_lines(anchors, [1, 2], 2, L, fam)

    def test_single_line(self):
        fam = mod.ModulusFamily((H05, H07))
        L = sel.LengthArray(np.full((4, 1), 0.25))
        path, partials = sel.path_from_lines([(0, 0)], [1], 3, L, fam)
        assert path.points.shape == (4, 2)
        assert np.all(path.labels == 1)
        assert partials[0] == pytest.approx(path.weight, abs=0.0)


class TestBuildPathGeneral:
    def test_budget_identity(self, d3_instance):
        L, sched, fam = d3_instance
        _, rep = sel.build_path_general(L, sched, fam)
        # direct oracle for S_star and the budget identity sum 1/A = 1/2
        terms = []
        for m in range(1, 10):
            r = sched.r(m)
            X = int(sched.side_counts(m)[r - 1])
            t = 1.0 / X
            terms.append(math.sqrt(fam.defect(t)))
        assert rep.S_star == pytest.approx(math.fsum(terms), rel=1e-14)
        assert rep.sum_inv_budgets == pytest.approx(0.5, abs=1e-12)
        assert np.all(rep.budgets >= 2.0)

    def test_frozen_d3_values(self, d3_instance):
        L, sched, fam = d3_instance
        path, rep = sel.build_path_general(L, sched, fam)
        assert rep.S_star == pytest.approx(7.464944975104944, rel=1e-13)
        assert rep.A_cons == pytest.approx(1.8250930256796174, rel=1e-13)
        assert rep.raw_total == pytest.approx(167.15189278166056, rel=1e-12)
        assert path.weight == pytest.approx(1.792470236906793, abs=1e-12)

    def test_bound_chain(self, d3_instance):
        L, sched, fam = d3_instance
        path, rep = sel.build_path_general(L, sched, fam)
        assert path.weight <= math.fsum(rep.line_sums) + 1e-12
        assert np.all(rep.line_sums <= rep.thresholds + 1e-12)
        assert rep.raw_total <= rep.provable_bound + 1e-9
        assert rep.provable_bound == pytest.approx(
            2.0 * rep.A_cons * rep.S_star ** 2, rel=1e-14)
        assert rep.display_bound == pytest.approx(
            rep.A_cons * rep.S_star ** 2, rel=1e-14)

    def test_consistency_ratio_oracle(self, d3_instance):
        L, sched, fam = d3_instance
        _, rep = sel.build_path_general(L, sched, fam)
        for m in range(1, 10):
            r = sched.r(m)
            Xs = sched.side_counts(m).astype(float)
            lhs = fam.members[r - 1].value(1.0 / float(np.prod(Xs)))
            rhs = np.prod([fam.members[k].value(1.0 / Xs[r - 1])
                           for k in range(3)])
            assert rep.consistency_ratios[m - 1] == pytest.approx(
                lhs / rhs, rel=1e-12)
        assert rep.A_cons == pytest.approx(
            float(np.max(rep.consistency_ratios)), abs=0.0)

    def test_path_validity(self, d3_instance):
        L, sched, fam = d3_instance
        path, rep = sel.build_path_general(L, sched, fam)
        assert np.all(path.points[0] == 0)
        w = sel.path_weight(path.points, path.labels, L, fam)
        assert abs(w - path.weight) <= 1e-12
        assert set(int(v) for v in path.labels) <= {1, 2, 3}
        # every selected line is admissible and the chain intersects
        assert sel.verify_line_sequence(sched, list(rep.selected))
        assert math.fsum(rep.partial_sums) == pytest.approx(
            path.weight, abs=1e-12)

    def test_caller_supplied_constant(self, d3_instance):
        L, sched, fam = d3_instance
        _, rep = sel.build_path_general(L, sched, fam, consistency_constant=2.0)
        assert rep.A_cons == 2.0
        assert rep.provable_bound == pytest.approx(
            4.0 * rep.S_star ** 2, rel=1e-14)

    def test_degenerate_m0(self):
        fam = mod.ModulusFamily((H05, H07))
        sched = sel.RectangleSchedule(np.array([[0], [0]]))
        L = sel.LengthArray(np.array([[0.04]]))
        path, rep = sel.build_path_general(L, sched, fam)
        assert path.points.shape == (1, 2)
        assert path.labels[0] == 1
        assert path.weight == pytest.approx(H05.value(0.04), abs=0.0)

    def test_dimension_mismatch(self, d3_instance):
        L, sched, _ = d3_instance
        fam2 = mod.ModulusFamily((H05, H07))
        with pytest.raises(ScheduleMismatch):
            sel.build_path_general(L, sched, fam2)

    def test_random_masses_bounded(self):
        fam = mod.ModulusFamily((mod.Hoelder(0.4),) * 3)
        sched = sel.RectangleSchedule.from_proposition([0.4] * 3, 2.0, 6)
        dims = tuple(int(v) + 1 for v in sched.x[:, -1])
        rng = np.random.default_rng(37)
        for _ in range(10):
            vals = rng.random(dims)
            vals /= vals.sum() * (1.0 + rng.random())
            L = sel.LengthArray(vals)
            path, rep = sel.build_path_general(L, sched, fam)
            assert path.weight <= rep.raw_total + 1e-9
            w = sel.path_weight(path.points, path.labels, L, fam)
            assert abs(w - path.weight) <= 1e-12


# ---------------------------------------------------------------------------
# square-summable thinning


class TestSquareSummable:
    def test_greedy_example(self):
        vals = [0.5, 0.2, 0.26, 0.09, 0.11, 0.01]
        assert sel.square_summable_subsequence(vals) == [0, 1, 3, 5]

    def test_empty_when_nothing_qualifies(self):
        assert sel.square_summable_subsequence([2.0, 3.0]) == []

    def test_thin_schedule(self):
        fam = mod.ModulusFamily((mod.Hoelder(0.4),) * 3)
        sched = sel.RectangleSchedule.from_proposition([0.4] * 3, 2.0, 9)
        thinned, report = sel.thin_schedule_square_summable(sched, fam)
        assert thinned.M % 3 == 0
        assert len(report["round_values"]) == 3
        # defect of x^{0.4} cubed at 1/X is (1/X)^{0.2}; round maxima
        for q, worst in enumerate(report["round_values"]):
            expect = max(
                (1.0 / int(sched.side_counts(m)[sched.r(m) - 1])) ** 0.2
                for m in range(3 * q + 1, 3 * q + 4))
            assert worst == pytest.approx(expect, rel=1e-13)
        # thinned schedule still satisfies the growth rule (constructor ran)
        assert isinstance(thinned, sel.RectangleSchedule)

    def test_thin_needs_whole_rounds(self):
        fam = mod.ModulusFamily((mod.Hoelder(0.4),) * 3)
        sched = sel.RectangleSchedule.from_proposition([0.4] * 3, 2.0, 8)
        with pytest.raises(ScheduleMismatch):
            sel.thin_schedule_square_summable(sched, fam)
