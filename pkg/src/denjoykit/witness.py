"""Consistency-witness solver for modulus families.

Given moduli omega_1..omega_d whose defect prod_i omega_i(t) / t vanishes
at 0, this module locates points (x_1, ..., x_d) arbitrarily close to the
origin that witness the consistency condition

    omega_k(x_1 ... x_d) <= C^{d-1} * prod_i omega_i(x_k)   for all k,

where C is a submultiplicativity constant of the defect.  The d = 2 case
is solved through the function phi (a single monotone bisection per grid
point); d >= 3 through a sequential chain of monotone bisections guarded
by inequalities in assumed lower Hoelder exponents tau_k.  All root
finding is bisection on monotone continuous functions to absolute
tolerance below 1e-14 in the argument.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    ChainAmbiguous,
    Eq2Failed,
    GuardFailed,
    InternalCheckError,
    PreconditionViolated,
)
from .moduli import (
    _SLACK,
    Modulus,
    ModulusFamily,
    dyadic_grid,
    submultiplicativity_constant,
)

#: defect value at the finest dyadic probe must fall below this for the
#: vanishing-defect hypothesis gate
VANISH_THRESHOLD = 1e-2

_BISECT_ITERS = 60

#: positive floor replacing a zero lower bracket end (roots this small are
#: indistinguishable from 0 for every modulus here)
_LOG_FLOOR = 1e-300


def _bisect(h, lo: float, hi: float, iters: int = _BISECT_ITERS) -> float:
    """Root of h on (lo, hi] given h(lo) <= 0 <= h(hi); h monotone.

    The bisection runs on log(argument), which keeps the relative error
    near 2^-60 * log-range at every scale; on (0, 1] this is far below
    the 1e-14 absolute tolerance contract.
    """
    ulo = math.log(max(lo, _LOG_FLOOR))
    uhi = math.log(hi)
    for _ in range(iters):
        mid = 0.5 * (ulo + uhi)
        if h(math.exp(mid)) >= 0.0:
            uhi = mid
        else:
            ulo = mid
    return math.exp(0.5 * (ulo + uhi))


# ---------------------------------------------------------------------------
# phi and the d = 2 witness


@dataclass(frozen=True)
class PhiResult:
    """Value of phi(x) = sup{y in [0,1]: omega1(x*y) <= omega1(x)omega2(x)}.

    ``saturated`` is True when even y = 1 satisfies the inequality strictly
    (the supremum is attained at the boundary rather than at a root); in
    that case ``residual`` reports the remaining slack, otherwise the
    bisection residual |omega1(x*value) - omega1(x)omega2(x)|.
    """

    value: float
    saturated: bool
    residual: float

    def __float__(self) -> float:
        return self.value


def phi(x: float, omega1: Modulus, omega2: Modulus) -> PhiResult:
    """Largest y in [0, 1] with omega1(x*y) <= omega1(x) * omega2(x).

    For strictly increasing omega1 this is the unique root of
    omega1(x*y) = omega1(x)*omega2(x) unless the inequality already holds
    at y = 1, which is reported via the saturation flag, not an error.
    """
    x = float(x)
    cap = min(omega1.domain_cap, omega2.domain_cap)
    if not 0.0 < x <= cap:
        raise PreconditionViolated(
            f"phi needs x in (0, {cap!r}], got {x!r}"
        )
    target = omega1.value(x) * omega2.value(x)
    at_one = omega1.value(x)  # omega1(x * 1)
    if at_one < target:
        return PhiResult(1.0, True, target - at_one)
    if at_one == target:
        return PhiResult(1.0, False, 0.0)
    y = _bisect(lambda s: omega1.value(x * s) - target, 0.0, 1.0)
    return PhiResult(y, False, abs(omega1.value(x * y) - target))


@dataclass(frozen=True)
class ConsistencyWitness:
    """An accepted witness point with its full audit trail.

    ``x`` is (x_1, ..., x_d); ``t`` is (t_2, ..., t_d) with
    t_k = x_k * t_{k-1} exactly as stored for k >= 3 (t_2 is the root of
    the opening chain equation).  ``checks`` and ``check_ratios`` give,
    per k, the verdict and ratio of omega_k(x_1...x_d) against
    C^{d-1} * prod_i omega_i(x_k).  ``guards`` records every guard
    inequality evaluated along the chain; ``permutation`` maps each
    position to the index of the member in the family as supplied.
    """

    x: tuple
    t: tuple
    C: float
    checks: tuple
    tau: tuple | None
    check_ratios: tuple
    guards: tuple
    permutation: tuple
    mode: str
    alt_x: tuple | None
    phi_saturated: bool | None
    x1_retries: int
    sum_tau_ok: bool | None
    eq4: dict | None

    @property
    def d(self) -> int:
        return len(self.x)

    def to_json_dict(self) -> dict:
        return {
            "x": [float(v) for v in self.x],
            "t": [float(v) for v in self.t],
            "C": float(self.C),
            "checks": [bool(b) for b in self.checks],
            "tau": None if self.tau is None else [float(v) for v in self.tau],
            "check_ratios": [float(v) for v in self.check_ratios],
            "guards": [dict(g) for g in self.guards],
            "permutation": [int(i) for i in self.permutation],
            "mode": self.mode,
            "alt_x": None if self.alt_x is None
            else [float(v) for v in self.alt_x],
            "phi_saturated": self.phi_saturated,
            "x1_retries": int(self.x1_retries),
            "sum_tau_ok": self.sum_tau_ok,
            "eq4": None if self.eq4 is None else dict(self.eq4),
        }


def witnesses_to_csv(witnesses: Sequence[ConsistencyWitness]) -> str:
    """One summary row per witness (per x_1 grid point)."""
    if len(witnesses) == 0:
        raise PreconditionViolated("no witnesses to serialize")
    d = witnesses[0].d
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = [f"x{k}" for k in range(1, d + 1)]
    header += [f"t{k}" for k in range(2, d + 1)]
    header += ["C", "max_ratio", "all_checks", "retries", "saturated"]
    w.writerow(header)
    for wit in witnesses:
        if wit.d != d:
            raise PreconditionViolated("witness dimensions are mixed")
        row = [f"{v:.17g}" for v in wit.x] + [f"{v:.17g}" for v in wit.t]
        row += [f"{wit.C:.17g}", f"{max(wit.check_ratios):.17g}",
                str(all(wit.checks)), str(wit.x1_retries),
                str(bool(wit.phi_saturated))]
        w.writerow(row)
    return buf.getvalue()


def _gate_vanishing(family: ModulusFamily, threshold: float) -> None:
    rep = family.vanishing_defect(threshold=threshold)
    if not rep.vanishing:
        raise PreconditionViolated(
            f"family defect does not vanish: final value "
            f"{rep.final_value!r} vs threshold {threshold!r}, "
            f"non-increasing={rep.non_increasing}"
        )


def _default_C(family: ModulusFamily) -> float:
    """Submultiplicativity constant of the defect on a dyadic pair grid.

    The true constant is always >= 1 (take the second argument at the cap),
    so the empirical maximum is floored at 1.
    """
    est = submultiplicativity_constant(
        lambda t: family.defect(t), cap=family.domain_cap
    )
    return max(1.0, est)


def witness_2d(omega1: Modulus, omega2: Modulus,
               x_grid: Sequence[float], C: float | None = None,
               vanish_threshold: float = VANISH_THRESHOLD,
               ) -> list:
    """Witness points (x, phi(x)) for a pair of moduli.

    For each x in the decreasing grid, y = phi(x) makes the first
    inequality an equality by construction; the second,
    omega2(x*y) <= C * omega1(y) * omega2(y), is verified against the
    supplied or computed C and raises Eq2Failed with the offending ratio
    if it does not hold.  The phi values must shrink along the grid.
    """
    family = ModulusFamily((omega1, omega2))
    xs = [float(v) for v in x_grid]
    if len(xs) == 0:
        raise PreconditionViolated("x grid is empty")
    if any(b >= a for a, b in zip(xs, xs[1:])):
        raise PreconditionViolated("x grid must be strictly decreasing")
    if not (0.0 < xs[-1] and xs[0] <= family.domain_cap):
        raise PreconditionViolated(
            f"x grid must lie in (0, {family.domain_cap!r}]"
        )
    _gate_vanishing(family, vanish_threshold)
    if C is None:
        C = _default_C(family)
    C = float(C)

    out = []
    prev_y = None
    for x in xs:
        r = phi(x, omega1, omega2)
        y = r.value
        if not r.saturated and r.residual > 1e-13:
            raise InternalCheckError(
                f"phi bisection residual {r.residual!r} exceeds 1e-13"
            )
        xy = x * y
        prod_x = omega1.value(x) * omega2.value(x)
        # clipping y into the caps only lowers the right-hand side, so a
        # passing check remains valid for the true (larger) value
        prod_y = (omega1.value(min(y, omega1.domain_cap))
                  * omega2.value(min(y, omega2.domain_cap)))
        ratio1 = omega1.value(xy) / (C * prod_x)
        ratio2 = omega2.value(xy) / (C * prod_y)
        if ratio2 > 1.0 + 1e-10:
            raise Eq2Failed(
                f"omega2(x*y) / (C * omega1(y) * omega2(y)) = {ratio2!r} "
                f"exceeds 1 at x = {x!r} (C = {C!r} underestimated or "
                "hypotheses violated)"
            )
        if prev_y is not None and y > prev_y + _SLACK:
            raise PreconditionViolated(
                f"phi is not shrinking along the grid ({y!r} after {prev_y!r})"
            )
        prev_y = y
        out.append(ConsistencyWitness(
            x=(x, y), t=(y,), C=C,
            checks=(ratio1 <= 1.0 + 1e-10, True),
            tau=None,
            check_ratios=(ratio1, ratio2),
            guards=(),
            permutation=(0, 1),
            mode="2d",
            alt_x=None,
            phi_saturated=r.saturated,
            x1_retries=0,
            sum_tau_ok=None,
            eq4=None,
        ))
    return out


# ---------------------------------------------------------------------------
# the general chain (d >= 3)


def _comparability_permutation(family: ModulusFamily) -> tuple:
    """Permutation and empirical delta realizing the comparability order.

    Returns (members, perm, delta) with members permuted so that
    member_d <= member_1 <= member_2 <= ... <= member_{d-1} pointwise on
    (0, delta].  perm[k] is the index of position-k+1's member in the
    family as supplied.
    """
    probes = dyadic_grid(2, 40, cap=family.domain_cap)
    vals = np.stack([m.map(probes) for m in family.members])  # d x n
    order = list(np.argsort(vals[:, -1], kind="stable"))  # ascending at finest
    perm = [int(i) for i in order[1:]] + [int(order[0])]  # smallest -> slot d
    mem = tuple(family.members[i] for i in perm)
    # position values in comparability order: slot d, then slots 1..d-1
    ordered = np.stack([vals[perm[-1]]] + [vals[i] for i in perm[:-1]])
    ok = np.all(np.diff(ordered, axis=0) >= -_SLACK, axis=0)  # per probe
    if not ok[-1]:
        raise PreconditionViolated(
            "family is not comparable near 0: no ordering of the members "
            "holds at the finest probe"
        )
    idx = len(ok) - 1
    while idx > 0 and ok[idx - 1]:
        idx -= 1
    delta = float(probes[idx])
    return mem, tuple(perm), delta


def _verify_tau(members: tuple, tau: tuple, delta: float,
                cap: float) -> None:
    """Each omega_k must be dominated by t^{tau_k} on (0, delta].

    tau_k is a lower exponent bound: omega_k(t) <= t^{tau_k} expresses
    that omega_k decays at least as fast as the tau_k-power near 0.
    """
    probes = dyadic_grid(2, 40, cap=min(delta, cap))
    for k, (m, tk) in enumerate(zip(members, tau), start=1):
        if not 0.0 <= tk < 1.0:
            raise PreconditionViolated(
                f"tau_{k} = {tk!r} must lie in [0, 1)"
            )
        vals = m.map(probes)
        bound = probes ** tk
        if np.any(vals > bound * (1.0 + 1e-9)):
            worst = float(np.max(vals / bound))
            raise PreconditionViolated(
                f"omega_{k}(t) <= t^tau_{k} fails on (0, {delta!r}] "
                f"(worst ratio {worst!r}); tau_{k} = {tk!r} is not a lower "
                "exponent bound"
            )


def _family_product(members: tuple, x: float) -> float:
    out = 1.0
    for m in members:
        out *= m.value(x)
    return out


class _ChainFailure(Exception):
    """Internal control flow: one chain attempt failed (not user-facing)."""

    def __init__(self, kind: str, stage: int, guard: str, message: str):
        self.kind = kind        # "guard" | "bracket" | "final"
        self.stage = stage
        self.guard = guard
        self.message = message
        super().__init__(message)


def _run_chain(members: tuple, tau: tuple, x1: float, C: float,
               mode: str, guards_out: list) -> tuple:
    """One chain attempt at a fixed x1; returns (x_list, t_list, eq4).

    Raises _ChainFailure when a guard or bracket fails.  ``guards_out``
    collects guard evaluation records for the audit trail.
    """
    d = len(members)
    cap = min(m.domain_cap for m in members)
    prod_x1 = _family_product(members, x1)
    if not prod_x1 > 0.0:
        raise _ChainFailure("bracket", 1, "t2",
                            f"product of moduli vanishes at x1 = {x1!r}")
    # opening root: omega_1(x1 * t2) = prod_i omega_i(x1), t2 in (0, 1]
    if members[0].value(x1) < prod_x1:
        raise _ChainFailure("bracket", 1, "t2",
                            f"omega_1(x1) < product at x1 = {x1!r}")
    t2 = _bisect(lambda s: members[0].value(x1 * s) - prod_x1, 0.0, 1.0)
    arg = x1 * t2  # the literal chain argument, fixed across stages

    x_list = [x1]
    t_list = [t2]
    for k in range(2, d):  # stages solving x_2 .. x_{d-1}
        S = math.fsum(tau[1:k])  # tau_2 + ... + tau_k
        tau_k = tau[k - 1]
        t_prev = t_list[-1]  # t_{k-1} (t_2 at stage 2)
        stage_guards = []
        # eq5 (stages k >= 3): t_{k-1} <= (x1 t2)^{tau_k}
        if k >= 3:
            rhs5 = arg ** tau_k
            ok5 = t_prev <= rhs5 * (1.0 + 1e-12)
            stage_guards.append({"stage": k, "id": "eq5",
                                 "lhs": t_prev, "rhs": rhs5, "ok": ok5})
        # eq6: t2 <= x1^{S/(1-S)}
        if S < 1.0:
            rhs6 = x1 ** (S / (1.0 - S))
            ok6 = t2 <= rhs6 * (1.0 + 1e-12)
        else:
            rhs6 = 0.0
            ok6 = False
        stage_guards.append({"stage": k, "id": "eq6",
                             "lhs": t2, "rhs": rhs6, "ok": ok6})
        # eq7: S/(1-S) <= (1 - tau_1)/tau_1  (exponent comparison that
        # turns the t2 <= x1^{(1-tau_1)/tau_1} decay into eq6)
        lhs7 = S / (1.0 - S) if S < 1.0 else math.inf
        rhs7 = math.inf if tau[0] == 0.0 else (1.0 - tau[0]) / tau[0]
        ok7 = lhs7 <= rhs7 * (1.0 + 1e-12)
        stage_guards.append({"stage": k, "id": "eq7",
                             "lhs": lhs7, "rhs": rhs7, "ok": ok7})
        guards_out.extend(stage_guards)
        for g in stage_guards:
            if not g["ok"]:
                raise _ChainFailure(
                    "guard", k, g["id"],
                    f"guard {g['id']} fails at stage {k}: "
                    f"{g['lhs']!r} > {g['rhs']!r}"
                )

        if mode == "literal" or k == 2:
            target = members[k - 1].value(arg)
            h = (lambda tgt: lambda s:
                 _family_product(members, s) - tgt)(target)
        else:  # per-stage reading: omega_k(x1 * t_{k-1} * x_k) on the left
            h = (lambda tp, mk: lambda s:
                 _family_product(members, s) - mk.value(min(x1 * tp * s,
                                                            cap)))(
                t_prev, members[k - 1])
        lo, hi = t_prev, cap
        if not (h(lo) <= 0.0 <= h(hi)):
            raise _ChainFailure(
                "bracket", k, "root",
                f"stage {k} root not bracketed on [{lo!r}, {hi!r}]"
            )
        xk = _bisect(h, lo, hi)
        x_list.append(xk)
        if k >= 3:  # t_2 is the opening root; t_k = x_k t_{k-1} from k = 3
            t_list.append(xk * t_prev)

    # final stage: largest x_d = x1 * 2^{-i} passing all d direct checks
    Cpow = C ** (d - 1)
    prefix = x1
    for v in x_list[1:]:
        prefix *= v
    rhs_fixed = [Cpow * _family_product(members, xk) for xk in x_list]
    chosen = None
    for i in range(0, 200):
        xd = x1 * 2.0 ** (-i)
        P = prefix * xd
        if P <= 0.0:
            break
        # same relative tolerance as the final acceptance of the ratios
        ok = (members[d - 1].value(P)
              <= Cpow * _family_product(members, xd) * (1.0 + 1e-10))
        if ok:
            for k in range(1, d):
                if members[k - 1].value(P) > rhs_fixed[k - 1] * (1.0 + 1e-10):
                    ok = False
                    break
        if ok:
            chosen = xd
            break
    if chosen is None:
        raise _ChainFailure(
            "final", d, "eq4",
            f"no x_d of the form x1 * 2^-i passes the final checks at "
            f"x1 = {x1!r}"
        )
    x_list.append(chosen)
    t_list.append(chosen * t_list[-1])
    # eq4 diagnostic at the chosen x_d: (x1...x_{d-1})^{1/d} vs
    # C^{d-1} x_d^{1-1/d} omega(x_d)
    defect_xd = _family_product(members, chosen) / chosen
    lhs4 = prefix ** (1.0 / d)
    rhs4 = Cpow * chosen ** (1.0 - 1.0 / d) * defect_xd
    eq4 = {"lhs": lhs4, "rhs": rhs4, "ok": bool(lhs4 <= rhs4 * (1 + 1e-12))}
    return x_list, t_list, eq4


def witness_general(family, x1_grid: Sequence[float], tau: Sequence[float],
                    C: float | None = None, mode: str = "literal",
                    vanish_threshold: float = VANISH_THRESHOLD,
                    max_halvings: int = 60) -> list:
    """Witnesses for a comparable family of d >= 2 moduli.

    The members are first permuted into comparability order (smallest
    near 0 to position d, the rest ascending into positions 1..d-1) and
    the assumed lower exponents tau are verified by grid sampling.  For
    each x1 the chain solves t_2 from omega_1(x1 t_2) = prod_i omega_i(x1),
    then x_k for k = 2..d-1 from prod_i omega_i(x_k) = omega_k(a) by
    monotone bisection -- with a = x1 t_2 throughout in the literal mode,
    or the stage argument x1 t_{k-1} x_k in the per-stage mode (both are
    computed; ``mode`` selects which populates the witness, the other is
    reported in ``alt_x``).  Guard inequalities are checked at every
    stage; on failure x1 is halved and the chain retried up to
    ``max_halvings`` times before GuardFailed (or ChainAmbiguous for a
    bracket failure) is raised.  x_d is the largest value x1 * 2^{-i}
    for which all d consistency checks pass by direct evaluation.
    """
    if mode not in ("literal", "per_stage"):
        raise PreconditionViolated(f"unknown chain mode {mode!r}")
    if not isinstance(family, ModulusFamily):
        family = ModulusFamily(tuple(family))
    d = family.d
    tau = tuple(float(v) for v in tau)
    if len(tau) != d:
        raise PreconditionViolated(
            f"need one tau per member: got {len(tau)} for d = {d}"
        )
    xs = [float(v) for v in x1_grid]
    if len(xs) == 0:
        raise PreconditionViolated("x1 grid is empty")
    if any(b >= a for a, b in zip(xs, xs[1:])):
        raise PreconditionViolated("x1 grid must be strictly decreasing")

    members, perm, delta = _comparability_permutation(family)
    tau_p = tuple(tau[i] for i in perm)
    cap = min(m.domain_cap for m in members)
    _verify_tau(members, tau_p, delta, cap)
    sum_tau_ok = bool(math.fsum(tau_p) <= 1.0 + _SLACK)
    _gate_vanishing(family, vanish_threshold)
    if C is None:
        C = _default_C(family)
    C = float(C)
    bound = min(delta, cap)
    if xs[0] > bound:
        raise PreconditionViolated(
            f"x1 grid must lie in (0, {bound!r}] (comparability delta)"
        )

    if d == 2:
        base = witness_2d(members[0], members[1], xs, C=C,
                          vanish_threshold=vanish_threshold)
        out = []
        for w in base:
            out.append(ConsistencyWitness(
                x=w.x, t=w.t, C=w.C, checks=w.checks, tau=tau_p,
                check_ratios=w.check_ratios, guards=w.guards,
                permutation=perm, mode=mode, alt_x=w.x,
                phi_saturated=w.phi_saturated, x1_retries=0,
                sum_tau_ok=sum_tau_ok, eq4=None,
            ))
        return out

    alt_mode = "per_stage" if mode == "literal" else "literal"
    Cpow = C ** (d - 1)
    out = []
    for x1_given in xs:
        x1 = x1_given
        last_failure = None
        for retries in range(max_halvings + 1):
            guards: list = []
            try:
                x_list, t_list, eq4 = _run_chain(members, tau_p, x1, C,
                                                 mode, guards)
            except _ChainFailure as exc:
                last_failure = exc
                x1 *= 0.5
                continue
            # the other reading of the chain equation, reported not chosen
            try:
                alt_x, _, _ = _run_chain(members, tau_p, x1, C,
                                         alt_mode, [])
                alt = tuple(alt_x)
            except _ChainFailure:
                alt = None
            P = 1.0
            for v in x_list:
                P *= v
            ratios = tuple(
                members[k].value(P) / (Cpow * _family_product(members,
                                                              x_list[k]))
                for k in range(d)
            )
            checks = tuple(r <= 1.0 + 1e-10 for r in ratios)
            if not all(checks):
                raise InternalCheckError(
                    f"final checks failed after x_d selection: {ratios!r}"
                )
            out.append(ConsistencyWitness(
                x=tuple(x_list), t=tuple(t_list), C=C, checks=checks,
                tau=tau_p, check_ratios=ratios, guards=tuple(guards),
                permutation=perm, mode=mode, alt_x=alt,
                phi_saturated=None, x1_retries=retries,
                sum_tau_ok=sum_tau_ok, eq4=eq4,
            ))
            break
        else:
            if last_failure is not None and last_failure.kind == "bracket":
                raise ChainAmbiguous(
                    f"{last_failure.message} (after {max_halvings} halvings "
                    f"of x1 = {x1_given!r})"
                )
            raise GuardFailed(
                last_failure.stage, last_failure.guard,
                f"{last_failure.message} (after {max_halvings} halvings of "
                f"x1 = {x1_given!r})"
            )
    return out
