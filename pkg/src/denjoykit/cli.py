"""Reproducible experiment driver for the library.

Every subcommand resolves a fully-defaulted configuration (overridable
through a JSON file), runs deterministically, and writes a ``report.json``
embedding the canonical config, its SHA-256 hash and the package version.
Tabular results go to sidecar CSV files with ``--format csv`` (the
default) or are embedded as CSV text with ``--format json``.  All floats
are printed with 17 significant digits and no output depends on wall
clock, locale or filesystem layout, so identical configs produce
byte-identical reports.

Exit codes: 0 success, 2 config error, 3 hypothesis/precondition failure,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import math
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (
    continued_fraction_convergent,
    denjoy_construct,
    diffeo_from_dict,
    fixed_point_certificate,
    minimal_cover_N,
    rectangle_length_array,
    rotation_number,
    word_orbit,
)
from .errors import (
    HypothesisError,
    InternalCheckError,
    NoCoverWithin,
    PreconditionViolated,
)
from .moduli import (
    ModulusFamily,
    compare,
    consistency_sequences,
    dyadic_grid,
    modulus_from_dict,
    submultiplicativity_constant,
)
from .selection import (
    LengthArray,
    RectangleSchedule,
    admissible_columns,
    build_path_2d,
    build_path_general,
    path_from_lines,
    select_column,
)
from .witness import witness_2d, witness_general, witnesses_to_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_HYPOTHESIS = 3
EXIT_INTERNAL = 4


class ConfigError(Exception):
    """The configuration cannot be parsed into a runnable experiment."""


# ---------------------------------------------------------------------------
# canonical JSON with 17-significant-digit floats


def _fmt_float(v: float) -> str:
    if math.isnan(v):
        return '"nan"'
    if math.isinf(v):
        return '"inf"' if v > 0 else '"-inf"'
    return f"{v:.17g}"


def _emit(obj, indent: int | None, level: int) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = []
        for k in sorted(obj):
            if not isinstance(k, str):
                raise ConfigError(f"non-string key {k!r} in report document")
            items.append((json.dumps(k), _emit(obj[k], indent, level + 1)))
        if indent is None:
            return "{" + ",".join(f"{k}:{v}" for k, v in items) + "}"
        if not items:
            return "{}"
        pad = " " * (indent * (level + 1))
        close = " " * (indent * level)
        body = ",\n".join(f"{pad}{k}: {v}" for k, v in items)
        return "{\n" + body + "\n" + close + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        vals = [_emit(v, indent, level + 1) for v in obj]
        if indent is None:
            return "[" + ",".join(vals) + "]"
        if not vals:
            return "[]"
        pad = " " * (indent * (level + 1))
        close = " " * (indent * level)
        return "[\n" + ",\n".join(pad + v for v in vals) + "\n" + close + "]"
    raise ConfigError(f"cannot serialize {type(obj).__name__} in report")


def canonical_json(obj) -> str:
    """Sorted keys, 2-space indent, 17-significant-digit floats."""
    return _emit(obj, 2, 0) + "\n"


def config_sha256(cfg: dict) -> str:
    return hashlib.sha256(_emit(cfg, None, 0).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# configuration handling


def _deep_merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        here = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {here!r}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _deep_merge(base[key], val, here + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


SQRT2M1_CF = [0] + [2] * 50

DEFAULTS: dict = {
    "moduli": {
        "family": [{"kind": "hoelder", "alpha": 0.6},
                   {"kind": "hoelder", "alpha": 0.7}],
        "a": 2.0,
        "M": 30,
        "exact_powers": False,
        "threshold": 0.01,
        "defect_k_max": 20,
        "consistency": True,
    },
    "select": {
        "mode": "product",
        "dims": [12, 29],
        "p": [0.5, 0.5],
        "lengths": None,
        "modulus": {"kind": "hoelder", "alpha": 0.5},
        "A": [1.5, 2.0, 5.0],
    },
    "path": {
        "family": [{"kind": "hoelder", "alpha": 0.6},
                   {"kind": "hoelder", "alpha": 0.7}],
        "schedule": {"alphas": [0.6, 0.7], "a": 2.0, "M": 6},
        "dims": [12, 29],
        "p": [0.5, 0.5],
        "builder": "both",
    },
    "denjoy": {
        "alpha_cf": SQRT2M1_CF,
        "tau": 0.5,
        "N": 500,
        "total_mass": 0.5,
        "rho_n": 20000,
        "orbit_len": 100,
        "intervals": 100,
    },
    "rotnum": {
        "map": {"kind": "rotation", "rho": "3/8"},
        "n": 10000,
        "starts": [0.0, 0.37],
    },
    "certify": {
        "generators": [{"kind": "analytic", "alpha": 0.0, "eps": -0.1}],
        "word": [1] * 12,
        "interval": [0.01, 0.02],
        "C": 0.7,
        "S": 0.1435,
        "moduli": [{"kind": "hoelder", "alpha": 1.0}],
        "grid_points": 33,
    },
    "witness": {
        "family": [{"kind": "hoelder", "alpha": 0.6},
                   {"kind": "hoelder", "alpha": 0.7}],
        "grid": {"kind": "dyadic", "k_min": 4, "k_max": 23, "scale": 1.0,
                 "values": None},
        "C": 1.0,
        "tau": None,
        "mode": "literal",
        "vanish_threshold": 0.01,
    },
    "pipeline": {
        "mode": "rectangle",
        "generators": [{"kind": "rotation", "rho": "169/408"},
                       {"kind": "rotation", "rho": "377/610"}],
        "interval": [0.0, 0.03125],
        "family": [{"kind": "hoelder", "alpha": 0.6},
                   {"kind": "hoelder", "alpha": 0.7}],
        "shape": [4, 4],
        "schedule": [[0, 1, 1, 3, 3], [0, 0, 1, 1, 3]],
        "word": None,
        "C": 1.0,
        "S": None,
        "certify_prefixes": True,
        "grid_points": 17,
        "cover_cap": 1000,
    },
}

#: flags recorded inside every resolved config
COMMON_DEFAULTS = {"format": "csv", "seed": 0}


def _load_config(command: str, config_path: str | None,
                 fmt: str | None, seed: int | None) -> dict:
    cfg = copy.deepcopy(DEFAULTS[command])
    cfg.update(copy.deepcopy(COMMON_DEFAULTS))
    if config_path is not None:
        try:
            text = Path(config_path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}")
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}")
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = _deep_merge(cfg, user)
    if fmt is not None:
        cfg["format"] = fmt
    if seed is not None:
        cfg["seed"] = int(seed)
    if cfg["format"] not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {cfg['format']!r}")
    cfg["command"] = command
    return cfg


def _parse_moduli(specs) -> tuple:
    if not isinstance(specs, list) or len(specs) == 0:
        raise ConfigError("family must be a nonempty list of modulus specs")
    members = []
    for s in specs:
        try:
            members.append(modulus_from_dict(s))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad modulus spec {s!r}: {exc}")
        except PreconditionViolated as exc:
            if "kind" in str(exc):
                raise ConfigError(str(exc))
            raise
    return tuple(members)


def _parse_family(specs) -> ModulusFamily:
    return ModulusFamily(_parse_moduli(specs))


def _parse_generators(specs) -> tuple:
    if not isinstance(specs, list) or len(specs) == 0:
        raise ConfigError("generators must be a nonempty list of map specs")
    gens = []
    for s in specs:
        try:
            gens.append(diffeo_from_dict(s))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad map spec {s!r}: {exc}")
        except PreconditionViolated as exc:
            if "kind" in str(exc):
                raise ConfigError(str(exc))
            raise
    return tuple(gens)


# ---------------------------------------------------------------------------
# runners: each returns (results dict, {table name: csv text})


def run_moduli(cfg: dict) -> tuple:
    fam = _parse_family(cfg["family"])
    grid = dyadic_grid(1, int(cfg["defect_k_max"]), cap=fam.domain_cap)
    defects = fam.defect_map(grid)
    defect_csv = "t,defect\n" + "".join(
        f"{t:.17g},{v:.17g}\n" for t, v in zip(grid, defects))

    rep = fam.vanishing_defect(threshold=float(cfg["threshold"]))
    delta = fam.domain_cap
    matrix = [[compare(mi, mj, delta).value for mj in fam.members]
              for mi in fam.members]
    sub_c = submultiplicativity_constant(lambda t: fam.defect(t),
                                         cap=fam.domain_cap)
    results = {
        "d": fam.d,
        "domain_cap": fam.domain_cap,
        "vanishing": {
            "vanishing": rep.vanishing,
            "non_increasing": rep.non_increasing,
            "final_value": rep.final_value,
            "threshold": rep.threshold,
        },
        "comparability": matrix,
        "submultiplicativity_constant": sub_c,
    }
    tables = {"defect": defect_csv}
    if cfg["consistency"]:
        # the scan has its own hypotheses (distinct integer blocks need a
        # large enough base); a scan failure is reported, not fatal, so
        # that the defect/comparability report always comes out
        try:
            cs = consistency_sequences(fam, float(cfg["a"]), int(cfg["M"]),
                                       exact_powers=bool(cfg["exact_powers"]))
        except HypothesisError as exc:
            results["consistency"] = {"error": str(exc)}
        else:
            results["consistency"] = {
                "verified_constant": cs.verified_constant,
                "tail_non_increasing": cs.tail_non_increasing,
                "exact_powers": cs.exact_powers,
                "m_first": int(cs.m_values[0]),
                "m_last": int(cs.m_values[-1]),
                "error": None,
            }
            tables["consistency"] = cs.to_csv()
    return results, tables


def _select_lengths(cfg: dict) -> LengthArray:
    mode = cfg["mode"]
    if mode == "product":
        return LengthArray.product_geometric(tuple(int(v) for v in cfg["dims"]),
                                             tuple(float(v) for v in cfg["p"]))
    if mode == "given":
        if cfg["lengths"] is None:
            raise ConfigError("mode 'given' needs a lengths matrix")
        return LengthArray(np.asarray(cfg["lengths"], dtype=float))
    if mode == "random":
        rng = np.random.default_rng(int(cfg["seed"]))
        vals = rng.random(tuple(int(v) for v in cfg["dims"]))
        vals /= vals.sum()
        return LengthArray(vals)
    raise ConfigError(f"unknown select mode {mode!r}")


def run_select(cfg: dict) -> tuple:
    L = _select_lengths(cfg)
    if L.d != 2:
        raise ConfigError("the column selector works on 2-d length arrays")
    try:
        omega = modulus_from_dict(cfg["modulus"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad modulus spec: {exc}")
    m, n = L.dims
    k = select_column(L, omega)
    col_sums = [float(np.sum(omega.map(L.values[:, j]))) for j in range(n)]
    bound_rhs = m * omega.value(1.0 / (m * n))
    admissible = {}
    for A in cfg["A"]:
        A = float(A)
        cols = admissible_columns(L, omega, A)
        required = math.ceil((1.0 - 1.0 / A) * n)
        admissible[_fmt_float(A)] = {
            "count": len(cols),
            "required": required,
            "ok": len(cols) >= required,
            "columns": list(cols),
        }
    results = {
        "dims": [m, n],
        "selected_column": k,
        "bound_lhs": col_sums[k - 1],
        "bound_rhs": bound_rhs,
        "bound_holds": col_sums[k - 1] <= bound_rhs + 1e-12,
        "admissible": admissible,
    }
    table = "column,omega_sum\n" + "".join(
        f"{j + 1},{s:.17g}\n" for j, s in enumerate(col_sums))
    return results, {"column_sums": table}


def run_path(cfg: dict) -> tuple:
    fam = _parse_family(cfg["family"])
    sc = cfg["schedule"]
    sched = RectangleSchedule.from_proposition(
        [float(a) for a in sc["alphas"]], float(sc["a"]), int(sc["M"]))
    L = LengthArray.product_geometric(tuple(int(v) for v in cfg["dims"]),
                                      tuple(float(v) for v in cfg["p"]))
    builder = cfg["builder"]
    if builder not in ("2d", "general", "both"):
        raise ConfigError(f"builder must be 2d, general or both, got {builder!r}")
    results: dict = {"dims": [int(v) for v in cfg["dims"]], "M": sched.M}
    tables: dict = {}
    if builder in ("2d", "both"):
        path, rep = build_path_2d(L, sched, fam)
        results["path_2d"] = {
            "weight": path.weight,
            "bound_total": rep.bound_total,
            "weight_below_bound": path.weight <= rep.bound_total + 1e-12,
            "selected_line": [int(v) for v in rep.selected_line],
            "n_points": int(path.points.shape[0]),
            "endpoint": [int(v) for v in path.points[-1]],
        }
        tables["path_2d"] = path.to_csv()
        # cross-check: walk the same selected lines through the general
        # line-walking machinery and compare weights
        anchors, dirs = [], []
        for m in range(len(rep.selected_line) // 2):
            anchors.append((int(rep.selected_line[2 * m]), 0))
            dirs.append(2)
            anchors.append((0, int(rep.selected_line[2 * m + 1])))
            dirs.append(1)
        i_seq, _ = sched.staircase_corners()
        path_x, _ = path_from_lines(anchors, dirs, int(i_seq[-1]), L, fam)
        diff = abs(path_x.weight - path.weight)
        results["cross_check_same_selections"] = {
            "weight_diff": diff,
            "within_1e-12": diff <= 1e-12,
        }
    if builder in ("general", "both"):
        pathg, brep = build_path_general(L, sched, fam)
        results["path_general"] = {
            "weight": pathg.weight,
            "S_star": brep.S_star,
            "A_cons": brep.A_cons,
            "sum_inv_budgets": brep.sum_inv_budgets,
            "raw_total": brep.raw_total,
            "provable_bound": brep.provable_bound,
            "weight_below_raw_total": pathg.weight <= brep.raw_total + 1e-9,
            "n_points": int(pathg.points.shape[0]),
        }
        tables["path_general"] = pathg.to_csv()
    return results, tables


def run_denjoy(cfg: dict) -> tuple:
    alpha = continued_fraction_convergent([int(c) for c in cfg["alpha_cf"]])
    fmap, I0 = denjoy_construct(alpha, float(cfg["tau"]), int(cfg["N"]),
                                total_mass=float(cfg["total_mass"]))
    est = rotation_number(fmap, int(cfg["rho_n"]))
    orbit = word_orbit([fmap], [1] * int(cfg["orbit_len"]), I0)
    n_int = min(int(cfg["intervals"]), fmap.N)
    rows = []
    lengths = []
    for n in range(-n_int, n_int + 1):
        left, ln = fmap.interval(n)
        rows.append((n, left, ln))
        lengths.append(ln)
    table = "n,left,length\n" + "".join(
        f"{n},{a:.17g},{b:.17g}\n" for n, a, b in rows)
    results = {
        "alpha": float(alpha),
        "alpha_fraction": f"{alpha.numerator}/{alpha.denominator}",
        "tau": float(cfg["tau"]),
        "N": fmap.N,
        "I0": [float(I0[0]), float(I0[1])],
        "inserted_mass": float(fmap.inserted_mass),
        "rho_estimate": est.estimate,
        "rho_error_vs_alpha": abs(est.estimate - float(alpha)),
        "rho_error_bound": est.error_bound,
        "orbit_wandering": bool(orbit.wandering),
        "tabulated_intervals": 2 * n_int + 1,
        "min_tabulated_length": min(lengths),
        "max_tabulated_length": max(lengths),
    }
    return results, {"intervals": table}


def run_rotnum(cfg: dict) -> tuple:
    f = _parse_generators([cfg["map"]])[0]
    n = int(cfg["n"])
    starts = [float(x) for x in cfg["starts"]]
    if not starts:
        raise ConfigError("at least one starting point is required")
    ests = [rotation_number(f, n, x0) for x0 in starts]
    values = [e.estimate for e in ests]
    results = {
        "n": n,
        "error_bound": ests[0].error_bound,
        "estimates": [{"x0": e.x0, "estimate": e.estimate} for e in ests],
        "spread": max(values) - min(values),
    }
    return results, {}


def run_certify(cfg: dict) -> tuple:
    gens = _parse_generators(cfg["generators"])
    moduli = None
    if cfg["moduli"] is not None:
        moduli = _parse_moduli(cfg["moduli"])
    cert = fixed_point_certificate(
        [int(k) for k in cfg["word"]], gens,
        (float(cfg["interval"][0]), float(cfg["interval"][1])),
        float(cfg["C"]), float(cfg["S"]), moduli=moduli,
        grid_points=int(cfg["grid_points"]))
    doc = cert.to_json_dict()
    doc.pop("prefix_table")
    return doc, {"certificate": cert.to_csv()}


def _witness_grid(spec: dict) -> list:
    kind = spec["kind"]
    if kind == "dyadic":
        scale = float(spec["scale"])
        return [scale * 2.0 ** -k
                for k in range(int(spec["k_min"]), int(spec["k_max"]) + 1)]
    if kind == "explicit":
        if not spec["values"]:
            raise ConfigError("explicit grid needs values")
        return [float(v) for v in spec["values"]]
    raise ConfigError(f"unknown grid kind {kind!r}")


def run_witness(cfg: dict) -> tuple:
    fam = _parse_family(cfg["family"])
    grid = _witness_grid(cfg["grid"])
    C = None if cfg["C"] is None else float(cfg["C"])
    thr = float(cfg["vanish_threshold"])
    if cfg["tau"] is None:
        if fam.d != 2:
            raise ConfigError("tau is required for families with d >= 3")
        ws = witness_2d(fam.members[0], fam.members[1], grid, C=C,
                        vanish_threshold=thr)
    else:
        tau = [float(v) for v in cfg["tau"]]
        ws = witness_general(fam, grid, tau, C=C, mode=cfg["mode"],
                             vanish_threshold=thr)
    results = {
        "d": fam.d,
        "count": len(ws),
        "C": ws[0].C,
        "all_checks": all(all(w.checks) for w in ws),
        "max_ratio": max(max(w.check_ratios) for w in ws),
        "any_saturated": any(bool(w.phi_saturated) for w in ws),
        "max_retries": max(w.x1_retries for w in ws),
        "sum_tau_ok": ws[0].sum_tau_ok,
        "mode": ws[0].mode,
        "permutation": list(ws[0].permutation),
    }
    return results, {"witnesses": witnesses_to_csv(ws)}


def _path_prefix_words(points: np.ndarray) -> list:
    """Letter sequences along a lattice path (one letter per unit step)."""
    letters = []
    for prev, cur in zip(points[:-1], points[1:]):
        step = np.asarray(cur) - np.asarray(prev)
        axis = int(np.argmax(np.abs(step)))
        letters.append(axis + 1)
    return [letters[:p] for p in range(1, len(letters) + 1)]


def run_pipeline(cfg: dict) -> tuple:
    mode = cfg["mode"]
    gens = _parse_generators(cfg["generators"])
    members = _parse_moduli(cfg["family"])
    C = float(cfg["C"])

    if mode == "word":
        if not cfg["word"]:
            raise ConfigError("pipeline mode 'word' needs a word")
        I = (float(cfg["interval"][0]), float(cfg["interval"][1]))
        word = [int(k) for k in cfg["word"]]
        orbit = word_orbit(gens, word, I)
        lens = orbit.lengths
        om = members[0]
        weight = float(np.sum(om.map(np.minimum(lens, om.domain_cap))))
        S_used = weight if cfg["S"] is None else float(cfg["S"])
        cert = fixed_point_certificate(word, gens, I, C, S_used,
                                       moduli=members,
                                       grid_points=int(cfg["grid_points"]))
        results = {
            "mode": "word",
            "word_length": len(word),
            "orbit": {
                "wandering": bool(orbit.wandering),
                "lengths_sum": float(lens.sum()),
                "max_length": float(lens.max()),
            },
            "S_used": S_used,
            "weight": weight,
            "certificate": {
                "fired": cert.fired,
                "firing_index": cert.firing_index,
                "fixed_point": cert.fixed_point,
                "residual": cert.residual,
                "L": cert.L,
            },
        }
        return results, {"orbit": orbit.to_csv(),
                         "certificate": cert.to_csv()}

    if mode != "rectangle":
        raise ConfigError(f"unknown pipeline mode {mode!r}")

    shape = [int(v) for v in cfg["shape"]]
    if len(gens) != len(shape):
        raise ConfigError("one generator per rectangle axis is required")
    if cfg["interval"] is None:
        I0 = getattr(gens[0], "I0", None)
        if I0 is None:
            raise ConfigError("interval is required for these generators")
        I = (float(I0[0]), float(I0[1]))
    else:
        I = (float(cfg["interval"][0]), float(cfg["interval"][1]))
    L = rectangle_length_array(gens, shape, I)
    flat = L.values.reshape(-1)
    om = members[0]
    results = {
        "mode": "rectangle",
        "shape": shape,
        "interval": [I[0], I[1]],
        "cells": int(flat.size),
        "lengths_sum": float(flat.sum()),
        "max_length": float(flat.max()),
        "all_lengths_equal": bool(np.allclose(flat, flat[0], rtol=1e-12,
                                              atol=0.0)),
        "omega_weight_all_cells": float(
            np.sum(om.map(np.minimum(flat, om.domain_cap)))),
    }
    tables: dict = {}

    S_used = None
    if cfg["schedule"] is not None and len(shape) == 2 and len(members) == 2:
        fam = ModulusFamily(members)
        sched = RectangleSchedule(np.asarray(cfg["schedule"], dtype=np.int64))
        path, rep = build_path_2d(L, sched, fam)
        S_used = path.weight if cfg["S"] is None else float(cfg["S"])
        results["path"] = {
            "weight": path.weight,
            "bound_total": rep.bound_total,
            "selected_line": [int(v) for v in rep.selected_line],
            "n_points": int(path.points.shape[0]),
        }
        results["S_used"] = S_used
        # intervals are (left, length) pairs; the gap uses the length
        results["L_gap"] = I[1] / (2.0 * math.exp(2.0 * C * S_used))
        tables["path"] = path.to_csv()
        if cfg["certify_prefixes"]:
            outcomes = []
            any_fired = False
            for word in _path_prefix_words(path.points):
                cert = fixed_point_certificate(
                    word, gens, I, C, S_used,
                    grid_points=int(cfg["grid_points"]))
                any_fired = any_fired or cert.fired
                outcomes.append({
                    "word_length": len(word),
                    "fired": cert.fired,
                    "firing_index": cert.firing_index,
                    "fixed_point": cert.fixed_point,
                    "residual": cert.residual,
                })
            results["certificates"] = outcomes
            results["any_fired"] = any_fired

    try:
        results["cover_N"] = minimal_cover_N(gens[0], I,
                                             cap=int(cfg["cover_cap"]))
        results["cover_error"] = None
    except NoCoverWithin as exc:
        results["cover_N"] = None
        results["cover_error"] = str(exc)
    return results, tables


COMMANDS = {
    "moduli": (run_moduli, "defect, comparability and consistency scans"),
    "select": (run_select, "column selection bounds on a length array"),
    "path": (run_path, "staircase lattice path with weight bounds"),
    "denjoy": (run_denjoy, "wandering-interval construction report"),
    "rotnum": (run_rotnum, "rotation number estimates"),
    "certify": (run_certify, "distortion fixed-point certificate"),
    "witness": (run_witness, "consistency witness sweep"),
    "pipeline": (run_pipeline, "orbit -> lengths -> path -> certificates"),
}


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="denjoykit",
        description="deterministic experiment driver for denjoykit")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", default=None,
                        help="JSON config file merged over the defaults")
        sp.add_argument("--out", default=".",
                        help="output directory (created if missing)")
        sp.add_argument("--format", default=None, choices=["csv", "json"],
                        help="table output: sidecar CSV files or inline")
        sp.add_argument("--seed", default=None, type=int,
                        help="RNG seed recorded in the config")
        sp.add_argument("--print-config", action="store_true",
                        help="print the resolved config and exit")
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.command, args.config, args.format, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.print_config:
        sys.stdout.write(canonical_json(cfg))
        return EXIT_OK

    runner = COMMANDS[args.command][0]
    try:
        results, tables = runner(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisError as exc:
        print(f"hypothesis error: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except InternalCheckError as exc:
        print(f"internal check failed: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 -- map anything else to exit 4
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL

    report = {
        "command": args.command,
        "version": __version__,
        "config": cfg,
        "config_sha256": config_sha256(cfg),
        "results": results,
    }
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if cfg["format"] == "csv":
        report["tables"] = {}
        for name, text in sorted(tables.items()):
            fname = f"{name}.csv"
            (out_dir / fname).write_text(text)
            report["tables"][name] = fname
            written.append(out_dir / fname)
    else:
        report["tables"] = {name: {"csv": text}
                            for name, text in tables.items()}
    report_path = out_dir / "report.json"
    report_path.write_text(canonical_json(report))
    written.insert(0, report_path)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
