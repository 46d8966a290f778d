"""Command-line interface: solve, exact, symmetrize, evaluate and table subcommands.

Exit codes: 0 success, 2 zero information (block too small), 3 non-convergence,
4 exact search did not improve on an imperfect rounding, 5 injection
fallback for non-prime-power t exceeds the n cap, 6 malformed input file.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .errors import NonConvergence, ZeroInformation
from .evaluate import EfficiencyReport
from .exact import (ExactDesign, ExactOptions, oa_columns, prime_power, single_class_design,
                    solve_exact, symmetrize)
from .fixtures import EXACT_DESIGNS, SUPPLEMENT_T8, SINGLE_CLASS_TABLE, parse_runs
from .moments import CovarianceSpec, ModelKind
from .sequences import format_sequence, n_distinct, orbit_key, parse_sequence
from .solver import Certificate, SolverOptions, known_x_exact, solve

log = logging.getLogger("circdesign")

EXIT_OK = 0
EXIT_ZERO_INFORMATION = 2
EXIT_NONCONVERGENCE = 3
EXIT_NO_IMPROVEMENT = 4
EXIT_N_CAP = 5
EXIT_MALFORMED = 6

DEFAULTS = {
    "k": None,
    "t": None,
    "n": None,
    "model": "directional",
    "sigma": "identity",
    "seed": 0,
    "get_tol": 1e-8,
    "support_tol": 1e-7,
    "max_iters": 10_000,
    "restarts": 32,
    "n_cap": 10_000,
    "copies": 1,
    "format": "json",
    "output": None,
}


class MalformedInput(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration

def load_config(path: str | None) -> dict:
    """Settings from a JSON file; keys use the long flag names with underscores."""
    if not path:
        return {}
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve(args: argparse.Namespace) -> dict:
    """Merge settings with precedence flags > config file > defaults."""
    cfg = dict(DEFAULTS)
    cfg.update(load_config(getattr(args, "config", None)))
    for key, value in vars(args).items():
        if value is not None:
            cfg[key] = value
    return cfg


def solver_options(cfg: dict) -> SolverOptions:
    return SolverOptions(get_tol=float(cfg["get_tol"]), support_tol=float(cfg["support_tol"]),
                         max_iters=int(cfg["max_iters"]), seed=int(cfg["seed"]))


def _sigma(cfg: dict) -> CovarianceSpec:
    return CovarianceSpec.parse(str(cfg["sigma"]))


def _require(cfg: dict, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise SystemExit(f"missing required setting(s): {', '.join('--' + m for m in missing)}")


# ---------------------------------------------------------------------------
# output helpers

def _emit(record: dict, cfg: dict, csv_rows: list[list] | None = None):
    """Write the record to --output (if given) and print it to stdout."""
    if cfg["format"] == "csv" and csv_rows is not None:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(csv_rows)
        text = buf.getvalue()
    else:
        text = json.dumps(record, indent=None if cfg["output"] is None else 2) + "\n"
    if cfg["output"]:
        Path(cfg["output"]).write_text(text)
        summary = {k: v for k, v in record.items() if k not in ("blocks", "rows")}
        print(json.dumps(summary))
    else:
        sys.stdout.write(text)


def certificate_record(measure, cert: Certificate) -> dict:
    rec = cert.to_dict()
    rec["weights"] = {format_sequence(s): w for s, w in measure.weights.items()}
    return rec


def _read_certificate(path: str) -> Certificate:
    try:
        with open(path) as fh:
            d = json.load(fh)
        if "certificate" in d and "k" not in d.get("certificate", {}):
            raise MalformedInput("file holds a design, not a certificate")
        return Certificate.from_dict(d)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise MalformedInput(f"cannot read certificate {path}: {exc}") from exc


def _certificate(cfg: dict) -> tuple[object, Certificate]:
    if cfg.get("certificate"):
        return None, _read_certificate(cfg["certificate"])
    _require(cfg, "k", "t")
    return solve(int(cfg["k"]), int(cfg["t"]), cfg["model"], _sigma(cfg), solver_options(cfg))


# ---------------------------------------------------------------------------
# subcommands

def cmd_solve(cfg: dict) -> int:
    _require(cfg, "k", "t")
    measure, cert = solve(int(cfg["k"]), int(cfg["t"]), cfg["model"], _sigma(cfg),
                          solver_options(cfg))
    rec = certificate_record(measure, cert)
    rows = [["rep", "weight", "psi", "gamma", "chi"]]
    for s, key in zip(cert.support_reps, cert.pseudo_keys or [None] * len(cert.support_reps)):
        rows.append([format_sequence(s), measure.weights.get(tuple(s), 0.0),
                     *(list(key) if key else ["", "", ""])])
    _emit(rec, cfg, rows)
    return EXIT_OK


def cmd_exact(cfg: dict) -> int:
    _require(cfg, "n")
    _, cert = _certificate(cfg)
    opts = ExactOptions(restarts=int(cfg["restarts"]), seed=int(cfg["seed"]))
    design, report = solve_exact(cert, int(cfg["n"]), cert.model, cert.sigma, opts)
    rec = design.to_dict()
    rec["search"] = {"objective": report.objective, "rounding_objective": report.rounding_objective,
                     "improved": report.improved}
    _emit(rec, cfg, design.to_csv_rows())
    if not report.improved:
        log.warning("local search did not improve on the rounded measure (objective %.3g)",
                    report.objective)
        return EXIT_NO_IMPROVEMENT
    return EXIT_OK


def _parse_rep(text: str):
    return parse_runs(text) if "_" in text else parse_sequence(text)


def cmd_symmetrize(cfg: dict) -> int:
    _require(cfg, "rep", "t")
    rep = _parse_rep(str(cfg["rep"]))
    t = int(cfg["t"])
    copies = int(cfg["copies"])
    w = n_distinct(rep)
    n = oa_columns(t, w) * copies
    if prime_power(t) is None and w < t:
        log.warning("t=%d is not a prime power; using all %d injections", t, n // copies)
        if n > int(cfg["n_cap"]):
            print(json.dumps({"error": "n cap exceeded", "n": n, "n_cap": int(cfg["n_cap"])}))
            return EXIT_N_CAP
    model = ModelKind.parse(cfg["model"])
    sigma = _sigma(cfg)
    design = symmetrize(rep, t, copies, model, sigma)
    _, cert = solve(len(rep), t, model, sigma, solver_options(cfg))
    design.certificate = {"x_star": [float(v) for v in np.atleast_1d(cert.x_star)],
                          "y_star": cert.y_star,
                          "support": [format_sequence(s) for s in cert.support_reps]}
    design.evaluate(cert.y_star)
    _emit(design.to_dict(), cfg, design.to_csv_rows())
    return EXIT_OK


def read_design(path: str, cfg: dict) -> ExactDesign:
    """ExactDesign from a JSON record or a CSV file (header row, one block per line)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MalformedInput(str(exc)) from exc
    try:
        if path.endswith(".csv") or not text.lstrip().startswith("{"):
            rows = [r for r in csv.reader(io.StringIO(text)) if r]
            if len(rows) < 2:
                raise ValueError("CSV design needs a header row and at least one block")
            blocks = [[int(a) for a in r] for r in rows[1:]]
            k = len(rows[0])
            t = int(cfg["t"]) if cfg.get("t") is not None else max(max(b) for b in blocks)
            return ExactDesign(k, t, blocks, cfg["model"], _sigma(cfg), "file")
        d = json.loads(text)
        if cfg.get("t") is not None and int(cfg["t"]) != int(d.get("t", -1)):
            raise ValueError(f"design has t={d.get('t')} but --t {cfg['t']} was given")
        return ExactDesign.from_dict(d)
    except (ValueError, TypeError, KeyError) as exc:
        raise MalformedInput(f"malformed design file {path}: {exc}") from exc


def cmd_evaluate(cfg: dict) -> int:
    _require(cfg, "design")
    design = read_design(cfg["design"], cfg)
    if cfg.get("certificate"):
        cert = _read_certificate(cfg["certificate"])
        y_star = cert.y_star
    elif design.certificate and "y_star" in design.certificate:
        y_star = float(design.certificate["y_star"])
    else:
        y_star = solve(design.k, design.t, design.model, design.sigma, solver_options(cfg))[1].y_star
    rep = design.evaluate(y_star)
    rec = {"k": design.k, "t": design.t, "n": design.n, "model": design.model.value,
           "sigma": design.sigma.describe(), "y_star": y_star, "efficiencies": rep.as_dict()}
    rows = [list(EfficiencyReport.CSV_FIELDS), rep.csv_row()]
    _emit(rec, cfg, rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# reference tables

def parse_range(text: str | None, default: tuple[int, int]) -> list[int]:
    """``"11..30"``, ``"6"`` or None (the default inclusive range)."""
    if text is None:
        lo, hi = default
    elif ".." in str(text):
        a, b = str(text).split("..")
        lo, hi = int(a), int(b)
    else:
        lo = hi = int(text)
    return list(range(lo, hi + 1))


def table_closed_form(t: int, ks, model="undirectional") -> dict:
    """x* of the closed forms against a full solve over all class representatives."""
    rows = []
    for k in ks:
        exact = float(known_x_exact(k, t))
        _, cert = solve(k, t, model, path="exchange")
        x = float(np.atleast_1d(cert.x_star)[0])
        rows.append({"k": k, "t": t, "x_star": x, "reference": exact, "deviation": abs(x - exact),
                     "support": [format_sequence(s) for s in cert.support_reps]})
    return {"table": f"t{t}", "rows": rows, "max_deviation": max(r["deviation"] for r in rows)}


def table_single_class(model="undirectional") -> dict:
    rows = []
    for t, row in SINGLE_CLASS_TABLE.items():
        for k, ref in row.items():
            rep, diag = single_class_design(k, t, model)
            e = diag["efficiency"]
            rows.append({"k": k, "t": t, "rep": format_sequence(rep), "efficiency": e,
                         "reference": ref, "deviation": abs(e - ref)})
    return {"table": "single-class", "rows": rows, "max_deviation": max(r["deviation"] for r in rows)}


def supplement_row(k: int, t: int = 8, model="undirectional") -> dict:
    s1_text, s2_text, p_ref = SUPPLEMENT_T8[k]
    s1, s2 = parse_runs(s1_text), parse_runs(s2_text)
    measure, cert = solve(k, t, model)
    keys = {orbit_key(s): s for s in cert.support_reps}
    found1, found2 = orbit_key(s1) in keys, orbit_key(s2) in keys
    p = sum(w for s, w in measure.weights.items() if orbit_key(s) == orbit_key(s1))
    return {"k": k, "t": t, "s1_found": found1, "s2_found": found2, "p_s1": p, "reference": p_ref,
            "deviation": abs(p - p_ref), "x_star": float(np.atleast_1d(cert.x_star)[0]),
            "y_star": cert.y_star, "support": [format_sequence(s) for s in cert.support_reps]}


def table_supplement(ks, t: int = 8) -> dict:
    if t != 8:
        raise SystemExit("the reference table is tabulated for t = 8 only")
    rows = [supplement_row(k, t) for k in ks]
    return {"table": "supplement", "rows": rows,
            "max_deviation": max(r["deviation"] for r in rows),
            "all_supports_match": all(r["s1_found"] and r["s2_found"] for r in rows)}


def table_exact() -> dict:
    """Re-evaluate the tabulated exact designs (columns are reported as printed)."""
    rows = []
    cache: dict = {}
    for r in EXACT_DESIGNS:
        sigma = CovarianceSpec.parse(r.sigma)
        key = (r.k, r.t, r.model, r.sigma)
        if key not in cache:
            cache[key] = solve(r.k, r.t, r.model, sigma)[1].y_star
        d = ExactDesign(r.k, r.t, list(r.blocks), r.model, sigma, r.table)
        rep = d.evaluate(cache[key])
        rows.append({"table": r.table, "k": r.k, "t": r.t, "n": r.n, "model": r.model,
                     "sigma": r.sigma, "a_column": r.a_column, "d_column": r.d_column,
                     **{f: getattr(rep, f) for f in ("e_A", "e_D", "e_E", "e_T")}})
    return {"table": "exact", "rows": rows}


def cmd_table(cfg: dict) -> int:
    which = cfg["which"]
    if which in ("t2", "t3"):
        t = int(which[1])
        out = table_closed_form(t, parse_range(cfg.get("krange"), (4, 13 if t == 2 else 14)))
    elif which == "single-class":
        out = table_single_class()
    elif which == "supplement":
        out = table_supplement(parse_range(cfg.get("krange"), (11, 30)), int(cfg.get("t") or 8))
    else:
        out = table_exact()
    rows = None
    if out["rows"]:
        fields = list(out["rows"][0])
        rows = [fields] + [[json.dumps(r[f]) if isinstance(r[f], list) else r[f] for f in fields]
                           for r in out["rows"]]
    _emit(out, cfg, rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="circdesign",
                                description="Optimal circular block designs under neighbor-effect models.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, kt=True):
        sp.add_argument("--config", help="JSON file of settings (flags override it)")
        if kt:
            sp.add_argument("--k", type=int, help="block size")
            sp.add_argument("--t", type=int, help="number of treatments")
        sp.add_argument("--model", choices=[m.value for m in ModelKind], default=None)
        sp.add_argument("--sigma", help="identity | ar1:<rho> | path to a k x k CSV matrix")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--get-tol", type=float, dest="get_tol")
        sp.add_argument("--support-tol", type=float, dest="support_tol")
        sp.add_argument("--max-iters", type=int, dest="max_iters")
        sp.add_argument("--output", "-o", help="write the record to this path")
        sp.add_argument("--format", choices=["json", "csv"])

    sp = sub.add_parser("solve", help="optimal symmetric measure and its certificate")
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("exact", help="exact n-block design from a certificate")
    common(sp)
    sp.add_argument("--n", type=int, help="number of blocks")
    sp.add_argument("--certificate", help="certificate JSON written by 'solve'")
    sp.add_argument("--restarts", type=int)
    sp.set_defaults(func=cmd_exact)

    sp = sub.add_parser("symmetrize", help="relabel one sequence by an orthogonal array of type I")
    common(sp, kt=False)
    sp.add_argument("--rep", help="representative, e.g. 1,1,2,2,3 or 1_4,2_4,3_3")
    sp.add_argument("--t", type=int, help="number of treatments")
    sp.add_argument("--copies", type=int, help="repeat the array this many times")
    sp.add_argument("--n-cap", type=int, dest="n_cap", help="largest n allowed for the injection fallback")
    sp.set_defaults(func=cmd_symmetrize)

    sp = sub.add_parser("evaluate", help="A-, D-, E-, T-efficiencies of a design file")
    common(sp, kt=False)
    sp.add_argument("design", help="design file (JSON or CSV)")
    sp.add_argument("--t", type=int, help="number of treatments (CSV input)")
    sp.add_argument("--certificate", help="certificate JSON supplying y*")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("table", help="regenerate a reference table and report deviations")
    sp.add_argument("which", choices=["t2", "t3", "single-class", "supplement", "exact"])
    sp.add_argument("--k", dest="krange", help="k or an inclusive range lo..hi")
    sp.add_argument("--t", type=int)
    sp.add_argument("--config")
    sp.add_argument("--output", "-o")
    sp.add_argument("--format", choices=["json", "csv"])
    sp.set_defaults(func=cmd_table)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    func = args.func
    try:
        cfg = resolve(args)
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": f"bad config: {exc}"}))
        return EXIT_MALFORMED
    cfg.pop("func", None)
    start = time.perf_counter()
    try:
        code = func(cfg)
    except ZeroInformation as exc:
        print(json.dumps({"error": "zero information", "detail": str(exc)}))
        return EXIT_ZERO_INFORMATION
    except NonConvergence as exc:
        print(json.dumps({"error": "no convergence", "detail": str(exc)}))
        return EXIT_NONCONVERGENCE
    except MalformedInput as exc:
        print(json.dumps({"error": "malformed input", "detail": str(exc)}))
        return EXIT_MALFORMED
    log.info("%s finished in %.2f s", cfg["command"], time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
