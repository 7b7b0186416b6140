"""Command-line front end.

Exit codes: 0 success, 2 malformed input, 3 size limit exceeded, 4 a checked
invariant failed (the failing fixture is written to stderr as JSON).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import coding, wak
from .exponents import (ProblemSpec, SolverConfig, SourceModel, brute_force_exponent_oracle,
                        error_exponent, positivity_threshold, rate_distortion,
                        strong_converse_exponent)
from .prob import DistributionError, JointXY, SizeCapError, from_json_obj
from .typeclasses import CondTypeMatrix, TypeVector, greedy_type_cover

LN2 = math.log(2)


class InputError(ValueError):
    pass


class CheckFailed(RuntimeError):
    def __init__(self, message: str, fixture):
        super().__init__(message)
        self.fixture = fixture


# -- input --------------------------------------------------------------------

def load_problem(text_or_path: str) -> tuple[SourceModel, dict]:
    """Model from a path or inline JSON.  Accepts a bare distribution
    {"alphabet_sizes": [nx, ny], "probs": [...]} or a problem object
    {"model": {...}, "R": .., "Delta": .., "u_size": .., "solver": {...}}."""
    if os.path.exists(text_or_path):
        with open(text_or_path) as fh:
            text = fh.read()
    else:
        text = text_or_path
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"model is neither a file nor valid JSON: {exc}") from exc
    extra = {}
    if isinstance(obj, dict) and "model" in obj:
        extra = {k: obj[k] for k in ("R", "Delta", "u_size", "solver") if k in obj}
        obj = obj["model"]
    dist = from_json_obj(obj)
    if not isinstance(dist, JointXY):
        raise InputError("model must be a joint distribution over (X, Y)")
    return SourceModel(dist), extra


def parse_grid(text: str) -> list[float]:
    """Comma list "0.1,0.2" or range "start:stop:count" (inclusive)."""
    text = text.strip()
    try:
        if ":" in text:
            a, b, k = text.split(":")
            vals = list(np.linspace(float(a), float(b), int(k)))
        else:
            vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"bad grid {text!r}") from exc
    if not vals:
        raise InputError("grid is empty")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise InputError("grid must be strictly increasing")
    return [float(v) for v in vals]


def parse_ints(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"bad integer list {text!r}") from exc
    if not vals:
        raise InputError("list is empty")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise InputError("list must be strictly increasing")
    return vals


def solver_config(args, extra: dict) -> SolverConfig:
    cfg = SolverConfig()
    overrides = dict(extra.get("solver", {}))
    if args.restarts is not None:
        overrides["restarts"] = args.restarts
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    if "penalty_schedule" in overrides:
        overrides["penalty_schedule"] = tuple(overrides["penalty_schedule"])
    try:
        return replace(cfg, **overrides)
    except TypeError as exc:
        raise InputError(f"unknown solver option: {exc}") from exc


# -- output -------------------------------------------------------------------

def witness_hash(result) -> str:
    if result.witness is None:
        return ""
    arr = np.round(np.asarray(result.witness.probs, dtype=float), 12) + 0.0
    return hashlib.sha256(arr.tobytes()).hexdigest()[:16]


def _fmt(v):
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return v


def _diag_text(diag: dict) -> str:
    def clean(v):
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        if isinstance(v, float) and not math.isfinite(v):
            return str(v)
        return v
    return json.dumps({k: clean(v) for k, v in sorted(diag.items())}, sort_keys=True)


def render(columns: list[str], rows: list[dict], fmt: str, meta: dict) -> str:
    if fmt == "json":
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return str(v)
            return v
        body = {"meta": meta, "columns": columns,
                "rows": [{c: clean(r[c]) for c in columns} for r in rows]}
        return json.dumps(body, indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def read_table(text: str, fmt: str) -> tuple[list[str], list[dict]]:
    """Parse output produced by ``render`` (numbers become floats)."""
    if fmt == "json":
        obj = json.loads(text)
        return obj["columns"], obj["rows"]
    rows = list(csv.reader(io.StringIO(text)))
    cols = rows[0]
    out = []
    for r in rows[1:]:
        rec = {}
        for c, v in zip(cols, r):
            try:
                rec[c] = float(v)
            except ValueError:
                rec[c] = v
        out.append(rec)
    return cols, out


def validate_rows(cols: list[str], rows: list[dict]):
    """Round-trip checks on emitted rows."""
    for r in rows:
        for c in ("value_nats", "value", "p_e", "stderr", "rd_boundary"):
            if c in r:
                v = float(r[c])
                if math.isnan(v) or v < -1e-12:
                    raise RuntimeError(f"invalid {c} in output row: {r}")
        if "p_e" in r and float(r["p_e"]) > 1 + 1e-12:
            raise RuntimeError(f"p_e above 1 in output row: {r}")
        if "diagnostics" in r and r["diagnostics"] not in ("", None):
            json.loads(r["diagnostics"])


def emit(args, columns, rows, meta):
    text = render(columns, rows, args.format, meta)
    validate_rows(*read_table(text, args.format))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _units(args, v: float) -> float:
    return v / LN2 if args.bits else v


# -- subcommands --------------------------------------------------------------

def cmd_rd(args) -> int:
    model, extra = load_problem(args.model)
    cfg = solver_config(args, extra)
    grid = parse_grid(args.grid)
    rows = []
    for d in grid:
        res = rate_distortion(model, d, cfg, args.u_size)
        rows.append({"delta": _units(args, d), "value_nats": _units(args, res.value),
                     "witness_hash": witness_hash(res), "diagnostics": _diag_text(res.diagnostics)})
    emit(args, ["delta", "value_nats", "witness_hash", "diagnostics"], rows,
         {"subcommand": "rd", "units": "bits" if args.bits else "nats"})
    return 0


def _exponent_cmd(args, solver, name) -> int:
    model, extra = load_problem(args.model)
    cfg = solver_config(args, extra)
    u_size = args.u_size or extra.get("u_size")
    grid = parse_grid(args.grid)
    rows = []
    if args.sweep == "R":
        delta = args.delta if args.delta is not None else extra.get("Delta")
        if delta is None:
            raise InputError("--delta is required when sweeping R")
        boundary = positivity_threshold(model, delta, cfg)
        for R in grid:
            res = solver(model, ProblemSpec(R, delta, u_size), cfg)
            rows.append({"R": _units(args, R), "value_nats": _units(args, res.value),
                         "rd_boundary": _units(args, boundary), "witness_hash": witness_hash(res),
                         "diagnostics": _diag_text(res.diagnostics)})
        cols = ["R", "value_nats", "rd_boundary", "witness_hash", "diagnostics"]
    else:
        R = args.rate if args.rate is not None else extra.get("R")
        if R is None:
            raise InputError("--rate is required when sweeping delta")
        for d in grid:
            res = solver(model, ProblemSpec(R, d, u_size), cfg)
            rows.append({"delta": _units(args, d), "value_nats": _units(args, res.value),
                         "witness_hash": witness_hash(res),
                         "diagnostics": _diag_text(res.diagnostics)})
        cols = ["delta", "value_nats", "witness_hash", "diagnostics"]
    emit(args, cols, rows, {"subcommand": name, "units": "bits" if args.bits else "nats"})
    return 0


def cmd_exponent(args) -> int:
    return _exponent_cmd(args, error_exponent, "exponent")


def cmd_sc_exponent(args) -> int:
    return _exponent_cmd(args, strong_converse_exponent, "sc-exponent")


def cmd_simulate(args) -> int:
    model, extra = load_problem(args.model)
    cfg = solver_config(args, extra)
    R = args.rate if args.rate is not None else extra.get("R")
    delta = args.delta if args.delta is not None else extra.get("Delta")
    if R is None or delta is None:
        raise InputError("simulate needs --rate and --delta")
    seed = args.seed or 0
    rows = []
    for n in parse_ints(args.n_list):
        scheme = coding.build_achievability_scheme(model, n, R, delta, args.epsilon,
                                                   args.variant, args.u_size, args.method, cfg)
        if args.samples:
            rep = coding.mc_excess_prob(scheme, model, args.samples, seed, stream=n)
        else:
            rep = coding.exact_excess_prob(scheme, model)
        mlog = -math.log(rep.p_e) / n + 0.0 if rep.p_e > 0 else math.inf
        rows.append({"n": n, "p_e": rep.p_e, "stderr": rep.stderr,
                     "minus_log_pe_over_n": _units(args, mlog)})
    emit(args, ["n", "p_e", "stderr", "minus_log_pe_over_n"], rows,
         {"subcommand": "simulate", "variant": args.variant,
          "units": "bits" if args.bits else "nats"})
    return 0


def cmd_oracle(args) -> int:
    model, extra = load_problem(args.model)
    cfg = solver_config(args, extra)
    R = args.rate if args.rate is not None else extra.get("R", 0.0)
    delta = args.delta if args.delta is not None else extra.get("Delta")
    if delta is None:
        raise InputError("oracle needs --delta")
    try:
        k = int(args.grid)
    except ValueError as exc:
        raise InputError("--grid must be an integer denominator for the oracle") from exc
    res = brute_force_exponent_oracle(model, ProblemSpec(R, delta, args.u_size), args.kind, k, cfg)
    rows = [{"kind": args.kind.upper(), "R": _units(args, R), "delta": _units(args, delta),
             "value_nats": _units(args, res.value), "granularity": _units(args, res.granularity),
             "grid_k": k}]
    emit(args, ["kind", "R", "delta", "value_nats", "granularity", "grid_k"], rows,
         {"subcommand": "oracle", "units": "bits" if args.bits else "nats"})
    return 0


def cmd_wak_check(args) -> int:
    model, _ = load_problem(args.model)
    rep = wak.verify_equivalence(model, args.n, args.rate, args.helper_rate, args.trials,
                                 args.seed or 0)
    rows = [{"n": rep.n, "messages": rep.messages, "helper_size": rep.helper_size,
             "codes_checked": rep.codes_checked, "max_discrepancy": rep.max_discrepancy,
             "max_violation": rep.max_violation, "min_error_ib": rep.min_error_ib,
             "min_error_helper": rep.min_error_helper}]
    emit(args, list(rows[0]), rows, {"subcommand": "wak-check"})
    if not rep.ok:
        raise CheckFailed("code transformations changed the error probability",
                          {"model": model.probs.tolist(), "n": args.n, "R": args.rate,
                           "B": args.helper_rate, "seed": args.seed, **rows[0]})
    return 0


def cmd_identity_check(args) -> int:
    model, _ = load_problem(args.model)
    rng = np.random.default_rng(args.seed or 0)
    nxn, nyn = model.nx**args.n, model.ny**args.n
    if nxn * nyn > 10**6:
        raise SizeCapError("|X|^n |Y|^n exceeds 10^6")
    worst, rows = 0.0, []
    for t in range(args.trials):
        q = rng.dirichlet(np.full(nxn * nyn, 0.5)).reshape(nxn, nyn)
        enc = rng.integers(0, args.cells, nyn)
        rep = coding.verify_single_letter_identity(q, enc, model, args.n)
        worst = max(worst, rep.diff)
        rows.append({"trial": t, "lhs": rep.lhs, "rhs": rep.rhs, "abs_diff": rep.diff,
                     "bound_plain": int(rep.bound_plain), "bound_rate": int(rep.bound_rate)})
        if rep.diff > 1e-10 or not (rep.bound_plain and rep.bound_rate):
            emit(args, list(rows[0]), rows, {"subcommand": "identity-check"})
            raise CheckFailed("single-letter identity failed",
                              {"trial": t, "q": q.tolist(), "encoder": enc.tolist(),
                               "model": model.probs.tolist(), **rows[-1]})
    emit(args, list(rows[0]), rows, {"subcommand": "identity-check", "max_abs_diff": worst})
    print(f"max |lhs - rhs| = {worst:.3e}", file=sys.stderr)
    return 0


def cmd_cover(args) -> int:
    try:
        y_counts = TypeVector(tuple(int(v) for v in args.y_type.split(",")))
        channel = CondTypeMatrix(tuple(tuple(int(v) for v in row.split(","))
                                       for row in args.channel.split(";")))
    except ValueError as exc:
        raise InputError(f"bad --y-type or --channel value: {exc}") from exc
    cover = greedy_type_cover(y_counts, channel)
    sizes = [bin(m).count("1") for m in cover.covered_sets]
    rows = [{"index": i, "codeword": "".join(map(str, c)), "newly_covered": s}
            for i, (c, s) in enumerate(zip(cover.codewords, sizes))]
    emit(args, ["index", "codeword", "newly_covered"], rows,
         {"subcommand": "cover", "size": len(cover.codewords), "size_bound": cover.size_bound,
          "mutual_info": cover.mutual_info})
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ibexp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True):
        if model:
            sp.add_argument("--model", required=True, help="model JSON file or inline JSON")
        sp.add_argument("--out", help="output path (default stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--restarts", type=int, default=None)
        sp.add_argument("--u-size", dest="u_size", type=int, default=None)
        sp.add_argument("--bits", action="store_true", help="report rates and exponents in bits")

    sp = sub.add_parser("rd", help="rate-distortion curve over a delta grid")
    common(sp)
    sp.add_argument("--grid", required=True, help='delta values: "a,b,c" or "start:stop:count"')
    sp.set_defaults(func=cmd_rd)

    for name, func in (("exponent", cmd_exponent), ("sc-exponent", cmd_sc_exponent)):
        sp = sub.add_parser(name, help=f"{name} curve")
        common(sp)
        sp.add_argument("--grid", required=True, help="values of the swept parameter")
        sp.add_argument("--sweep", choices=("R", "delta"), default="R")
        sp.add_argument("--delta", type=float)
        sp.add_argument("--rate", type=float)
        sp.set_defaults(func=func)

    sp = sub.add_parser("simulate", help="excess probability of the coding scheme")
    common(sp)
    sp.add_argument("--rate", type=float)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--n-list", dest="n_list", required=True)
    sp.add_argument("--samples", type=int, default=0, help="Monte Carlo samples (0 = exact)")
    sp.add_argument("--variant", choices=("error", "strong_converse"), default="error")
    sp.add_argument("--method", choices=("auto", "explicit", "type"), default="auto")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("oracle", help="grid oracle value")
    common(sp)
    sp.add_argument("--kind", choices=("E", "F", "RD"), required=True)
    sp.add_argument("--rate", type=float)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--grid", default="100", help="grid denominator")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("wak-check", help="check the helper/list code equivalence")
    common(sp)
    sp.add_argument("--n", type=int, default=1)
    sp.add_argument("--rate", type=float, default=math.log(2))
    sp.add_argument("--helper-rate", dest="helper_rate", type=float, default=math.log(2))
    sp.add_argument("--trials", type=int, default=200)
    sp.set_defaults(func=cmd_wak_check)

    sp = sub.add_parser("identity-check", help="single-letter identity on random fixtures")
    common(sp)
    sp.add_argument("--n", type=int, default=4)
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--cells", type=int, default=2, help="messages of the random encoders")
    sp.set_defaults(func=cmd_identity_check)

    sp = sub.add_parser("cover", help="greedy covering codebook of a type class")
    common(sp, model=False)
    sp.add_argument("--y-type", dest="y_type", required=True, help='counts, e.g. "3,3"')
    sp.add_argument("--channel", required=True, help='joint counts [y][u], e.g. "2,1;1,2"')
    sp.set_defaults(func=cmd_cover)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SizeCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        print(json.dumps(exc.fixture, default=str), file=sys.stderr)
        return 4
    except (InputError, DistributionError, coding.ConstructionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
