"""Command-line entry point: ``riffle <command> [options]``.

Every command writes CSV (header row first) or JSON to ``--output`` or stdout.
Output depends only on the arguments, never on ``--threads``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from .blocks import DEFAULT_DELTA, blocks_decompose, build_stable_partition, c_x_closed_form, c_x_max
from .constants import crossover_points, cutoff_constants, mixing_table, TABLE1_PS
from .core import BudgetExceeded, ProbVector, ValidationError, parse_string
from .likelihood import DEFAULT_L, tv_upper_chi2_mc
from .mixing import (
    DEFAULT_COLD_DELTA,
    cold_spot_plan,
    cold_spot_replicates,
    cutoff_profile,
    exploration_hazard,
    mc_edge_intersection,
    provenance,
    tv_lower_mc,
)
from .shuffle import exact_forward_distribution, tv_symmetric_eulerian

FIGURE1_STEPS = 980  # p = 0.010, 0.011, ..., 0.990


def parse_k_range(text: str) -> list:
    """``"25..45"``, ``"3,5,8"`` or ``"12"``."""
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split(".."))
            if lo < 0 or hi < lo:
                raise ValidationError(f"K range {text!r} must be non-negative and ordered")
            return list(range(lo, hi + 1))
        ks = [int(v) for v in text.split(",")]
    except ValueError as exc:
        raise ValidationError(f"cannot parse K range {text!r}") from exc
    if any(k < 0 for k in ks):
        raise ValidationError("K values must be non-negative")
    return ks


def _fmt(v):
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    return v


def _json_value(v):
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def render(rows: list, fmt: str) -> str:
    if fmt == "json":
        return json.dumps([{k: _json_value(v) for k, v in r.items()} for r in rows], indent=2) + "\n"
    buf = io.StringIO()
    if rows:
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(rows[0].keys())
        for r in rows:
            w.writerow([_fmt(v) for v in r.values()])
    return buf.getvalue()


def emit(text: str, output: str | None):
    if output:
        with open(output, "w", newline="") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _p(args) -> ProbVector:
    return ProbVector.parse(args.p)


def _ks(args) -> list:
    if getattr(args, "k", None):
        return parse_k_range(args.k)
    if getattr(args, "kmax", None) is not None:
        return list(range(1, args.kmax + 1))
    raise ValidationError("give --k or --kmax")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_constants(args) -> str:
    p = _p(args)
    out = {"p": [float(w) for w in p.weights], **cutoff_constants(p).as_dict()}
    lo, hi = crossover_points()
    out["crossovers_two_piles"] = [lo, hi]
    out["version"] = __version__
    return json.dumps(out, indent=2) + "\n"


def cmd_table1(args) -> str:
    rows = []
    for N, values in mixing_table():
        row = {"N": "coefficient" if N is None else N}
        row.update({f"p={q:g}": v for q, v in zip(TABLE1_PS, values)})
        rows.append(row)
    return render(rows, args.format)


def cmd_figure1(args) -> str:
    rows = []
    for i in range(FIGURE1_STEPS + 1):
        q = round(0.01 + i * 0.001, 3)
        c = cutoff_constants(ProbVector.two(q))
        rows.append({"p": q, "C": c.C, "Ctilde": c.Ctilde, "Cbar": c.Cbar, "asymptote": 1 / math.log(1 / (1 - q))})
    return render(rows, args.format)


def cmd_tv(args) -> str:
    p = _p(args)
    rows = []
    for K in _ks(args):
        row = {"p": str(p), "N": args.n, "K": K}
        if args.exact:
            tv = exact_forward_distribution(p, args.n, K).tv_to_uniform()
            row.update(tv=float(tv), tv_exact=tv)
        else:
            lb = tv_lower_mc(p, args.n, K, args.statistic, args.replicates, args.seed, args.threads)
            row.update(tv_lower=lb.raw, tv_lower_penalized=lb.penalized)
            if K >= 2:
                ub = tv_upper_chi2_mc(p, args.n, K, args.L, args.replicates, args.seed, args.threads)
                row.update(tv_upper=ub.value, tv_upper_ci=ub.upper)
            else:
                row.update(tv_upper=1.0, tv_upper_ci=1.0)
            if p.is_uniform and args.n <= 200:
                row["tv_eulerian"] = float(tv_symmetric_eulerian(p.k, args.n, K))
            row.update(provenance(args.seed, args.replicates))
        rows.append(row)
    return render(rows, args.format)


def cmd_edges(args) -> str:
    p = _p(args)
    rows = []
    logn = math.log(args.n)
    for K in _ks(args):
        ei = mc_edge_intersection(p, args.n, K, args.replicates, args.seed, args.threads)
        row = {"p": str(p), "N": args.n, "K": K, "K_over_logN": K / logn, "statistic": "shared_edges", "estimate": ei.total.mean, "se": ei.total.se, "forward": ei.forward.mean, "backward": ei.backward.mean}
        if args.hazard:
            hz = exploration_hazard(p, args.n, K, args.replicates, args.seed, args.threads)
            row.update(hazard=hz.mean, hazard_se=hz.se)
        row.update(provenance(args.seed, args.replicates))
        rows.append(row)
    return render(rows, args.format)


def cmd_blocks(args) -> str:
    p = _p(args)
    if args.decompose:
        a, b = (parse_string(s) for s in args.decompose)
        K = args.k_len if args.k_len is not None else max(len(a), len(b))
        rows = [{"prefix": "".join(map(str, x)), "length": len(x)} for x in blocks_decompose(a, b, K, p.k)]
        return render(rows, args.format)
    if args.cxmax:
        if args.C is None and args.k_len is None:
            raise ValidationError("give --C, or --K together with --n")
        C = args.C if args.C is not None else args.k_len / math.log(args.n)
        r = c_x_max(p, C, args.delta)
        out = {"p": str(p), "C": C, "delta": args.delta, "max": r.value, "family": r.family, "c_D": r.d, "b0": r.profile.b0, "bk1": r.profile.bk1, "c": list(r.profile.c), "closed_form": c_x_closed_form(p, C)}
        return json.dumps(out, indent=2) + "\n"
    if args.k_len is None:
        raise ValidationError("give --K for the stable partition")
    part = build_stable_partition(p, args.n, args.k_len, args.delta)
    if args.format == "json":
        return render([{"prefix": "".join(map(str, l.x)), "length": len(l.x), "lambda": l.lam, "c_L": l.c_L, "c_F": l.c_F, "c_D": l.c_D} for l in part.leaves], "json")
    return part.to_csv()


def cmd_lowerbound(args) -> str:
    p = _p(args)
    N = args.n
    c = cutoff_constants(p)
    K = parse_k_range(args.k)[0] if args.k else math.floor((c.C - args.epsilon) * math.log(N))
    plan = cold_spot_plan(p, N, K, args.cold_delta)
    reps = cold_spot_replicates(plan, args.replicates, args.seed, args.threads)
    threshold = plan.size ** (0.5 + args.margin)
    rows = []
    for i, (edges, ytot, outside) in enumerate(reps):
        rows.append({"p": str(p), "N": N, "K": K, "replicate": i, "H_size": plan.size, "H_boundary": plan.boundary, "gamma": plan.gamma, "alpha": " ".join(map(str, plan.alpha)), "beta": " ".join(map(str, plan.beta)), "edges_in_H": int(edges), "Y_tot": int(ytot), "cl_outside_H": int(outside), "threshold": threshold, "hit": bool(edges >= threshold), **provenance(args.seed, args.replicates)})
    return render(rows, args.format)


def cmd_profile(args) -> str:
    p = _p(args)
    return render(cutoff_profile(p, args.n, _ks(args), args.replicates, args.seed, args.threads, args.statistic), args.format)


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------

CALIBRATION = {
    "edges_n65536.csv": ["edges", "--p", "0.5,0.5", "--n", "65536", "--k", "18..45", "--replicates", "2000"],
    "hazard_n4096.csv": ["edges", "--hazard", "--p", "0.5,0.5", "--n", "4096", "--k", "16..30", "--replicates", "4000"],
    "cold_spot_n100000.csv": ["lowerbound", "--p", "0.5,0.5", "--n", "100000", "--replicates", "100"],
    "tv_n52.csv": ["tv", "--p", "0.5,0.5", "--n", "52", "--k", "0..16", "--replicates", "100000"],
}


def cmd_calibrate(args) -> str:
    out_dir = args.output or "calibration"
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, argv in CALIBRATION.items():
        sub = build_parser().parse_args(argv + ["--seed", str(args.seed), "--threads", str(args.threads)])
        text = sub.func(sub)
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as f:
            f.write(text)
        written.append({"file": name, "command": "riffle " + " ".join(argv), "seed": args.seed})
    return render(written, "csv")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="riffle", description="Asymmetric riffle shuffle cutoff toolkit")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, mc=False):
        sp.add_argument("--output", "-o", default=None, help="write here instead of stdout")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        if mc:
            sp.add_argument("--seed", type=int, default=0)
            sp.add_argument("--replicates", type=int, default=1000)
            sp.add_argument("--threads", type=int, default=1)

    sp = sub.add_parser("constants", help="cutoff constants for one p (JSON)")
    sp.add_argument("--p", required=True, help="comma-separated cut probabilities")
    common(sp)
    sp.set_defaults(func=cmd_constants)

    sp = sub.add_parser("table1", help="mixing times for two-pile p at the standard deck sizes")
    common(sp)
    sp.set_defaults(func=cmd_table1)

    sp = sub.add_parser("figure1", help="C, Ctilde and Cbar for (p, 1-p) on a 0.001 grid")
    common(sp)
    sp.set_defaults(func=cmd_figure1)

    sp = sub.add_parser("tv", help="distance to uniform: exact for tiny decks, MC bounds otherwise")
    sp.add_argument("--p", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--k", help="K values, e.g. 3..9")
    sp.add_argument("--kmax", type=int, help="shorthand for --k 1..KMAX")
    sp.add_argument("--exact", action="store_true")
    sp.add_argument("--statistic", default="ascents", choices=("ascents", "longest-run"))
    sp.add_argument("--L", type=int, default=DEFAULT_L)
    common(sp, mc=True)
    sp.set_defaults(func=cmd_tv)

    sp = sub.add_parser("edges", help="mean shared edges of two independent shuffle graphs")
    sp.add_argument("--p", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--k", required=True)
    sp.add_argument("--hazard", action="store_true", help="also estimate the exploration hazard")
    common(sp, mc=True)
    sp.set_defaults(func=cmd_edges)

    sp = sub.add_parser("blocks", help="stable partition, interval decomposition or c_X maximum")
    sp.add_argument("--p", required=True)
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--K", dest="k_len", type=int)
    sp.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    sp.add_argument("--decompose", nargs=2, metavar=("S_A", "S_B"))
    sp.add_argument("--cxmax", action="store_true")
    sp.add_argument("--C", type=float, help="K / log N for --cxmax")
    common(sp)
    sp.set_defaults(func=cmd_blocks)

    sp = sub.add_parser("lowerbound", help="cold-spot harness: |H|, gamma, Y_tot and edges in H per replicate")
    sp.add_argument("--p", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--k", help="defaults to floor((C - epsilon) log N)")
    sp.add_argument("--epsilon", type=float, default=0.5)
    sp.add_argument("--delta", dest="cold_delta", type=float, default=DEFAULT_COLD_DELTA)
    sp.add_argument("--margin", type=float, default=0.05, help="hit when edges in H >= |H|^(1/2 + margin)")
    common(sp, mc=True)
    sp.set_defaults(func=cmd_lowerbound)

    sp = sub.add_parser("profile", help="sweep K: TV lower bound, shared edges, hazard")
    sp.add_argument("--p", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--k", required=True)
    sp.add_argument("--statistic", default="ascents", choices=("ascents", "longest-run"))
    common(sp, mc=True)
    sp.set_defaults(func=cmd_profile)

    sp = sub.add_parser("calibrate", help="seed-0 calibration runs written as CSV files into --output")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--output", "-o", default=None)
    sp.add_argument("--format", choices=("csv",), default="csv")
    sp.set_defaults(func=cmd_calibrate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.func(args)
        emit(text, None if args.command == "calibrate" else args.output)
    except BrokenPipeError:
        # downstream closed early (e.g. piped into head); not an error
        sys.stdout = open(os.devnull, "w")
        return 0
    except BudgetExceeded as exc:
        print(f"riffle: {exc}", file=sys.stderr)
        return 3
    except (ValidationError, RuntimeError) as exc:
        print(f"riffle: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
