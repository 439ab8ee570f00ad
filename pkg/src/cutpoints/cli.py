"""Command-line front end.

Subcommands: ``exact``, ``simulate``, ``cutpoints``, ``tree``, ``stacks``,
``experiment``.  Results are flat records written as CSV (default) or as a
JSON array; the first column is always ``schema_version`` and every record
embeds the resolved run configuration as a JSON string in ``config``.
Exit status: 0 on success, 2 on usage errors, 1 on computation errors (an
error record is written instead of results).

Tree files: one edge per line as ``u v [weight]``, plus header lines
``root x0`` and ``absorb y``; ``#`` starts a comment.
Profile files: one resistance per line, index implicit from 1.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import experiments as ex
from . import resistance_chain as rc
from . import stack_machine as sm
from . import trajectory_engine as te
from . import tree_walk as tw
from .errors import CutpointsError, InvalidArguments
from .trajectory import absorb, first_passage, horizon

SCHEMA_VERSION = 1


class UsageError(Exception):
    """Flag combination the parser cannot express; exits with status 2."""


def _profile_args(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--beta", type=float, help="canonical profile r_k = 1/(k (ln k)^beta)")
    g.add_argument("--profile", help="file with one resistance per line")
    g.add_argument("--geometric", type=float, metavar="RATIO", help="r_k = RATIO**k")


def _output_args(p):
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", help="output path (default: stdout)")


def _seed(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _range(text):
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError("expected A:B") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cutpoints", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exact", help="exact formulas")
    _profile_args(p)
    p.add_argument("--op", required=True,
                   choices=("r", "t", "p", "q", "hit", "return", "b", "psum", "audit"))
    for name in ("k", "j", "n", "m", "M"):
        p.add_argument(f"--{name}", type=int)
    _output_args(p)

    p = sub.add_parser("simulate", help="simulate one trajectory")
    _profile_args(p)
    p.add_argument("--start", type=int, default=1)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--first-passage", type=int, metavar="N")
    g.add_argument("--absorb", type=int, metavar="Y")
    g.add_argument("--horizon", type=int, metavar="T")
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=te.DEFAULT_HORIZON)
    p.add_argument("--out")

    p = sub.add_parser("cutpoints", help="cutpoint indicator frequencies per level")
    _profile_args(p)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--method", choices=("censored", "regeneration", "ladder"), default="ladder")
    p.add_argument("--N", type=int)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=_seed, required=True)
    _output_args(p)

    p = sub.add_parser("tree", help="tree walk statistics and reconstruction checks")
    p.add_argument("--input", required=True)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=_seed, required=True)
    _output_args(p)

    p = sub.add_parser("stacks", help="stack representation reorder demo")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="tree file (walk from root until absorb)")
    src.add_argument("--beta", type=float)
    p.add_argument("--first-passage", type=int, default=16, metavar="N")
    p.add_argument("--reorders", type=int, default=10)
    p.add_argument("--seed", type=_seed, required=True)
    _output_args(p)

    p = sub.add_parser("experiment", help="Monte Carlo estimators against exact targets")
    _profile_args(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--escape", type=int, metavar="K")
    g.add_argument("--conditional", type=int, nargs=2, metavar=("J", "K"))
    g.add_argument("--census", type=int, metavar="M")
    g.add_argument("--audit", action="store_true")
    g.add_argument("--summability", action="store_true")
    p.add_argument("--m", type=_range, default=(4, 9), help="block range A:B (inclusive)")
    p.add_argument("--reps", type=int, default=10000)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--threads", type=int, default=1)
    _output_args(p)
    return ap


def _make_profile(args):
    if getattr(args, "beta", None) is not None:
        return rc.make_profile(beta=args.beta)
    if getattr(args, "geometric", None) is not None:
        return rc.make_profile(ratio=args.geometric)
    return rc.read_profile(args.profile)


def _table(profile, need: int):
    if profile.kind == "explicit":
        return rc.tails(profile, min(max(need, 1), profile.cutoff))
    if profile.kind == "geometric":
        return rc.tails(profile, max(need, 2))
    return rc.tails(profile, max(need, 1024))


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if v is not None}
    cfg.pop("format", None)
    cfg.pop("out", None)
    cfg.pop("threads", None)     # wall time only
    return cfg


def _emit(records, args, cfg):
    base = {"schema_version": SCHEMA_VERSION, "command": args.command}
    conf = json.dumps(cfg, sort_keys=True)
    rows = [{**base, **r, "config": conf} for r in records]
    fmt = getattr(args, "format", "csv")
    if fmt == "json":
        text = json.dumps(rows, indent=1, default=_jsonable) + "\n"
    else:
        buf = io.StringIO()
        fields = []
        for r in rows:
            fields.extend(k for k in r if k not in fields)
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _csv_value(v) for k, v in r.items()})
        text = buf.getvalue()
    _write(text, getattr(args, "out", None))


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(type(v))


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, np.generic):
        v = v.item()
    return repr(v) if isinstance(v, float) else v


def _write(text, path):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _need(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise UsageError(f"--{n} is required for --op {args.op}")


def cmd_exact(args):
    prof = _make_profile(args)
    op = args.op
    need = {"r": ("k",), "t": ("k",), "p": ("k",), "q": ("j", "k"), "hit": ("k", "n"),
            "return": ("n", "k"), "b": ("m",), "psum": ("m",), "audit": ("m", "M")}[op]
    _need(args, *need)
    if op == "r":
        return [{"op": op, "k": args.k, "value": prof.r(args.k), "abs_error": 0.0}]
    top = {"t": args.k, "p": args.k, "q": (args.k or 0) + 1, "hit": args.n, "return": args.n,
           "b": 2 ** ((args.m or 0) + 1), "psum": 2 ** ((args.m or 0) + 1),
           "audit": (args.M or 0) + 1}[op]
    table = _table(prof, top)
    rec = {"op": op, **{n: getattr(args, n) for n in need}}
    if op == "t":
        lo, hi = table.t_bounds(args.k)
        v, e = table.t(args.k), (hi - lo) / 2
    elif op == "p":
        v, e = rc.cutpoint_probability(table, args.k, with_error=True)
    elif op == "q":
        v, e = rc.conditional_cut_probability(table, args.j, args.k, with_error=True)
    elif op == "hit":
        v, e = rc.hit_before(table, args.k, args.n, with_error=True)
    elif op == "return":
        v, e = rc.return_probability(table, args.n, args.k, with_error=True)
    elif op == "b":
        v, e = rc.block_minimum_b(table, args.m), None
    elif op == "psum":
        v, e = rc.block_p_sum(table, args.m), None
    else:
        a = rc.divergence_audit(table, args.m, args.M)
        return [{**rec, "partial_sum": a.partial_sum, "lower_bound": a.lower_bound,
                 "holds": a.holds}]
    return [{**rec, "value": v, "abs_error": e}]


def _stop(args):
    if args.first_passage is not None:
        return first_passage(args.first_passage)
    if args.absorb is not None:
        return absorb(args.absorb)
    return horizon(args.horizon)


def cmd_simulate(args):
    prof = _make_profile(args)
    traj = te.simulate(rc.ChainLaw(prof), args.start, _stop(args), args.seed,
                       replicate=args.replicate, max_steps=args.max_steps)
    _write(traj.dump(), args.out)
    return None


def cmd_cutpoints(args):
    prof = _make_profile(args)
    chain = rc.ChainLaw(prof)
    K = args.K
    N = args.N if args.N is not None else te.default_censor_level(K)
    if prof.kind == "explicit":
        N = min(N, prof.cutoff + 1)
    table = _table(prof, max(N, K + 1))
    p = table.cutpoint_probabilities(1, K)
    if args.method == "censored":
        if args.reps < 1:
            raise InvalidArguments("--reps must be >= 1")
        ind = np.empty((args.reps, K), dtype=bool)
        for i in range(args.reps):
            traj = te.simulate(chain, 1, first_passage(N), args.seed, replicate=i)
            ind[i] = te.detect_cutpoints_censored(traj, K, table).indicator
        bias = table.tail_mid[N] / table.tail_mid[1:K + 1]
    else:
        b = te.sample_cutpoint_patterns(chain, table, K, args.reps, args.seed,
                                        method=args.method, N=N)
        ind, bias = b.indicators, np.zeros(K)
    rows = []
    for k in range(1, K + 1):
        r = ex.EstimateReport.from_values("level", ind[:, k - 1], args.seed, float(p[k - 1]))
        rows.append({"k": k, "method": args.method, "seed": args.seed, "reps": r.reps,
                     "estimate": r.estimate, "se": r.se, "target": r.target, "z": r.z,
                     "bias_bound": float(bias[k - 1])})
    return rows


def _read_tree(path):
    with open(path) as fh:
        return tw.parse_tree(fh.read())


def cmd_tree(args):
    tree = _read_tree(args.input)
    if tree.absorb is None:
        raise InvalidArguments("tree file needs an 'absorb' line")
    rows = []
    for i in range(args.reps):
        traj = tw.simulate_tree_walk(tree, seed=args.seed, replicate=i)
        st = tw.walk_statistics(traj)
        M = tw.reconstruct_M_from_V(tree, st.V, tree.root, tree.absorb)
        U = tw.infer_exit_pointers(tree, st.V, tree.root, tree.absorb)
        rows.append({
            "replicate": i, "seed": args.seed, "steps": len(traj) - 1,
            "reconstruct_match": {k: v for k, v in M.items() if v} == st.M,
            "exits_match": all(U[x] == st.U[x] for x in st.V),
            "balanced": tw.check_balance(st, tree.root),
            "loop_erasure": " ".join(map(str, st.L)),
        })
    return rows


def cmd_stacks(args):
    if args.input:
        tree = _read_tree(args.input)
        if tree.absorb is None:
            raise InvalidArguments("tree file needs an 'absorb' line")
        law, x0, stop = tree, tree.root, tree.absorb
    else:
        prof = rc.make_profile(beta=args.beta)
        law, x0, stop = rc.ChainLaw(prof), 1, args.first_passage
    stacks = sm.StackSystem(law, seed=args.seed)
    traj, snap = sm.run_from_stacks(stacks, x0, stop)
    M0 = sm.transition_counts(traj.states)
    gen = np.random.default_rng(args.seed)
    rows = []
    states = sorted(snap.popped)
    for i in range(args.reorders):
        A = [x for x in states if gen.random() < 0.5] or states[:1]
        perms = {x: gen.permutation(len(snap.W(x))) for x in A}
        t2, s2 = sm.reorder_and_rerun(snap, perms)
        M2 = sm.transition_counts(t2.states)
        rows.append({"reorder": i, "seed": args.seed, "states_reordered": len(A),
                     "steps": len(traj) - 1, "same_M": M2 == M0,
                     "same_U": s2.exits() == snap.exits(),
                     "eulerian": sm.eulerian_check(M2, x0, snap.end),
                     "same_path": t2.as_tuple() == traj.as_tuple()})
    return rows


def cmd_experiment(args):
    prof = _make_profile(args)
    chain = rc.ChainLaw(prof)
    threads = args.threads
    lo, hi = args.m
    if args.escape is not None:
        k = args.escape
        table = _table(prof, 4 * k + 1)
        return [ex.mc_escape(chain, table, k, args.reps, args.seed, workers=threads).as_record()]
    if args.conditional is not None:
        j, k = args.conditional
        table = _table(prof, k + 1)
        return [ex.mc_conditional(chain, table, j, k, args.reps, args.seed,
                                  workers=threads).as_record()]
    if args.census is not None:
        m = args.census
        table = _table(prof, 2 ** (m + 1) + 1)
        c = ex.block_census(chain, table, m, args.reps, args.seed, workers=threads)
        return [c.a_hat.as_record(), c.expected_A.as_record(), c.no_cutpoint.as_record()]
    table = _table(prof, 2 ** (hi + 1) + 1)
    if args.audit:
        rows = []
        for m in range(lo, hi + 1):
            a = ex.inequality_audit(chain, table, m, args.reps, args.seed, workers=threads)
            rows.append({"m": m, "seed": args.seed, "reps": a.reps, "estimate": a.a_hat,
                         "se": a.a_se, "target": None, "z": None, "lhs": a.lhs, "b_m": a.b_m,
                         "rhs": a.rhs, "margin": a.margin, "status": a.status})
        return rows
    s = ex.summability_table(chain, table, range(lo, hi + 1), args.reps, args.seed,
                             workers=threads)
    return [{"m": m, "seed": args.seed, "reps": args.reps, "estimate": a, "se": se,
             "target": None, "z": None, "a_m_times_m2": am2,
             "trend_violation": m in s.violations} for m, a, se, am2 in s.rows]


COMMANDS = {"exact": cmd_exact, "simulate": cmd_simulate, "cutpoints": cmd_cutpoints,
            "tree": cmd_tree, "stacks": cmd_stacks, "experiment": cmd_experiment}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    cfg = _config(args)
    try:
        records = COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"cutpoints: error: {exc}", file=sys.stderr)
        return 2
    except (CutpointsError, OSError, ValueError) as exc:
        code = getattr(exc, "code", type(exc).__name__)
        err = {"schema_version": SCHEMA_VERSION, "command": args.command, "error": code,
               "message": str(exc), "config": json.dumps(cfg, sort_keys=True)}
        _write(json.dumps(err) + "\n", getattr(args, "out", None))
        return 1
    if records is not None:
        _emit(records, args, cfg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
