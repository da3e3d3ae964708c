import os
import sys
import json
import random
import argparse
from datetime import datetime
from pathlib import Path
from dotenv import load_dotenv

from coeff import ZPOW2, CoeffDomain, DomainError, PolyflipError
from tensor import (FormatError, SLOTS, flattening_rank, is_multiplication_tensor,
                    load_scheme, save_scheme)
from construct import EvalPoints, build
from moves import TRACE_FORMAT, load_trace, save_trace
from path import replay, toomcook_path
from search import SearchConfig, SplitPolicy, search_campaign
from lift import (DEFAULT_BITS, FAILED, MOD_2K_ONLY, PIVOT_RULES, classify_coefficients,
                  lift_and_classify, rational_reconstruct_scheme)
from brent import (CLAIMED_UNSAT, SAT, UNKNOWN, SolverError, build_brent, encode_cnf, save_certificate,
                   solve, write_dimacs)

# Load environment variables
load_dotenv()

KINDS = ["standard", "toom-cook", "karatsuba", "deg1", "deg2"]


class UsageError(PolyflipError):
    pass


class Console:
    """Tagged status lines; they go to stderr in --json mode so stdout stays parseable."""

    def __init__(self, json_mode=False):
        self.stream = sys.stderr if json_mode else sys.stdout

    def info(self, tag, text):
        print(f"[{tag}] {text}", file=self.stream)

    def ok(self, tag, text):
        print(f"✓ [{tag}] {text}", file=self.stream)

    def warn(self, tag, text):
        print(f"⚠ [{tag}] {text}", file=self.stream)

    def fail(self, tag, text):
        print(f"✗ [{tag}] {text}", file=self.stream)


def output_path(args, stem, suffix=".json"):
    """-o when given, otherwise a timestamped file in POLYFLIP_OUTPUT_DIR."""
    if args.output:
        path = Path(args.output)
    else:
        timestamp = datetime.now().strftime("%Y-%m-%d_%H-%M-%S")
        path = Path(os.getenv("POLYFLIP_OUTPUT_DIR", "output")) / f"{timestamp}_{stem}{suffix}"
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def metadata_path(path):
    return Path(path).with_suffix(".meta.json")


def save_metadata(path, args, verdict, seed=None, **extra):
    params = {k: v for k, v in vars(args).items() if k not in ("func", "json")}
    metadata = {
        "subcommand": args.command,
        "params": params,
        "seed": seed,
        "verdict": verdict,
        "timestamp": datetime.now().isoformat(),
        "filename": Path(path).name,
    }
    metadata.update(extra)
    meta_file = metadata_path(path)
    with open(meta_file, "w") as f:
        json.dump(metadata, f, indent=2, default=str)
    return meta_file


def parse_domain(text):
    try:
        return CoeffDomain.parse(text)
    except DomainError as e:
        raise UsageError(str(e)) from None


def parse_points(text, domain):
    if not text:
        return None
    try:
        return EvalPoints(domain, tuple(domain.parse_value(x.strip()) for x in text.split(",")))
    except PolyflipError as e:
        raise UsageError(f"--points: {e}") from None


def resolve_walks(args):
    if args.walks is not None:
        return args.walks
    text = os.getenv("POLYFLIP_WALKS", "8")
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"POLYFLIP_WALKS must be an integer, got {text!r}") from None


def require_degrees(args):
    if args.n is None or args.m is None:
        raise UsageError(f"{args.command} needs --n and --m")
    if args.n < 0 or args.m < 0:
        raise UsageError("Degrees must be non-negative")


def scheme_summary(s):
    return {"n": s.n, "m": s.m, "domain": str(s.domain), "rank": s.rank, "lower_bound": s.n + s.m + 1}


def cmd_gen(args, console):
    require_degrees(args)
    domain = parse_domain(args.domain)
    points = parse_points(args.points, domain)
    s = build(args.kind, args.n, args.m, domain,
              points=points.points if points else None, verify=not args.no_verify)
    out = save_scheme(s, output_path(args, f"{args.kind}_{args.n}_{args.m}"))
    verdict = "unchecked" if args.no_verify else "verified"
    console.ok("gen", f"{args.kind} ({args.n},{args.m}) over {domain}: rank {s.rank} -> {out}")
    meta = save_metadata(out, args, verdict)
    console.ok("gen", f"Metadata saved to {meta}")
    return 0, dict(scheme_summary(s), kind=args.kind, verdict=verdict, output=str(out))


def cmd_verify(args, console):
    results, code = [], 0
    for name in args.files:
        s = load_scheme(name)
        good = is_multiplication_tensor(s)
        if good:
            console.ok("verify", f"{name}: ({s.n},{s.m}) rank {s.rank} over {s.domain}")
        else:
            console.fail("verify", f"{name}: does not represent T_{s.n},{s.m}")
            code = 1
        results.append(dict(scheme_summary(s), file=name, verified=good))
    return code, {"files": results}


def _replay(args, console):
    trace = load_trace(args.replay)
    final = replay(trace, verify_each=not args.no_verify)
    good = is_multiplication_tensor(final)
    counts = trace.counts()
    summary = dict(scheme_summary(final), moves=counts, verified=good, trace=args.replay)
    if not good:
        console.fail("path", f"{args.replay}: final state does not represent T_{trace.n},{trace.m}")
        return 1, summary
    console.ok("path", f"replayed {len(trace)} moves ({counts['flip']} flips, "
                       f"{counts['reduction']} reductions): rank {final.rank}")
    if args.output:
        out = save_scheme(final, output_path(args, "replay"))
        save_metadata(out, args, "verified", moves=counts)
        summary["output"] = str(out)
        console.ok("path", f"Final scheme saved to {out}")
    return 0, summary


def cmd_path(args, console):
    if args.replay:
        return _replay(args, console)
    require_degrees(args)
    domain = parse_domain(args.domain)
    pts = parse_points(args.points, domain)
    trace, stats = toomcook_path(args.n, args.m, pts=pts, domain=domain, verify=not args.no_verify)
    out = save_trace(trace, output_path(args, f"path_{args.n}_{args.m}"))
    console.ok("path", f"({args.n},{args.m}): {stats.flips} flips, {stats.reductions} reductions, "
                       f"final rank {stats.final_rank} -> {out}")
    if args.stats:
        console.info("path", f"recurrence {stats.recurrence_flips} flips, "
                             f"closed form {stats.closed_form_flips}, "
                             f"split path {stats.split_path_length} moves")
        for lv in reversed(stats.levels):
            rec = lv["recurrence"]
            console.info("path", f"  level ({lv['n']},{lv['m']}) z={lv['z']}: peel {lv['peel']} "
                                 f"(recurrence {rec['peel']}), rounds {sum(c for _, c in lv['rounds'])} "
                                 f"(recurrence {rec['rounds']}), closing {lv['closing']}")
    verdict = "unchecked" if args.no_verify else "verified"
    save_metadata(out, args, verdict, stats=stats.to_dict())
    return 0, dict(stats.to_dict(), verdict=verdict, output=str(out))


def _trace_stats(path, console):
    trace = load_trace(path)
    final = replay(trace)
    counts = trace.counts()
    console.ok("stats", f"{path}: trace ({trace.n},{trace.m}) over {trace.domain}, "
                        f"{len(trace)} moves, final rank {final.rank}")
    return {"file": str(path), "format": TRACE_FORMAT, "moves": counts,
            "final_rank": final.rank, "verified": is_multiplication_tensor(final)}


def _scheme_stats(path, console):
    s = load_scheme(path)
    info = dict(scheme_summary(s), file=str(path), verified=is_multiplication_tensor(s))
    if s.domain.kind != ZPOW2:
        info["flattening_ranks"] = {slot: flattening_rank(s, slot) for slot in SLOTS}
    if not s.domain.is_finite:
        cls = classify_coefficients(s, lifted=False)
        info["coefficients"] = {"class": cls.kind, "denominator": cls.denominator,
                                "primes": list(cls.primes)}
    console.ok("stats", f"{path}: ({s.n},{s.m}) rank {s.rank} over {s.domain}, "
                        f"lower bound {s.n + s.m + 1}")
    return info


def cmd_stats(args, console):
    results = []
    for name in args.files:
        try:
            fmt = json.loads(Path(name).read_text(encoding="utf-8")).get("format")
        except (json.JSONDecodeError, AttributeError):
            raise FormatError(f"{name} is not a JSON document") from None
        if fmt == TRACE_FORMAT:
            results.append(_trace_stats(name, console))
        else:
            results.append(_scheme_stats(name, console))
    code = 0 if all(r["verified"] for r in results) else 1
    return code, {"files": results}


def cmd_search(args, console):
    require_degrees(args)
    domain = parse_domain(args.domain)
    # Generate random seed if not provided
    seed = args.seed if args.seed is not None else random.randint(0, 2**32 - 1)
    if args.seed is None:
        console.info("search", f"Seed: {seed}")
    policy = SplitPolicy(args.excursion, args.split_prob) if args.split else None
    args.walks = walks = resolve_walks(args)
    try:
        cfg = SearchConfig(seed=seed, max_steps=args.max_steps, plateau_limit=args.plateau,
                           split_policy=policy, restarts=args.restarts, walks=walks,
                           target_rank=args.target, domain=domain, visited_limit=args.visited,
                           workers=args.workers, verify_each=not args.no_verify and args.verify_each)
    except ValueError as e:
        raise UsageError(str(e)) from None
    start = load_scheme(args.start) if args.start else None
    if start is not None and (start.n, start.m) != (args.n, args.m):
        raise UsageError(f"--start holds a ({start.n},{start.m}) scheme, expected ({args.n},{args.m})")
    if start is not None and start.domain != domain:
        start = start.to_domain(domain)
    console.info("search", f"({args.n},{args.m}) over {domain}: {cfg.walks} walks, "
                           f"{cfg.max_steps} steps each")
    result = search_campaign(args.n, args.m, cfg, start=start)
    out = save_scheme(result.best, output_path(args, f"search_{args.n}_{args.m}"))
    console.ok("search", f"rank {result.rank} found by walk {result.walk_id} -> {out}")
    report = {"best_rank": result.rank, "best_walk": result.walk_id, "steps": result.steps_taken,
              "transcript": result.rng_transcript_hash, "seed_derivation": "splitmix64",
              "walks": result.walks}
    save_metadata(out, args, "verified", seed=seed, stats=report)
    return 0, dict(scheme_summary(result.best), seed=seed, output=str(out), **report)


def cmd_lift(args, console):
    s = load_scheme(args.file)
    rules = PIVOT_RULES if args.pivot == "both" else (args.pivot,)
    report = lift_and_classify(s, k=args.bits, pivot_rules=rules)
    summary = dict(scheme_summary(s), **report.to_dict())
    if report.outcome == FAILED:
        console.fail("lift", f"{args.file}: no lift to Z/2^{args.bits} ({report.reason})")
        return 1, summary
    if report.outcome == MOD_2K_ONLY:
        console.warn("lift", f"lifted to Z/2^{args.bits} but no small rational preimage ({report.reason})")
    else:
        console.ok("lift", f"{args.file}: {report.outcome} (class {report.table_class}, "
                           f"pivot rule {report.pivot_rule})")
    out = save_scheme(report.scheme, output_path(args, f"lift_{s.n}_{s.m}"))
    save_metadata(out, args, report.outcome, report=report.to_dict())
    console.ok("lift", f"Lifted scheme saved to {out}")
    summary["output"] = str(out)
    return 0, summary


def cmd_ratrecon(args, console):
    s = load_scheme(args.file)
    rational = rational_reconstruct_scheme(s, bound=args.bound)
    cls = classify_coefficients(rational)
    out = save_scheme(rational, output_path(args, f"ratrecon_{s.n}_{s.m}"))
    coefficients = {"class": cls.kind, "denominator": cls.denominator, "primes": list(cls.primes)}
    console.ok("ratrecon", f"{args.file}: coefficients {cls.kind}"
                           + (f" (denominator {cls.denominator})" if cls.denominator > 1 else "")
                           + f" -> {out}")
    save_metadata(out, args, "verified", coefficients=coefficients)
    return 0, dict(scheme_summary(rational), coefficients=coefficients, output=str(out))


def cmd_brent_cnf(args, console):
    system = build_brent(args.n, args.m, args.r)
    cnf = encode_cnf(system, symmetry_breaking=args.symmetry)
    out = write_dimacs(cnf, output_path(args, f"brent_{args.n}_{args.m}_{args.r}", ".cnf"))
    console.ok("brent", f"({args.n},{args.m}) rank {args.r}: {cnf.num_vars} variables, "
                        f"{len(cnf.clauses)} clauses -> {out}")
    sizes = {"variables": cnf.num_vars, "clauses": len(cnf.clauses)}
    save_metadata(out, args, "written", **sizes)
    return 0, dict(n=args.n, m=args.m, r=args.r, output=str(out), **sizes)


def cmd_brent_solve(args, console):
    system = build_brent(args.n, args.m, args.r)
    cnf = encode_cnf(system, symmetry_breaking=args.symmetry)
    command = args.solver_cmd or os.getenv("POLYFLIP_SOLVER_CMD")
    mode = args.solver or ("external" if command else "internal")
    console.info("brent", f"({args.n},{args.m}) rank {args.r}: {len(cnf.clauses)} clauses, solver {mode}")
    verdict = solve(cnf, mode=mode, command=command, timeout=args.timeout,
                    max_decisions=args.max_decisions)
    out = save_certificate(verdict, system, output_path(args, f"brent_{args.n}_{args.m}_{args.r}",
                                                        ".cert.json"))
    summary = dict(verdict.certificate(system), output=str(out))
    if verdict.status == SAT:
        witness = save_scheme(verdict.scheme, out.with_suffix(".witness.json"))
        summary["witness"] = str(witness)
        console.ok("brent", f"SAT: rank-{args.r} scheme for ({args.n},{args.m}) saved to {witness}")
    elif verdict.status == UNKNOWN:
        console.warn("brent", f"no verdict within the limits ({verdict.seconds:.1f}s)")
    elif verdict.status == CLAIMED_UNSAT:
        console.ok("brent", f"UNSAT claimed by {verdict.solver}: no rank-{args.r} scheme for "
                            f"({args.n},{args.m}) over Z2")
    else:
        console.ok("brent", f"UNSAT: no rank-{args.r} scheme for ({args.n},{args.m}) over Z2")
    save_metadata(out, args, verdict.status)
    return 0, summary


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="Print a JSON summary on stdout; status lines go to stderr")
    common.add_argument("--no-verify", action="store_true", help="Skip intermediate verification (speed experiments)")
    common.add_argument("-o", "--output", type=str, default=None,
                        help="Output file (default: timestamped file in $POLYFLIP_OUTPUT_DIR or output/)")

    parser = argparse.ArgumentParser(description="Construct, transform, search, lift and certify "
                                                 "schemes for polynomial multiplication.")
    sub = parser.add_subparsers(dest="command", required=True)

    def degrees(p, required=True):
        p.add_argument("--n", type=int, required=required, default=None, help="Degree of the first factor")
        p.add_argument("--m", type=int, required=required, default=None, help="Degree of the second factor")

    p = sub.add_parser("gen", parents=[common], help="Write a named scheme")
    degrees(p)
    p.add_argument("--kind", choices=KINDS, default="standard", help="Scheme family (default: standard)")
    p.add_argument("--domain", default="Q", help="Coefficient domain: Z2, Zp:5, Z2^20, Q or Z (default: Q)")
    p.add_argument("--points", default=None, help="Comma-separated Toom-Cook points (default: 0,1,-1,2,...)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("verify", parents=[common], help="Check scheme files against T_{n,m}")
    p.add_argument("files", nargs="+", help="bilin-scheme/1 files")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("path", parents=[common], help="Emit or replay a standard-to-Toom-Cook flip path")
    degrees(p, required=False)
    p.add_argument("--domain", default="Q", help="Coefficient field (default: Q)")
    p.add_argument("--points", default=None, help="Comma-separated evaluation points (default: 0,1,-1,2,...)")
    p.add_argument("--stats", action="store_true", help="Also print recurrence and closed-form counts")
    p.add_argument("--replay", default=None, help="Replay a flip-trace/1 file instead of building one")
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("search", parents=[common], help="Random flip-graph walks for low-rank schemes")
    degrees(p)
    p.add_argument("--domain", default="Z2", help="Coefficient field (default: Z2)")
    p.add_argument("--seed", type=int, default=None, help="Campaign seed (default: random, recorded in metadata)")
    p.add_argument("--max-steps", type=int, default=100_000, help="Flip budget per walk segment (default: 100000)")
    p.add_argument("--plateau", type=int, default=20_000, help="Steps without improvement before a split (default: 20000)")
    p.add_argument("--walks", type=int, default=None,
                   help="Independent walks (default: $POLYFLIP_WALKS or 8)")
    p.add_argument("--workers", type=int, default=0, help="Worker processes (default: one per walk, up to CPU count)")
    p.add_argument("--restarts", type=int, default=0, help="Restarts per walk from the start scheme (default: 0)")
    p.add_argument("--target", type=int, default=None, help="Stop at this rank (default: n+m+1)")
    p.add_argument("--split", action="store_true", help="Escape plateaus with split moves")
    p.add_argument("--excursion", type=int, default=1, help="Ranks a split may climb above the best (default: 1)")
    p.add_argument("--split-prob", type=float, default=1.0, help="Probability of splitting on a plateau (default: 1.0)")
    p.add_argument("--visited", type=int, default=0, help="Size of the visited-state cache, 0 disables (default: 0)")
    p.add_argument("--verify-each", action="store_true", help="Verify after every move (debugging)")
    p.add_argument("--start", default=None, help="Start scheme file (default: standard scheme)")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("lift", parents=[common], help="Hensel-lift a Z2 scheme and classify its coefficients")
    p.add_argument("file", help="Z2 scheme file")
    p.add_argument("--bits", type=int, default=DEFAULT_BITS, help=f"Lift to Z/2^k (default: {DEFAULT_BITS})")
    p.add_argument("--pivot", choices=["natural", "reversed", "both"], default="both",
                   help="Pivot rule for the mod-2 Jacobian (default: both, natural first)")
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("ratrecon", parents=[common], help="Rational reconstruction of a Z2^k scheme")
    p.add_argument("file", help="Z2^k scheme file")
    p.add_argument("--bound", type=int, default=None, help="Numerator/denominator bound (default: sqrt((M-1)/2))")
    p.set_defaults(func=cmd_ratrecon)

    for name, func, text in (("brent-cnf", cmd_brent_cnf, "Write the Brent equations as DIMACS CNF"),
                             ("brent-solve", cmd_brent_solve, "Decide whether a rank-r Z2 scheme exists")):
        p = sub.add_parser(name, parents=[common], help=text)
        degrees(p)
        p.add_argument("--r", type=int, required=True, help="Target rank")
        p.add_argument("--symmetry", action="store_true", help="Add lexicographic symmetry breaking")
        if name == "brent-solve":
            p.add_argument("--solver", default=None,
                           help="internal, external or pysat:<name> (default: external if a command is set)")
            p.add_argument("--solver-cmd", default=None,
                           help="External solver template with {cnf} (default: $POLYFLIP_SOLVER_CMD)")
            p.add_argument("--timeout", type=float, default=None, help="External solver timeout in seconds")
            p.add_argument("--max-decisions", type=int, default=None, help="Decision/conflict budget")
        p.set_defaults(func=func)

    p = sub.add_parser("stats", parents=[common], help="Summarize scheme or trace files")
    p.add_argument("files", nargs="+", help="bilin-scheme/1 or flip-trace/1 files")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    console = Console(args.json)
    tag = args.command
    try:
        code, summary = args.func(args, console)
    except (UsageError, FormatError, DomainError) as e:
        console.fail(tag, str(e))
        return 2
    except OSError as e:
        console.fail(tag, f"{e.strerror}: {e.filename}")
        return 2
    except SolverError as e:
        console.fail(tag, str(e))
        return 3
    except PolyflipError as e:
        console.fail(tag, str(e))
        return 1
    if args.json:
        print(json.dumps(summary, indent=2, default=str))
    return code


if __name__ == "__main__":
    sys.exit(main())
