"""``pipa`` command line: parse, groups, run, analyze, election."""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from fractions import Fraction
from typing import Sequence

from .automaton import ProbAutomaton, etree, no_withholding
from .errors import (AdversaryRangeError, BudgetExceeded, ParseError, PipaError,
                     StuckConditional, UnknownAdversary)
from .measure import event_report, parse_event
from .pts import RuleMode, transition_groups
from .scheduler import builtin, run, search
from .syntax import parse
from .terms import (If, Input, Output, Par, Process, Rec, Res, Sum, Var, show, show_action,
                    show_prob)

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_SEMANTICS, EXIT_RUNTIME, EXIT_BUDGET = 0, 1, 2, 3, 4, 5


def schema(name: str) -> dict:
    """Shipped JSON schema: ast, groups, run, analyze or election."""
    text = resources.files(__package__).joinpath("schemas").joinpath(f"{name}.schema.json").read_text("utf-8")
    return json.loads(text)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def ast_json(p: Process) -> dict:
    match p:
        case Output(c, y):
            return {"kind": "output", "chan": c, "payload": y}
        case Sum(branches):
            return {"kind": "sum", "branches": [
                {"prob": show_prob(b.prob), "prefix": _prefix_json(b.prefix), "cont": ast_json(b.cont)}
                for b in branches]}
        case Par(l, r):
            return {"kind": "par", "left": ast_json(l), "right": ast_json(r)}
        case Res(b, body):
            return {"kind": "new", "binder": b, "body": ast_json(body)}
        case Var(x):
            return {"kind": "var", "id": x}
        case Rec(x, body):
            return {"kind": "rec", "id": x, "body": ast_json(body)}
        case If(c, t, e):
            return {"kind": "if", "cond": c, "then": ast_json(t), "else": ast_json(e)}
    raise TypeError(p)


def _prefix_json(a) -> dict:
    if isinstance(a, Input):
        return {"kind": "input", "chan": a.chan, "formal": a.formal}
    return {"kind": "tau", "label": a.label}


def _frac(q: Fraction) -> dict:
    return {"exact": str(q), "approx": float(q)}


def _read(path: str) -> Process:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def _mode(args) -> RuleMode:
    return RuleMode(args.mode)


def _automaton(args) -> ProbAutomaton:
    view = no_withholding if getattr(args, "no_withholding", False) else None
    return ProbAutomaton(_read(args.file), _mode(args), view)


def _adversary(args, owner=None):
    name = args.adversary
    if name == "uniform-random" and args.seed is None:
        raise UsageError("uniform-random needs --seed")
    return builtin(name, seed=args.seed, owner=owner)


def _emit(out, args, payload: dict, text: str) -> None:
    if args.format == "json":
        out.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        out.write(text if text.endswith("\n") else text + "\n")


# -- commands -------------------------------------------------------------------

def cmd_parse(args, out) -> int:
    p = _read(args.file)
    _emit(out, args, ast_json(p), show(p))
    return EXIT_OK


def cmd_groups(args, out) -> int:
    p = _read(args.file)
    groups = transition_groups(p, _mode(args))
    if getattr(args, "no_withholding", False):
        groups = no_withholding(groups)
    payload = {"mode": args.mode, "groups": [g.to_json() for g in groups]}
    lines = [f"{len(groups)} group(s)"]
    for k, g in enumerate(groups):
        lines.append(f"[{k}]")
        for e in g.entries:
            lines.append(f"  {show_prob(e.prob)}  {show_action(e.action)}  ->  {show(e.target)}")
    _emit(out, args, payload, "\n".join(lines))
    return EXIT_OK


def cmd_run(args, out) -> int:
    m = _automaton(args)
    adv = _adversary(args)
    seed = 0 if args.seed is None else args.seed
    res = run(m, adv, seed=seed, max_steps=args.max_steps)
    h = res.fragment
    records = [{"step": 0, "state": show(m.states[m.initial])}]
    for n, s in enumerate(h.steps, 1):
        target = h.steps[n].state if n < len(h.steps) else h.terminal
        records.append({"step": n, "group": s.group, "action": show_action(s.action),
                        "prob": show_prob(s.prob), "state": show(m.states[target])})
    records.append({"final": True, "steps": len(h.steps), "deadlocked": res.deadlocked,
                    "budgetExhausted": res.exhausted, "flags": res.flags,
                    "pb": show_prob(h.pb)})
    for r in records:
        out.write(json.dumps(r, sort_keys=True) + "\n")
    return EXIT_OK


def _policy_paths(m, event, depth, policy) -> int:
    memo: dict = {}

    def count(s, prog, left):
        if event.satisfied(prog) or not m.groups(s) or left == 0:
            return 1
        key = (s, prog, left)
        if key not in memo:
            k = policy.get(key, 0)
            memo[key] = sum(count(a.target, event.advance(prog, a.action, m, a.target), left - 1)
                            for a in m.arcs(s)[k])
        return memo[key]

    return count(m.initial, event.start(m, m.initial), depth)


def cmd_analyze(args, out) -> int:
    m = _automaton(args)
    try:
        event = parse_event(args.event)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    payload: dict = {"event": event.name, "depth": args.depth}
    try:
        if args.adversary:
            t = etree(m, _adversary(args), args.depth)
            rep = event_report(t, event)
            payload.update(adversary=args.adversary, lower=_frac(rep.lower), upper=_frac(rep.upper),
                           open=_frac(rep.open), falsified=_frac(rep.falsified), nodes=len(t.nodes))
        else:
            r = search(m, event, args.depth, args.objective, max_states=args.max_states)
            payload.update(objective=args.objective, lower=_frac(r.lower), upper=_frac(r.upper),
                           policyPaths=_policy_paths(m, event, args.depth, r.policy_lower),
                           states=len(m))
    except BudgetExceeded as exc:
        payload.update(partial=True, error=str(exc), states=len(m))
        _emit(out, args, payload, f"budget exceeded: {exc} (partial: {len(m)} states explored)")
        return EXIT_BUDGET
    lo, hi = payload["lower"], payload["upper"]
    text = [f"event    {event.name}", f"depth    {args.depth}",
            f"lower    {lo['exact']}  (~{lo['approx']:.6f})",
            f"upper    {hi['exact']}  (~{hi['approx']:.6f})"]
    if "policyPaths" in payload:
        text.insert(2, f"objective {args.objective}")
        text.append(f"policy paths {payload['policyPaths']}")
    _emit(out, args, payload, "\n".join(text))
    return EXIT_OK


def cmd_election(args, out) -> int:
    from . import election as el
    if args.runs <= 0:
        raise UsageError("--runs must be positive")
    try:
        cfg = el.ElectionConfig(Fraction(args.epsilon))
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"--epsilon: {exc}") from exc
    if args.adversary.startswith("scripted"):
        adv = _adversary(args, owner=el.owner)
    else:
        if args.adversary == "uniform-random" and args.seed is None:
            raise UsageError("uniform-random needs --seed")
        adv = el.election_adversary(args.adversary, args.seed)
    seed = 0 if args.seed is None else args.seed
    stats = el.monte_carlo(cfg, adv, args.runs, seed, args.max_steps, guarded=args.guarded,
                           withhold=not args.no_withholding, workers=args.workers)
    rows = stats.rows(cfg)
    summary = stats.summary()
    alt = [{"n": n, "fraction": stats.alternated[n] / stats.runs,
            "expected": 1 / 2 ** (n - 1)} for n in range(2, el.ALT_MAX + 1)]
    payload = {"epsilon": str(cfg.epsilon), "adversary": args.adversary, "seed": seed,
               "rows": rows, "summary": summary, "alternation": alt}
    lines = [f"epsilon={cfg.epsilon} adversary={args.adversary} runs={stats.runs} seed={seed}",
             f"{'n':>3} {'count':>7} {'fraction':>9} {'bound':>9} {'sigma':>8}"]
    for r in rows:
        lines.append(f"{r['n']:>3} {r['count']:>7} {r['fraction']:>9.4f} {r['bound']:>9.4f} "
                     f"{r['sigma']:>8.4f}")
    lines.append(" ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}"
                          for k, v in summary.items()))
    lines.append("alternated: " + " ".join(f"n={a['n']}:{a['fraction']:.4f}" for a in alt))
    _emit(out, args, payload, "\n".join(lines))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="pipa", description="probabilistic asynchronous pi-calculus workbench")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, file=True):
        if file:
            p.add_argument("file")
        p.add_argument("--mode", choices=[m.value for m in RuleMode], default="standard")
        p.add_argument("--format", choices=["text", "json"], default="text")
        p.add_argument("--no-withholding", action="store_true",
                       help="hide groups that keep a pending output from a ready receiver")

    p = sub.add_parser("parse")
    common(p)
    p = sub.add_parser("groups")
    common(p)
    for name in ("run", "analyze"):
        p = sub.add_parser(name)
        common(p)
        p.add_argument("--adversary", default="round-robin" if name == "run" else None)
        p.add_argument("--seed", type=int)
        p.add_argument("--max-steps", type=_positive, default=1000)
        p.add_argument("--max-states", type=_positive, default=100_000)
        p.add_argument("--depth", type=_nonneg, default=10)
        p.add_argument("--event", default="deadlock")
        p.add_argument("--objective", choices=["max", "min"], default="max")
    p = sub.add_parser("election")
    common(p, file=False)
    p.add_argument("--epsilon", default="1/10")
    p.add_argument("--adversary", default="round-robin")
    p.add_argument("--runs", type=int, default=10_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-steps", type=_positive, default=10_000)
    p.add_argument("--guarded", action="store_true", help="input-guarded outer choice variant")
    p.add_argument("--workers", type=_positive, default=1)
    return ap


def _positive(s: str) -> int:
    v = int(s)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _nonneg(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


COMMANDS = {"parse": cmd_parse, "groups": cmd_groups, "run": cmd_run,
            "analyze": cmd_analyze, "election": cmd_election}


def main(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        err.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except ParseError as exc:
        err.write(f"parse error: {exc}\n")
        return EXIT_PARSE
    except StuckConditional as exc:
        err.write(f"semantic error: {exc}\n")
        return EXIT_SEMANTICS
    except (AdversaryRangeError, UnknownAdversary) as exc:
        err.write(f"runtime error: {exc}\n")
        return EXIT_RUNTIME
    except BudgetExceeded as exc:
        err.write(f"budget exceeded: {exc}\n")
        return EXIT_BUDGET
    except OSError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_USAGE
    except PipaError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
