"""Abstract syntax of probabilistic asynchronous pi-calculus terms.

Names are plain strings.  The reserved tokens ``true``, ``false``, ``0`` and
``1`` are *literals*: they can be transmitted but never bound and never used
as a channel.  Process identifiers (recursion variables) live in their own
token space and start with an uppercase letter.

Everything here is immutable; all operations are pure functions.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Union

LITERALS = frozenset({"true", "false", "0", "1"})
TRUE = "true"
FALSE = "false"


def is_literal(name: str) -> bool:
    return name in LITERALS


# -- prefixes and actions ---------------------------------------------------

@dataclass(frozen=True)
class Input:
    """``chan(formal)``: used both as a prefix and as a late input action."""
    chan: str
    formal: str


@dataclass(frozen=True)
class Tau:
    label: str | None = None


@dataclass(frozen=True)
class FreeOutput:
    chan: str
    payload: str


@dataclass(frozen=True)
class BoundOutput:
    chan: str
    payload: str


Prefix = Union[Input, Tau]
Action = Union[Input, Tau, FreeOutput, BoundOutput]


def action_free_names(a: Action) -> frozenset[str]:
    match a:
        case Input(c, _) | BoundOutput(c, _):
            return frozenset({c})
        case FreeOutput(c, v):
            return frozenset(n for n in (c, v) if not is_literal(n))
    return frozenset()


def action_bound_names(a: Action) -> frozenset[str]:
    match a:
        case Input(_, z) | BoundOutput(_, z):
            return frozenset({z})
    return frozenset()


def show_action(a: Action) -> str:
    match a:
        case Input(c, z):
            return f"{c}?({z})"
        case FreeOutput(c, v):
            return f"{c}!{v}"
        case BoundOutput(c, v):
            return f"{c}!({v})"
        case Tau(None):
            return "tau"
        case Tau(label):
            return f"tau[{label}]"
    raise TypeError(a)


# -- processes ----------------------------------------------------------------

class Process:
    """Base class of all process terms."""

    __slots__ = ()

    def __str__(self) -> str:
        return show(self)


@dataclass(frozen=True)
class Output(Process):
    chan: str
    payload: str


@dataclass(frozen=True)
class Branch:
    prob: Fraction
    prefix: Prefix
    cont: Process


@dataclass(frozen=True)
class Sum(Process):
    branches: tuple[Branch, ...] = ()


@dataclass(frozen=True)
class Par(Process):
    left: Process
    right: Process


@dataclass(frozen=True)
class Res(Process):
    binder: str
    body: Process


@dataclass(frozen=True)
class Var(Process):
    id: str


@dataclass(frozen=True)
class Rec(Process):
    id: str
    body: Process


@dataclass(frozen=True)
class If(Process):
    cond: str
    then: Process
    orelse: Process


NIL = Sum(())


def is_nil(p: Process) -> bool:
    return isinstance(p, Sum) and not p.branches


def par(*ps: Process) -> Process:
    """Right-nested parallel composition; ``par()`` is ``0``."""
    if not ps:
        return NIL
    out = ps[-1]
    for p in reversed(ps[:-1]):
        out = Par(p, out)
    return out


def res(binders: Iterable[str], body: Process) -> Process:
    for b in reversed(list(binders)):
        body = Res(b, body)
    return body


def prefix_sum(*branches: tuple[Fraction | int | str, Prefix, Process]) -> Sum:
    return Sum(tuple(Branch(Fraction(p), a, c) for p, a, c in branches))


# -- free names ---------------------------------------------------------------

def free_names(p: Process) -> frozenset[str]:
    """Free (non-literal) names of ``p``."""
    cached = getattr(p, "__dict__", {}).get("_fn")
    if cached is not None:
        return cached
    match p:
        case Output(c, v):
            out = frozenset(n for n in (c, v) if not is_literal(n))
        case Sum(branches):
            acc: set[str] = set()
            for b in branches:
                match b.prefix:
                    case Input(c, z):
                        acc.add(c)
                        acc |= free_names(b.cont) - {z}
                    case _:
                        acc |= free_names(b.cont)
            out = frozenset(acc)
        case Par(l, r):
            out = free_names(l) | free_names(r)
        case Res(b, body):
            out = free_names(body) - {b}
        case Var(_):
            out = frozenset()
        case Rec(_, body):
            out = free_names(body)
        case If(c, t, e):
            out = free_names(t) | free_names(e)
            if not is_literal(c):
                out |= {c}
        case _:
            raise TypeError(p)
    p.__dict__["_fn"] = out
    return out


def all_names(p: Process) -> frozenset[str]:
    """Every name occurring in ``p``, free or bound."""
    match p:
        case Output(c, v):
            return frozenset(n for n in (c, v) if not is_literal(n))
        case Sum(branches):
            acc: set[str] = set()
            for b in branches:
                if isinstance(b.prefix, Input):
                    acc |= {b.prefix.chan, b.prefix.formal}
                acc |= all_names(b.cont)
            return frozenset(acc)
        case Par(l, r):
            return all_names(l) | all_names(r)
        case Res(b, body):
            return all_names(body) | {b}
        case Var(_):
            return frozenset()
        case Rec(_, body):
            return all_names(body)
        case If(c, t, e):
            out = all_names(t) | all_names(e)
            return out if is_literal(c) else out | {c}
    raise TypeError(p)


def free_pvars(p: Process) -> frozenset[str]:
    match p:
        case Var(x):
            return frozenset({x})
        case Rec(x, body):
            return free_pvars(body) - {x}
        case Output():
            return frozenset()
        case Sum(branches):
            return frozenset().union(*(free_pvars(b.cont) for b in branches))
        case Par(l, r):
            return free_pvars(l) | free_pvars(r)
        case Res(_, body):
            return free_pvars(body)
        case If(_, t, e):
            return free_pvars(t) | free_pvars(e)
    raise TypeError(p)


_SUFFIX = re.compile(r"_\d+$")


def fresh(base: str, avoid: Iterable[str]) -> str:
    """First name ``root_k`` (k = 1, 2, ...) not in ``avoid``."""
    avoid = set(avoid)
    root = _SUFFIX.sub("", base) or "n"
    k = 1
    while f"{root}_{k}" in avoid:
        k += 1
    return f"{root}_{k}"


# -- substitution -------------------------------------------------------------

def substitute(p: Process, replacement: str, target: str) -> Process:
    """``p[replacement/target]``, renaming binders to avoid capture."""
    if is_literal(target):
        raise ValueError(f"cannot substitute for literal {target!r}")
    if replacement == target or target not in free_names(p):
        return p
    new, old = replacement, target

    def sw(n: str) -> str:
        return new if n == old else n

    match p:
        case Output(c, v):
            return Output(sw(c), sw(v))
        case Sum(branches):
            return Sum(tuple(_subst_branch(b, new, old) for b in branches))
        case Par(l, r):
            return Par(substitute(l, new, old), substitute(r, new, old))
        case Res(b, body):
            if b == new:
                b2 = fresh(b, free_names(body) | {new, old})
                body = substitute(body, b2, b)
                b = b2
            return Res(b, substitute(body, new, old))
        case Rec(x, body):
            return Rec(x, substitute(body, new, old))
        case If(c, t, e):
            return If(sw(c), substitute(t, new, old), substitute(e, new, old))
    raise TypeError(p)


def _subst_branch(b: Branch, new: str, old: str) -> Branch:
    match b.prefix:
        case Input(c, z):
            c = new if c == old else c
            cont = b.cont
            if z != old and old in free_names(cont):
                if z == new:
                    z2 = fresh(z, free_names(cont) | {new, old})
                    cont = substitute(cont, z2, z)
                    z = z2
                cont = substitute(cont, new, old)
            return Branch(b.prob, Input(c, z), cont)
    return Branch(b.prob, b.prefix, substitute(b.cont, new, old))


def rename_binder_safe(avoid: Iterable[str], name: str, body: Process) -> tuple[str, Process]:
    """Rename binder ``name`` of ``body`` to a fresh name outside ``avoid``."""
    avoid = set(avoid) | free_names(body) | {name}
    n2 = fresh(name, avoid)
    return n2, substitute(body, n2, name)


def substitute_pvar(p: Process, x: str, q: Process) -> Process:
    """``p[q/X]``: replace free occurrences of process variable ``x``."""
    if x not in free_pvars(p):
        return p
    match p:
        case Var(y):
            return q if y == x else p
        case Sum(branches):
            out = []
            for b in branches:
                prefix, cont = b.prefix, b.cont
                if isinstance(prefix, Input) and prefix.formal in free_names(q) \
                        and x in free_pvars(cont):
                    z2 = fresh(prefix.formal, free_names(cont) | free_names(q) | {prefix.chan})
                    cont = substitute(cont, z2, prefix.formal)
                    prefix = Input(prefix.chan, z2)
                out.append(Branch(b.prob, prefix, substitute_pvar(cont, x, q)))
            return Sum(tuple(out))
        case Par(l, r):
            return Par(substitute_pvar(l, x, q), substitute_pvar(r, x, q))
        case Res(b, body):
            if b in free_names(q):
                b, body = rename_binder_safe(free_names(q), b, body)
            return Res(b, substitute_pvar(body, x, q))
        case Rec(y, body):
            if y in free_pvars(q):
                y2 = _fresh_pid(y, free_pvars(body) | free_pvars(q))
                body = substitute_pvar(body, y, Var(y2))
                y = y2
            return Rec(y, substitute_pvar(body, x, q))
        case If(c, t, e):
            return If(c, substitute_pvar(t, x, q), substitute_pvar(e, x, q))
    raise TypeError(p)


def _fresh_pid(base: str, avoid: Iterable[str]) -> str:
    avoid = set(avoid)
    k = 1
    while f"{base}{k}" in avoid:
        k += 1
    return f"{base}{k}"


def unfold(p: Rec) -> Process:
    """One unfolding step ``rec_X P -> P[rec_X P / X]``."""
    return substitute_pvar(p.body, p.id, p)


# -- alpha normal form and congruence ----------------------------------------

def _prefix_avoiding(base: str, used: Iterable[str]) -> str:
    prefix = base
    while any(re.fullmatch(re.escape(prefix) + r"\d+", u) for u in used):
        prefix = prefix + "_" if base.startswith("_") else prefix + "x"
    return prefix


def alpha_normalize(p: Process) -> Process:
    """Canonical alpha-representative.

    Every name binder is renamed after its nesting level (number of enclosing
    name binders), and every ``rec`` after its rec nesting level.  Sibling
    scopes never overlap, so equal levels cannot clash, and the result does
    not depend on the order of parallel components.
    """
    nprefix = _prefix_avoiding("_", free_names(p))
    pprefix = _prefix_avoiding("R", free_pvars(p))
    return _anorm(p, {}, {}, 0, 0, nprefix, pprefix)


def _anorm(p, env, penv, lvl, plvl, npx, ppx):
    def nm(n):
        return env.get(n, n)

    match p:
        case Output(c, v):
            return Output(nm(c), nm(v))
        case Sum(branches):
            out = []
            for b in branches:
                match b.prefix:
                    case Input(c, z):
                        z2 = f"{npx}{lvl}"
                        cont = _anorm(b.cont, {**env, z: z2}, penv, lvl + 1, plvl, npx, ppx)
                        out.append(Branch(b.prob, Input(nm(c), z2), cont))
                    case prefix:
                        cont = _anorm(b.cont, env, penv, lvl, plvl, npx, ppx)
                        out.append(Branch(b.prob, prefix, cont))
            return Sum(tuple(out))
        case Par(l, r):
            return Par(_anorm(l, env, penv, lvl, plvl, npx, ppx),
                       _anorm(r, env, penv, lvl, plvl, npx, ppx))
        case Res(b, body):
            b2 = f"{npx}{lvl}"
            return Res(b2, _anorm(body, {**env, b: b2}, penv, lvl + 1, plvl, npx, ppx))
        case Var(x):
            return Var(penv.get(x, x))
        case Rec(x, body):
            x2 = f"{ppx}{plvl}"
            return Rec(x2, _anorm(body, env, {**penv, x: x2}, lvl, plvl + 1, npx, ppx))
        case If(c, t, e):
            return If(nm(c), _anorm(t, env, penv, lvl, plvl, npx, ppx),
                      _anorm(e, env, penv, lvl, plvl, npx, ppx))
    raise TypeError(p)


def par_components(p: Process) -> list[Process]:
    if isinstance(p, Par):
        return par_components(p.left) + par_components(p.right)
    return [p]


def _ac_sort(p: Process) -> Process:
    match p:
        case Par():
            comps = sorted((_ac_sort(c) for c in par_components(p)), key=show)
            return par(*comps)
        case Sum(branches):
            return Sum(tuple(Branch(b.prob, b.prefix, _ac_sort(b.cont)) for b in branches))
        case Res(b, body):
            return Res(b, _ac_sort(body))
        case Rec(x, body):
            return Rec(x, _ac_sort(body))
        case If(c, t, e):
            return If(c, _ac_sort(t), _ac_sort(e))
    return p


def canonical(p: Process) -> Process:
    """Normal form modulo alpha-conversion and associativity/commutativity of ``|``."""
    return _ac_sort(alpha_normalize(p))


def canonical_key(p: Process) -> str:
    key = p.__dict__.get("_key")
    if key is None:
        key = show(canonical(p))
        p.__dict__["_key"] = key
    return key


def congruent(p: Process, q: Process) -> bool:
    """Equality modulo alpha-conversion and AC of parallel composition.

    Recursion unfolding is deliberately *not* part of this relation.
    """
    return p is q or canonical_key(p) == canonical_key(q)


# -- printing -----------------------------------------------------------------

def show_prob(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def show_prefix(a: Prefix) -> str:
    return show_action(a)


def _atomic(p: Process) -> bool:
    return isinstance(p, (Output, Var)) or is_nil(p)


def _wrap(p: Process) -> str:
    return show(p) if _atomic(p) else f"({show(p)})"


def show(p: Process) -> str:
    """Concrete syntax accepted by :func:`pipa.syntax.parse`."""
    match p:
        case Output(c, v):
            return f"{c}!{v}"
        case Sum(()):
            return "0"
        case Sum(branches):
            return " + ".join(
                f"{show_prob(b.prob)}: {show_prefix(b.prefix)}. {_wrap(b.cont)}"
                for b in branches)
        case Par(l, r):
            right = f"({show(r)})" if isinstance(r, Par) else show(r)
            return f"{show(l)} | {right}"
        case Res():
            names = []
            body = p
            while isinstance(body, Res):
                names.append(body.binder)
                body = body.body
            return f"new {' '.join(names)} in {_wrap_body(body)}"
        case Var(x):
            return x
        case Rec(x, body):
            return f"rec {x}. {_wrap_body(body)}"
        case If(c, t, e):
            return f"if {c} then {_wrap_body(t)} else {_wrap_body(e)}"
    raise TypeError(p)


def _wrap_body(p: Process) -> str:
    return f"({show(p)})" if isinstance(p, Par) else show(p)
