"""Reference transition groups computed from the binary rules, one rule at a time.

Independent of the engine's flat component representation.  Parallel
composition is handled rule by rule on two operands; with ``assoc=True`` the
result is closed under re-bracketing of the parallel components (union over
every binary split), otherwise only the written bracketing and its mirror
image (commutativity) are used.

Groups are compared by key: a sorted tuple of (prob, action text, state key).
"""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

from pipa.pts import entry_key, normalize_state
from pipa.terms import (NIL, BoundOutput, FreeOutput, If, Input, Output, Par, Rec, Res, Sum,
                        Tau, action_free_names, fresh, free_names, par, substitute, unfold)

# a group is a tuple of (prob, action, target)


def group_key(g) -> tuple:
    acc: dict = {}
    for p, a, t in g:
        k = entry_key(a, normalize_state(t))
        acc[k] = acc.get(k, Fraction(0)) + p
    return tuple(sorted((k, p) for k, p in acc.items()))


def _bound(a):
    if isinstance(a, Input):
        return a.formal
    if isinstance(a, BoundOutput):
        return a.payload
    return None


def _rebind(a, t, avoid):
    """Rename the name bound by ``a`` (in ``t``) away from ``avoid``."""
    z = _bound(a)
    if z is None or z not in avoid:
        return a, t
    z2 = fresh(z, set(avoid) | free_names(t) | action_free_names(a))
    return type(a)(a.chan, z2), substitute(t, z2, z)


def groups(p, assoc=True) -> list:
    match p:
        case Output(x, y):
            return [((Fraction(1), FreeOutput(x, y), NIL),)]
        case Sum(()):
            return []
        case Sum(branches):
            return [tuple((b.prob, b.prefix, b.cont) for b in branches)]
        case Rec():
            return groups(unfold(p), assoc)
        case If(c, t, e):
            if c not in ("true", "false"):
                raise ValueError("stuck")
            return groups(t if c == "true" else e, assoc)
        case Res(y, body):
            return [g2 for g in groups(body, assoc) if (g2 := _res(g, y))]
        case Par():
            if assoc:
                comps = _flatten(p)
                return list(_closure(tuple(comps)))
            return _binpar(p.left, groups(p.left, False), p.right, groups(p.right, False))
    raise TypeError(p)


def _flatten(p):
    if isinstance(p, Par):
        return _flatten(p.left) + _flatten(p.right)
    return [p]


def _res(g, y):
    if len(g) == 1 and isinstance(g[0][1], FreeOutput):
        prob, a, t = g[0]
        if a.payload == y and a.chan != y:
            return ((prob, BoundOutput(a.chan, y), t),)          # OPEN
    kept = []
    for prob, a, t in g:
        if y in action_free_names(a):
            continue
        a, t = _rebind(a, t, {y})
        kept.append((prob, a, Res(y, t)))
    mass = sum((k[0] for k in kept), Fraction(0))
    return tuple((prob / mass, a, t) for prob, a, t in kept)


@lru_cache(maxsize=None)
def _closure(comps: tuple) -> frozenset:
    """Groups of the parallel composition of ``comps`` under every bracketing."""
    if len(comps) == 1:
        return frozenset(groups(comps[0], True))
    out = set()
    n = len(comps)
    for mask in range(1, 2 ** n - 1):
        if not mask & 1:
            continue                      # each unordered split once; _binpar is symmetric
        a = tuple(c for i, c in enumerate(comps) if mask >> i & 1)
        b = tuple(c for i, c in enumerate(comps) if not mask >> i & 1)
        out.update(_binpar(par(*a), _closure(a), par(*b), _closure(b)))
    return frozenset(out)


def _binpar(P, GP, Q, GQ) -> list:
    out = []
    fp, fq = free_names(P), free_names(Q)
    for g in GP:                                            # PAR, left
        out.append(tuple((pr, *_pair(*_rebind(a, t, fq), Q, left=True)) for pr, a, t in g))
    for g in GQ:                                            # PAR, right
        out.append(tuple((pr, *_pair(*_rebind(a, t, fp), P, left=False)) for pr, a, t in g))
    for (S, GS, fs), (R, GR, fr) in (((P, GP, fp), (Q, GQ, fq)), ((Q, GQ, fq), (P, GP, fp))):
        for g in GS:
            if len(g) != 1 or not isinstance(g[0][1], (FreeOutput, BoundOutput)):
                continue
            _, o, s2 = g[0]
            closing = isinstance(o, BoundOutput)
            y = o.payload
            if closing and y in fr:
                y2 = fresh(y, fr | fs | free_names(s2))
                s2, y = substitute(s2, y2, y), y2
            for h in GR:
                entries = []
                for pr, a, t in h:
                    if isinstance(a, Input) and a.chan == o.chan:   # COM / CLOSE
                        body = Par(s2, substitute(t, y, a.formal))
                        entries.append((pr, Tau(), Res(y, body) if closing else body))
                    else:
                        a2, t2 = _rebind(a, t, fs)
                        entries.append((pr, a2, Par(S, t2)))
                out.append(tuple(entries))
    return out


def _pair(a, t, other, left):
    return a, (Par(t, other) if left else Par(other, t))


def keys(p, assoc=True) -> set:
    return {group_key(g) for g in groups(p, assoc)}
