"""Probabilistic transition groups of a process (late semantics).

A state is first brought into *exposed form*: active ``rec`` unfolded once,
``if`` on a boolean literal resolved, restrictions pulled to the top with
their binders made distinct, inactive ``0`` components and vacuous
restrictions dropped.  What remains is ``new w1 .. wk in (C1 | ... | Cn)``
where every ``Ci`` is a non-empty sum, an output, a free process variable or
a stuck conditional.

Groups are then generated on the flat component list:

* OUT: every output component alone, probability 1.
* SUM + PAR: the branch distribution of a sum component, others unchanged.
* COM: a sum component together with a choice of pending outputs, at most
  one per input channel; a matching input ``x(z)`` becomes ``tau`` with the
  late substitution ``[y/z]`` and consumes the output, all other branches
  are kept as they were.  Because parallel composition is treated as an
  associative/commutative multiset, this covers every bracketing of COM
  chains (and CLOSE, since restricted names already scope over the whole
  component list).
* COM' (``RuleMode.COM_PRIME``): only matching inputs of a single output are
  kept, renormalised.
* RES/OPEN: applied for each top restriction; entries whose action mentions
  a restricted name are dropped and the rest renormalised, a lone output of a
  restricted name on a public channel becomes a bound output.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

from .errors import StuckConditional
from .terms import (FALSE, NIL, TRUE, Action, BoundOutput, Branch, FreeOutput, If,
                    Input, Output, Par, Process, Rec, Res, Sum, Tau,
                    action_free_names, canonical, canonical_key, free_names, fresh,
                    par, res, show, show_action, show_prob,
                    substitute, unfold)


class RuleMode(Enum):
    STANDARD = "standard"
    COM_PRIME = "com-prime"


@dataclass(frozen=True)
class Entry:
    prob: Fraction
    action: Action
    target: Process
    via_com: bool = field(default=False, compare=False)   # tau produced by COM

    @cached_property
    def key(self) -> tuple[str, str]:
        return entry_key(self.action, self.target)


@dataclass(frozen=True, eq=False)
class TransitionGroup:
    """A probability distribution over (action, target) pairs.

    Equality and hashing go through the canonical key, so alpha-variant
    groups compare equal.  ``source`` is the component that drives the group
    (the sum or output whose step it is); ``withholding`` marks groups that
    leave an input unmatched although a partner output was pending.
    """
    entries: tuple[Entry, ...]
    source: Process | None = None
    withholding: bool = False
    served: frozenset[str] = field(default_factory=frozenset)

    @cached_property
    def key(self) -> tuple:
        return tuple(sorted((e.key[0], e.key[1], e.prob) for e in self.entries))

    def __eq__(self, other):
        return isinstance(other, TransitionGroup) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __len__(self):
        return len(self.entries)

    @property
    def total(self) -> Fraction:
        return sum((e.prob for e in self.entries), Fraction(0))

    def to_json(self) -> dict:
        return {"entries": [
            {"prob": show_prob(e.prob), "action": show_action(e.action), "target": show(e.target)}
            for e in self.entries]}

    def __str__(self) -> str:
        inner = ", ".join(f"{show_prob(e.prob)} {show_action(e.action)} -> {show(e.target)}"
                          for e in self.entries)
        return "{" + inner + "}"


# -- canonical keys ---------------------------------------------------------

def canonical_entry(action: Action, target: Process) -> tuple[Action, Process]:
    """Alpha-canonical representative of an (action, target) pair.

    The formal of an input and the payload of a bound output bind in the
    target, so they are canonicalised together with it.
    """
    match action:
        case Input(c, z):
            b = canonical(Sum((Branch(Fraction(1), Input(c, z), target),))).branches[0]
            return b.prefix, b.cont
        case BoundOutput(c, y):
            wrapped = canonical(Res(y, target))
            return BoundOutput(c, wrapped.binder), wrapped.body
    return action, canonical(target)


def entry_key(action: Action, target: Process) -> tuple[str, str]:
    """Alpha-invariant serialisation of an (action, target) pair."""
    a, t = canonical_entry(action, target)
    return show_action(a), show(t)


# -- exposed form -----------------------------------------------------------

def expose(p: Process) -> tuple[list[str], list[Process]]:
    """Split ``p`` into extruded restricted names and active components."""
    used = set(free_names(p))
    binders: list[str] = []
    comps: list[Process] = []

    def go(q: Process) -> None:
        match q:
            case Par(l, r):
                go(l)
                go(r)
            case Rec():
                go(unfold(q))
            case If(c, t, e) if c in (TRUE, FALSE):
                go(t if c == TRUE else e)
            case Res(b, body):
                if b in used:
                    b2 = fresh(b, used | free_names(body))
                    body = substitute(body, b2, b)
                    b = b2
                used.add(b)
                binders.append(b)
                go(body)
            case Sum(()):
                pass
            case _:
                comps.append(q)

    go(p)
    live = set().union(*(free_names(c) for c in comps)) if comps else set()
    return [b for b in binders if b in live], comps


def assemble(binders: Sequence[str], comps: Sequence[Process]) -> Process:
    return res(binders, par(*comps))


def normalize_state(p: Process) -> Process:
    """Exposed form of ``p`` as a single term (used for all automaton states)."""
    cached = p.__dict__.get("_state")
    if cached is None:
        binders, comps = expose(p)
        cached = assemble(binders, comps)
        cached.__dict__["_state"] = cached
        p.__dict__["_state"] = cached
    return cached


def state_key(p: Process) -> str:
    return canonical_key(normalize_state(p))


# -- rules --------------------------------------------------------------------

def sum_group(s: Sum) -> TransitionGroup:
    """SUM: one group holding every branch, identical branches merged by summing."""
    if not s.branches:
        raise ValueError("the empty sum has no transition group")
    return TransitionGroup(_merge(Entry(b.prob, b.prefix, b.cont) for b in s.branches),
                           source=s)


def _merge(entries: Iterable[Entry]) -> tuple[Entry, ...]:
    acc: dict[tuple[str, str], Entry] = {}
    for e in entries:
        prev = acc.get(e.key)
        acc[e.key] = e if prev is None else \
            Entry(prev.prob + e.prob, prev.action, prev.target, prev.via_com or e.via_com)
    return tuple(sorted(acc.values(), key=lambda e: (e.key, e.prob)))


def res_renormalize(entries: Sequence[Entry], restricted: str) -> list[Entry]:
    """RES: drop entries whose action mentions ``restricted`` free, rescale the rest.

    Kept targets are wrapped in ``new restricted``; a bound name clashing with
    the restricted one is renamed first.  Returns ``[]`` when nothing survives.
    """
    kept = []
    for e in entries:
        if restricted in action_free_names(e.action):
            continue
        action, target = e.action, e.target
        if _binds(action, restricted):
            z2 = fresh(restricted, free_names(target) | action_free_names(action) | {restricted})
            target = substitute(target, z2, restricted)
            action = type(action)(action.chan, z2)
        kept.append(Entry(e.prob, action, Res(restricted, target), e.via_com))
    mass = sum((e.prob for e in kept), Fraction(0))
    return [Entry(e.prob / mass, e.action, e.target, e.via_com) for e in kept]


def _binds(action: Action, name: str) -> bool:
    match action:
        case Input(_, z) | BoundOutput(_, z):
            return z == name
    return False


def _restrict(entries: list[Entry], binders: Sequence[str]) -> list[Entry]:
    for b in reversed(binders):
        if not entries:
            break
        if len(entries) == 1 and isinstance(entries[0].action, FreeOutput):
            e = entries[0]
            a = e.action
            if a.payload == b and a.chan != b:
                entries = [Entry(e.prob, BoundOutput(a.chan, b), e.target)]   # OPEN
                continue
        entries = res_renormalize(entries, b)
    return entries


def transition_groups(p: Process, mode: RuleMode = RuleMode.STANDARD) -> list[TransitionGroup]:
    """All transition groups of ``p`` in canonical order.

    Targets are returned in exposed form (:func:`normalize_state`).
    """
    binders, comps = expose(p)
    for c in comps:
        if isinstance(c, If):
            raise StuckConditional(f"condition {c.cond!r} is not a boolean literal in {show(c)}")
    outputs = [(k, c) for k, c in enumerate(comps) if isinstance(c, Output)]
    fns = [free_names(c) for c in comps]
    raw: list[tuple[list[Entry], Process, bool, frozenset[str]]] = []

    def target(repl: dict[int, Process]) -> Process:
        return par(*(repl.get(k, c) for k, c in enumerate(comps)))

    for k, o in outputs:
        raw.append(([Entry(Fraction(1), FreeOutput(o.chan, o.payload), target({k: NIL}))],
                    o, False, frozenset()))

    for j, c in enumerate(comps):
        if not isinstance(c, Sum):
            continue
        branches = sum_group(c).entries
        others = set(binders).union(*(fns[k] for k in range(len(comps)) if k != j))
        in_chans = sorted({e.action.chan for e in branches if isinstance(e.action, Input)})
        avail = {ch: [k for k, o in outputs if o.chan == ch] for ch in in_chans}
        avail = {ch: ks for ch, ks in avail.items() if ks}

        def build(choice: dict[str, int], only_matching: bool) -> list[Entry]:
            out = []
            for e in branches:
                a = e.action
                if isinstance(a, Input) and a.chan in choice:
                    k = choice[a.chan]
                    cont = substitute(e.target, comps[k].payload, a.formal)
                    out.append(Entry(e.prob, Tau(), target({j: cont, k: NIL}), True))
                elif only_matching:
                    continue
                elif isinstance(a, Input) and a.formal in others:
                    z2 = fresh(a.formal, others | free_names(e.target) | {a.chan})
                    out.append(Entry(e.prob, Input(a.chan, z2),
                                     target({j: substitute(e.target, z2, a.formal)})))
                else:
                    out.append(Entry(e.prob, a, target({j: e.target})))
            if only_matching:
                mass = sum((e.prob for e in out), Fraction(0))
                out = [Entry(e.prob / mass, e.action, e.target, e.via_com) for e in out]
            return out

        raw.append((build({}, False), c, bool(avail), frozenset()))
        if mode is RuleMode.STANDARD:
            chans = list(avail)
            for picks in itertools.product(*([None, *avail[ch]] for ch in chans)):
                choice = {ch: k for ch, k in zip(chans, picks) if k is not None}
                if choice:
                    served = frozenset(choice)
                    raw.append((build(choice, False), c, served != frozenset(avail), served))
        else:
            for ch, ks in avail.items():
                for k in ks:
                    raw.append((build({ch: k}, True), c, False, frozenset({ch})))

    groups: dict[tuple, TransitionGroup] = {}
    for entries, source, withholding, served in raw:
        entries = _restrict(entries, binders)
        if not entries:
            continue
        entries = [Entry(e.prob, e.action, normalize_state(e.target), e.via_com) for e in entries]
        g = TransitionGroup(_merge(entries), source=source, withholding=withholding, served=served)
        prev = groups.get(g.key)
        if prev is None or (prev.withholding and not withholding):
            groups[g.key] = g
    return [groups[k] for k in sorted(groups)]


def groups_to_json(groups: Sequence[TransitionGroup]) -> str:
    return json.dumps([g.to_json() for g in groups], indent=2)
