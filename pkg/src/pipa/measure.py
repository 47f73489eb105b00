"""Cone measure on executions and prefix-monotone events."""
from __future__ import annotations

import fnmatch
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Hashable, Sequence

from .automaton import ExecutionFragment, ProbAutomaton, Tree
from .errors import NotDisjoint
from .terms import Action, FreeOutput, Tau, show_action


def pb_fragment(x: ExecutionFragment) -> Fraction:
    return x.pb


@dataclass(frozen=True)
class Cone:
    prefix: ExecutionFragment

    @property
    def pb(self) -> Fraction:
        return self.prefix.pb


def _fkey(x: ExecutionFragment, n: int | None = None) -> tuple:
    n = len(x.steps) if n is None else n
    end = x.steps[n].state if n < len(x.steps) else x.terminal
    return tuple(x.steps[:n]), end


def disjoint_union_pb(cones: Sequence[Cone]) -> Fraction:
    """Sum of cone probabilities, after checking the prefixes are prefix-free."""
    seen: dict[tuple, Cone] = {}
    for c in cones:
        k = _fkey(c.prefix)
        if k in seen:
            raise NotDisjoint(seen[k].prefix, c.prefix)
        seen[k] = c
    for c in cones:
        for n in range(len(c.prefix.steps)):
            other = seen.get(_fkey(c.prefix, n))
            if other is not None:
                raise NotDisjoint(other.prefix, c.prefix)
    total = sum((c.pb for c in cones), Fraction(0))
    assert total <= 1
    return total


def complement_pb(p: Fraction) -> Fraction:
    if not 0 <= p <= 1:
        raise ValueError(f"{p} is not a probability")
    return 1 - p


# -- events -------------------------------------------------------------------
#
# An event is tracked by a small hashable progress value folded along the
# path; once ``satisfied`` holds it holds on every extension.

class Event:
    name = "event"

    def start(self, m: ProbAutomaton, state: int) -> Hashable:
        return None

    def advance(self, progress: Hashable, action: Action, m: ProbAutomaton, target: int) -> Hashable:
        return progress

    def satisfied(self, progress: Hashable) -> bool:
        raise NotImplementedError

    def progress_of(self, x: ExecutionFragment) -> Hashable:
        m = x.automaton
        states = [s.state for s in x.steps] + [x.terminal]
        prog = self.start(m, states[0])
        for s, nxt in zip(x.steps, states[1:]):
            if self.satisfied(prog):
                break
            prog = self.advance(prog, s.action, m, nxt)
        return prog

    def holds(self, x: ExecutionFragment) -> bool:
        return self.satisfied(self.progress_of(x))

    def __repr__(self) -> str:
        return f"<event {self.name}>"


class Always(Event):
    name = "always"

    def satisfied(self, progress):
        return True


class Never(Event):
    name = "never"

    def satisfied(self, progress):
        return False


class ActionOccurs(Event):
    """Some step's printed action matches a shell-style pattern."""

    def __init__(self, pattern: str):
        self.pattern = pattern
        self.name = f"action:{pattern}"
        self._rx = re.compile(fnmatch.translate(pattern))

    def start(self, m, state):
        return False

    def advance(self, progress, action, m, target):
        return progress or bool(self._rx.match(show_action(action)))

    def satisfied(self, progress):
        return progress


class Deadlock(Event):
    name = "deadlock"

    def start(self, m, state):
        return m.is_dead(state)

    def advance(self, progress, action, m, target):
        return progress or m.is_dead(target)

    def satisfied(self, progress):
        return progress


DRAW_LABEL = re.compile(r"draw\((\d+),\s*(\d+)\)$")


class DrawsAtLeast(Event):
    def __init__(self, n: int):
        if n < 0:
            raise ValueError("n must be non-negative")
        self.n = n
        self.name = f"draws-at-least:{n}"

    def start(self, m, state):
        return 0

    def advance(self, progress, action, m, target):
        if isinstance(action, Tau) and action.label and DRAW_LABEL.match(action.label):
            return min(progress + 1, self.n)
        return progress

    def satisfied(self, progress):
        return progress >= self.n


class LeaderElected(Event):
    """Outputs were seen on every announcement channel, all with one payload.

    Progress keeps the first payload per channel; a disagreement is
    absorbing and never satisfies.
    """
    name = "leader-elected"

    def __init__(self, channels: Sequence[str] = ("o0", "o1")):
        self.channels = tuple(channels)

    def start(self, m, state):
        return (None,) * len(self.channels)

    def advance(self, progress, action, m, target):
        if isinstance(action, FreeOutput) and action.chan in self.channels:
            k = self.channels.index(action.chan)
            if progress[k] is None:
                return progress[:k] + (action.payload,) + progress[k + 1:]
        return progress

    def satisfied(self, progress):
        return None not in progress and len(set(progress)) == 1


def parse_event(token: str) -> Event:
    if token == "leader-elected":
        return LeaderElected()
    if token == "deadlock":
        return Deadlock()
    if token in ("always", "true"):
        return Always()
    if token in ("never", "false"):
        return Never()
    if token.startswith("draws-at-least:"):
        return DrawsAtLeast(int(token.split(":", 1)[1]))
    if token.startswith("action:"):
        return ActionOccurs(token.split(":", 1)[1])
    raise ValueError(f"unknown event {token!r}")


# -- bounds on truncated trees -------------------------------------------------

@dataclass(frozen=True)
class EventReport:
    lower: Fraction        # mass of minimal satisfying prefixes
    open: Fraction         # undecided mass at the cut
    falsified: Fraction    # decided paths that never satisfied the event
    witnesses: tuple[int, ...] = ()   # tree nodes closing minimal satisfying prefixes

    @property
    def upper(self) -> Fraction:
        return self.lower + self.open

    @property
    def bounds(self) -> tuple[Fraction, Fraction]:
        return self.lower, self.upper


def event_report(t: Tree, e: Event) -> EventReport:
    if not t.fully_probabilistic:
        raise ValueError("event bounds need an execution tree (one group per node)")
    m = t.automaton
    lower = open_ = falsified = Fraction(0)
    witnesses = []
    root = t.root
    stack = [(root.id, e.start(m, root.state), Fraction(1))]
    while stack:
        nid, prog, mass = stack.pop()
        node = t.nodes[nid]
        if e.satisfied(prog):
            lower += mass
            witnesses.append(nid)
            continue
        if not node.children:
            if node.open:
                open_ += mass
            else:
                falsified += mass
            continue
        for cid in node.children:
            c = t.nodes[cid]
            _, action, p = c.parent
            stack.append((cid, e.advance(prog, action, m, c.state), mass * p))
    return EventReport(lower, open_, falsified, tuple(sorted(witnesses)))


def event_probability(t: Tree, e: Event) -> tuple[Fraction, Fraction]:
    """``(lower, upper)`` bounds on the probability of ``e`` in the full etree."""
    return event_report(t, e).bounds


def satisfying_cones(t: Tree, e: Event) -> list[Cone]:
    return [Cone(t.fragment(n)) for n in event_report(t, e).witnesses]


# -- forward propagation under a Markov policy ------------------------------------

def propagate(m: ProbAutomaton, e: Event, depth: int,
              choose: Callable[[int, Hashable, int], int]) -> EventReport:
    """Exact event bounds for a policy that sees (state, progress, steps left).

    Distribution mass over (state, progress) is pushed forward one step at a
    time, so the cost is linear in depth rather than in tree size.
    """
    lower = open_ = falsified = Fraction(0)
    dist: dict[tuple[int, Hashable], Fraction] = {(m.initial, e.start(m, m.initial)): Fraction(1)}
    for left in range(depth, -1, -1):
        nxt: dict[tuple[int, Hashable], Fraction] = {}
        for (s, prog), mass in dist.items():
            if e.satisfied(prog):
                lower += mass
                continue
            groups = m.groups(s)
            if not groups:
                falsified += mass
                continue
            if left == 0:
                open_ += mass
                continue
            k = choose(s, prog, left)
            for a in m.arcs(s)[k]:
                key = (a.target, e.advance(prog, a.action, m, a.target))
                nxt[key] = nxt.get(key, Fraction(0)) + mass * a.prob
        dist = nxt
    return EventReport(lower, open_, falsified)


def to_float(q: Fraction) -> float:
    return float(q)


def fmt(q: Fraction) -> str:
    return f"{q} (~{float(q):.6f})"
