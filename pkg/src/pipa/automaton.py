"""Probabilistic automata of processes, their unfoldings and execution trees."""
from __future__ import annotations

import json
import threading
from collections import Counter, deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Sequence

from .errors import AdversaryRangeError, BudgetExceeded
from .pts import RuleMode, TransitionGroup, normalize_state, transition_groups
from .terms import Action, Process, Var, canonical_key, show, show_action, show_prob


@dataclass(frozen=True)
class Arc:
    """One entry of a group, with its target resolved to a state index."""
    prob: Fraction
    action: Action
    target: int


class ProbAutomaton:
    """Lazily materialised automaton ``(S, T, s0)`` of a process.

    States are exposed-form terms identified by their canonical key
    (alpha-conversion plus AC of ``|``).  Group sets are computed on first
    request and cached; discovery is guarded by a lock so several threads
    may share one automaton.

    ``view`` optionally rewrites each state's group list before it is
    exposed (used to restrict the adversary class, e.g. :func:`no_withholding`).
    """

    def __init__(self, initial: Process, mode: RuleMode = RuleMode.STANDARD,
                 view: Callable[[list[TransitionGroup]], list[TransitionGroup]] | None = None):
        self.mode = mode
        self.view = view
        self.states: list[Process] = []
        self.index: dict[str, int] = {}
        self._groups: dict[int, list[TransitionGroup]] = {}
        self._arcs: dict[int, list[list[Arc]]] = {}
        self._lock = threading.RLock()
        self.truncated = False
        self.initial = self.add_state(initial)

    @classmethod
    def from_table(cls, table: dict[str, list[list[tuple]]], initial: str) -> "ProbAutomaton":
        """Hand-built automaton: ``{state: [[(prob, action, target), ...], ...]}``.

        States are named by process identifiers so they print as themselves.
        """
        from .pts import Entry
        m = cls.__new__(cls)
        m.mode, m.view, m.truncated = RuleMode.STANDARD, None, False
        m.states, m.index, m._groups, m._arcs = [], {}, {}, {}
        m._lock = threading.RLock()
        names = sorted(set(table) | {t for gs in table.values() for g in gs for _, _, t in g},
                       key=lambda n: (n != initial, n))
        for n in names:
            m.index[n] = len(m.states)
            m.states.append(Var(n))
        for n in names:
            i = m.index[n]
            groups = table.get(n, [])
            m._groups[i] = [TransitionGroup(tuple(Entry(Fraction(p), a, Var(t)) for p, a, t in g))
                            for g in groups]
            m._arcs[i] = [[Arc(Fraction(p), a, m.index[t]) for p, a, t in g] for g in groups]
        m.initial = 0
        return m

    def name(self, i: int) -> str:
        return show(self.states[i])

    def add_state(self, p: Process) -> int:
        s = normalize_state(p)
        key = canonical_key(s)
        with self._lock:
            i = self.index.get(key)
            if i is None:
                i = len(self.states)
                self.states.append(s)
                self.index[key] = i
            return i

    def state_of(self, p: Process) -> int | None:
        return self.index.get(canonical_key(normalize_state(p)))

    def groups(self, i: int) -> list[TransitionGroup]:
        g = self._groups.get(i)
        if g is None:
            with self._lock:
                g = self._groups.get(i)
                if g is None:
                    g = transition_groups(self.states[i], self.mode)
                    if self.view is not None:
                        g = self.view(g)
                    self._arcs[i] = [[Arc(e.prob, e.action, self.add_state(e.target))
                                      for e in grp.entries] for grp in g]
                    self._groups[i] = g
        return g

    def arcs(self, i: int) -> list[list[Arc]]:
        self.groups(i)
        return self._arcs[i]

    def is_dead(self, i: int) -> bool:
        return not self.groups(i)

    @property
    def explored(self) -> list[int]:
        return sorted(self._groups)

    def __len__(self) -> int:
        return len(self.states)


def no_withholding(groups: list[TransitionGroup]) -> list[TransitionGroup]:
    """Drop groups that keep a pending output away from a ready receiver."""
    return [g for g in groups if not g.withholding]


def build(p: Process, max_states: int = 10_000, max_depth: int = 1_000,
          mode: RuleMode = RuleMode.STANDARD, view=None) -> ProbAutomaton:
    """Breadth-first discovery of the states reachable from ``p``.

    ``truncated`` is set when the depth bound stopped exploration; running
    over ``max_states`` raises :class:`BudgetExceeded` carrying the partial
    automaton.
    """
    if max_states <= 0 or max_depth < 0:
        raise ValueError("bounds must be positive")
    m = ProbAutomaton(p, mode, view)
    seen = {m.initial}
    frontier = deque([(m.initial, 0)])
    while frontier:
        i, d = frontier.popleft()
        if d >= max_depth:
            if m.groups(i):
                m.truncated = True
            continue
        for arcs in m.arcs(i):
            for a in arcs:
                if a.target not in seen:
                    seen.add(a.target)
                    if len(seen) > max_states:
                        m.truncated = True
                        raise BudgetExceeded(f"more than {max_states} states", partial=m)
                    frontier.append((a.target, d + 1))
    return m


# -- execution fragments ------------------------------------------------------

@dataclass(frozen=True)
class Step:
    state: int
    action: Action
    prob: Fraction
    group: int = 0


class ExecutionFragment:
    """A finite path from the root: states are automaton indices.

    Fragments handed to adversaries may grow in place during a simulation;
    everything returned from tree construction is left untouched.
    """

    __slots__ = ("automaton", "steps", "terminal", "_visits")

    def __init__(self, automaton: ProbAutomaton, terminal: int, steps: Sequence[Step] = ()):
        self.automaton = automaton
        self.steps: list[Step] = list(steps)
        self.terminal = terminal
        self._visits: Counter | None = None

    def extend(self, step: Step, terminal: int) -> "ExecutionFragment":
        return ExecutionFragment(self.automaton, terminal, [*self.steps, step])

    def append(self, step: Step, terminal: int) -> None:
        if self._visits is not None:
            self._visits[step.state] += 1
        self.steps.append(step)
        self.terminal = terminal

    def visits(self, state: int) -> int:
        """How many times ``state`` was left by an earlier step."""
        if self._visits is None:
            self._visits = Counter(s.state for s in self.steps)
        return self._visits[state]

    @property
    def pb(self) -> Fraction:
        out = Fraction(1)
        for s in self.steps:
            out *= s.prob
        return out

    @property
    def actions(self) -> list[Action]:
        return [s.action for s in self.steps]

    def terms(self) -> list[Process]:
        return [self.automaton.states[s.state] for s in self.steps] + \
            [self.automaton.states[self.terminal]]

    def is_prefix_of(self, other: "ExecutionFragment") -> bool:
        n = len(self.steps)
        return n <= len(other.steps) and other.steps[:n] == self.steps and \
            (other.steps[n].state if n < len(other.steps) else other.terminal) == self.terminal

    def __len__(self) -> int:
        return len(self.steps)

    def __repr__(self) -> str:
        path = " ".join(f"-{show_action(s.action)}/{show_prob(s.prob)}->" for s in self.steps)
        return f"<fragment {path} pb={self.pb}>"


# -- trees --------------------------------------------------------------------

@dataclass
class TreeNode:
    id: int
    state: int
    parent: tuple[int, Action, Fraction] | None
    depth: int
    group: int | None = None          # group selected at this node (etree only)
    children: list[int] = field(default_factory=list)
    open: bool = False                # cut by the depth bound while still enabled


@dataclass
class Tree:
    automaton: ProbAutomaton
    nodes: list[TreeNode]
    depth: int
    fully_probabilistic: bool

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    def fragment(self, node_id: int) -> ExecutionFragment:
        steps = []
        n = self.nodes[node_id]
        while n.parent is not None:
            pid, action, prob = n.parent
            steps.append(Step(self.nodes[pid].state, action, prob, self.nodes[pid].group or 0))
            n = self.nodes[pid]
        steps.reverse()
        return ExecutionFragment(self.automaton, self.nodes[node_id].state, steps)

    def leaves(self) -> Iterator[TreeNode]:
        return (n for n in self.nodes if not n.children)

    def to_jsonl(self) -> str:
        lines = []
        for n in self.nodes:
            parent, action, prob = (None, None, None) if n.parent is None else \
                (n.parent[0], show_action(n.parent[1]), show_prob(n.parent[2]))
            lines.append(json.dumps({"node": n.id, "parent": parent, "action": action,
                                     "prob": prob, "state": show(self.automaton.states[n.state])}))
        return "\n".join(lines)


def unfold(m: ProbAutomaton, depth: int) -> Tree:
    """``tree(M)`` cut at ``depth``: every entry of every group becomes a child."""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    nodes = [TreeNode(0, m.initial, None, 0)]
    queue = deque([0])
    while queue:
        n = nodes[queue.popleft()]
        if n.depth == depth:
            n.open = bool(m.groups(n.state))
            continue
        for arcs in m.arcs(n.state):
            for a in arcs:
                child = TreeNode(len(nodes), a.target, (n.id, a.action, a.prob), n.depth + 1)
                nodes.append(child)
                n.children.append(child.id)
                queue.append(child.id)
    return Tree(m, nodes, depth, fully_probabilistic=False)


Chooser = Callable[[ExecutionFragment, Sequence[TransitionGroup]], int]


def etree(m: ProbAutomaton, adversary, depth: int) -> Tree:
    """``etree(M, adversary)`` cut at ``depth``.

    ``adversary`` is either an :class:`~pipa.scheduler.Adversary` or a bare
    chooser ``(history, groups) -> index``.  Nodes are numbered breadth-first.
    """
    if depth < 0:
        raise ValueError("depth must be non-negative")
    choose: Chooser = adversary.session() if hasattr(adversary, "session") else adversary
    nodes = [TreeNode(0, m.initial, None, 0)]
    frags = {0: ExecutionFragment(m, m.initial)}
    queue = deque([0])
    while queue:
        n = nodes[queue.popleft()]
        frag = frags.pop(n.id)
        groups = m.groups(n.state)
        if not groups:
            continue
        if n.depth == depth:
            n.open = True
            continue
        k = choose(frag, groups)
        if not 0 <= k < len(groups):
            raise AdversaryRangeError(f"adversary chose group {k} of {len(groups)}")
        n.group = k
        for a in m.arcs(n.state)[k]:
            child = TreeNode(len(nodes), a.target, (n.id, a.action, a.prob), n.depth + 1)
            nodes.append(child)
            n.children.append(child.id)
            frags[child.id] = frag.extend(Step(n.state, a.action, a.prob, k), a.target)
            queue.append(child.id)
    return Tree(m, nodes, depth, fully_probabilistic=True)


def fragments(t: Tree) -> list[ExecutionFragment]:
    """Every root-to-leaf path of ``t`` (maximal fragments up to the cut)."""
    return [t.fragment(n.id) for n in t.leaves()]
