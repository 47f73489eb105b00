"""Adversaries, single-run simulation and worst-case bounded search."""
from __future__ import annotations

import math
import random
import re
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Hashable, Sequence

from .automaton import ExecutionFragment, ProbAutomaton, Step
from .errors import AdversaryRangeError, BudgetExceeded, UnknownAdversary
from .measure import Event, EventReport, propagate
from .pts import TransitionGroup
from .terms import Process, Sum, Tau, canonical_key

Owner = Callable[[TransitionGroup], Hashable]


def component_owner(g: TransitionGroup) -> Hashable:
    """Default notion of "process": the component that drives the group."""
    return None if g.source is None else canonical_key(g.source)


class Chooser:
    """Per-run resolver: ``chooser(history, groups) -> index``."""

    def __init__(self):
        self.flags: list[str] = []

    def __call__(self, history: ExecutionFragment, groups: Sequence[TransitionGroup]) -> int:
        raise NotImplementedError


class Adversary:
    """Immutable description of a strategy; ``session`` makes a fresh chooser."""
    name = "adversary"
    randomized = False

    def session(self, seed: int | str | None = None) -> Chooser:
        raise NotImplementedError

    def __repr__(self):
        return f"<adversary {self.name}>"


class Memoryless(Chooser, Adversary):
    """A deterministic strategy without per-run state; it is its own chooser.

    ``markov`` marks strategies whose choice depends on the available groups
    only, which lets :func:`run_actions` skip building the history.
    """
    markov = False

    def __init__(self):
        Chooser.__init__(self)

    def session(self, seed=None) -> Chooser:
        return self


class First(Memoryless):
    name = "first"
    markov = True

    def __call__(self, history, groups):
        return 0


class Fixed(Memoryless):
    def __init__(self, index: int):
        super().__init__()
        self.index = index
        self.name = f"fixed:{index}"
        self.markov = True

    def __call__(self, history, groups):
        return self.index


class RoundRobin(Memoryless):
    """The k-th visit to a state picks group k mod |groups|."""
    name = "round-robin"

    def __call__(self, history, groups):
        return history.visits(history.terminal) % len(groups)


class UniformRandom(Adversary):
    name = "uniform-random"
    randomized = True

    def __init__(self, seed: int):
        self.seed = seed

    def session(self, seed=None) -> Chooser:
        return _RandomChooser(random.Random(f"uniform-random:{self.seed}:{seed}"))


class _RandomChooser(Chooser):
    def __init__(self, rng: random.Random):
        super().__init__()
        self.rng = rng

    def __call__(self, history, groups):
        return self.rng.randrange(len(groups))


class _ScriptChooser(Chooser):
    def __init__(self, script):
        super().__init__()
        self.script = script

    def __call__(self, history, groups):
        n = len(history.steps)
        if n < len(self.script):
            return self.script[n]
        if "script-exhausted" not in self.flags:
            self.flags.append("script-exhausted")
        return 0


class Scripted(Adversary):
    """Group index taken from a list by step number; 0 once the list runs out."""

    def __init__(self, script: Sequence[int]):
        self.script = tuple(int(k) for k in script)
        self.name = "scripted"

    def session(self, seed=None) -> Chooser:
        return _ScriptChooser(self.script)

    @classmethod
    def from_file(cls, path: str) -> "Scripted":
        with open(path, encoding="utf-8") as fh:
            return cls([int(line) for line in fh if line.strip()])


def _has_tau_branch(source: Process | None) -> bool:
    return isinstance(source, Sum) and any(isinstance(b.prefix, Tau) for b in source.branches)


def greedy_delay_rank(g: TransitionGroup) -> tuple[int, int]:
    """Lower is more delaying.

    Withholding a pending output comes first, then moves that communicate
    nothing, then first inputs (a receiver with no way out), and last the
    inputs that would complete a second-input choice.
    """
    if g.withholding:
        return (0, 0)
    if not g.served:
        return (1, 0)
    return (2, 1 if _has_tau_branch(g.source) else 0)


class GreedyDelay(Memoryless):
    name = "greedy-delay"
    markov = True

    def __call__(self, history, groups):
        return min(range(len(groups)), key=lambda k: (greedy_delay_rank(groups[k]), k))


class _AlternatingChooser(Chooser):
    """Stay with one process until it has performed an input, then switch."""

    def __init__(self, owner: Owner):
        super().__init__()
        self.owner = owner

    def _last(self, h: ExecutionFragment) -> tuple[Hashable, bool]:
        # (owner of the last step, whether that step was a communication)
        if not h.steps:
            return None, False
        s = h.steps[-1]
        g = h.automaton.groups(s.state)[s.group]
        return self.owner(g), bool(g.served)

    def __call__(self, history, groups):
        if not history.steps:
            return 0
        last, switched = self._last(history)
        for k, g in enumerate(groups):
            o = self.owner(g)
            if (o != last) if switched else (o == last):
                return k
        return 0


class Alternating(Adversary):
    name = "alternating"

    def __init__(self, owner: Owner = component_owner):
        self.owner = owner

    def session(self, seed=None) -> Chooser:
        return _AlternatingChooser(self.owner)


BUILTINS = ("round-robin", "uniform-random", "scripted", "greedy-delay", "alternating")


def builtin(name: str, seed: int | None = None, script: Sequence[int] | None = None,
            owner: Owner | None = None) -> Adversary:
    if name == "round-robin":
        return RoundRobin()
    if name == "uniform-random":
        if seed is None:
            raise ValueError("uniform-random needs a seed")
        return UniformRandom(seed)
    if name == "scripted" or name.startswith("scripted:"):
        if name.startswith("scripted:"):
            arg = name.split(":", 1)[1]
            # inline "1,0,2" or a file with one index per line
            if re.fullmatch(r"\d+(,\d+)*", arg):
                return Scripted([int(k) for k in arg.split(",")])
            return Scripted.from_file(arg)
        if script is None:
            raise ValueError("scripted needs an index list")
        return Scripted(script)
    if name == "greedy-delay":
        return GreedyDelay()
    if name == "alternating":
        return Alternating(owner or component_owner)
    raise UnknownAdversary(f"unknown adversary {name!r}; expected one of {', '.join(BUILTINS)}")


# -- simulation ---------------------------------------------------------------

@dataclass
class Run:
    fragment: ExecutionFragment
    deadlocked: bool
    exhausted: bool              # hit max_steps while still enabled
    flags: list[str] = field(default_factory=list)


class Sampler:
    """Exact sampling of group entries with integer thresholds."""

    def __init__(self, m: ProbAutomaton):
        self.m = m
        self._tables: dict[tuple[int, int], tuple[int, list[int]]] = {}

    def table(self, state: int, k: int) -> tuple[int, list[int]]:
        t = self._tables.get((state, k))
        if t is None:
            arcs = self.m.arcs(state)[k]
            den = math.lcm(*(a.prob.denominator for a in arcs))
            acc, cum = 0, []
            for a in arcs:
                acc += a.prob.numerator * (den // a.prob.denominator)
                cum.append(acc)
            assert acc == den
            t = self._tables[(state, k)] = (den, cum)
        return t

    def pick(self, state: int, k: int, rng: random.Random) -> int:
        den, cum = self.table(state, k)
        return bisect_right(cum, rng.randrange(den))


def run(m: ProbAutomaton, adversary: Adversary | Chooser, seed: int | str, max_steps: int,
        sampler: Sampler | None = None, stop: Callable[[ExecutionFragment], bool] | None = None,
        adversary_seed: int | str | None = None) -> Run:
    """One execution: the adversary picks a group, ``seed`` drives the entry draw."""
    choose = adversary.session(adversary_seed if adversary_seed is not None else seed) \
        if isinstance(adversary, Adversary) else adversary
    rng = random.Random(f"run:{seed}")
    sampler = sampler or Sampler(m)
    h = ExecutionFragment(m, m.initial)
    while True:
        groups = m.groups(h.terminal)
        if not groups:
            return Run(h, True, False, list(getattr(choose, "flags", [])))
        if len(h.steps) >= max_steps or (stop is not None and stop(h)):
            return Run(h, False, len(h.steps) >= max_steps, list(getattr(choose, "flags", [])))
        k = choose(h, groups)
        if not 0 <= k < len(groups):
            raise AdversaryRangeError(f"adversary chose group {k} of {len(groups)}")
        i = sampler.pick(h.terminal, k, rng)
        a = m.arcs(h.terminal)[k][i]
        h.append(Step(h.terminal, a.action, a.prob, k), a.target)


def run_actions(m: ProbAutomaton, adversary: Memoryless, seed: int | str, max_steps: int,
                sampler: Sampler | None = None,
                stop: Callable[[list], bool] | None = None) -> tuple[list, int, bool, bool]:
    """Same execution as :func:`run` for a Markov strategy, keeping only actions.

    Returns ``(actions, terminal, deadlocked, exhausted)``; ``stop`` sees the
    action list so far.
    """
    if not getattr(adversary, "markov", False):
        raise ValueError("run_actions needs a state-only strategy")
    rng = random.Random(f"run:{seed}")
    randrange = rng.randrange
    sampler = sampler or Sampler(m)
    empty = ExecutionFragment(m, m.initial)
    tables: dict[int, tuple | None] = {}
    actions: list = []
    push = actions.append
    state = m.initial
    while True:
        t = tables.get(state, False)
        if t is False:
            groups = m.groups(state)
            if groups:
                k = adversary(empty, groups)
                if not 0 <= k < len(groups):
                    raise AdversaryRangeError(f"adversary chose group {k} of {len(groups)}")
                den, cum = sampler.table(state, k)
                t = (den, cum, m.arcs(state)[k])
            else:
                t = None
            tables[state] = t
        if t is None:
            return actions, state, True, False
        if len(actions) >= max_steps or (stop is not None and stop(actions)):
            return actions, state, False, len(actions) >= max_steps
        den, cum, arcs = t
        a = arcs[bisect_right(cum, randrange(den))]
        push(a.action)
        state = a.target


# -- worst-case search -----------------------------------------------------------

@dataclass
class SearchResult:
    objective: str
    depth: int
    lower: Fraction
    upper: Fraction
    policy_lower: dict[tuple[int, Hashable, int], int]
    policy_upper: dict[tuple[int, Hashable, int], int]
    event: Event
    automaton: ProbAutomaton

    @property
    def value(self) -> tuple[Fraction, Fraction]:
        return self.lower, self.upper

    @property
    def policy(self) -> dict:
        return self.policy_lower

    def adversary(self, which: str = "lower") -> "PolicyAdversary":
        pol = self.policy_lower if which == "lower" else self.policy_upper
        return PolicyAdversary(self.automaton, self.event, self.depth, pol)

    def replay(self, which: str = "lower") -> EventReport:
        pol = self.policy_lower if which == "lower" else self.policy_upper
        return propagate(self.automaton, self.event, self.depth,
                         lambda s, prog, left: pol[(s, prog, left)])


def search(m: ProbAutomaton, event: Event, depth: int, objective: str = "max",
           max_nodes: int = 2_000_000, max_states: int = 100_000) -> SearchResult:
    """Optimal event probability over all adversaries at a bounded horizon.

    Backward induction over (state, event progress, steps left).  Open leaves
    at the cut count 0 for the lower and 1 for the upper value; each has its
    own optimal policy.
    """
    if objective not in ("max", "min"):
        raise ValueError("objective must be 'max' or 'min'")
    if depth < 0:
        raise ValueError("depth must be non-negative")
    better = (lambda a, b: a > b) if objective == "max" else (lambda a, b: a < b)
    memo: dict[tuple[int, Hashable, int], tuple[Fraction, Fraction]] = {}
    pol_lo: dict[tuple[int, Hashable, int], int] = {}
    pol_hi: dict[tuple[int, Hashable, int], int] = {}
    one, zero = Fraction(1), Fraction(0)

    def value(s: int, prog: Hashable, left: int) -> tuple[Fraction, Fraction]:
        if event.satisfied(prog):
            return one, one
        key = (s, prog, left)
        v = memo.get(key)
        if v is not None:
            return v
        groups = m.groups(s)
        if len(m) > max_states:
            raise BudgetExceeded(f"more than {max_states} states", partial=m)
        if not groups:
            v = (zero, zero)
        elif left == 0:
            v = (zero, one)
        else:
            best_lo = best_hi = None
            for k, arcs in enumerate(m.arcs(s)):
                lo = hi = zero
                for a in arcs:
                    clo, chi = value(a.target, event.advance(prog, a.action, m, a.target), left - 1)
                    lo += a.prob * clo
                    hi += a.prob * chi
                if best_lo is None or better(lo, best_lo):
                    best_lo, pol_lo[key] = lo, k
                if best_hi is None or better(hi, best_hi):
                    best_hi, pol_hi[key] = hi, k
            v = (best_lo, best_hi)
        memo[key] = v
        if len(memo) > max_nodes:
            raise BudgetExceeded(f"search exceeded {max_nodes} nodes", partial=m)
        return v

    lo, hi = value(m.initial, event.start(m, m.initial), depth)
    return SearchResult(objective, depth, lo, hi, pol_lo, pol_hi, event, m)


class _PolicyChooser(Chooser):
    def __init__(self, adv: "PolicyAdversary"):
        super().__init__()
        self.adv = adv

    def __call__(self, history, groups):
        a = self.adv
        prog = a.event.progress_of(history)
        left = a.depth - len(history.steps)
        return a.policy.get((history.terminal, prog, left), 0)


class PolicyAdversary(Adversary):
    """A search policy replayed as an ordinary history-reading adversary."""
    name = "policy"

    def __init__(self, m, event, depth, policy):
        self.m, self.event, self.depth, self.policy = m, event, depth, policy

    def session(self, seed=None) -> Chooser:
        return _PolicyChooser(self)
