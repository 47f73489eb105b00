"""Randomized leader election on the symmetric two-node network."""
from __future__ import annotations

import math
import random
from functools import lru_cache
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .automaton import ExecutionFragment, ProbAutomaton, no_withholding
from .measure import DRAW_LABEL
from .pts import Entry, RuleMode, TransitionGroup
from .scheduler import (Adversary, Alternating, GreedyDelay, RoundRobin, Sampler, UniformRandom,
                        run, run_actions)
from .syntax import parse
from .terms import FreeOutput, Process, Tau, free_names, show_prob


@dataclass(frozen=True)
class ElectionConfig:
    epsilon: Fraction = Fraction(1, 10)
    blind_split: Fraction = Fraction(1, 2)

    def __post_init__(self):
        object.__setattr__(self, "epsilon", Fraction(self.epsilon))
        object.__setattr__(self, "blind_split", Fraction(self.blind_split))
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0 < self.blind_split < 1:
            raise ValueError("blind_split must lie in (0, 1)")

    def bound(self, n: int) -> Fraction:
        """(1+eps)^(n-2) / 2^(n-2): cap on P(at least n draws)."""
        return (1 + self.epsilon) ** (n - 2) / Fraction(2) ** (n - 2)


def _attempt(i: int, first: int, second: int, eps: str, guarded: bool, split: str) -> str:
    # one branch of the outer choice: commit to ``first``, then try ``second``
    inner = (f"if b then ({show_prob(1 - Fraction(eps))}: x{second}?(b). (o{i}!{i} | x{first}!false)"
             f" + {eps}: tau. (x{first}!true | X)) else o{i}!{1 - i}")
    if guarded:
        return f"{split}: x{first}?(b). {inner}"
    return f"{split}: tau[draw({i},{first})]. 1: x{first}?(b). {inner}"


def process_text(cfg: ElectionConfig, i: int, guarded: bool = False) -> str:
    j = 1 - i
    eps = show_prob(cfg.epsilon)
    p, q = show_prob(cfg.blind_split), show_prob(1 - cfg.blind_split)
    return (f"x{i}!true | rec X. ({_attempt(i, i, j, eps, guarded, p)}"
            f" + {_attempt(i, j, i, eps, guarded, q)})")


def network_text(cfg: ElectionConfig, guarded: bool = False) -> str:
    return (f"new x0 x1 in (({process_text(cfg, 0, guarded)}) | "
            f"({process_text(cfg, 1, guarded)}))")


def build_network(cfg: ElectionConfig = ElectionConfig()) -> Process:
    return parse(network_text(cfg))


def build_guarded_network(cfg: ElectionConfig = ElectionConfig()) -> Process:
    """Variant whose outer choice is guarded by the inputs instead of blind."""
    return parse(network_text(cfg, guarded=True))


def owner(g: TransitionGroup) -> int | None:
    """Which node a group belongs to, read off its announcement channel."""
    if g.source is None:
        return None
    fn = free_names(g.source)
    for i in (0, 1):
        if f"o{i}" in fn:
            return i
    return None


def priority_choice(groups: list[TransitionGroup]) -> list[TransitionGroup]:
    """Stand-in for the priority construct used by the bound's proof.

    Whenever an input of a choice is served by a communication, the
    escape branches of that same choice are discarded and the remaining
    mass renormalised.
    """
    out = []
    for g in groups:
        if g.served and any(e.via_com for e in g.entries):
            kept = [e for e in g.entries if e.via_com]
            mass = sum((e.prob for e in kept), Fraction(0))
            g = TransitionGroup(tuple(Entry(e.prob / mass, e.action, e.target, True) for e in kept),
                                g.source, g.withholding, g.served)
        out.append(g)
    return out


def _view(withhold: bool, priority: bool):
    if withhold and not priority:
        return None
    if not priority:
        return no_withholding
    if withhold:
        return priority_choice
    return _eager_priority


def _eager_priority(groups):
    return priority_choice(no_withholding(groups))


def automaton(cfg: ElectionConfig = ElectionConfig(), *, guarded: bool = False,
              withhold: bool = True, priority: bool = False,
              mode: RuleMode = RuleMode.STANDARD) -> ProbAutomaton:
    """Lazy automaton of the network.

    ``withhold=False`` restricts adversaries to those that never keep a
    pending output from a ready receiver; ``priority=True`` applies
    :func:`priority_choice`.
    """
    term = build_guarded_network(cfg) if guarded else build_network(cfg)
    return ProbAutomaton(term, mode, _view(withhold, priority))


# -- draws and outcomes ----------------------------------------------------------

@dataclass(frozen=True)
class Draw:
    process: int
    channel: int

    def __post_init__(self):
        if self.process not in (0, 1) or self.channel not in (0, 1):
            raise ValueError("draw components are binary")


@lru_cache(maxsize=None)
def draw_of(action) -> Draw | None:
    if isinstance(action, Tau) and action.label:
        m = DRAW_LABEL.match(action.label)
        if m:
            return Draw(int(m.group(1)), int(m.group(2)))
    return None


def extract_draws(x: ExecutionFragment | Sequence) -> list[Draw]:
    actions = x.actions if isinstance(x, ExecutionFragment) else x
    return [d for d in map(draw_of, actions) if d is not None]


def is_alternated(draws: Sequence[Draw]) -> bool:
    """Consecutive draws are equal or flip both components.

    Equivalently: a node always picks the same channel and the two nodes
    never pick the same one.  Per-node constancy alone is weaker, it admits
    [(0,0), (1,0)].
    """
    for a, b in zip(draws, draws[1:]):
        if not (b == a or (b.process != a.process and b.channel != a.channel)):
            return False
    return True


@dataclass(frozen=True)
class Elected:
    leader: int
    announcements: tuple[str, str]


@dataclass(frozen=True)
class Undecided:
    draws: int


@dataclass(frozen=True)
class Disagreement:
    payloads: tuple[str, str]


ElectionOutcome = Elected | Undecided | Disagreement


def announcements(actions) -> dict[int, str]:
    seen: dict[int, str] = {}
    for a in actions:
        if isinstance(a, FreeOutput) and a.chan in ("o0", "o1"):
            seen.setdefault(int(a.chan[1]), a.payload)
    return seen


def classify(x: ExecutionFragment | Sequence) -> ElectionOutcome:
    actions = x.actions if isinstance(x, ExecutionFragment) else list(x)
    seen = announcements(actions)
    if len(seen) < 2:
        return Undecided(len(extract_draws(actions)))
    pair = (seen[0], seen[1])
    if pair[0] != pair[1]:
        return Disagreement(pair)
    return Elected(int(pair[0]), pair)


# -- Monte Carlo --------------------------------------------------------------

ALT_MAX = 5


@dataclass
class ElectionStats:
    runs: int
    max_n: int
    at_least: list[int]                 # at_least[n] = runs with >= n draws
    alternated: list[int]               # padded estimator, index n
    alternated_raw: list[int]           # among runs that really had >= n draws
    elected: list[int] = field(default_factory=lambda: [0, 0])
    undecided: int = 0
    deadlocked_undecided: int = 0
    exhausted: int = 0
    disagreement: int = 0
    total_draws: int = 0
    draws_total: int = 0                # number of draw events seen
    draws_first: int = 0                # draws that picked the blind-split branch

    @classmethod
    def empty(cls, max_n: int) -> "ElectionStats":
        return cls(0, max_n, [0] * (max_n + 1), [0] * (ALT_MAX + 1), [0] * (ALT_MAX + 1))

    def merge(self, o: "ElectionStats") -> "ElectionStats":
        out = ElectionStats.empty(self.max_n)
        for f in ("runs", "undecided", "deadlocked_undecided", "exhausted", "disagreement",
                  "total_draws", "draws_total", "draws_first"):
            setattr(out, f, getattr(self, f) + getattr(o, f))
        for f in ("at_least", "alternated", "alternated_raw", "elected"):
            setattr(out, f, [a + b for a, b in zip(getattr(self, f), getattr(o, f))])
        return out

    @property
    def election_rate(self) -> float:
        return sum(self.elected) / self.runs

    @property
    def mean_draws(self) -> float:
        return self.total_draws / self.runs

    def fraction(self, n: int) -> float:
        return self.at_least[n] / self.runs

    def sigma(self, p: float) -> float:
        return math.sqrt(p * (1 - p) / self.runs)

    def rows(self, cfg: ElectionConfig) -> list[dict]:
        out = []
        for n in range(2, self.max_n + 1):
            f = self.fraction(n)
            out.append({"n": n, "count": self.at_least[n], "fraction": f,
                        "bound": float(cfg.bound(n)), "sigma": self.sigma(f)})
        return out

    def summary(self) -> dict:
        return {"runs": self.runs, "elected0": self.elected[0], "elected1": self.elected[1],
                "undecided": self.undecided, "exhausted": self.exhausted,
                "disagreement": self.disagreement, "meanDraws": self.mean_draws}


def _record(stats: ElectionStats, actions: Sequence, exhausted: bool,
            cfg: ElectionConfig, pad_rng: random.Random) -> None:
    draws = extract_draws(actions)
    stats.runs += 1
    stats.total_draws += len(draws)
    stats.draws_total += len(draws)
    stats.draws_first += sum(d.channel == d.process for d in draws)
    for n in range(min(len(draws), stats.max_n) + 1):
        stats.at_least[n] += 1
    # The alternation estimate needs n draws in every run.  Runs that stopped
    # early are extended with fresh blind draws; a draw's channel does not
    # depend on the schedule, so this leaves the estimate unbiased.
    seq = list(draws[:ALT_MAX])
    while len(seq) < ALT_MAX:
        proc = 1 - seq[-1].process if seq else 0
        ch = proc if pad_rng.random() < cfg.blind_split else 1 - proc
        seq.append(Draw(proc, ch))
    for n in range(ALT_MAX + 1):
        if is_alternated(seq[:n]):
            stats.alternated[n] += 1
        if len(draws) >= n and is_alternated(draws[:n]):
            stats.alternated_raw[n] += 1
    outcome = classify(actions)
    if isinstance(outcome, Elected):
        stats.elected[outcome.leader] += 1
    elif isinstance(outcome, Disagreement):
        stats.disagreement += 1
    else:
        stats.undecided += 1
        if exhausted:
            stats.exhausted += 1
        else:
            stats.deadlocked_undecided += 1


class _DrawCap:
    def __init__(self, cap: int):
        self.cap, self.count, self.seen = cap, 0, 0

    def __call__(self, h) -> bool:
        actions = h.actions if isinstance(h, ExecutionFragment) else h
        while self.seen < len(actions):
            if draw_of(actions[self.seen]) is not None:
                self.count += 1
            self.seen += 1
        return self.count >= self.cap


@dataclass(frozen=True)
class _Batch:
    cfg: ElectionConfig
    adversary: Adversary
    seed: int
    start: int
    stop: int
    max_steps: int
    max_n: int
    guarded: bool
    withhold: bool
    draw_cap: int | None


def _run_batch(b: _Batch, m: ProbAutomaton | None = None) -> ElectionStats:
    m = m or automaton(b.cfg, guarded=b.guarded, withhold=b.withhold)
    sampler = Sampler(m)
    stats = ElectionStats.empty(b.max_n)
    fast = getattr(b.adversary, "markov", False)
    for r in range(b.start, b.stop):
        stop = None if b.draw_cap is None else _DrawCap(b.draw_cap)
        seed = f"{b.seed}:{r}"
        if fast:
            actions, _, _, exhausted = run_actions(m, b.adversary, seed, b.max_steps, sampler, stop)
        else:
            res = run(m, b.adversary, seed=seed, max_steps=b.max_steps, sampler=sampler, stop=stop)
            actions, exhausted = res.fragment.actions, res.exhausted
        _record(stats, actions, exhausted, b.cfg, random.Random(f"pad:{b.seed}:{r}"))
    return stats


def monte_carlo(cfg: ElectionConfig, adv: Adversary, runs: int, seed: int, max_steps: int,
                *, max_n: int = 8, guarded: bool = False, withhold: bool = True,
                workers: int = 1, draw_cap: int | None = None,
                m: ProbAutomaton | None = None) -> ElectionStats:
    """Simulate ``runs`` executions; every run has its own seed ``(seed, r)``.

    ``draw_cap`` stops a run once it has that many draws (enough for the
    per-n table up to the cap).  Results do not depend on ``workers``.
    """
    if runs <= 0:
        raise ValueError("runs must be positive")
    if workers <= 1:
        return _run_batch(_Batch(cfg, adv, seed, 0, runs, max_steps, max_n, guarded, withhold,
                                 draw_cap), m)
    chunk = math.ceil(runs / workers)
    batches = [_Batch(cfg, adv, seed, s, min(s + chunk, runs), max_steps, max_n, guarded,
                      withhold, draw_cap) for s in range(0, runs, chunk)]
    total = ElectionStats.empty(max_n)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_run_batch, batches):
            total = total.merge(part)
    return total


def election_adversary(name: str, seed: int | None = None) -> Adversary:
    """Built-in adversaries, with process attribution suited to this network."""
    if name == "alternating":
        return Alternating(owner)
    if name == "round-robin":
        return RoundRobin()
    if name == "greedy-delay":
        return GreedyDelay()
    if name == "uniform-random":
        return UniformRandom(0 if seed is None else seed)
    from .scheduler import builtin
    return builtin(name, seed=seed, owner=owner)
