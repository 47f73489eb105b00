"""Hand-built automata shared by several test modules."""
from fractions import Fraction

from pipa.automaton import ProbAutomaton
from pipa.terms import FreeOutput, Tau

A, B, C, D = (FreeOutput(n, n) for n in "abcd")
T = Tau()

# Four states, six groups labelled I..VI in the order listed.
#   s0: I
#   s1: II, III
#   s2: IV
#   s3: V, VI
FIXTURE = {
    "s0": [[("1/2", A, "s1"), ("1/2", B, "s2")]],
    "s1": [[("1", C, "s0")], [("1/3", A, "s2"), ("2/3", B, "s3")]],
    "s2": [[("1", C, "s3")]],
    "s3": [[("1/2", A, "s0"), ("1/2", B, "s1")], [("1", D, "s3")]],
}
GROUP_NAMES = {("s0", 0): "I", ("s1", 0): "II", ("s1", 1): "III", ("s2", 0): "IV",
               ("s3", 0): "V", ("s3", 1): "VI"}


def fixture() -> ProbAutomaton:
    return ProbAutomaton.from_table(FIXTURE, "s0")


def brute_paths(table, state, depth):
    """Every path of length <= depth from ``state`` as (states, labels, probs)."""
    out = [((state,), (), ())]
    if depth == 0:
        return out
    for g in table.get(state, []):
        for p, a, t in g:
            for states, labels, probs in brute_paths(table, t, depth - 1):
                out.append(((state,) + states, (a,) + labels, (Fraction(p),) + probs))
    return out


def brute_pruned(table, state, depth, choose, history=()):
    """Maximal paths of the pruned tree; ``choose(history, state, n_groups)``."""
    groups = table.get(state, [])
    if depth == 0 or not groups:
        return [((state,), (), ())]
    g = groups[choose(history, state, len(groups))]
    out = []
    for p, a, t in g:
        for states, labels, probs in brute_pruned(table, t, depth - 1, choose, history + (a,)):
            out.append(((state,) + states, (a,) + labels, (Fraction(p),) + probs))
    return out
