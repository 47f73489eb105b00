"""Probabilistic asynchronous pi-calculus: terms, transition groups,
automata, adversaries, measures and a leader-election study."""

__version__ = "0.1.0"
