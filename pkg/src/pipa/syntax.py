"""Recursive-descent parser for the concrete term syntax.

::

    process ::= term ('|' term)*
    term    ::= '0' | name '!' name | sum | 'new' name+ 'in' term
              | 'rec' PID '.' term | PID | 'if' name 'then' term 'else' term
              | '(' process ')'
    sum     ::= branch ('+' branch)*
    branch  ::= prob ':' prefix '.' term
    prefix  ::= name '?' '(' name ')' | 'tau' ('[' label ']')?
    prob    ::= INT '/' INT | DECIMAL | INT

A prefix binds tighter than ``+``, which binds tighter than ``|``.  Inside a
branch continuation a leading probability starts a single-branch sum, so
``1/2: tau. 1: tau. 0 + 1/2: tau. 0`` has two top-level branches.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .errors import LiteralMisuse, ParseError, SumNotNormalized, UnguardedRecursion
from .terms import (NIL, Branch, If, Input, Output, Par, Process, Rec, Res, Sum,
                    Tau, Var, is_literal)

KEYWORDS = {"new", "in", "rec", "if", "then", "else", "tau", "true", "false"}

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<num>\d+(?:\.\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<punct>[!?().+|:/\[\],])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        chunk = m.group()
        if kind != "ws":
            tokens.append(Token(kind, chunk, line, col))
        nl = chunk.count("\n")
        if nl:
            line += nl
            col = len(chunk) - chunk.rfind("\n")
        else:
            col += len(chunk)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        # recursion variables whose occurrences would currently be unguarded
        self.unguarded: frozenset[str] = frozenset()

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def error(self, msg: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.col)

    def expect(self, text: str) -> Token:
        if self.tok.text != text or self.tok.kind == "eof":
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return self.advance()

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("punct", "ident")

    # -- names
    def _is_name_token(self, t: Token) -> bool:
        if t.kind != "ident":
            return False
        if t.text in ("true", "false"):
            return True
        return t.text not in KEYWORDS and not t.text[0].isupper()

    def name(self, role: str) -> str:
        """Parse a name; ``role`` is 'payload', 'subject' or 'binder'."""
        t = self.tok
        if t.kind == "num" and t.text in ("0", "1"):
            text = t.text
        elif self._is_name_token(t):
            text = t.text
        else:
            raise self.error(f"expected a name, found {t.text or 'end of input'!r}")
        self.advance()
        if role != "payload" and is_literal(text):
            raise LiteralMisuse(f"literal {text!r} cannot be used as a {role}", t.line, t.col)
        return text

    # -- grammar
    def process(self) -> Process:
        left = self.term(unit=False)
        while self.at("|"):
            self.advance()
            left = Par(left, self.term(unit=False))
        return left

    def _starts_prob(self) -> bool:
        t = self.tok
        if t.kind != "num":
            return False
        nxt = self.peek().text
        return nxt in (":", "/") or "." in t.text

    def term(self, unit: bool) -> Process:
        t = self.tok
        if self._starts_prob():
            return self.sum(single=unit)
        if t.kind == "num" and t.text == "0":
            self.advance()
            return NIL
        if t.kind == "punct" and t.text == "(":
            self.advance()
            p = self.process()
            self.expect(")")
            return p
        if t.kind == "ident":
            if t.text == "new":
                self.advance()
                binders = [self.name("binder")]
                while not self.at("in"):
                    binders.append(self.name("binder"))
                self.expect("in")
                body = self.term(unit)
                for b in reversed(binders):
                    body = Res(b, body)
                return body
            if t.text == "rec":
                self.advance()
                pid = self.pid()
                self.expect(".")
                saved = self.unguarded
                self.unguarded = saved | {pid}
                body = self.term(unit)
                self.unguarded = saved
                return Rec(pid, body)
            if t.text == "if":
                self.advance()
                cond = self.name("payload")
                self.expect("then")
                then = self.term(unit)
                self.expect("else")
                orelse = self.term(unit)
                return If(cond, then, orelse)
            if t.text[0].isupper():
                pid = self.pid()
                if pid in self.unguarded:
                    raise UnguardedRecursion(
                        f"recursion variable {pid} occurs unguarded", t.line, t.col)
                return Var(pid)
            if self._is_name_token(t) and self.peek().text == "!":
                chan = self.name("subject")
                self.expect("!")
                return Output(chan, self.name("payload"))
        raise self.error(f"unexpected {t.text or 'end of input'!r}")

    def pid(self) -> str:
        t = self.tok
        if t.kind != "ident" or not t.text[0].isupper():
            raise self.error("expected a process identifier")
        self.advance()
        return t.text

    def sum(self, single: bool) -> Sum:
        start = self.tok
        branches = [self.branch()]
        while not single and self.at("+"):
            self.advance()
            branches.append(self.branch())
        total = sum((b.prob for b in branches), Fraction(0))
        if total != 1:
            raise SumNotNormalized(
                f"branch probabilities sum to {total}, not 1", start.line, start.col)
        return Sum(tuple(branches))

    def prob(self) -> Fraction:
        t = self.tok
        if t.kind != "num":
            raise self.error("expected a probability")
        self.advance()
        if self.at("/"):
            self.advance()
            d = self.tok
            if d.kind != "num" or "." in d.text:
                raise self.error("expected an integer denominator")
            self.advance()
            if int(d.text) == 0:
                raise SumNotNormalized("zero denominator", d.line, d.col)
            p = Fraction(int(t.text), int(d.text))
        else:
            p = Fraction(t.text)
        if not 0 < p <= 1:
            raise SumNotNormalized(f"probability {p} outside (0, 1]", t.line, t.col)
        return p

    def branch(self) -> Branch:
        p = self.prob()
        self.expect(":")
        prefix = self.prefix()
        self.expect(".")
        saved = self.unguarded
        self.unguarded = frozenset()
        cont = self.term(unit=True)
        self.unguarded = saved
        return Branch(p, prefix, cont)

    def prefix(self):
        t = self.tok
        if t.kind == "ident" and t.text == "tau":
            self.advance()
            label = None
            if self.at("["):
                open_tok = self.advance()
                close = self.text.find("]", self._offset(open_tok) + 1)
                if close < 0:
                    raise self.error("unterminated label", open_tok)
                label = self.text[self._offset(open_tok) + 1:close].strip()
                while self.tok.kind != "eof" and not (self.tok.text == "]" and self.tok.kind == "punct"):
                    self.advance()
                self.expect("]")
            return Tau(label or None)
        chan = self.name("subject")
        self.expect("?")
        self.expect("(")
        formal = self.name("binder")
        self.expect(")")
        return Input(chan, formal)

    def _offset(self, tok: Token) -> int:
        lines = self.text.split("\n")
        return sum(len(l) + 1 for l in lines[:tok.line - 1]) + tok.col - 1


def parse(text: str) -> Process:
    """Parse concrete syntax into a :class:`Process`.

    Raises :class:`ParseError` (or one of its semantic subclasses) with the
    line and column of the offending token.
    """
    p = _Parser(text)
    out = p.process()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected {p.tok.text!r}")
    return out
