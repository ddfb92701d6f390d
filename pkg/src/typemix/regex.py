"""Compile a small regular-expression subset into a uniform-probability PFSM.

Supported: literals, escapes (``\\.``, ``\\d``, ``\\w``, ``\\s`` and their
negations, ASCII semantics), ``.``, character classes with ranges and
negation, grouping ``(...)`` / ``(?:...)``, alternation and the quantifiers
``* + ? {n} {n,} {n,m}``.  A leading ``^`` and trailing ``$`` are accepted and
ignored; patterns always match the whole string.

Construction is Thompson-style: an epsilon-NFA is built from the syntax tree,
epsilon moves are folded away, dead and unreachable states are trimmed, and
every state then splits its mass evenly between stopping (if accepting) and
each outgoing transition.
"""

from __future__ import annotations

import string
from dataclasses import dataclass

from .pfsm import ANY, Pfsm


class RegexError(ValueError):
    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"parse error at position {position}: {message}"
        super().__init__(message)


class UnsupportedRegexError(RegexError):
    def __init__(self, feature, position=None):
        self.feature = feature
        self.position = position
        where = "" if position is None else f" at position {position}"
        ValueError.__init__(self, f"unsupported regex feature{where}: {feature}")


MAX_REPEAT = 256

_DIGITS = frozenset(string.digits)
_WORD = frozenset(string.ascii_letters + string.digits + "_")
_SPACE = frozenset(" \t\n\r\f\v")


@dataclass(frozen=True)
class CharSet:
    chars: frozenset
    negated: bool = False


@dataclass(frozen=True)
class Lit:
    cs: CharSet


@dataclass(frozen=True)
class Seq:
    items: tuple


@dataclass(frozen=True)
class Alt:
    options: tuple


@dataclass(frozen=True)
class Repeat:
    node: object
    low: int
    high: object  # int or None for unbounded


class _Parser:
    def __init__(self, pattern):
        self.p = pattern
        self.i = 0

    def peek(self):
        return self.p[self.i] if self.i < len(self.p) else None

    def take(self):
        c = self.peek()
        if c is None:
            raise RegexError("unexpected end of pattern", self.i)
        self.i += 1
        return c

    def parse(self):
        p = self.p
        start, end = 0, len(p)
        if p.startswith("^"):
            start = 1
        if p.endswith("$") and not p.endswith("\\$") and end > start:
            end -= 1
        self.p = p[:end]
        self.i = start
        node = self.alternation()
        if self.i != len(self.p):
            raise RegexError(f"unexpected {self.p[self.i]!r}", self.i)
        return node

    def alternation(self):
        options = [self.sequence()]
        while self.peek() == "|":
            self.i += 1
            options.append(self.sequence())
        return options[0] if len(options) == 1 else Alt(tuple(options))

    def sequence(self):
        items = []
        while self.peek() is not None and self.peek() not in "|)":
            items.append(self.repeat())
        return Seq(tuple(items))

    def repeat(self):
        pos = self.i
        node = self.atom()
        while self.peek() is not None and self.peek() in "*+?{":
            c = self.take()
            if c == "*":
                node = Repeat(node, 0, None)
            elif c == "+":
                node = Repeat(node, 1, None)
            elif c == "?":
                node = Repeat(node, 0, 1)
            else:
                low, high = self.braces()
                node = Repeat(node, low, high)
            if self.peek() in ("?", "+") and self.p[self.i - 1] in "*+?}":
                raise UnsupportedRegexError("lazy or possessive quantifier", self.i)
        if isinstance(node, Repeat) and node.high is not None and node.high > MAX_REPEAT:
            raise RegexError(f"repeat count above {MAX_REPEAT}", pos)
        return node

    def braces(self):
        start = self.i - 1
        close = self.p.find("}", self.i)
        if close < 0:
            raise RegexError("unterminated repeat", start)
        body = self.p[self.i:close]
        self.i = close + 1
        try:
            if "," in body:
                a, b = body.split(",", 1)
                low = int(a)
                high = int(b) if b.strip() else None
            else:
                low = high = int(body)
        except ValueError:
            raise RegexError(f"bad repeat {{{body}}}", start) from None
        if low < 0 or (high is not None and high < low):
            raise RegexError(f"bad repeat {{{body}}}", start)
        return low, high

    def atom(self):
        pos = self.i
        c = self.take()
        if c == "(":
            if self.p.startswith("?:", self.i):
                self.i += 2
            elif self.peek() == "?":
                raise UnsupportedRegexError("lookaround or group extension", pos)
            node = self.alternation()
            if self.peek() != ")":
                raise RegexError("missing )", pos)
            self.i += 1
            return node
        if c == ")":
            raise RegexError("unbalanced )", pos)
        if c == "[":
            return Lit(self.char_class(pos))
        if c == ".":
            return Lit(CharSet(frozenset("\n"), negated=True))
        if c == "\\":
            return Lit(self.escape(pos, in_class=False))
        if c in "*+?{":
            raise RegexError(f"nothing to repeat before {c!r}", pos)
        if c in "^$":
            raise UnsupportedRegexError(f"anchor {c!r} inside pattern", pos)
        return Lit(CharSet(frozenset(c)))

    def escape(self, pos, in_class):
        c = self.take()
        if c.isdigit() and c != "0":
            raise UnsupportedRegexError("backreference", pos)
        if c in "bBAZzG" and not in_class:
            raise UnsupportedRegexError(f"assertion \\{c}", pos)
        table = {"d": (_DIGITS, False), "D": (_DIGITS, True),
                 "w": (_WORD, False), "W": (_WORD, True),
                 "s": (_SPACE, False), "S": (_SPACE, True)}
        if c in table:
            chars, neg = table[c]
            return CharSet(chars, neg)
        simple = {"n": "\n", "t": "\t", "r": "\r", "f": "\f", "v": "\v", "0": "\0"}
        if c in simple:
            return CharSet(frozenset(simple[c]))
        if c.isalnum():
            raise UnsupportedRegexError(f"escape \\{c}", pos)
        return CharSet(frozenset(c))

    def char_class(self, pos):
        negated = False
        if self.peek() == "^":
            negated = True
            self.i += 1
        chars = set()
        first = True
        while True:
            c = self.peek()
            if c is None:
                raise RegexError("unterminated character class", pos)
            if c == "]" and not first:
                self.i += 1
                break
            first = False
            item_pos = self.i
            self.i += 1
            if c == "\\":
                cs = self.escape(item_pos, in_class=True)
                if cs.negated:
                    raise UnsupportedRegexError("negated shorthand inside a class", item_pos)
                if len(cs.chars) > 1:
                    chars |= cs.chars
                    continue
                (c,) = cs.chars
            if self.peek() == "-" and self.i + 1 < len(self.p) and self.p[self.i + 1] != "]":
                self.i += 1
                hi_pos = self.i
                hi = self.take()
                if hi == "\\":
                    cs = self.escape(hi_pos, in_class=True)
                    if len(cs.chars) != 1 or cs.negated:
                        raise RegexError("bad range end", hi_pos)
                    (hi,) = cs.chars
                if ord(hi) < ord(c):
                    raise RegexError(f"bad range {c}-{hi}", item_pos)
                if ord(hi) - ord(c) > 0x10000:
                    raise RegexError("range too large", item_pos)
                chars.update(chr(x) for x in range(ord(c), ord(hi) + 1))
            else:
                chars.add(c)
        return CharSet(frozenset(chars), negated)


def parse(pattern: str):
    return _Parser(pattern).parse()


class _Nfa:
    def __init__(self):
        self.eps = []
        self.edges = []  # per state: list of (CharSet, dst)

    def state(self):
        self.eps.append([])
        self.edges.append([])
        return len(self.eps) - 1

    def build(self, node):
        """Return (start, accept) fragment for ``node``."""
        if isinstance(node, Lit):
            s, t = self.state(), self.state()
            self.edges[s].append((node.cs, t))
            return s, t
        if isinstance(node, Seq):
            s = self.state()
            cur = s
            for item in node.items:
                a, b = self.build(item)
                self.eps[cur].append(a)
                cur = b
            return s, cur
        if isinstance(node, Alt):
            s, t = self.state(), self.state()
            for opt in node.options:
                a, b = self.build(opt)
                self.eps[s].append(a)
                self.eps[b].append(t)
            return s, t
        if isinstance(node, Repeat):
            s = self.state()
            cur = s
            if node.high is None and node.low >= 1:
                for _ in range(node.low - 1):
                    a, b = self.build(node.node)
                    self.eps[cur].append(a)
                    cur = b
                a, b = self.build(node.node)
                self.eps[cur].append(a)
                self.eps[b].append(a)
                return s, b
            for _ in range(node.low):
                a, b = self.build(node.node)
                self.eps[cur].append(a)
                cur = b
            if node.high is None:
                a, b = self.build(node.node)
                self.eps[cur].append(a)
                self.eps[b].append(a)
                t = self.state()
                self.eps[cur].append(t)
                self.eps[b].append(t)
                return s, t
            t = self.state()
            for _ in range(node.high - node.low):
                self.eps[cur].append(t)
                a, b = self.build(node.node)
                self.eps[cur].append(a)
                cur = b
            self.eps[cur].append(t)
            return s, t
        raise TypeError(node)


def _collect_alphabet(node, out):
    if isinstance(node, Lit):
        out |= node.cs.chars
    elif isinstance(node, Seq):
        for i in node.items:
            _collect_alphabet(i, out)
    elif isinstance(node, Alt):
        for i in node.options:
            _collect_alphabet(i, out)
    elif isinstance(node, Repeat):
        _collect_alphabet(node.node, out)
    return out


def _uses_complement(node):
    if isinstance(node, Lit):
        return node.cs.negated
    if isinstance(node, (Seq, Alt)):
        children = node.items if isinstance(node, Seq) else node.options
        return any(_uses_complement(c) for c in children)
    return _uses_complement(node.node)


def compile_regex(pattern: str, name: str = "") -> Pfsm:
    """Compile ``pattern`` to a PFSM whose support is the pattern's language."""
    tree = parse(pattern)
    alphabet = sorted(_collect_alphabet(tree, set()))
    catch_all = _uses_complement(tree)

    nfa = _Nfa()
    start, accept = nfa.build(tree)

    def symbols(cs):
        if cs.negated:
            out = [c for c in alphabet if c not in cs.chars]
            out.append(ANY)
            return out
        return sorted(cs.chars)

    closures = {}

    def closure(q):
        if q not in closures:
            seen, stack = {q}, [q]
            while stack:
                for r in nfa.eps[stack.pop()]:
                    if r not in seen:
                        seen.add(r)
                        stack.append(r)
            closures[q] = seen
        return closures[q]

    # fold epsilons: keep start and every state entered by a symbol
    moves = {}
    finals = set()
    todo, kept = [start], {start}
    while todo:
        q = todo.pop()
        out = []
        for p in sorted(closure(q)):
            for cs, r in nfa.edges[p]:
                for sym in symbols(cs):
                    out.append((sym, r))
                if r not in kept:
                    kept.add(r)
                    todo.append(r)
        moves[q] = list(dict.fromkeys(out))
        if accept in closure(q):
            finals.add(q)

    # trim states that cannot reach an accepting state
    live = set(finals)
    changed = True
    while changed:
        changed = False
        for q, out in moves.items():
            if q not in live and any(r in live for _, r in out):
                live.add(q)
                changed = True
    if start not in live:
        raise RegexError("pattern matches no string")

    order, index = [start], {start: 0}
    i = 0
    while i < len(order):
        for _, r in moves[order[i]]:
            if r in live and r not in index:
                index[r] = len(order)
                order.append(r)
        i += 1

    final_p, trans = {}, []
    for q in order:
        out = [(sym, r) for sym, r in moves[q] if r in live]
        options = len(out) + (1 if q in finals else 0)
        if q in finals:
            final_p[index[q]] = 1.0 / options
        for sym, r in out:
            trans.append((index[q], sym, index[r], 1.0 / options))
    return Pfsm.from_probabilities(
        len(order), {0: 1.0}, final_p, trans, alphabet=alphabet,
        catch_all=catch_all, name=name or pattern)
